//! L2-regularized linear classifiers on standardized inputs.
//!
//! Both objectives are averaged over the `n` training rows:
//!
//! - logistic: `(1/n) * [sum_i logloss(w.x_i + b, y_i) + (l2/2) * |w|^2]`
//! - hinge:    `(1/n) * [sum_i max(0, 1 - s_i (w.x_i + b)) + (l2/2) * |w|^2]`,
//!   with `s_i = +1/-1`
//!
//! The intercept is never penalized.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::boosting::{log_loss, sigmoid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearParams {
    pub l2_strength: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            l2_strength: 1.0,
            max_iters: 1000,
            tol: 1e-6,
        }
    }
}

pub(crate) struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub converged: bool,
    pub iterations: usize,
    pub objective_trace: Vec<f64>,
}

fn margins(x: ArrayView2<'_, f64>, w: ArrayView1<'_, f64>, b: f64) -> Array1<f64> {
    let mut z = x.dot(&w);
    z += b;
    z
}

pub fn logistic_objective(x: ArrayView2<'_, f64>, y: &[u8], w: ArrayView1<'_, f64>, b: f64, l2: f64) -> f64 {
    let z = margins(x, w, b);
    let data: f64 = z.iter().zip(y).map(|(&m, &t)| log_loss(m, t as f64)).sum();
    (data + 0.5 * l2 * w.dot(&w)) / y.len() as f64
}

/// Analytic gradient of [`logistic_objective`]: `(dw, db)`.
pub fn logistic_gradient(
    x: ArrayView2<'_, f64>,
    y: &[u8],
    w: ArrayView1<'_, f64>,
    b: f64,
    l2: f64,
) -> (Array1<f64>, f64) {
    let n = y.len() as f64;
    let z = margins(x, w, b);
    let residual: Array1<f64> = z.iter().zip(y).map(|(&m, &t)| sigmoid(m) - t as f64).collect();
    let mut gw = x.t().dot(&residual);
    gw.scaled_add(l2, &w);
    gw /= n;
    (gw, residual.sum() / n)
}

/// Full-batch gradient descent with Armijo backtracking.
pub(crate) fn fit_logistic(x: ArrayView2<'_, f64>, y: &[u8], params: &LinearParams) -> LinearFit {
    const ARMIJO: f64 = 0.5;
    let d = x.ncols();
    let l2 = params.l2_strength;
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut obj = logistic_objective(x, y, w.view(), b, l2);
    let mut trace = vec![obj];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iters {
        let (gw, gb) = logistic_gradient(x, y, w.view(), b, l2);
        let gmax = gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()));
        if gmax <= params.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let gnorm2 = gw.dot(&gw) + gb * gb;
        let mut accepted = None;
        for _ in 0..60 {
            let cand_w = &w - &(&gw * step);
            let cand_b = b - step * gb;
            let cand = logistic_objective(x, y, cand_w.view(), cand_b, l2);
            if cand <= obj - ARMIJO * step * gnorm2 {
                accepted = Some((cand_w, cand_b, cand));
                break;
            }
            step *= 0.5;
        }
        let Some((nw, nb, nobj)) = accepted else {
            // no representable descent step left
            converged = true;
            break;
        };
        w = nw;
        b = nb;
        obj = nobj;
        trace.push(obj);
        step = (step * 2.0).min(1e4);
    }
    LinearFit {
        coefficients: w.to_vec(),
        intercept: b,
        converged,
        iterations,
        objective_trace: trace,
    }
}

pub fn hinge_objective(x: ArrayView2<'_, f64>, y: &[u8], w: ArrayView1<'_, f64>, b: f64, l2: f64) -> f64 {
    let z = margins(x, w, b);
    let data: f64 = z
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            let s = if t == 1 { 1.0 } else { -1.0 };
            (1.0 - s * m).max(0.0)
        })
        .sum();
    (data + 0.5 * l2 * w.dot(&w)) / y.len() as f64
}

fn hinge_subgradient(x: ArrayView2<'_, f64>, y: &[u8], w: ArrayView1<'_, f64>, b: f64, l2: f64) -> (Array1<f64>, f64) {
    let n = y.len() as f64;
    let z = margins(x, w, b);
    // coefficient of x_i in the subgradient: -s_i where the margin is violated
    let active: Array1<f64> = z
        .iter()
        .zip(y)
        .map(|(&m, &t)| {
            let s = if t == 1 { 1.0 } else { -1.0 };
            if s * m < 1.0 {
                -s
            } else {
                0.0
            }
        })
        .collect();
    let mut gw = x.t().dot(&active);
    gw.scaled_add(l2, &w);
    gw /= n;
    (gw, active.sum() / n)
}

/// Subgradient descent with step `1/sqrt(t+1)`; a step is taken only if it
/// does not raise the objective, halving it otherwise.
pub(crate) fn fit_linear_svc(x: ArrayView2<'_, f64>, y: &[u8], params: &LinearParams) -> LinearFit {
    let d = x.ncols();
    let l2 = params.l2_strength;
    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0;
    let mut obj = hinge_objective(x, y, w.view(), b, l2);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iters {
        iterations += 1;
        let (gw, gb) = hinge_subgradient(x, y, w.view(), b, l2);
        if gw.iter().all(|g| *g == 0.0) && gb == 0.0 {
            converged = true;
            break;
        }
        let mut step = 1.0 / (iterations as f64).sqrt();
        let mut accepted = None;
        for _ in 0..30 {
            let cand_w = &w - &(&gw * step);
            let cand_b = b - step * gb;
            let cand = hinge_objective(x, y, cand_w.view(), cand_b, l2);
            if cand <= obj {
                accepted = Some((cand_w, cand_b, cand));
                break;
            }
            step *= 0.5;
        }
        let Some((nw, nb, nobj)) = accepted else {
            converged = true;
            break;
        };
        let improvement = obj - nobj;
        w = nw;
        b = nb;
        obj = nobj;
        trace.push(obj);
        if improvement <= params.tol * obj.max(1.0) {
            converged = true;
            break;
        }
    }
    LinearFit {
        coefficients: w.to_vec(),
        intercept: b,
        converged,
        iterations,
        objective_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn separable_logistic() {
        let x = array![[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]];
        let y = [0u8, 0, 0, 1, 1, 1];
        let fit = fit_logistic(x.view(), &y, &LinearParams::default());
        assert!(fit.coefficients[0] > 0.0);
        assert!(*fit.objective_trace.last().unwrap() < 2f64.ln());
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn svc_objective_monotone() {
        let x = Array2::from_shape_fn((40, 3), |(i, j)| ((i * 7 + j * 13) % 11) as f64 - 5.0);
        let y: Vec<u8> = (0..40).map(|i| u8::from(x[[i, 0]] + 0.3 * x[[i, 2]] > 0.0)).collect();
        let fit = fit_linear_svc(x.view(), &y, &LinearParams { tol: 1e-9, ..Default::default() });
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.objective_trace.last().unwrap() < &fit.objective_trace[0]);
    }

    #[test]
    fn zero_parameters_give_ln2() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        let w = Array1::zeros(2);
        let obj = logistic_objective(x.view(), &[0, 1], w.view(), 0.0, 1.0);
        assert!((obj - 2f64.ln()).abs() < 1e-15);
    }
}
