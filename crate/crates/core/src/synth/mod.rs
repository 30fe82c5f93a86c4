//! Synthetic EHR cohorts shaped like the source population.
//!
//! Each record gets demographics, a log-normal stay, a primary sepsis code
//! plus secondary diagnoses drawn per category, and lab series. Lab presence
//! follows a Gaussian copula: test `t` is present when
//! `sqrt(rho) * z + sqrt(1 - rho) * e_t < Phi^-1(presence_t)`, where `z` is a
//! per-record "workup intensity" and `e_t` is shared by every hemogram test
//! when panel grouping is on. Marginal presence is exactly `presence_t`
//! whatever `rho`; a positive `rho` makes sparse records sparse across the
//! board, which is what keeps top-N coverage from collapsing.
//!
//! Outcomes come from a logistic model on a severity score
//! `s = sum(effect_k * standardized feature_k)`: death with probability
//! `sigmoid(alpha + s)`, survivors recover with probability
//! `sigmoid(beta - s)` and are otherwise improved or worsened. `alpha` and
//! `beta` are solved so the expected outcome mix matches the configuration.

pub mod catalog;

use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

pub use catalog::LabSpec;

use crate::comorbidity::{categorize, ComorbidityCategory};
use crate::domain::{write_cohort, DiagnosisRank, Hospitalization, Icd10Code, LabResult, OriginEnv, OutcomeLabel, Sex};
use crate::error::{Error, Result};
use crate::learners::sigmoid;
use crate::seed::{derive_seed, derived_rng, rng_from};

const CHUNK: usize = 1024;
const MIN_STAY: i64 = 2;
const AGE_RANGE: (f64, f64) = (18.0, 110.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeMix {
    pub deceased: f64,
    pub recovered: f64,
    pub improved: f64,
    pub worsened: f64,
}

impl Default for OutcomeMix {
    fn default() -> Self {
        OutcomeMix {
            deceased: 0.52,
            recovered: 0.15,
            improved: 0.28,
            worsened: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginMix {
    pub urban: f64,
    pub rural: f64,
    pub unknown: f64,
}

impl Default for OriginMix {
    fn default() -> Self {
        OriginMix {
            urban: 0.60,
            rural: 0.35,
            unknown: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prevalence {
    pub category: ComorbidityCategory,
    pub rate: f64,
}

/// Effect of one feature on the log-odds of death. `feature` is `age`, a lab
/// name from the catalog or a comorbidity category name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signal {
    pub feature: String,
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_records: usize,
    pub age_mean: f64,
    pub age_sd: f64,
    /// Fraction female.
    pub sex_balance: f64,
    pub origin_mix: OriginMix,
    pub stay_log_mean: f64,
    pub stay_log_sd: f64,
    pub lab_frequencies: Vec<LabSpec>,
    /// Copula correlation of lab presence across tests, in `[0, 1)`.
    pub presence_correlation: f64,
    /// Sample hemogram-panel tests jointly.
    pub panel_grouping: bool,
    pub comorbidity_prevalence: Vec<Prevalence>,
    pub outcome_mix: OutcomeMix,
    pub signal_spec: Vec<Signal>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_records: 12_286,
            age_mean: 77.0,
            age_sd: 12.0,
            sex_balance: 0.5,
            origin_mix: OriginMix::default(),
            stay_log_mean: 8f64.ln(),
            stay_log_sd: 0.8,
            lab_frequencies: catalog::default_labs(),
            presence_correlation: 0.45,
            panel_grouping: true,
            comorbidity_prevalence: catalog::default_prevalence()
                .into_iter()
                .map(|(category, rate)| Prevalence { category, rate })
                .collect(),
            outcome_mix: OutcomeMix::default(),
            signal_spec: [
                ("Urea", 0.8),
                ("AST", 0.4),
                ("Hemogram_PLT", -0.5),
                ("Hemogram_Eosinophils_pct", -0.6),
                ("age", 0.3),
                ("Cardiovascular", 0.4),
            ]
            .into_iter()
            .map(|(feature, effect)| Signal {
                feature: feature.into(),
                effect,
            })
            .collect(),
            seed: 0,
        }
    }
}

/// Where a signal reads its standardized value from.
#[derive(Debug, Clone, Copy)]
enum SignalSource {
    Age,
    Lab(usize),
    Category(ComorbidityCategory, f64),
}

fn fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Synth(format!("{name} = {v} is not a fraction")))
    }
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_records == 0 {
            return Err(Error::Synth("n_records must be positive".into()));
        }
        if !(self.age_sd > 0.0 && self.stay_log_sd >= 0.0) || !self.age_mean.is_finite() || !self.stay_log_mean.is_finite() {
            return Err(Error::Synth("age and stay parameters must be finite with positive spread".into()));
        }
        fraction("sex_balance", self.sex_balance)?;
        if !(0.0..1.0).contains(&self.presence_correlation) {
            return Err(Error::Synth("presence_correlation must lie in [0, 1)".into()));
        }
        let o = &self.origin_mix;
        check_mix("origin_mix", &[o.urban, o.rural, o.unknown])?;
        let m = &self.outcome_mix;
        check_mix("outcome_mix", &[m.deceased, m.recovered, m.improved, m.worsened])?;
        for lab in &self.lab_frequencies {
            fraction(&format!("presence of {}", lab.name), lab.presence)?;
            if !(lab.low.is_finite() && lab.high.is_finite() && lab.low <= lab.high) || lab.name.trim().is_empty() {
                return Err(Error::Synth(format!("lab {:?} has an invalid range", lab.name)));
            }
        }
        for p in &self.comorbidity_prevalence {
            fraction(&format!("prevalence of {}", p.category), p.rate)?;
        }
        for s in &self.signal_spec {
            if !s.effect.is_finite() {
                return Err(Error::Synth(format!("effect of {} is not finite", s.feature)));
            }
        }
        let has_signal = self.signal_spec.iter().any(|s| s.effect != 0.0);
        if has_signal && (m.deceased == 0.0 || m.deceased == 1.0) {
            return Err(Error::Synth(format!(
                "outcome_mix.deceased = {} leaves no room for a death signal",
                m.deceased
            )));
        }
        self.signal_sources().map(|_| ())
    }

    fn signal_sources(&self) -> Result<Vec<(SignalSource, f64)>> {
        self.signal_spec
            .iter()
            .map(|s| {
                let source = if s.feature == "age" {
                    SignalSource::Age
                } else if let Some(i) = self.lab_frequencies.iter().position(|l| l.name == s.feature) {
                    SignalSource::Lab(i)
                } else if let Ok(cat) = s.feature.parse::<ComorbidityCategory>() {
                    let rate = if cat == ComorbidityCategory::InfectiousDiseases {
                        1.0
                    } else {
                        self.prevalence(cat)
                    };
                    SignalSource::Category(cat, rate)
                } else {
                    return Err(Error::Synth(format!("signal feature {:?} is unknown", s.feature)));
                };
                Ok((source, s.effect))
            })
            .collect()
    }

    fn prevalence(&self, cat: ComorbidityCategory) -> f64 {
        self.comorbidity_prevalence
            .iter()
            .filter(|p| p.category == cat)
            .map(|p| p.rate)
            .next_back()
            .unwrap_or(0.0)
    }
}

fn check_mix(name: &str, parts: &[f64]) -> Result<()> {
    if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Synth(format!("{name} must hold probabilities summing to 1, got {parts:?}")));
    }
    Ok(())
}

/// A generated record before outcomes are assigned.
struct Draft {
    record: Hospitalization,
    /// Latent standard-normal level per catalog test.
    latent: Vec<f64>,
    categories: [bool; ComorbidityCategory::COUNT],
    uniforms: [f64; 3],
}

struct Sampler<'a> {
    cfg: &'a SynthConfig,
    thresholds: Vec<f64>,
    normal: StatNormal,
    start: NaiveDate,
}

impl Sampler<'_> {
    fn record(&self, index: usize, rng: &mut ChaCha8Rng) -> Draft {
        let cfg = self.cfg;
        let age_dist = Normal::new(cfg.age_mean, cfg.age_sd).expect("validated");
        let age = loop {
            let a: f64 = age_dist.sample(rng);
            if (AGE_RANGE.0..=AGE_RANGE.1).contains(&a) {
                break a.round() as u32;
            }
        };
        let sex = if rng.random::<f64>() < cfg.sex_balance { Sex::Female } else { Sex::Male };
        let u: f64 = rng.random();
        let o = &cfg.origin_mix;
        let origin_env = if u < o.urban {
            OriginEnv::Urban
        } else if u < o.urban + o.rural {
            OriginEnv::Rural
        } else {
            OriginEnv::Unknown
        };
        let stay_dist = LogNormal::new(cfg.stay_log_mean, cfg.stay_log_sd).expect("validated");
        let stay = (stay_dist.sample(rng).round() as i64).clamp(MIN_STAY, 365);
        let admit_date = self.start + Duration::days(rng.random_range(0..4 * 365));
        let discharge_date = admit_date + Duration::days(stay);

        let mut categories = [false; ComorbidityCategory::COUNT];
        let mut diagnoses = vec![Icd10Code::new("A41.9", DiagnosisRank::Primary).expect("valid code")];
        categories[ComorbidityCategory::InfectiousDiseases.index()] = true;
        for p in &cfg.comorbidity_prevalence {
            if rng.random::<f64>() < p.rate {
                let codes = catalog::codes_for(p.category);
                let code = codes[rng.random_range(0..codes.len())];
                let dx = Icd10Code::new(code, DiagnosisRank::Secondary).expect("catalog codes are valid");
                categories[categorize(&dx).index()] = true;
                diagnoses.push(dx);
            }
        }

        let rho = cfg.presence_correlation;
        let intensity: f64 = rng.sample(StandardNormal);
        let panel_noise: f64 = rng.sample(StandardNormal);
        let mut labs = Vec::new();
        let mut latent = Vec::with_capacity(cfg.lab_frequencies.len());
        for (spec, &threshold) in cfg.lab_frequencies.iter().zip(&self.thresholds) {
            let own: f64 = rng.sample(StandardNormal);
            let noise = if spec.panel && cfg.panel_grouping { panel_noise } else { own };
            let level: f64 = rng.sample(StandardNormal);
            latent.push(level);
            if rho.sqrt() * intensity + (1.0 - rho).sqrt() * noise >= threshold {
                continue;
            }
            let n_values = rng.random_range(1..=5);
            let mut stamps: Vec<_> = (0..n_values)
                .map(|_| {
                    let day = rng.random_range(0..=stay);
                    let secs = rng.random_range(0..86_400u32);
                    admit_date.and_time(NaiveTime::MIN) + Duration::days(day) + Duration::seconds(secs as i64)
                })
                .collect();
            stamps.sort();
            for ts in stamps {
                let jitter: f64 = rng.sample(StandardNormal);
                let q = self.normal.cdf(level + 0.25 * jitter);
                let value = ((spec.low + (spec.high - spec.low) * q) * 100.0).round() / 100.0;
                labs.push(LabResult::new(spec.name.clone(), value, ts).expect("finite value"));
            }
        }
        let uniforms = [rng.random(), rng.random(), rng.random()];
        Draft {
            record: Hospitalization {
                record_id: format!("H{:06}", index + 1),
                patient_age: age,
                sex,
                origin_env,
                admit_date,
                discharge_date,
                outcome: OutcomeLabel::Recovered,
                diagnoses,
                labs,
            },
            latent,
            categories,
            uniforms,
        }
    }
}

/// Solves `mean(sigmoid(x + offset_i) * weight_i) = target * mean(weight)`.
fn solve_intercept(offsets: &[f64], weights: &[f64], target: f64) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    let f = |x: f64| offsets.iter().zip(weights).map(|(o, w)| w * sigmoid(x + o)).sum::<f64>() / total - target;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::Synth(format!(
            "cannot reach an expected rate of {target}: signal too extreme for the requested mix"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Generates `config.n_records` records, sorted by id. Deterministic in
/// `config.seed` and independent of thread count.
pub fn generate(config: &SynthConfig) -> Result<Vec<Hospitalization>> {
    config.validate()?;
    let normal = StatNormal::standard();
    let sampler = Sampler {
        cfg: config,
        thresholds: config
            .lab_frequencies
            .iter()
            .map(|l| match l.presence {
                p if p >= 1.0 => f64::INFINITY,
                p if p <= 0.0 => f64::NEG_INFINITY,
                p => normal.inverse_cdf(p),
            })
            .collect(),
        normal,
        start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
    };
    let n = config.n_records;
    let chunks: Vec<Vec<Draft>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from(derive_seed(config.seed, &["synth-chunk", &c.to_string()]));
            (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(|i| sampler.record(i, &mut rng))
                .collect()
        })
        .collect();
    let drafts: Vec<Draft> = chunks.into_iter().flatten().collect();
    assign_outcomes(config, drafts)
}

fn assign_outcomes(config: &SynthConfig, drafts: Vec<Draft>) -> Result<Vec<Hospitalization>> {
    let sources = config.signal_sources()?;
    let severity: Vec<f64> = drafts
        .iter()
        .map(|d| {
            sources
                .iter()
                .map(|&(source, effect)| {
                    let z = match source {
                        SignalSource::Age => (d.record.patient_age as f64 - config.age_mean) / config.age_sd,
                        SignalSource::Lab(i) => d.latent[i],
                        SignalSource::Category(cat, p) => {
                            if p <= 0.0 || p >= 1.0 {
                                0.0
                            } else {
                                let flag = f64::from(u8::from(d.categories[cat.index()]));
                                (flag - p) / (p * (1.0 - p)).sqrt()
                            }
                        }
                    };
                    effect * z
                })
                .sum()
        })
        .collect();

    let mix = &config.outcome_mix;
    let ones = vec![1.0; drafts.len()];
    let p_dead: Vec<f64> = match mix.deceased {
        p if p <= 0.0 => vec![0.0; drafts.len()],
        p if p >= 1.0 => ones.clone(),
        p => {
            let alpha = solve_intercept(&severity, &ones, p)?;
            severity.iter().map(|s| sigmoid(alpha + s)).collect()
        }
    };
    let alive: Vec<f64> = p_dead.iter().map(|p| 1.0 - p).collect();
    let survivors = 1.0 - mix.deceased;
    let recover_share = if survivors > 0.0 { mix.recovered / survivors } else { 0.0 };
    let p_recover: Vec<f64> = match recover_share {
        r if r <= 0.0 => vec![0.0; drafts.len()],
        r if r >= 1.0 - 1e-12 => ones.clone(),
        r => {
            let neg: Vec<f64> = severity.iter().map(|s| -s).collect();
            let beta = solve_intercept(&neg, &alive, r)?;
            neg.iter().map(|s| sigmoid(beta + s)).collect()
        }
    };
    let rest = mix.improved + mix.worsened;
    let improved_share = if rest > 0.0 { mix.improved / rest } else { 1.0 };

    Ok(drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let [u_dead, u_rec, u_imp] = d.uniforms;
            let mut record = d.record;
            record.outcome = if u_dead < p_dead[i] {
                OutcomeLabel::Deceased
            } else if u_rec < p_recover[i] {
                OutcomeLabel::Recovered
            } else if u_imp < improved_share {
                OutcomeLabel::Improved
            } else {
                OutcomeLabel::Worsened
            };
            record
        })
        .collect())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Reassigns outcomes so that carriers of `category` have their odds of death
/// multiplied by `odds_multiplier` relative to non-carriers, keeping the
/// total number of deaths fixed.
///
/// Carrier and non-carrier death rates move by a common log-odds shift chosen
/// to conserve deaths; the required count changes are applied by flipping
/// randomly chosen records. Revived records take a survivor outcome drawn
/// from the cohort's survivor mix.
pub fn inject_comorbidity_signal(
    records: &[Hospitalization],
    category: ComorbidityCategory,
    odds_multiplier: f64,
    seed: u64,
) -> Result<Vec<Hospitalization>> {
    if !(odds_multiplier > 0.0 && odds_multiplier.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "odds multiplier must be positive, got {odds_multiplier}"
        )));
    }
    let carrier: Vec<bool> = records
        .iter()
        .map(|r| r.diagnoses.iter().any(|d| categorize(d) == category))
        .collect();
    let n_c = carrier.iter().filter(|&&c| c).count();
    let n_n = records.len() - n_c;
    if n_c == 0 {
        return Err(Error::InvalidInput(format!("no record carries {category}")));
    }
    let mut out = records.to_vec();
    if odds_multiplier == 1.0 || n_n == 0 {
        return Ok(out);
    }
    let dead = |r: &Hospitalization| r.outcome == OutcomeLabel::Deceased;
    let d_c = records.iter().zip(&carrier).filter(|(r, &c)| c && dead(r)).count();
    let d_n = records.iter().zip(&carrier).filter(|(r, &c)| !c && dead(r)).count();
    let deaths = (d_c + d_n) as f64;
    let (lc, ln) = (
        logit((d_c as f64 + 0.5) / (n_c as f64 + 1.0)),
        logit((d_n as f64 + 0.5) / (n_n as f64 + 1.0)),
    );
    let shift = odds_multiplier.ln();
    let expected = |delta: f64| n_c as f64 * sigmoid(lc + shift + delta) + n_n as f64 * sigmoid(ln + delta);
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) < deaths {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = 0.5 * (lo + hi);
    let target_c = ((n_c as f64 * sigmoid(lc + shift + delta)).round() as usize)
        .min(n_c)
        .min(d_c + d_n)
        .max((d_c + d_n).saturating_sub(n_n));

    let mut rng = derived_rng(seed, &["inject", category.as_str(), &odds_multiplier.to_string()]);
    let pick = |rng: &mut ChaCha8Rng, pool: Vec<usize>, k: usize| -> Vec<usize> {
        rand::seq::index::sample(rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    };
    let survivors: Vec<OutcomeLabel> = records.iter().filter(|r| !dead(r)).map(|r| r.outcome).collect();
    let revive = |rng: &mut ChaCha8Rng| {
        if survivors.is_empty() {
            OutcomeLabel::Improved
        } else {
            survivors[rng.random_range(0..survivors.len())]
        }
    };
    let group = |want_carrier: bool, want_dead: bool| -> Vec<usize> {
        (0..records.len())
            .filter(|&i| carrier[i] == want_carrier && dead(&records[i]) == want_dead)
            .collect()
    };
    let (kill, spare) = if target_c >= d_c {
        let k = target_c - d_c;
        (pick(&mut rng, group(true, false), k), pick(&mut rng, group(false, true), k))
    } else {
        let k = d_c - target_c;
        (pick(&mut rng, group(false, false), k), pick(&mut rng, group(true, true), k))
    };
    for i in kill {
        out[i].outcome = OutcomeLabel::Deceased;
    }
    for i in spare {
        out[i].outcome = revive(&mut rng);
    }
    Ok(out)
}

/// Writes the three ingestion CSVs for `records` into `dir`.
pub fn write(dir: &Path, records: &[Hospitalization]) -> Result<()> {
    write_cohort(dir, records)
}
