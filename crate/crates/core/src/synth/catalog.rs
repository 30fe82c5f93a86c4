//! Default laboratory catalog for the generator.
//!
//! Presence fractions follow the published top-50 test frequencies of the
//! source cohort. Ranges are plausible adult values in conventional units;
//! they only shape the synthetic data and carry no clinical meaning.

use serde::{Deserialize, Serialize};

use crate::comorbidity::ComorbidityCategory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabSpec {
    pub name: String,
    /// Fraction of hospitalizations with at least one result.
    pub presence: f64,
    pub low: f64,
    pub high: f64,
    /// Member of the hemogram panel, ordered together.
    #[serde(default)]
    pub panel: bool,
}

// (name, presence, low, high, hemogram panel)
const LABS: [(&str, f64, f64, f64, bool); 50] = [
    ("Urea", 0.9933, 10.0, 300.0, false),
    ("Na", 0.9932, 120.0, 160.0, false),
    ("K", 0.9930, 2.5, 7.0, false),
    ("Glucose", 0.9928, 50.0, 400.0, false),
    ("AST", 0.9915, 10.0, 500.0, false),
    ("ALT", 0.9914, 5.0, 500.0, false),
    ("PT_INR", 0.9680, 0.8, 5.0, false),
    ("Bilirubin_Total", 0.9503, 0.2, 10.0, false),
    ("PT_sec", 0.9500, 9.0, 40.0, false),
    ("APTT", 0.9496, 20.0, 80.0, false),
    ("PT_pct", 0.9483, 20.0, 120.0, false),
    ("Bilirubin_Direct", 0.9131, 0.05, 6.0, false),
    ("CKMB", 0.9034, 5.0, 100.0, false),
    ("Amylase", 0.8924, 20.0, 400.0, false),
    ("Cl", 0.8833, 90.0, 120.0, false),
    ("Hemogram_MCV", 0.8787, 70.0, 110.0, true),
    ("Hemogram_WBC", 0.8787, 1.0, 40.0, true),
    ("Hemogram_RBC", 0.8787, 2.0, 6.0, true),
    ("Hemogram_MCH", 0.8787, 22.0, 36.0, true),
    ("Hemogram_MPV", 0.8756, 7.0, 13.0, true),
    ("Hemogram_HGB", 0.8753, 6.0, 17.0, true),
    ("Hemogram_PLT", 0.8753, 20.0, 600.0, true),
    ("Hemogram_HCT", 0.8753, 20.0, 52.0, true),
    ("Hemogram_RDW", 0.8538, 11.0, 22.0, true),
    ("Hemogram_MCHC", 0.8383, 28.0, 37.0, true),
    ("Hemogram_Eosinophils_pct", 0.8053, 0.0, 8.0, true),
    ("Hemogram_Eosinophils_abs", 0.7930, 0.0, 0.8, true),
    ("Creatinine", 0.7635, 0.4, 8.0, false),
    ("CKI", 0.7599, 20.0, 1000.0, false),
    ("Hemogram_RDW_SD", 0.7250, 35.0, 70.0, true),
    ("Lipase", 0.7026, 10.0, 300.0, false),
    ("Hemogram_PDW", 0.6744, 9.0, 20.0, true),
    ("Hemogram_PCT", 0.6622, 0.1, 0.5, true),
    ("Bilirubin_Indirect", 0.6600, 0.1, 5.0, false),
    ("Fibrinogen", 0.6530, 150.0, 700.0, false),
    ("Hemogram_Lymphocytes_pct", 0.6097, 2.0, 50.0, true),
    ("Hemogram_Monocytes_pct", 0.6097, 1.0, 15.0, true),
    ("Hemogram_Basophils_abs", 0.6015, 0.0, 0.2, true),
    ("Hemogram_Monocytes_abs", 0.6015, 0.1, 1.5, true),
    ("Hemogram_Neutrophils_abs", 0.6015, 1.0, 30.0, true),
    ("Hemogram_Basophils_pct", 0.6015, 0.0, 2.0, true),
    ("Hemogram_Neutrophils_pct", 0.6015, 40.0, 97.0, true),
    ("Hemogram_Lymphocytes_abs", 0.6015, 0.2, 4.0, true),
    ("Hemogram_NRBC_pct", 0.5762, 0.0, 2.0, true),
    ("Hemogram_NRBC_abs", 0.5751, 0.0, 0.2, true),
    ("Fibrinogen_C", 0.4920, 150.0, 700.0, false),
    ("GGT", 0.4881, 10.0, 500.0, false),
    ("Ca", 0.4834, 7.0, 11.0, false),
    ("Total_Protein", 0.4576, 4.0, 9.0, false),
    ("CRP", 0.4356, 1.0, 300.0, false),
];

pub fn default_labs() -> Vec<LabSpec> {
    LABS.iter()
        .map(|&(name, presence, low, high, panel)| LabSpec {
            name: name.to_string(),
            presence,
            low,
            high,
            panel,
        })
        .collect()
}

/// Secondary-diagnosis prevalence per category; sepsis itself (`A41.9`) is
/// every record's primary code.
pub fn default_prevalence() -> Vec<(ComorbidityCategory, f64)> {
    use ComorbidityCategory::*;
    vec![
        (Cancer, 0.15),
        (Endocrine, 0.30),
        (MentalHealth, 0.08),
        (NervousSystem, 0.12),
        (EyeEar, 0.03),
        (Cardiovascular, 0.60),
        (Respiratory, 0.35),
        (Digestive, 0.25),
        (Skin, 0.05),
        (Musculoskeletal, 0.08),
        (RenalUrinary, 0.30),
        (Pregnancy, 0.002),
        (SymptomsSigns, 0.20),
        (OtherMisc, 0.15),
    ]
}

/// Example codes drawn for a category.
pub fn codes_for(category: ComorbidityCategory) -> &'static [&'static str] {
    use ComorbidityCategory::*;
    match category {
        InfectiousDiseases => &["B37.9", "A49.0"],
        Cancer => &["C34.9", "C18.9", "D46.9"],
        Endocrine => &["E11.9", "E87.1"],
        MentalHealth => &["F03", "F10.2"],
        NervousSystem => &["G30.9", "G40.9"],
        EyeEar => &["H25.9", "H91.9"],
        Cardiovascular => &["I50.9", "I48.9", "I10"],
        Respiratory => &["J18.9", "J44.1", "J96.0"],
        Digestive => &["K92.2", "K74.6"],
        Skin => &["L89.9", "L03.1"],
        Musculoskeletal => &["M81.0", "M62.8"],
        RenalUrinary => &["N18.9", "N39.0", "N17.9"],
        Pregnancy => &["O85"],
        SymptomsSigns => &["R65.2", "R57.2"],
        OtherMisc => &["T81.4", "Z95.0", "S72.0"],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comorbidity::categorize_str;

    #[test]
    fn catalog_is_sorted_and_valid() {
        let labs = default_labs();
        assert!(labs.windows(2).all(|w| w[0].presence >= w[1].presence));
        assert!(labs.iter().all(|l| l.low < l.high && (0.0..=1.0).contains(&l.presence)));
        assert_eq!(labs.iter().filter(|l| l.panel).count(), 25);
    }

    #[test]
    fn codes_land_in_their_category() {
        for cat in ComorbidityCategory::ALL {
            for code in codes_for(cat) {
                assert_eq!(categorize_str(code).unwrap(), cat, "{code}");
            }
        }
    }
}
