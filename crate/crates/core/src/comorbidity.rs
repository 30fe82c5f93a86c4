//! ICD-10 leading letter to comorbidity category mapping.
//!
//! The embedded table:
//!
//! | letters        | category             |
//! |----------------|----------------------|
//! | A, B           | `InfectiousDiseases` |
//! | C, D           | `Cancer`             |
//! | E              | `Endocrine`          |
//! | F              | `MentalHealth`       |
//! | G              | `NervousSystem`      |
//! | H              | `EyeEar`             |
//! | I              | `Cardiovascular`     |
//! | J              | `Respiratory`        |
//! | K              | `Digestive`          |
//! | L              | `Skin`               |
//! | M              | `Musculoskeletal`    |
//! | N              | `RenalUrinary`       |
//! | O              | `Pregnancy`          |
//! | R              | `SymptomsSigns`      |
//! | P, Q, S, T–Z   | `OtherMisc`          |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::Icd10Code;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComorbidityCategory {
    InfectiousDiseases,
    Cancer,
    Endocrine,
    MentalHealth,
    NervousSystem,
    EyeEar,
    Cardiovascular,
    Respiratory,
    Digestive,
    Skin,
    Musculoskeletal,
    RenalUrinary,
    Pregnancy,
    SymptomsSigns,
    OtherMisc,
}

impl ComorbidityCategory {
    pub const COUNT: usize = 15;

    pub const ALL: [ComorbidityCategory; Self::COUNT] = [
        Self::InfectiousDiseases,
        Self::Cancer,
        Self::Endocrine,
        Self::MentalHealth,
        Self::NervousSystem,
        Self::EyeEar,
        Self::Cardiovascular,
        Self::Respiratory,
        Self::Digestive,
        Self::Skin,
        Self::Musculoskeletal,
        Self::RenalUrinary,
        Self::Pregnancy,
        Self::SymptomsSigns,
        Self::OtherMisc,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::InfectiousDiseases => "InfectiousDiseases",
            Self::Cancer => "Cancer",
            Self::Endocrine => "Endocrine",
            Self::MentalHealth => "MentalHealth",
            Self::NervousSystem => "NervousSystem",
            Self::EyeEar => "EyeEar",
            Self::Cardiovascular => "Cardiovascular",
            Self::Respiratory => "Respiratory",
            Self::Digestive => "Digestive",
            Self::Skin => "Skin",
            Self::Musculoskeletal => "Musculoskeletal",
            Self::RenalUrinary => "RenalUrinary",
            Self::Pregnancy => "Pregnancy",
            Self::SymptomsSigns => "SymptomsSigns",
            Self::OtherMisc => "OtherMisc",
        }
    }
}

impl fmt::Display for ComorbidityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComorbidityCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown comorbidity category {s:?}")))
    }
}

/// Total function from `A`..=`Z` to a category.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LetterTable {
    by_letter: [ComorbidityCategory; 26],
}

impl Default for LetterTable {
    fn default() -> Self {
        use ComorbidityCategory::*;
        let mut by_letter = [OtherMisc; 26];
        let rows: [(&str, ComorbidityCategory); 14] = [
            ("AB", InfectiousDiseases),
            ("CD", Cancer),
            ("E", Endocrine),
            ("F", MentalHealth),
            ("G", NervousSystem),
            ("H", EyeEar),
            ("I", Cardiovascular),
            ("J", Respiratory),
            ("K", Digestive),
            ("L", Skin),
            ("M", Musculoskeletal),
            ("N", RenalUrinary),
            ("O", Pregnancy),
            ("R", SymptomsSigns),
        ];
        for (letters, cat) in rows {
            for b in letters.bytes() {
                by_letter[(b - b'A') as usize] = cat;
            }
        }
        LetterTable { by_letter }
    }
}

impl LetterTable {
    /// Reads a `letter,category` CSV (header optional). Letters not listed keep
    /// their default mapping.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table = LetterTable::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.to_ascii_lowercase().starts_with("letter")) {
                continue;
            }
            let malformed = |message: String| Error::Malformed {
                file: path.display().to_string(),
                line: i as u64 + 1,
                message,
            };
            let (letter, cat) = line
                .split_once(',')
                .ok_or_else(|| malformed("expected letter,category".into()))?;
            let letter = letter.trim();
            let b = match letter.as_bytes() {
                [b] if b.is_ascii_uppercase() => *b,
                _ => return Err(malformed(format!("invalid letter {letter:?}"))),
            };
            table.by_letter[(b - b'A') as usize] = cat.parse().map_err(|e: Error| malformed(e.to_string()))?;
        }
        Ok(table)
    }

    pub fn category_for_letter(&self, letter: char) -> Option<ComorbidityCategory> {
        letter
            .is_ascii_uppercase()
            .then(|| self.by_letter[(letter as u8 - b'A') as usize])
    }

    pub fn categorize(&self, code: &Icd10Code) -> ComorbidityCategory {
        // Icd10Code guarantees an uppercase leading letter
        self.by_letter[(code.letter() as u8 - b'A') as usize]
    }

    pub fn encode(&self, diagnoses: &[Icd10Code]) -> ComorbidityVector {
        let mut flags = [false; ComorbidityCategory::COUNT];
        for dx in diagnoses {
            flags[self.categorize(dx).index()] = true;
        }
        ComorbidityVector { flags }
    }
}

/// One presence flag per category, in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ComorbidityVector {
    pub flags: [bool; ComorbidityCategory::COUNT],
}

impl ComorbidityVector {
    pub fn has(&self, cat: ComorbidityCategory) -> bool {
        self.flags[cat.index()]
    }

    pub fn as_features(&self) -> impl Iterator<Item = f64> + '_ {
        self.flags.iter().map(|&f| if f { 1.0 } else { 0.0 })
    }
}

/// Categorizes a raw code string with the embedded table.
pub fn categorize_str(code: &str) -> Result<ComorbidityCategory> {
    let code = Icd10Code::new(code, crate::domain::DiagnosisRank::Secondary)?;
    Ok(categorize(&code))
}

pub fn categorize(code: &Icd10Code) -> ComorbidityCategory {
    LetterTable::default().categorize(code)
}

pub fn encode_comorbidities(diagnoses: &[Icd10Code]) -> ComorbidityVector {
    LetterTable::default().encode(diagnoses)
}
