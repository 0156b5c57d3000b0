//! Domain types shared by every view: samples, bias classes, verdicts and
//! annotator records.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An input modality. The discriminant doubles as the player index used by
/// the general Shapley path, so new modalities must be appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityId {
    Image,
    Text,
}

impl ModalityId {
    pub const ALL: [ModalityId; 2] = [ModalityId::Image, ModalityId::Text];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Three-way modality bias type with a stable ordinal encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasClass {
    UniImage = 0,
    ModalityBalance = 1,
    UniText = 2,
}

impl BiasClass {
    pub const ALL: [BiasClass; 3] = [BiasClass::UniImage, BiasClass::ModalityBalance, BiasClass::UniText];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Self> {
        Self::ALL.get(ordinal as usize).copied()
    }

    /// Wire/manifest name (`uni_image`, `modality_balance`, `uni_text`).
    pub fn name(self) -> &'static str {
        match self {
            BiasClass::UniImage => "uni_image",
            BiasClass::ModalityBalance => "modality_balance",
            BiasClass::UniText => "uni_text",
        }
    }

    /// Column abbreviation used in report tables.
    pub fn abbrev(self) -> &'static str {
        match self {
            BiasClass::UniImage => "UI",
            BiasClass::ModalityBalance => "MB",
            BiasClass::UniText => "UT",
        }
    }
}

impl fmt::Display for BiasClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown bias class `{0}`")]
pub struct UnknownBiasClass(pub String);

impl FromStr for BiasClass {
    type Err = UnknownBiasClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uni_image" | "ui" => Ok(BiasClass::UniImage),
            "modality_balance" | "mb" => Ok(BiasClass::ModalityBalance),
            "uni_text" | "ut" => Ok(BiasClass::UniText),
            _ => Err(UnknownBiasClass(s.to_string())),
        }
    }
}

/// One annotator's 0-5 ratings of the three bias questions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorRecord {
    #[serde(rename = "annotator")]
    pub annotator_id: String,
    pub q_uni_image: i64,
    pub q_uni_text: i64,
    pub q_balance: i64,
}

impl AnnotatorRecord {
    pub const MAX_SCORE: i64 = 5;

    pub fn is_valid(&self) -> bool {
        [self.q_uni_image, self.q_uni_text, self.q_balance]
            .iter()
            .all(|q| (0..=Self::MAX_SCORE).contains(q))
    }
}

/// One benchmark item. Immutable once parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub image_ref: Option<String>,
    pub text: Option<String>,
    pub label: u32,
    pub split: Option<String>,
    pub annotations: Option<Vec<AnnotatorRecord>>,
    pub bias_gold: Option<BiasClass>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SampleError {
    #[error("empty sample id")]
    EmptyId,
    #[error("no modality present")]
    NoModality,
    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: u32, class_count: u32 },
}

impl Sample {
    /// Builds a two-modality sample with no split, gold or annotations.
    pub fn new(id: impl Into<String>, image_ref: Option<String>, text: Option<String>, label: u32) -> Self {
        Sample { id: id.into(), image_ref, text, label, split: None, annotations: None, bias_gold: None }
    }

    pub fn validate(&self, class_count: u32) -> Result<(), SampleError> {
        if self.id.is_empty() {
            return Err(SampleError::EmptyId);
        }
        if self.image_ref.is_none() && self.text.is_none() {
            return Err(SampleError::NoModality);
        }
        if self.label >= class_count {
            return Err(SampleError::LabelOutOfRange { label: self.label, class_count });
        }
        Ok(())
    }

    pub fn has(&self, modality: ModalityId) -> bool {
        match modality {
            ModalityId::Image => self.image_ref.is_some(),
            ModalityId::Text => self.text.is_some(),
        }
    }

    pub fn has_both(&self) -> bool {
        self.image_ref.is_some() && self.text.is_some()
    }
}

/// True iff annotations are present, every record is in range and the
/// annotator ids are pairwise distinct.
pub fn validate_annotations(sample: &Sample) -> bool {
    let Some(records) = &sample.annotations else {
        return false;
    };
    let mut seen = HashSet::new();
    records.iter().all(|r| r.is_valid() && seen.insert(r.annotator_id.as_str()))
}

/// Which analysis produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Benefit,
    Flow,
    Causal,
    Ensemble,
}

impl View {
    pub const SINGLE: [View; 3] = [View::Benefit, View::Flow, View::Causal];

    pub fn name(self) -> &'static str {
        match self {
            View::Benefit => "benefit",
            View::Flow => "flow",
            View::Causal => "causal",
            View::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "benefit" => Ok(View::Benefit),
            "flow" => Ok(View::Flow),
            "causal" => Ok(View::Causal),
            "ensemble" => Ok(View::Ensemble),
            other => Err(format!("unknown view `{other}`")),
        }
    }
}

/// View-specific numbers behind a verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreDetail {
    Benefit {
        phi_image: f64,
        phi_text: f64,
    },
    Flow {
        s_it: f64,
        s_tt: f64,
        s_it_norm: f64,
        s_tt_norm: f64,
        aggregation: crate::flow::Aggregation,
    },
    Causal {
        nde_c: f64,
        nde_e: f64,
        nde_w: f64,
        nde_r: f64,
        tie_balance: f64,
        te_w: f64,
        te_e: f64,
    },
    /// Per-class tallies in ordinal order (UI, MB, UT).
    Ensemble {
        tally: [f64; 3],
    },
}

impl ScoreDetail {
    pub fn view(&self) -> View {
        match self {
            ScoreDetail::Benefit { .. } => View::Benefit,
            ScoreDetail::Flow { .. } => View::Flow,
            ScoreDetail::Causal { .. } => View::Causal,
            ScoreDetail::Ensemble { .. } => View::Ensemble,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerdictError {
    #[error("score detail for {detail} attached to a {view} verdict")]
    DetailMismatch { view: View, detail: View },
    #[error("{0} verdicts cannot be degenerate")]
    DegenerateNotAllowed(View),
}

/// The outcome of one view (or the ensemble) on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVerdict {
    pub class: BiasClass,
    pub view: View,
    pub degenerate: bool,
    pub detail: ScoreDetail,
}

impl BiasVerdict {
    pub fn new(class: BiasClass, view: View, degenerate: bool, detail: ScoreDetail) -> Result<Self, VerdictError> {
        if detail.view() != view {
            return Err(VerdictError::DetailMismatch { view, detail: detail.view() });
        }
        if degenerate && !matches!(view, View::Benefit | View::Ensemble) {
            return Err(VerdictError::DegenerateNotAllowed(view));
        }
        Ok(BiasVerdict { class, view, degenerate, detail })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, a: i64, b: i64, c: i64) -> AnnotatorRecord {
        AnnotatorRecord { annotator_id: id.into(), q_uni_image: a, q_uni_text: b, q_balance: c }
    }

    fn annotated(records: Vec<AnnotatorRecord>) -> Sample {
        let mut s = Sample::new("s", None, Some("t".into()), 0);
        s.annotations = Some(records);
        s
    }

    #[test]
    fn bias_class_ordinal_round_trip() {
        for c in BiasClass::ALL {
            assert_eq!(BiasClass::from_ordinal(c.ordinal()), Some(c));
            assert_eq!(c.name().parse::<BiasClass>().unwrap(), c);
        }
        assert_eq!(BiasClass::from_ordinal(3), None);
        assert_eq!(BiasClass::ModalityBalance.ordinal(), 1);
    }

    #[test]
    fn annotations_valid() {
        let s = annotated(vec![rec("a", 5, 1, 3), rec("b", 4, 2, 3), rec("c", 5, 1, 2)]);
        assert!(validate_annotations(&s));
    }

    #[test]
    fn annotations_out_of_range() {
        let s = annotated(vec![rec("a", 5, 1, 7), rec("b", 4, 2, 3), rec("c", 5, 1, 2)]);
        assert!(!validate_annotations(&s));
        let s = annotated(vec![rec("a", -1, 1, 2)]);
        assert!(!validate_annotations(&s));
    }

    #[test]
    fn annotations_duplicate_annotator() {
        let s = annotated(vec![rec("a", 5, 1, 3), rec("a", 4, 2, 3), rec("c", 5, 1, 2)]);
        assert!(!validate_annotations(&s));
    }

    #[test]
    fn annotations_absent() {
        let s = Sample::new("s", None, Some("t".into()), 0);
        assert!(!validate_annotations(&s));
    }

    #[test]
    fn sample_invariants() {
        assert_eq!(Sample::new("", Some("i".into()), None, 0).validate(2), Err(SampleError::EmptyId));
        assert_eq!(Sample::new("x", None, None, 0).validate(2), Err(SampleError::NoModality));
        assert_eq!(
            Sample::new("x", Some("i".into()), None, 2).validate(2),
            Err(SampleError::LabelOutOfRange { label: 2, class_count: 2 })
        );
        assert!(Sample::new("x", Some("i".into()), None, 5).validate(6).is_ok());
    }

    #[test]
    fn verdict_rejects_mismatched_detail() {
        let detail = ScoreDetail::Benefit { phi_image: 1.0, phi_text: 1.0 };
        assert!(BiasVerdict::new(BiasClass::ModalityBalance, View::Flow, false, detail.clone()).is_err());
        assert!(BiasVerdict::new(BiasClass::ModalityBalance, View::Benefit, true, detail).is_ok());
        let causal = ScoreDetail::Causal {
            nde_c: 0.0,
            nde_e: 0.0,
            nde_w: 0.0,
            nde_r: 0.0,
            tie_balance: 0.0,
            te_w: 0.0,
            te_e: 0.0,
        };
        assert_eq!(
            BiasVerdict::new(BiasClass::ModalityBalance, View::Causal, true, causal),
            Err(VerdictError::DegenerateNotAllowed(View::Causal))
        );
    }
}
