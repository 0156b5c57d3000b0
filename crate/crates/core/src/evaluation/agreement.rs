//! Human annotation aggregation, Krippendorff's alpha and view-overlap
//! (Venn) counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::{AnnotatorRecord, BiasClass, View};

/// Class with the highest mean score over three annotators. Balance wins
/// any tie it is part of, otherwise ordinal order.
pub fn aggregate_annotations(records: &[AnnotatorRecord]) -> Result<BiasClass, EvalError> {
    if records.len() != 3 {
        return Err(EvalError::InvalidRecords(format!("expected 3 annotator records, got {}", records.len())));
    }
    let mut ids = std::collections::HashSet::new();
    for r in records {
        if !r.is_valid() {
            return Err(EvalError::InvalidRecords(format!("annotator {} has a score outside 0..=5", r.annotator_id)));
        }
        if !ids.insert(&r.annotator_id) {
            return Err(EvalError::InvalidRecords(format!("annotator {} appears twice", r.annotator_id)));
        }
    }
    // equal denominators, so sums order like means
    let sums = [
        records.iter().map(|r| r.q_uni_image).sum::<i64>(),
        records.iter().map(|r| r.q_balance).sum::<i64>(),
        records.iter().map(|r| r.q_uni_text).sum::<i64>(),
    ];
    Ok(top_question(sums))
}

/// One annotator's own label under the same tie rule.
pub fn record_class(record: &AnnotatorRecord) -> BiasClass {
    top_question([record.q_uni_image, record.q_balance, record.q_uni_text])
}

fn top_question(scores: [i64; 3]) -> BiasClass {
    let top = *scores.iter().max().expect("three scores");
    if scores[1] == top {
        BiasClass::ModalityBalance
    } else if scores[0] == top {
        BiasClass::UniImage
    } else {
        BiasClass::UniText
    }
}

/// Nominal Krippendorff's alpha. `labels[a][u]` is annotator `a`'s label for
/// unit `u`; `None` marks a missing rating. Units with fewer than two
/// ratings are not pairable and are ignored. When every pairable value is
/// the same label there is no expected disagreement and 1.0 is returned.
pub fn krippendorff_alpha<L: Ord + Clone>(labels: &[Vec<Option<L>>]) -> Result<f64, EvalError> {
    if labels.len() < 2 {
        return Err(EvalError::InsufficientRatings("fewer than two annotators".into()));
    }
    let units = labels[0].len();
    if labels.iter().any(|row| row.len() != units) {
        return Err(EvalError::InsufficientRatings("annotator rows differ in length".into()));
    }

    let mut index: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels.iter().flatten().flatten() {
        let next = index.len();
        index.entry(l).or_insert(next);
    }
    let k = index.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    let mut pairable = 0usize;
    for u in 0..units {
        let values: Vec<usize> = labels.iter().filter_map(|row| row[u].as_ref()).map(|l| index[l]).collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        pairable += 1;
        let w = 1.0 / (m - 1) as f64;
        for (i, &a) in values.iter().enumerate() {
            for (j, &b) in values.iter().enumerate() {
                if i != j {
                    coincidence[a][b] += w;
                }
            }
        }
    }
    if pairable == 0 {
        return Err(EvalError::InsufficientRatings("no unit has two ratings".into()));
    }

    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c][d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// One-vs-rest alpha for `class`.
pub fn per_class_alpha(labels: &[Vec<Option<BiasClass>>], class: BiasClass) -> Result<f64, EvalError> {
    let binary: Vec<Vec<Option<bool>>> =
        labels.iter().map(|row| row.iter().map(|l| l.map(|c| c == class)).collect()).collect();
    krippendorff_alpha(&binary)
}

/// Three-set Venn counts per class. `regions[class][mask]` counts samples
/// that exactly the views in `mask` assigned to `class` (bit 0 benefit,
/// bit 1 flow, bit 2 causal); `mask = 0` is unused.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgreementTable {
    pub regions: [[u64; 8]; 3],
}

pub const REGION_NAMES: [&str; 8] =
    ["none", "benefit", "flow", "benefit_flow", "causal", "benefit_causal", "flow_causal", "all"];

impl AgreementTable {
    pub fn region(&self, class: BiasClass, views: &[View]) -> u64 {
        let mask = views.iter().fold(0usize, |m, v| m | 1 << (*v as usize));
        self.regions[class.ordinal() as usize][mask]
    }

    /// Samples assigned `class` by at least one view.
    pub fn union(&self, class: BiasClass) -> u64 {
        self.regions[class.ordinal() as usize][1..].iter().sum()
    }

    /// Samples `view` assigned to `class`.
    pub fn view_total(&self, class: BiasClass, view: View) -> u64 {
        let bit = 1 << (view as usize);
        (1..8).filter(|m| m & bit != 0).map(|m| self.regions[class.ordinal() as usize][m]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for name in &REGION_NAMES[1..] {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for class in BiasClass::ALL {
            out.push_str(class.abbrev());
            for count in &self.regions[class.ordinal() as usize][1..] {
                out.push_str(&format!(",{count}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Venn counts over per-sample (benefit, flow, causal) verdicts.
pub fn venn_counts(verdicts: &[[Option<BiasClass>; 3]]) -> Result<AgreementTable, EvalError> {
    let mut table = AgreementTable::default();
    for (i, triple) in verdicts.iter().enumerate() {
        let mut masks = [0usize; 3];
        for (v, class) in triple.iter().enumerate() {
            let class = class.ok_or(EvalError::MissingVerdict { index: i, view: View::SINGLE[v] })?;
            masks[class.ordinal() as usize] |= 1 << v;
        }
        for (c, mask) in masks.into_iter().enumerate() {
            if mask != 0 {
                table.regions[c][mask] += 1;
            }
        }
    }
    Ok(table)
}
