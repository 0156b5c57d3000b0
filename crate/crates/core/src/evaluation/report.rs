//! Proportion[accuracy] tables with overall accuracy and F1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::model::BiasClass;

pub const CSV_HEADER: &str = "method,UI,MB,UT,Acc,F1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Average {
    #[default]
    Macro,
    Micro,
    /// Weighted by gold support.
    Weighted,
}

impl fmt::Display for F1Average {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            F1Average::Macro => "macro",
            F1Average::Micro => "micro",
            F1Average::Weighted => "weighted",
        })
    }
}

impl FromStr for F1Average {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "macro" => Ok(F1Average::Macro),
            "micro" => Ok(F1Average::Micro),
            "weighted" => Ok(F1Average::Weighted),
            other => Err(format!("unknown F1 average `{other}`")),
        }
    }
}

/// Per-class arrays are in ordinal order (UI, MB, UT); accuracies and F1
/// are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub samples: usize,
    pub proportion: [f64; 3],
    pub accuracy: [f64; 3],
    pub class_f1: [f64; 3],
    pub overall_accuracy: f64,
    pub f1: f64,
    pub f1_average: F1Average,
    /// confusion[gold][pred]
    pub confusion: [[u64; 3]; 3],
}

fn pct(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn category_report(
    pred: &BTreeMap<String, BiasClass>,
    gold: &BTreeMap<String, BiasClass>,
) -> Result<CategoryReport, EvalError> {
    category_report_with(pred, gold, F1Average::Macro)
}

pub fn category_report_with(
    pred: &BTreeMap<String, BiasClass>,
    gold: &BTreeMap<String, BiasClass>,
    average: F1Average,
) -> Result<CategoryReport, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    if pred.len() != gold.len() || pred.keys().any(|k| !gold.contains_key(k)) {
        let missing = pred
            .keys()
            .find(|k| !gold.contains_key(*k))
            .or_else(|| gold.keys().find(|k| !pred.contains_key(*k)))
            .cloned()
            .unwrap_or_default();
        return Err(EvalError::DomainMismatch(missing));
    }
    let mut confusion = [[0u64; 3]; 3];
    for (id, p) in pred {
        confusion[gold[id].ordinal() as usize][p.ordinal() as usize] += 1;
    }
    let n = pred.len() as u64;
    let predicted: [u64; 3] = std::array::from_fn(|c| (0..3).map(|g| confusion[g][c]).sum());
    let support: [u64; 3] = std::array::from_fn(|g| confusion[g].iter().sum());
    let hits: [u64; 3] = std::array::from_fn(|c| confusion[c][c]);
    let correct: u64 = hits.iter().sum();

    let accuracy = std::array::from_fn(|c| pct(hits[c], predicted[c]));
    let class_f1: [f64; 3] = std::array::from_fn(|c| {
        let denom = predicted[c] + support[c];
        pct(2 * hits[c], denom)
    });
    let overall_accuracy = pct(correct, n);
    let f1 = match average {
        // classes absent from both gold and predictions carry no F1
        F1Average::Macro => {
            let seen: Vec<usize> = (0..3).filter(|&c| predicted[c] + support[c] > 0).collect();
            seen.iter().map(|&c| class_f1[c]).sum::<f64>() / seen.len() as f64
        }
        // single-label: micro precision = micro recall = accuracy
        F1Average::Micro => overall_accuracy,
        F1Average::Weighted => (0..3).map(|c| class_f1[c] * support[c] as f64).sum::<f64>() / n as f64,
    };
    Ok(CategoryReport {
        samples: pred.len(),
        proportion: std::array::from_fn(|c| predicted[c] as f64 / n as f64),
        accuracy,
        class_f1,
        overall_accuracy,
        f1,
        f1_average: average,
        confusion,
    })
}

impl CategoryReport {
    /// "proportion[accuracy]", e.g. `0.50[80.00]`.
    pub fn cell(&self, class: BiasClass) -> String {
        let c = class.ordinal() as usize;
        format!("{:.2}[{:.2}]", self.proportion[c], self.accuracy[c])
    }

    pub fn csv_row(&self, method: &str) -> String {
        format!(
            "{method},{},{},{},{:.2},{:.2}",
            self.cell(BiasClass::UniImage),
            self.cell(BiasClass::ModalityBalance),
            self.cell(BiasClass::UniText),
            self.overall_accuracy,
            self.f1
        )
    }
}

/// Table with one row per method.
pub fn render_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a CategoryReport)>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (method, report) in rows {
        out.push_str(&report.csv_row(method));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use BiasClass::{ModalityBalance as MB, UniImage as UI, UniText as UT};

    fn maps(pairs: &[(BiasClass, BiasClass)]) -> (BTreeMap<String, BiasClass>, BTreeMap<String, BiasClass>) {
        let pred = pairs.iter().enumerate().map(|(i, p)| (format!("s{i:03}"), p.0)).collect();
        let gold = pairs.iter().enumerate().map(|(i, p)| (format!("s{i:03}"), p.1)).collect();
        (pred, gold)
    }

    #[test]
    fn balance_cell() {
        // 50 MB predictions, 40 of them right
        let mut pairs = vec![(MB, MB); 40];
        pairs.extend(vec![(MB, UI); 10]);
        pairs.extend(vec![(UI, UI); 30]);
        pairs.extend(vec![(UT, UT); 20]);
        let (p, g) = maps(&pairs);
        let r = category_report(&p, &g).unwrap();
        assert_eq!(r.cell(MB), "0.50[80.00]");
        assert_eq!(r.cell(UI), "0.30[100.00]");
        assert_eq!(r.overall_accuracy, 90.0);
        assert_eq!(r.csv_row("m"), format!("m,0.30[100.00],0.50[80.00],0.20[100.00],90.00,{:.2}", r.f1));
    }

    #[test]
    fn perfect_predictor() {
        let (p, g) = maps(&[(UI, UI), (MB, MB), (UT, UT), (MB, MB)]);
        let r = category_report(&p, &g).unwrap();
        assert_eq!(r.accuracy, [100.0; 3]);
        assert_eq!(r.f1, 100.0);
        assert_eq!(r.f1, r.overall_accuracy);
    }

    #[test]
    fn never_predicted_class() {
        let (p, g) = maps(&[(MB, UT), (MB, MB), (UI, UI)]);
        let r = category_report(&p, &g).unwrap();
        assert_eq!(r.cell(UT), "0.00[0.00]");
        assert_eq!(r.class_f1[2], 0.0);
        assert!((r.proportion.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn averages() {
        let (p, g) = maps(&[(UI, UI), (UI, MB), (MB, MB), (MB, MB), (UT, MB)]);
        let micro = category_report_with(&p, &g, F1Average::Micro).unwrap();
        assert_eq!(micro.f1, 60.0);
        let weighted = category_report_with(&p, &g, F1Average::Weighted).unwrap();
        // UI: p=1/2 r=1 f=2/3; MB: p=1 r=1/2 f=2/3; UT: 0
        let expected = 100.0 * (2.0 / 3.0 * 1.0 + 2.0 / 3.0 * 4.0) / 5.0;
        assert!((weighted.f1 - expected).abs() < 1e-9);
        let macro_ = category_report(&p, &g).unwrap();
        assert!((macro_.f1 - 100.0 * (4.0 / 3.0) / 3.0).abs() < 1e-9);
    }

    #[test]
    fn domain_errors() {
        let (p, mut g) = maps(&[(UI, UI), (MB, MB)]);
        assert_eq!(category_report(&BTreeMap::new(), &BTreeMap::new()), Err(EvalError::Empty));
        g.remove("s001");
        g.insert("zz".into(), MB);
        assert_eq!(category_report(&p, &g), Err(EvalError::DomainMismatch("s001".into())));
    }

    #[test]
    fn csv_layout() {
        let (p, g) = maps(&[(UI, UI)]);
        let r = category_report(&p, &g).unwrap();
        assert_eq!(
            render_csv([("benefit", &r)]),
            "method,UI,MB,UT,Acc,F1\nbenefit,1.00[100.00],0.00[0.00],0.00[0.00],100.00,100.00\n"
        );
    }
}
