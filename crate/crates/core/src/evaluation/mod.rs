//! Reports and agreement statistics.

pub mod agreement;
pub mod report;

use thiserror::Error;

use crate::model::View;

pub use agreement::{aggregate_annotations, krippendorff_alpha, per_class_alpha, record_class, venn_counts, AgreementTable};
pub use report::{category_report, category_report_with, render_csv, CategoryReport, F1Average, CSV_HEADER};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("prediction and gold sets differ at `{0}`")]
    DomainMismatch(String),
    #[error("invalid annotator records: {0}")]
    InvalidRecords(String),
    #[error("insufficient ratings: {0}")]
    InsufficientRatings(String),
    #[error("sample {index} has no {view} verdict")]
    MissingVerdict { index: usize, view: View },
}
