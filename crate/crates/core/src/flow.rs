//! Modality flow: how much saliency reaches the output token from image
//! tokens versus text tokens, thresholded into a bias class.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Category, Gateway, GatewayError, SaliencyBundle, SaliencyPayload};
use crate::model::{BiasClass, BiasVerdict, Sample, ScoreDetail, View};

pub const DEFAULT_EPSILON: f64 = 0.25;

/// tolerance on `s_it_norm + s_tt_norm = 1`
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Sum,
    Avg,
    Max,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Sum => "sum",
            Aggregation::Avg => "avg",
            Aggregation::Max => "max",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Aggregation::Sum),
            "avg" | "average" | "mean" => Ok(Aggregation::Avg),
            "max" => Ok(Aggregation::Max),
            other => Err(format!("unknown aggregation `{other}`")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FlowError {
    #[error("raw saliency expected")]
    NotRaw,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty {0} token span")]
    EmptySpan(&'static str),
    #[error("token index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("negative flow ({0}, {1})")]
    Negative(f64, f64),
    #[error("epsilon {0} outside [0, 1]")]
    EpsilonOutOfRange(f64),
    #[error("empty calibration grid")]
    EmptyGrid,
    #[error("no labeled samples")]
    NoLabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowScores {
    pub s_it: f64,
    pub s_tt: f64,
    pub s_it_norm: f64,
    pub s_tt_norm: f64,
    pub aggregation: Aggregation,
}

impl FlowScores {
    /// `|s_it_norm - s_tt_norm|`
    pub fn gap(&self) -> f64 {
        (self.s_it_norm - self.s_tt_norm).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub epsilon: f64,
    pub aggregation: Aggregation,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig { epsilon: DEFAULT_EPSILON, aggregation: Aggregation::Sum }
    }
}

impl FlowConfig {
    pub fn new(epsilon: f64, aggregation: Aggregation) -> Result<Self, FlowError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(FlowError::EpsilonOutOfRange(epsilon));
        }
        Ok(FlowConfig { epsilon, aggregation })
    }
}

/// Per-token saliency into the output token: the head-sum of
/// attention * gradient, absolute value taken after summing.
pub fn saliency_from_raw(payload: &SaliencyPayload) -> Result<Vec<f64>, FlowError> {
    let SaliencyPayload::Raw { attention, gradient } = payload else {
        return Err(FlowError::NotRaw);
    };
    let tokens = attention.first().map(Vec::len).ok_or_else(|| FlowError::Shape("no heads".into()))?;
    if attention.len() != gradient.len() {
        return Err(FlowError::Shape("head count differs between attention and gradient".into()));
    }
    let mut scores = vec![0.0; tokens];
    for (a, g) in attention.iter().zip(gradient) {
        if a.len() != tokens || g.len() != tokens {
            return Err(FlowError::Shape("token count differs across heads".into()));
        }
        for ((s, a), g) in scores.iter_mut().zip(a).zip(g) {
            *s += a * g;
        }
    }
    Ok(scores.into_iter().map(f64::abs).collect())
}

pub fn token_scores(bundle: &SaliencyBundle) -> Result<Vec<f64>, FlowError> {
    match &bundle.payload {
        SaliencyPayload::Precomputed { scores } => Ok(scores.clone()),
        raw => saliency_from_raw(raw),
    }
}

fn reduce(scores: &[f64], span: &[usize], aggregation: Aggregation, name: &'static str) -> Result<f64, FlowError> {
    if span.is_empty() {
        return Err(FlowError::EmptySpan(name));
    }
    let values = span
        .iter()
        .map(|&i| scores.get(i).copied().ok_or(FlowError::IndexOutOfRange(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match aggregation {
        Aggregation::Sum => values.iter().sum(),
        Aggregation::Avg => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Raw per-modality flow; the normalized fields are left at zero.
pub fn aggregate_flow(
    scores: &[f64],
    image_tokens: &[usize],
    text_tokens: &[usize],
    aggregation: Aggregation,
) -> Result<FlowScores, FlowError> {
    if let Some(&i) = image_tokens.iter().find(|i| text_tokens.contains(i)) {
        return Err(FlowError::Shape(format!("token {i} is in both spans")));
    }
    Ok(FlowScores {
        s_it: reduce(scores, image_tokens, aggregation, "image")?,
        s_tt: reduce(scores, text_tokens, aggregation, "text")?,
        s_it_norm: 0.0,
        s_tt_norm: 0.0,
        aggregation,
    })
}

/// Shares of total flow. Zero total flow maps to (0.5, 0.5).
pub fn normalize_flow(raw: FlowScores) -> Result<FlowScores, FlowError> {
    if raw.s_it < 0.0 || raw.s_tt < 0.0 || raw.s_it.is_nan() || raw.s_tt.is_nan() {
        return Err(FlowError::Negative(raw.s_it, raw.s_tt));
    }
    let total = raw.s_it + raw.s_tt;
    let (s_it_norm, s_tt_norm) = if total > 0.0 { (raw.s_it / total, raw.s_tt / total) } else { (0.5, 0.5) };
    Ok(FlowScores { s_it_norm, s_tt_norm, ..raw })
}

/// Balanced when the normalized gap is strictly below epsilon.
pub fn classify_flow_class(flows: &FlowScores, epsilon: f64) -> BiasClass {
    if flows.gap() < epsilon {
        BiasClass::ModalityBalance
    } else if flows.s_it_norm > flows.s_tt_norm {
        BiasClass::UniImage
    } else {
        BiasClass::UniText
    }
}

pub fn classify_flow(flows: &FlowScores, config: &FlowConfig) -> BiasVerdict {
    let class = classify_flow_class(flows, config.epsilon);
    BiasVerdict::new(class, View::Flow, false, flow_detail(flows)).expect("flow detail matches flow view")
}

pub fn flow_detail(flows: &FlowScores) -> ScoreDetail {
    ScoreDetail::Flow {
        s_it: flows.s_it,
        s_tt: flows.s_tt,
        s_it_norm: flows.s_it_norm,
        s_tt_norm: flows.s_tt_norm,
        aggregation: flows.aggregation,
    }
}

/// Recovers flow scores from a stored flow verdict's detail.
pub fn scores_from_detail(detail: &ScoreDetail) -> Option<FlowScores> {
    match *detail {
        ScoreDetail::Flow { s_it, s_tt, s_it_norm, s_tt_norm, aggregation } => {
            Some(FlowScores { s_it, s_tt, s_it_norm, s_tt_norm, aggregation })
        }
        _ => None,
    }
}

/// 0.00, 0.05, ..., 0.40
pub fn default_grid() -> Vec<f64> {
    (0..=8).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub best_epsilon: f64,
    pub best_accuracy: f64,
    /// (epsilon, accuracy in [0, 1]) for every grid point, in grid order.
    pub curve: Vec<(f64, f64)>,
}

impl Calibration {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,accuracy\n");
        for (eps, acc) in &self.curve {
            out.push_str(&format!("{eps:.2},{acc:.4}\n"));
        }
        out
    }
}

/// Grid search for the threshold with the highest accuracy; ties go to the
/// smallest epsilon.
pub fn calibrate_epsilon(labeled: &[(FlowScores, BiasClass)], grid: &[f64]) -> Result<Calibration, FlowError> {
    if grid.is_empty() {
        return Err(FlowError::EmptyGrid);
    }
    if labeled.is_empty() {
        return Err(FlowError::NoLabeled);
    }
    let curve: Vec<(f64, f64)> = grid
        .iter()
        .map(|&eps| {
            let hits = labeled.iter().filter(|(f, gold)| classify_flow_class(f, eps) == *gold).count();
            (eps, hits as f64 / labeled.len() as f64)
        })
        .collect();
    let mut best = curve[0];
    for &(eps, acc) in &curve[1..] {
        if acc > best.1 || (acc == best.1 && eps < best.0) {
            best = (eps, acc);
        }
    }
    Ok(Calibration { best_epsilon: best.0, best_accuracy: best.1, curve })
}

/// Fetches saliency and classifies the sample.
pub fn run_flow(sample: &Sample, gateway: &Gateway, config: &FlowConfig) -> Result<FlowOutcome, FlowRunError> {
    let provider = gateway.first(Category::SaliencyProvider)?;
    let bundle = gateway.fetch_saliency(&provider, sample)?;
    let scores = token_scores(&bundle)?;
    let flows = normalize_flow(aggregate_flow(&scores, &bundle.image_tokens, &bundle.text_tokens, config.aggregation)?)?;
    Ok(FlowOutcome { verdict: classify_flow(&flows, config), flows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutcome {
    pub verdict: BiasVerdict,
    pub flows: FlowScores,
}

#[derive(Debug, Error)]
pub enum FlowRunError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
