//! Uniform access to external detectors, saliency providers and core
//! information extractors.
//!
//! Every call goes through [`Gateway`], which encodes absent modalities with
//! the protocol sentinels, bounds in-flight requests per endpoint, retries
//! transport failures, validates replies and caches them by content.

pub mod cache;
pub mod config;
pub mod protocol;
pub mod transport;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::model::{ModalityId, Sample};
use crate::text;

pub use cache::{CacheKey, ResponseCache};
pub use config::{Category, DetectorConfig, DetectorEndpoint, RetryPolicy, TransportKind};
pub use protocol::{DetectorInput, Request, PAD_TEXT, ZERO_IMAGE};
pub use transport::{Backend, HttpBackend, Limiter, SharedBackend, SubprocessBackend, TransportError};

use protocol::{BoxReply, ErrorReply, KeywordsReply, PredictReply, SaliencyMode, SaliencyReply};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("no endpoint registered for category {0}")]
    NoEndpoint(Category),
    #[error("{detector_id} ({category}) cannot serve {op}")]
    IncompatibleCategory { detector_id: String, category: Category, op: String },
    #[error("sample {sample_id} has no {modality:?} modality")]
    MissingModality { sample_id: String, modality: ModalityId },
    #[error("{detector_id}: {source}")]
    Transport { detector_id: String, source: TransportError },
    #[error("{detector_id}: protocol violation: {message}")]
    Protocol { detector_id: String, message: String },
    #[error("{detector_id}: invalid saliency bundle: {source}")]
    Saliency { detector_id: String, source: BundleError },
    #[error("{detector_id}: {source}")]
    CoreInfo { detector_id: String, source: CoreInfoError },
    #[error("only {responded} of {members} detectors responded (need {required}): {first_error}")]
    Quorum { responded: usize, members: usize, required: usize, first_error: String },
    #[error("empty endpoint group")]
    EmptyGroup,
    #[error("mixed categories in endpoint group")]
    MixedGroup,
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl GatewayError {
    pub fn is_transport(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

/// A detector's answer for one input combination.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorResponse {
    pub pred: usize,
    pub logits: Vec<f64>,
}

/// Index of the maximum, lowest index on ties. `None` for empty input.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl DetectorResponse {
    /// Validates `pred = argmax(logits)` and finiteness.
    pub fn new(pred: usize, logits: Vec<f64>) -> Result<Self, String> {
        if logits.is_empty() {
            return Err("empty logits".into());
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err("non-finite logit".into());
        }
        let top = argmax(&logits).expect("nonempty");
        if pred != top {
            return Err(format!("pred {pred} is not argmax {top} of logits"));
        }
        Ok(DetectorResponse { pred, logits })
    }

    pub fn confidence(&self, class: usize) -> f64 {
        softmax(&self.logits).get(class).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error("overlapping spans at token(s) {0:?}")]
    OverlappingSpans(Vec<usize>),
    #[error("token index {index} out of range for {tokens} tokens")]
    IndexOutOfRange { index: usize, tokens: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite saliency value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SaliencyPayload {
    /// Output-token rows of the last attention layer, one per head.
    Raw { attention: Vec<Vec<f64>>, gradient: Vec<Vec<f64>> },
    /// Per-token scores already reduced by the provider.
    Precomputed { scores: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyBundle {
    pub payload: SaliencyPayload,
    pub image_tokens: Vec<usize>,
    pub text_tokens: Vec<usize>,
}

impl SaliencyBundle {
    pub fn new(payload: SaliencyPayload, image_tokens: Vec<usize>, text_tokens: Vec<usize>) -> Result<Self, BundleError> {
        let tokens = match &payload {
            SaliencyPayload::Raw { attention, gradient } => {
                if attention.is_empty() {
                    return Err(BundleError::Shape("no attention heads".into()));
                }
                if attention.len() != gradient.len() {
                    return Err(BundleError::Shape(format!(
                        "{} attention heads vs {} gradient heads",
                        attention.len(),
                        gradient.len()
                    )));
                }
                let t = attention[0].len();
                for (h, (a, g)) in attention.iter().zip(gradient).enumerate() {
                    if a.len() != t || g.len() != t {
                        return Err(BundleError::Shape(format!(
                            "head {h}: attention length {}, gradient length {}, expected {t}",
                            a.len(),
                            g.len()
                        )));
                    }
                }
                if attention.iter().chain(gradient).flatten().any(|v| !v.is_finite()) {
                    return Err(BundleError::NonFinite);
                }
                t
            }
            SaliencyPayload::Precomputed { scores } => {
                if scores.iter().any(|v| !v.is_finite()) {
                    return Err(BundleError::NonFinite);
                }
                scores.len()
            }
        };
        if let Some(&index) = image_tokens.iter().chain(&text_tokens).find(|&&i| i >= tokens) {
            return Err(BundleError::IndexOutOfRange { index, tokens });
        }
        let image: BTreeSet<usize> = image_tokens.iter().copied().collect();
        let overlap: Vec<usize> = text_tokens.iter().copied().filter(|i| image.contains(i)).collect::<BTreeSet<_>>().into_iter().collect();
        if !overlap.is_empty() {
            return Err(BundleError::OverlappingSpans(overlap));
        }
        Ok(SaliencyBundle { payload, image_tokens, text_tokens })
    }

    pub fn token_count(&self) -> usize {
        match &self.payload {
            SaliencyPayload::Raw { attention, .. } => attention[0].len(),
            SaliencyPayload::Precomputed { scores } => scores.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoreInfoError {
    #[error("box must have 4 coordinates, got {0}")]
    BoxArity(usize),
    #[error("box coordinates outside [0,1]: {0:?}")]
    BoxOutOfRange([f64; 4]),
    #[error("inverted box {0:?}")]
    InvertedBox([f64; 4]),
    #[error("empty core chunk")]
    EmptyCoreChunk,
}

/// Extracted core information: the entity region of the image and the core
/// keywords of the text.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreInfo {
    pub entity_box: [f64; 4],
    pub keywords: Vec<String>,
}

pub fn validate_box(coords: &[f64]) -> Result<[f64; 4], CoreInfoError> {
    let b: [f64; 4] = coords.try_into().map_err(|_| CoreInfoError::BoxArity(coords.len()))?;
    if b.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(CoreInfoError::BoxOutOfRange(b));
    }
    if b[0] >= b[2] || b[1] >= b[3] {
        return Err(CoreInfoError::InvertedBox(b));
    }
    Ok(b)
}

/// A registered endpoint with its transport and concurrency bound.
pub struct Endpoint {
    pub spec: DetectorEndpoint,
    backend: SharedBackend,
    limiter: Limiter,
}

impl Endpoint {
    pub fn new(spec: DetectorEndpoint, backend: SharedBackend) -> Self {
        let limiter = Limiter::new(spec.concurrency_limit);
        Endpoint { spec, backend, limiter }
    }

    pub fn from_spec(spec: DetectorEndpoint) -> Result<Self, GatewayError> {
        let backend: SharedBackend = match spec.transport {
            TransportKind::SubprocessLines => Arc::new(SubprocessBackend::new(spec.address.clone())),
            TransportKind::Http => Arc::new(HttpBackend::new(spec.address.clone())),
            TransportKind::InProcess => {
                return Err(GatewayError::Config(format!("{}: in-process endpoint needs a backend", spec.detector_id)))
            }
        };
        Ok(Endpoint::new(spec, backend))
    }

    pub fn id(&self) -> &str {
        &self.spec.detector_id
    }

    pub fn category(&self) -> Category {
        self.spec.category
    }
}

#[derive(Debug, Default)]
pub struct GatewayStats {
    pub backend_calls: AtomicU64,
    pub cache_hits: AtomicU64,
    pub retries: AtomicU64,
    pub dropped_keywords: AtomicU64,
}

/// Shared, thread-safe access point for all external model calls.
pub struct Gateway {
    endpoints: Vec<Arc<Endpoint>>,
    by_id: HashMap<String, usize>,
    cache: ResponseCache,
    retry: RetryPolicy,
    class_count: u32,
    pub stats: GatewayStats,
}

impl Gateway {
    pub fn new(cache: ResponseCache) -> Self {
        Gateway {
            endpoints: Vec::new(),
            by_id: HashMap::new(),
            cache,
            retry: RetryPolicy::default(),
            class_count: crate::manifest::DEFAULT_CLASS_COUNT,
            stats: GatewayStats::default(),
        }
    }

    pub fn from_config(config: &DetectorConfig, cache: ResponseCache) -> Result<Self, GatewayError> {
        config.validate()?;
        let mut gw = Gateway::new(cache).with_retry(config.retry).with_class_count(config.class_count);
        for spec in &config.endpoints {
            gw.register(Endpoint::from_spec(spec.clone())?)?;
        }
        Ok(gw)
    }

    pub fn load(config_path: &Path, cache: ResponseCache) -> Result<Self, GatewayError> {
        Self::from_config(&DetectorConfig::load(config_path)?, cache)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_class_count(mut self, class_count: u32) -> Self {
        self.class_count = class_count;
        self
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn register(&mut self, endpoint: Endpoint) -> Result<Arc<Endpoint>, GatewayError> {
        if self.by_id.contains_key(endpoint.id()) {
            return Err(GatewayError::Config(format!("duplicate detector_id `{}`", endpoint.id())));
        }
        let endpoint = Arc::new(endpoint);
        self.by_id.insert(endpoint.id().to_string(), self.endpoints.len());
        self.endpoints.push(Arc::clone(&endpoint));
        Ok(endpoint)
    }

    pub fn endpoint(&self, detector_id: &str) -> Result<Arc<Endpoint>, GatewayError> {
        self.by_id
            .get(detector_id)
            .map(|&i| Arc::clone(&self.endpoints[i]))
            .ok_or_else(|| GatewayError::UnknownEndpoint(detector_id.to_string()))
    }

    /// Endpoints of one category, in registration order.
    pub fn group(&self, category: Category) -> Vec<Arc<Endpoint>> {
        self.endpoints.iter().filter(|e| e.category() == category).cloned().collect()
    }

    pub fn first(&self, category: Category) -> Result<Arc<Endpoint>, GatewayError> {
        self.group(category).into_iter().next().ok_or(GatewayError::NoEndpoint(category))
    }

    fn exchange(&self, endpoint: &Endpoint, sample_id: &str, request: &Request) -> Result<(CacheKey, String, bool), GatewayError> {
        let line = request.to_line();
        let key = CacheKey::new(endpoint.id(), request.op_name(), sample_id, &line);
        if let Some(hit) = self.cache.get(&key) {
            self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok((key, hit, true));
        }
        let _permit = endpoint.limiter.acquire();
        let mut attempt = 1;
        loop {
            self.stats.backend_calls.fetch_add(1, Ordering::Relaxed);
            match endpoint.backend.call(&line) {
                Ok(reply) => return Ok((key, reply, false)),
                Err(e) if e.is_retryable() && attempt < self.retry.attempts => {
                    log::debug!("{}: {e}; retrying", endpoint.id());
                    self.stats.retries.fetch_add(1, Ordering::Relaxed);
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(source) => {
                    return Err(GatewayError::Transport { detector_id: endpoint.id().to_string(), source })
                }
            }
        }
    }

    /// Sends `request`, decodes the reply with `decode`, and caches the raw
    /// reply only once it validated.
    fn call<R, T>(
        &self,
        endpoint: &Endpoint,
        sample_id: &str,
        request: &Request,
        decode: impl FnOnce(R) -> Result<T, GatewayError>,
    ) -> Result<T, GatewayError>
    where
        R: DeserializeOwned,
    {
        let (key, reply, cached) = self.exchange(endpoint, sample_id, request)?;
        let protocol = |message: String| GatewayError::Protocol { detector_id: endpoint.id().to_string(), message };
        let parsed: R = match serde_json::from_str(&reply) {
            Ok(r) => r,
            Err(e) => {
                return Err(match serde_json::from_str::<ErrorReply>(&reply) {
                    Ok(err) => protocol(format!("adapter error: {}", err.error)),
                    Err(_) => protocol(format!("malformed reply: {e}")),
                })
            }
        };
        let value = decode(parsed)?;
        if !cached {
            self.cache.put(&key, &reply)?;
        }
        Ok(value)
    }

    fn require(&self, endpoint: &Endpoint, ok: bool, op: &str) -> Result<(), GatewayError> {
        if ok {
            Ok(())
        } else {
            Err(GatewayError::IncompatibleCategory {
                detector_id: endpoint.id().to_string(),
                category: endpoint.category(),
                op: op.to_string(),
            })
        }
    }

    /// Queries a detector with the sample's modalities in `present`; the
    /// others are sent as absence sentinels.
    pub fn predict(
        &self,
        endpoint: &Endpoint,
        sample: &Sample,
        present: &BTreeSet<ModalityId>,
    ) -> Result<DetectorResponse, GatewayError> {
        for &m in present {
            if !sample.has(m) {
                return Err(GatewayError::MissingModality { sample_id: sample.id.clone(), modality: m });
            }
        }
        let input = DetectorInput {
            image: present.contains(&ModalityId::Image).then(|| sample.image_ref.clone()).flatten(),
            text: present.contains(&ModalityId::Text).then(|| sample.text.clone()).flatten(),
        };
        self.predict_input(endpoint, &sample.id, &input)
    }

    /// Queries a detector with an explicit (possibly derived) input.
    pub fn predict_input(&self, endpoint: &Endpoint, sample_id: &str, input: &DetectorInput) -> Result<DetectorResponse, GatewayError> {
        let compatible = match endpoint.category() {
            Category::ImageOnly => input.text.is_none(),
            Category::TextOnly => input.image.is_none(),
            Category::ImageText => true,
            _ => false,
        };
        self.require(endpoint, compatible, "predict")?;
        let request =
            Request::Predict { sample_id: sample_id.to_string(), image: input.image_field(), text: input.text_field() };
        let class_count = self.class_count as usize;
        self.call(endpoint, sample_id, &request, |r: PredictReply| {
            let protocol = |message: String| GatewayError::Protocol { detector_id: endpoint.id().to_string(), message };
            if r.logits.len() != class_count {
                return Err(protocol(format!("{} logits for {class_count} classes", r.logits.len())));
            }
            DetectorResponse::new(r.pred, r.logits).map_err(protocol)
        })
    }

    pub fn fetch_saliency(&self, endpoint: &Endpoint, sample: &Sample) -> Result<SaliencyBundle, GatewayError> {
        self.require(endpoint, endpoint.category() == Category::SaliencyProvider, "saliency")?;
        let (Some(image), Some(text)) = (&sample.image_ref, &sample.text) else {
            let modality = if sample.image_ref.is_none() { ModalityId::Image } else { ModalityId::Text };
            return Err(GatewayError::MissingModality { sample_id: sample.id.clone(), modality });
        };
        let request = Request::Saliency { sample_id: sample.id.clone(), image: image.clone(), text: text.clone() };
        self.call(endpoint, &sample.id, &request, |r: SaliencyReply| {
            let payload = match r.mode {
                SaliencyMode::Raw => SaliencyPayload::Raw { attention: r.attention, gradient: r.gradient },
                SaliencyMode::Precomputed => SaliencyPayload::Precomputed { scores: r.scores },
            };
            SaliencyBundle::new(payload, r.image_tokens, r.text_tokens)
                .map_err(|source| GatewayError::Saliency { detector_id: endpoint.id().to_string(), source })
        })
    }

    /// Extracts the image entity box and the text keywords. Keywords that do
    /// not occur in the text are dropped and counted.
    pub fn extract_core(&self, image_endpoint: &Endpoint, text_endpoint: &Endpoint, sample: &Sample) -> Result<CoreInfo, GatewayError> {
        self.require(image_endpoint, image_endpoint.category() == Category::ImageExtractor, "extract_core_image")?;
        self.require(text_endpoint, text_endpoint.category() == Category::TextExtractor, "extract_core_text")?;
        let (Some(image), Some(text)) = (&sample.image_ref, &sample.text) else {
            let modality = if sample.image_ref.is_none() { ModalityId::Image } else { ModalityId::Text };
            return Err(GatewayError::MissingModality { sample_id: sample.id.clone(), modality });
        };

        let request = Request::ExtractCoreImage { image: image.clone() };
        let entity_box = self.call(image_endpoint, &sample.id, &request, |r: BoxReply| {
            validate_box(&r.entity_box)
                .map_err(|source| GatewayError::CoreInfo { detector_id: image_endpoint.id().to_string(), source })
        })?;

        let request = Request::ExtractCoreText { text: text.clone() };
        let raw_keywords = self.call(text_endpoint, &sample.id, &request, |r: KeywordsReply| Ok(r.keywords))?;
        let mut keywords = Vec::with_capacity(raw_keywords.len());
        for kw in raw_keywords {
            if text::contains_phrase(text, &kw) {
                keywords.push(text::collapse_whitespace(&kw));
            } else {
                log::warn!("{}: keyword `{kw}` not found in text of {}", text_endpoint.id(), sample.id);
                self.stats.dropped_keywords.fetch_add(1, Ordering::Relaxed);
            }
        }
        if keywords.is_empty() {
            return Err(GatewayError::CoreInfo {
                detector_id: text_endpoint.id().to_string(),
                source: CoreInfoError::EmptyCoreChunk,
            });
        }
        Ok(CoreInfo { entity_box, keywords })
    }

    /// Majority vote over a same-category detector group. Ties go to the
    /// class whose voters have the highest mean softmax confidence in it;
    /// the returned logits are the element-wise mean of member logits, so
    /// `pred` may differ from their argmax.
    pub fn predict_aggregated(
        &self,
        endpoints: &[Arc<Endpoint>],
        sample_id: &str,
        input: &DetectorInput,
    ) -> Result<DetectorResponse, GatewayError> {
        let first = endpoints.first().ok_or(GatewayError::EmptyGroup)?;
        if endpoints.iter().any(|e| e.category() != first.category()) {
            return Err(GatewayError::MixedGroup);
        }
        if endpoints.len() == 1 {
            return self.predict_input(first, sample_id, input);
        }
        let mut responses = Vec::new();
        let mut first_error = None;
        for ep in endpoints {
            match self.predict_input(ep, sample_id, input) {
                Ok(r) => responses.push(r),
                Err(e) => {
                    log::warn!("{}: {e}", ep.id());
                    first_error.get_or_insert(e);
                }
            }
        }
        let required = endpoints.len().div_ceil(2);
        if responses.is_empty() {
            return Err(first_error.expect("all members failed"));
        }
        if responses.len() < required {
            return Err(GatewayError::Quorum {
                responded: responses.len(),
                members: endpoints.len(),
                required,
                first_error: first_error.map(|e| e.to_string()).unwrap_or_default(),
            });
        }
        Ok(aggregate_responses(&responses))
    }

    /// Aggregated prediction for a sample's own modalities.
    pub fn predict_group(&self, category: Category, sample: &Sample, present: &BTreeSet<ModalityId>) -> Result<DetectorResponse, GatewayError> {
        let group = self.group(category);
        if group.len() == 1 {
            return self.predict(&group[0], sample, present);
        }
        for &m in present {
            if !sample.has(m) {
                return Err(GatewayError::MissingModality { sample_id: sample.id.clone(), modality: m });
            }
        }
        let input = DetectorInput {
            image: present.contains(&ModalityId::Image).then(|| sample.image_ref.clone()).flatten(),
            text: present.contains(&ModalityId::Text).then(|| sample.text.clone()).flatten(),
        };
        if group.is_empty() {
            return Err(GatewayError::NoEndpoint(category));
        }
        self.predict_aggregated(&group, &sample.id, &input)
    }

    /// Aggregated prediction on an explicit input.
    pub fn predict_group_input(&self, category: Category, sample_id: &str, input: &DetectorInput) -> Result<DetectorResponse, GatewayError> {
        let group = self.group(category);
        if group.is_empty() {
            return Err(GatewayError::NoEndpoint(category));
        }
        self.predict_aggregated(&group, sample_id, input)
    }
}

/// Vote over member responses (see [`Gateway::predict_aggregated`]).
pub fn aggregate_responses(responses: &[DetectorResponse]) -> DetectorResponse {
    let classes = responses.iter().map(|r| r.logits.len()).max().unwrap_or(0);
    let mut votes = vec![0usize; classes];
    let mut confidence = vec![0.0f64; classes];
    for r in responses {
        votes[r.pred] += 1;
        confidence[r.pred] += r.confidence(r.pred);
    }
    let top = votes.iter().copied().max().unwrap_or(0);
    let mut pred = 0;
    let mut best_conf = f64::NEG_INFINITY;
    for c in 0..classes {
        if votes[c] == top {
            let mean = confidence[c] / votes[c] as f64;
            if mean > best_conf {
                best_conf = mean;
                pred = c;
            }
        }
    }
    // incremental mean is exact when all members agree
    let mut logits = vec![0.0; classes];
    for (k, r) in responses.iter().enumerate() {
        for (m, x) in logits.iter_mut().zip(&r.logits) {
            *m += (x - *m) / (k + 1) as f64;
        }
    }
    DetectorResponse { pred, logits }
}
