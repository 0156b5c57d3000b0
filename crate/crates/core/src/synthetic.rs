//! Deterministic mock detectors with planted bias profiles.
//!
//! A [`PlantedWorld`] answers every wire operation for the samples of a
//! planted manifest. The backends recognize which counterfactual branch a
//! request belongs to from its image and text fields (full, crop, masked,
//! keywords, remainder or sentinel) and answer from the sample's profile.
//! All draws are keyed by (seed, sample id, purpose).

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::protocol::{
    BoxReply, ErrorReply, ImageRef, KeywordsReply, PredictReply, SaliencyMode, SaliencyReply,
};
use crate::gateway::{
    argmax, Category, DetectorEndpoint, Endpoint, Gateway, GatewayError, Request, ResponseCache, SharedBackend,
    TransportError, PAD_TEXT,
};
use crate::manifest::Manifest;
use crate::model::{BiasClass, Sample};
use crate::seeding::keyed_rng;
use crate::text;

pub const PLANTED_CLASS_COUNT: u32 = 2;

/// Words per planted keyword phrase.
const KEYWORD_WORDS: usize = 2;
const LOGIT_NOISE: f64 = 0.05;
const SALIENCY_HEADS: usize = 4;

const VOCABULARY: &[&str] = &[
    "senator", "flood", "vaccine", "rally", "bridge", "stadium", "protest", "election", "harbor", "satellite",
    "wildfire", "museum", "festival", "factory", "airport", "glacier", "parade", "court", "market", "border",
    "village", "summit", "tower", "river", "hospital", "school", "train", "storm", "desert", "island", "concert",
    "statue", "minister", "farmer", "police", "doctor", "painting", "rocket", "whale", "volcano",
];

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("mix not normalized")]
    MixNotNormalized,
    #[error("mix weight for {0:?} is negative or non-finite")]
    MixWeight(BiasClass),
    #[error("dataset needs at least one sample")]
    Empty,
    #[error("flip rate {0} outside [0, 1]")]
    FlipRate(f64),
    #[error("invalid profile for {0}: {1}")]
    Profile(String, String),
}

/// Means of the seven branch outputs on the ground-truth class logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchMeans {
    pub c: f64,
    pub e: f64,
    pub w: f64,
    pub r: f64,
    pub f: f64,
    /// Unimodal detectors on sentinel input.
    pub unimodal_ref: f64,
    /// Image-text detector on sentinel input.
    pub fusion_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedProfile {
    pub bias: BiasClass,
    pub unimodal_image_acc: f64,
    pub unimodal_text_acc: f64,
    pub multimodal_acc: f64,
    pub flow_ratio: f64,
    pub branch_logit_means: BranchMeans,
    pub seed: u64,
}

impl PlantedProfile {
    /// Extreme profile for `bias`, with the flow ratio drawn inside the
    /// class band.
    pub fn clean(bias: BiasClass, seed: u64, sample_id: &str) -> Self {
        let mut rng = keyed_rng(seed, sample_id, "profile");
        let seed = rng.random();
        let (image_acc, text_acc, band, means) = match bias {
            BiasClass::UniImage => (
                1.0,
                0.0,
                0.80..0.95,
                BranchMeans { c: 0.2, e: 3.0, w: 0.1, r: 0.1, f: 0.3, unimodal_ref: 0.0, fusion_ref: 0.0 },
            ),
            BiasClass::UniText => (
                0.0,
                1.0,
                0.05..0.20,
                BranchMeans { c: 0.1, e: 0.1, w: 3.0, r: 0.2, f: 0.3, unimodal_ref: 0.0, fusion_ref: 0.0 },
            ),
            BiasClass::ModalityBalance => (
                1.0,
                1.0,
                0.45..0.55,
                BranchMeans { c: 0.1, e: 0.5, w: 0.5, r: 0.1, f: 3.0, unimodal_ref: 0.0, fusion_ref: 0.0 },
            ),
        };
        PlantedProfile {
            bias,
            unimodal_image_acc: image_acc,
            unimodal_text_acc: text_acc,
            multimodal_acc: 1.0,
            flow_ratio: rng.random_range(band),
            branch_logit_means: means,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("unimodal_image_acc", self.unimodal_image_acc),
            ("unimodal_text_acc", self.unimodal_text_acc),
            ("multimodal_acc", self.multimodal_acc),
            ("flow_ratio", self.flow_ratio),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Class shares in ordinal order, validated to sum to 1.
pub fn parse_mix(mix: &[(BiasClass, f64)]) -> Result<[f64; 3], SyntheticError> {
    let mut shares = [0.0; 3];
    for &(c, w) in mix {
        if !w.is_finite() || w < 0.0 {
            return Err(SyntheticError::MixWeight(c));
        }
        shares[c.ordinal() as usize] += w;
    }
    if (shares.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SyntheticError::MixNotNormalized);
    }
    Ok(shares)
}

/// Largest-remainder split of `n` by `shares`.
fn apportion(n: usize, shares: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: [usize; 3] = std::array::from_fn(|c| exact[c].floor() as usize);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for c in order.into_iter().cycle() {
        if left == 0 {
            break;
        }
        counts[c] += 1;
        left -= 1;
    }
    counts
}

/// Planted samples with their profiles; the seed reproduces every reply.
#[derive(Debug, Clone)]
pub struct PlantedWorld {
    pub seed: u64,
    samples: HashMap<String, Sample>,
    profiles: HashMap<String, PlantedProfile>,
    by_image: HashMap<String, String>,
    by_text: HashMap<String, String>,
}

/// Endpoint specs paired with their backends.
#[derive(Clone)]
pub struct EndpointSet {
    pub entries: Vec<(DetectorEndpoint, SharedBackend)>,
}

impl EndpointSet {
    pub fn gateway(&self, cache: ResponseCache) -> Result<Gateway, GatewayError> {
        let mut gw = Gateway::new(cache).with_class_count(PLANTED_CLASS_COUNT);
        for (spec, backend) in &self.entries {
            gw.register(Endpoint::new(spec.clone(), Arc::clone(backend)))?;
        }
        Ok(gw)
    }

    /// Set with only `category`'s detectors corrupted.
    pub fn corrupt_category(&self, category: Category, flip_rate: f64, seed: u64) -> Result<EndpointSet, SyntheticError> {
        let (target, rest): (Vec<_>, Vec<_>) = self.entries.iter().cloned().partition(|(s, _)| s.category == category);
        let corrupted = corrupt(&EndpointSet { entries: target }, flip_rate, seed)?;
        let mut by_id: HashMap<String, SharedBackend> =
            corrupted.entries.into_iter().chain(rest).map(|(s, b)| (s.detector_id, b)).collect();
        let entries = self
            .entries
            .iter()
            .map(|(s, _)| (s.clone(), by_id.remove(&s.detector_id).expect("every id survives partition")))
            .collect();
        Ok(EndpointSet { entries })
    }
}

pub const PLANTED_ENDPOINTS: [(&str, Category); 6] = [
    ("planted-image", Category::ImageOnly),
    ("planted-text", Category::TextOnly),
    ("planted-multimodal", Category::ImageText),
    ("planted-saliency", Category::SaliencyProvider),
    ("planted-image-extractor", Category::ImageExtractor),
    ("planted-text-extractor", Category::TextExtractor),
];

fn planted_text(rng: &mut impl Rng, id: &str) -> String {
    let len = rng.random_range(5..=9);
    let mut words: Vec<&str> = VOCABULARY.choose_multiple(rng, len).copied().collect();
    words.push(id);
    words.join(" ")
}

/// `n` planted samples split by `mix`, plus endpoints realizing their
/// profiles.
pub fn make_planted_dataset(
    n: usize,
    mix: &[(BiasClass, f64)],
    seed: u64,
) -> Result<(Manifest, EndpointSet), SyntheticError> {
    if n == 0 {
        return Err(SyntheticError::Empty);
    }
    let shares = parse_mix(mix)?;
    let counts = apportion(n, &shares);
    let mut classes: Vec<BiasClass> =
        BiasClass::ALL.iter().zip(counts).flat_map(|(&c, k)| std::iter::repeat_n(c, k)).collect();
    classes.shuffle(&mut keyed_rng(seed, "", "mix"));

    let width = n.to_string().len().max(4);
    let samples: Vec<Sample> = classes
        .into_iter()
        .enumerate()
        .map(|(i, bias)| {
            let id = format!("p{i:0width$}");
            let mut rng = keyed_rng(seed, &id, "sample");
            let text = planted_text(&mut rng, &id);
            let mut s = Sample::new(id.clone(), Some(format!("planted/{id}.png")), Some(text), rng.random_range(0..PLANTED_CLASS_COUNT));
            s.bias_gold = Some(bias);
            s.split = Some("analysis".into());
            s
        })
        .collect();
    let mut manifest = Manifest::new(samples);
    manifest.class_count = PLANTED_CLASS_COUNT;
    let world = PlantedWorld::from_manifest(&manifest, seed)?;
    Ok((manifest, world.endpoints()))
}

impl PlantedWorld {
    /// Rebuilds the world of a planted manifest: every sample needs
    /// `bias_gold`, an image and a text.
    pub fn from_manifest(manifest: &Manifest, seed: u64) -> Result<Self, SyntheticError> {
        let profiles = manifest
            .samples
            .iter()
            .map(|s| {
                let bias = s.bias_gold.ok_or_else(|| SyntheticError::Profile(s.id.clone(), "no bias_gold".into()))?;
                Ok((s.id.clone(), PlantedProfile::clean(bias, seed, &s.id)))
            })
            .collect::<Result<_, SyntheticError>>()?;
        Self::with_profiles(manifest, profiles, seed)
    }

    pub fn with_profiles(
        manifest: &Manifest,
        profiles: HashMap<String, PlantedProfile>,
        seed: u64,
    ) -> Result<Self, SyntheticError> {
        let mut world = PlantedWorld {
            seed,
            samples: HashMap::new(),
            profiles: HashMap::new(),
            by_image: HashMap::new(),
            by_text: HashMap::new(),
        };
        for s in &manifest.samples {
            let (Some(image), Some(txt)) = (&s.image_ref, &s.text) else {
                return Err(SyntheticError::Profile(s.id.clone(), "planted samples need both modalities".into()));
            };
            let profile = profiles.get(&s.id).ok_or_else(|| SyntheticError::Profile(s.id.clone(), "no profile".into()))?;
            profile.validate().map_err(|e| SyntheticError::Profile(s.id.clone(), e))?;
            if text::collapse_whitespace(txt).split(' ').count() <= KEYWORD_WORDS {
                return Err(SyntheticError::Profile(s.id.clone(), "text too short".into()));
            }
            world.by_image.insert(image.clone(), s.id.clone());
            world.by_text.insert(text::collapse_whitespace(txt), s.id.clone());
            world.profiles.insert(s.id.clone(), profile.clone());
            world.samples.insert(s.id.clone(), s.clone());
        }
        Ok(world)
    }

    pub fn profile(&self, sample_id: &str) -> Option<&PlantedProfile> {
        self.profiles.get(sample_id)
    }

    /// Keywords the text extractor returns for a sample.
    pub fn keywords(sample: &Sample) -> Vec<String> {
        let t = text::collapse_whitespace(sample.text.as_deref().unwrap_or(""));
        t.split(' ').take(KEYWORD_WORDS).map(str::to_string).collect()
    }

    /// In-process endpoints, one per category.
    pub fn endpoints(self) -> EndpointSet {
        let world = Arc::new(self);
        let entries = PLANTED_ENDPOINTS
            .iter()
            .map(|&(id, category)| {
                let backend: SharedBackend = Arc::new(PlantedBackend { world: Arc::clone(&world), category });
                (DetectorEndpoint::in_process(id, category), backend)
            })
            .collect();
        EndpointSet { entries }
    }

    pub fn backend(self: &Arc<Self>, category: Category) -> PlantedBackend {
        PlantedBackend { world: Arc::clone(self), category }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TextRole {
    Full,
    Keywords,
    Remainder,
    Pad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    BenefitImage,
    BenefitText,
    BenefitBoth,
    /// A causal branch, named by its mean.
    Branch(&'static str),
}

/// Answers wire requests for one category from a planted world.
pub struct PlantedBackend {
    world: Arc<PlantedWorld>,
    category: Category,
}

fn noise(rng: &mut impl Rng) -> f64 {
    rng.random_range(-LOGIT_NOISE..LOGIT_NOISE)
}

fn reply<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("reply serialization is infallible")
}

fn error_reply(message: impl Into<String>) -> String {
    reply(&ErrorReply { error: message.into() })
}

impl PlantedBackend {
    fn sample(&self, id: &str) -> Option<(&Sample, &PlantedProfile)> {
        Some((self.world.samples.get(id)?, self.world.profiles.get(id)?))
    }

    fn text_role(sample: &Sample, field: &str) -> TextRole {
        if field == PAD_TEXT {
            return TextRole::Pad;
        }
        let collapsed = text::collapse_whitespace(field);
        if collapsed == text::collapse_whitespace(sample.text.as_deref().unwrap_or("")) {
            TextRole::Full
        } else if collapsed == PlantedWorld::keywords(sample).join(" ") {
            TextRole::Keywords
        } else {
            TextRole::Remainder
        }
    }

    fn role(&self, sample: &Sample, image: &str, text_field: &str) -> Option<Role> {
        let image = ImageRef::parse(image);
        let text = Self::text_role(sample, text_field);
        let role = match (self.category, image, text) {
            (Category::ImageOnly, ImageRef::Full(_), TextRole::Pad) => Role::BenefitImage,
            (Category::ImageOnly, ImageRef::Crop(..), TextRole::Pad) => Role::Branch("e"),
            (Category::ImageOnly, ImageRef::Masked(..), TextRole::Pad) => Role::Branch("c"),
            (Category::ImageOnly | Category::TextOnly, ImageRef::Zero, TextRole::Pad) => Role::Branch("unimodal_ref"),
            (Category::TextOnly, ImageRef::Zero, TextRole::Full) => Role::BenefitText,
            (Category::TextOnly, ImageRef::Zero, TextRole::Keywords) => Role::Branch("w"),
            (Category::TextOnly, ImageRef::Zero, TextRole::Remainder) => Role::Branch("r"),
            (Category::ImageText, ImageRef::Full(_), TextRole::Full) => Role::BenefitBoth,
            (Category::ImageText, ImageRef::Crop(..), TextRole::Keywords) => Role::Branch("f"),
            (Category::ImageText, ImageRef::Zero, TextRole::Pad) => Role::Branch("fusion_ref"),
            _ => return None,
        };
        Some(role)
    }

    fn predict(&self, sample_id: &str, image: &str, text_field: &str) -> String {
        let Some((sample, profile)) = self.sample(sample_id) else {
            return error_reply(format!("unknown sample {sample_id}"));
        };
        let Some(role) = self.role(sample, image, text_field) else {
            return error_reply(format!("unrecognized {} input for {sample_id}", self.category));
        };
        let k = PLANTED_CLASS_COUNT as usize;
        let gold = sample.label as usize;
        let purpose = format!("{role:?}");
        let mut rng = keyed_rng(profile.seed, sample_id, &purpose);
        let logits: Vec<f64> = match role {
            Role::Branch(name) => {
                let m = &profile.branch_logit_means;
                let mean = match name {
                    "c" => m.c,
                    "e" => m.e,
                    "w" => m.w,
                    "r" => m.r,
                    "f" => m.f,
                    "unimodal_ref" => m.unimodal_ref,
                    _ => m.fusion_ref,
                };
                let scalar = mean + noise(&mut rng);
                (0..k).map(|c| if c == gold { scalar } else { scalar - 1.0 - noise(&mut rng).abs() }).collect()
            }
            _ => {
                let acc = match role {
                    Role::BenefitImage => profile.unimodal_image_acc,
                    Role::BenefitText => profile.unimodal_text_acc,
                    _ => profile.multimodal_acc,
                };
                let correct = rng.random::<f64>() < acc;
                let target = if correct { gold } else { (gold + 1) % k };
                (0..k).map(|c| if c == target { 2.0 } else { -2.0 } + noise(&mut rng)).collect()
            }
        };
        let pred = argmax(&logits).expect("non-empty logits");
        reply(&PredictReply { pred, logits })
    }

    fn saliency(&self, sample_id: &str) -> String {
        let Some((sample, profile)) = self.sample(sample_id) else {
            return error_reply(format!("unknown sample {sample_id}"));
        };
        let mut rng = keyed_rng(profile.seed, sample_id, "saliency");
        let image_count = rng.random_range(4..=9);
        let text_count = text::collapse_whitespace(sample.text.as_deref().unwrap_or("")).split(' ').count();
        // [bos, image tokens, text tokens, output token]
        let total = 2 + image_count + text_count;
        let image_tokens: Vec<usize> = (1..=image_count).collect();
        let text_tokens: Vec<usize> = (image_count + 1..=image_count + text_count).collect();
        let scale = rng.random_range(0.5..20.0);
        let spread = |count: usize, mass: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            let w: Vec<f64> = (0..count).map(|_| rng.random_range(0.2..1.0)).collect();
            let sum: f64 = w.iter().sum();
            w.into_iter().map(|x| mass * x / sum).collect()
        };
        let mut target = vec![0.0; total];
        for (i, s) in image_tokens.iter().zip(spread(image_count, scale * profile.flow_ratio, &mut rng)) {
            target[*i] = s;
        }
        for (i, s) in text_tokens.iter().zip(spread(text_count, scale * (1.0 - profile.flow_ratio), &mut rng)) {
            target[*i] = s;
        }
        target[0] = rng.random_range(0.0..scale);
        target[total - 1] = rng.random_range(0.0..scale);

        let body = if rng.random_bool(0.3) {
            SaliencyReply {
                mode: SaliencyMode::Precomputed,
                attention: vec![],
                gradient: vec![],
                scores: target,
                image_tokens,
                text_tokens,
            }
        } else {
            let attention: Vec<Vec<f64>> =
                (0..SALIENCY_HEADS).map(|_| (0..total).map(|_| rng.random_range(0.01..1.0)).collect()).collect();
            let gradient = attention
                .iter()
                .map(|row| row.iter().zip(&target).map(|(a, t)| t / (SALIENCY_HEADS as f64 * a)).collect())
                .collect();
            SaliencyReply { mode: SaliencyMode::Raw, attention, gradient, scores: vec![], image_tokens, text_tokens }
        };
        reply(&body)
    }

    fn extract_image(&self, image: &str) -> String {
        let Some(sample_id) = self.world.by_image.get(image) else {
            return error_reply(format!("unknown image {image}"));
        };
        let mut rng = keyed_rng(self.world.seed, sample_id, "box");
        let mut coord = |lo: f64, hi: f64| (rng.random_range(lo..hi) * 1000.0).round() / 1000.0;
        let entity_box = vec![coord(0.0, 0.3), coord(0.0, 0.3), coord(0.6, 1.0), coord(0.6, 1.0)];
        reply(&BoxReply { entity_box })
    }

    fn extract_text(&self, text_field: &str) -> String {
        let Some(sample) = self.world.by_text.get(&text::collapse_whitespace(text_field)).and_then(|id| self.world.samples.get(id)) else {
            return error_reply("unknown text");
        };
        reply(&KeywordsReply { keywords: PlantedWorld::keywords(sample) })
    }

    pub fn answer(&self, request: &Request) -> String {
        match (self.category, request) {
            (Category::ImageOnly | Category::TextOnly | Category::ImageText, Request::Predict { sample_id, image, text }) => {
                self.predict(sample_id, image, text)
            }
            (Category::SaliencyProvider, Request::Saliency { sample_id, .. }) => self.saliency(sample_id),
            (Category::ImageExtractor, Request::ExtractCoreImage { image }) => self.extract_image(image),
            (Category::TextExtractor, Request::ExtractCoreText { text }) => self.extract_text(text),
            (category, r) => error_reply(format!("{category} endpoint does not serve {}", r.op_name())),
        }
    }
}

impl crate::gateway::Backend for PlantedBackend {
    fn call(&self, request: &str) -> Result<String, TransportError> {
        match serde_json::from_str::<Request>(request) {
            Ok(r) => Ok(self.answer(&r)),
            Err(e) => Ok(error_reply(format!("bad request: {e}"))),
        }
    }
}

/// Flips predictions of the wrapped detector with probability `flip_rate`,
/// keyed by (seed, detector id, request).
struct FlipBackend {
    inner: SharedBackend,
    detector_id: String,
    flip_rate: f64,
    seed: u64,
}

impl crate::gateway::Backend for FlipBackend {
    fn call(&self, request: &str) -> Result<String, TransportError> {
        let reply = self.inner.call(request)?;
        if self.flip_rate == 0.0 {
            return Ok(reply);
        }
        let Ok(Request::Predict { sample_id, .. }) = serde_json::from_str::<Request>(request) else {
            return Ok(reply);
        };
        let Ok(mut p) = serde_json::from_str::<PredictReply>(&reply) else {
            return Ok(reply);
        };
        let key = format!("{}\0{sample_id}\0{}", self.detector_id, hex::encode(Sha256::digest(request.as_bytes())));
        if p.logits.len() < 2 || !keyed_rng(self.seed, &key, "flip").random_bool(self.flip_rate) {
            return Ok(reply);
        }
        let to = (p.pred + 1) % p.logits.len();
        p.logits.swap(p.pred, to);
        p.pred = to;
        Ok(serde_json::to_string(&p).expect("reply serialization is infallible"))
    }
}

/// Wraps every detector in `set` so that each prediction is class-flipped
/// independently with probability `flip_rate`. Other endpoints pass through.
pub fn corrupt(set: &EndpointSet, flip_rate: f64, seed: u64) -> Result<EndpointSet, SyntheticError> {
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(SyntheticError::FlipRate(flip_rate));
    }
    let entries = set
        .entries
        .iter()
        .map(|(spec, backend)| {
            let wrapped = if spec.category.is_detector() {
                corrupt_backend(Arc::clone(backend), &spec.detector_id, flip_rate, seed)?
            } else {
                Arc::clone(backend)
            };
            Ok((spec.clone(), wrapped))
        })
        .collect::<Result<_, SyntheticError>>()?;
    Ok(EndpointSet { entries })
}

/// Wraps one detector backend the way [`corrupt`] does.
pub fn corrupt_backend(backend: SharedBackend, detector_id: &str, flip_rate: f64, seed: u64) -> Result<SharedBackend, SyntheticError> {
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(SyntheticError::FlipRate(flip_rate));
    }
    Ok(Arc::new(FlipBackend { inner: backend, detector_id: detector_id.to_string(), flip_rate, seed }))
}

/// Answers request lines from `input` with `backend` until EOF.
pub fn serve_lines<R: BufRead, W: Write>(backend: &dyn crate::gateway::Backend, input: R, mut output: W) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let answer = backend.call(line.trim()).unwrap_or_else(|e| error_reply(e.to_string()));
        writeln!(output, "{answer}")?;
        output.flush()?;
    }
    Ok(())
}

/// Per-class gold counts of a planted manifest.
pub fn gold_counts(manifest: &Manifest) -> BTreeMap<BiasClass, usize> {
    let mut counts = BTreeMap::new();
    for s in &manifest.samples {
        if let Some(c) = s.bias_gold {
            *counts.entry(c).or_insert(0) += 1;
        }
    }
    counts
}
