//! Modality causal effect.
//!
//! The output is modelled as a tanh-sum over five branches: irrelevant
//! visual content (C), core entity (E), core words (W), irrelevant words (R)
//! and the fusion of E and W (F). Direct effects of C, E, W and R and the
//! indirect effect through F are obtained by swapping factual branch outputs
//! for reference ones (zero image / padded text), and the largest effect
//! names the bias type.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::protocol::{crop_ref, masked_ref};
use crate::gateway::{Category, DetectorInput, DetectorResponse, Gateway, GatewayError};
use crate::model::{BiasClass, BiasVerdict, Sample, ScoreDetail, View};
use crate::text;

/// Agreement required between the closed-form and full fuse-difference
/// effects, relative to the magnitude of the terms involved (absolute when
/// all terms are within [-1, 1]).
pub const ALGEBRA_TOLERANCE: f64 = 1e-12;

/// The five branch outputs in one world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOutputs {
    pub c: f64,
    pub e: f64,
    pub f: f64,
    pub w: f64,
    pub r: f64,
}

/// tanh(O_c) + tanh(O_e) + O_f + tanh(O_w) + tanh(O_r); the fusion branch
/// enters linearly.
pub fn fuse(o: &BranchOutputs) -> f64 {
    o.c.tanh() + o.e.tanh() + o.f + o.w.tanh() + o.r.tanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalBranchSet {
    pub o_c: f64,
    pub o_e: f64,
    pub o_w: f64,
    pub o_r: f64,
    pub o_f: f64,
    pub o_f_ref: f64,
    pub o_c_ref: f64,
    pub o_e_ref: f64,
    pub o_w_ref: f64,
    pub o_r_ref: f64,
}

impl CausalBranchSet {
    fn values(&self) -> [f64; 10] {
        [self.o_c, self.o_e, self.o_w, self.o_r, self.o_f, self.o_f_ref, self.o_c_ref, self.o_e_ref, self.o_w_ref, self.o_r_ref]
    }

    /// All branches at their reference values.
    pub fn reference(&self) -> BranchOutputs {
        BranchOutputs { c: self.o_c_ref, e: self.o_e_ref, f: self.o_f_ref, w: self.o_w_ref, r: self.o_r_ref }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CausalEffects {
    pub nde_c: f64,
    pub nde_e: f64,
    pub nde_w: f64,
    pub nde_r: f64,
    /// Indirect effect through the fusion branch, shared by E and W.
    pub tie_balance: f64,
    pub te_w: f64,
    pub te_e: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CausalError {
    #[error("non-finite branch output")]
    NonFinite,
    #[error("{effect}: closed form {closed} disagrees with fuse difference {full}")]
    AlgebraMismatch { effect: &'static str, closed: f64, full: f64 },
}

/// Effects from the reduced closed forms.
pub fn closed_form_effects(b: &CausalBranchSet) -> CausalEffects {
    let nde_w = b.o_w.tanh() - b.o_w_ref.tanh();
    let nde_e = b.o_e.tanh() - b.o_e_ref.tanh();
    let tie_balance = b.o_f - b.o_f_ref;
    CausalEffects {
        nde_c: b.o_c.tanh() - b.o_c_ref.tanh(),
        nde_e,
        nde_w,
        nde_r: b.o_r.tanh() - b.o_r_ref.tanh(),
        tie_balance,
        te_w: nde_w + tie_balance,
        te_e: nde_e + tie_balance,
    }
}

/// Effects as differences of fused outputs between counterfactual worlds,
/// with every other branch held at its reference value.
pub fn fused_difference_effects(b: &CausalBranchSet) -> CausalEffects {
    let base = b.reference();
    let o_ref = fuse(&base);
    let direct = |world: BranchOutputs| fuse(&world) - o_ref;

    let w_direct = BranchOutputs { w: b.o_w, ..base };
    let w_total = BranchOutputs { f: b.o_f, ..w_direct };
    let e_direct = BranchOutputs { e: b.o_e, ..base };
    let e_total = BranchOutputs { f: b.o_f, ..e_direct };

    CausalEffects {
        nde_c: direct(BranchOutputs { c: b.o_c, ..base }),
        nde_e: direct(e_direct),
        nde_w: direct(w_direct),
        nde_r: direct(BranchOutputs { r: b.o_r, ..base }),
        // O_{w,f} - O_{w,f*}
        tie_balance: fuse(&w_total) - fuse(&w_direct),
        te_w: fuse(&w_total) - o_ref,
        te_e: fuse(&e_total) - o_ref,
    }
}

/// Closed-form effects, cross-checked against the fused differences.
pub fn compute_effects(b: &CausalBranchSet) -> Result<CausalEffects, CausalError> {
    if b.values().iter().any(|v| !v.is_finite()) {
        return Err(CausalError::NonFinite);
    }
    let closed = closed_form_effects(b);
    let full = fused_difference_effects(b);
    let scale = b.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = ALGEBRA_TOLERANCE * scale;
    let pairs = [
        ("nde_c", closed.nde_c, full.nde_c),
        ("nde_e", closed.nde_e, full.nde_e),
        ("nde_w", closed.nde_w, full.nde_w),
        ("nde_r", closed.nde_r, full.nde_r),
        ("tie_balance", closed.tie_balance, full.tie_balance),
        ("te_w", closed.te_w, full.te_w),
        ("te_e", closed.te_e, full.te_e),
    ];
    for (effect, c, f) in pairs {
        if (c - f).abs() > tol {
            return Err(CausalError::AlgebraMismatch { effect, closed: c, full: f });
        }
    }
    Ok(closed)
}

/// Bias class of the path with the largest effect. Balance wins any tie it
/// is part of; otherwise image paths precede text paths.
pub fn classify_causal_class(effects: &CausalEffects) -> BiasClass {
    let image = effects.nde_c.max(effects.nde_e);
    let text = effects.nde_w.max(effects.nde_r);
    let balance = effects.tie_balance;
    let top = image.max(text).max(balance);
    if balance == top {
        BiasClass::ModalityBalance
    } else if image == top {
        BiasClass::UniImage
    } else {
        BiasClass::UniText
    }
}

pub fn causal_detail(e: &CausalEffects) -> ScoreDetail {
    ScoreDetail::Causal {
        nde_c: e.nde_c,
        nde_e: e.nde_e,
        nde_w: e.nde_w,
        nde_r: e.nde_r,
        tie_balance: e.tie_balance,
        te_w: e.te_w,
        te_e: e.te_e,
    }
}

pub fn classify_causal(effects: &CausalEffects) -> BiasVerdict {
    BiasVerdict::new(classify_causal_class(effects), View::Causal, false, causal_detail(effects))
        .expect("causal detail matches causal view")
}

/// Which logit of each branch's output vector becomes the branch scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalarization {
    /// The sample's veracity label.
    #[default]
    GroundTruth,
    /// The class predicted by the image-text detector on the factual core inputs.
    Predicted,
}

/// Detector inputs for every branch, derived from the extracted core
/// information.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchInputs {
    pub entity: DetectorInput,
    pub context: DetectorInput,
    pub core_words: DetectorInput,
    pub remainder: DetectorInput,
    pub fusion: DetectorInput,
}

pub fn branch_inputs(image: &str, text: &str, core: &crate::gateway::CoreInfo) -> BranchInputs {
    let entity = crop_ref(image, &core.entity_box);
    let context = masked_ref(image, &core.entity_box);
    let words = core.keywords.join(" ");
    let rest = text::remove_phrases(text, &core.keywords);
    BranchInputs {
        entity: DetectorInput::image_only(entity.clone()),
        context: DetectorInput::image_only(context),
        core_words: DetectorInput::text_only(words.clone()),
        remainder: DetectorInput::new(None, (!rest.is_empty()).then_some(rest)),
        fusion: DetectorInput::new(Some(entity), Some(words)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalOutcome {
    pub verdict: BiasVerdict,
    pub branches: CausalBranchSet,
    pub effects: CausalEffects,
}

#[derive(Debug, Error)]
pub enum CausalRunError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error("sample {0} lacks an image or text")]
    MissingModality(String),
    #[error("scalarization class {0} outside logits")]
    ClassOutOfRange(usize),
}

pub fn run_causal(sample: &Sample, gateway: &Gateway, scalarization: Scalarization) -> Result<CausalOutcome, CausalRunError> {
    let (Some(image), Some(text)) = (&sample.image_ref, &sample.text) else {
        return Err(CausalRunError::MissingModality(sample.id.clone()));
    };
    let image_extractor = gateway.first(Category::ImageExtractor)?;
    let text_extractor = gateway.first(Category::TextExtractor)?;
    let core = gateway.extract_core(&image_extractor, &text_extractor, sample)?;
    let inputs = branch_inputs(image, text, &core);
    let id = sample.id.as_str();
    let reference = DetectorInput::reference();

    let ask = |category, input: &DetectorInput| gateway.predict_group_input(category, id, input);
    let o_e = ask(Category::ImageOnly, &inputs.entity)?;
    let o_c = ask(Category::ImageOnly, &inputs.context)?;
    let image_ref = ask(Category::ImageOnly, &reference)?;
    let o_w = ask(Category::TextOnly, &inputs.core_words)?;
    let o_r = ask(Category::TextOnly, &inputs.remainder)?;
    let text_ref = ask(Category::TextOnly, &reference)?;
    let o_f = ask(Category::ImageText, &inputs.fusion)?;
    let o_f_ref = ask(Category::ImageText, &reference)?;

    let class = match scalarization {
        Scalarization::GroundTruth => sample.label as usize,
        Scalarization::Predicted => o_f.pred,
    };
    let scalar = |r: &DetectorResponse| r.logits.get(class).copied().ok_or(CausalRunError::ClassOutOfRange(class));
    let branches = CausalBranchSet {
        o_c: scalar(&o_c)?,
        o_e: scalar(&o_e)?,
        o_w: scalar(&o_w)?,
        o_r: scalar(&o_r)?,
        o_f: scalar(&o_f)?,
        o_f_ref: scalar(&o_f_ref)?,
        o_c_ref: scalar(&image_ref)?,
        o_e_ref: scalar(&image_ref)?,
        o_w_ref: scalar(&text_ref)?,
        o_r_ref: scalar(&text_ref)?,
    };
    let effects = compute_effects(&branches)?;
    Ok(CausalOutcome { verdict: classify_causal(&effects), branches, effects })
}
