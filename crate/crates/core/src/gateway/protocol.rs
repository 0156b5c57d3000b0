//! Wire payloads shared by every transport. One request is one JSON object;
//! one reply is one JSON object.

use serde::{Deserialize, Serialize};

/// Image field value for an absent image; the adapter substitutes an
/// all-zero tensor.
pub const ZERO_IMAGE: &str = "__ZERO_IMAGE__";
/// Text field value for absent text; the adapter substitutes its padding
/// token sequence.
pub const PAD_TEXT: &str = "__PAD__";

/// Prompt for the image core-entity extractor. `<Image>` marks where the
/// adapter places the image.
pub const CORE_IMAGE_PROMPT: &str = "<Image> Please identify the core entity in this image. Output the corresponding entity region coordinates in the format of [x1, y1, x2, y2], where (x1, y1) denotes the top-left coordinate and (x2, y2) denotes the bottom-right coordinate. Remember to apply coordinate normalization, which means the coordinate range is from 0 to 1.";

/// Prompt for the text core-keyword extractor. `<Text>` is replaced by the
/// sample text.
pub const CORE_TEXT_PROMPT: &str = "Please identify the keyword that can represent the core semantic information of this sentence: <Text>. Output the words in the format of [word1, word2, ..., wordn] if the core semantics is word1, word2, ..., and wordn. Please note that the number of words would not be fixed. It depends on your understanding of the sentence.";

pub fn render_text_prompt(text: &str) -> String {
    CORE_TEXT_PROMPT.replace("<Text>", text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Predict { sample_id: String, image: String, text: String },
    Saliency { sample_id: String, image: String, text: String },
    ExtractCoreImage { image: String },
    ExtractCoreText { text: String },
}

impl Request {
    pub fn op_name(&self) -> &'static str {
        match self {
            Request::Predict { .. } => "predict",
            Request::Saliency { .. } => "saliency",
            Request::ExtractCoreImage { .. } => "extract_core_image",
            Request::ExtractCoreText { .. } => "extract_core_text",
        }
    }

    /// Canonical single-line encoding; this exact string is sent and hashed.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serialization is infallible")
    }
}

/// What a detector sees for one call. `None` fields are sent as sentinels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DetectorInput {
    pub image: Option<String>,
    pub text: Option<String>,
}

impl DetectorInput {
    pub fn new(image: Option<String>, text: Option<String>) -> Self {
        DetectorInput { image, text }
    }

    pub fn image_only(image: impl Into<String>) -> Self {
        DetectorInput { image: Some(image.into()), text: None }
    }

    pub fn text_only(text: impl Into<String>) -> Self {
        DetectorInput { image: None, text: Some(text.into()) }
    }

    /// Both modalities absent.
    pub fn reference() -> Self {
        DetectorInput::default()
    }

    pub fn image_field(&self) -> String {
        self.image.clone().unwrap_or_else(|| ZERO_IMAGE.to_string())
    }

    pub fn text_field(&self) -> String {
        self.text.clone().unwrap_or_else(|| PAD_TEXT.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReply {
    pub pred: usize,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyMode {
    Raw,
    Precomputed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReply {
    pub mode: SaliencyMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attention: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gradient: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
    pub image_tokens: Vec<usize>,
    pub text_tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxReply {
    #[serde(rename = "box")]
    pub entity_box: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordsReply {
    pub keywords: Vec<String>,
}

/// Error reply an adapter may send instead of a payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

/// Region-derived image references. The adapter performs the pixel operation;
/// the engine only names the region.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageRef<'a> {
    Zero,
    Full(&'a str),
    /// Crop of the normalized box.
    Crop(&'a str, [f64; 4]),
    /// The image with the normalized box zeroed out.
    Masked(&'a str, [f64; 4]),
}

fn format_box(b: &[f64; 4]) -> String {
    format!("{},{},{},{}", b[0], b[1], b[2], b[3])
}

pub fn crop_ref(image: &str, entity_box: &[f64; 4]) -> String {
    format!("{image}#crop={}", format_box(entity_box))
}

pub fn masked_ref(image: &str, entity_box: &[f64; 4]) -> String {
    format!("{image}#zero={}", format_box(entity_box))
}

impl<'a> ImageRef<'a> {
    pub fn parse(field: &'a str) -> ImageRef<'a> {
        if field == ZERO_IMAGE {
            return ImageRef::Zero;
        }
        let Some((base, fragment)) = field.rsplit_once('#') else {
            return ImageRef::Full(field);
        };
        let parse_box = |s: &str| -> Option<[f64; 4]> {
            let v: Vec<f64> = s.split(',').map(|p| p.parse().ok()).collect::<Option<_>>()?;
            v.try_into().ok()
        };
        if let Some(b) = fragment.strip_prefix("crop=").and_then(parse_box) {
            ImageRef::Crop(base, b)
        } else if let Some(b) = fragment.strip_prefix("zero=").and_then(parse_box) {
            ImageRef::Masked(base, b)
        } else {
            ImageRef::Full(field)
        }
    }
}
