//! Detector configuration file (TOML).
//!
//! ```toml
//! class_count = 2
//!
//! [retry]
//! attempts = 3
//! base_delay_ms = 200
//!
//! [[endpoint]]
//! detector_id = "clip-probe"
//! category = "image_only"
//! transport = "subprocess-lines"
//! address = "python3 adapter.py --model clip-probe"
//! concurrency_limit = 2
//! ```

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ImageOnly,
    TextOnly,
    ImageText,
    SaliencyProvider,
    ImageExtractor,
    TextExtractor,
}

impl Category {
    pub fn is_detector(self) -> bool {
        matches!(self, Category::ImageOnly | Category::TextOnly | Category::ImageText)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::ImageOnly => "image_only",
            Category::TextOnly => "text_only",
            Category::ImageText => "image_text",
            Category::SaliencyProvider => "saliency_provider",
            Category::ImageExtractor => "image_extractor",
            Category::TextExtractor => "text_extractor",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown category `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransportKind {
    #[serde(rename = "subprocess-lines")]
    SubprocessLines,
    #[serde(rename = "http")]
    Http,
    /// Backend supplied programmatically; not constructible from a file.
    #[serde(rename = "in-process")]
    InProcess,
}

/// One configured detector, saliency provider or extractor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorEndpoint {
    pub detector_id: String,
    pub category: Category,
    pub transport: TransportKind,
    #[serde(default)]
    pub address: String,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
}

fn default_concurrency() -> usize {
    1
}

impl DetectorEndpoint {
    pub fn in_process(detector_id: impl Into<String>, category: Category) -> Self {
        DetectorEndpoint {
            detector_id: detector_id.into(),
            category,
            transport: TransportKind::InProcess,
            address: String::new(),
            concurrency_limit: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay_ms: 200 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base, 2*base, 4*base, ...
    pub fn delay(&self, retry: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << retry.saturating_sub(1).min(16)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default = "default_class_count")]
    pub class_count: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default, rename = "endpoint")]
    pub endpoints: Vec<DetectorEndpoint>,
}

fn default_class_count() -> u32 {
    crate::manifest::DEFAULT_CLASS_COUNT
}

impl DetectorConfig {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Self, GatewayError> {
        let config: DetectorConfig = toml::from_str(raw).map_err(|e| GatewayError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialization is infallible")
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let mut ids = HashSet::new();
        for ep in &self.endpoints {
            if !ids.insert(ep.detector_id.as_str()) {
                return Err(GatewayError::Config(format!("duplicate detector_id `{}`", ep.detector_id)));
            }
            if ep.concurrency_limit == 0 {
                return Err(GatewayError::Config(format!("{}: concurrency_limit must be positive", ep.detector_id)));
            }
            if ep.transport == TransportKind::InProcess {
                return Err(GatewayError::Config(format!(
                    "{}: in-process endpoints cannot be loaded from a file",
                    ep.detector_id
                )));
            }
            if ep.address.trim().is_empty() {
                return Err(GatewayError::Config(format!("{}: empty address", ep.detector_id)));
            }
        }
        if self.class_count < 2 {
            return Err(GatewayError::Config("class_count must be at least 2".into()));
        }
        if self.retry.attempts == 0 {
            return Err(GatewayError::Config("retry.attempts must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[[endpoint]]
detector_id = "clip-probe"
category = "image_only"
transport = "subprocess-lines"
address = "python3 adapter.py"
concurrency_limit = 2

[[endpoint]]
detector_id = "fusion-det"
category = "image_text"
transport = "http"
address = "http://localhost:8080/"
"#;

    #[test]
    fn parses_endpoint_table() {
        let c = DetectorConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.endpoints.len(), 2);
        assert_eq!(c.endpoints[0].category, Category::ImageOnly);
        assert_eq!(c.endpoints[0].transport, TransportKind::SubprocessLines);
        assert_eq!(c.endpoints[1].concurrency_limit, 1);
        assert_eq!(c.retry, RetryPolicy::default());
        assert_eq!(c.class_count, 2);
        assert_eq!(DetectorConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let raw = SAMPLE.replace("\"fusion-det\"", "\"clip-probe\"");
        assert!(DetectorConfig::parse(&raw).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(400));
    }
}
