//! Line-delimited dataset manifest.
//!
//! Each non-empty line is one JSON object:
//!
//! ```text
//! {"id":"a1","image":"img/a1.jpg","text":"cat","label":1,"split":"analysis_test",
//!  "bias_gold":"uni_image","annotations":[{"annotator":"r1","q_uni_image":5,"q_uni_text":1,"q_balance":2}]}
//! ```
//!
//! An optional first line `{"class_count":N}` sets the veracity label space
//! for the whole manifest (binary when omitted).

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AnnotatorRecord, BiasClass, Sample, SampleError};

pub const DEFAULT_CLASS_COUNT: u32 = 2;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading manifest: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: SampleError },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
}

impl ManifestError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ManifestError::Io(_) => None,
            ManifestError::Schema { line, .. }
            | ManifestError::Invalid { line, .. }
            | ManifestError::DuplicateId { line, .. } => Some(*line),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    #[serde(default)]
    image: Option<String>,
    #[serde(default)]
    text: Option<String>,
    label: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias_gold: Option<BiasClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    annotations: Option<Vec<AnnotatorRecord>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    class_count: u32,
}

impl From<Record> for Sample {
    fn from(r: Record) -> Self {
        Sample {
            id: r.id,
            image_ref: r.image,
            text: r.text,
            label: r.label,
            split: r.split,
            annotations: r.annotations,
            bias_gold: r.bias_gold,
        }
    }
}

impl From<&Sample> for Record {
    fn from(s: &Sample) -> Self {
        Record {
            id: s.id.clone(),
            image: s.image_ref.clone(),
            text: s.text.clone(),
            label: s.label,
            split: s.split.clone(),
            bias_gold: s.bias_gold,
            annotations: s.annotations.clone(),
        }
    }
}

/// A parsed manifest plus the records that lenient parsing dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub class_count: u32,
    pub samples: Vec<Sample>,
}

#[derive(Debug)]
pub struct ParseOutcome {
    pub manifest: Manifest,
    /// Malformed records skipped in lenient mode.
    pub skipped: Vec<ManifestError>,
}

impl Manifest {
    pub fn new(samples: Vec<Sample>) -> Self {
        Manifest { class_count: DEFAULT_CLASS_COUNT, samples }
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        if self.class_count != DEFAULT_CLASS_COUNT {
            serde_json::to_writer(&mut out, &Header { class_count: self.class_count })?;
            out.write_all(b"\n")?;
        }
        for s in &self.samples {
            serde_json::to_writer(&mut out, &Record::from(s))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_string_lines(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()
    }
}

/// Parses the manifest at `path`. In strict mode the first malformed record
/// aborts; otherwise malformed records are skipped and reported.
pub fn parse_manifest(path: &Path, strict: bool) -> Result<ParseOutcome, ManifestError> {
    let file = fs::File::open(path)?;
    parse_reader(BufReader::new(file), strict)
}

pub fn parse_str(input: &str, strict: bool) -> Result<ParseOutcome, ManifestError> {
    parse_reader(input.as_bytes(), strict)
}

pub fn parse_reader<R: BufRead>(reader: R, strict: bool) -> Result<ParseOutcome, ManifestError> {
    let mut class_count = DEFAULT_CLASS_COUNT;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    let mut ids = HashSet::new();
    let mut first_record = true;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if first_record {
            first_record = false;
            if let Ok(header) = serde_json::from_str::<Header>(trimmed) {
                if header.class_count == 0 {
                    return Err(ManifestError::Schema { line: line_no, message: "class_count must be positive".into() });
                }
                class_count = header.class_count;
                continue;
            }
        }

        let parsed = parse_line(trimmed, line_no, class_count).and_then(|sample| {
            if ids.contains(&sample.id) {
                Err(ManifestError::DuplicateId { line: line_no, id: sample.id })
            } else {
                Ok(sample)
            }
        });
        match parsed {
            Ok(sample) => {
                ids.insert(sample.id.clone());
                samples.push(sample);
            }
            Err(e) if strict => return Err(e),
            Err(e) => {
                log::warn!("skipping manifest record: {e}");
                skipped.push(e);
            }
        }
    }

    Ok(ParseOutcome { manifest: Manifest { class_count, samples }, skipped })
}

fn parse_line(line: &str, line_no: usize, class_count: u32) -> Result<Sample, ManifestError> {
    let record: Record =
        serde_json::from_str(line).map_err(|e| ManifestError::Schema { line: line_no, message: e.to_string() })?;
    let sample = Sample::from(record);
    sample.validate(class_count).map_err(|source| ManifestError::Invalid { line: line_no, source })?;
    Ok(sample)
}
