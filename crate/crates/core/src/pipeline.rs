//! End-to-end runs: analyze a manifest, report against gold, clean and
//! calibrate.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benefit::run_benefit;
use crate::causal::{run_causal, Scalarization};
use crate::ensemble::{compute_priors, vote, VoteConfig, VoteError};
use crate::evaluation::{
    aggregate_annotations, category_report_with, krippendorff_alpha, per_class_alpha, record_class, render_csv,
    venn_counts, AgreementTable, CategoryReport, EvalError, F1Average,
};
use crate::flow::{calibrate_epsilon, run_flow, scores_from_detail, Calibration, FlowConfig, FlowError};
use crate::gateway::{
    Category, DetectorConfig, DetectorEndpoint, Gateway, GatewayError, ResponseCache, RetryPolicy, TransportKind,
};
use crate::manifest::{parse_manifest, Manifest, ManifestError};
use crate::model::{BiasClass, BiasVerdict, Sample, View};
use crate::synthetic::{make_planted_dataset, SyntheticError, PLANTED_CLASS_COUNT, PLANTED_ENDPOINTS};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const CACHE_DIR_ENV: &str = "MODBIAS_CACHE_DIR";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Results { path: PathBuf, line: usize, message: String },
    #[error("no gold labels in manifest")]
    NoGold,
    #[error("no ensemble verdicts in results")]
    MissingEnsemble,
    #[error("no labeled samples with flow scores")]
    NoLabeled,
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
}

impl PipelineError {
    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Manifest(_)
            | PipelineError::Vote(_)
            | PipelineError::Synthetic(_)
            | PipelineError::Flow(FlowError::EpsilonOutOfRange(_) | FlowError::EmptyGrid) => 2,
            PipelineError::Gateway(e) if !e.is_transport() => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Result of one view on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewOutcome {
    Verdict(BiasVerdict),
    Unavailable(String),
}

impl ViewOutcome {
    pub fn verdict(&self) -> Option<&BiasVerdict> {
        match self {
            ViewOutcome::Verdict(v) => Some(v),
            ViewOutcome::Unavailable(_) => None,
        }
    }
}

/// One line of the results file. Views that were not run are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benefit: Option<ViewOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flow: Option<ViewOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub causal: Option<ViewOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<BiasVerdict>,
}

impl SampleResult {
    pub fn outcome(&self, view: View) -> Option<&ViewOutcome> {
        match view {
            View::Benefit => self.benefit.as_ref(),
            View::Flow => self.flow.as_ref(),
            View::Causal => self.causal.as_ref(),
            View::Ensemble => None,
        }
    }

    pub fn verdict(&self, view: View) -> Option<&BiasVerdict> {
        match view {
            View::Ensemble => self.ensemble.as_ref(),
            v => self.outcome(v).and_then(ViewOutcome::verdict),
        }
    }

    /// Views that ran and failed.
    pub fn unavailable(&self) -> usize {
        View::SINGLE.iter().filter(|&&v| matches!(self.outcome(v), Some(ViewOutcome::Unavailable(_)))).count()
    }

    fn check(&self) -> Result<(), String> {
        if self.ensemble.is_some() && View::SINGLE.iter().any(|&v| self.verdict(v).is_none()) {
            return Err(format!("{}: ensemble without all three view verdicts", self.id));
        }
        for v in [View::Benefit, View::Flow, View::Causal, View::Ensemble] {
            if let Some(verdict) = self.verdict(v) {
                if verdict.view != v {
                    return Err(format!("{}: {} verdict stored under {v}", self.id, verdict.view));
                }
            }
        }
        Ok(())
    }
}

/// Wall-clock milliseconds per view, kept out of the results payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTiming {
    pub id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub views_ms: BTreeMap<View, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    /// Subset of the three single views.
    pub views: BTreeSet<View>,
    pub vote: VoteConfig,
    /// Fixed tie-break priors; pooled view predictions when `None`.
    pub priors: Option<[u64; 3]>,
    pub flow: FlowConfig,
    pub scalarization: Scalarization,
    /// Worker threads; 0 means available parallelism.
    pub workers: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            views: View::SINGLE.into_iter().collect(),
            vote: VoteConfig::default(),
            priors: None,
            flow: FlowConfig::default(),
            scalarization: Scalarization::default(),
            workers: 0,
        }
    }
}

impl AnalysisOptions {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.views.is_empty() {
            return Err(PipelineError::Config("at least one view must be selected".into()));
        }
        if self.views.contains(&View::Ensemble) {
            return Err(PipelineError::Config("the ensemble is not a selectable view".into()));
        }
        self.vote.validate()?;
        FlowConfig::new(self.flow.epsilon, self.flow.aggregation)?;
        Ok(())
    }

    pub fn ensembles(&self) -> bool {
        View::SINGLE.iter().all(|v| self.views.contains(v))
    }
}

/// `"benefit,flow"` → view set.
pub fn parse_views(raw: &str) -> Result<BTreeSet<View>, PipelineError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<View>().map_err(PipelineError::Config))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub results: Vec<SampleResult>,
    pub timings: Vec<SampleTiming>,
    /// Priors the ensemble used, if it ran.
    pub priors: Option<[u64; 3]>,
}

impl Analysis {
    pub fn unavailable(&self) -> usize {
        self.results.iter().map(SampleResult::unavailable).sum()
    }

    /// Samples for which every selected view failed.
    pub fn failed_samples(&self) -> usize {
        self.results
            .iter()
            .filter(|r| View::SINGLE.iter().all(|&v| r.verdict(v).is_none()) && r.unavailable() > 0)
            .count()
    }
}

fn run_view(view: View, sample: &Sample, gateway: &Gateway, options: &AnalysisOptions) -> ViewOutcome {
    let outcome = match view {
        View::Benefit => run_benefit(sample, gateway).map_err(|e| e.to_string()),
        View::Flow => run_flow(sample, gateway, &options.flow).map(|o| o.verdict).map_err(|e| e.to_string()),
        View::Causal => {
            run_causal(sample, gateway, options.scalarization).map(|o| o.verdict).map_err(|e| e.to_string())
        }
        View::Ensemble => unreachable!("not a single view"),
    };
    match outcome {
        Ok(v) => ViewOutcome::Verdict(v),
        Err(e) => {
            log::warn!("{}: {view} view unavailable: {e}", sample.id);
            ViewOutcome::Unavailable(e)
        }
    }
}

/// Runs the selected views over `samples`, then ensembles samples where all
/// three views succeeded. Results are in input order.
pub fn analyze_samples(samples: &[Sample], gateway: &Gateway, options: &AnalysisOptions) -> Result<Analysis, PipelineError> {
    options.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?;

    let first: Vec<(SampleResult, SampleTiming)> = pool.install(|| {
        samples
            .par_iter()
            .map(|sample| {
                let mut result =
                    SampleResult { id: sample.id.clone(), benefit: None, flow: None, causal: None, ensemble: None };
                let mut timing = SampleTiming { id: sample.id.clone(), views_ms: BTreeMap::new() };
                for &view in &options.views {
                    let start = Instant::now();
                    let outcome = run_view(view, sample, gateway, options);
                    timing.views_ms.insert(view, start.elapsed().as_secs_f64() * 1e3);
                    match view {
                        View::Benefit => result.benefit = Some(outcome),
                        View::Flow => result.flow = Some(outcome),
                        _ => result.causal = Some(outcome),
                    }
                }
                (result, timing)
            })
            .collect()
    });
    let (mut results, timings): (Vec<_>, Vec<_>) = first.into_iter().unzip();

    let mut priors = None;
    if options.ensembles() {
        let pooled: Vec<BiasClass> =
            results.iter().flat_map(|r| View::SINGLE.map(|v| r.verdict(v).map(|x| x.class))).flatten().collect();
        let counts = match options.priors {
            Some(p) => Some(p),
            None => compute_priors(&pooled).ok(),
        };
        if let Some(counts) = counts {
            let config = options.vote.clone().with_priors(counts);
            for r in &mut results {
                let ballots: Option<Vec<BiasVerdict>> = View::SINGLE.iter().map(|&v| r.verdict(v).cloned()).collect();
                if let Some(ballots) = ballots {
                    r.ensemble = Some(vote(&ballots, &config, &r.id)?);
                }
            }
            priors = Some(counts);
        }
    }
    Ok(Analysis { results, timings, priors })
}

pub fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), PipelineError> {
    let mut out = io::BufWriter::new(fs::File::create(path).map_err(io_err(path))?);
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| io_err(path)(e.into()))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_results(path: &Path) -> Result<Vec<SampleResult>, PipelineError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PipelineError::Results { path: path.to_path_buf(), line: i + 1, message };
        let row: SampleResult = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        row.check().map_err(bad)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Everything `analyze` needs from the command line.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub detectors: PathBuf,
    pub options: AnalysisOptions,
    /// Falls back to `MODBIAS_CACHE_DIR`; an in-memory cache otherwise.
    pub cache_dir: Option<PathBuf>,
    pub out: PathBuf,
    /// Only analyze samples with this split tag.
    pub split: Option<String>,
    /// Abort on the first malformed manifest record.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeSummary {
    pub samples: usize,
    pub unavailable: usize,
    pub failed_samples: usize,
    pub skipped_records: usize,
    pub results_path: PathBuf,
}

impl AnalyzeSummary {
    /// 0 when every selected view produced a verdict for every sample.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.unavailable > 0)
    }
}

pub fn open_cache(dir: Option<&Path>) -> Result<ResponseCache, PipelineError> {
    let dir = dir.map(Path::to_path_buf).or_else(|| std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from));
    match dir {
        Some(d) => ResponseCache::directory(&d).map_err(io_err(&d)),
        None => Ok(ResponseCache::memory()),
    }
}

fn load_manifest(path: &Path, strict: bool) -> Result<(Manifest, usize), PipelineError> {
    let outcome = parse_manifest(path, strict)?;
    for e in &outcome.skipped {
        log::warn!("{}: skipped record: {e}", path.display());
    }
    Ok((outcome.manifest, outcome.skipped.len()))
}

/// Writes `<out>/results.jsonl` (byte-stable for a warm cache) and
/// `<out>/timings.jsonl`.
pub fn write_analysis(out: &Path, analysis: &Analysis) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let results_path = out.join(RESULTS_FILE);
    write_lines(&results_path, &analysis.results)?;
    write_lines(&out.join(TIMINGS_FILE), &analysis.timings)?;
    Ok(results_path)
}

pub fn analyze(config: &RunConfig) -> Result<AnalyzeSummary, PipelineError> {
    config.options.validate()?;
    let (manifest, skipped_records) = load_manifest(&config.manifest, config.strict)?;
    let cache = open_cache(config.cache_dir.as_deref())?;
    let gateway = Gateway::load(&config.detectors, cache)?;
    if gateway.class_count() != manifest.class_count {
        return Err(PipelineError::Config(format!(
            "detectors declare {} classes, manifest {}",
            gateway.class_count(),
            manifest.class_count
        )));
    }
    let samples: Vec<Sample> = match &config.split {
        Some(split) => manifest.samples.into_iter().filter(|s| s.split.as_deref() == Some(split.as_str())).collect(),
        None => manifest.samples,
    };
    let analysis = analyze_samples(&samples, &gateway, &config.options)?;
    let results_path = write_analysis(&config.out, &analysis)?;
    Ok(AnalyzeSummary {
        samples: samples.len(),
        unavailable: analysis.unavailable(),
        failed_samples: analysis.failed_samples(),
        skipped_records,
        results_path,
    })
}

/// Gold class per sample: `bias_gold`, else the aggregate of its three
/// annotator records.
pub fn gold_labels(manifest: &Manifest) -> BTreeMap<String, BiasClass> {
    manifest
        .samples
        .iter()
        .filter_map(|s| {
            let gold = s.bias_gold.or_else(|| s.annotations.as_deref().and_then(|a| aggregate_annotations(a).ok()))?;
            Some((s.id.clone(), gold))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSummary {
    pub annotators: usize,
    pub units: usize,
    pub overall: f64,
    /// One-vs-rest, in ordinal order.
    pub per_class: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub methods: Vec<(String, CategoryReport)>,
    pub agreement: AgreementTable,
    /// Samples left out of the agreement table for missing view verdicts.
    pub agreement_skipped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaSummary>,
}

impl Report {
    pub fn table_csv(&self) -> String {
        render_csv(self.methods.iter().map(|(m, r)| (m.as_str(), r)))
    }

    pub fn method(&self, name: &str) -> Option<&CategoryReport> {
        self.methods.iter().find(|(m, _)| m == name).map(|(_, r)| r)
    }
}

fn annotator_alpha(manifest: &Manifest) -> Option<AlphaSummary> {
    let annotated: Vec<&Sample> = manifest.samples.iter().filter(|s| s.annotations.is_some()).collect();
    let ids: BTreeSet<&str> =
        annotated.iter().flat_map(|s| s.annotations.iter().flatten().map(|r| r.annotator_id.as_str())).collect();
    let labels: Vec<Vec<Option<BiasClass>>> = ids
        .iter()
        .map(|id| {
            annotated
                .iter()
                .map(|s| s.annotations.iter().flatten().find(|r| r.annotator_id == *id).map(record_class))
                .collect()
        })
        .collect();
    let overall = krippendorff_alpha(&labels).ok()?;
    Some(AlphaSummary {
        annotators: ids.len(),
        units: annotated.len(),
        overall,
        per_class: BiasClass::ALL.map(|c| per_class_alpha(&labels, c).ok()),
    })
}

/// One proportion[accuracy] row per method that has verdicts on gold
/// samples, plus the view-agreement table.
pub fn report(results: &[SampleResult], manifest: &Manifest, average: F1Average) -> Result<Report, PipelineError> {
    let gold = gold_labels(manifest);
    if gold.is_empty() {
        return Err(PipelineError::NoGold);
    }
    let mut methods = Vec::new();
    for view in [View::Benefit, View::Flow, View::Causal, View::Ensemble] {
        let pred: BTreeMap<String, BiasClass> = results
            .iter()
            .filter(|r| gold.contains_key(&r.id))
            .filter_map(|r| Some((r.id.clone(), r.verdict(view)?.class)))
            .collect();
        if pred.is_empty() {
            continue;
        }
        let gold_subset: BTreeMap<String, BiasClass> = pred.keys().map(|k| (k.clone(), gold[k])).collect();
        methods.push((view.name().to_string(), category_report_with(&pred, &gold_subset, average)?));
    }
    let triples: Vec<[Option<BiasClass>; 3]> =
        results.iter().map(|r| View::SINGLE.map(|v| r.verdict(v).map(|x| x.class))).collect();
    let complete: Vec<[Option<BiasClass>; 3]> = triples.iter().copied().filter(|t| t.iter().all(Option::is_some)).collect();
    let agreement = venn_counts(&complete)?;
    Ok(Report {
        methods,
        agreement,
        agreement_skipped: triples.len() - complete.len(),
        alpha: annotator_alpha(manifest),
    })
}

/// Writes `report.csv`, `venn.csv` and `report.json` under `out`.
pub fn write_report(out: &Path, report: &Report) -> Result<(), PipelineError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let write = |name: &str, body: String| {
        let p = out.join(name);
        fs::write(&p, body).map_err(io_err(&p))
    };
    write("report.csv", report.table_csv())?;
    write("venn.csv", report.agreement.to_csv())?;
    write("report.json", serde_json::to_string_pretty(report).expect("report serializes") + "\n")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanSummary {
    pub kept: usize,
    /// Manifest samples without an ensemble verdict.
    pub without_ensemble: usize,
}

/// Keeps samples whose ensemble verdict is balance; `require_unanimous`
/// also demands balance from every view. Manifest order is preserved.
pub fn clean(
    results: &[SampleResult],
    manifest: &Manifest,
    require_unanimous: bool,
) -> Result<(Manifest, CleanSummary), PipelineError> {
    let by_id: BTreeMap<&str, &SampleResult> = results.iter().map(|r| (r.id.as_str(), r)).collect();
    if !results.iter().any(|r| r.ensemble.is_some()) {
        return Err(PipelineError::MissingEnsemble);
    }
    let mut without_ensemble = 0;
    let keep = |s: &Sample| -> bool {
        let Some(r) = by_id.get(s.id.as_str()) else { return false };
        let is_mb = |v: View| r.verdict(v).map(|x| x.class) == Some(BiasClass::ModalityBalance);
        is_mb(View::Ensemble) && (!require_unanimous || View::SINGLE.iter().all(|&v| is_mb(v)))
    };
    let mut samples = Vec::new();
    for s in &manifest.samples {
        if by_id.get(s.id.as_str()).is_none_or(|r| r.ensemble.is_none()) {
            without_ensemble += 1;
        }
        if keep(s) {
            samples.push(s.clone());
        }
    }
    if samples.is_empty() {
        log::warn!("cleaning kept no samples");
    }
    let kept = samples.len();
    Ok((Manifest { class_count: manifest.class_count, samples }, CleanSummary { kept, without_ensemble }))
}

/// Chooses the flow threshold over `grid` using the retained flow scores of
/// gold-labeled samples.
pub fn calibrate(results: &[SampleResult], manifest: &Manifest, grid: &[f64]) -> Result<Calibration, PipelineError> {
    let gold = gold_labels(manifest);
    let labeled: Vec<_> = results
        .iter()
        .filter_map(|r| {
            let flows = scores_from_detail(&r.verdict(View::Flow)?.detail)?;
            Some((flows, *gold.get(&r.id)?))
        })
        .collect();
    if labeled.is_empty() {
        return Err(PipelineError::NoLabeled);
    }
    Ok(calibrate_epsilon(&labeled, grid)?)
}

/// Parses a comma-separated threshold grid.
pub fn parse_grid(raw: &str) -> Result<Vec<f64>, PipelineError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| PipelineError::Config(format!("grid value `{s}`: {e}"))))
        .collect()
}

/// Parses `ui=0.3,mb=0.4,ut=0.3` (class names or abbreviations).
pub fn parse_mix(raw: &str) -> Result<Vec<(BiasClass, f64)>, PipelineError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|part| {
            let (name, share) =
                part.split_once('=').ok_or_else(|| PipelineError::Config(format!("mix entry `{part}` needs class=share")))?;
            let class = name.trim().parse::<BiasClass>().map_err(|e| PipelineError::Config(e.to_string()))?;
            let share = share.trim().parse::<f64>().map_err(|e| PipelineError::Config(format!("share `{share}`: {e}")))?;
            Ok((class, share))
        })
        .collect()
}

/// Prediction flips applied to one detector category of a planted run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    pub category: Category,
    pub flip_rate: f64,
    pub seed: u64,
}

/// Generates a planted dataset and analyzes it with in-process mock
/// detectors.
pub fn run_planted(
    n: usize,
    mix: &[(BiasClass, f64)],
    seed: u64,
    options: &AnalysisOptions,
    corruption: Option<Corruption>,
) -> Result<(Manifest, Analysis), PipelineError> {
    let (manifest, mut endpoints) = make_planted_dataset(n, mix, seed)?;
    if let Some(c) = corruption {
        endpoints = endpoints.corrupt_category(c.category, c.flip_rate, c.seed)?;
    }
    let gateway = endpoints.gateway(ResponseCache::memory())?;
    let analysis = analyze_samples(&manifest.samples, &gateway, options)?;
    Ok((manifest, analysis))
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

/// Detector file serving a planted manifest through `<exe> mock-serve`.
pub fn planted_detector_config(exe: &Path, manifest: &Path, seed: u64, corruption: Option<Corruption>) -> DetectorConfig {
    let endpoints = PLANTED_ENDPOINTS
        .iter()
        .map(|&(id, category)| {
            let mut address = format!(
                "{} mock-serve --manifest {} --seed {seed} --category {category} --detector-id {id}",
                shell_quote(&exe.to_string_lossy()),
                shell_quote(&manifest.to_string_lossy()),
            );
            if let Some(c) = corruption.filter(|c| c.category == category) {
                address.push_str(&format!(" --flip-rate {} --flip-seed {}", c.flip_rate, c.seed));
            }
            DetectorEndpoint {
                detector_id: id.to_string(),
                category,
                transport: TransportKind::SubprocessLines,
                address,
                concurrency_limit: 4,
            }
        })
        .collect();
    DetectorConfig { class_count: PLANTED_CLASS_COUNT, retry: RetryPolicy::default(), endpoints }
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub n: usize,
    pub mix: Vec<(BiasClass, f64)>,
    pub seed: u64,
    pub out: PathBuf,
    pub options: AnalysisOptions,
    pub corruption: Option<Corruption>,
    /// When set, also writes a `detectors.toml` that serves the planted
    /// manifest through this executable.
    pub serve_exe: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct MockOutcome {
    pub manifest: Manifest,
    pub analysis: Analysis,
    pub report: Report,
}

/// Planted run written to disk: `manifest.jsonl`, results, timings and
/// report files, plus `detectors.toml` when `serve_exe` is set.
pub fn mock(config: &MockConfig) -> Result<MockOutcome, PipelineError> {
    config.options.validate()?;
    let (manifest, analysis) = run_planted(config.n, &config.mix, config.seed, &config.options, config.corruption)?;
    fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    let manifest_path = config.out.join("manifest.jsonl");
    manifest.save(&manifest_path).map_err(io_err(&manifest_path))?;
    if let Some(exe) = &config.serve_exe {
        let absolute = fs::canonicalize(&manifest_path).map_err(io_err(&manifest_path))?;
        let toml = planted_detector_config(exe, &absolute, config.seed, config.corruption).to_toml();
        let p = config.out.join("detectors.toml");
        fs::write(&p, toml).map_err(io_err(&p))?;
    }
    write_analysis(&config.out, &analysis)?;
    let rep = report(&analysis.results, &manifest, F1Average::Macro)?;
    write_report(&config.out, &rep)?;
    Ok(MockOutcome { manifest, analysis, report: rep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ScoreDetail;

    fn planted(n: usize, mix: &[(BiasClass, f64)], seed: u64) -> (Manifest, Gateway) {
        let (m, set) = make_planted_dataset(n, mix, seed).unwrap();
        (m, set.gateway(ResponseCache::memory()).unwrap())
    }

    #[test]
    fn balanced_dataset_all_views() {
        let (m, gw) = planted(100, &[(BiasClass::ModalityBalance, 1.0)], 1);
        let a = analyze_samples(&m.samples, &gw, &AnalysisOptions::default()).unwrap();
        assert_eq!(a.results.len(), 100);
        assert!(a.results.iter().all(|r| r.ensemble.as_ref().unwrap().class == BiasClass::ModalityBalance));
        assert_eq!(a.priors, Some([0, 300, 0]));
        assert_eq!(a.unavailable(), 0);
    }

    #[test]
    fn single_view_has_no_ensemble() {
        let (m, gw) = planted(5, &[(BiasClass::UniImage, 1.0)], 1);
        let options = AnalysisOptions { views: [View::Flow].into(), ..Default::default() };
        let a = analyze_samples(&m.samples, &gw, &options).unwrap();
        for r in &a.results {
            assert!(r.ensemble.is_none() && r.benefit.is_none());
            let line = serde_json::to_string(r).unwrap();
            assert!(!line.contains("ensemble"));
        }
    }

    #[test]
    fn options_validation() {
        let empty = AnalysisOptions { views: BTreeSet::new(), ..Default::default() };
        assert_eq!(empty.validate().unwrap_err().exit_code(), 2);
        let ens = AnalysisOptions { views: [View::Ensemble].into(), ..Default::default() };
        assert!(ens.validate().is_err());
        assert_eq!(parse_views("benefit, causal").unwrap(), [View::Benefit, View::Causal].into());
        assert!(parse_views("benefit,vibes").is_err());
    }

    #[test]
    fn partial_failure_isolated() {
        let (m, gw) = planted(4, &[(BiasClass::UniText, 1.0)], 2);
        let mut samples = m.samples.clone();
        // a text the extractor never saw breaks the causal view only
        samples[1].text = Some("unseen words entirely here today".into());
        let a = analyze_samples(&samples, &gw, &AnalysisOptions::default()).unwrap();
        let r = &a.results[1];
        assert!(matches!(r.causal, Some(ViewOutcome::Unavailable(_))));
        assert!(r.ensemble.is_none());
        assert!(a.results[0].ensemble.is_some());
        assert_eq!(a.failed_samples(), 0);
        assert!(a.unavailable() >= 1);
    }

    #[test]
    fn report_and_clean() {
        let mix = [(BiasClass::UniImage, 0.25), (BiasClass::ModalityBalance, 0.5), (BiasClass::UniText, 0.25)];
        let (m, gw) = planted(40, &mix, 3);
        let a = analyze_samples(&m.samples, &gw, &AnalysisOptions::default()).unwrap();
        let rep = report(&a.results, &m, F1Average::Macro).unwrap();
        assert_eq!(rep.methods.len(), 4);
        for (_, r) in &rep.methods {
            assert_eq!(r.overall_accuracy, 100.0);
        }
        assert!(rep.table_csv().lines().nth(4).unwrap().starts_with("ensemble,0.25[100.00],0.50[100.00]"));

        let (cleaned, summary) = clean(&a.results, &m, false).unwrap();
        assert_eq!(summary.kept, 20);
        assert!(cleaned.samples.iter().all(|s| s.bias_gold == Some(BiasClass::ModalityBalance)));
        let (strict, _) = clean(&a.results, &m, true).unwrap();
        assert!(strict.samples.iter().all(|s| cleaned.samples.contains(s)));

        let no_gold = Manifest::new(m.samples.iter().cloned().map(|mut s| {
            s.bias_gold = None;
            s
        }).collect());
        assert!(matches!(report(&a.results, &no_gold, F1Average::Macro), Err(PipelineError::NoGold)));
    }

    #[test]
    fn unanimity_gate() {
        let (m, gw) = planted(1, &[(BiasClass::ModalityBalance, 1.0)], 3);
        let mut a = analyze_samples(&m.samples, &gw, &AnalysisOptions::default()).unwrap();
        let r = &mut a.results[0];
        if let Some(ViewOutcome::Verdict(v)) = &mut r.causal {
            v.class = BiasClass::UniImage;
        }
        assert_eq!(clean(&a.results, &m, false).unwrap().0.samples.len(), 1);
        assert!(clean(&a.results, &m, true).unwrap().0.samples.is_empty());
        a.results[0].ensemble = None;
        assert!(matches!(clean(&a.results, &m, false), Err(PipelineError::MissingEnsemble)));
    }

    fn flow_result(id: &str, it: f64, tt: f64) -> SampleResult {
        let flows = crate::flow::normalize_flow(crate::flow::FlowScores {
            s_it: it,
            s_tt: tt,
            s_it_norm: 0.0,
            s_tt_norm: 0.0,
            aggregation: crate::flow::Aggregation::Sum,
        })
        .unwrap();
        let verdict = crate::flow::classify_flow(&flows, &FlowConfig::default());
        SampleResult { id: id.into(), benefit: None, flow: Some(ViewOutcome::Verdict(verdict)), causal: None, ensemble: None }
    }

    #[test]
    fn calibrate_small_gaps() {
        // largest gap is 0.55 - 0.45, a hair above 0.1 in floating point
        let pairs = [(0.55, 0.45), (0.52, 0.48), (0.5, 0.5), (0.47, 0.53)];
        let results: Vec<_> = pairs.iter().enumerate().map(|(i, &(a, b))| flow_result(&format!("s{i}"), a, b)).collect();
        let samples = (0..4)
            .map(|i| {
                let mut s = Sample::new(format!("s{i}"), Some("i".into()), Some("t".into()), 0);
                s.bias_gold = Some(BiasClass::ModalityBalance);
                s
            })
            .collect();
        let m = Manifest::new(samples);
        let c = calibrate(&results, &m, &crate::flow::default_grid()).unwrap();
        assert_eq!(c.best_epsilon, 0.15);
        assert_eq!(c.best_accuracy, 1.0);
        assert!(matches!(calibrate(&results, &m, &[]), Err(PipelineError::Flow(FlowError::EmptyGrid))));
        assert!(matches!(calibrate(&[], &m, &[0.1]), Err(PipelineError::NoLabeled)));
    }

    #[test]
    fn results_round_trip_and_check() {
        let dir = tempfile::tempdir().unwrap();
        let (m, gw) = planted(6, &[(BiasClass::UniImage, 1.0)], 4);
        let a = analyze_samples(&m.samples, &gw, &AnalysisOptions::default()).unwrap();
        let path = write_analysis(dir.path(), &a).unwrap();
        assert_eq!(read_results(&path).unwrap(), a.results);

        let mut bad = a.results[0].clone();
        bad.flow = Some(ViewOutcome::Unavailable("x".into()));
        write_lines(&path, &[bad]).unwrap();
        assert!(matches!(read_results(&path), Err(PipelineError::Results { line: 1, .. })));
    }

    #[test]
    fn mix_and_grid_parsing() {
        assert_eq!(
            parse_mix("ui=0.5, uni_text=0.5").unwrap(),
            vec![(BiasClass::UniImage, 0.5), (BiasClass::UniText, 0.5)]
        );
        assert!(parse_mix("ui").is_err());
        assert_eq!(parse_grid("0,0.1").unwrap(), vec![0.0, 0.1]);
        assert!(parse_grid("0,x").is_err());
    }

    #[test]
    fn detail_survives_results_file() {
        let r = flow_result("s", 3.0, 1.0);
        let back: SampleResult = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        let Some(ScoreDetail::Flow { s_it_norm, .. }) = back.verdict(View::Flow).map(|v| v.detail.clone()) else {
            panic!()
        };
        assert_eq!(s_it_norm, 0.75);
    }

    #[test]
    fn mock_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let config = MockConfig {
            n: 12,
            mix: vec![(BiasClass::UniImage, 0.5), (BiasClass::ModalityBalance, 0.5)],
            seed: 9,
            out: dir.path().to_path_buf(),
            options: AnalysisOptions::default(),
            corruption: None,
            serve_exe: Some(PathBuf::from("/usr/bin/modbias")),
        };
        let outcome = mock(&config).unwrap();
        for f in ["manifest.jsonl", "detectors.toml", RESULTS_FILE, TIMINGS_FILE, "report.csv", "venn.csv", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(outcome.report.method("ensemble").unwrap().overall_accuracy, 100.0);
        let toml = fs::read_to_string(dir.path().join("detectors.toml")).unwrap();
        let parsed = DetectorConfig::parse(&toml).unwrap();
        assert_eq!(parsed.endpoints.len(), 6);
        assert!(parsed.endpoints[0].address.starts_with("'/usr/bin/modbias' mock-serve"));
    }

    #[test]
    fn quoting() {
        assert_eq!(shell_quote("a b"), "'a b'");
        assert_eq!(shell_quote("it's"), "'it'\\''s'");
    }
}
