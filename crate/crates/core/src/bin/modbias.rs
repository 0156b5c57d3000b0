use std::io::{self, BufReader};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use modbias::causal::Scalarization;
use modbias::ensemble::{parse_weights, Strategy, VoteConfig};
use modbias::evaluation::F1Average;
use modbias::flow::{default_grid, Aggregation, FlowConfig, DEFAULT_EPSILON};
use modbias::gateway::{Category, SharedBackend};
use modbias::manifest::parse_manifest;
use modbias::pipeline::{self, AnalysisOptions, Corruption, MockConfig, PipelineError, RunConfig};
use modbias::synthetic::{corrupt_backend, serve_lines, PlantedWorld};

#[derive(Parser)]
#[command(name = "modbias", version, about = "Sample-level modality bias auditing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct AnalysisArgs {
    /// Comma-separated subset of benefit,flow,causal.
    #[arg(long, default_value = "benefit,flow,causal")]
    views: String,
    #[arg(long, default_value = "prior")]
    ensemble: String,
    /// Ensemble weights in benefit,flow,causal order.
    #[arg(long, default_value = "0.3,0.2,0.5")]
    weights: String,
    /// Fixed tie-break priors (UI,MB,UT counts) instead of pooled predictions.
    #[arg(long)]
    priors: Option<String>,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value = "sum")]
    aggregation: String,
    /// Causal branch scalar: ground-truth or predicted class logit.
    #[arg(long, default_value = "ground-truth", value_parser = ["ground-truth", "predicted"])]
    scalarize: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 0 uses all available cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selected views (and the ensemble) over a manifest.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        detectors: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, env = "MODBIAS_CACHE_DIR")]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Only analyze samples carrying this split tag.
        #[arg(long)]
        split: Option<String>,
        /// Fail on the first malformed manifest record.
        #[arg(long)]
        strict: bool,
    },
    /// Proportion[accuracy] tables and view agreement against gold labels.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "macro")]
        f1: String,
    },
    /// Keep the samples the ensemble judged modality-balanced.
    Clean {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        require_unanimous: bool,
    },
    /// Sweep the flow threshold against gold labels.
    Calibrate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated thresholds; defaults to 0 to 0.4 in steps of 0.05.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Generate a planted dataset and analyze it with mock detectors.
    Mock {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value = "ui=0.25,mb=0.5,ut=0.25")]
        mix: String,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        out: PathBuf,
        /// Detector category whose predictions get flipped.
        #[arg(long, requires = "flip_rate")]
        corrupt: Option<String>,
        #[arg(long)]
        flip_rate: Option<f64>,
        #[arg(long, default_value_t = 0)]
        flip_seed: u64,
    },
    /// Serve one planted detector over stdin/stdout.
    #[command(hide = true)]
    MockServe {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        category: String,
        #[arg(long)]
        detector_id: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        flip_rate: f64,
        #[arg(long, default_value_t = 0)]
        flip_seed: u64,
    },
}

fn config_err(e: impl ToString) -> PipelineError {
    PipelineError::Config(e.to_string())
}

impl AnalysisArgs {
    fn options(&self) -> Result<AnalysisOptions, PipelineError> {
        let strategy: Strategy = self.ensemble.parse()?;
        let vote = VoteConfig::new(strategy).with_weights(parse_weights(&self.weights)?).with_seed(self.seed);
        let priors = match &self.priors {
            Some(raw) => {
                let counts: Vec<u64> =
                    raw.split(',').map(|p| p.trim().parse::<u64>()).collect::<Result<_, _>>().map_err(config_err)?;
                Some(<[u64; 3]>::try_from(counts).map_err(|_| config_err("--priors needs three counts"))?)
            }
            None => None,
        };
        let aggregation: Aggregation = self.aggregation.parse().map_err(config_err)?;
        let scalarization =
            if self.scalarize == "predicted" { Scalarization::Predicted } else { Scalarization::GroundTruth };
        Ok(AnalysisOptions {
            views: pipeline::parse_views(&self.views)?,
            vote,
            priors,
            flow: FlowConfig::new(self.epsilon, aggregation)?,
            scalarization,
            workers: self.workers,
        })
    }
}

fn run(command: Command) -> Result<i32, PipelineError> {
    match command {
        Command::Analyze { manifest, detectors, analysis, cache_dir, out, split, strict } => {
            let config = RunConfig { manifest, detectors, options: analysis.options()?, cache_dir, out, split, strict };
            let summary = pipeline::analyze(&config)?;
            println!(
                "analyzed {} samples, {} view failures, results in {}",
                summary.samples,
                summary.unavailable,
                summary.results_path.display()
            );
            Ok(summary.exit_code())
        }
        Command::Report { results, manifest, out, f1 } => {
            let average: F1Average = f1.parse().map_err(config_err)?;
            let manifest = parse_manifest(&manifest, false)?.manifest;
            let report = pipeline::report(&pipeline::read_results(&results)?, &manifest, average)?;
            pipeline::write_report(&out, &report)?;
            print!("{}", report.table_csv());
            Ok(0)
        }
        Command::Clean { results, manifest, out, require_unanimous } => {
            let manifest = parse_manifest(&manifest, false)?.manifest;
            let (cleaned, summary) = pipeline::clean(&pipeline::read_results(&results)?, &manifest, require_unanimous)?;
            cleaned.save(&out).map_err(|source| PipelineError::Io { path: out.clone(), source })?;
            println!("kept {} of {} samples", summary.kept, manifest.samples.len());
            Ok(0)
        }
        Command::Calibrate { results, manifest, out, grid } => {
            let grid = match grid {
                Some(raw) => pipeline::parse_grid(&raw)?,
                None => default_grid(),
            };
            let manifest = parse_manifest(&manifest, false)?.manifest;
            let calibration = pipeline::calibrate(&pipeline::read_results(&results)?, &manifest, &grid)?;
            std::fs::create_dir_all(&out).map_err(|source| PipelineError::Io { path: out.clone(), source })?;
            let path = out.join("calibration.csv");
            std::fs::write(&path, calibration.to_csv()).map_err(|source| PipelineError::Io { path, source })?;
            println!("epsilon {:.2} (accuracy {:.4})", calibration.best_epsilon, calibration.best_accuracy);
            Ok(0)
        }
        Command::Mock { n, mix, analysis, out, corrupt, flip_rate, flip_seed } => {
            let corruption = match (corrupt, flip_rate) {
                (Some(cat), Some(rate)) => {
                    Some(Corruption { category: cat.parse().map_err(config_err)?, flip_rate: rate, seed: flip_seed })
                }
                (None, Some(_)) => return Err(config_err("--flip-rate needs --corrupt")),
                _ => None,
            };
            let config = MockConfig {
                n,
                mix: pipeline::parse_mix(&mix)?,
                seed: analysis.seed,
                out,
                options: analysis.options()?,
                corruption,
                serve_exe: std::env::current_exe().ok(),
            };
            let outcome = pipeline::mock(&config)?;
            print!("{}", outcome.report.table_csv());
            Ok(i32::from(outcome.analysis.unavailable() > 0))
        }
        Command::MockServe { manifest, seed, category, detector_id, flip_rate, flip_seed } => {
            let category: Category = category.parse().map_err(config_err)?;
            let manifest = parse_manifest(&manifest, true)?.manifest;
            let world = Arc::new(PlantedWorld::from_manifest(&manifest, seed)?);
            let mut backend: SharedBackend = Arc::new(world.backend(category));
            if flip_rate > 0.0 {
                let id = detector_id.unwrap_or_else(|| category.to_string());
                backend = corrupt_backend(backend, &id, flip_rate, flip_seed)?;
            }
            serve_lines(backend.as_ref(), BufReader::new(io::stdin().lock()), io::stdout().lock())
                .map_err(|source| PipelineError::Io { path: PathBuf::from("<stdio>"), source })?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
