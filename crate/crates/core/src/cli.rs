//! `groupdet` command-line interface.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use crate::classifier::{
    ClassifierEndpoint, ClassifyError, HeuristicBackend, HeuristicParams, OracleBackend, PairClassifier, RemoteBackend,
    DEFAULT_PROMPT_TEMPLATE, ENDPOINT_ENV_VAR,
};
use crate::cluster::AgreementWeights;
use crate::evaluation::{score_results, DEFAULT_IOU_THRESHOLD};
use crate::pair_filter::FilterParams;
use crate::pipeline::{prepare_scene, run_detect, PipelineConfig, PipelineError, RunOutcome, DEFAULT_PAD_FRACTION, DEFAULT_TAU_DET};
use crate::scene_io::{export_pair_records, load_scenes, manifest_dir, read_results, write_results, Scene};
use crate::sweep::{sweep, write_sweep_csv, SweepGrid, SweepScene};
use crate::synth::{write_corpus, AssetFormat, SynthConfig};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_REMOTE_UNAVAILABLE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "groupdet", version, about = "Detect social group regions from person detections and depth maps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full pipeline and write one result line per scene.
    DetectGroups(DetectArgs),
    /// Score predicted group boxes against ground truth.
    Evaluate(EvaluateArgs),
    /// Score every (tau_d, tau_z) point of the threshold grid.
    Sweep(SweepArgs),
    /// Write a synthetic corpus with planted groups.
    Synth(SynthArgs),
    /// Run the pipeline and export the classified pair labels.
    ExportPairs(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// HTTP inference service.
    Remote,
    /// Distance / depth thresholds, no network.
    Heuristic,
    /// Ground-truth membership (synthetic or annotated corpora only).
    Oracle,
}

/// Pipeline and backend settings shared by the pipeline-running commands.
///
/// Precedence: command-line flag, then `--config` file, then built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Scene manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// JSON file with any of the settings below (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Detection confidence threshold; detections below it are dropped.
    #[arg(long)]
    pub tau_det: Option<f64>,
    /// Distance threshold: pairs whose center distance divided by the image
    /// diagonal exceeds it are labelled No without classification.
    #[arg(long)]
    pub tau_d: Option<f64>,
    /// Depth threshold (0-255): pairs whose median depths differ by more than
    /// it are labelled No without classification.
    #[arg(long)]
    pub tau_z: Option<u8>,
    /// Padding added around each pair's union box, as a fraction of its size.
    #[arg(long)]
    pub pad_fraction: Option<f64>,
    /// Clustering weight for a Yes pair (default 1).
    #[arg(long, allow_hyphen_values = true)]
    pub w_yes: Option<f64>,
    /// Clustering weight for a No pair (default -1).
    #[arg(long, allow_hyphen_values = true)]
    pub w_no: Option<f64>,
    /// Clustering weight for a Not sure pair (default -1).
    #[arg(long, allow_hyphen_values = true)]
    pub w_notsure: Option<f64>,
    /// Prompt template file with {z_a}, {z_b} and {z_diff} placeholders.
    #[arg(long)]
    pub prompt: Option<PathBuf>,
    /// Classifier service base URL; falls back to the MINGLE_CLASSIFIER_URL variable.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Per-request timeout.
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    /// Retries after the first failed attempt.
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Concurrent requests per scene for the remote backend.
    #[arg(long)]
    pub max_inflight: Option<usize>,
    /// Scenes processed in parallel.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Seeds retry jitter.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    backend: Option<BackendKind>,
    tau_det: Option<f64>,
    tau_d: Option<f64>,
    tau_z: Option<u8>,
    pad_fraction: Option<f64>,
    w_yes: Option<f64>,
    w_no: Option<f64>,
    w_notsure: Option<f64>,
    prompt: Option<PathBuf>,
    endpoint: Option<String>,
    timeout_secs: Option<f64>,
    max_retries: Option<u32>,
    max_inflight: Option<usize>,
    jobs: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Results file (JSON lines, sorted by scene id).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the run summary as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Results file written by detect-groups.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
    /// JSON report path; defaults to the predictions path with `.eval.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou_threshold: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory; receives manifest.jsonl, rgb/ and depth/.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's scene count.
    #[arg(long)]
    pub n_scenes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<SynthFormat>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthFormat {
    Png,
    Pnm,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Pair records (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
}

/// Fully merged settings for a pipeline run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub backend: BackendKind,
    pub pipeline: PipelineConfig,
    pub endpoint: Option<ClassifierEndpoint>,
    pub jobs: usize,
    pub seed: u64,
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => read_file_config(p)?,
            None => FileConfig::default(),
        };
        let backend = self.backend.or(file.backend).unwrap_or(BackendKind::Remote);
        let defaults = FilterParams::default();
        let filter = FilterParams::new(
            self.tau_d.or(file.tau_d).unwrap_or(defaults.tau_d),
            self.tau_z.or(file.tau_z).unwrap_or(defaults.tau_z),
        )
        .map_err(|e| anyhow!(e))?;
        let w = AgreementWeights::default();
        let weights = AgreementWeights::new(
            self.w_yes.or(file.w_yes).unwrap_or(w.w_yes),
            self.w_no.or(file.w_no).unwrap_or(w.w_no),
            self.w_notsure.or(file.w_notsure).unwrap_or(w.w_notsure),
        )?;
        let template = match self.prompt.as_ref().or(file.prompt.as_ref()) {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading prompt template {}", p.display()))?,
            None => DEFAULT_PROMPT_TEMPLATE.to_string(),
        };
        let pipeline = PipelineConfig {
            tau_det: self.tau_det.or(file.tau_det).unwrap_or(DEFAULT_TAU_DET),
            filter,
            pad_fraction: self.pad_fraction.or(file.pad_fraction).unwrap_or(DEFAULT_PAD_FRACTION),
            weights,
            template,
        };
        pipeline.validate()?;

        let endpoint = match self.endpoint.clone().or(file.endpoint) {
            Some(url) => Some(ClassifierEndpoint::new(url)),
            None => ClassifierEndpoint::from_env(),
        };
        let endpoint = endpoint.map(|mut e| -> Result<ClassifierEndpoint> {
            if let Some(t) = self.timeout_secs.or(file.timeout_secs) {
                if !(t.is_finite() && t > 0.0) {
                    bail!("timeout_secs must be positive");
                }
                e.timeout = Duration::from_secs_f64(t);
            }
            if let Some(r) = self.max_retries.or(file.max_retries) {
                e.max_retries = r;
            }
            if let Some(m) = self.max_inflight.or(file.max_inflight) {
                e.max_inflight = m;
            }
            e.validate()?;
            Ok(e)
        });
        let endpoint = endpoint.transpose()?;
        if backend == BackendKind::Remote && endpoint.is_none() {
            bail!("the remote backend needs --endpoint or {ENDPOINT_ENV_VAR}");
        }
        let jobs = self.jobs.or(file.jobs).unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });
        if jobs == 0 {
            bail!("jobs must be at least 1");
        }
        Ok(RunConfig {
            manifest: self.manifest.clone(),
            backend,
            pipeline,
            endpoint,
            jobs,
            seed: self.seed.or(file.seed).unwrap_or(0),
        })
    }
}

enum Backend {
    Remote(Box<RemoteBackend>),
    Heuristic(HeuristicBackend),
    Oracle(OracleBackend),
}

impl Backend {
    fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.backend {
            BackendKind::Remote => {
                let ep = cfg.endpoint.clone().expect("checked in resolve");
                Backend::Remote(Box::new(RemoteBackend::new(ep, cfg.seed)?))
            }
            BackendKind::Heuristic => Backend::Heuristic(HeuristicBackend::new(HeuristicParams::default())),
            BackendKind::Oracle => Backend::Oracle(OracleBackend),
        })
    }

    fn as_dyn(&self) -> &dyn PairClassifier {
        match self {
            Backend::Remote(b) => b.as_ref(),
            Backend::Heuristic(b) => b,
            Backend::Oracle(b) => b,
        }
    }

    fn unparsed_answers(&self) -> usize {
        match self {
            Backend::Remote(b) => b.unparsed_answers(),
            _ => 0,
        }
    }
}

fn load_manifest(path: &Path) -> Result<Vec<Scene>> {
    load_scenes(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn run_pipeline(cfg: &RunConfig) -> Result<RunOutcome> {
    let scenes = load_manifest(&cfg.manifest)?;
    let backend = Backend::new(cfg)?;
    let mut outcome = run_detect(&scenes, &manifest_dir(&cfg.manifest), &cfg.pipeline, backend.as_dyn(), cfg.jobs)?;
    outcome.summary.unparsed_answers = backend.unparsed_answers();
    for f in &outcome.failures {
        eprintln!("warning: scene '{}' skipped: {}", f.scene_id, f.message);
    }
    Ok(outcome)
}

fn cmd_detect(args: &DetectArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let outcome = run_pipeline(&cfg)?;
    write_results(&args.out, &outcome.results())?;
    for line in outcome.summary.lines() {
        println!("{line}");
    }
    if let Some(p) = &args.summary {
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &outcome.summary)?;
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    if !(args.iou_threshold > 0.0 && args.iou_threshold <= 1.0) {
        bail!("iou threshold must lie in (0, 1]");
    }
    let scenes = load_manifest(&args.manifest)?;
    let results = read_results(&args.predictions)
        .with_context(|| format!("reading predictions {}", args.predictions.display()))?;
    let report = score_results(&scenes, &results, args.iou_threshold)?;
    print!("{}", report.table());
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.predictions.with_extension("eval.json"));
    let f = File::create(&report_path).with_context(|| format!("creating {}", report_path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &report)?;
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let scenes = load_manifest(&cfg.manifest)?;
    let base = manifest_dir(&cfg.manifest);
    let backend = Backend::new(&cfg)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build()?;
    let prepared: Vec<Result<SweepScene, PipelineError>> = pool.install(|| {
        scenes
            .par_iter()
            .map(|s| {
                let p = prepare_scene(s, &base, cfg.pipeline.tau_det, backend.as_dyn().needs_query())?;
                let assets = p.assets(&cfg.pipeline);
                Ok(SweepScene::prepare(p.scene.clone(), backend.as_dyn(), assets.as_ref())?)
            })
            .collect()
    });
    let mut ready = Vec::new();
    for (s, r) in scenes.iter().zip(prepared) {
        match r {
            Ok(p) => ready.push(p),
            Err(e) if e.is_remote_unavailable() => return Err(e.into()),
            Err(e) => eprintln!("warning: scene '{}' skipped: {e}", s.scene_id),
        }
    }
    let rows = pool.install(|| sweep(&ready, &SweepGrid::default(), &cfg.pipeline.weights, args.iou_threshold));
    let f = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_sweep_csv(BufWriter::new(f), &rows)?;
    println!("wrote {} rows over {} scenes to {}", rows.len(), ready.len(), args.out.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(n) = args.n_scenes {
        cfg.n_scenes = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(f) = args.format {
        cfg.format = match f {
            SynthFormat::Png => AssetFormat::Png,
            SynthFormat::Pnm => AssetFormat::Pnm,
        };
    }
    let manifest = write_corpus(&cfg, &args.out)?;
    println!("wrote {} scenes to {}", cfg.n_scenes, manifest.display());
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let cfg = args.run.resolve()?;
    let outcome = run_pipeline(&cfg)?;
    let matrices = outcome.matrices();
    export_pair_records(&args.out, &matrices)?;
    println!(
        "wrote {} pair records for {} scenes to {}",
        outcome.summary.classified,
        matrices.len(),
        args.out.display()
    );
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::DetectGroups(a) => cmd_detect(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
        Command::ExportPairs(a) => cmd_export(a),
    }
}

/// Exit code for an error: 2 when the classifier service was unreachable.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    let remote = err.chain().any(|e| {
        matches!(e.downcast_ref::<ClassifyError>(), Some(ClassifyError::RemoteUnavailable { .. }))
            || e.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_remote_unavailable)
    });
    if remote {
        EXIT_REMOTE_UNAVAILABLE
    } else {
        EXIT_FAILURE
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
