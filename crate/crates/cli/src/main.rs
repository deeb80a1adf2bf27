//! Command-line entry point: reproducible synthesis, training, evaluation,
//! prediction, and visualization runs driven by a single JSON config.
//!
//! Every command writes `resolved_config.json` and `run_info.json` (config
//! hash plus build identifier) into its output directory; artifacts contain
//! no timestamps, so reruns with identical configs are byte-identical.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use config::RunConfig;
use uahmp::checkpoint::config_hash;
use uahmp::evaluation::{self, MapFormat};
use uahmp::losses;
use uahmp::skeleton_data;
use uahmp::trainer;
use uahmp::{
    GaussianPoseSequence, ModelCheckpoint, PoseSequence, SamplePair, Scalar, TrainResult,
};

#[derive(Parser)]
#[command(
    name = "uahmp",
    version,
    about = "Uncertainty-aware skeleton motion prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file; built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted-key config override, e.g. --set train.lr=0.001 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Top-level seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with a manifest.
    Synth,
    /// Train a predictor; writes checkpoints and a JSON-lines metrics log.
    Train,
    /// Evaluate a checkpoint: per-horizon MPJPE, variance, and calibration.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Predict Gaussian future poses for an observed sequence file.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Observed pose sequence (CSV or JSONL per config data.format).
        #[arg(long)]
        input: PathBuf,
    },
    /// Render uncertainty artifacts from a prediction file.
    Visualize {
        /// Prediction JSONL written by `predict`.
        #[arg(long)]
        prediction: PathBuf,
        /// Optional ground-truth pose sequence to overlay.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

struct CliError {
    kind: String,
    message: String,
}

impl From<uahmp::Error> for CliError {
    fn from(e: uahmp::Error) -> Self {
        CliError {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<String> for CliError {
    fn from(message: String) -> Self {
        CliError {
            kind: "config".to_string(),
            message,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            kind: "io".to_string(),
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let envelope =
                serde_json::json!({ "error": { "kind": e.kind, "message": e.message } });
            eprintln!("{envelope}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), &cli.sets, cli.seed)?;
    let out = cli.out.unwrap_or_else(|| {
        let name = match &cli.command {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Eval { .. } => "eval",
            Command::Predict { .. } => "predict",
            Command::Visualize { .. } => "visualize",
        };
        PathBuf::from("runs").join(name)
    });
    fs::create_dir_all(&out)?;

    match cli.command {
        Command::Synth => cmd_synth(&cfg, &out),
        Command::Train => cmd_train(&cfg, &out),
        Command::Eval { checkpoint } => cmd_eval(&cfg, &out, &checkpoint),
        Command::Predict { checkpoint, input } => cmd_predict(&cfg, &out, &checkpoint, &input),
        Command::Visualize { prediction, truth } => {
            cmd_visualize(&cfg, &out, &prediction, truth.as_deref())
        }
    }
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    config_hash: String,
    version: &'a str,
    build: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelReport>,
}

/// Head bookkeeping: the Gaussian head adds one extra output channel per
/// coordinate relative to a mean-only head.
#[derive(Serialize)]
struct ModelReport {
    param_count: usize,
    head_param_count: usize,
    head_outputs_gaussian: usize,
    head_outputs_mean_only: usize,
    head_outputs_added: usize,
}

fn write_run_records(
    cfg: &RunConfig,
    out: &Path,
    command: &str,
    model: Option<ModelReport>,
) -> Result<(), CliError> {
    fs::write(out.join("resolved_config.json"), cfg.to_json_pretty())?;
    let info = RunInfo {
        command,
        config_hash: config_hash(&cfg.to_json()),
        version: env!("CARGO_PKG_VERSION"),
        build: option_env!("BUILD_ID").unwrap_or("unknown"),
        model,
    };
    fs::write(
        out.join("run_info.json"),
        serde_json::to_string_pretty(&info).expect("serializable run info"),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SynthManifest {
    frame_interval_ms: f64,
    config_hash: String,
    sequences: Vec<SynthEntry>,
}

#[derive(Serialize)]
struct SynthEntry {
    file: String,
    config: skeleton_data::SynthConfig,
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut entries = Vec::new();
    for i in 0..cfg.synth.n_sequences {
        let scfg = cfg
            .synth
            .sequence_config(i, cfg.seed, cfg.frame_interval_ms);
        let seq = skeleton_data::synth_generate::<Scalar>(&scfg)?;
        let file = format!("seq_{i:03}.csv");
        skeleton_data::save_sequence(&seq, &out.join(&file))?;
        entries.push(SynthEntry { file, config: scfg });
    }
    let manifest = SynthManifest {
        frame_interval_ms: cfg.frame_interval_ms,
        config_hash: config_hash(&cfg.to_json()),
        sequences: entries,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("serializable manifest"),
    )?;
    write_run_records(cfg, out, "synth", None)?;
    println!(
        "wrote {} sequences ({} frames each) to {}",
        cfg.synth.n_sequences,
        cfg.synth.duration_frames,
        out.display()
    );
    Ok(())
}

/// Loads, windows, corrupts, and centers the configured dataset.
fn load_pairs(cfg: &RunConfig) -> Result<(Vec<SamplePair>, Vec<SamplePair>), CliError> {
    let window = cfg.data.t_obs + cfg.data.t_future;
    let load_all = |paths: &[PathBuf]| -> Result<Vec<SamplePair>, CliError> {
        let mut pairs = Vec::new();
        for path in paths {
            let seq = skeleton_data::load_sequence::<Scalar>(
                path,
                cfg.data.format,
                cfg.frame_interval_ms,
            )?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| path.display().to_string());
            pairs.extend(skeleton_data::window_split_with_source(
                &seq,
                cfg.data.t_obs,
                window,
                cfg.data.stride,
                &name,
            )?);
        }
        Ok(pairs)
    };

    let train_paths = cfg.train_paths()?;
    if train_paths.is_empty() {
        return Err("no training data configured (data.train_dir or data.train_files)"
            .to_string()
            .into());
    }
    let mut train_pairs = load_all(&train_paths)?;
    let mut val_pairs = load_all(&cfg.val_paths()?)?;
    if val_pairs.is_empty() && cfg.data.val_fraction > 0.0 {
        let n_val = ((train_pairs.len() as f64) * cfg.data.val_fraction).ceil() as usize;
        let n_val = n_val.min(train_pairs.len().saturating_sub(1));
        val_pairs = train_pairs.split_off(train_pairs.len() - n_val);
    }

    if cfg.data.corrupt_fraction > 0.0 {
        train_pairs = skeleton_data::corrupt_samples(
            train_pairs,
            cfg.data.corrupt_fraction,
            cfg.data.corrupt_noise_std_mm,
            cfg.data.corrupt_seed,
        )?;
    }
    if cfg.center_root {
        train_pairs = train_pairs
            .into_iter()
            .map(SamplePair::center_on_root)
            .collect();
        val_pairs = val_pairs
            .into_iter()
            .map(SamplePair::center_on_root)
            .collect();
    }
    Ok((train_pairs, val_pairs))
}

fn model_report(params: &uahmp::ModelParams) -> ModelReport {
    ModelReport {
        param_count: params.param_count(),
        head_param_count: params.head_param_count(),
        head_outputs_gaussian: params.gaussian_head_outputs(),
        head_outputs_mean_only: params.mean_only_head_outputs(),
        head_outputs_added: params.gaussian_head_outputs() - params.mean_only_head_outputs(),
    }
}

fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (train_pairs, val_pairs) = load_pairs(cfg)?;
    let joints = train_pairs
        .first()
        .map(|p| p.joints())
        .ok_or_else(|| "empty training set".to_string())?;
    let pcfg = cfg.predictor.to_predictor_config(&cfg.data, joints, cfg.seed);

    let result: TrainResult = trainer::train(&cfg.train, pcfg, &train_pairs, &val_pairs)?;
    trainer::save_checkpoint(&result.best, &out.join("best.ckpt"))?;
    trainer::save_checkpoint(&result.last, &out.join("last.ckpt"))?;
    fs::write(
        out.join("metrics.jsonl"),
        trainer::metrics_to_jsonl(&result.metrics),
    )?;
    let report = model_report(&result.best.params);
    println!(
        "trained {} epochs on {} pairs ({} val): best val MPJPE {:.3} mm",
        result.metrics.len(),
        train_pairs.len(),
        val_pairs.len(),
        result
            .metrics
            .iter()
            .map(|m| m.val_mpjpe_mm)
            .fold(f64::INFINITY, f64::min),
    );
    println!(
        "model: {} parameters; head outputs {} (gaussian) vs {} (mean-only), +{} for uncertainty",
        report.param_count,
        report.head_outputs_gaussian,
        report.head_outputs_mean_only,
        report.head_outputs_added
    );
    if let Some(reason) = &result.diverged {
        println!("warning: training aborted early: {reason}");
    }
    write_run_records(cfg, out, "train", Some(report))?;
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    n_samples: usize,
    overall_mpjpe_mm: f64,
    horizons: evaluation::HorizonReport,
    calibration: evaluation::CalibrationStats,
}

fn cmd_eval(cfg: &RunConfig, out: &Path, checkpoint: &Path) -> Result<(), CliError> {
    let ckpt: ModelCheckpoint = trainer::load_checkpoint(checkpoint)?;
    let (train_pairs, val_pairs) = load_pairs(cfg)?;
    let pairs = if val_pairs.is_empty() {
        train_pairs
    } else {
        val_pairs
    };
    if pairs.is_empty() {
        return Err("no samples to evaluate".to_string().into());
    }

    let mut preds = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        preds.push(ckpt.params.forward(&pair.observed)?);
    }
    let samples: Vec<(&GaussianPoseSequence, &PoseSequence)> = preds
        .iter()
        .zip(pairs.iter())
        .map(|(pred, pair)| (pred, &pair.future))
        .collect();
    let horizons =
        evaluation::aggregate_horizons(&samples, &cfg.eval.horizons_ms, cfg.frame_interval_ms)?;
    let calibration = evaluation::calibration_stats_pooled(&samples)?;
    let mut overall = 0.0;
    for (pred, pair) in preds.iter().zip(pairs.iter()) {
        let means = pred.means(cfg.frame_interval_ms);
        overall += losses::mpjpe(&means, &pair.future)?;
    }
    let output = EvalOutput {
        n_samples: pairs.len(),
        overall_mpjpe_mm: overall / pairs.len() as f64,
        horizons,
        calibration,
    };
    let json = serde_json::to_string_pretty(&output).expect("serializable report");
    fs::write(out.join("horizon_report.json"), &json)?;
    println!("{json}");
    write_run_records(cfg, out, "eval", Some(model_report(&ckpt.params)))?;
    Ok(())
}

fn cmd_predict(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: &Path,
    input: &Path,
) -> Result<(), CliError> {
    let ckpt: ModelCheckpoint = trainer::load_checkpoint(checkpoint)?;
    let pcfg = *ckpt.params.config();
    let seq =
        skeleton_data::load_sequence::<Scalar>(input, cfg.data.format, cfg.frame_interval_ms)?;
    if seq.frames() < pcfg.t_obs {
        return Err(uahmp::Error::Argument(format!(
            "input has {} frames, the model needs at least {}",
            seq.frames(),
            pcfg.t_obs
        ))
        .into());
    }
    let window = seq.slice_frames(seq.frames() - pcfg.t_obs, seq.frames());
    let pred = if cfg.center_root {
        let root = window.get(0, 0);
        let pair = SamplePair::new(window.clone(), window.clone(), "predict".into())?;
        let centered = pair.center_on_root();
        let raw = ckpt.params.forward(&centered.observed)?;
        // back to absolute coordinates
        let mut params = Vec::with_capacity(raw.params().len());
        for t in 0..raw.frames() {
            for j in 0..raw.joints() {
                for a in 0..3 {
                    let g = raw.get(t, j, a);
                    params.push(losses::GaussianCoordinate {
                        mu: g.mu + root[a],
                        var: g.var,
                    });
                }
            }
        }
        GaussianPoseSequence::from_params(raw.joints(), params)?
    } else {
        ckpt.params.forward(&window)?
    };
    let jsonl = pred.to_jsonl(seq.frames());
    fs::write(out.join("prediction.jsonl"), jsonl)?;
    println!(
        "predicted {} frames x {} joints from {} (t continues at {})",
        pred.frames(),
        pred.joints(),
        input.display(),
        seq.frames()
    );
    write_run_records(cfg, out, "predict", Some(model_report(&ckpt.params)))?;
    Ok(())
}

fn cmd_visualize(
    cfg: &RunConfig,
    out: &Path,
    prediction: &Path,
    truth: Option<&Path>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(prediction)?;
    let pred = GaussianPoseSequence::from_jsonl(&text)?;
    let truth_seq = match truth {
        Some(path) => Some(skeleton_data::load_sequence::<Scalar>(
            path,
            cfg.data.format,
            cfg.frame_interval_ms,
        )?),
        None => None,
    };
    evaluation::render_pointsize_svg(&pred, truth_seq.as_ref(), &out.join("pointsize.svg"))?;
    let map = evaluation::uncertainty_map(&pred);
    evaluation::render_map(&map, &out.join("uncertainty_map.csv"), MapFormat::Csv)?;
    evaluation::render_map(&map, &out.join("uncertainty_map.pgm"), MapFormat::Pgm)?;
    evaluation::render_map(&map, &out.join("uncertainty_map.svg"), MapFormat::Svg)?;
    println!(
        "wrote pointsize.svg and uncertainty_map.{{csv,pgm,svg}} to {}",
        out.display()
    );
    write_run_records(cfg, out, "visualize", None)?;
    Ok(())
}
