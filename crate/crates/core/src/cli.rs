//! The `cadops` command line. [`run`] is the whole program; the binary only
//! forwards its arguments and exit code.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::brep::{parse_brep, validate_topology, BRep, FormatError, TypeVocabulary};
use crate::config::{load_config, sha256_hex, ConfigError, ConfigOverrides, Provenance, SEED_ENV};
use crate::features::featurize;
use crate::model::{ground_truth_prediction, Model, Prediction};
use crate::pipeline::{evaluate_predictions, fit, predict_all, samples};
use crate::sketch::{export_svg, recover_sketches, SketchOptions, SketchStatus};
use crate::synth::{generate_dataset, GenParams, Manifest, ProfileKind, Split, MANIFEST_FILE};
use crate::train::{loss_csv, max_steps};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const PREDICTION_SUFFIX: &str = ".pred.json";

#[derive(Debug, Parser)]
#[command(name = "cadops", version, about = "Operation type and step segmentation for B-Rep solids")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset with a manifest
    Gen(GenArgs),
    /// Check B-Rep files for topological violations
    Validate(ValidateArgs),
    /// Train a network and write a checkpoint and a loss log
    Train(TrainArgs),
    /// Score predictions or a checkpoint against labeled models
    Eval(EvalArgs),
    /// Predict per-face operation types and steps
    Predict(PredictArgs),
    /// Recover 2D sketches of predicted extrusions as SVG
    Sketch(SketchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Falls back to CADOPS_SEED, then 0
    #[arg(long)]
    pub seed: Option<u64>,
    /// Step count range `MIN..MAX` (inclusive) or a single count
    #[arg(long, default_value = "1..4", value_parser = parse_steps)]
    pub steps: (usize, usize),
    /// rect, convex_polygon or mixed
    #[arg(long, default_value = "mixed", value_parser = parse_profile)]
    pub profile: ProfileKind,
    /// Only additive extrusions
    #[arg(long)]
    pub no_cuts: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Model files or dataset directories
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Write `{F, E, C, dims}` of a single input model as JSON
    #[arg(long)]
    pub dump_features: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub grid_resolution: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Model files or dataset directories
    #[arg(long = "data", required = true)]
    pub data: Vec<PathBuf>,
    /// Split taken from dataset directories
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    /// Use only the first N models
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML or JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
    /// Print the losses every N epochs to stderr (0 = never)
    #[arg(long, default_value_t = 0)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of `<model>.pred.json` files
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, conflicts_with = "ground_truth", required_unless_present = "ground_truth")]
    pub checkpoint: Option<PathBuf>,
    /// Emit the labels stored in the models instead of running a network
    #[arg(long)]
    pub ground_truth: bool,
    /// Model files or dataset directories
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    /// Output directory, one `<model>.pred.json` per model
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SketchArgs {
    /// Prediction JSON
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub brep: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also recover cut extrusions
    #[arg(long)]
    pub include_cuts: bool,
    /// Draw the projected UV-grid samples too
    #[arg(long)]
    pub project_grid: bool,
}

fn parse_steps(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("expected MIN..MAX or N, got `{s}`");
    match s.split_once("..") {
        Some((a, b)) => Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

fn parse_profile(s: &str) -> Result<ProfileKind, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|_| format!("unknown profile `{s}` (rect, convex_polygon, mixed)"))
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::parse(s).ok_or_else(|| format!("unknown split `{s}` (train, val, test)"))
}

/// Failures after argument parsing.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Anything else; exit code 1.
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Domain(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

fn pretty(v: &impl serde::Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(domain)?;
    s.push('\n');
    Ok(s)
}

/// A loaded model file and the key its hash is recorded under.
pub struct Input {
    pub key: String,
    pub brep: BRep,
    pub bytes: Vec<u8>,
}

/// Expands dataset directories through their manifests (optionally one
/// split) into `(key, path)` pairs, in the given order.
pub fn input_files(paths: &[PathBuf], split: Option<Split>, limit: Option<usize>) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for p in paths {
        if p.is_dir() {
            let m = Manifest::load(&p.join(MANIFEST_FILE)).map_err(domain)?;
            for e in m.models.iter().filter(|e| split.is_none_or(|s| s == e.split)) {
                files.push((format!("{}/{}", p.display(), e.file), p.join(&e.file)));
            }
        } else {
            files.push((p.display().to_string(), p.clone()));
        }
    }
    if let Some(n) = limit {
        files.truncate(n);
    }
    if files.is_empty() {
        return Err(CliError::Domain("no input models".into()));
    }
    Ok(files)
}

fn parse_file(bytes: &[u8]) -> Result<BRep, FormatError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FormatError::Schema(e.to_string()))?;
    parse_brep(text)
}

/// Reads every model named by [`input_files`].
pub fn load_inputs(paths: &[PathBuf], split: Option<Split>, limit: Option<usize>) -> Result<Vec<Input>, CliError> {
    input_files(paths, split, limit)?
        .into_iter()
        .map(|(key, path)| {
            let bytes = read(&path)?;
            let brep = parse_file(&bytes).map_err(|e| CliError::Domain(format!("{key}: {e}")))?;
            Ok(Input { key, brep, bytes })
        })
        .collect()
}

/// File name used for a model's prediction.
pub fn prediction_file(model: &str) -> String {
    let safe: String =
        model.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect();
    format!("{safe}{PREDICTION_SUFFIX}")
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let seed = match a.seed {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer")))?,
            Err(_) => 0,
        },
    };
    let params = GenParams {
        seed,
        n_models: a.count,
        steps_min: a.steps.0,
        steps_max: a.steps.1,
        profile: a.profile,
        allow_cut: !a.no_cuts,
    };
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let manifest = generate_dataset(&params, &a.out).map_err(domain)?;
    let prov = Provenance::new(serde_json::to_value(&params).map_err(domain)?);
    write(&a.out.join("provenance.json"), pretty(&prov)?)?;
    let _ = writeln!(out, "wrote {} models to {}", manifest.models.len(), a.out.display());
    Ok(())
}

fn cmd_validate(a: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let files = input_files(&a.inputs, None, None)?;
    let mut bad = 0;
    let mut last = None;
    for (key, path) in &files {
        // The parser refuses files with topology violations; report those too.
        let violations = match parse_file(&read(path)?) {
            Ok(b) => {
                let v = validate_topology(&b).violations.iter().map(|v| v.to_string()).collect::<Vec<_>>();
                last = Some(b);
                v
            }
            Err(FormatError::Topology(v)) => vec![v.to_string()],
            Err(e) => vec![e.to_string()],
        };
        if violations.is_empty() {
            let _ = writeln!(out, "ok       {key}");
        } else {
            bad += 1;
            let _ = writeln!(out, "invalid  {key}");
            for v in &violations {
                let _ = writeln!(out, "  {v}");
            }
        }
    }
    if let Some(path) = &a.dump_features {
        let (1, Some(b)) = (files.len(), &last) else {
            return Err(CliError::Usage("--dump-features takes exactly one readable model".into()));
        };
        let fm = featurize(b, a.grid_resolution).map_err(domain)?;
        write(path, pretty(&fm.to_json())?)?;
    }
    if bad > 0 {
        return Err(CliError::Domain(format!("{bad} of {} models have violations", files.len())));
    }
    Ok(())
}

fn provenance_of(config: Value, inputs: &[Input]) -> Provenance {
    let mut p = Provenance::new(config);
    for i in inputs {
        p.add_input(i.key.clone(), &i.bytes);
    }
    p
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(a.config.as_deref(), &a.overrides)?;
    let split = a.data.split.or(Some(Split::Train));
    let inputs = load_inputs(&a.data.data, split, a.data.limit)?;
    let breps: Vec<BRep> = inputs.iter().map(|i| i.brep.clone()).collect();
    let arch = cfg.arch();
    let train_set = samples(&breps, arch.grid_resolution, &arch.vocabulary).map_err(domain)?;
    cfg.k_s = Some(cfg.k_s.unwrap_or_else(|| max_steps(&train_set)));
    let mut prov = provenance_of(cfg.to_value(), &inputs);
    if let Some(c) = &a.config {
        prov.add_input(c.display().to_string(), &read(c)?);
    }
    let every = a.log_every;
    let (model, logs) = fit(&cfg.arch(), &train_set, &cfg.train(), cfg.seed, |l| {
        if every > 0 && (l.epoch % every == 0 || l.epoch + 1 == cfg.epochs) {
            let _ = writeln!(err, "epoch {:5}  L_step {:.6}  L_type {:.6}  L_total {:.6}", l.epoch, l.l_step, l.l_type, l.l_total);
        }
    })
    .map_err(domain)?;
    let text = model.to_checkpoint_string(&prov.to_value()).map_err(domain)?;
    write(&a.out.join(CHECKPOINT_FILE), text)?;
    write(&a.out.join(LOSS_FILE), loss_csv(&logs))?;
    let last = logs.last().expect("at least one epoch");
    let _ = writeln!(
        out,
        "trained on {} models for {} epochs: L_step {:.6}  L_type {:.6}  L_total {:.6}",
        breps.len(),
        logs.len(),
        last.l_step,
        last.l_type,
        last.l_total
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Model, Vec<u8>), CliError> {
    let bytes = read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    let (model, _) = Model::from_checkpoint_str(text).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))?;
    Ok((model, bytes))
}

fn network_predictions(model: &Model, breps: &[BRep]) -> Result<Vec<Prediction>, CliError> {
    let vocab = TypeVocabulary::new(&model.arch().vocabulary);
    let s = samples(breps, model.arch().grid_resolution, &vocab).map_err(domain)?;
    predict_all(model, &s).map_err(domain)
}

fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let inputs = load_inputs(&a.inputs, a.split, None)?;
    let breps: Vec<BRep> = inputs.iter().map(|i| i.brep.clone()).collect();
    let (preds, config, ck) = match &a.checkpoint {
        Some(path) => {
            let (model, bytes) = load_checkpoint(path)?;
            let preds = network_predictions(&model, &breps)?;
            let arch = serde_json::to_value(model.arch()).map_err(domain)?;
            (preds, json!({"source": "checkpoint", "arch_config": arch}), Some((path, bytes)))
        }
        None => {
            let preds = breps
                .iter()
                .map(|b| ground_truth_prediction(b).ok_or_else(|| CliError::Domain(format!("{} has unlabeled faces", b.name))))
                .collect::<Result<Vec<_>, _>>()?;
            (preds, json!({"source": "ground_truth"}), None)
        }
    };
    for (mut p, input) in preds.into_iter().zip(&inputs) {
        let mut prov = Provenance::new(config.clone());
        prov.add_input(input.key.clone(), &input.bytes);
        if let Some((path, bytes)) = &ck {
            prov.add_input(path.display().to_string(), bytes);
        }
        p.provenance = Some(prov.to_value());
        write(&a.out.join(prediction_file(&p.model)), pretty(&p)?)?;
    }
    let _ = writeln!(out, "wrote {} predictions to {}", inputs.len(), a.out.display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let split = a.data.split.or(Some(Split::Test));
    let inputs = load_inputs(&a.data.data, split, a.data.limit)?;
    let breps: Vec<BRep> = inputs.iter().map(|i| i.brep.clone()).collect();
    let mut extra: Vec<(String, String)> = Vec::new();
    let (preds, vocab, config) = match (&a.checkpoint, &a.predictions) {
        (Some(path), _) => {
            let (model, bytes) = load_checkpoint(path)?;
            extra.push((path.display().to_string(), sha256_hex(&bytes)));
            let preds = network_predictions(&model, &breps)?;
            let vocab = TypeVocabulary::new(&model.arch().vocabulary);
            let arch = serde_json::to_value(model.arch()).map_err(domain)?;
            (preds, vocab, json!({"source": "checkpoint", "arch_config": arch}))
        }
        (None, Some(dir)) => {
            let mut preds = Vec::with_capacity(breps.len());
            for b in &breps {
                let path = dir.join(prediction_file(&b.name));
                let bytes = read(&path)?;
                extra.push((path.display().to_string(), sha256_hex(&bytes)));
                let p: Prediction = serde_json::from_slice(&bytes)
                    .map_err(|e| CliError::Domain(format!("{}: malformed prediction: {e}", path.display())))?;
                preds.push(p);
            }
            (preds, breps[0].vocabulary.clone(), json!({"source": "predictions"}))
        }
        (None, None) => return Err(CliError::Usage("eval needs --checkpoint or --predictions".into())),
    };
    let report = evaluate_predictions(&breps, &preds, &vocab).map_err(domain)?;
    let mut prov = provenance_of(config, &inputs);
    prov.input_hashes.extend(extra);
    write(&a.out.join("report.json"), pretty(&json!({"provenance": prov, "report": report}))?)?;
    write(&a.out.join("report.csv"), report.per_model_csv())?;
    write(&a.out.join("by_step_count.csv"), report.by_step_count_csv())?;
    let _ = write!(out, "{}", report.summary());
    Ok(())
}

fn cmd_sketch(a: &SketchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let pred_bytes = read(&a.input)?;
    let pred: Prediction = serde_json::from_slice(&pred_bytes)
        .map_err(|e| CliError::Domain(format!("{}: malformed prediction: {e}", a.input.display())))?;
    let brep_bytes = read(&a.brep)?;
    let text = std::str::from_utf8(&brep_bytes).map_err(domain)?;
    let brep = parse_brep(text).map_err(|e| CliError::Domain(format!("{}: {e}", a.brep.display())))?;
    let opts = SketchOptions { include_cuts: a.include_cuts, project_grid: a.project_grid, ..Default::default() };
    let sketches = recover_sketches(&brep, &pred, &opts).map_err(domain)?;
    let stem = prediction_file(&brep.name).trim_end_matches(PREDICTION_SUFFIX).to_string();
    let mut meta = Vec::with_capacity(sketches.len());
    let mut degenerate = 0;
    for s in &sketches {
        let file = match (s.status, export_svg(s)) {
            (SketchStatus::Ok, Ok(svg)) => {
                let name = format!("{stem}_step{}.svg", s.step_id);
                write(&a.out.join(&name), svg)?;
                Some(name)
            }
            _ => {
                degenerate += 1;
                None
            }
        };
        meta.push(json!({"svg": file, "sketch": s}));
    }
    let mut prov = Provenance::new(json!({"include_cuts": a.include_cuts, "project_grid": a.project_grid}));
    prov.add_input(a.input.display().to_string(), &pred_bytes);
    prov.add_input(a.brep.display().to_string(), &brep_bytes);
    write(
        &a.out.join("sketches.json"),
        pretty(&json!({"provenance": prov, "model": brep.name, "sketches": meta}))?,
    )?;
    let _ = writeln!(out, "{} sketches ({} degenerate) in {}", sketches.len(), degenerate, a.out.display());
    Ok(())
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            let _ = writeln!(err, "error: --threads must be positive");
            return 2;
        }
        // A pool may already exist when called more than once in a process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Train(a) => cmd_train(a, out, err),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Predict(a) => cmd_predict(a, out),
        Command::Sketch(a) => cmd_sketch(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let msg = match &e {
                CliError::Usage(m) | CliError::Domain(m) => m,
            };
            let _ = writeln!(err, "error: {msg}");
            e.exit_code()
        }
    }
}
