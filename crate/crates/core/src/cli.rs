//! Command-line entry point.
//!
//! Settings resolve in three layers: built-in defaults, then a `key = value`
//! config file (`--config`) or a previous run's `manifest.json`
//! (`--manifest`), then explicit flags. Every run writes the resolved settings
//! to `<out>/manifest.json`, so `--manifest` replays it exactly.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::data::{export_dataset, generate_synthetic_dataset, ingest_directory, DefectKind, Label, LabeledDataset, SynthConfig, GROUND_TRUTH_FILE};
use crate::error::{Error, Result};
use crate::explain::{
    defect_bbox, grad_cam, lime_explain, render_overlay, segment_image, write_pgm, ExplanationSidecar, Explanation, Method,
    OverlayStyle, PreparedInputs,
};
use crate::imaging::{Image, Pipeline, Variant, DEFAULT_DETAIL_K};
use crate::nn::{complexity, Architecture, Checkpoint, ModelGraph, FLOP_CONVENTION, REFERENCE_ROWS};
use crate::seed;
use crate::train::{
    evaluate, grid_search, split_dataset, train_model, validation_split, write_history_csv, write_json, Grid, Hyperparams,
    Predictor, RunReport, TrainOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const MANIFEST_FILE: &str = "manifest.json";
const TRAIN_SPLIT: f64 = 0.8;

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parameter(_) => EXIT_USAGE,
        Error::NonFinite(_) | Error::DegenerateDesign(_) | Error::StaleCache => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

#[derive(Parser, Debug)]
#[command(name = "p3d-inspect", version, about = "Defect detection for images of 3D-printed cylinders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replay the settings of a previous run's manifest.json.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        defect: Option<usize>,
        #[arg(long)]
        non_defect: Option<usize>,
        #[arg(long)]
        size: Option<usize>,
        /// Comma-separated subset of blob,crack,layer_shift.
        #[arg(long)]
        kinds: Option<String>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        layer_spacing: Option<usize>,
    },
    /// Apply a pre-processing variant to a dataset directory.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        detail_k: Option<f64>,
    },
    /// Train and evaluate on an 80/20 split.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Grid search over batch size, epochs and learning rate.
    GridSearch {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        /// Key-value file with comma-separated batch_size, epochs, learning_rate lists.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Explain a single prediction.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        image: Option<PathBuf>,
        /// grad-cam or lime.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Class to explain; defaults to the predicted class.
        #[arg(long)]
        class: Option<usize>,
        #[arg(long)]
        lime_samples: Option<usize>,
        #[arg(long)]
        lime_grid: Option<usize>,
        #[arg(long)]
        kernel_width: Option<f64>,
    },
    /// Parameter and FLOP counts of a named architecture.
    Flops {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<String>,
    },
    /// Describe a checkpoint.
    Info {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    detail_k: Option<f64>,
    #[arg(long)]
    no_augment: bool,
    /// scratch (trainable, small) or canonical (frozen VGG16 backbone).
    #[arg(long)]
    backbone: Option<String>,
    /// Checkpoint whose backbone parameters initialize the model.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Input size for the scratch backbone.
    #[arg(long)]
    size: Option<usize>,
}

/// Resolved settings, keyed by flag name with `-` replaced by `_`.
pub type Settings = BTreeMap<String, String>;

/// Parses flat `key = value` text. `#` starts a comment line.
pub fn parse_key_values(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
        let key = k.trim().replace('-', "_");
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub settings: Settings,
    pub seeds: BTreeMap<String, u64>,
    pub version: String,
}

impl Manifest {
    fn new(command: &str, settings: &Settings) -> Self {
        let root = settings.get("seed").and_then(|s| s.parse().ok()).unwrap_or(0);
        let seeds = [seed::SPLIT, seed::INIT, seed::DROPOUT, seed::AUGMENT, seed::SHUFFLE, seed::LIME, seed::SYNTH]
            .into_iter()
            .map(|n| (n.to_string(), seed::derive(root, n)))
            .chain(std::iter::once(("root".to_string(), root)))
            .collect();
        Self { command: command.to_string(), settings: settings.clone(), seeds, version: env!("CARGO_PKG_VERSION").into() }
    }
}

struct Resolved<'a> {
    command: &'a str,
    settings: Settings,
}

impl Resolved<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.settings.get(key).map(String::as_str)
    }

    fn get<V: std::str::FromStr>(&self, key: &str, default: V) -> Result<V> {
        match self.raw(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| Error::Config(format!("invalid value for {key}: '{s}'"))),
        }
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        self.raw(key)
            .map(PathBuf::from)
            .ok_or_else(|| Error::Config(format!("{}: missing required --{}", self.command, key.replace('_', "-"))))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        self.get(key, false)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let out = self.path("out")?;
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(out)
    }

    fn write_manifest(&self, out: &Path) -> Result<()> {
        write_json(&out.join(MANIFEST_FILE), &Manifest::new(self.command, &self.settings))
    }
}

fn put<V: ToString>(m: &mut Settings, key: &str, v: &Option<V>) {
    if let Some(v) = v {
        m.insert(key.to_string(), v.to_string());
    }
}

fn put_path(m: &mut Settings, key: &str, v: &Option<PathBuf>) {
    put(m, key, &v.as_ref().map(|p| p.display().to_string()));
}

fn base_settings(command: &str, common: &Common) -> Result<Settings> {
    let mut s = Settings::new();
    if let Some(p) = &common.config {
        s.extend(parse_key_values(&read_text(p)?)?);
    }
    if let Some(p) = &common.manifest {
        let m: Manifest = serde_json::from_str(&read_text(p)?).map_err(|e| Error::Config(format!("manifest {}: {e}", p.display())))?;
        if m.command != command {
            return Err(Error::Config(format!("manifest was written by '{}', not '{command}'", m.command)));
        }
        s.extend(m.settings);
    }
    put_path(&mut s, "out", &common.out);
    put(&mut s, "seed", &common.seed);
    Ok(s)
}

fn model_settings(s: &mut Settings, m: &ModelArgs) {
    put_path(s, "data", &m.data);
    put(s, "variant", &m.variant);
    put(s, "detail_k", &m.detail_k);
    if m.no_augment {
        s.insert("no_augment".into(), "true".into());
    }
    put(s, "backbone", &m.backbone);
    put_path(s, "weights", &m.weights);
    put(s, "size", &m.size);
}

fn resolve(cmd: &Command) -> Result<Resolved<'static>> {
    let (name, common): (&'static str, &Common) = match cmd {
        Command::Synth { common, .. } => ("synth", common),
        Command::Preprocess { common, .. } => ("preprocess", common),
        Command::Train { common, .. } => ("train", common),
        Command::GridSearch { common, .. } => ("grid-search", common),
        Command::Eval { common, .. } => ("eval", common),
        Command::Explain { common, .. } => ("explain", common),
        Command::Flops { common, .. } => ("flops", common),
        Command::Info { common, .. } => ("info", common),
    };
    let mut s = base_settings(name, common)?;
    match cmd {
        Command::Synth { defect, non_defect, size, kinds, noise, layer_spacing, .. } => {
            put(&mut s, "defect", defect);
            put(&mut s, "non_defect", non_defect);
            put(&mut s, "size", size);
            put(&mut s, "kinds", kinds);
            put(&mut s, "noise", noise);
            put(&mut s, "layer_spacing", layer_spacing);
        }
        Command::Preprocess { variant, input, detail_k, .. } => {
            put(&mut s, "variant", variant);
            put_path(&mut s, "in", input);
            put(&mut s, "detail_k", detail_k);
        }
        Command::Train { model, batch, epochs, lr, .. } => {
            model_settings(&mut s, model);
            put(&mut s, "batch", batch);
            put(&mut s, "epochs", epochs);
            put(&mut s, "lr", lr);
        }
        Command::GridSearch { model, grid, .. } => {
            model_settings(&mut s, model);
            put_path(&mut s, "grid", grid);
        }
        Command::Eval { checkpoint, data, .. } => {
            put_path(&mut s, "checkpoint", checkpoint);
            put_path(&mut s, "data", data);
        }
        Command::Explain { checkpoint, image, method, threshold, class, lime_samples, lime_grid, kernel_width, .. } => {
            put_path(&mut s, "checkpoint", checkpoint);
            put_path(&mut s, "image", image);
            put(&mut s, "method", method);
            put(&mut s, "threshold", threshold);
            put(&mut s, "class", class);
            put(&mut s, "lime_samples", lime_samples);
            put(&mut s, "lime_grid", lime_grid);
            put(&mut s, "kernel_width", kernel_width);
        }
        Command::Flops { model, .. } => put(&mut s, "model", model),
        Command::Info { checkpoint, .. } => put_path(&mut s, "checkpoint", checkpoint),
    }
    Ok(Resolved { command: name, settings: s })
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match resolve(&cli.command).and_then(|r| dispatch(&r)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(r: &Resolved) -> Result<()> {
    match r.command {
        "synth" => cmd_synth(r),
        "preprocess" => cmd_preprocess(r),
        "train" => cmd_train(r),
        "grid-search" => cmd_grid_search(r),
        "eval" => cmd_eval(r),
        "explain" => cmd_explain(r),
        "flops" => cmd_flops(r),
        "info" => cmd_info(r),
        other => Err(Error::Config(format!("unknown command {other}"))),
    }
}

fn cmd_synth(r: &Resolved) -> Result<()> {
    let d = SynthConfig::default();
    let kinds = match r.raw("kinds") {
        None => d.kinds.clone(),
        Some(s) => s.split(',').map(|k| k.trim().parse()).collect::<Result<Vec<DefectKind>>>()?,
    };
    let cfg = SynthConfig {
        size: r.get("size", d.size)?,
        n_defect: r.get("defect", d.n_defect)?,
        n_non_defect: r.get("non_defect", d.n_non_defect)?,
        kinds,
        layer_spacing: r.get("layer_spacing", d.layer_spacing)?,
        noise: r.get("noise", d.noise)?,
        seed: r.get("seed", 0)?,
    };
    cfg.validate()?;
    let out = r.out_dir()?;
    let (ds, _) = generate_synthetic_dataset(&cfg)?;
    export_dataset(&ds, &out)?;
    log::info!("wrote {} defect / {} non-defect images to {}", cfg.n_defect, cfg.n_non_defect, out.display());
    r.write_manifest(&out)
}

fn pipeline(r: &Resolved) -> Result<Pipeline> {
    let variant: Variant = r.get("variant", Variant::Roiheden)?;
    Pipeline::new(variant, r.get("detail_k", DEFAULT_DETAIL_K)?)
}

fn cmd_preprocess(r: &Resolved) -> Result<()> {
    let p = pipeline(r)?;
    let input = r.path("in")?;
    let out = r.out_dir()?;
    let (ds, _) = ingest_directory(&input)?;
    for label in [Label::Defect, Label::NonDefect] {
        let dir = out.join(label.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for item in &ds.items {
        let path = out.join(Path::new(&item.source_id).with_extension("png"));
        p.apply(&item.image)?.save(path)?;
    }
    let truth = input.join(GROUND_TRUTH_FILE);
    if truth.is_file() {
        std::fs::copy(&truth, out.join(GROUND_TRUTH_FILE)).map_err(|e| Error::io(&truth, e))?;
    }
    log::info!("preprocessed {} images with {}", ds.len(), p.variant);
    r.write_manifest(&out)
}

/// Builds the model selected by `backbone` (`scratch` or `canonical`).
pub fn build_model(backbone: &str, size: usize, seed_value: u64, weights: Option<&Path>) -> Result<ModelGraph<f32>> {
    let (arch, trainable) = match backbone {
        "scratch" => (Architecture::scratch(size), true),
        "canonical" => (Architecture::modified_vgg16(crate::nn::Padding::Valid), false),
        other => return Err(Error::Config(format!("unknown backbone '{other}' (scratch|canonical)"))),
    };
    let mut model = ModelGraph::init(arch, seed_value)?;
    model.backbone_trainable = trainable;
    if let Some(path) = weights {
        let ck = Checkpoint::<f32>::load(path)?;
        model.copy_backbone_from(&ck.model)?;
    }
    Ok(model)
}

fn model_and_data(r: &Resolved) -> Result<(ModelGraph<f32>, LabeledDataset, Pipeline, Option<AugmentConfig>, u64)> {
    let seed_value = r.get("seed", 0)?;
    let backbone = r.get("backbone", "scratch".to_string())?;
    let weights = r.raw("weights").map(PathBuf::from);
    let model = build_model(&backbone, r.get("size", 64)?, seed_value, weights.as_deref())?;
    if backbone == "canonical" {
        log::warn!("canonical backbone at 224x224 is slow on CPU");
    }
    let (ds, _) = ingest_directory(&r.path("data")?)?;
    let augment = (!r.flag("no_augment")?).then(AugmentConfig::default);
    Ok((model, ds, pipeline(r)?, augment, seed_value))
}

fn cmd_train(r: &Resolved) -> Result<()> {
    let d = Hyperparams::default();
    let hyper = Hyperparams {
        batch_size: r.get("batch", d.batch_size)?,
        epochs: r.get("epochs", d.epochs)?,
        learning_rate: r.get("lr", d.learning_rate)?,
    };
    hyper.validate()?;
    let (model, ds, pipe, augment, seed_value) = model_and_data(r)?;
    let out = r.out_dir()?;
    let (train, test) = split_dataset(&ds, TRAIN_SPLIT, seed_value)?;
    let (fit_set, val) = validation_split(&train, seed_value)?;
    let opts = TrainOptions { hyper, augment, seed: seed_value };
    let (predictor, history) = train_model(model, &fit_set, Some(&val), &pipe, &opts)?;
    let (report, preds) = evaluate(&predictor, &test)?;
    let mut ck = predictor.to_checkpoint();
    ck.training.insert("hyperparams".into(), serde_json::to_string(&hyper)?);
    ck.training.insert("seed".into(), seed_value.to_string());
    ck.save(out.join("model.ckpt"))?;
    RunReport::new(Some(&report), Some(&history), Some(hyper), pipe.variant, seed_value).write_json(&out.join("report.json"))?;
    write_history_csv(&out.join("history.csv"), &history)?;
    write_json(&out.join("predictions.json"), &preds)?;
    println!(
        "test accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} specificity {:.4} ({:.1}s training)",
        report.metrics.accuracy,
        report.metrics.precision,
        report.metrics.recall,
        report.metrics.f1,
        report.metrics.specificity,
        history.wall_clock_seconds
    );
    r.write_manifest(&out)
}

fn cmd_grid_search(r: &Resolved) -> Result<()> {
    let grid = match r.raw("grid") {
        Some(p) => Grid::from_map(&parse_key_values(&read_text(Path::new(p))?)?)?,
        None => Grid::default(),
    };
    let (model, ds, pipe, augment, seed_value) = model_and_data(r)?;
    let out = r.out_dir()?;
    let (train, _) = split_dataset(&ds, TRAIN_SPLIT, seed_value)?;
    let (best, board) = grid_search(&grid, model.architecture(), &train, &pipe, augment, seed_value)?;
    write_json(&out.join("leaderboard.json"), &board)?;
    write_json(&out.join("best.json"), &best)?;
    println!("best: batch {} epochs {} lr {}", best.batch_size, best.epochs, best.learning_rate);
    r.write_manifest(&out)
}

fn load_predictor(r: &Resolved) -> Result<Predictor> {
    Predictor::from_checkpoint(Checkpoint::<f32>::load(r.path("checkpoint")?)?)
}

fn cmd_eval(r: &Resolved) -> Result<()> {
    let predictor = load_predictor(r)?;
    let (ds, _) = ingest_directory(&r.path("data")?)?;
    let out = r.out_dir()?;
    let (report, preds) = evaluate(&predictor, &ds)?;
    write_json(&out.join("eval.json"), &report)?;
    write_json(&out.join("predictions.json"), &preds)?;
    println!("accuracy {:.4} f1 {:.4}", report.metrics.accuracy, report.metrics.f1);
    r.write_manifest(&out)
}

/// Explains `img` with the given predictor; the heatmap and box are at the
/// original image resolution.
pub fn explain_image(
    predictor: &Predictor,
    img: &Image,
    method: Method,
    class: Option<usize>,
    threshold: f64,
    lime: (usize, usize, f64),
    seed_value: u64,
) -> Result<Explanation> {
    let prepared = predictor.prepare(img)?;
    let x = predictor.tensor(&prepared)?;
    let probs = predictor.model.predict(&crate::nn::Tensor::stack(std::slice::from_ref(&x))?)?;
    let predicted = usize::from(probs.data()[1] > probs.data()[0]);
    let class_idx = class.unwrap_or(predicted);
    let mut e = match method {
        Method::GradCam => Explanation {
            method,
            heatmap: grad_cam(&predictor.model, &x, class_idx)?,
            segment_weights: None,
            class_idx,
            probability: 0.0,
            bbox: None,
        },
        Method::Lime => {
            let (samples, grid, width) = lime;
            let seg = segment_image(prepared.height(), prepared.width(), grid, grid)?;
            let fill: Vec<u8> = predictor.stats.mean.iter().map(|m| crate::imaging::quantize(m * 255.0)).collect();
            let mut rng = seed::stream(seed_value, seed::LIME);
            lime_explain(&PreparedInputs(predictor), &prepared, &seg, class_idx, samples, width, &fill, &mut rng)?
        }
    };
    e.probability = probs.data().get(class_idx).map(|p| *p as f64).unwrap_or(0.0);
    e.heatmap = e.heatmap.resized(img.height(), img.width());
    e.bbox = defect_bbox(&e.heatmap, threshold)?;
    Ok(e)
}

fn cmd_explain(r: &Resolved) -> Result<()> {
    let predictor = load_predictor(r)?;
    let img = Image::load(r.path("image")?)?;
    let method = match r.get("method", "grad-cam".to_string())?.as_str() {
        "grad-cam" | "gradcam" => Method::GradCam,
        "lime" => Method::Lime,
        other => return Err(Error::Config(format!("unknown method '{other}' (grad-cam|lime)"))),
    };
    let class = r.raw("class").map(|_| r.get("class", 0usize)).transpose()?;
    let lime = (r.get("lime_samples", 1000)?, r.get("lime_grid", crate::explain::DEFAULT_GRID)?, r.get("kernel_width", crate::explain::DEFAULT_KERNEL_WIDTH)?);
    let threshold = r.get("threshold", 0.6)?;
    let out = r.out_dir()?;
    let e = explain_image(&predictor, &img, method, class, threshold, lime, r.get("seed", 0)?)?;
    render_overlay(&img, Some(&e.heatmap), e.bbox, &OverlayStyle::default())?.save(out.join("overlay.png"))?;
    write_pgm(&out.join("heatmap.pgm"), &e.heatmap)?;
    write_json(&out.join("explanation.json"), &ExplanationSidecar::new(&e, 10))?;
    println!("class {} probability {:.4} box {:?}", e.class_idx, e.probability, e.bbox);
    r.write_manifest(&out)
}

#[derive(Serialize)]
struct FlopsReport {
    model: String,
    params: u64,
    flops: u64,
    flops_millions: f64,
    convention: &'static str,
    references: &'static [crate::nn::count::ReferenceRow],
}

fn cmd_flops(r: &Resolved) -> Result<()> {
    let arch = Architecture::by_name(&r.get("model", "modified-vgg16".to_string())?)?;
    let c = complexity(&arch, arch.input_shape)?;
    println!("model: {}", c.model);
    println!("input: {:?}", c.input_shape);
    println!("parameters: {} ({:.2}M)", c.params, c.params as f64 / 1e6);
    println!("FLOPs: {} ({:.0}M)", c.flops, c.flops as f64 / 1e6);
    println!("convention: {FLOP_CONVENTION}");
    if r.raw("out").is_some() {
        let out = r.out_dir()?;
        let report = FlopsReport {
            model: c.model.clone(),
            params: c.params,
            flops: c.flops,
            flops_millions: c.flops as f64 / 1e6,
            convention: FLOP_CONVENTION,
            references: &REFERENCE_ROWS,
        };
        write_json(&out.join("flops.json"), &report)?;
        r.write_manifest(&out)?;
    }
    Ok(())
}

fn cmd_info(r: &Resolved) -> Result<()> {
    let path = r.path("checkpoint")?;
    let ck = Checkpoint::<f32>::load(&path)?;
    println!("checkpoint: {}", path.display());
    println!("architecture: {}", ck.model.architecture().name);
    println!("input: {:?}", ck.model.architecture().input_shape);
    println!("parameters: {}", ck.model.param_count());
    for (k, v) in ck.metadata()? {
        if k != "architecture" {
            println!("{k}: {v}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values() {
        let s = parse_key_values("# c\nbatch = 8\n\nno-augment=true\n").unwrap();
        assert_eq!(s["batch"], "8");
        assert_eq!(s["no_augment"], "true");
        assert!(parse_key_values("oops").is_err());
        assert!(parse_key_values("= 3").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
        assert_eq!(exit_code(&Error::NonFinite("x".into())), EXIT_NUMERIC);
        assert_eq!(run(["p3d-inspect", "flops", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["p3d-inspect", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["p3d-inspect", "flops", "--model", "modified-vgg16"]), EXIT_OK);
        assert_eq!(run(["p3d-inspect", "eval"]), EXIT_USAGE);
    }
}
