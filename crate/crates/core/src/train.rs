//! Dataset splitting, the training loop, evaluation metrics and grid search.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_augment, sample_augment_params, AugmentConfig};
use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::imaging::{apply_standardizer, fit_standardizer, resize, Image, Pipeline, StandardizerStats, Variant};
use crate::nn::{adam_step, bce_loss, AdamConfig, AdamState, Architecture, Checkpoint, Mode, ModelGraph, Scalar, Tensor, POSITIVE_CLASS};
use crate::seed;

/// Stratified split: for each class, `floor(ratio * n_class)` shuffled items
/// go to the first part, the rest to the second. Both parts keep dataset order.
pub fn split_dataset(d: &LabeledDataset, ratio: f64, seed_value: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if d.is_empty() {
        return Err(Error::Data("cannot split an empty dataset".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut rng = seed::stream(seed_value, seed::SPLIT);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for label in [Label::NonDefect, Label::Defect] {
        let mut idx: Vec<usize> = (0..d.len()).filter(|&i| d.items[i].label == label).collect();
        let n = idx.len();
        if n == 0 {
            return Err(Error::Data(format!("class {} has no items", label.dir_name())));
        }
        let k = (ratio * n as f64).floor() as usize;
        if k == 0 || k == n {
            return Err(Error::Data(format!(
                "class {} with {n} items leaves an empty side at ratio {ratio}",
                label.dir_name()
            )));
        }
        idx.shuffle(&mut rng);
        first.extend_from_slice(&idx[..k]);
        second.extend_from_slice(&idx[k..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((d.subset(&first), d.subset(&second)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { batch_size: 8, epochs: 30, learning_rate: 0.001 }
    }
}

impl Hyperparams {
    /// Learning rate zero is accepted (no-op optimizer); negatives are not.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Parameter("batch size and epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub ta: f64,
    pub va: Option<f64>,
    pub tl: f64,
    pub vl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_seconds: f64,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Curve data as `epoch,ta,va,tl,vl`; missing validation values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,ta,va,tl,vl\n");
        for r in &self.epochs {
            out.push_str(&format!("{},{},{},{},{}\n", r.epoch, r.ta, opt(r.va), r.tl, opt(r.vl)));
        }
        out
    }
}

/// Source of training samples for [`fit`].
pub trait SampleSource<T>: Sync {
    fn len(&self) -> usize;
    fn label(&self, i: usize) -> u8;
    /// Input tensor for sample `i` in `epoch`. Must be a pure function of its arguments.
    fn input(&self, i: usize, epoch: usize) -> Result<Tensor<T>>;
}

/// Pre-built tensors used as-is every epoch.
pub struct TensorSet<T> {
    pub inputs: Vec<Tensor<T>>,
    pub labels: Vec<u8>,
}

impl<T: Scalar> SampleSource<T> for TensorSet<T> {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    fn input(&self, i: usize, _epoch: usize) -> Result<Tensor<T>> {
        Ok(self.inputs[i].clone())
    }
}

fn predicted_class<T: Scalar>(row: &[T]) -> u8 {
    let best = row
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > row[best] { i } else { best });
    u8::from(best == POSITIVE_CLASS)
}

fn positive_probs<T: Scalar>(probs: &Tensor<T>) -> Vec<f64> {
    probs.data().chunks_exact(2).map(|r| r[POSITIVE_CLASS].f64()).collect()
}

/// Inference-mode accuracy and mean loss over a tensor set.
pub fn score<T: Scalar>(model: &ModelGraph<T>, set: &TensorSet<T>) -> Result<(f64, f64)> {
    let probs = model.predict(&Tensor::stack(&set.inputs)?)?;
    let correct = probs
        .data()
        .chunks_exact(2)
        .zip(&set.labels)
        .filter(|(r, &y)| predicted_class(r) == y)
        .count();
    let loss = bce_loss(&set.labels, &positive_probs(&probs))?;
    Ok((correct as f64 / set.len() as f64, loss))
}

/// Mini-batch Adam training with binary cross-entropy. Sample order, dropout
/// masks and per-sample inputs all derive from `seed_value`, so a run is
/// reproducible regardless of thread count.
pub fn fit<T: Scalar>(
    model: &mut ModelGraph<T>,
    train: &dyn SampleSource<T>,
    val: Option<&TensorSet<T>>,
    h: &Hyperparams,
    seed_value: u64,
) -> Result<TrainHistory> {
    h.validate()?;
    let n = train.len();
    if n == 0 {
        return Err(Error::Data("training set is empty".into()));
    }
    let batch = if h.batch_size > n {
        log::warn!("batch size {} exceeds {n} training samples; using a single batch", h.batch_size);
        n
    } else {
        h.batch_size
    };
    let shuffle_root = seed::derive(seed_value, seed::SHUFFLE);
    let dropout_root = seed::derive(seed_value, seed::DROPOUT);
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(h.learning_rate), model.trainable_params());
    let mut history = Vec::with_capacity(h.epochs);
    let t1 = Instant::now();
    for epoch in 0..h.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::indexed(shuffle_root, epoch as u64));
        let epoch_dropout = seed::derive_index(dropout_root, epoch as u64);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(batch).enumerate() {
            let inputs: Vec<Tensor<T>> = chunk.par_iter().map(|&i| train.input(i, epoch)).collect::<Result<_>>()?;
            let labels: Vec<u8> = chunk.iter().map(|&i| train.label(i)).collect();
            let x = Tensor::stack(&inputs)?;
            let (probs, cache) = model.forward(&x, Mode::Train, seed::derive_index(epoch_dropout, b as u64))?;
            let (loss, grads) = model.backward(&cache, &probs, &labels)?;
            if !loss.is_finite() || grads.tensors.iter().any(|g| !g.all_finite()) {
                return Err(Error::NonFinite(format!("loss {loss} at epoch {} batch {b}", epoch + 1)));
            }
            loss_sum += loss * chunk.len() as f64;
            correct += probs
                .data()
                .chunks_exact(2)
                .zip(&labels)
                .filter(|(r, &y)| predicted_class(r) == y)
                .count();
            adam_step(&mut model.trainable_params_mut(), &grads.tensors, &mut adam)?;
        }
        let (va, vl) = match val {
            Some(v) if v.len() > 0 => {
                let (a, l) = score(model, v)?;
                (Some(a), Some(l))
            }
            _ => (None, None),
        };
        let rec = EpochRecord { epoch: epoch + 1, ta: correct as f64 / n as f64, va, tl: loss_sum / n as f64, vl };
        log::debug!("epoch {}: tl={:.4} ta={:.3} vl={:?} va={:?}", rec.epoch, rec.tl, rec.ta, rec.vl, rec.va);
        history.push(rec);
    }
    Ok(TrainHistory { epochs: history, wall_clock_seconds: t1.elapsed().as_secs_f64() })
}

/// A trained model together with the preprocessing it expects.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub model: ModelGraph<f32>,
    pub stats: StandardizerStats,
    pub pipeline: Pipeline,
}

impl Predictor {
    /// Pipeline variant then resize to the model input; grayscale inputs are
    /// expanded to RGB for 3-channel models.
    pub fn prepare_with(model: &ModelGraph<f32>, pipeline: &Pipeline, img: &Image) -> Result<Image> {
        let [h, w, c] = model.architecture().input_shape;
        let img = if c == 3 && img.channels() == 1 { img.to_rgb() } else { img.clone() };
        if img.channels() != c {
            return Err(Error::Shape(format!("model expects {c} channels, image has {}", img.channels())));
        }
        let processed = pipeline.apply(&img)?;
        if processed.height() == h && processed.width() == w {
            Ok(processed)
        } else {
            resize(&processed, h, w)
        }
    }

    pub fn prepare(&self, img: &Image) -> Result<Image> {
        Self::prepare_with(&self.model, &self.pipeline, img)
    }

    /// Standardized model input for an already prepared image.
    pub fn tensor(&self, prepared: &Image) -> Result<Tensor<f32>> {
        apply_standardizer(&Tensor::from_image(prepared), &self.stats)
    }

    pub fn input(&self, img: &Image) -> Result<Tensor<f32>> {
        self.tensor(&self.prepare(img)?)
    }

    /// Inference-mode class probabilities for each image.
    pub fn predict_probs(&self, images: &[Image]) -> Result<Vec<[f64; 2]>> {
        let inputs: Vec<Tensor<f32>> = images.par_iter().map(|i| self.input(i)).collect::<Result<_>>()?;
        let probs = self.model.predict(&Tensor::stack(&inputs)?)?;
        Ok(probs.data().chunks_exact(2).map(|r| [r[0].f64(), r[1].f64()]).collect())
    }

    pub fn tensor_set(&self, d: &LabeledDataset) -> Result<TensorSet<f32>> {
        let inputs = d.items.par_iter().map(|it| self.input(&it.image)).collect::<Result<_>>()?;
        Ok(TensorSet { inputs, labels: d.labels() })
    }

    pub fn to_checkpoint(&self) -> Checkpoint<f32> {
        Checkpoint {
            model: self.model.clone(),
            standardizer: Some(self.stats.clone()),
            pipeline: Some(self.pipeline),
            training: BTreeMap::new(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint<f32>) -> Result<Self> {
        let channels = ck.model.architecture().input_shape[2];
        Ok(Self {
            stats: ck.standardizer.unwrap_or_else(|| StandardizerStats::identity(channels)),
            pipeline: ck.pipeline.unwrap_or_else(|| Pipeline::of(Variant::Plain)),
            model: ck.model,
        })
    }
}

/// Training images after pipeline + resize, augmented on the fly.
struct AugmentedImages<'a> {
    predictor: &'a Predictor,
    images: Vec<Image>,
    labels: Vec<u8>,
    augment: Option<AugmentConfig>,
    augment_root: u64,
}

impl SampleSource<f32> for AugmentedImages<'_> {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    fn input(&self, i: usize, epoch: usize) -> Result<Tensor<f32>> {
        let img = &self.images[i];
        match &self.augment {
            Some(cfg) => {
                let epoch_root = seed::derive_index(self.augment_root, epoch as u64);
                let mut rng = seed::indexed(epoch_root, i as u64);
                let p = sample_augment_params(&mut rng, cfg, img.height(), img.width());
                self.predictor.tensor(&apply_augment(img, &p))
            }
            None => self.predictor.tensor(img),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub hyper: Hyperparams,
    /// `None` disables augmentation.
    pub augment: Option<AugmentConfig>,
    pub seed: u64,
}

/// Fits the standardizer on the (preprocessed) training images, then trains
/// the model. Augmentation touches training samples only; validation inputs
/// go through [`Predictor::tensor_set`], which has no augmentation path.
pub fn train_model(
    model: ModelGraph<f32>,
    train: &LabeledDataset,
    val: Option<&LabeledDataset>,
    pipeline: &Pipeline,
    opts: &TrainOptions,
) -> Result<(Predictor, TrainHistory)> {
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if let Some(cfg) = &opts.augment {
        cfg.validate()?;
    }
    let images: Vec<Image> = train
        .items
        .par_iter()
        .map(|it| Predictor::prepare_with(&model, pipeline, &it.image))
        .collect::<Result<_>>()?;
    let stats = fit_standardizer(&images)?;
    let mut predictor = Predictor { model, stats, pipeline: *pipeline };
    let val_set = val.filter(|v| !v.is_empty()).map(|v| predictor.tensor_set(v)).transpose()?;
    let history = {
        let source = AugmentedImages {
            predictor: &predictor,
            images,
            labels: train.labels(),
            augment: opts.augment.clone(),
            augment_root: seed::derive(opts.seed, seed::AUGMENT),
        };
        let mut model = predictor.model.clone();
        let history = fit(&mut model, &source, val_set.as_ref(), &opts.hyper, opts.seed)?;
        drop(source);
        predictor.model = model;
        history
    };
    Ok((predictor, history))
}

/// Convenience: architecture init seeded from the run seed.
pub fn init_model(arch: Architecture, seed_value: u64) -> Result<ModelGraph<f32>> {
    ModelGraph::init(arch, seed_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
}

/// Set when the metric's denominator was zero and 0 was reported instead.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    pub accuracy: bool,
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
    pub specificity: bool,
}

impl MetricFlags {
    pub fn any(&self) -> bool {
        self.accuracy || self.precision || self.recall || self.f1 || self.specificity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: Counts,
    pub metrics: Metrics,
    pub flags: MetricFlags,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

impl EvalReport {
    pub fn from_counts(counts: Counts) -> Self {
        let Counts { tp, fp, tn, fn_ } = counts;
        let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
        let (accuracy, fa) = ratio(tp + tn, tp + tn + fp + fn_);
        let (precision, fpr) = ratio(tp, tp + fp);
        let (recall, fr) = ratio(tp, tp + fn_);
        let (specificity, fs) = ratio(tn, tn + fp);
        let (f1, ff) = if fpr || fr {
            (0.0, true)
        } else {
            ratio(2.0 * precision * recall, precision + recall)
        };
        Self {
            counts,
            metrics: Metrics { accuracy, precision, recall, f1, specificity },
            flags: MetricFlags { accuracy: fa, precision: fpr, recall: fr, f1: ff, specificity: fs },
        }
    }

    /// Confusion counts from per-sample predicted and true labels (1 = defect).
    pub fn from_predictions(predicted: &[u8], truth: &[u8]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Shape(format!("{} predictions vs {} labels", predicted.len(), truth.len())));
        }
        let mut c = Counts { tp: 0, fp: 0, tn: 0, fn_: 0 };
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p == 1, t == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(Self::from_counts(c))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub source_id: String,
    pub label: u8,
    pub predicted: u8,
    pub probability: f64,
}

/// Argmax classification of every test item.
pub fn evaluate(predictor: &Predictor, test: &LabeledDataset) -> Result<(EvalReport, Vec<SamplePrediction>)> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let images: Vec<Image> = test.items.iter().map(|i| i.image.clone()).collect();
    let probs = predictor.predict_probs(&images)?;
    let preds: Vec<SamplePrediction> = test
        .items
        .iter()
        .zip(&probs)
        .map(|(it, p)| SamplePrediction {
            source_id: it.source_id.clone(),
            label: it.label.index() as u8,
            predicted: predicted_class(p),
            probability: p[POSITIVE_CLASS],
        })
        .collect();
    let predicted: Vec<u8> = preds.iter().map(|p| p.predicted).collect();
    Ok((EvalReport::from_predictions(&predicted, &test.labels())?, preds))
}

/// Candidate lists for grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { batch_sizes: vec![4, 5, 8, 10], epochs: vec![10, 20, 30, 40], learning_rates: vec![0.001, 0.01, 0.1] }
    }
}

impl Grid {
    /// Every combination in lexicographic (batch, epochs, lr) order.
    pub fn candidates(&self) -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for &batch_size in &self.batch_sizes {
            for &epochs in &self.epochs {
                for &learning_rate in &self.learning_rates {
                    out.push(Hyperparams { batch_size, epochs, learning_rate });
                }
            }
        }
        out
    }

    /// Reads `batch_size`, `epochs`, `learning_rate` as comma-separated lists;
    /// missing keys keep their defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        fn list<V: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, default: Vec<V>) -> Result<Vec<V>> {
            match map.get(key) {
                None => Ok(default),
                Some(s) => s
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse().map_err(|_| Error::Config(format!("invalid {key} entry '{t}'"))))
                    .collect(),
            }
        }
        let d = Grid::default();
        Ok(Self {
            batch_sizes: list(map, "batch_size", d.batch_sizes)?,
            epochs: list(map, "epochs", d.epochs)?,
            learning_rates: list(map, "learning_rate", d.learning_rates)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub hyperparams: Hyperparams,
    pub va: f64,
    pub vl: f64,
    pub ta: f64,
    pub tl: f64,
    pub wall_clock_seconds: f64,
}

/// Highest validation accuracy first, then lowest validation loss, then
/// ascending (batch, epochs, lr).
pub fn rank_candidates(mut entries: Vec<LeaderboardEntry>) -> Vec<LeaderboardEntry> {
    entries.sort_by(|a, b| {
        b.va.total_cmp(&a.va)
            .then(a.vl.total_cmp(&b.vl))
            .then(a.hyperparams.batch_size.cmp(&b.hyperparams.batch_size))
            .then(a.hyperparams.epochs.cmp(&b.hyperparams.epochs))
            .then(a.hyperparams.learning_rate.total_cmp(&b.hyperparams.learning_rate))
    });
    entries
}

/// Fraction of the training split held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.15;

/// Holds out a seeded, stratified validation subset of `train`.
pub fn validation_split(train: &LabeledDataset, seed_value: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    split_dataset(train, 1.0 - VALIDATION_FRACTION, seed::derive(seed_value, "validation"))
}

/// Trains every grid combination from the same initialization on a common
/// train/validation split and ranks them. Candidates run in parallel.
pub fn grid_search(
    grid: &Grid,
    arch: &Architecture,
    data: &LabeledDataset,
    pipeline: &Pipeline,
    augment: Option<AugmentConfig>,
    seed_value: u64,
) -> Result<(Hyperparams, Vec<LeaderboardEntry>)> {
    let candidates = grid.candidates();
    if candidates.is_empty() {
        return Err(Error::Config("grid search needs at least one candidate".into()));
    }
    for c in &candidates {
        c.validate()?;
    }
    let (train, val) = validation_split(data, seed_value)?;
    let init = init_model(arch.clone(), seed_value)?;
    let entries: Vec<LeaderboardEntry> = candidates
        .par_iter()
        .map(|h| {
            let opts = TrainOptions { hyper: *h, augment: augment.clone(), seed: seed_value };
            let (_, hist) = train_model(init.clone(), &train, Some(&val), pipeline, &opts)?;
            let last = hist.last().expect("epochs >= 1");
            log::info!("candidate {h:?}: va={:?} vl={:?}", last.va, last.vl);
            Ok(LeaderboardEntry {
                hyperparams: *h,
                va: last.va.unwrap_or(0.0),
                vl: last.vl.unwrap_or(f64::INFINITY),
                ta: last.ta,
                tl: last.tl,
                wall_clock_seconds: hist.wall_clock_seconds,
            })
        })
        .collect::<Result<_>>()?;
    let ranked = rank_candidates(entries);
    Ok((ranked[0].hyperparams, ranked))
}

/// Serialized training/evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub counts: Option<Counts>,
    pub metrics: Option<Metrics>,
    pub flags: Option<MetricFlags>,
    pub history: Vec<EpochRecord>,
    pub wall_clock_seconds: f64,
    pub hyperparams: Option<Hyperparams>,
    pub pipeline_variant: Variant,
    pub seed: u64,
}

impl RunReport {
    pub fn new(eval: Option<&EvalReport>, history: Option<&TrainHistory>, hyperparams: Option<Hyperparams>, variant: Variant, seed_value: u64) -> Self {
        Self {
            counts: eval.map(|e| e.counts),
            metrics: eval.map(|e| e.metrics),
            flags: eval.map(|e| e.flags),
            history: history.map(|h| h.epochs.clone()).unwrap_or_default(),
            wall_clock_seconds: history.map_or(0.0, |h| h.wall_clock_seconds),
            hyperparams,
            pipeline_variant: variant,
            seed: seed_value,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

pub fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    std::fs::write(path, history.to_csv()).map_err(|e| Error::io(path, e))
}
