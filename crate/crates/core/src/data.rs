//! Labeled datasets: a synthetic cylinder-image generator with ground-truth
//! defect boxes, plus export to and ingestion from a two-folder layout
//! (`defect/`, `non_defect/`, optional `ground_truth.json`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{quantize, Image};
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonDefect,
    Defect,
}

impl Label {
    /// Class index: defect is the positive class (index 1).
    pub fn index(self) -> usize {
        match self {
            Label::NonDefect => 0,
            Label::Defect => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 1 {
            Label::Defect
        } else {
            Label::NonDefect
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Label::NonDefect => "non_defect",
            Label::Defect => "defect",
        }
    }
}

/// Inclusive pixel box: columns `x0..=x1`, rows `y0..=y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        if x0 > x1 || y0 > y1 {
            return 0.0;
        }
        let inter = ((x1 - x0 + 1) * (y1 - y0 + 1)) as f64;
        inter / ((self.area() + other.area()) as f64 - inter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledItem {
    pub image: Image,
    pub label: Label,
    pub source_id: String,
    pub truth_box: Option<BBox>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<LabeledItem>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|i| i.label == label).count()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.items.iter().map(|i| i.label.index() as u8).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset { items: indices.iter().map(|&i| self.items[i].clone()).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Blob,
    Crack,
    LayerShift,
}

impl DefectKind {
    pub const ALL: [DefectKind; 3] = [DefectKind::Blob, DefectKind::Crack, DefectKind::LayerShift];
}

impl fmt::Display for DefectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DefectKind::Blob => "blob",
            DefectKind::Crack => "crack",
            DefectKind::LayerShift => "layer_shift",
        })
    }
}

impl FromStr for DefectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DefectKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown defect kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub size: usize,
    pub n_defect: usize,
    pub n_non_defect: usize,
    pub kinds: Vec<DefectKind>,
    pub layer_spacing: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            size: 64,
            n_defect: 100,
            n_non_defect: 100,
            kinds: DefectKind::ALL.to_vec(),
            layer_spacing: 4,
            noise: 6.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::Parameter(format!("synthetic image size must be >= 32, got {}", self.size)));
        }
        if self.n_defect + self.n_non_defect == 0 {
            return Err(Error::Parameter("synthetic dataset needs at least one sample".into()));
        }
        if self.n_defect > 0 && self.kinds.is_empty() {
            return Err(Error::Parameter("no defect kinds enabled".into()));
        }
        if self.layer_spacing == 0 || !(self.noise >= 0.0) {
            return Err(Error::Parameter("layer spacing must be >= 1 and noise >= 0".into()));
        }
        Ok(())
    }
}

/// Elliptical cylinder face in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    pub color: [f64; 3],
}

impl Face {
    /// Normalized elliptical radius; < 1 inside the face.
    pub fn radius(&self, y: f64, x: f64) -> f64 {
        (((x - self.cx) / self.rx).powi(2) + ((y - self.cy) / self.ry).powi(2)).sqrt()
    }

    pub fn contains_box(&self, b: &BBox, margin: f64) -> bool {
        [(b.y0, b.x0), (b.y0, b.x1), (b.y1, b.x0), (b.y1, b.x1)]
            .iter()
            .all(|&(y, x)| self.radius(y as f64, x as f64) <= margin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: Image,
    pub label: Label,
    pub kind: Option<DefectKind>,
    pub truth_box: Option<BBox>,
    pub face: Face,
}

const BACKGROUND: (f64, f64) = (12.0, 36.0);
const FACE_LEVEL: (f64, f64) = (165.0, 205.0);
const LINE_DROP: f64 = 14.0;
/// Per-pixel intensity jitter inside anomalies.
const DEFECT_ROUGHNESS: f64 = 40.0;
/// Fraction of anomaly pixels that are altered; the rest keep the face value.
const DEFECT_FILL: f64 = 0.65;

fn sample_seed(cfg: &SynthConfig, index: usize) -> u64 {
    seed::derive_index(seed::derive(cfg.seed, seed::SYNTH), index as u64)
}

/// Renders a defect-free cylinder image for sample `index` (no noise yet).
fn render_face(cfg: &SynthConfig, rng: &mut Rng) -> (Vec<[f64; 3]>, Face, usize) {
    let s = cfg.size as f64;
    let bg = rng.random_range(BACKGROUND.0..BACKGROUND.1);
    let level = rng.random_range(FACE_LEVEL.0..FACE_LEVEL.1);
    let tint = [1.0, rng.random_range(0.9..1.0), rng.random_range(0.78..0.92)];
    let face = Face {
        cx: s / 2.0 + rng.random_range(-0.05..0.05) * s,
        cy: s / 2.0 + rng.random_range(-0.05..0.05) * s,
        rx: rng.random_range(0.28..0.38) * s,
        ry: rng.random_range(0.30..0.40) * s,
        color: [level * tint[0], level * tint[1], level * tint[2]],
    };
    let phase = rng.random_range(0..cfg.layer_spacing);
    let mut px = vec![[bg, bg, bg * 1.05]; cfg.size * cfg.size];
    for y in 0..cfg.size {
        let line = (y + phase) % cfg.layer_spacing == 0;
        for x in 0..cfg.size {
            let r = face.radius(y as f64, x as f64);
            if r < 1.0 {
                // slight shading towards the rim
                let shade = 1.0 - 0.12 * r * r;
                let drop = if line { LINE_DROP } else { 0.0 };
                px[y * cfg.size + x] = face.color.map(|c| c * shade - drop);
            }
        }
    }
    (px, face, phase)
}

fn bbox_of(points: impl Iterator<Item = (usize, usize)>) -> Option<BBox> {
    let mut b: Option<BBox> = None;
    for (y, x) in points {
        b = Some(match b {
            None => BBox { x0: x, y0: y, x1: x, y1: y },
            Some(b) => BBox { x0: b.x0.min(x), y0: b.y0.min(y), x1: b.x1.max(x), y1: b.y1.max(y) },
        });
    }
    b
}

/// Paints one anomaly inside the face and returns its box. Anomalies are
/// darker than the face but brighter than the mean luminance, so ROI
/// selection keeps them.
fn inject_defect(px: &mut [[f64; 3]], cfg: &SynthConfig, face: &Face, phase: usize, kind: DefectKind, rng: &mut Rng) -> BBox {
    let n = cfg.size;
    let s = n as f64;
    let mean = px.iter().map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).sum::<f64>() / px.len() as f64;
    for attempt in 0..200 {
        let shrink = 1.0 - (attempt as f64 / 400.0);
        let ang = rng.random_range(0.0..std::f64::consts::TAU);
        let rad = rng.random_range(0.0..0.55);
        let cx = face.cx + rad * face.rx * ang.cos();
        let cy = face.cy + rad * face.ry * ang.sin();
        let mut mask: Vec<(usize, usize, f64)> = Vec::new();
        match kind {
            DefectKind::Blob => {
                let rx = rng.random_range(0.075..0.11) * s * shrink;
                let ry = rx * rng.random_range(0.75..1.25);
                let level = mean + rng.random_range(18.0..28.0);
                for y in 0..n {
                    for x in 0..n {
                        let d = ((x as f64 - cx) / rx).powi(2) + ((y as f64 - cy) / ry).powi(2);
                        if d <= 1.0 {
                            mask.push((y, x, level));
                        }
                    }
                }
            }
            DefectKind::Crack => {
                let len = rng.random_range(0.22..0.32) * s * shrink;
                let base = if rng.random_bool(0.5) { 0.0 } else { std::f64::consts::FRAC_PI_2 };
                let theta = base + rng.random_range(-0.45..0.45);
                let half_thick = 0.028 * s;
                let (dx, dy) = (theta.cos(), theta.sin());
                let level = mean + rng.random_range(16.0..24.0);
                for y in 0..n {
                    for x in 0..n {
                        let (vx, vy) = (x as f64 - cx, y as f64 - cy);
                        let along = vx * dx + vy * dy;
                        let across = (-vx * dy + vy * dx).abs();
                        if along.abs() <= len / 2.0 && across <= half_thick {
                            mask.push((y, x, level));
                        }
                    }
                }
            }
            DefectKind::LayerShift => {
                let w = rng.random_range(0.26..0.36) * s * shrink;
                let h = rng.random_range(0.09..0.13) * s * shrink;
                let (x0, x1) = ((cx - w / 2.0).round(), (cx + w / 2.0).round());
                let (y0, y1) = ((cy - h / 2.0).round(), (cy + h / 2.0).round());
                let level = mean + rng.random_range(28.0..38.0);
                let shift = (cfg.layer_spacing / 2).max(1);
                for y in (y0.max(0.0) as usize)..=(y1.min(s - 1.0) as usize) {
                    let line = (y + phase + shift) % cfg.layer_spacing == 0;
                    for x in (x0.max(0.0) as usize)..=(x1.min(s - 1.0) as usize) {
                        mask.push((y, x, if line { level - 12.0 } else { level }));
                    }
                }
            }
        }
        let Some(b) = bbox_of(mask.iter().map(|&(y, x, _)| (y, x))) else { continue };
        if b.area() < 4 || !face.contains_box(&b, 0.92) {
            continue;
        }
        let luma = 0.299 * face.color[0] + 0.587 * face.color[1] + 0.114 * face.color[2];
        let tint = face.color.map(|c| c / luma);
        for (y, x, level) in mask {
            if rng.random_bool(DEFECT_FILL) {
                let rough = rng.random_range(-DEFECT_ROUGHNESS..DEFECT_ROUGHNESS);
                px[y * n + x] = tint.map(|t| (level + rough) * t);
            }
        }
        return b;
    }
    // Fallback: small blob at the face center.
    let r = (0.06 * s).max(2.0);
    let b = BBox {
        x0: (face.cx - r).round() as usize,
        y0: (face.cy - r).round() as usize,
        x1: (face.cx + r).round() as usize,
        y1: (face.cy + r).round() as usize,
    };
    for y in b.y0..=b.y1 {
        for x in b.x0..=b.x1 {
            px[y * n + x] = face.color.map(|c| c * 0.7);
        }
    }
    b
}

fn finish(px: Vec<[f64; 3]>, cfg: &SynthConfig, rng: &mut Rng) -> Image {
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let data = px
        .into_iter()
        .flat_map(|p| {
            let n = if cfg.noise > 0.0 { noise.sample(rng) } else { 0.0 };
            p.map(|c| quantize(c + n))
        })
        .collect();
    Image::rgb(cfg.size, cfg.size, data).expect("consistent size")
}

/// Renders sample `index`. `defect` selects whether an anomaly is injected;
/// everything else (face, lines, noise) depends only on `index`, so the same
/// index with and without a defect yields a matched pair.
pub fn synth_sample(cfg: &SynthConfig, index: usize, defect: bool) -> SynthSample {
    let seed = sample_seed(cfg, index);
    let mut base_rng = seed::stream(seed, "face");
    let (mut px, face, phase) = render_face(cfg, &mut base_rng);
    let (label, kind, truth_box) = if defect {
        let mut drng = seed::stream(seed, "defect");
        let kind = cfg.kinds[drng.random_range(0..cfg.kinds.len())];
        let b = inject_defect(&mut px, cfg, &face, phase, kind, &mut drng);
        (Label::Defect, Some(kind), Some(b))
    } else {
        (Label::NonDefect, None, None)
    };
    let image = finish(px, cfg, &mut seed::stream(seed, "noise"));
    SynthSample { image, label, kind, truth_box, face }
}

/// Defect samples occupy indices `0..n_defect`, non-defect samples follow.
pub fn generate_synthetic_dataset(cfg: &SynthConfig) -> Result<(LabeledDataset, Vec<SynthSample>)> {
    cfg.validate()?;
    let total = cfg.n_defect + cfg.n_non_defect;
    let samples: Vec<SynthSample> = (0..total).into_par_iter().map(|i| synth_sample(cfg, i, i < cfg.n_defect)).collect();
    let mut counters = [0usize; 2];
    let items = samples
        .iter()
        .map(|s| {
            let idx = &mut counters[s.label.index()];
            let source_id = format!("{}/{:04}.png", s.label.dir_name(), *idx);
            *idx += 1;
            LabeledItem { image: s.image.clone(), label: s.label, source_id, truth_box: s.truth_box }
        })
        .collect();
    Ok((LabeledDataset { items }, samples))
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Writes `root/{defect,non_defect}/NNNN.png` and `root/ground_truth.json`.
pub fn export_dataset(ds: &LabeledDataset, root: &Path) -> Result<()> {
    let mut truth = BTreeMap::new();
    let mut counters = [0usize; 2];
    for label in [Label::Defect, Label::NonDefect] {
        let dir = root.join(label.dir_name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for item in &ds.items {
        let idx = &mut counters[item.label.index()];
        let rel = format!("{}/{:04}.png", item.label.dir_name(), *idx);
        *idx += 1;
        item.image.save(root.join(&rel))?;
        if let Some(b) = item.truth_box {
            truth.insert(rel, b);
        }
    }
    let path = root.join(GROUND_TRUTH_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&truth)?).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub defect: usize,
    pub non_defect: usize,
    pub skipped: Vec<String>,
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Loads every decodable image under `root/defect` and `root/non_defect`,
/// ordered by label then filename. Undecodable files are skipped and reported.
pub fn ingest_directory(root: &Path) -> Result<(LabeledDataset, IngestReport)> {
    let mut report = IngestReport::default();
    let mut items = Vec::new();
    let truth: BTreeMap<String, BBox> = match std::fs::read_to_string(root.join(GROUND_TRUTH_FILE)) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => BTreeMap::new(),
    };
    for label in [Label::Defect, Label::NonDefect] {
        let dir = root.join(label.dir_name());
        if !dir.is_dir() {
            return Err(Error::Data(format!("missing class directory {}", dir.display())));
        }
        for path in list_images(&dir)? {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let source_id = format!("{}/{name}", label.dir_name());
            match Image::load(&path) {
                Ok(image) => {
                    let truth_box = truth.get(&source_id).copied();
                    items.push(LabeledItem { image, label, source_id, truth_box });
                    match label {
                        Label::Defect => report.defect += 1,
                        Label::NonDefect => report.non_defect += 1,
                    }
                }
                Err(e) => {
                    log::warn!("skipping {}: {e}", path.display());
                    report.skipped.push(source_id);
                }
            }
        }
    }
    log::info!("ingested {} defect / {} non-defect images ({} skipped)", report.defect, report.non_defect, report.skipped.len());
    Ok((LabeledDataset { items }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(d: usize, n: usize) -> SynthConfig {
        SynthConfig { n_defect: d, n_non_defect: n, seed: 7, ..SynthConfig::default() }
    }

    #[test]
    fn count_contract() {
        let (ds, _) = generate_synthetic_dataset(&cfg(0, 5)).unwrap();
        assert_eq!(ds.len(), 5);
        assert!(ds.items.iter().all(|i| i.label == Label::NonDefect && i.truth_box.is_none()));
        assert!(generate_synthetic_dataset(&cfg(0, 0)).is_err());
        assert!(generate_synthetic_dataset(&SynthConfig { size: 16, ..cfg(1, 1) }).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, _) = generate_synthetic_dataset(&cfg(3, 3)).unwrap();
        let (b, _) = generate_synthetic_dataset(&cfg(3, 3)).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_synthetic_dataset(&SynthConfig { seed: 8, ..cfg(3, 3) }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn boxes_lie_inside_face() {
        let (_, samples) = generate_synthetic_dataset(&cfg(60, 0)).unwrap();
        for s in &samples {
            let b = s.truth_box.unwrap();
            assert!(b.area() > 0);
            assert!(s.face.contains_box(&b, 1.0), "{b:?} outside {:?}", s.face);
        }
    }

    #[test]
    fn defect_boxes_stand_out_from_clean_twins() {
        let c = cfg(100, 100);
        let (_, samples) = generate_synthetic_dataset(&c).unwrap();
        let box_mean = |img: &Image, b: &BBox| {
            let lum = img.luminance();
            let mut sum = 0.0;
            for y in b.y0..=b.y1 {
                for x in b.x0..=b.x1 {
                    sum += lum[y * img.width() + x];
                }
            }
            sum / b.area() as f64
        };
        let diffs: Vec<f64> = samples
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.truth_box.map(|b| (i, s, b)))
            .map(|(i, s, b)| (box_mean(&s.image, &b) - box_mean(&synth_sample(&c, i, false).image, &b)).abs())
            .collect();
        assert_eq!(diffs.len(), 100);
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        assert!(mean >= 20.0, "mean contrast {mean:.1}");
    }

    #[test]
    fn iou_basics() {
        let a = BBox { x0: 0, y0: 0, x1: 1, y1: 1 };
        assert_eq!(a.iou(&a), 1.0);
        let b = BBox { x0: 2, y0: 2, x1: 3, y1: 3 };
        assert_eq!(a.iou(&b), 0.0);
        let c = BBox { x0: 1, y0: 0, x1: 2, y1: 1 };
        assert!((a.iou(&c) - 2.0 / 6.0).abs() < 1e-12);
    }
}
