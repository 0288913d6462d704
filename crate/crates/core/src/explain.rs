//! Grad-CAM and LIME explanations, heatmap boxes, overlays and export.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::BBox;
use crate::error::{Error, Result};
use crate::imaging::{quantize, source_coord, Image};
use crate::nn::{LayerCache, LayerSpec, Mode, ModelGraph, Padding, Scalar, Section, Tensor};
use crate::seed::{self, Rng};
use crate::train::Predictor;

/// Per-pixel relevance in [0, 1] at image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    /// The underlying map had no positive mass; all values are zero.
    pub all_zero: bool,
}

impl Heatmap {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, values: vec![0.0; height * width], all_zero: true }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Row-major position of the maximum (first occurrence).
    pub fn argmax(&self) -> (usize, usize) {
        let i = self
            .values
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > self.values[best] { i } else { best });
        (i / self.width, i % self.width)
    }

    /// Bilinear resampling to another resolution.
    pub fn resized(&self, height: usize, width: usize) -> Heatmap {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut values = Vec::with_capacity(height * width);
        let split = |s: f64, n: usize| {
            let i0 = s.floor() as usize;
            (i0, (i0 + 1).min(n - 1), s - i0 as f64)
        };
        for y in 0..height {
            let (y0, y1, fy) = split(source_coord(y, height, self.height), self.height);
            for x in 0..width {
                let (x0, x1, fx) = split(source_coord(x, width, self.width), self.width);
                let top = self.get(y0, x0) * (1.0 - fx) + self.get(y0, x1) * fx;
                let bottom = self.get(y1, x0) * (1.0 - fx) + self.get(y1, x1) * fx;
                values.push(top * (1.0 - fy) + bottom * fy);
            }
        }
        Heatmap { height, width, values, all_zero: self.all_zero }
    }

    /// 8-bit grayscale rendering.
    pub fn to_image(&self) -> Image {
        let data = self.values.iter().map(|v| quantize(v * 255.0)).collect();
        Image::gray(self.height, self.width, data).expect("consistent size")
    }
}

/// ReLU of the gradient-weighted channel sum, min-max normalized.
///
/// `activations` and `gradients` are (h, w, k). Channel weights are spatial
/// means of the gradients. Returns the (h*w) map and whether it was all zero.
pub fn grad_cam_from_activations(activations: &Tensor<f64>, gradients: &Tensor<f64>) -> Result<(Vec<f64>, bool)> {
    if activations.shape() != gradients.shape() || activations.rank() != 3 {
        return Err(Error::Shape(format!(
            "activations {:?} and gradients {:?} must be equal (h, w, k)",
            activations.shape(),
            gradients.shape()
        )));
    }
    let [h, w, k] = [activations.shape()[0], activations.shape()[1], activations.shape()[2]];
    let mut weights = vec![0.0; k];
    for px in gradients.data().chunks_exact(k) {
        for (wk, g) in weights.iter_mut().zip(px) {
            *wk += g;
        }
    }
    weights.iter_mut().for_each(|wk| *wk /= (h * w) as f64);
    let mut cam: Vec<f64> = activations
        .data()
        .chunks_exact(k)
        .map(|a| a.iter().zip(&weights).map(|(a, w)| a * w).sum::<f64>().max(0.0))
        .collect();
    let max = cam.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Ok((vec![0.0; h * w], true));
    }
    let min = cam.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        cam.iter_mut().for_each(|v| *v = 1.0);
    } else {
        cam.iter_mut().for_each(|v| *v = (*v - min) / (max - min));
    }
    Ok((cam, false))
}

/// Maps activation coordinate `u` of a layer output to the input pixel at the
/// center of its receptive field: `pixel = offset + scale * u` (per axis).
fn receptive_geometry(specs: &[&LayerSpec], shapes: &[Vec<usize>]) -> [(f64, f64); 2] {
    let mut geo = [(0.0, 1.0); 2];
    for (spec, input) in specs.iter().zip(shapes) {
        let (kernel, stride, padding) = match spec {
            LayerSpec::Conv2D { kernel, stride, padding, .. } => (*kernel, *stride, *padding),
            LayerSpec::SeparableConv2D { kernel, padding, .. } => (*kernel, 1, *padding),
            LayerSpec::MaxPool2D { pool } | LayerSpec::AveragePooling2D { pool } => (*pool, *pool, Padding::Valid),
            _ => continue,
        };
        for (axis, g) in geo.iter_mut().enumerate() {
            let n = input[axis];
            let pad_before = match padding {
                Padding::Valid => 0,
                Padding::Same => {
                    let out = n.div_ceil(stride);
                    ((out - 1) * stride + kernel).saturating_sub(n) / 2
                }
            };
            let local_offset = (kernel as f64 - 1.0) / 2.0 - pad_before as f64;
            *g = (g.0 + g.1 * local_offset, g.1 * stride as f64);
        }
    }
    geo
}

fn upsample_cells(cam: &[f64], ch: usize, cw: usize, geo: [(f64, f64); 2], height: usize, width: usize) -> Vec<f64> {
    let locate = |p: usize, (offset, scale): (f64, f64), n: usize| {
        let u = ((p as f64 - offset) / scale).clamp(0.0, (n - 1) as f64);
        let u0 = u.floor() as usize;
        (u0, (u0 + 1).min(n - 1), u - u0 as f64)
    };
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let (y0, y1, fy) = locate(y, geo[0], ch);
        for x in 0..width {
            let (x0, x1, fx) = locate(x, geo[1], cw);
            let at = |r: usize, c: usize| cam[r * cw + c];
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
            let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Grad-CAM for one standardized model input `x`.
///
/// Target layer: the last convolutional layer of the head (the separable
/// convolution for the standard head). Class score: the pre-softmax logit.
/// The cell map is upsampled to input resolution with each cell anchored at
/// its receptive-field center.
pub fn grad_cam<T: Scalar>(model: &ModelGraph<T>, x: &Tensor<T>, class_idx: usize) -> Result<Heatmap> {
    let head = model.layers(Section::Head);
    let target = head
        .iter()
        .rposition(|l| matches!(l.spec, LayerSpec::SeparableConv2D { .. } | LayerSpec::Conv2D { .. }))
        .ok_or_else(|| Error::Parameter("Grad-CAM needs a convolutional layer in the head".into()))?;
    let logits = match head.last().map(|l| &l.spec) {
        Some(LayerSpec::Softmax) if head.len() >= 2 => head.len() - 2,
        _ => head.len() - 1,
    };
    if logits <= target {
        return Err(Error::Parameter("Grad-CAM target layer must precede the logits".into()));
    }
    let mut rng = seed::indexed(0, 0);
    let (_, sc) = model.forward_sample(x, Mode::Infer, &mut rng, false)?;
    let k = sc.head[logits].output().map(Tensor::len).unwrap_or(0);
    if class_idx >= k {
        return Err(Error::Parameter(format!("class {class_idx} out of range for {k} outputs")));
    }
    let mut dy = Tensor::<T>::zeros(&[k]);
    dy.data_mut()[class_idx] = T::one();
    let grads = model.head_backward(&sc, logits, target + 1, dy, None)?;
    let acts = match &sc.head[target] {
        LayerCache::Conv { output, .. } | LayerCache::Separable { output, .. } => output,
        _ => unreachable!("target is a convolution"),
    };
    let (cam, all_zero) = grad_cam_from_activations(&acts.cast(), &grads.cast())?;
    let arch = model.architecture();
    let shapes = arch.shapes()?;
    let specs: Vec<&LayerSpec> = arch.backbone.iter().chain(&arch.head).take(arch.backbone.len() + target + 1).collect();
    let geo = receptive_geometry(&specs, &shapes);
    let [height, width, _] = arch.input_shape;
    let values = upsample_cells(&cam, acts.shape()[0], acts.shape()[1], geo, height, width);
    Ok(Heatmap { height, width, values, all_zero })
}

/// Regular-grid superpixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMap {
    pub height: usize,
    pub width: usize,
    pub ids: Vec<usize>,
    pub count: usize,
}

impl SegmentMap {
    pub fn id(&self, y: usize, x: usize) -> usize {
        self.ids[y * self.width + x]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        self.ids.iter().for_each(|&i| sizes[i] += 1);
        sizes
    }
}

/// `rows x cols` grid; the last row and column absorb remainders.
pub fn segment_image(height: usize, width: usize, rows: usize, cols: usize) -> Result<SegmentMap> {
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter("grid dimensions must be >= 1".into()));
    }
    if rows > height || cols > width {
        return Err(Error::Dimension(format!("{rows}x{cols} grid exceeds {height}x{width} image")));
    }
    let (ch, cw) = (height / rows, width / cols);
    let ids = (0..height)
        .flat_map(|y| (0..width).map(move |x| (y / ch).min(rows - 1) * cols + (x / cw).min(cols - 1)))
        .collect();
    Ok(SegmentMap { height, width, ids, count: rows * cols })
}

/// Anything that scores images with class probabilities.
pub trait ProbabilityModel: Sync {
    fn class_probability(&self, images: &[Image], class_idx: usize) -> Result<Vec<f64>>;
}

/// Scores already prepared (pipeline + resize) images.
pub struct PreparedInputs<'a>(pub &'a Predictor);

impl ProbabilityModel for PreparedInputs<'_> {
    fn class_probability(&self, images: &[Image], class_idx: usize) -> Result<Vec<f64>> {
        use rayon::prelude::*;
        let inputs: Vec<Tensor<f32>> = images.par_iter().map(|i| self.0.tensor(i)).collect::<Result<_>>()?;
        let probs = self.0.model.predict(&Tensor::stack(&inputs)?)?;
        let k = probs.shape()[1];
        Ok(probs.data().chunks_exact(k).map(|r| r[class_idx].f64()).collect())
    }
}

pub const DEFAULT_KERNEL_WIDTH: f64 = 0.25;
pub const RIDGE_ALPHA: f64 = 1.0;
pub const DEFAULT_GRID: usize = 8;
/// Images scored per model call during LIME.
const LIME_CHUNK: usize = 64;

/// exp(-d^2 / width^2).
pub fn lime_kernel(d: f64, kernel_width: f64) -> f64 {
    (-(d * d) / (kernel_width * kernel_width)).exp()
}

/// Cosine distance between a binary mask and the all-ones vector.
pub fn mask_distance(mask: &[bool]) -> f64 {
    let kept = mask.iter().filter(|&&m| m).count();
    if kept == 0 {
        1.0
    } else {
        1.0 - (kept as f64 / mask.len() as f64).sqrt()
    }
}

/// Weighted ridge regression with an unpenalized intercept; returns the
/// coefficients (without intercept).
pub fn weighted_ridge(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    let wsum = w.sum();
    if n == 0 || !(wsum > 0.0) {
        return Err(Error::DegenerateDesign("no weighted samples".into()));
    }
    let xm = DVector::from_fn(p, |j, _| (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>() / wsum);
    let ym = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / wsum;
    let xc = DMatrix::from_fn(n, p, |i, j| (x[(i, j)] - xm[j]) * w[i].sqrt());
    let yc = DVector::from_fn(n, |i, _| (y[i] - ym) * w[i].sqrt());
    let a = xc.transpose() * &xc + DMatrix::identity(p, p) * alpha;
    let b = xc.transpose() * yc;
    a.cholesky()
        .map(|c| c.solve(&b))
        .ok_or_else(|| Error::DegenerateDesign("ridge system is not positive definite".into()))
}

/// Replaces every unmasked-out segment with `fill`.
pub fn perturb(img: &Image, seg: &SegmentMap, mask: &[bool], fill: &[u8]) -> Image {
    let mut out = img.clone();
    let c = img.channels();
    for (p, px) in out.data_mut().chunks_exact_mut(c).enumerate() {
        if !mask[seg.ids[p]] {
            px.copy_from_slice(&fill[..c]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GradCam,
    Lime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub method: Method,
    pub heatmap: Heatmap,
    pub segment_weights: Option<Vec<f64>>,
    pub class_idx: usize,
    pub probability: f64,
    pub bbox: Option<BBox>,
}

/// LIME over a segment map. Sample 0 is the unperturbed image; the others
/// keep each segment with probability 0.5. Masked segments take `fill`.
#[allow(clippy::too_many_arguments)]
pub fn lime_explain(
    model: &dyn ProbabilityModel,
    img: &Image,
    seg: &SegmentMap,
    class_idx: usize,
    n_samples: usize,
    kernel_width: f64,
    fill: &[u8],
    rng: &mut Rng,
) -> Result<Explanation> {
    let s = seg.count;
    if n_samples < s + 1 {
        return Err(Error::Parameter(format!("LIME needs at least {} samples for {s} segments", s + 1)));
    }
    if seg.height != img.height() || seg.width != img.width() || fill.len() < img.channels() {
        return Err(Error::Shape("segment map, fill color and image disagree".into()));
    }
    if !(kernel_width > 0.0) {
        return Err(Error::Parameter("kernel width must be positive".into()));
    }
    let mut masks = vec![vec![true; s]];
    masks.extend((1..n_samples).map(|_| (0..s).map(|_| rng.random_bool(0.5)).collect::<Vec<bool>>()));
    if masks.iter().all(|m| *m == masks[0]) {
        return Err(Error::DegenerateDesign("all perturbation masks are identical; increase n_samples".into()));
    }
    let mut probs = Vec::with_capacity(n_samples);
    for chunk in masks.chunks(LIME_CHUNK) {
        let images: Vec<Image> = chunk.iter().map(|m| perturb(img, seg, m, fill)).collect();
        probs.extend(model.class_probability(&images, class_idx)?);
    }
    let x = DMatrix::from_fn(n_samples, s, |i, j| f64::from(u8::from(masks[i][j])));
    let y = DVector::from_vec(probs.clone());
    let w = DVector::from_iterator(n_samples, masks.iter().map(|m| lime_kernel(mask_distance(m), kernel_width)));
    let beta = weighted_ridge(&x, &y, &w, RIDGE_ALPHA)?;
    let weights: Vec<f64> = beta.iter().copied().collect();
    let max_pos = weights.iter().copied().fold(0.0, f64::max);
    let values: Vec<f64> =
        seg.ids.iter().map(|&i| if max_pos > 0.0 { weights[i].max(0.0) / max_pos } else { 0.0 }).collect();
    Ok(Explanation {
        method: Method::Lime,
        heatmap: Heatmap { height: img.height(), width: img.width(), values, all_zero: !(max_pos > 0.0) },
        segment_weights: Some(weights),
        class_idx,
        probability: probs[0],
        bbox: None,
    })
}

/// Minimal inclusive box around all pixels with value >= `threshold`.
pub fn defect_bbox(h: &Heatmap, threshold: f64) -> Result<Option<BBox>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Parameter(format!("threshold must be in (0, 1), got {threshold}")));
    }
    let mut b: Option<BBox> = None;
    for y in 0..h.height {
        for x in 0..h.width {
            if h.get(y, x) >= threshold {
                b = Some(match b {
                    None => BBox { x0: x, y0: y, x1: x, y1: y },
                    Some(b) => BBox { x0: b.x0.min(x), y0: b.y0.min(y), x1: b.x1.max(x), y1: b.y1.max(y) },
                });
            }
        }
    }
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayStyle {
    /// Blend weight at heatmap value 1; scaled linearly by the value.
    pub alpha: f64,
    pub box_width: usize,
    pub draw_heatmap: bool,
    pub draw_box: bool,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self { alpha: 0.4, box_width: 2, draw_heatmap: true, draw_box: true }
    }
}

/// Blue (0) to red (1).
pub fn colormap(v: f64) -> [f64; 3] {
    let v = v.clamp(0.0, 1.0);
    [255.0 * v, 0.0, 255.0 * (1.0 - v)]
}

pub const BOX_COLOR: [u8; 3] = [255, 0, 0];

/// Single-pass overlay: heatmap blend then box outline, drawn inside the box.
pub fn render_overlay(img: &Image, heatmap: Option<&Heatmap>, bbox: Option<BBox>, style: &OverlayStyle) -> Result<Image> {
    let mut out = img.to_rgb();
    let (h, w) = (img.height(), img.width());
    if let (true, Some(hm)) = (style.draw_heatmap, heatmap) {
        if hm.height != h || hm.width != w {
            return Err(Error::Shape(format!("heatmap {}x{} vs image {h}x{w}", hm.height, hm.width)));
        }
        for (p, px) in out.data_mut().chunks_exact_mut(3).enumerate() {
            let v = hm.values[p];
            let a = style.alpha * v.clamp(0.0, 1.0);
            if a > 0.0 {
                let c = colormap(v);
                for (ch, cv) in px.iter_mut().zip(c) {
                    *ch = quantize((1.0 - a) * *ch as f64 + a * cv);
                }
            }
        }
    }
    if let (true, Some(b)) = (style.draw_box, bbox) {
        if b.x1 >= w || b.y1 >= h || b.x0 > b.x1 || b.y0 > b.y1 {
            return Err(Error::Dimension(format!("box {b:?} outside {h}x{w} image")));
        }
        let bw = style.box_width;
        for y in b.y0..=b.y1 {
            for x in b.x0..=b.x1 {
                if y < b.y0 + bw || y + bw > b.y1 || x < b.x0 + bw || x + bw > b.x1 {
                    let i = (y * w + x) * 3;
                    out.data_mut()[i..i + 3].copy_from_slice(&BOX_COLOR);
                }
            }
        }
    }
    Ok(out)
}

/// Binary (P5) 8-bit PGM of the heatmap.
pub fn write_pgm(path: &Path, h: &Heatmap) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", h.width, h.height).into_bytes();
    bytes.extend(h.to_image().data());
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentWeight {
    pub segment: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationSidecar {
    pub method: Method,
    pub class: usize,
    pub class_name: String,
    pub probability: f64,
    #[serde(rename = "box")]
    pub bbox: Option<BBox>,
    pub heatmap_all_zero: bool,
    pub top_segments: Vec<SegmentWeight>,
}

impl ExplanationSidecar {
    /// `top_k` segments by absolute weight (LIME only).
    pub fn new(e: &Explanation, top_k: usize) -> Self {
        let mut top: Vec<SegmentWeight> = e
            .segment_weights
            .iter()
            .flatten()
            .enumerate()
            .map(|(segment, &weight)| SegmentWeight { segment, weight })
            .collect();
        top.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()).then(a.segment.cmp(&b.segment)));
        top.truncate(top_k);
        Self {
            method: e.method,
            class: e.class_idx,
            class_name: crate::data::Label::from_index(e.class_idx).dir_name().to_string(),
            probability: e.probability,
            bbox: e.bbox,
            heatmap_all_zero: e.heatmap.all_zero,
            top_segments: top,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn weighted_sum_peak() {
        // channels interleaved: (y, x, k)
        let a = t(&[2, 2, 2], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let g = t(&[2, 2, 2], vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
        let (cam, zero) = grad_cam_from_activations(&a, &g).unwrap();
        assert!(!zero);
        assert_eq!(cam, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_channel_is_uniform() {
        let (cam, zero) = grad_cam_from_activations(&t(&[2, 2, 1], vec![3.0; 4]), &t(&[2, 2, 1], vec![0.5; 4])).unwrap();
        assert!(!zero);
        assert_eq!(cam, vec![1.0; 4]);
    }

    #[test]
    fn all_zero_is_flagged() {
        let (cam, zero) = grad_cam_from_activations(&t(&[2, 2, 1], vec![1.0; 4]), &t(&[2, 2, 1], vec![-1.0; 4])).unwrap();
        assert!(zero);
        assert_eq!(cam, vec![0.0; 4]);
    }

    #[test]
    fn positive_rescaling_invariance() {
        let mut rng = seed::stream(3, "cam");
        let a = t(&[3, 3, 4], (0..36).map(|_| rng.random_range(0.0..2.0)).collect());
        let g = t(&[3, 3, 4], (0..36).map(|_| rng.random_range(-1.0..1.0)).collect());
        let (base, _) = grad_cam_from_activations(&a, &g).unwrap();
        let (scaled, _) = grad_cam_from_activations(&a, &g.map(|v| v * 7.5)).unwrap();
        for (x, y) in base.iter().zip(&scaled) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn grid_segments() {
        let s = segment_image(4, 4, 2, 2).unwrap();
        assert_eq!(s.count, 4);
        assert_eq!(s.sizes(), vec![4; 4]);
        let s = segment_image(5, 5, 2, 2).unwrap();
        assert_eq!(s.sizes(), vec![4, 6, 6, 9]);
        assert_eq!(s.id(4, 4), 3);
        assert_eq!(s.id(2, 1), 2);
        let s = segment_image(3, 7, 1, 1).unwrap();
        assert!(s.ids.iter().all(|&i| i == 0));
        assert!(segment_image(2, 2, 3, 1).is_err());
        assert!(segment_image(2, 2, 0, 1).is_err());
    }

    fn heat(h: usize, w: usize, hot: &[(usize, usize)]) -> Heatmap {
        let mut m = Heatmap::zeros(h, w);
        for &(y, x) in hot {
            m.values[y * w + x] = 1.0;
        }
        m.all_zero = hot.is_empty();
        m
    }

    #[test]
    fn bbox_examples() {
        assert_eq!(defect_bbox(&heat(4, 4, &[(1, 2)]), 0.5).unwrap(), Some(BBox { x0: 2, y0: 1, x1: 2, y1: 1 }));
        assert_eq!(defect_bbox(&heat(4, 4, &[]), 0.5).unwrap(), None);
        let rect: Vec<(usize, usize)> = (1..3).flat_map(|y| (2..5).map(move |x| (y, x))).collect();
        assert_eq!(defect_bbox(&heat(6, 6, &rect), 0.5).unwrap(), Some(BBox { x0: 2, y0: 1, x1: 4, y1: 2 }));
        assert!(defect_bbox(&heat(2, 2, &[]), 1.0).is_err());
    }

    #[test]
    fn overlay_contracts() {
        let img = Image::filled(10, 12, crate::imaging::ColorSpace::Rgb, 90);
        let out = render_overlay(&img, Some(&Heatmap::zeros(10, 12)), None, &OverlayStyle::default()).unwrap();
        assert_eq!(out, img);
        let b = BBox { x0: 2, y0: 1, x1: 9, y1: 7 };
        let out = render_overlay(&img, None, Some(b), &OverlayStyle::default()).unwrap();
        let changed = out.data().chunks(3).zip(img.data().chunks(3)).filter(|(a, b)| a != b).count();
        // 8x7 box minus its 4x3 interior
        assert_eq!(changed, 8 * 7 - 4 * 3);
    }

    #[test]
    fn kernel_and_distance() {
        assert_eq!(lime_kernel(0.0, 0.25), 1.0);
        assert_eq!(mask_distance(&[true, true, true]), 0.0);
        assert_eq!(mask_distance(&[false, false]), 1.0);
    }

    #[test]
    fn ridge_recovers_linear_model() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 0.0, 2.0]);
        let w = DVector::from_element(4, 1.0);
        let b = weighted_ridge(&x, &y, &w, 1e-9).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-6 && (b[1] + 1.0).abs() < 1e-6);
    }
}
