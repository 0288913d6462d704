//! Backbone + classification head graphs, batched forward/backward and
//! parameter initialization.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{Activation, Layer, LayerCache, LayerSpec, Mode, Padding};
use super::loss::bce_with_grad;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

/// Layer layout of a model, without parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub name: String,
    pub input_shape: [usize; 3],
    pub backbone: Vec<LayerSpec>,
    pub head: Vec<LayerSpec>,
}

/// VGG16 convolutional stages: (filters, convolutions per stage).
const VGG16_STAGES: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];

fn conv3(filters: usize) -> LayerSpec {
    LayerSpec::Conv2D { filters, kernel: 3, stride: 1, padding: Padding::Same, activation: Activation::Relu }
}

impl Architecture {
    /// SeparableConv2D(64, 3x3) -> AveragePooling2D(2x2) -> Flatten -> Dense(64, ReLU)
    /// -> Dropout(0.5) -> Dense(2) -> Softmax.
    pub fn classifier_head(padding: Padding) -> Vec<LayerSpec> {
        vec![
            LayerSpec::SeparableConv2D { filters: 64, kernel: 3, padding, activation: Activation::Relu },
            LayerSpec::AveragePooling2D { pool: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 64, activation: Activation::Relu },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: 2, activation: Activation::None },
            LayerSpec::Softmax,
        ]
    }

    /// The 13 convolutions and 5 max-pools of VGG16, classifier removed.
    pub fn vgg16_backbone() -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        for (filters, convs) in VGG16_STAGES {
            layers.extend((0..convs).map(|_| conv3(filters)));
            layers.push(LayerSpec::MaxPool2D { pool: 2 });
        }
        layers
    }

    pub fn modified_vgg16(padding: Padding) -> Self {
        Self {
            name: "modified-vgg16".into(),
            input_shape: [224, 224, 3],
            backbone: Self::vgg16_backbone(),
            head: Self::classifier_head(padding),
        }
    }

    /// VGG16 with its original 4096-4096-1000 classifier.
    pub fn vgg16() -> Self {
        Self {
            name: "vgg16".into(),
            input_shape: [224, 224, 3],
            backbone: Self::vgg16_backbone(),
            head: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 4096, activation: Activation::Relu },
                LayerSpec::Dense { units: 4096, activation: Activation::Relu },
                LayerSpec::Dense { units: 1000, activation: Activation::None },
                LayerSpec::Softmax,
            ],
        }
    }

    /// Small trainable-from-scratch backbone: conv(8)/pool, conv(16)/pool,
    /// conv(32), so features keep a quarter of the input resolution.
    pub fn scratch(size: usize) -> Self {
        Self {
            name: "scratch".into(),
            input_shape: [size, size, 3],
            backbone: vec![
                conv3(8),
                LayerSpec::MaxPool2D { pool: 2 },
                conv3(16),
                LayerSpec::MaxPool2D { pool: 2 },
                conv3(32),
            ],
            head: Self::classifier_head(Padding::Valid),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "modified-vgg16" => Ok(Self::modified_vgg16(Padding::Valid)),
            "modified-vgg16-same" => Ok(Self::modified_vgg16(Padding::Same)),
            "vgg16" => Ok(Self::vgg16()),
            "scratch" => Ok(Self::scratch(64)),
            other => Err(Error::Config(format!(
                "unknown model '{other}' (modified-vgg16|modified-vgg16-same|vgg16|scratch)"
            ))),
        }
    }

    /// Input shape of every layer, backbone first, then the final output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.to_vec()];
        for spec in self.backbone.iter().chain(&self.head) {
            let next = spec.output_shape(shapes.last().expect("non-empty"))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn feature_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?[self.backbone.len()].clone())
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shapes()?.pop().expect("non-empty"))
    }

    pub fn has_classifier_head(&self) -> bool {
        let padding = match self.head.first() {
            Some(LayerSpec::SeparableConv2D { padding, .. }) => *padding,
            _ => return false,
        };
        self.head == Self::classifier_head(padding)
    }
}

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Per-sample activations retained for backpropagation.
#[derive(Debug, Clone)]
pub struct SampleCache<T> {
    pub backbone: Vec<LayerCache<T>>,
    pub head: Vec<LayerCache<T>>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    version: u64,
    backbone_cached: bool,
    pub samples: Vec<SampleCache<T>>,
}

/// Parameter gradients, aligned with [`ModelGraph::trainable_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }
}

/// Architecture plus parameters.
#[derive(Debug, Clone)]
pub struct ModelGraph<T> {
    arch: Architecture,
    backbone: Vec<Layer<T>>,
    head: Vec<Layer<T>>,
    pub backbone_trainable: bool,
    version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Backbone,
    Head,
}

impl Section {
    fn label(self) -> &'static str {
        match self {
            Section::Backbone => "backbone",
            Section::Head => "head",
        }
    }
}

fn uniform<T: Scalar>(rng: &mut Rng, shape: &[usize], limit: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::c(rng.random_range(-limit..limit))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// He-uniform for ReLU layers, Glorot-uniform otherwise; zero biases.
fn init_params<T: Scalar>(spec: &LayerSpec, input: &[usize], rng: &mut Rng) -> Result<Vec<Tensor<T>>> {
    let relu = spec.activation() == Activation::Relu;
    let limit = |fan_in: usize, fan_out: usize| {
        if relu {
            (6.0 / fan_in as f64).sqrt()
        } else {
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        }
    };
    let shapes = spec.param_shapes(input)?;
    Ok(shapes
        .iter()
        .map(|(name, shape)| {
            let (fan_in, fan_out) = match (*name, shape.as_slice()) {
                ("kernel", &[k, _, cin, cout]) => (k * k * cin, k * k * cout),
                ("depthwise", &[k, _, _]) => (k * k, k * k),
                ("pointwise", &[c, f]) => (c, f),
                ("weights", &[out, inp]) => (inp, out),
                _ => return Tensor::zeros(shape),
            };
            uniform(rng, shape, limit(fan_in, fan_out))
        })
        .collect())
}

impl<T: Scalar> ModelGraph<T> {
    /// Randomly initialized model; `seed` is used as-is for the init stream.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let shapes = arch.shapes()?;
        let mut rng = seed::stream(seed, seed::INIT);
        let mut layers = Vec::new();
        for (spec, input) in arch.backbone.iter().chain(&arch.head).zip(&shapes) {
            layers.push(Layer::new(spec.clone(), init_params(spec, input, &mut rng)?));
        }
        let head = layers.split_off(arch.backbone.len());
        Ok(Self { arch, backbone: layers, head, backbone_trainable: false, version: next_version() })
    }

    /// Builds a model from explicit parameter tensors, checked against the architecture.
    pub fn from_params(arch: Architecture, params: Vec<Vec<Tensor<T>>>) -> Result<Self> {
        let shapes = arch.shapes()?;
        let specs: Vec<&LayerSpec> = arch.backbone.iter().chain(&arch.head).collect();
        if params.len() != specs.len() {
            return Err(Error::Shape(format!("{} parameter groups for {} layers", params.len(), specs.len())));
        }
        let mut layers = Vec::new();
        for ((spec, input), p) in specs.into_iter().zip(&shapes).zip(params) {
            let expected = spec.param_shapes(input)?;
            if expected.len() != p.len() || expected.iter().zip(&p).any(|((_, s), t)| s.as_slice() != t.shape()) {
                return Err(Error::Shape(format!("{} parameters do not match {expected:?}", spec.name())));
            }
            layers.push(Layer::new(spec.clone(), p));
        }
        let head = layers.split_off(arch.backbone.len());
        Ok(Self { arch, backbone: layers, head, backbone_trainable: false, version: next_version() })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self, section: Section) -> &[Layer<T>] {
        match section {
            Section::Backbone => &self.backbone,
            Section::Head => &self.head,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Every parameter tensor with a stable name, backbone first.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        let shapes = self.arch.shapes().unwrap_or_default();
        let mut layer_idx = 0;
        for (section, layers) in [(Section::Backbone, &self.backbone), (Section::Head, &self.head)] {
            for (i, layer) in layers.iter().enumerate() {
                let input = shapes.get(layer_idx).cloned().unwrap_or_default();
                let names = layer.spec.param_shapes(&input).unwrap_or_default();
                for (p, (pname, _)) in layer.params.iter().zip(names) {
                    out.push((format!("{}.{i}.{}.{pname}", section.label(), layer.spec.name()), p));
                }
                layer_idx += 1;
            }
        }
        out
    }

    /// All parameter groups, one per layer, backbone first.
    pub fn param_groups(&self) -> Vec<&[Tensor<T>]> {
        self.backbone.iter().chain(&self.head).map(|l| l.params.as_slice()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.backbone.iter().chain(&self.head).flat_map(|l| &l.params).map(Tensor::len).sum()
    }

    pub fn trainable_params(&self) -> Vec<&Tensor<T>> {
        let backbone = self.backbone.iter().filter(|_| self.backbone_trainable);
        backbone.chain(&self.head).flat_map(|l| &l.params).collect()
    }

    /// Mutable trainable parameters. Invalidates outstanding forward caches.
    pub fn trainable_params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.version = next_version();
        let trainable = self.backbone_trainable;
        let backbone = self.backbone.iter_mut().filter(move |_| trainable);
        backbone.chain(self.head.iter_mut()).flat_map(|l| l.params.iter_mut()).collect()
    }

    /// Copies backbone parameters from another model with the same backbone.
    pub fn copy_backbone_from<U: Scalar>(&mut self, other: &ModelGraph<U>) -> Result<()> {
        if self.arch.backbone != other.arch.backbone || self.arch.input_shape != other.arch.input_shape {
            return Err(Error::Shape("backbone architectures differ".into()));
        }
        for (dst, src) in self.backbone.iter_mut().zip(&other.backbone) {
            dst.params = src.params.iter().map(Tensor::cast).collect();
        }
        self.version = next_version();
        Ok(())
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != self.arch.input_shape {
            return Err(Error::Shape(format!(
                "model expects input {:?}, got {:?}",
                self.arch.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor<T>) -> Result<()> {
        if batch.rank() != 4 || batch.shape()[1..] != self.arch.input_shape {
            return Err(Error::Shape(format!(
                "batch must be (N, {:?}), got {:?}",
                self.arch.input_shape,
                batch.shape()
            )));
        }
        Ok(())
    }

    /// Runs the backbone only (inference mode).
    pub fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut rng = seed::indexed(0, 0);
        let mut act = x.clone();
        for layer in &self.backbone {
            act = layer.forward(&act, Mode::Infer, &mut rng)?.0;
        }
        Ok(act)
    }

    /// Backbone features for a (N, H, W, C) batch.
    pub fn backbone_forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch(batch)?;
        let feats: Vec<Tensor<T>> =
            batch.unstack().par_iter().map(|x| self.features(x)).collect::<Result<_>>()?;
        Tensor::stack(&feats)
    }

    /// Single-sample forward pass returning the output and per-layer caches.
    /// Backbone caches are kept only when `keep_backbone` is set.
    pub fn forward_sample(&self, x: &Tensor<T>, mode: Mode, rng: &mut Rng, keep_backbone: bool) -> Result<(Tensor<T>, SampleCache<T>)> {
        self.check_input(x)?;
        let mut cache = SampleCache { backbone: Vec::new(), head: Vec::with_capacity(self.head.len()) };
        let mut act = x.clone();
        for layer in &self.backbone {
            let (out, c) = layer.forward(&act, mode, rng)?;
            if keep_backbone {
                cache.backbone.push(c);
            }
            act = out;
        }
        for layer in &self.head {
            let (out, c) = layer.forward(&act, mode, rng)?;
            cache.head.push(c);
            act = out;
        }
        if !act.all_finite() {
            return Err(Error::NonFinite("non-finite model output".into()));
        }
        Ok((act, cache))
    }

    /// Batched forward pass. Sample `i` draws dropout masks from a stream
    /// derived from (`dropout_seed`, `i`), so results do not depend on
    /// thread scheduling.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode, dropout_seed: u64) -> Result<(Tensor<T>, ForwardCache<T>)> {
        self.check_batch(batch)?;
        let keep = self.backbone_trainable;
        let results: Vec<(Tensor<T>, SampleCache<T>)> = batch
            .unstack()
            .into_par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut rng = seed::indexed(dropout_seed, i as u64);
                self.forward_sample(&x, mode, &mut rng, keep)
            })
            .collect::<Result<_>>()?;
        let (outs, samples): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let probs = Tensor::stack(&outs)?;
        Ok((probs, ForwardCache { version: self.version, backbone_cached: keep, samples }))
    }

    /// Inference-mode probabilities.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(batch, Mode::Infer, 0)?.0)
    }

    /// Backpropagates through head layers `top..=bottom` (descending), given
    /// the gradient w.r.t. the output of layer `top`. Returns the gradient
    /// w.r.t. the input of layer `bottom`; parameter gradients are written
    /// into `param_grads[layer]` when provided.
    pub fn head_backward(
        &self,
        sc: &SampleCache<T>,
        top: usize,
        bottom: usize,
        dy: Tensor<T>,
        mut param_grads: Option<&mut Vec<Vec<Tensor<T>>>>,
    ) -> Result<Tensor<T>> {
        let mut dy = dy;
        for i in (bottom..=top).rev() {
            let (dx, pg) = self.head[i].backward(&sc.head[i], &dy, true)?;
            if let Some(g) = param_grads.as_deref_mut() {
                g[i] = pg;
            }
            dy = dx.expect("requested input gradient");
        }
        Ok(dy)
    }

    fn sample_backward(&self, sc: &SampleCache<T>, dout: Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut head_grads = vec![Vec::new(); self.head.len()];
        let mut dy = dout;
        for i in (0..self.head.len()).rev() {
            let need_dx = i > 0 || self.backbone_trainable;
            let (dx, pg) = self.head[i].backward(&sc.head[i], &dy, need_dx)?;
            head_grads[i] = pg;
            match dx {
                Some(d) => dy = d,
                None => break,
            }
        }
        let mut out = Vec::new();
        if self.backbone_trainable {
            let mut bb_grads = vec![Vec::new(); self.backbone.len()];
            for i in (0..self.backbone.len()).rev() {
                let (dx, pg) = self.backbone[i].backward(&sc.backbone[i], &dy, i > 0)?;
                bb_grads[i] = pg;
                if let Some(d) = dx {
                    dy = d;
                }
            }
            out.extend(bb_grads.into_iter().flatten());
        }
        out.extend(head_grads.into_iter().flatten());
        Ok(out)
    }

    /// Parameter gradients for a given gradient w.r.t. the (N, K) outputs.
    /// Per-sample contributions are summed in sample order.
    pub fn backward_from_output(&self, cache: &ForwardCache<T>, dout: &Tensor<T>) -> Result<Gradients<T>> {
        if cache.version != self.version || (self.backbone_trainable && !cache.backbone_cached) {
            return Err(Error::StaleCache);
        }
        if dout.shape().first() != Some(&cache.samples.len()) {
            return Err(Error::Shape(format!("output gradient {:?} vs {} cached samples", dout.shape(), cache.samples.len())));
        }
        let per_sample: Vec<Vec<Tensor<T>>> = cache
            .samples
            .par_iter()
            .zip(dout.unstack())
            .map(|(sc, d)| self.sample_backward(sc, d))
            .collect::<Result<_>>()?;
        let mut iter = per_sample.into_iter();
        let mut total = iter.next().unwrap_or_default();
        for g in iter {
            for (acc, t) in total.iter_mut().zip(&g) {
                acc.add_assign(t);
            }
        }
        Ok(Gradients { tensors: total })
    }

    /// Mean binary cross-entropy of the cached batch and its parameter gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, probs: &Tensor<T>, labels: &[u8]) -> Result<(f64, Gradients<T>)> {
        let (loss, dprobs) = bce_with_grad(labels, probs)?;
        let grads = self.backward_from_output(cache, &dprobs)?;
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Architecture {
        Architecture {
            name: "tiny".into(),
            input_shape: [8, 8, 1],
            backbone: vec![conv3(4), LayerSpec::MaxPool2D { pool: 2 }],
            head: vec![
                LayerSpec::SeparableConv2D { filters: 6, kernel: 3, padding: Padding::Valid, activation: Activation::Relu },
                LayerSpec::AveragePooling2D { pool: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 5, activation: Activation::Relu },
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Dense { units: 2, activation: Activation::None },
                LayerSpec::Softmax,
            ],
        }
    }

    fn batch(n: usize, seed: u64) -> Tensor<f64> {
        let mut rng = seed::indexed(seed, 0);
        let data = (0..n * 64).map(|_| rng.random_range(0.0..1.0)).collect();
        Tensor::new(vec![n, 8, 8, 1], data).unwrap()
    }

    #[test]
    fn shapes_of_reference_architectures() {
        assert_eq!(Architecture::modified_vgg16(Padding::Valid).feature_shape().unwrap(), vec![7, 7, 512]);
        assert_eq!(Architecture::scratch(64).feature_shape().unwrap(), vec![16, 16, 32]);
        assert_eq!(Architecture::vgg16().output_shape().unwrap(), vec![1000]);
        assert!(Architecture::modified_vgg16(Padding::Same).has_classifier_head());
        assert!(Architecture::scratch(64).has_classifier_head());
        assert!(!Architecture::vgg16().has_classifier_head());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let m = ModelGraph::<f64>::init(tiny(), 3).unwrap();
        let probs = m.predict(&batch(4, 1)).unwrap();
        for row in probs.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_head_gives_half() {
        let arch = tiny();
        let m = ModelGraph::<f64>::init(arch.clone(), 3).unwrap();
        let groups: Vec<Vec<Tensor<f64>>> = m
            .param_groups()
            .iter()
            .enumerate()
            .map(|(i, g)| {
                if i < arch.backbone.len() {
                    g.to_vec()
                } else {
                    g.iter().map(|t| Tensor::zeros(t.shape())).collect()
                }
            })
            .collect();
        let z = ModelGraph::from_params(arch, groups).unwrap();
        assert!(z.predict(&batch(2, 9)).unwrap().data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn forward_is_deterministic() {
        let m = ModelGraph::<f64>::init(tiny(), 11).unwrap();
        let x = batch(3, 2);
        let (a, _) = m.forward(&x, Mode::Train, 5).unwrap();
        let (b, _) = m.forward(&x, Mode::Train, 5).unwrap();
        assert_eq!(a, b);
        let m2 = ModelGraph::<f64>::init(tiny(), 11).unwrap();
        assert_eq!(m2.predict(&x).unwrap(), m.predict(&x).unwrap());
    }

    #[test]
    fn stale_cache_rejected() {
        let mut m = ModelGraph::<f64>::init(tiny(), 1).unwrap();
        let (p, cache) = m.forward(&batch(2, 1), Mode::Train, 0).unwrap();
        let _ = m.trainable_params_mut();
        assert!(matches!(m.backward(&cache, &p, &[0, 1]), Err(Error::StaleCache)));
    }

    #[test]
    fn duplicated_batch_keeps_mean_gradient() {
        let m = ModelGraph::<f64>::init(tiny(), 4).unwrap();
        let x = batch(2, 3);
        let (p, c) = m.forward(&x, Mode::Infer, 0).unwrap();
        let (_, g1) = m.backward(&c, &p, &[1, 0]).unwrap();
        let mut items = x.unstack();
        items.extend(x.unstack());
        let x2 = Tensor::stack(&items).unwrap();
        let (p2, c2) = m.forward(&x2, Mode::Infer, 0).unwrap();
        let (_, g2) = m.backward(&c2, &p2, &[1, 0, 1, 0]).unwrap();
        for (a, b) in g1.tensors.iter().zip(&g2.tensors) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }

    #[test]
    fn batch_shape_mismatch() {
        let m = ModelGraph::<f64>::init(tiny(), 1).unwrap();
        assert!(matches!(m.predict(&Tensor::zeros(&[1, 4, 4, 1])), Err(Error::Shape(_))));
    }

    #[test]
    fn backbone_frozen_by_default() {
        let m = ModelGraph::<f64>::init(tiny(), 1).unwrap();
        assert!(!m.backbone_trainable);
        let head_params: usize = m.layers(Section::Head).iter().flat_map(|l| &l.params).count();
        assert_eq!(m.trainable_params().len(), head_params);
        assert_eq!(m.named_params()[0].0, "backbone.0.conv2d.kernel");
    }
}
