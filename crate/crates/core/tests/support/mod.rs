#![allow(dead_code)]

use p3d_inspect::nn::{Activation, Architecture, LayerSpec, Mode, ModelGraph, Padding, Tensor};
use rand::seq::index::sample;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 8x8x1 model containing every layer kind, including a strided VALID convolution.
pub fn toy_architecture() -> Architecture {
    Architecture {
        name: "toy".into(),
        input_shape: [8, 8, 1],
        backbone: vec![
            LayerSpec::Conv2D { filters: 8, kernel: 3, stride: 1, padding: Padding::Same, activation: Activation::Relu },
            LayerSpec::Conv2D { filters: 8, kernel: 2, stride: 2, padding: Padding::Valid, activation: Activation::None },
            LayerSpec::MaxPool2D { pool: 2 },
        ],
        head: vec![
            LayerSpec::SeparableConv2D { filters: 8, kernel: 3, padding: Padding::Same, activation: Activation::Relu },
            LayerSpec::AveragePooling2D { pool: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8, activation: Activation::Relu },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Dense { units: 2, activation: Activation::None },
            LayerSpec::Softmax,
        ],
    }
}

pub struct GradCheck {
    pub probed: usize,
    pub total_params: usize,
    pub max_rel_err: f64,
    pub failures: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// near-zero gradients from amplifying finite-difference round-off.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn loss(model: &ModelGraph<f64>, x: &Tensor<f64>, labels: &[u8], dropout_seed: u64) -> f64 {
    let (probs, cache) = model.forward(x, Mode::Train, dropout_seed).unwrap();
    model.backward(&cache, &probs, labels).unwrap().0
}

/// Compares analytic gradients with central differences on `probes`
/// randomly chosen trainable parameters.
pub fn gradient_check(seed: u64, probes: usize, tol: f64) -> GradCheck {
    let mut model = ModelGraph::<f64>::init(toy_architecture(), seed).unwrap();
    model.backbone_trainable = true;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3;
    let x = Tensor::new(vec![n, 8, 8, 1], (0..n * 64).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let labels = [1u8, 0, 1];
    let dropout_seed = 17;
    let (probs, cache) = model.forward(&x, Mode::Train, dropout_seed).unwrap();
    let (_, grads) = model.backward(&cache, &probs, &labels).unwrap();
    let flat: Vec<(usize, usize)> =
        grads.tensors.iter().enumerate().flat_map(|(t, g)| (0..g.len()).map(move |i| (t, i))).collect();
    let total_params = flat.len();
    let eps = 1e-6;
    let mut out = GradCheck { probed: 0, total_params, max_rel_err: 0.0, failures: 0 };
    for k in sample(&mut rng, total_params, probes.min(total_params)) {
        let (t, i) = flat[k];
        let orig = model.trainable_params()[t].data()[i];
        model.trainable_params_mut()[t].data_mut()[i] = orig + eps;
        let plus = loss(&model, &x, &labels, dropout_seed);
        model.trainable_params_mut()[t].data_mut()[i] = orig - eps;
        let minus = loss(&model, &x, &labels, dropout_seed);
        model.trainable_params_mut()[t].data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let e = rel_err(grads.tensors[t].data()[i], numeric);
        out.probed += 1;
        out.max_rel_err = out.max_rel_err.max(e);
        if e >= tol {
            out.failures += 1;
        }
    }
    out
}
