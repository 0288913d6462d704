use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

/// Per-channel z-score statistics fitted on training images scaled to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerStats {
    pub mean: Vec<f64>,
    /// Population standard deviation. Zero marks a degenerate channel.
    pub std: Vec<f64>,
}

impl StandardizerStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn is_degenerate(&self, channel: usize) -> bool {
        self.std[channel] == 0.0
    }

    /// Divisor actually applied: sigma, or 1 for zero-variance channels.
    pub fn effective_std(&self, channel: usize) -> f64 {
        if self.is_degenerate(channel) {
            1.0
        } else {
            self.std[channel]
        }
    }

    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }
}

pub fn fit_standardizer(images: &[Image]) -> Result<StandardizerStats> {
    let first = images.first().ok_or_else(|| Error::Data("fit_standardizer: no training images".into()))?;
    let ch = first.channels();
    let mut count = 0u64;
    let mut sum = vec![0.0f64; ch];
    for img in images {
        if img.channels() != ch {
            return Err(Error::Shape(format!("fit_standardizer: mixed channel counts {ch} and {}", img.channels())));
        }
        for px in img.data().chunks_exact(ch) {
            for (s, &v) in sum.iter_mut().zip(px) {
                *s += v as f64 / 255.0;
            }
        }
        count += img.pixel_count() as u64;
    }
    if count == 0 {
        return Err(Error::Data("fit_standardizer: images have no pixels".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0f64; ch];
    for img in images {
        for px in img.data().chunks_exact(ch) {
            for ((s, &v), m) in sq.iter_mut().zip(px).zip(&mean) {
                let d = v as f64 / 255.0 - m;
                *s += d * d;
            }
        }
    }
    let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    Ok(StandardizerStats { mean, std })
}

fn check_channels<T: Scalar>(t: &Tensor<T>, stats: &StandardizerStats) -> Result<usize> {
    let ch = *t.shape().last().unwrap_or(&0);
    if ch != stats.channels() || ch == 0 {
        return Err(Error::Shape(format!(
            "standardizer has {} channels, tensor shape {:?}",
            stats.channels(),
            t.shape()
        )));
    }
    Ok(ch)
}

/// `z = (x - mu) / sigma` along the last axis.
pub fn apply_standardizer<T: Scalar>(t: &Tensor<T>, stats: &StandardizerStats) -> Result<Tensor<T>> {
    let ch = check_channels(t, stats)?;
    let mean: Vec<T> = stats.mean.iter().map(|&m| T::c(m)).collect();
    let std: Vec<T> = (0..ch).map(|c| T::c(stats.effective_std(c))).collect();
    let mut out = t.clone();
    for px in out.data_mut().chunks_exact_mut(ch) {
        for ((v, &m), &s) in px.iter_mut().zip(&mean).zip(&std) {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

/// `x = z * sigma + mu`.
pub fn invert_standardizer<T: Scalar>(t: &Tensor<T>, stats: &StandardizerStats) -> Result<Tensor<T>> {
    let ch = check_channels(t, stats)?;
    let mut out = t.clone();
    for px in out.data_mut().chunks_exact_mut(ch) {
        for (c, v) in px.iter_mut().enumerate() {
            *v = *v * T::c(stats.effective_std(c)) + T::c(stats.mean[c]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_value_stats() {
        let img = Image::gray(1, 3, vec![1, 2, 3]).unwrap();
        let s = fit_standardizer(&[img.clone()]).unwrap();
        assert!((s.mean[0] - 2.0 / 255.0).abs() < 1e-15);
        assert!((s.std[0] - (2.0f64 / 3.0).sqrt() / 255.0).abs() < 1e-15);
        let twice = fit_standardizer(&[img.clone(), img]).unwrap();
        assert!((twice.mean[0] - s.mean[0]).abs() < 1e-15);
        assert!((twice.std[0] - s.std[0]).abs() < 1e-15);
    }

    #[test]
    fn constant_image_is_degenerate() {
        let s = fit_standardizer(&[Image::gray(2, 2, vec![9; 4]).unwrap()]).unwrap();
        assert_eq!(s.std[0], 0.0);
        assert!(s.is_degenerate(0));
        let t = Tensor::<f64>::full(&[1, 1, 1], 9.0 / 255.0);
        let z = apply_standardizer(&t, &s).unwrap();
        assert!(z.data()[0].abs() < 1e-15);
    }

    #[test]
    fn z_scores() {
        let stats = StandardizerStats { mean: vec![2.0], std: vec![(2.0f64 / 3.0).sqrt()] };
        let t = Tensor::<f64>::new(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let z = apply_standardizer(&t, &stats).unwrap();
        let expect = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (a, b) in z.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_mismatch() {
        let stats = StandardizerStats::identity(3);
        let t = Tensor::<f32>::zeros(&[2, 2, 1]);
        assert!(matches!(apply_standardizer(&t, &stats), Err(Error::Shape(_))));
        assert!(fit_standardizer(&[]).is_err());
    }

    proptest! {
        #[test]
        fn inverse_recovers_input(vals in prop::collection::vec(-5.0f64..5.0, 3..30), m in -1.0f64..1.0, s in 0.01f64..3.0) {
            let n = vals.len() / 3 * 3;
            let t = Tensor::new(vec![n / 3, 3], vals[..n].to_vec()).unwrap();
            let stats = StandardizerStats { mean: vec![m, -m, 0.5 * m], std: vec![s, 2.0 * s, 0.0] };
            let back = invert_standardizer(&apply_standardizer(&t, &stats).unwrap(), &stats).unwrap();
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
            }
        }
    }
}
