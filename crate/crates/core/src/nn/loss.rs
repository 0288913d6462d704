use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Probability clip applied before taking logarithms.
pub const PROB_CLIP: f64 = 1e-7;

/// Softmax index of the positive (defect) class.
pub const POSITIVE_CLASS: usize = 1;

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Mean binary cross-entropy of positive-class probabilities `p` against
/// labels `y` in {0, 1}.
pub fn bce_loss(y: &[u8], p: &[f64]) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::Parameter("bce_loss: no samples".into()));
    }
    if y.len() != p.len() {
        return Err(Error::Shape(format!("bce_loss: {} labels vs {} probabilities", y.len(), p.len())));
    }
    let total: f64 = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let pc = clip(pi);
            let yf = yi as f64;
            yf * pc.ln() + (1.0 - yf) * (1.0 - pc).ln()
        })
        .sum();
    Ok(-total / y.len() as f64)
}

/// Loss over a (N, 2) probability batch together with dL/dprobs.
/// Clipped probabilities contribute zero gradient.
pub fn bce_with_grad<T: Scalar>(y: &[u8], probs: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let n = y.len();
    if probs.shape() != [n, 2] {
        return Err(Error::Shape(format!("expected ({n}, 2) probabilities, got {:?}", probs.shape())));
    }
    let p: Vec<f64> = probs.data().chunks_exact(2).map(|r| r[POSITIVE_CLASS].f64()).collect();
    let loss = bce_loss(y, &p)?;
    let mut grad = Tensor::zeros(&[n, 2]);
    for (i, (&yi, &pi)) in y.iter().zip(&p).enumerate() {
        if pi <= PROB_CLIP || pi >= 1.0 - PROB_CLIP {
            continue;
        }
        let yf = yi as f64;
        let g = -(yf / pi - (1.0 - yf) / (1.0 - pi)) / n as f64;
        grad.data_mut()[i * 2 + POSITIVE_CLASS] = T::c(g);
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        assert!(bce_loss(&[1], &[1.0]).unwrap() < 1e-6);
        assert!((bce_loss(&[1], &[0.5]).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert!((bce_loss(&[1, 0], &[0.5, 0.5]).unwrap() - 0.693_147_180_559_945_3).abs() < 1e-12);
        assert!(bce_loss(&[], &[]).is_err());
    }

    #[test]
    fn saturated_prediction_has_zero_gradient() {
        let probs = Tensor::<f64>::new(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let (loss, g) = bce_with_grad(&[1, 0], &probs).unwrap();
        assert!(loss < 1e-6);
        assert_eq!(g.sum_sq(), 0.0);
    }
}
