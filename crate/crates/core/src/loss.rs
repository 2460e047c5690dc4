//! Losses and the upstream messages they hand to the two backward engines.

use crate::backprop::mse_message;
use crate::error::{shape_err, Error, Result};
use crate::layers::Signal;
use crate::{QTensor, RTensor};

/// What a model output is compared against.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Regression target shaped like the output; `L = Σ |d − y|²`.
    Values(Signal),
    /// Class labels for real logits `[B, C]`; softmax cross-entropy.
    Labels(Vec<usize>),
}

/// Loss value, GHR upstream message and component-layout AD seed.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub ghr: Signal,
    pub ad: Signal,
}

/// Softmax cross-entropy summed over the batch, and its gradient with respect to the logits.
pub fn cross_entropy(logits: &RTensor, labels: &[usize]) -> Result<(f64, RTensor)> {
    let [batch, classes] = logits.dims::<2>()?;
    if labels.len() != batch {
        return shape_err(format!("{} labels for a batch of {batch}", labels.len()));
    }
    if batch == 0 {
        return shape_err("empty batch");
    }
    let mut grad = Vec::with_capacity(batch * classes);
    let mut total = 0.0;
    for (row, &label) in logits.data().chunks_exact(classes).zip(labels) {
        if label >= classes {
            return Err(Error::InvalidArgument(format!("label {label} out of {classes} classes")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        total += sum.ln() + max - row[label];
        for (c, e) in exp.iter().enumerate() {
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.push(e / sum - onehot);
        }
    }
    Ok((total, RTensor::new(vec![batch, classes], grad)?))
}

/// Sum of squared errors over real outputs.
pub fn sum_squares(y: &RTensor, d: &RTensor) -> Result<(f64, RTensor)> {
    y.check_same_shape(d)?;
    let loss = y.data().iter().zip(d.data()).map(|(y, d)| (d - y).powi(2)).sum();
    Ok((loss, y.zip_map(d, |y, d| -2.0 * (d - y))?))
}

pub fn evaluate_loss(output: &Signal, target: &Target) -> Result<LossEval> {
    match (output, target) {
        (Signal::Quat(y), Target::Values(Signal::Quat(d))) => Ok(LossEval {
            loss: crate::backprop::loss_mse_quat(y, d)?,
            ghr: Signal::Quat(mse_message(y, d)?),
            ad: Signal::Quat(crate::autodiff::ad_loss_grad(y, d)?),
        }),
        (Signal::Real(y), Target::Values(Signal::Real(d))) => {
            let (loss, g) = sum_squares(y, d)?;
            Ok(LossEval { loss, ghr: Signal::Real(g.clone()), ad: Signal::Real(g) })
        }
        (Signal::Real(y), Target::Labels(labels)) => {
            let (loss, g) = cross_entropy(y, labels)?;
            Ok(LossEval { loss, ghr: Signal::Real(g.clone()), ad: Signal::Real(g) })
        }
        (Signal::Quat(_), Target::Labels(_)) => shape_err("class labels need real logits; add a head"),
        _ => shape_err("target kind does not match the model output"),
    }
}

/// Shorthand for a quaternion regression target.
pub fn quat_target(d: QTensor) -> Target {
    Target::Values(Signal::Quat(d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let logits = RTensor::zeros(vec![3, 22]);
        let (loss, _) = cross_entropy(&logits, &[0, 5, 21]).unwrap();
        assert!((loss - 3.0 * 22f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logit() {
        let mut logits = RTensor::zeros(vec![1, 4]);
        logits.data_mut()[2] = 200.0;
        let (loss, _) = cross_entropy(&logits, &[2]).unwrap();
        assert!(loss < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let logits = RTensor::new(vec![2, 3], vec![0.3, -1.2, 2.0, 0.7, 0.1, -0.4]).unwrap();
        let labels = [2, 0];
        let (_, g) = cross_entropy(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            let mut up = logits.clone();
            up.data_mut()[i] += h;
            let mut dn = logits.clone();
            dn.data_mut()[i] -= h;
            let fd = (cross_entropy(&up, &labels).unwrap().0 - cross_entropy(&dn, &labels).unwrap().0) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn label_errors() {
        let logits = RTensor::zeros(vec![1, 2]);
        assert!(cross_entropy(&logits, &[2]).is_err());
        assert!(cross_entropy(&logits, &[0, 1]).is_err());
    }
}
