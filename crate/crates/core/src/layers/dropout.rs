use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::Quaternion;

/// Inverted dropout. On quaternion signals whole quaternions are dropped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout probability {p} not in [0, 1)")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Per-element scale factors: `0` for dropped, `1/(1−p)` for kept.
    /// Draws exactly one uniform per element when `p > 0`.
    pub fn sample_mask(&self, len: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        if self.p == 0.0 {
            return vec![1.0; len];
        }
        let keep = 1.0 / (1.0 - self.p);
        (0..len)
            .map(|_| if rng.gen::<f64>() < self.p { 0.0 } else { keep })
            .collect()
    }
}

/// Quaternion dropout. Returns the output and the mask that was applied;
/// at inference (or `p = 0`) the input passes through with an all-keep mask.
pub fn qdropout(
    x: &crate::QTensor,
    p: f64,
    training: bool,
    rng: &mut dyn RngCore,
) -> Result<(crate::QTensor, Vec<f64>)> {
    let layer = Dropout::new(p)?;
    if !training {
        return Ok((x.clone(), vec![1.0; x.len()]));
    }
    let mask = layer.sample_mask(x.len(), rng);
    let out = apply_quat_mask(x, &mask);
    Ok((out, mask))
}

pub(crate) fn apply_quat_mask(x: &crate::QTensor, mask: &[f64]) -> crate::QTensor {
    let mut i = 0;
    x.map(|q: &Quaternion| {
        let m = mask[i];
        i += 1;
        q.scale(m)
    })
}

pub(crate) fn apply_real_mask(x: &crate::RTensor, mask: &[f64]) -> crate::RTensor {
    let mut i = 0;
    x.map(|v| {
        let m = mask[i];
        i += 1;
        v * m
    })
}
