//! Cross-check of the GHR engine against the component-level engine.

use std::fmt;

use super::{ad_backward, ad_forward};
use crate::backprop::{backward, Backward, LayerGrads};
use crate::error::{Error, Result};
use crate::layers::{DropoutMode, Model, Signal};
use crate::loss::{evaluate_loss, Target};
use crate::Quaternion;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RelationEntry {
    pub layer: usize,
    pub layer_name: &'static str,
    /// `weight`, `bias` or `message` (derivative at the layer input).
    pub tensor: &'static str,
    pub max_rel_dev: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationReport {
    pub tolerance: f64,
    pub entries: Vec<RelationEntry>,
}

impl RelationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn max_rel_dev(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_dev).fold(0.0, f64::max)
    }

    /// `Err(Error::Verification)` naming the first failing tensor.
    pub fn check(self) -> Result<Self> {
        match self.entries.iter().find(|e| !e.pass) {
            None => Ok(self),
            Some(e) => Err(Error::Verification(format!(
                "layer {} ({}) {}: relative deviation {:.3e} exceeds {:.1e}",
                e.layer, e.layer_name, e.tensor, e.max_rel_dev, self.tolerance
            ))),
        }
    }
}

impl fmt::Display for RelationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:<10} {:<8} {:>12}  result", "layer", "kind", "tensor", "max-rel-dev")?;
        for e in &self.entries {
            writeln!(
                f,
                "{:<6} {:<10} {:<8} {:>12.3e}  {}",
                e.layer,
                e.layer_name,
                e.tensor,
                e.max_rel_dev,
                if e.pass { "pass" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Smallest scale at which a full-precision relative comparison is possible.
/// Below it the gradients are subnormal and carry almost no significant bits.
pub const SCALE_FLOOR: f64 = f64::MIN_POSITIVE / f64::EPSILON;

/// Largest elementwise gap relative to the larger of the two tensors'
/// max-norms, floored at [`SCALE_FLOOR`]; two all-zero tensors deviate by 0.
pub fn max_rel_dev(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let scale = scale.max(SCALE_FLOOR);
    let gap = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if gap.is_nan() {
        f64::INFINITY
    } else {
        gap / scale
    }
}

fn components(q: &[Quaternion], f: impl Fn(Quaternion) -> Quaternion) -> Vec<f64> {
    q.iter().flat_map(|v| f(*v).to_array()).collect()
}

/// Run both engines on `(x, target)` without dropout and compare.
pub fn verify_ghr_ad_relation(model: &Model, x: &Signal, target: &Target, tolerance: f64) -> Result<RelationReport> {
    verify_with_masks(model, x, target, &[], tolerance)
}

/// As [`verify_ghr_ad_relation`] with the given dropout masks applied by
/// both engines.
pub fn verify_with_masks(
    model: &Model,
    x: &Signal,
    target: &Target,
    masks: &[Option<Vec<f64>>],
    tolerance: f64,
) -> Result<RelationReport> {
    let tape = model.forward_traced(x, DropoutMode::Replay(masks))?;
    let ghr_loss = evaluate_loss(&tape.output, target)?;
    let ghr = backward(model, &tape, ghr_loss.ghr)?;
    let trace = ad_forward(model, x, masks)?;
    let ad_loss = evaluate_loss(&trace.output()?, target)?;
    let ad = ad_backward(model, &trace, &ad_loss.ad)?;
    compare(model, &ghr, &ad, tolerance)
}

/// Compare a GHR backward result with a component-layout AD result.
pub fn compare(model: &Model, ghr: &Backward, ad: &Backward, tolerance: f64) -> Result<RelationReport> {
    let mut entries = Vec::new();
    let mut push = |layer: usize, tensor: &'static str, dev: f64| {
        entries.push(RelationEntry {
            layer,
            layer_name: model.layers[layer].name(),
            tensor,
            max_rel_dev: dev,
            pass: dev <= tolerance,
        })
    };
    for (l, (g, a)) in ghr.grads.layers.iter().zip(&ad.grads.layers).enumerate() {
        match (g, a) {
            (None, None) => {}
            (Some(LayerGrads::Quat { weight: gw, bias: gb }), Some(LayerGrads::Quat { weight: aw, bias: ab })) => {
                let four = |v: Quaternion| v.scale(4.0);
                push(l, "weight", max_rel_dev(&components(aw.data(), |v| v), &components(gw.data(), four)));
                push(l, "bias", max_rel_dev(&components(ab.data(), |v| v), &components(gb.data(), four)));
            }
            (Some(LayerGrads::Real { weight: gw, bias: gb }), Some(LayerGrads::Real { weight: aw, bias: ab })) => {
                push(l, "weight", max_rel_dev(aw.data(), gw.data()));
                push(l, "bias", max_rel_dev(ab.data(), gb.data()));
            }
            _ => push(l, "weight", f64::INFINITY),
        }
    }
    for (l, (g, a)) in ghr.messages.iter().zip(&ad.messages).enumerate() {
        let dev = match (g, a) {
            (Signal::Quat(p), Signal::Quat(s)) => max_rel_dev(
                &components(s.data(), |v| v),
                &components(p.data(), |v| v.conjugate().scale(4.0)),
            ),
            (Signal::Real(p), Signal::Real(s)) => max_rel_dev(s.data(), p.data()),
            _ => f64::INFINITY,
        };
        push(l, "message", dev);
    }
    Ok(RelationReport { tolerance, entries })
}
