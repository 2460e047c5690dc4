//! Finite-difference verification of the backward engines.
//!
//! Every parameter component and every input component is perturbed by
//! `±h`; the central differences are assembled into quaternion derivatives
//! (`∂L/∂w* = ¼(∂0 + ∂1 i + ∂2 j + ∂3 k)` for parameters,
//! `∂L/∂a = ¼(∂0 − ∂1 i − ∂2 j − ∂3 k)` for the input message) and compared
//! with the GHR engine. Perturbations that change a pooling decision are
//! retried with a smaller step and skipped if the kink persists.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::verify::{verify_with_masks, DEFAULT_TOLERANCE};
use crate::backprop::{backward_with_fault, Fault, LayerGrads, LayerRecord};
use crate::calculus::{ghr_derivative, ComponentPartials};
use crate::error::Result;
use crate::layers::{
    Activation, Dropout, DropoutMode, Layer, Model, PoolIndices, PoolMode, PoolSpec, ProductOrder, QConv1d, QLinear, RealHead, Signal,
};
use crate::loss::{evaluate_loss, Target};
use crate::{QTensor, Quaternion, RTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub step: f64,
    /// Parameterized layers per network.
    pub max_layers: usize,
    pub max_width: usize,
    pub max_batch: usize,
    /// Tolerance of the AD relation check.
    pub relation_tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            seed: 0,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
            step: 1e-5,
            max_layers: 3,
            max_width: 8,
            max_batch: 4,
            relation_tol: DEFAULT_TOLERANCE,
        }
    }
}

/// A gradient entry that disagrees with its finite-difference estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub trial: usize,
    pub path: String,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub trials: usize,
    /// Compared real components.
    pub checked: usize,
    /// Components skipped because every step straddled a pooling kink.
    pub skipped: usize,
    pub max_abs_err: f64,
    pub mismatches: Vec<Mismatch>,
    pub relation_max_dev: f64,
    pub relation_failures: Vec<String>,
    pub pool_modes_seen: [bool; 2],
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.relation_failures.is_empty()
    }

    fn merge(&mut self, other: GradCheckReport) {
        self.trials += other.trials;
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.mismatches.extend(other.mismatches);
        self.relation_max_dev = self.relation_max_dev.max(other.relation_max_dev);
        self.relation_failures.extend(other.relation_failures);
        for i in 0..2 {
            self.pool_modes_seen[i] |= other.pool_modes_seen[i];
        }
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trials:              {}", self.trials)?;
        writeln!(f, "components checked:  {}", self.checked)?;
        writeln!(f, "kinks skipped:       {}", self.skipped)?;
        writeln!(f, "max abs error:       {:.3e}", self.max_abs_err)?;
        writeln!(f, "ad relation max dev: {:.3e}", self.relation_max_dev)?;
        for m in self.mismatches.iter().take(20) {
            writeln!(
                f,
                "MISMATCH trial {} {}: analytic {:.9e}, finite difference {:.9e}",
                m.trial, m.path, m.analytic, m.numeric
            )?;
        }
        if self.mismatches.len() > 20 {
            writeln!(f, "... {} more mismatches", self.mismatches.len() - 20)?;
        }
        for r in &self.relation_failures {
            writeln!(f, "RELATION {r}")?;
        }
        write!(f, "result: {}", if self.passed() { "pass" } else { "FAIL" })
    }
}

/// A randomly drawn network with an input batch, a loss target and the
/// dropout masks to replay.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: Model,
    pub x: Signal,
    pub target: Target,
    pub masks: Vec<Option<Vec<f64>>>,
}

const SMOOTH: [Activation; 3] = [Activation::Identity, Activation::Tanh, Activation::Tanhshrink];

fn rand_quat(rng: &mut impl Rng) -> Quaternion {
    Quaternion::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Draw a network: an optional conv stage (conv, activation, pooling in the
/// requested mode), then linear layers, ending in either a quaternion
/// output under MSE or a real head under cross-entropy.
pub fn random_problem(rng: &mut ChaCha8Rng, cfg: &GradCheckConfig, pool_mode: PoolMode) -> Result<Problem> {
    let max_w = cfg.max_width.max(1);
    let batch = rng.gen_range(1..=cfg.max_batch.max(1));
    let mut layers = Vec::new();
    let mut budget = rng.gen_range(1..=cfg.max_layers.max(1));
    let use_conv = budget >= 1 && rng.gen_bool(0.7);
    let dropout = |layers: &mut Vec<Layer>, rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.3) {
            layers.push(Layer::Dropout(Dropout::new(0.3).expect("valid probability")));
        }
    };
    let x;
    let mut features;
    if use_conv {
        let c_in = rng.gen_range(1..=max_w.min(4));
        let len = rng.gen_range(4..=10);
        x = QTensor::from_fn(vec![batch, c_in, len], |_| rand_quat(rng));
        let convs = if budget >= 2 && rng.gen_bool(0.4) { 2 } else { 1 };
        let (mut c, mut l) = (c_in, len);
        for block in 0..convs {
            let kernel = rng.gen_range(1..=3.min(l));
            let stride = if rng.gen_bool(0.3) { 2 } else { 1 };
            let c_out = rng.gen_range(1..=max_w);
            let order = if rng.gen_bool(0.2) { ProductOrder::InputLeft } else { ProductOrder::WeightLeft };
            dropout(&mut layers, rng);
            let mut conv = QConv1d::init(c, c_out, kernel, stride, order, rng);
            conv.bias = QTensor::from_fn(vec![c_out], |_| rand_quat(rng).scale(0.5));
            layers.push(Layer::QConv1d(conv));
            layers.push(Layer::Activation(SMOOTH[rng.gen_range(0..3)]));
            l = (l - kernel) / stride + 1;
            c = c_out;
            if block == 0 && l >= 2 {
                let pool = PoolSpec::new(pool_mode, 2, rng.gen_range(1..=2))?;
                l = pool.output_len(l)?;
                layers.push(Layer::Pool(pool));
            }
        }
        budget -= convs;
        layers.push(Layer::Flatten);
        features = c * l;
    } else {
        features = rng.gen_range(1..=max_w);
        x = QTensor::from_fn(vec![batch, features], |_| rand_quat(rng));
    }
    let head = rng.gen_bool(0.5);
    let linear = if head { budget.saturating_sub(1) } else { budget };
    for i in 0..linear {
        let width = rng.gen_range(1..=max_w);
        dropout(&mut layers, rng);
        let mut lin = QLinear::init(features, width, rng);
        lin.bias = QTensor::from_fn(vec![width], |_| rand_quat(rng).scale(0.5));
        layers.push(Layer::QLinear(lin));
        if head || i + 1 < linear || rng.gen_bool(0.5) {
            layers.push(Layer::Activation(SMOOTH[rng.gen_range(0..3)]));
        }
        features = width;
    }
    let model_has_params = layers.iter().any(Layer::has_params);
    let (head, target_classes) = if head || !model_has_params {
        let classes = rng.gen_range(2..=max_w.max(2));
        (true, classes)
    } else {
        (false, 0)
    };
    if head {
        layers.push(Layer::Head(RealHead::init(features, target_classes, rng)));
    }
    let model = Model::new(layers);
    let x = Signal::Quat(x);
    let traced = model.forward_traced(&x, DropoutMode::Train(rng))?;
    let masks = traced.dropout_masks();
    let target = if head {
        Target::Labels((0..batch).map(|_| rng.gen_range(0..target_classes)).collect())
    } else {
        let shape = traced.output.shape().to_vec();
        Target::Values(Signal::Quat(QTensor::from_fn(shape, |_| rand_quat(rng))))
    };
    Ok(Problem { model, x, target, masks })
}

fn loss_and_pools(
    model: &Model,
    x: &Signal,
    masks: &[Option<Vec<f64>>],
    target: &Target,
) -> Result<(f64, Vec<PoolIndices>)> {
    let tape = model.forward_traced(x, DropoutMode::Replay(masks))?;
    let loss = evaluate_loss(&tape.output, target)?.loss;
    let pools = tape
        .records
        .into_iter()
        .filter_map(|r| match r {
            LayerRecord::Pool { indices, .. } => Some(indices),
            _ => None,
        })
        .collect();
    Ok((loss, pools))
}

/// Central difference of `f` at 0. `None` when every tried step changes a
/// pooling decision.
fn central_difference(
    mut f: impl FnMut(f64) -> Result<(f64, Vec<PoolIndices>)>,
    base: &[PoolIndices],
    h: f64,
) -> Result<Option<f64>> {
    let mut step = h;
    for _ in 0..3 {
        let (up, p_up) = f(step)?;
        let (dn, p_dn) = f(-step)?;
        if p_up == base && p_dn == base {
            return Ok(Some((up - dn) / (2.0 * step)));
        }
        step /= 10.0;
    }
    Ok(None)
}

#[derive(Clone, Copy)]
enum Slot {
    Weight,
    Bias,
}

impl Slot {
    fn name(self) -> &'static str {
        match self {
            Slot::Weight => "weight",
            Slot::Bias => "bias",
        }
    }
}

/// Add `delta` to one real component of a parameter.
fn nudge(layer: &mut Layer, slot: Slot, elem: usize, comp: usize, delta: f64) {
    fn quat(t: &mut QTensor, elem: usize, comp: usize, delta: f64) {
        let mut a = t.data()[elem].to_array();
        a[comp] += delta;
        t.data_mut()[elem] = Quaternion::from_array(a);
    }
    fn real(t: &mut RTensor, elem: usize, delta: f64) {
        t.data_mut()[elem] += delta;
    }
    match (layer, slot) {
        (Layer::QLinear(l), Slot::Weight) => quat(&mut l.weight, elem, comp, delta),
        (Layer::QLinear(l), Slot::Bias) => quat(&mut l.bias, elem, comp, delta),
        (Layer::QConv1d(c), Slot::Weight) => quat(&mut c.weight, elem, comp, delta),
        (Layer::QConv1d(c), Slot::Bias) => quat(&mut c.bias, elem, comp, delta),
        (Layer::Head(RealHead { linear: l }) | Layer::Linear(l), Slot::Weight) => real(&mut l.weight, elem, delta),
        (Layer::Head(RealHead { linear: l }) | Layer::Linear(l), Slot::Bias) => real(&mut l.bias, elem, delta),
        (Layer::Conv1d(c), Slot::Weight) => real(&mut c.weight, elem, delta),
        (Layer::Conv1d(c), Slot::Bias) => real(&mut c.bias, elem, delta),
        _ => {}
    }
}

fn index_path(shape: &[usize], mut flat: usize) -> String {
    let mut idx = vec![0; shape.len()];
    for (slot, &d) in idx.iter_mut().zip(shape).rev() {
        *slot = flat % d.max(1);
        flat /= d.max(1);
    }
    let parts: Vec<String> = idx.iter().map(usize::to_string).collect();
    format!("[{}]", parts.join(","))
}

struct Checker<'a> {
    cfg: &'a GradCheckConfig,
    trial: usize,
    report: GradCheckReport,
}

impl Checker<'_> {
    fn compare(&mut self, path: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.report.checked += 1;
        let err = (analytic - numeric).abs();
        self.report.max_abs_err = self.report.max_abs_err.max(err);
        let scale = analytic.abs().max(numeric.abs());
        if !(err <= self.cfg.abs_tol || err <= self.cfg.rel_tol * scale) {
            self.report.mismatches.push(Mismatch { trial: self.trial, path: path(), analytic, numeric });
        }
    }
}

/// Check one problem: every parameter gradient and the input message.
pub fn check_problem(problem: &Problem, cfg: &GradCheckConfig, trial: usize, fault: Option<Fault>) -> Result<GradCheckReport> {
    let Problem { model, x, target, masks } = problem;
    let tape = model.forward_traced(x, DropoutMode::Replay(masks))?;
    let upstream = evaluate_loss(&tape.output, target)?.ghr;
    let back = backward_with_fault(model, &tape, upstream, fault)?;
    let (_, base_pools) = loss_and_pools(model, x, masks, target)?;
    let mut ck = Checker { cfg, trial, report: GradCheckReport { trials: 1, ..Default::default() } };
    for layer in &model.layers {
        if let Layer::Pool(p) = layer {
            ck.report.pool_modes_seen[(p.mode == PoolMode::Magnitude) as usize] = true;
        }
    }

    for (l, grads) in back.grads.layers.iter().enumerate() {
        let Some(grads) = grads else { continue };
        let name = model.layers[l].name();
        for slot in [Slot::Weight, Slot::Bias] {
            let probe = |elem: usize, comp: usize| {
                central_difference(
                    |d| {
                        let mut m = model.clone();
                        nudge(&mut m.layers[l], slot, elem, comp, d);
                        loss_and_pools(&m, x, masks, target)
                    },
                    &base_pools,
                    cfg.step,
                )
            };
            match grads {
                LayerGrads::Quat { weight, bias } => {
                    let t = if matches!(slot, Slot::Weight) { weight } else { bias };
                    for (elem, g) in t.data().iter().enumerate() {
                        let mut d = [Quaternion::zero(); 4];
                        let mut kink = false;
                        for (comp, slot_d) in d.iter_mut().enumerate() {
                            match probe(elem, comp)? {
                                Some(v) => *slot_d = Quaternion::from_real(v),
                                None => kink = true,
                            }
                        }
                        if kink {
                            ck.report.skipped += 4;
                            continue;
                        }
                        let fd = ghr_derivative(&ComponentPartials { d }, Quaternion::one(), true)?.to_array();
                        for (comp, (a, n)) in g.to_array().into_iter().zip(fd).enumerate() {
                            ck.compare(
                                || format!("layer {l} ({name}) {}{}.q{comp}", slot.name(), index_path(t.shape(), elem)),
                                a,
                                n,
                            );
                        }
                    }
                }
                LayerGrads::Real { weight, bias } => {
                    let t = if matches!(slot, Slot::Weight) { weight } else { bias };
                    for (elem, &g) in t.data().iter().enumerate() {
                        match probe(elem, 0)? {
                            Some(n) => ck.compare(
                                || format!("layer {l} ({name}) {}{}", slot.name(), index_path(t.shape(), elem)),
                                g,
                                n,
                            ),
                            None => ck.report.skipped += 1,
                        }
                    }
                }
            }
        }
    }

    if let (Signal::Quat(xq), Some(Signal::Quat(p))) = (x, back.messages.first()) {
        for (elem, g) in p.data().iter().enumerate() {
            let mut d = [Quaternion::zero(); 4];
            let mut kink = false;
            for (comp, slot_d) in d.iter_mut().enumerate() {
                let v = central_difference(
                    |delta| {
                        let mut xp = xq.clone();
                        let mut a = xp.data()[elem].to_array();
                        a[comp] += delta;
                        xp.data_mut()[elem] = Quaternion::from_array(a);
                        loss_and_pools(model, &Signal::Quat(xp), masks, target)
                    },
                    &base_pools,
                    cfg.step,
                )?;
                match v {
                    Some(v) => *slot_d = Quaternion::from_real(v),
                    None => kink = true,
                }
            }
            if kink {
                ck.report.skipped += 4;
                continue;
            }
            let fd = ghr_derivative(&ComponentPartials { d }, Quaternion::one(), false)?.to_array();
            for (comp, (a, n)) in g.to_array().into_iter().zip(fd).enumerate() {
                ck.compare(|| format!("input message{}.q{comp}", index_path(xq.shape(), elem)), a, n);
            }
        }
    }

    let relation = verify_with_masks(model, x, target, masks, cfg.relation_tol)?;
    ck.report.relation_max_dev = relation.max_rel_dev();
    for e in relation.entries.iter().filter(|e| !e.pass) {
        ck.report.relation_failures.push(format!(
            "trial {trial} layer {} ({}) {}: deviation {:.3e}",
            e.layer, e.layer_name, e.tensor, e.max_rel_dev
        ));
    }
    Ok(ck.report)
}

/// Seed of trial `t`, so any single trial can be replayed on its own.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64)
}

/// Run `cfg.trials` random problems, alternating the pooling mode.
pub fn run(cfg: &GradCheckConfig, fault: Option<Fault>) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::default();
    for t in 0..cfg.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, t));
        let mode = if t % 2 == 0 { PoolMode::Component } else { PoolMode::Magnitude };
        let problem = random_problem(&mut rng, cfg, mode)?;
        report.merge(check_problem(&problem, cfg, t, fault)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let cfg = GradCheckConfig { trials: 12, ..Default::default() };
        let report = run(&cfg, None).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.checked > 0);
        assert_eq!(report.pool_modes_seen, [true, true]);
    }

    #[test]
    fn sign_flip_is_caught() {
        let cfg = GradCheckConfig { trials: 6, ..Default::default() };
        let report = run(&cfg, Some(Fault::HiddenWeightSign)).unwrap();
        assert!(!report.mismatches.is_empty());
        assert!(report.mismatches.iter().any(|m| m.path.contains("weight")));
    }

    #[test]
    fn index_paths() {
        assert_eq!(index_path(&[2, 3], 4), "[1,1]");
        assert_eq!(index_path(&[4], 3), "[3]");
    }
}
