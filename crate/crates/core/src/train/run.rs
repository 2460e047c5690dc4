use std::io::Write;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{batch, Dataset, Sample};
use crate::autodiff::{ad_backward, ad_forward, verify};
use crate::backprop::{backward, sgd_step, sgd_step_split, Backward};
use crate::error::{Error, Result};
use crate::layers::{DropoutMode, Model, Signal};
use crate::loss::{evaluate_loss, Target};
use crate::{QTensor, Quaternion, RTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Hand-derived quaternion backpropagation.
    #[default]
    Ghr,
    /// Component-level AD; quaternion learning rates are divided by 4.
    Ad,
    /// GHR updates, with the AD relation asserted on every step.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    /// `Σ |d − y|²` against the sample targets, or a one-hot class code.
    QuaternionMse,
}

fn default_batch() -> usize {
    16
}
fn default_epochs() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub loss: LossKind,
}

impl TrainSpec {
    pub fn new(lr: f64, batch: usize, epochs: usize, seed: u64) -> Self {
        Self { lr, batch, epochs, seed, engine: Engine::Ghr, loss: LossKind::CrossEntropy }
    }

    /// `λ = 0` is accepted and leaves the model unchanged.
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::InvalidArgument(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch size and epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch's steps.
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    /// `epoch,loss,train_acc,test_acc`, with full-precision floats.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "epoch,loss,train_acc,test_acc")?;
        for e in &self.epochs {
            writeln!(w, "{},{:?},{:?},{:?}", e.epoch, e.loss, e.train_acc, e.test_acc)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// One-hot class codes shaped like `output`.
fn class_code(output: &Signal, labels: &[usize]) -> Result<Signal> {
    let shape = output.shape();
    let per: usize = shape[1..].iter().product();
    let mut hot = Vec::with_capacity(labels.len());
    for (b, &l) in labels.iter().enumerate() {
        if l >= per {
            return Err(Error::Shape(format!("label {l} does not fit an output of {per} elements")));
        }
        hot.push(b * per + l);
    }
    Ok(match output {
        Signal::Quat(_) => {
            let mut t = QTensor::zeros(shape.to_vec());
            for i in hot {
                t.data_mut()[i] = Quaternion::one();
            }
            Signal::Quat(t)
        }
        Signal::Real(_) => {
            let mut t = RTensor::zeros(shape.to_vec());
            for i in hot {
                t.data_mut()[i] = 1.0;
            }
            Signal::Real(t)
        }
    })
}

fn make_target(kind: LossKind, output: &Signal, labels: Vec<usize>, targets: Option<Signal>) -> Result<Target> {
    match kind {
        LossKind::CrossEntropy => Ok(Target::Labels(labels)),
        LossKind::QuaternionMse => Ok(Target::Values(match targets {
            Some(t) => t,
            None => class_code(output, &labels)?,
        })),
    }
}

fn check_finite(b: &Backward) -> bool {
    b.grads.layers.iter().flatten().all(|g| g.is_finite())
}

/// One SGD step on batch `x`. Returns the batch loss before the update.
pub fn train_step(
    model: &mut Model,
    x: &Signal,
    target: &Target,
    engine: Engine,
    lr: f64,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let tape = model.forward_traced(x, DropoutMode::Train(rng))?;
    let eval = evaluate_loss(&tape.output, target)?;
    if !eval.loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, step: 0, loss: eval.loss });
    }
    let masks = tape.dropout_masks();
    match engine {
        Engine::Ghr => {
            let back = backward(model, &tape, eval.ghr)?;
            if !check_finite(&back) {
                return Err(Error::Divergence { epoch: 0, step: 0, loss: f64::NAN });
            }
            sgd_step(model, &back.grads, lr)?;
        }
        Engine::Ad => {
            let trace = ad_forward(model, x, &masks)?;
            let back = ad_backward(model, &trace, &eval.ad)?;
            if !check_finite(&back) {
                return Err(Error::Divergence { epoch: 0, step: 0, loss: f64::NAN });
            }
            sgd_step_split(model, &back.grads, lr / 4.0, lr)?;
        }
        Engine::Both => {
            let ghr = backward(model, &tape, eval.ghr)?;
            let trace = ad_forward(model, x, &masks)?;
            let ad = ad_backward(model, &trace, &eval.ad)?;
            verify::compare(model, &ghr, &ad, verify::DEFAULT_TOLERANCE)?.check()?;
            if !check_finite(&ghr) {
                return Err(Error::Divergence { epoch: 0, step: 0, loss: f64::NAN });
            }
            sgd_step(model, &ghr.grads, lr)?;
        }
    }
    Ok(eval.loss)
}

/// Mini-batch SGD over a per-epoch shuffle of the training set. The whole
/// run is determined by `spec` (including its seed) and the initial model.
pub fn train(model: &mut Model, data: &Dataset, spec: &TrainSpec) -> Result<History> {
    spec.validate()?;
    data.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut history = History::default();
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, idx) in order.chunks(spec.batch).enumerate() {
            let samples: Vec<&Sample> = idx.iter().map(|&i| &data.train[i]).collect();
            let (x, labels, targets) = batch(&samples)?;
            let target = match spec.loss {
                LossKind::CrossEntropy => Target::Labels(labels),
                LossKind::QuaternionMse => {
                    let probe = model.forward(&x, DropoutMode::Inference)?;
                    make_target(spec.loss, &probe, labels, targets)?
                }
            };
            let loss = train_step(model, &x, &target, spec.engine, spec.lr, &mut rng).map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence { epoch, step, loss },
                other => other,
            })?;
            total += loss;
        }
        history.epochs.push(EpochStats {
            epoch,
            loss: total / data.train.len() as f64,
            train_acc: evaluate(model, &data.train)?,
            test_acc: if data.test.is_empty() { f64::NAN } else { evaluate(model, &data.test)? },
        });
    }
    Ok(history)
}

/// Predicted class: argmax of the logits, or of the real parts for a
/// quaternion output.
pub fn predict(model: &Model, x: &Signal) -> Result<Vec<usize>> {
    let out = model.forward(x, DropoutMode::Inference)?;
    let batch = out.shape()[0];
    let scores: Vec<f64> = match &out {
        Signal::Real(t) => t.data().to_vec(),
        Signal::Quat(t) => t.data().iter().map(|q| q.q0).collect(),
    };
    let per = scores.len() / batch.max(1);
    Ok(scores
        .chunks(per.max(1))
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect())
}

/// Fraction of samples classified correctly (`1.0` for an empty set).
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(1.0);
    }
    let mut correct = 0;
    for chunk in samples.chunks(64) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let (x, labels, _) = batch(&refs)?;
        correct += predict(model, &x)?.iter().zip(&labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{build_model, encode, synth_dataset, Arch, Encoding, ModelConfig, Numeric, SynthSpec, Width};

    fn tiny() -> (Model, Dataset) {
        let spec = SynthSpec { train_per_class: 4, test_per_class: 2, ..SynthSpec::new(2, 2, 64, 3) };
        let data = encode(&synth_dataset(&spec).unwrap(), Encoding::Quaternion { chunk_len: 8 }).unwrap();
        let mut cfg = ModelConfig::new(Arch::OneConv, Width::Low, Numeric::Quaternion, 2, 2, 8);
        cfg.conv_channels = Some(vec![3]);
        cfg.linear_sizes = Some(vec![4, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        (build_model(&cfg, &mut rng).unwrap(), data)
    }

    #[test]
    fn zero_learning_rate_is_flat() {
        let (mut model, data) = tiny();
        let before = model.clone();
        let h = train(&mut model, &data, &TrainSpec::new(0.0, 3, 3, 1)).unwrap();
        assert_eq!(model, before);
        assert!(h.epochs.windows(2).all(|w| (w[0].loss - w[1].loss).abs() < 1e-12 && w[0].test_acc == w[1].test_acc));
    }

    #[test]
    fn deterministic() {
        let (model, data) = tiny();
        let spec = TrainSpec::new(0.05, 3, 2, 7);
        let (mut a, mut b) = (model.clone(), model);
        assert_eq!(train(&mut a, &data, &spec).unwrap(), train(&mut b, &data, &spec).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn both_engine_leaves_history_unchanged() {
        let (model, data) = tiny();
        let spec = TrainSpec::new(0.05, 4, 2, 7);
        let both = TrainSpec { engine: Engine::Both, ..spec };
        let (mut a, mut b) = (model.clone(), model);
        assert_eq!(train(&mut a, &data, &spec).unwrap(), train(&mut b, &data, &both).unwrap());
    }

    #[test]
    fn divergence_is_reported() {
        let (_, data) = tiny();
        let mut cfg = ModelConfig::new(Arch::OneConv, Width::Low, Numeric::Quaternion, 2, 2, 8);
        cfg.conv_channels = Some(vec![3]);
        cfg.linear_sizes = Some(vec![4, 2]);
        cfg.activation = crate::layers::Activation::Identity;
        cfg.head = false;
        let mut model = build_model(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let spec = TrainSpec { loss: LossKind::QuaternionMse, ..TrainSpec::new(1e3, 8, 50, 0) };
        let err = train(&mut model, &data, &spec).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn history_csv() {
        let h = History {
            epochs: vec![EpochStats { epoch: 0, loss: 0.5, train_acc: 1.0, test_acc: 0.25 }],
        };
        assert_eq!(h.to_csv(), "epoch,loss,train_acc,test_acc\n0,0.5,1.0,0.25\n");
    }
}
