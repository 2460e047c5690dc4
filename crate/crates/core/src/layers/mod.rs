//! Layer forwards and the sequential [`Model`] container.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod dropout;
pub mod linear;
pub mod pool;

use rand::RngCore;

use crate::backprop::{GradTape, LayerRecord};
use crate::error::{Error, Result};
use crate::{QTensor, RTensor};

pub use activation::{activate, activate_real, Activation};
pub use conv::{ProductOrder, QConv1d, RealConv1d};
pub use dropout::{qdropout, Dropout};
pub use linear::{unpack, QLinear, RealHead, RealLinear};
pub use pool::{component_max_pool, magnitude_max_pool, PoolIndices, PoolMode, PoolSpec};

/// `1/√fan_in` for real fan-in.
pub(crate) fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

/// A batch flowing through the network: quaternion or real valued.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Quat(QTensor),
    Real(RTensor),
}

impl Signal {
    pub fn shape(&self) -> &[usize] {
        match self {
            Signal::Quat(t) => t.shape(),
            Signal::Real(t) => t.shape(),
        }
    }

    pub fn as_quat(&self) -> Result<&QTensor> {
        match self {
            Signal::Quat(t) => Ok(t),
            Signal::Real(_) => Err(Error::Shape("expected a quaternion signal, got a real one".into())),
        }
    }

    pub fn as_real(&self) -> Result<&RTensor> {
        match self {
            Signal::Real(t) => Ok(t),
            Signal::Quat(_) => Err(Error::Shape("expected a real signal, got a quaternion one".into())),
        }
    }

    pub fn into_quat(self) -> Result<QTensor> {
        match self {
            Signal::Quat(t) => Ok(t),
            Signal::Real(_) => Err(Error::Shape("expected a quaternion signal, got a real one".into())),
        }
    }

    pub fn into_real(self) -> Result<RTensor> {
        match self {
            Signal::Real(t) => Ok(t),
            Signal::Quat(_) => Err(Error::Shape("expected a real signal, got a quaternion one".into())),
        }
    }

    pub fn is_quat(&self) -> bool {
        matches!(self, Signal::Quat(_))
    }

    /// Number of elements (quaternions or reals).
    pub fn len(&self) -> usize {
        match self {
            Signal::Quat(t) => t.len(),
            Signal::Real(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn reshaped(self, shape: Vec<usize>) -> Result<Signal> {
        Ok(match self {
            Signal::Quat(t) => Signal::Quat(t.reshape(shape)?),
            Signal::Real(t) => Signal::Real(t.reshape(shape)?),
        })
    }

    /// Stack per-sample signals into a batch along a new leading axis.
    pub fn stack(items: &[&Signal]) -> Result<Signal> {
        let Some(first) = items.first() else {
            return Err(Error::Shape("cannot batch zero samples".into()));
        };
        if first.is_quat() {
            let parts = items.iter().map(|s| s.as_quat()).collect::<Result<Vec<_>>>()?;
            Ok(Signal::Quat(QTensor::stack(&parts)?))
        } else {
            let parts = items.iter().map(|s| s.as_real()).collect::<Result<Vec<_>>>()?;
            Ok(Signal::Real(RTensor::stack(&parts)?))
        }
    }
}

/// One stage of a sequential network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dropout(Dropout),
    QConv1d(QConv1d),
    Conv1d(RealConv1d),
    Activation(Activation),
    Pool(PoolSpec),
    /// `[B, C, L]` to `[B, C·L]`, channel-major.
    Flatten,
    QLinear(QLinear),
    Linear(RealLinear),
    Head(RealHead),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dropout(_) => "dropout",
            Layer::QConv1d(_) => "qconv1d",
            Layer::Conv1d(_) => "conv1d",
            Layer::Activation(_) => "activation",
            Layer::Pool(_) => "pool",
            Layer::Flatten => "flatten",
            Layer::QLinear(_) => "qlinear",
            Layer::Linear(_) => "linear",
            Layer::Head(_) => "head",
        }
    }

    /// Trainable real parameters (a quaternion counts four).
    pub fn param_count(&self) -> usize {
        match self {
            Layer::QConv1d(c) => 4 * (c.weight.len() + c.bias.len()),
            Layer::QLinear(l) => 4 * (l.weight.len() + l.bias.len()),
            Layer::Conv1d(c) => c.weight.len() + c.bias.len(),
            Layer::Linear(l) => l.weight.len() + l.bias.len(),
            Layer::Head(h) => h.linear.weight.len() + h.linear.bias.len(),
            _ => 0,
        }
    }

    /// Quaternion layers whose parameters are quaternions.
    pub fn has_quaternion_params(&self) -> bool {
        matches!(self, Layer::QConv1d(_) | Layer::QLinear(_))
    }

    pub fn has_params(&self) -> bool {
        self.param_count() > 0
    }
}

/// How dropout layers behave during a forward pass.
pub enum DropoutMode<'a> {
    /// Identity.
    Inference,
    /// Fresh masks drawn from the generator, in layer order.
    Train(&'a mut dyn RngCore),
    /// Masks recorded by an earlier pass, indexed by layer position.
    Replay(&'a [Option<Vec<f64>>]),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Model {
    pub layers: Vec<Layer>,
}

impl Model {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Whether the model consumes quaternion input.
    pub fn takes_quaternions(&self) -> bool {
        for layer in &self.layers {
            match layer {
                Layer::QConv1d(_) | Layer::QLinear(_) | Layer::Head(_) => return true,
                Layer::Conv1d(_) | Layer::Linear(_) => return false,
                _ => {}
            }
        }
        true
    }

    pub fn forward(&self, x: &Signal, mode: DropoutMode<'_>) -> Result<Signal> {
        Ok(self.run(x, mode, false)?.output)
    }

    /// Forward pass recording everything the backward engines need.
    pub fn forward_traced(&self, x: &Signal, mode: DropoutMode<'_>) -> Result<GradTape> {
        self.run(x, mode, true)
    }

    fn run(&self, x: &Signal, mut mode: DropoutMode<'_>, record: bool) -> Result<GradTape> {
        let mut records = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        let mut cur = x.clone();
        for (index, layer) in self.layers.iter().enumerate() {
            let (next, rec) = forward_layer(layer, index, cur, &mut mode, record)?;
            if let Some(rec) = rec {
                records.push(rec);
            }
            cur = next;
        }
        Ok(GradTape { records, output: cur })
    }
}

fn forward_layer(
    layer: &Layer,
    index: usize,
    x: Signal,
    mode: &mut DropoutMode<'_>,
    record: bool,
) -> Result<(Signal, Option<LayerRecord>)> {
    let keep = |r: LayerRecord| if record { Some(r) } else { None };
    Ok(match layer {
        Layer::Dropout(d) => {
            let mask = match mode {
                DropoutMode::Inference => None,
                DropoutMode::Train(rng) => Some(d.sample_mask(x.len(), &mut **rng)),
                DropoutMode::Replay(masks) => masks.get(index).cloned().flatten(),
            };
            match mask {
                None => (x, keep(LayerRecord::Dropout { mask: None })),
                Some(mask) => {
                    if mask.len() != x.len() {
                        return Err(Error::Shape(format!(
                            "dropout mask of {} elements for a signal of {}",
                            mask.len(),
                            x.len()
                        )));
                    }
                    let out = match &x {
                        Signal::Quat(t) => Signal::Quat(dropout::apply_quat_mask(t, &mask)),
                        Signal::Real(t) => Signal::Real(dropout::apply_real_mask(t, &mask)),
                    };
                    (out, keep(LayerRecord::Dropout { mask: Some(mask) }))
                }
            }
        }
        Layer::QConv1d(conv) => {
            let input = x.into_quat()?;
            let out = conv.forward(&input)?;
            (Signal::Quat(out), keep(LayerRecord::QConv1d { input }))
        }
        Layer::Conv1d(conv) => {
            let input = x.into_real()?;
            let out = conv.forward(&input)?;
            (Signal::Real(out), keep(LayerRecord::Conv1d { input }))
        }
        Layer::Activation(act) => {
            let out = match &x {
                Signal::Quat(z) => Signal::Quat(activate(*act, z)),
                Signal::Real(z) => Signal::Real(activate_real(*act, z)),
            };
            (out, keep(LayerRecord::Activation { pre: x }))
        }
        Layer::Pool(spec) => {
            let input_shape = x.shape().to_vec();
            let (out, indices) = match &x {
                Signal::Quat(t) => {
                    let (y, idx) = pool::quaternion_max_pool(spec, t)?;
                    (Signal::Quat(y), idx)
                }
                Signal::Real(t) => {
                    let (y, idx) = pool::real_max_pool(spec, t)?;
                    (Signal::Real(y), idx)
                }
            };
            (out, keep(LayerRecord::Pool { input_shape, indices }))
        }
        Layer::Flatten => {
            let input_shape = x.shape().to_vec();
            let [batch, rest @ ..] = input_shape.as_slice() else {
                return Err(Error::Shape("cannot flatten a rank-0 signal".into()));
            };
            let features = rest.iter().product();
            let out = x.reshaped(vec![*batch, features])?;
            (out, keep(LayerRecord::Flatten { input_shape }))
        }
        Layer::QLinear(lin) => {
            let input = x.into_quat()?;
            input.dims::<2>()?;
            let out = lin.forward(&input)?;
            (Signal::Quat(out), keep(LayerRecord::QLinear { input }))
        }
        Layer::Linear(lin) => {
            let input = x.into_real()?;
            let out = lin.forward(&input)?;
            (Signal::Real(out), keep(LayerRecord::Linear { input }))
        }
        Layer::Head(head) => {
            let input = x.into_quat()?;
            let out = head.forward(&input)?;
            (Signal::Real(out), keep(LayerRecord::Head { input }))
        }
    })
}

/// `[B, C, L]` to `[B, C·L]`; the element order is unchanged.
pub fn flatten(x: &QTensor) -> Result<QTensor> {
    let [b, c, l] = x.dims::<3>()?;
    x.clone().reshape(vec![b, c * l])
}
