//! Component-level reverse-mode differentiation of quaternion models.
//!
//! Quaternions are treated as real 4-vectors and the ordinary chain rule is
//! applied to their components. The resulting gradients are reported in
//! "component layout": a quaternion-typed tensor whose element `g` holds
//! `(∂L/∂x0, ∂L/∂x1, ∂L/∂x2, ∂L/∂x3)` of the matching element `x`. They are
//! related to the GHR engine by `g = 4 ∂L/∂x*` for parameters and
//! `g = 4 (∂L/∂x)*` for activations.

pub mod emulation;
pub mod tape;
pub mod verify;

use crate::backprop::{Backward, Gradients, LayerGrads};
use crate::error::{shape_err, Result};
use crate::layers::{pool, Layer, Model, PoolIndices, ProductOrder, QConv1d, Signal};
use crate::{QTensor, Quaternion, RTensor};

pub use tape::{AdTape, ConvShape, NodeId};
pub use verify::{verify_ghr_ad_relation, RelationEntry, RelationReport};

/// `∂L/∂y` in component layout for `L = Σ |d − y|²`: `−2e` with `e = d − y`.
pub fn ad_loss_grad(y: &QTensor, d: &QTensor) -> Result<QTensor> {
    d.zip_map(y, |d, y| (*d - *y).scale(-2.0))
}

fn flat(sig: &Signal) -> Vec<f64> {
    match sig {
        Signal::Quat(t) => t.data().iter().flat_map(|q| q.to_array()).collect(),
        Signal::Real(t) => t.data().to_vec(),
    }
}

fn quats(values: &[f64], shape: Vec<usize>) -> Result<QTensor> {
    let data = values.chunks_exact(4).map(|c| Quaternion::new(c[0], c[1], c[2], c[3])).collect();
    QTensor::new(shape, data)
}

fn unflat(values: &[f64], shape: &[usize], quat: bool) -> Result<Signal> {
    Ok(if quat {
        Signal::Quat(quats(values, shape.to_vec())?)
    } else {
        Signal::Real(RTensor::new(shape.to_vec(), values.to_vec())?)
    })
}

/// A model evaluated on an [`AdTape`].
#[derive(Debug, Clone)]
pub struct AdTrace {
    pub tape: AdTape,
    /// Input node of every layer, then the output node.
    pub boundaries: Vec<NodeId>,
    /// Shape and kind of the signal at each boundary.
    pub signals: Vec<(Vec<usize>, bool)>,
    /// `(weight, bias)` leaves of parameterized layers.
    pub params: Vec<Option<(NodeId, NodeId)>>,
}

impl AdTrace {
    pub fn output(&self) -> Result<Signal> {
        let last = self.boundaries.len() - 1;
        let (shape, quat) = &self.signals[last];
        unflat(self.tape.value(self.boundaries[last]), shape, *quat)
    }
}

/// Evaluate `model` on the tape. `masks` are dropout masks by layer
/// position (missing entries mean identity).
pub fn ad_forward(model: &Model, x: &Signal, masks: &[Option<Vec<f64>>]) -> Result<AdTrace> {
    let mut tape = AdTape::new();
    let mut cur = tape.leaf(flat(x));
    let mut shape = x.shape().to_vec();
    let mut quat = x.is_quat();
    let mut boundaries = vec![cur];
    let mut signals = vec![(shape.clone(), quat)];
    let mut params = Vec::with_capacity(model.layers.len());
    for (index, layer) in model.layers.iter().enumerate() {
        let mut p = None;
        match layer {
            Layer::Dropout(_) => {
                if let Some(mask) = masks.get(index).and_then(Option::as_ref) {
                    let per = if quat { 4 } else { 1 };
                    let factor = mask.iter().flat_map(|&m| std::iter::repeat_n(m, per)).collect();
                    cur = tape.scale(cur, factor)?;
                }
            }
            Layer::QLinear(lin) => {
                let [batch, n] = dims2(&shape, quat, true)?;
                let m = lin.out_features();
                if n != lin.in_features() {
                    return shape_err(format!("qlinear expects {} features, got {n}", lin.in_features()));
                }
                let w = tape.leaf(flat(&Signal::Quat(lin.weight.clone())));
                let b = tape.leaf(flat(&Signal::Quat(lin.bias.clone())));
                cur = tape.q_affine(w, cur, b, batch, m, n)?;
                shape = vec![batch, m];
                p = Some((w, b));
            }
            Layer::QConv1d(conv) => {
                let cs = conv_shape(&shape, quat, true, conv.in_channels(), conv.out_channels(), conv.kernel(), conv.stride)?;
                let w = tape.leaf(flat(&Signal::Quat(conv.weight.clone())));
                let b = tape.leaf(flat(&Signal::Quat(conv.bias.clone())));
                cur = tape.q_conv(w, cur, b, cs, conv.order)?;
                shape = vec![cs.batch, cs.c_out, cs.l_out()];
                p = Some((w, b));
            }
            Layer::Linear(lin) => {
                let [batch, n] = dims2(&shape, quat, false)?;
                let m = lin.out_features();
                if n != lin.in_features() {
                    return shape_err(format!("linear expects {} features, got {n}", lin.in_features()));
                }
                let w = tape.leaf(lin.weight.data().to_vec());
                let b = tape.leaf(lin.bias.data().to_vec());
                cur = tape.r_affine(w, cur, b, batch, m, n)?;
                shape = vec![batch, m];
                p = Some((w, b));
            }
            Layer::Head(head) => {
                let [batch, f] = dims2(&shape, quat, true)?;
                let lin = &head.linear;
                if 4 * f != lin.in_features() {
                    return shape_err(format!("head expects {} quaternions, got {f}", lin.in_features() / 4));
                }
                let unpacked = tape.alias(cur);
                let w = tape.leaf(lin.weight.data().to_vec());
                let b = tape.leaf(lin.bias.data().to_vec());
                cur = tape.r_affine(w, unpacked, b, batch, lin.out_features(), 4 * f)?;
                shape = vec![batch, lin.out_features()];
                quat = false;
                p = Some((w, b));
            }
            Layer::Conv1d(conv) => {
                let cs = conv_shape(&shape, quat, false, conv.in_channels(), conv.out_channels(), conv.kernel(), conv.stride)?;
                let w = tape.leaf(conv.weight.data().to_vec());
                let b = tape.leaf(conv.bias.data().to_vec());
                cur = tape.r_conv(w, cur, b, cs)?;
                shape = vec![cs.batch, cs.c_out, cs.l_out()];
                p = Some((w, b));
            }
            Layer::Activation(act) => cur = tape.elementwise(cur, *act),
            Layer::Pool(spec) => {
                let values = tape.value(cur);
                let (out_shape, idx) = if quat {
                    let (y, indices) = pool::quaternion_max_pool(spec, &quats(values, shape.clone())?)?;
                    (y.shape().to_vec(), component_indices(&indices))
                } else {
                    let (y, indices) = pool::real_max_pool(spec, &RTensor::new(shape.clone(), values.to_vec())?)?;
                    let PoolIndices::Whole(idx) = indices else {
                        return shape_err("real pooling returned component indices");
                    };
                    (y.shape().to_vec(), idx)
                };
                cur = tape.gather(cur, idx)?;
                shape = out_shape;
            }
            Layer::Flatten => {
                let [batch, rest @ ..] = shape.as_slice() else {
                    return shape_err("cannot flatten a rank-0 signal");
                };
                shape = vec![*batch, rest.iter().product()];
                cur = tape.alias(cur);
            }
        }
        params.push(p);
        boundaries.push(cur);
        signals.push((shape.clone(), quat));
    }
    Ok(AdTrace { tape, boundaries, signals, params })
}

fn dims2(shape: &[usize], quat: bool, want_quat: bool) -> Result<[usize; 2]> {
    if quat != want_quat {
        return shape_err("layer received the wrong signal kind");
    }
    match shape {
        &[b, n] => Ok([b, n]),
        _ => shape_err(format!("expected a rank-2 signal, got {shape:?}")),
    }
}

fn conv_shape(
    shape: &[usize],
    quat: bool,
    want_quat: bool,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
) -> Result<ConvShape> {
    if quat != want_quat {
        return shape_err("layer received the wrong signal kind");
    }
    let &[batch, c, len] = shape else {
        return shape_err(format!("expected a rank-3 signal, got {shape:?}"));
    };
    if c != c_in {
        return shape_err(format!("conv expects {c_in} input channels, got {c}"));
    }
    crate::layers::conv::output_len(len, kernel, stride)?;
    Ok(ConvShape { batch, c_in, len, c_out, kernel, stride })
}

/// Real offsets of the pooled components.
fn component_indices(indices: &PoolIndices) -> Vec<usize> {
    match indices {
        PoolIndices::Whole(idx) => idx.iter().flat_map(|&i| (0..4).map(move |c| 4 * i + c)).collect(),
        PoolIndices::Component(idx) => idx.iter().flat_map(|at| (0..4).map(move |c| 4 * at[c] + c)).collect(),
    }
}

/// Run the tape backwards from `seed` (component layout, shaped like the
/// model output). Messages are reported in component layout.
pub fn ad_backward(model: &Model, trace: &AdTrace, seed: &Signal) -> Result<Backward> {
    let last = trace.boundaries.len() - 1;
    if seed.shape() != trace.signals[last].0.as_slice() {
        return shape_err(format!("seed {:?} does not match output {:?}", seed.shape(), trace.signals[last].0));
    }
    let adj = trace.tape.backward(trace.boundaries[last], &flat(seed))?;
    let mut grads = Vec::with_capacity(model.layers.len());
    for (layer, p) in model.layers.iter().zip(&trace.params) {
        grads.push(match (layer, p) {
            (_, None) => None,
            (Layer::QLinear(l), Some((w, b))) => Some(LayerGrads::Quat {
                weight: quats(&adj[*w], l.weight.shape().to_vec())?,
                bias: quats(&adj[*b], l.bias.shape().to_vec())?,
            }),
            (Layer::QConv1d(c), Some((w, b))) => Some(LayerGrads::Quat {
                weight: quats(&adj[*w], c.weight.shape().to_vec())?,
                bias: quats(&adj[*b], c.bias.shape().to_vec())?,
            }),
            (Layer::Linear(l), Some((w, b)))
            | (Layer::Head(crate::layers::RealHead { linear: l }), Some((w, b))) => Some(LayerGrads::Real {
                weight: RTensor::new(l.weight.shape().to_vec(), adj[*w].clone())?,
                bias: RTensor::new(l.bias.shape().to_vec(), adj[*b].clone())?,
            }),
            (Layer::Conv1d(c), Some((w, b))) => Some(LayerGrads::Real {
                weight: RTensor::new(c.weight.shape().to_vec(), adj[*w].clone())?,
                bias: RTensor::new(c.bias.shape().to_vec(), adj[*b].clone())?,
            }),
            (layer, Some(_)) => return shape_err(format!("parameters recorded for a {} layer", layer.name())),
        });
    }
    let messages = (0..model.layers.len())
        .map(|l| {
            let (shape, quat) = &trace.signals[l];
            unflat(&adj[trace.boundaries[l]], shape, *quat)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Backward { grads: Gradients { layers: grads }, messages })
}

/// Component-layout gradients of one convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvVjp {
    pub input: QTensor,
    pub weight: QTensor,
    pub bias: QTensor,
}

/// Chain rule through a single convolution of either product order, given
/// the output cotangent in component layout.
pub fn qconv_vjp(conv: &QConv1d, input: &QTensor, cotangent: &QTensor) -> Result<ConvVjp> {
    let shape = input.shape().to_vec();
    let cs = conv_shape(&shape, true, true, conv.in_channels(), conv.out_channels(), conv.kernel(), conv.stride)?;
    if cotangent.shape() != [cs.batch, cs.c_out, cs.l_out()] {
        return shape_err(format!("conv cotangent {:?} does not match output", cotangent.shape()));
    }
    let mut tape = AdTape::new();
    let x = tape.leaf(flat(&Signal::Quat(input.clone())));
    let w = tape.leaf(flat(&Signal::Quat(conv.weight.clone())));
    let b = tape.leaf(flat(&Signal::Quat(conv.bias.clone())));
    let y = tape.q_conv(w, x, b, cs, conv.order)?;
    let adj = tape.backward(y, &flat(&Signal::Quat(cotangent.clone())))?;
    Ok(ConvVjp {
        input: quats(&adj[x], shape)?,
        weight: quats(&adj[w], conv.weight.shape().to_vec())?,
        bias: quats(&adj[b], conv.bias.shape().to_vec())?,
    })
}

/// The gradient provider for input-left convolutions.
pub fn ad_backward_input_left_conv(conv: &QConv1d, input: &QTensor, cotangent: &QTensor) -> Result<ConvVjp> {
    if conv.order != ProductOrder::InputLeft {
        return Err(crate::Error::InvalidArgument(
            "ad_backward_input_left_conv called on a weight-left convolution".into(),
        ));
    }
    qconv_vjp(conv, input, cotangent)
}
