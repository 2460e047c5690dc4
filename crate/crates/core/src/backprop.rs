//! Hand-derived quaternion backpropagation.
//!
//! The backward pass carries the message `p = ∂L/∂a` (the regular, not the
//! conjugate, GHR derivative at `μ = 1`) from layer to layer. Parameter
//! gradients are the conjugate derivatives `∂L/∂w*` and `∂L/∂b*`, the
//! directions of steepest descent used by the update rules:
//!
//! * output layer, `L = Σ e* e` with `e = d − y`:
//!   `∂L/∂w* = −½ e a*`, `∂L/∂b* = −½ e`, `∂L/∂a_j = Σ_i −½ e_i* w_ij`
//! * hidden layer with `q = p ∘ σ′(z)`:
//!   `∂L/∂w* = q* a*`, `∂L/∂b* = q*`, `p_j = Σ_i q_i w_ij`
//!
//! The output layer is the hidden layer case with `σ = id` and `p = −½ e*`.
//! Real layers (the classification head and the real comparison models)
//! use ordinary real backpropagation; the head converts its real input
//! cotangent `s` into `p = ¼ s*`.

use crate::autodiff;
use crate::error::{shape_err, Error, Result};
use crate::layers::{Activation, Layer, Model, PoolIndices, ProductOrder, QConv1d, RealConv1d, RealLinear, Signal};
use crate::{QTensor, Quaternion, RTensor};

/// What a traced forward pass remembers about one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerRecord {
    /// `None` when the layer acted as the identity.
    Dropout { mask: Option<Vec<f64>> },
    QConv1d { input: QTensor },
    Conv1d { input: RTensor },
    /// Pre-activation `z`.
    Activation { pre: Signal },
    Pool { input_shape: Vec<usize>, indices: PoolIndices },
    Flatten { input_shape: Vec<usize> },
    QLinear { input: QTensor },
    Linear { input: RTensor },
    Head { input: QTensor },
}

/// Per-layer records of one forward pass plus its output.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTape {
    pub records: Vec<LayerRecord>,
    pub output: Signal,
}

impl GradTape {
    /// Dropout masks by layer position, for replaying the same pass.
    pub fn dropout_masks(&self) -> Vec<Option<Vec<f64>>> {
        self.records
            .iter()
            .map(|r| match r {
                LayerRecord::Dropout { mask } => mask.clone(),
                _ => None,
            })
            .collect()
    }
}

/// `L = Σ_i e_i* e_i` with `e = d − y`.
pub fn loss_mse_quat(y: &QTensor, d: &QTensor) -> Result<f64> {
    y.check_same_shape(d)?;
    Ok(y.data()
        .iter()
        .zip(d.data())
        .map(|(y, d)| {
            let e = *d - *y;
            (e.conjugate() * e).q0
        })
        .sum())
}

/// `e = d − y`.
pub fn output_error(y: &QTensor, d: &QTensor) -> Result<QTensor> {
    d.zip_map(y, |d, y| *d - *y)
}

/// Output-layer weight gradient `∂L/∂w* = −½ e a*`.
pub fn grad_final_weights(e: Quaternion, a: Quaternion) -> Quaternion {
    (e * a.conjugate()).scale(-0.5)
}

/// Output-layer bias gradient `∂L/∂b* = −½ e`.
pub fn grad_final_bias(e: Quaternion) -> Quaternion {
    e.scale(-0.5)
}

/// Output-layer message `p_j = Σ_i −½ e_i* w_ij`.
pub fn grad_final_activations(e: &[Quaternion], w: &QTensor) -> Result<Vec<Quaternion>> {
    let q: Vec<Quaternion> = e.iter().map(|e| e.conjugate().scale(-0.5)).collect();
    grad_hidden_activations(&q, w)
}

/// `q = p ∘ σ′(z)`.
pub fn grad_activation_input(p: Quaternion, z: Quaternion, act: Activation) -> Quaternion {
    p.hadamard(z.map(|c| act.derivative(c)))
}

/// Hidden-layer weight gradient `∂L/∂w* = q* a*`.
pub fn grad_hidden_weights(q: Quaternion, a: Quaternion) -> Quaternion {
    q.conjugate() * a.conjugate()
}

/// Hidden-layer bias gradient `∂L/∂b* = q*`.
pub fn grad_hidden_bias(q: Quaternion) -> Quaternion {
    q.conjugate()
}

/// Message to the previous layer `p_j = Σ_i q_i w_ij`.
pub fn grad_hidden_activations(q: &[Quaternion], w: &QTensor) -> Result<Vec<Quaternion>> {
    let [m, n] = w.dims::<2>()?;
    if q.len() != m {
        return shape_err(format!("{} messages for a {m}x{n} weight matrix", q.len()));
    }
    let wd = w.data();
    let mut p = vec![Quaternion::zero(); n];
    for (i, qi) in q.iter().enumerate() {
        for (pj, wij) in p.iter_mut().zip(&wd[i * n..(i + 1) * n]) {
            *pj += *qi * *wij;
        }
    }
    Ok(p)
}

/// `p = ∂L/∂y = −½ e*` for the quaternion MSE loss.
pub fn mse_message(y: &QTensor, d: &QTensor) -> Result<QTensor> {
    Ok(output_error(y, d)?.map(|e| e.conjugate().scale(-0.5)))
}

/// Convert a real cotangent over unpacked `(q0, q1, q2, q3)` quadruples into
/// the quaternion message `p = ¼ (s0 + s1 i + s2 j + s3 k)*`.
pub fn boundary_message(s: &[f64]) -> Vec<Quaternion> {
    s.chunks_exact(4)
        .map(|c| Quaternion::new(c[0], c[1], c[2], c[3]).conjugate().scale(0.25))
        .collect()
}

/// Gradients of one parameterized layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrads {
    Quat { weight: QTensor, bias: QTensor },
    Real { weight: RTensor, bias: RTensor },
}

impl LayerGrads {
    pub fn is_finite(&self) -> bool {
        match self {
            LayerGrads::Quat { weight, bias } => {
                weight.data().iter().chain(bias.data()).all(|q| q.is_finite())
            }
            LayerGrads::Real { weight, bias } => {
                weight.data().iter().chain(bias.data()).all(|v| v.is_finite())
            }
        }
    }
}

/// Parameter gradients aligned with `Model::layers`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    pub layers: Vec<Option<LayerGrads>>,
}

impl Gradients {
    /// Elementwise sum, used to reduce per-sample gradients.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.is_empty() {
            *self = other.clone();
            return Ok(());
        }
        if self.layers.len() != other.layers.len() {
            return shape_err("gradient sets of different depth");
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            match (a, b) {
                (None, None) => {}
                (Some(LayerGrads::Quat { weight, bias }), Some(LayerGrads::Quat { weight: w2, bias: b2 })) => {
                    add_into(weight.data_mut(), w2.data());
                    add_into(bias.data_mut(), b2.data());
                }
                (Some(LayerGrads::Real { weight, bias }), Some(LayerGrads::Real { weight: w2, bias: b2 })) => {
                    add_into(weight.data_mut(), w2.data());
                    add_into(bias.data_mut(), b2.data());
                }
                _ => return shape_err("gradient sets with different layer kinds"),
            }
        }
        Ok(())
    }
}

fn add_into<T: Copy + std::ops::AddAssign>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Backward {
    pub grads: Gradients,
    /// `messages[l]` is the derivative with respect to the input of layer
    /// `l`: the GHR message `p` for quaternion signals, the plain cotangent
    /// for real ones.
    pub messages: Vec<Signal>,
}

/// Deliberate defects for exercising the gradient checker.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate the hidden-layer weight gradient.
    HiddenWeightSign,
}

/// Run the GHR backward pass from `upstream`, the message at the model
/// output (`p` for a quaternion output, the logit cotangent for a real one).
pub fn backward(model: &Model, tape: &GradTape, upstream: Signal) -> Result<Backward> {
    backward_with_fault(model, tape, upstream, None)
}

#[doc(hidden)]
pub fn backward_with_fault(
    model: &Model,
    tape: &GradTape,
    upstream: Signal,
    fault: Option<Fault>,
) -> Result<Backward> {
    if tape.records.len() != model.layers.len() {
        return Err(Error::MissingTape(format!(
            "{} records for {} layers",
            tape.records.len(),
            model.layers.len()
        )));
    }
    if upstream.shape() != tape.output.shape() {
        return shape_err(format!(
            "upstream message {:?} does not match output {:?}",
            upstream.shape(),
            tape.output.shape()
        ));
    }
    let mut grads = vec![None; model.layers.len()];
    let mut messages = vec![upstream.clone(); model.layers.len()];
    let mut msg = upstream;
    for (index, (layer, record)) in model.layers.iter().zip(&tape.records).enumerate().rev() {
        let (next, g) = backward_layer(layer, record, msg, fault)
            .map_err(|e| match e {
                Error::MissingTape(m) => Error::MissingTape(format!("layer {index} ({}): {m}", layer.name())),
                other => other,
            })?;
        grads[index] = g;
        messages[index] = next.clone();
        msg = next;
    }
    Ok(Backward {
        grads: Gradients { layers: grads },
        messages,
    })
}

fn mismatch(layer: &Layer) -> Error {
    Error::MissingTape(format!("tape record does not belong to a {} layer", layer.name()))
}

fn backward_layer(
    layer: &Layer,
    record: &LayerRecord,
    msg: Signal,
    fault: Option<Fault>,
) -> Result<(Signal, Option<LayerGrads>)> {
    Ok(match (layer, record) {
        (Layer::Dropout(_), LayerRecord::Dropout { mask }) => match mask {
            None => (msg, None),
            Some(mask) => {
                let out = match msg {
                    Signal::Quat(p) => Signal::Quat(crate::layers::dropout::apply_quat_mask(&p, mask)),
                    Signal::Real(g) => Signal::Real(crate::layers::dropout::apply_real_mask(&g, mask)),
                };
                (out, None)
            }
        },
        (Layer::Activation(act), LayerRecord::Activation { pre }) => {
            let out = match (msg, pre) {
                (Signal::Quat(p), Signal::Quat(z)) => {
                    Signal::Quat(p.zip_map(z, |p, z| grad_activation_input(*p, *z, *act))?)
                }
                (Signal::Real(g), Signal::Real(z)) => Signal::Real(g.zip_map(z, |g, z| g * act.derivative(*z))?),
                _ => return shape_err("activation message and pre-activation differ in kind"),
            };
            (out, None)
        }
        (Layer::QLinear(lin), LayerRecord::QLinear { input }) => {
            let q = msg.into_quat()?;
            let (dw, db, p) = backward_qlinear(lin.weight.clone(), input, &q, fault)?;
            (Signal::Quat(p), Some(LayerGrads::Quat { weight: dw, bias: db }))
        }
        (Layer::QConv1d(conv), LayerRecord::QConv1d { input }) => {
            let q = msg.into_quat()?;
            let (dw, db, p) = match backward_conv(conv, input, &q, fault) {
                Err(Error::Unsupported(_)) => backward_conv_routed(conv, input, &q)?,
                other => other?,
            };
            (Signal::Quat(p), Some(LayerGrads::Quat { weight: dw, bias: db }))
        }
        (Layer::Pool(_), LayerRecord::Pool { input_shape, indices }) => (route_pool(msg, input_shape, indices)?, None),
        (Layer::Flatten, LayerRecord::Flatten { input_shape }) => {
            let out = match msg {
                Signal::Quat(p) => Signal::Quat(p.reshape(input_shape.clone())?),
                Signal::Real(g) => Signal::Real(g.reshape(input_shape.clone())?),
            };
            (out, None)
        }
        (Layer::Head(head), LayerRecord::Head { input }) => {
            let g = msg.into_real()?;
            let x = crate::layers::unpack(input)?;
            let (dw, db, s) = backward_real_linear(&head.linear, &x, &g)?;
            let p = QTensor::new(input.shape().to_vec(), boundary_message(s.data()))?;
            (Signal::Quat(p), Some(LayerGrads::Real { weight: dw, bias: db }))
        }
        (Layer::Linear(lin), LayerRecord::Linear { input }) => {
            let g = msg.into_real()?;
            let (dw, db, s) = backward_real_linear(lin, input, &g)?;
            (Signal::Real(s), Some(LayerGrads::Real { weight: dw, bias: db }))
        }
        (Layer::Conv1d(conv), LayerRecord::Conv1d { input }) => {
            let g = msg.into_real()?;
            let (dw, db, s) = backward_real_conv(conv, input, &g)?;
            (Signal::Real(s), Some(LayerGrads::Real { weight: dw, bias: db }))
        }
        (layer, _) => return Err(mismatch(layer)),
    })
}

/// Quaternion linear layer backward for a batch `a: [B, n]`, `q: [B, m]`.
fn backward_qlinear(
    weight: QTensor,
    a: &QTensor,
    q: &QTensor,
    fault: Option<Fault>,
) -> Result<(QTensor, QTensor, QTensor)> {
    let [m, n] = weight.dims::<2>()?;
    let [batch, n_in] = a.dims::<2>()?;
    if n_in != n || q.shape() != [batch, m] {
        return shape_err(format!("linear backward: input {:?}, message {:?}", a.shape(), q.shape()));
    }
    let mut dw = QTensor::zeros(vec![m, n]);
    let mut db = QTensor::zeros(vec![m]);
    let mut p = Vec::with_capacity(batch * n);
    for b in 0..batch {
        let qb = &q.data()[b * m..(b + 1) * m];
        let ab = &a.data()[b * n..(b + 1) * n];
        for (i, &qi) in qb.iter().enumerate() {
            let dwi = &mut dw.data_mut()[i * n..(i + 1) * n];
            for (g, &aj) in dwi.iter_mut().zip(ab) {
                *g += hidden_weight_grad(qi, aj, fault);
            }
            db.data_mut()[i] += grad_hidden_bias(qi);
        }
        p.extend(grad_hidden_activations(qb, &weight)?);
    }
    Ok((dw, db, QTensor::new(vec![batch, n], p)?))
}

fn hidden_weight_grad(q: Quaternion, a: Quaternion, fault: Option<Fault>) -> Quaternion {
    let g = grad_hidden_weights(q, a);
    match fault {
        Some(Fault::HiddenWeightSign) => -g,
        None => g,
    }
}

/// Weight-left quaternion convolution backward: the hidden-layer formulas
/// summed over every position sharing a weight.
///
/// `dW[j,c,k] = Σ_{b,i} q[b,j,i]* x[b,c,i·s+k]*`, `db[j] = Σ_{b,i} q[b,j,i]*`
/// and `p[b,c,i·s+k] += q[b,j,i] w[j,c,k]`. Input-left convolutions return
/// [`Error::Unsupported`].
pub fn backward_conv(
    conv: &QConv1d,
    input: &QTensor,
    q: &QTensor,
    fault: Option<Fault>,
) -> Result<(QTensor, QTensor, QTensor)> {
    if conv.order == ProductOrder::InputLeft {
        return Err(Error::Unsupported(
            "input-left convolution has no hand-derived gradient; use the autodiff engine".into(),
        ));
    }
    let [batch, c_in, len] = input.dims::<3>()?;
    let (c_out, k_len, s) = (conv.out_channels(), conv.kernel(), conv.stride);
    let l_out = crate::layers::conv::output_len(len, k_len, s)?;
    if q.shape() != [batch, c_out, l_out] {
        return shape_err(format!("conv backward: message {:?}, expected {:?}", q.shape(), [batch, c_out, l_out]));
    }
    let w = conv.weight.data();
    let mut dw = QTensor::zeros(conv.weight.shape().to_vec());
    let mut db = QTensor::zeros(vec![c_out]);
    let mut p = QTensor::zeros(vec![batch, c_in, len]);
    for b in 0..batch {
        for j in 0..c_out {
            for i in 0..l_out {
                let qv = *q.get(&[b, j, i]);
                db.data_mut()[j] += grad_hidden_bias(qv);
                for c in 0..c_in {
                    for k in 0..k_len {
                        let pos = i * s + k;
                        let x = *input.get(&[b, c, pos]);
                        let widx = (j * c_in + c) * k_len + k;
                        dw.data_mut()[widx] += hidden_weight_grad(qv, x, fault);
                        *p.get_mut(&[b, c, pos]) += qv * w[widx];
                    }
                }
            }
        }
    }
    Ok((dw, db, p))
}

/// Input-left convolution inside the GHR engine: the layer's component-level
/// chain rule is run on `s = 4 q*` and the results mapped back
/// (`p = ¼ s_in*`, parameter gradients `¼` of the component gradients).
fn backward_conv_routed(conv: &QConv1d, input: &QTensor, q: &QTensor) -> Result<(QTensor, QTensor, QTensor)> {
    let cot = q.map(|v| v.conjugate().scale(4.0));
    let vjp = autodiff::ad_backward_input_left_conv(conv, input, &cot)?;
    Ok((
        vjp.weight.map(|g| g.scale(0.25)),
        vjp.bias.map(|g| g.scale(0.25)),
        vjp.input.map(|s| s.conjugate().scale(0.25)),
    ))
}

fn route_pool(msg: Signal, input_shape: &[usize], indices: &PoolIndices) -> Result<Signal> {
    Ok(match (msg, indices) {
        (Signal::Quat(p), PoolIndices::Whole(idx)) => {
            let mut out = QTensor::zeros(input_shape.to_vec());
            for (v, &at) in p.data().iter().zip(idx) {
                out.data_mut()[at] += *v;
            }
            Signal::Quat(out)
        }
        (Signal::Quat(p), PoolIndices::Component(idx)) => {
            let mut out = QTensor::zeros(input_shape.to_vec());
            for (v, at) in p.data().iter().zip(idx) {
                let comps = v.to_array();
                for c in 0..4 {
                    let mut slot = out.data()[at[c]].to_array();
                    slot[c] += comps[c];
                    out.data_mut()[at[c]] = Quaternion::from_array(slot);
                }
            }
            Signal::Quat(out)
        }
        (Signal::Real(g), PoolIndices::Whole(idx)) => {
            let mut out = RTensor::zeros(input_shape.to_vec());
            for (v, &at) in g.data().iter().zip(idx) {
                out.data_mut()[at] += *v;
            }
            Signal::Real(out)
        }
        (Signal::Real(_), PoolIndices::Component(_)) => {
            return shape_err("component pooling indices on a real signal")
        }
    })
}

/// Real affine backward for `x: [B, n]`, `g: [B, m]`: `(dW, db, dx)`.
pub fn backward_real_linear(lin: &RealLinear, x: &RTensor, g: &RTensor) -> Result<(RTensor, RTensor, RTensor)> {
    let (m, n) = (lin.out_features(), lin.in_features());
    let [batch, n_in] = x.dims::<2>()?;
    if n_in != n || g.shape() != [batch, m] {
        return shape_err(format!("linear backward: input {:?}, cotangent {:?}", x.shape(), g.shape()));
    }
    let w = lin.weight.data();
    let mut dw = RTensor::zeros(vec![m, n]);
    let mut db = RTensor::zeros(vec![m]);
    let mut dx = RTensor::zeros(vec![batch, n]);
    for b in 0..batch {
        let xb = &x.data()[b * n..(b + 1) * n];
        for i in 0..m {
            let gi = g.data()[b * m + i];
            if gi == 0.0 {
                continue;
            }
            db.data_mut()[i] += gi;
            let dwi = &mut dw.data_mut()[i * n..(i + 1) * n];
            for (d, xv) in dwi.iter_mut().zip(xb) {
                *d += gi * xv;
            }
            let dxb = &mut dx.data_mut()[b * n..(b + 1) * n];
            for (d, wv) in dxb.iter_mut().zip(&w[i * n..(i + 1) * n]) {
                *d += gi * wv;
            }
        }
    }
    Ok((dw, db, dx))
}

/// Real convolution backward: `(dW, db, dx)`.
pub fn backward_real_conv(conv: &RealConv1d, x: &RTensor, g: &RTensor) -> Result<(RTensor, RTensor, RTensor)> {
    let [batch, c_in, len] = x.dims::<3>()?;
    let (c_out, k_len, s) = (conv.out_channels(), conv.kernel(), conv.stride);
    let l_out = crate::layers::conv::output_len(len, k_len, s)?;
    if g.shape() != [batch, c_out, l_out] {
        return shape_err(format!("conv backward: cotangent {:?}", g.shape()));
    }
    let w = conv.weight.data();
    let mut dw = RTensor::zeros(conv.weight.shape().to_vec());
    let mut db = RTensor::zeros(vec![c_out]);
    let mut dx = RTensor::zeros(vec![batch, c_in, len]);
    for b in 0..batch {
        for j in 0..c_out {
            for i in 0..l_out {
                let gv = *g.get(&[b, j, i]);
                db.data_mut()[j] += gv;
                for c in 0..c_in {
                    let xo = (b * c_in + c) * len + i * s;
                    let wo = (j * c_in + c) * k_len;
                    for k in 0..k_len {
                        dw.data_mut()[wo + k] += gv * x.data()[xo + k];
                        dx.data_mut()[xo + k] += gv * w[wo + k];
                    }
                }
            }
        }
    }
    Ok((dw, db, dx))
}

/// `w ← w − λ dW`, `b ← b − λ db` on every parameterized layer.
pub fn sgd_step(model: &mut Model, grads: &Gradients, lambda: f64) -> Result<()> {
    sgd_step_split(model, grads, lambda, lambda)
}

/// SGD with separate learning rates for quaternion-valued and real-valued
/// parameters.
pub fn sgd_step_split(model: &mut Model, grads: &Gradients, quat_lambda: f64, real_lambda: f64) -> Result<()> {
    if grads.layers.len() != model.layers.len() {
        return shape_err(format!(
            "{} gradient entries for {} layers",
            grads.layers.len(),
            model.layers.len()
        ));
    }
    for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
        match (layer, g) {
            (_, None) => {}
            (Layer::QLinear(l), Some(LayerGrads::Quat { weight, bias })) => {
                descend_quat(&mut l.weight, weight, quat_lambda)?;
                descend_quat(&mut l.bias, bias, quat_lambda)?;
            }
            (Layer::QConv1d(c), Some(LayerGrads::Quat { weight, bias })) => {
                descend_quat(&mut c.weight, weight, quat_lambda)?;
                descend_quat(&mut c.bias, bias, quat_lambda)?;
            }
            (Layer::Linear(l), Some(LayerGrads::Real { weight, bias }))
            | (Layer::Head(crate::layers::RealHead { linear: l }), Some(LayerGrads::Real { weight, bias })) => {
                descend_real(&mut l.weight, weight, real_lambda)?;
                descend_real(&mut l.bias, bias, real_lambda)?;
            }
            (Layer::Conv1d(c), Some(LayerGrads::Real { weight, bias })) => {
                descend_real(&mut c.weight, weight, real_lambda)?;
                descend_real(&mut c.bias, bias, real_lambda)?;
            }
            (layer, Some(_)) => {
                return shape_err(format!("gradient kind does not fit a {} layer", layer.name()))
            }
        }
    }
    Ok(())
}

fn descend_quat(param: &mut QTensor, grad: &QTensor, lambda: f64) -> Result<()> {
    param.check_same_shape(grad)?;
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= g.scale(lambda);
    }
    Ok(())
}

fn descend_real(param: &mut RTensor, grad: &RTensor, lambda: f64) -> Result<()> {
    param.check_same_shape(grad)?;
    for (p, g) in param.data_mut().iter_mut().zip(grad.data()) {
        *p -= lambda * g;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{DropoutMode, QLinear};

    fn q(a: f64, b: f64, c: f64, d: f64) -> Quaternion {
        Quaternion::new(a, b, c, d)
    }

    #[test]
    fn mse_examples() {
        let y = QTensor::new(vec![2], vec![q(1.0, 2.0, 3.0, 4.0), q(0.0, -1.0, 0.5, 2.0)]).unwrap();
        assert_eq!(loss_mse_quat(&y, &y).unwrap(), 0.0);
        let d = QTensor::new(vec![1], vec![q(1.0, 1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(loss_mse_quat(&QTensor::zeros(vec![1]), &d).unwrap(), 2.0);
        assert!(loss_mse_quat(&y, &d).is_err());
    }

    #[test]
    fn final_layer_examples() {
        assert_eq!(grad_final_weights(Quaternion::from_real(2.0), Quaternion::i()), Quaternion::i());
        assert!(grad_final_weights(Quaternion::zero(), q(1.0, 2.0, 3.0, 4.0)).is_zero());
        assert_eq!(grad_final_bias(Quaternion::zero()), Quaternion::zero());
        assert_eq!(grad_final_bias(q(1.0, 2.0, 3.0, 4.0)), q(-0.5, -1.0, -1.5, -2.0));
        let w = QTensor::new(vec![1, 1], vec![Quaternion::one()]).unwrap();
        assert_eq!(grad_final_activations(&[Quaternion::from_real(2.0)], &w).unwrap(), vec![Quaternion::from_real(-1.0)]);
        let w = QTensor::new(vec![2, 3], vec![q(1.0, 2.0, 0.0, 1.0); 6]).unwrap();
        let p = grad_final_activations(&[Quaternion::zero(); 2], &w).unwrap();
        assert!(p.iter().all(|v| v.is_zero()));
        assert!(grad_final_activations(&[Quaternion::zero(); 3], &w).is_err());
    }

    #[test]
    fn hidden_layer_examples() {
        let p = q(0.3, -0.2, 0.9, 1.4);
        assert_eq!(grad_activation_input(p, q(5.0, -1.0, 0.2, 3.0), Activation::Identity), p);
        assert_eq!(
            grad_activation_input(q(1.0, 1.0, 1.0, 1.0), q(1.0, -1.0, 2.0, -2.0), Activation::ReLU),
            q(1.0, 0.0, 1.0, 0.0)
        );
        assert!(grad_hidden_weights(Quaternion::zero(), q(1.0, 2.0, 3.0, 4.0)).is_zero());
        assert_eq!(grad_hidden_bias(Quaternion::from_real(3.0)), Quaternion::from_real(3.0));
        assert_eq!(grad_hidden_bias(q(1.0, 2.0, 0.0, 0.0)), q(1.0, -2.0, 0.0, 0.0));
        let w = QTensor::new(vec![1, 1], vec![Quaternion::one()]).unwrap();
        assert_eq!(grad_hidden_activations(&[p], &w).unwrap(), vec![p]);
        let w = QTensor::new(vec![1, 1], vec![Quaternion::j()]).unwrap();
        assert_eq!(grad_hidden_activations(&[Quaternion::i()], &w).unwrap(), vec![Quaternion::k()]);
    }

    #[test]
    fn hidden_formulas_reduce_to_output_layer() {
        let e = q(0.7, -1.1, 0.4, 2.0);
        let a = q(-0.3, 0.8, 1.2, -0.5);
        let qv = e.conjugate().scale(-0.5);
        let p = grad_activation_input(qv, q(0.1, 0.2, 0.3, 0.4), Activation::Identity);
        assert_eq!(grad_hidden_weights(p, a), grad_final_weights(e, a));
        assert_eq!(grad_hidden_bias(p), grad_final_bias(e));
    }

    #[test]
    fn boundary_conversion() {
        assert_eq!(boundary_message(&[4.0, 0.0, 0.0, 0.0]), vec![Quaternion::one()]);
        assert_eq!(boundary_message(&[0.0, 4.0, -8.0, 0.0]), vec![q(0.0, -1.0, 2.0, 0.0)]);
    }

    #[test]
    fn input_left_conv_is_not_hand_derived() {
        let conv = QConv1d::new(
            QTensor::new(vec![1, 1, 1], vec![Quaternion::one()]).unwrap(),
            QTensor::zeros(vec![1]),
            1,
            ProductOrder::InputLeft,
        )
        .unwrap();
        let x = QTensor::zeros(vec![1, 1, 3]);
        assert!(matches!(
            backward_conv(&conv, &x, &QTensor::zeros(vec![1, 1, 3]), None),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn zero_message_gives_zero_conv_grads() {
        let conv = QConv1d::new(
            QTensor::from_fn(vec![2, 2, 2], |i| Quaternion::from_real(i as f64 + 1.0)),
            QTensor::zeros(vec![2]),
            1,
            ProductOrder::WeightLeft,
        )
        .unwrap();
        let x = QTensor::from_fn(vec![1, 2, 4], |i| q(i as f64, 1.0, -1.0, 0.5));
        let (dw, db, p) = backward_conv(&conv, &x, &QTensor::zeros(vec![1, 2, 3]), None).unwrap();
        assert!(dw.data().iter().chain(db.data()).chain(p.data()).all(|v| v.is_zero()));
    }

    #[test]
    fn missing_tape_is_reported() {
        let model = Model::new(vec![Layer::QLinear(
            QLinear::new(QTensor::zeros(vec![1, 1]), QTensor::zeros(vec![1])).unwrap(),
        )]);
        let tape = GradTape {
            records: vec![],
            output: Signal::Quat(QTensor::zeros(vec![1, 1])),
        };
        assert!(matches!(
            backward(&model, &tape, Signal::Quat(QTensor::zeros(vec![1, 1]))),
            Err(Error::MissingTape(_))
        ));
    }

    #[test]
    fn sgd_examples() {
        let mut model = Model::new(vec![Layer::QLinear(
            QLinear::new(
                QTensor::new(vec![1, 1], vec![Quaternion::one()]).unwrap(),
                QTensor::zeros(vec![1]),
            )
            .unwrap(),
        )]);
        let before = model.clone();
        let zero = Gradients {
            layers: vec![Some(LayerGrads::Quat {
                weight: QTensor::zeros(vec![1, 1]),
                bias: QTensor::zeros(vec![1]),
            })],
        };
        sgd_step(&mut model, &zero, 0.1).unwrap();
        assert_eq!(model, before);
        let unit = Gradients {
            layers: vec![Some(LayerGrads::Quat {
                weight: QTensor::new(vec![1, 1], vec![Quaternion::one()]).unwrap(),
                bias: QTensor::zeros(vec![1]),
            })],
        };
        sgd_step(&mut model, &unit, 0.1).unwrap();
        let Layer::QLinear(l) = &model.layers[0] else { unreachable!() };
        assert!(l.weight.data()[0].max_abs_diff(Quaternion::from_real(0.9)) < 1e-15);
    }

    #[test]
    fn single_unit_regression_descends() {
        let target = q(0.5, -0.3, 0.8, 0.1);
        let a = QTensor::new(vec![1, 1], vec![q(0.9, 0.2, -0.4, 0.3)]).unwrap();
        let d = QTensor::new(vec![1, 1], vec![target]).unwrap();
        let mut model = Model::new(vec![Layer::QLinear(
            QLinear::new(QTensor::new(vec![1, 1], vec![q(-0.2, 0.1, 0.7, -0.6)]).unwrap(), QTensor::zeros(vec![1]))
                .unwrap(),
        )]);
        let a_sig = Signal::Quat(a);
        let mut last = f64::INFINITY;
        for _ in 0..20 {
            let tape = model.forward_traced(&a_sig, DropoutMode::Inference).unwrap();
            let y = tape.output.as_quat().unwrap().clone();
            let loss = loss_mse_quat(&y, &d).unwrap();
            assert!(loss < last);
            last = loss;
            let back = backward(&model, &tape, Signal::Quat(mse_message(&y, &d).unwrap())).unwrap();
            sgd_step(&mut model, &back.grads, 0.1).unwrap();
        }
    }
}
