use rand::{Rng, RngCore};

use crate::error::{shape_err, Result};
use crate::layers::init_bound;
use crate::{QTensor, Quaternion, RTensor};

/// Quaternion fully connected layer `z = W a + b` with the weight on the
/// left of every Hamilton product.
#[derive(Debug, Clone, PartialEq)]
pub struct QLinear {
    /// `[out, in]`
    pub weight: QTensor,
    /// `[out]`
    pub bias: QTensor,
}

impl QLinear {
    pub fn new(weight: QTensor, bias: QTensor) -> Result<Self> {
        let [m, _] = weight.dims::<2>()?;
        if bias.shape() != [m] {
            return shape_err(format!("bias {:?} does not match {m} outputs", bias.shape()));
        }
        Ok(Self { weight, bias })
    }

    /// Uniform init in `±1/√(4·in)`, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut dyn RngCore) -> Self {
        let bound = init_bound(4 * inputs);
        let weight = QTensor::from_fn(vec![outputs, inputs], |_| random_quat(rng, bound));
        Self {
            weight,
            bias: QTensor::zeros(vec![outputs]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Forward for `[batch, in]` or a single `[in]` vector.
    pub fn forward(&self, a: &QTensor) -> Result<QTensor> {
        let (m, n) = (self.out_features(), self.in_features());
        let (batch, squeeze) = match a.shape() {
            [len] if *len == n => (1, true),
            [b, len] if *len == n => (*b, false),
            other => return shape_err(format!("QLinear expects [_, {n}], got {other:?}")),
        };
        let w = self.weight.data();
        let mut out = Vec::with_capacity(batch * m);
        for row in a.data().chunks_exact(n) {
            for i in 0..m {
                let wi = &w[i * n..(i + 1) * n];
                let mut acc = self.bias.data()[i];
                for (wij, aj) in wi.iter().zip(row) {
                    acc += *wij * *aj;
                }
                out.push(acc);
            }
        }
        let shape = if squeeze { vec![m] } else { vec![batch, m] };
        QTensor::new(shape, out)
    }
}

pub(crate) fn random_quat(rng: &mut dyn RngCore, bound: f64) -> Quaternion {
    Quaternion::new(
        rng.gen_range(-bound..=bound),
        rng.gen_range(-bound..=bound),
        rng.gen_range(-bound..=bound),
        rng.gen_range(-bound..=bound),
    )
}

/// Real fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RealLinear {
    /// `[out, in]`
    pub weight: RTensor,
    /// `[out]`
    pub bias: RTensor,
}

impl RealLinear {
    pub fn new(weight: RTensor, bias: RTensor) -> Result<Self> {
        let [m, _] = weight.dims::<2>()?;
        if bias.shape() != [m] {
            return shape_err(format!("bias {:?} does not match {m} outputs", bias.shape()));
        }
        Ok(Self { weight, bias })
    }

    pub fn init(inputs: usize, outputs: usize, rng: &mut dyn RngCore) -> Self {
        let bound = init_bound(inputs);
        Self {
            weight: RTensor::from_fn(vec![outputs, inputs], |_| rng.gen_range(-bound..=bound)),
            bias: RTensor::zeros(vec![outputs]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    /// Forward for `[batch, in]`.
    pub fn forward(&self, x: &RTensor) -> Result<RTensor> {
        let (m, n) = (self.out_features(), self.in_features());
        let [batch, len] = x.dims::<2>()?;
        if len != n {
            return shape_err(format!("Linear expects [_, {n}], got {:?}", x.shape()));
        }
        let w = self.weight.data();
        let mut out = Vec::with_capacity(batch * m);
        for row in x.data().chunks_exact(n) {
            for i in 0..m {
                let dot: f64 = w[i * n..(i + 1) * n].iter().zip(row).map(|(a, b)| a * b).sum();
                out.push(dot + self.bias.data()[i]);
            }
        }
        RTensor::new(vec![batch, m], out)
    }
}

/// Real affine map from quaternion features to class logits. Each feature
/// is unpacked into four reals in `(q0, q1, q2, q3)` order first.
#[derive(Debug, Clone, PartialEq)]
pub struct RealHead {
    pub linear: RealLinear,
}

impl RealHead {
    pub fn init(features: usize, classes: usize, rng: &mut dyn RngCore) -> Self {
        Self {
            linear: RealLinear::init(4 * features, classes, rng),
        }
    }

    pub fn features(&self) -> usize {
        self.linear.in_features() / 4
    }

    pub fn forward(&self, x: &QTensor) -> Result<RTensor> {
        self.linear.forward(&unpack(x)?)
    }
}

/// `[batch, f]` quaternions to `[batch, 4f]` reals.
pub fn unpack(x: &QTensor) -> Result<RTensor> {
    let [batch, f] = x.dims::<2>()?;
    let data = x.data().iter().flat_map(|q| q.to_array()).collect();
    RTensor::new(vec![batch, 4 * f], data)
}
