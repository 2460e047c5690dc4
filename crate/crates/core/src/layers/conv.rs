use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::layers::init_bound;
use crate::layers::linear::random_quat;
use crate::{QTensor, RTensor};

/// Operand order of the Hamilton products inside a quaternion convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductOrder {
    /// `w ⊗ x`, the order of the linear layer; the hand-derived gradients
    /// apply to it directly.
    #[default]
    WeightLeft,
    /// `x ⊗ w`; gradients come from the component-level chain rule.
    InputLeft,
}

/// Output length of a valid (unpadded) window scan.
pub fn output_len(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel ({kernel}) and stride ({stride}) must be positive"
        )));
    }
    if len < kernel {
        return shape_err(format!("input length {len} is shorter than kernel {kernel}"));
    }
    Ok((len - kernel) / stride + 1)
}

/// 1D quaternion convolution without padding or dilation.
#[derive(Debug, Clone, PartialEq)]
pub struct QConv1d {
    /// `[C_out, C_in, K]`
    pub weight: QTensor,
    /// `[C_out]`
    pub bias: QTensor,
    pub stride: usize,
    pub order: ProductOrder,
}

impl QConv1d {
    pub fn new(weight: QTensor, bias: QTensor, stride: usize, order: ProductOrder) -> Result<Self> {
        let [c_out, _, k] = weight.dims::<3>()?;
        if k == 0 || stride == 0 {
            return Err(Error::InvalidArgument("kernel and stride must be positive".into()));
        }
        if bias.shape() != [c_out] {
            return shape_err(format!("bias {:?} does not match {c_out} channels", bias.shape()));
        }
        Ok(Self { weight, bias, stride, order })
    }

    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        order: ProductOrder,
        rng: &mut dyn RngCore,
    ) -> Self {
        let bound = init_bound(4 * in_channels * kernel);
        Self {
            weight: QTensor::from_fn(vec![out_channels, in_channels, kernel], |_| random_quat(rng, bound)),
            bias: QTensor::zeros(vec![out_channels]),
            stride,
            order,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// `y[b, j, i] = b_j + Σ_c Σ_k w[j, c, k] ⊗ x[b, c, i·stride + k]`
    /// (operands swapped for [`ProductOrder::InputLeft`]).
    pub fn forward(&self, x: &QTensor) -> Result<QTensor> {
        let [batch, c_in, len] = x.dims::<3>()?;
        if c_in != self.in_channels() {
            return shape_err(format!("conv expects {} input channels, got {c_in}", self.in_channels()));
        }
        let (c_out, k_len, s) = (self.out_channels(), self.kernel(), self.stride);
        let l_out = output_len(len, k_len, s)?;
        let w = self.weight.data();
        let xd = x.data();
        let mut out = Vec::with_capacity(batch * c_out * l_out);
        for b in 0..batch {
            let xb = &xd[b * c_in * len..(b + 1) * c_in * len];
            for j in 0..c_out {
                for i in 0..l_out {
                    let mut acc = self.bias.data()[j];
                    for c in 0..c_in {
                        let wr = &w[(j * c_in + c) * k_len..(j * c_in + c + 1) * k_len];
                        let xr = &xb[c * len + i * s..c * len + i * s + k_len];
                        match self.order {
                            ProductOrder::WeightLeft => {
                                for (wk, xk) in wr.iter().zip(xr) {
                                    acc += *wk * *xk;
                                }
                            }
                            ProductOrder::InputLeft => {
                                for (wk, xk) in wr.iter().zip(xr) {
                                    acc += *xk * *wk;
                                }
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
        QTensor::new(vec![batch, c_out, l_out], out)
    }
}

/// Real 1D convolution without padding or dilation.
#[derive(Debug, Clone, PartialEq)]
pub struct RealConv1d {
    /// `[C_out, C_in, K]`
    pub weight: RTensor,
    /// `[C_out]`
    pub bias: RTensor,
    pub stride: usize,
}

impl RealConv1d {
    pub fn new(weight: RTensor, bias: RTensor, stride: usize) -> Result<Self> {
        let [c_out, _, k] = weight.dims::<3>()?;
        if k == 0 || stride == 0 {
            return Err(Error::InvalidArgument("kernel and stride must be positive".into()));
        }
        if bias.shape() != [c_out] {
            return shape_err(format!("bias {:?} does not match {c_out} channels", bias.shape()));
        }
        Ok(Self { weight, bias, stride })
    }

    pub fn init(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut dyn RngCore) -> Self {
        let bound = init_bound(in_channels * kernel);
        Self {
            weight: RTensor::from_fn(vec![out_channels, in_channels, kernel], |_| rng.gen_range(-bound..=bound)),
            bias: RTensor::zeros(vec![out_channels]),
            stride,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn forward(&self, x: &RTensor) -> Result<RTensor> {
        let [batch, c_in, len] = x.dims::<3>()?;
        if c_in != self.in_channels() {
            return shape_err(format!("conv expects {} input channels, got {c_in}", self.in_channels()));
        }
        let (c_out, k_len, s) = (self.out_channels(), self.kernel(), self.stride);
        let l_out = output_len(len, k_len, s)?;
        let w = self.weight.data();
        let xd = x.data();
        let mut out = Vec::with_capacity(batch * c_out * l_out);
        for b in 0..batch {
            let xb = &xd[b * c_in * len..(b + 1) * c_in * len];
            for j in 0..c_out {
                for i in 0..l_out {
                    let mut acc = self.bias.data()[j];
                    for c in 0..c_in {
                        let wr = &w[(j * c_in + c) * k_len..(j * c_in + c + 1) * k_len];
                        let xr = &xb[c * len + i * s..c * len + i * s + k_len];
                        acc += wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                    }
                    out.push(acc);
                }
            }
        }
        RTensor::new(vec![batch, c_out, l_out], out)
    }
}
