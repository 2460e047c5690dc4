use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::conv::output_len;
use crate::{QTensor, RTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    /// Per-component maxima, possibly mixing window positions.
    Component,
    /// The whole window element with the largest norm.
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolSpec {
    pub mode: PoolMode,
    pub kernel: usize,
    pub stride: usize,
}

impl PoolSpec {
    pub fn new(mode: PoolMode, kernel: usize, stride: usize) -> Result<Self> {
        if kernel == 0 || stride == 0 {
            return Err(Error::InvalidArgument(format!(
                "pool kernel ({kernel}) and stride ({stride}) must be positive"
            )));
        }
        Ok(Self { mode, kernel, stride })
    }

    pub fn output_len(&self, len: usize) -> Result<usize> {
        output_len(len, self.kernel, self.stride)
    }
}

/// Argmax positions recorded by a pooling forward, as flat offsets into the
/// input tensor.
#[derive(Debug, Clone, PartialEq)]
pub enum PoolIndices {
    /// One input element per output element.
    Whole(Vec<usize>),
    /// One input element per output component.
    Component(Vec<[usize; 4]>),
}

/// Visit every window: `f(output_offset, input_offset_of_window_start)`
/// over `[B, C, L]`, windows stepping by `stride`.
fn for_each_window(shape: [usize; 3], spec: &PoolSpec, mut f: impl FnMut(usize)) -> Result<usize> {
    let [batch, channels, len] = shape;
    let l_out = spec.output_len(len)?;
    for row in 0..batch * channels {
        for o in 0..l_out {
            f(row * len + o * spec.stride);
        }
    }
    Ok(l_out)
}

/// Componentwise max over each window; ties keep the first position.
pub fn component_max_pool(spec: &PoolSpec, x: &QTensor) -> Result<(QTensor, PoolIndices)> {
    let shape = x.dims::<3>()?;
    let data = x.data();
    let mut out = Vec::new();
    let mut idx = Vec::new();
    let l_out = for_each_window(shape, spec, |start| {
        let mut best = data[start];
        let mut arg = [start; 4];
        for off in start + 1..start + spec.kernel {
            let q = data[off];
            for c in 0..4 {
                if q.component(c) > best.component(c) {
                    arg[c] = off;
                }
            }
            best = best.zip_map(q, f64::max);
        }
        let pooled = crate::Quaternion::new(
            data[arg[0]].q0,
            data[arg[1]].q1,
            data[arg[2]].q2,
            data[arg[3]].q3,
        );
        out.push(pooled);
        idx.push(arg);
    })?;
    Ok((
        QTensor::new(vec![shape[0], shape[1], l_out], out)?,
        PoolIndices::Component(idx),
    ))
}

/// Selects the window element with the largest norm; ties keep the first.
pub fn magnitude_max_pool(spec: &PoolSpec, x: &QTensor) -> Result<(QTensor, PoolIndices)> {
    let shape = x.dims::<3>()?;
    let data = x.data();
    let mut out = Vec::new();
    let mut idx = Vec::new();
    let l_out = for_each_window(shape, spec, |start| {
        let mut arg = start;
        let mut best = data[start].norm_sqr();
        for off in start + 1..start + spec.kernel {
            let n = data[off].norm_sqr();
            if n > best {
                best = n;
                arg = off;
            }
        }
        out.push(data[arg]);
        idx.push(arg);
    })?;
    Ok((
        QTensor::new(vec![shape[0], shape[1], l_out], out)?,
        PoolIndices::Whole(idx),
    ))
}

pub fn quaternion_max_pool(spec: &PoolSpec, x: &QTensor) -> Result<(QTensor, PoolIndices)> {
    match spec.mode {
        PoolMode::Component => component_max_pool(spec, x),
        PoolMode::Magnitude => magnitude_max_pool(spec, x),
    }
}

/// Plain real max pooling (the mode is irrelevant for real signals).
pub fn real_max_pool(spec: &PoolSpec, x: &RTensor) -> Result<(RTensor, PoolIndices)> {
    let shape = x.dims::<3>()?;
    let data = x.data();
    let mut out = Vec::new();
    let mut idx = Vec::new();
    let l_out = for_each_window(shape, spec, |start| {
        let mut arg = start;
        for off in start + 1..start + spec.kernel {
            if data[off] > data[arg] {
                arg = off;
            }
        }
        out.push(data[arg]);
        idx.push(arg);
    })?;
    Ok((
        RTensor::new(vec![shape[0], shape[1], l_out], out)?,
        PoolIndices::Whole(idx),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Quaternion;

    fn series(values: Vec<Quaternion>) -> QTensor {
        let n = values.len();
        QTensor::new(vec![1, 1, n], values).unwrap()
    }

    fn spec(mode: PoolMode, kernel: usize) -> PoolSpec {
        PoolSpec::new(mode, kernel, kernel).unwrap()
    }

    #[test]
    fn component_pool_mixes_positions() {
        let x = series(vec![Quaternion::new(1.0, 0.0, 0.0, 0.0), Quaternion::new(0.0, 3.0, 0.0, 0.0)]);
        let (y, idx) = component_max_pool(&spec(PoolMode::Component, 2), &x).unwrap();
        assert_eq!(y.data(), &[Quaternion::new(1.0, 3.0, 0.0, 0.0)]);
        assert_eq!(idx, PoolIndices::Component(vec![[0, 1, 0, 0]]));
    }

    #[test]
    fn magnitude_pool_examples() {
        let s = spec(PoolMode::Magnitude, 2);
        let x = series(vec![Quaternion::one(), Quaternion::i().scale(3.0)]);
        let (y, idx) = magnitude_max_pool(&s, &x).unwrap();
        assert_eq!(y.data(), &[Quaternion::i().scale(3.0)]);
        assert_eq!(idx, PoolIndices::Whole(vec![1]));

        let x = series(vec![Quaternion::from_real(-2.0), Quaternion::one()]);
        let (y, _) = magnitude_max_pool(&s, &x).unwrap();
        assert_eq!(y.data(), &[Quaternion::from_real(-2.0)]);
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = series(vec![Quaternion::new(1.0, -2.0, 0.5, 0.0), Quaternion::k()]);
        for mode in [PoolMode::Component, PoolMode::Magnitude] {
            let (y, idx) = quaternion_max_pool(&spec(mode, 1), &x).unwrap();
            assert_eq!(y, x);
            match idx {
                PoolIndices::Whole(v) => assert_eq!(v, vec![0, 1]),
                PoolIndices::Component(v) => assert_eq!(v, vec![[0; 4], [1; 4]]),
            }
        }
    }

    #[test]
    fn ties_pick_the_first_element() {
        let q = Quaternion::new(0.5, 0.5, -0.5, 0.5);
        let x = series(vec![q, q, q]);
        for mode in [PoolMode::Component, PoolMode::Magnitude] {
            let (y, idx) = quaternion_max_pool(&spec(mode, 3), &x).unwrap();
            assert_eq!(y.data(), &[q]);
            match idx {
                PoolIndices::Whole(v) => assert_eq!(v, vec![0]),
                PoolIndices::Component(v) => assert_eq!(v, vec![[0; 4]]),
            }
        }
    }

    #[test]
    fn floor_output_length_and_errors() {
        let x = QTensor::zeros(vec![2, 3, 7]);
        let (y, _) = component_max_pool(&spec(PoolMode::Component, 2), &x).unwrap();
        assert_eq!(y.shape(), &[2, 3, 3]);
        assert!(magnitude_max_pool(&spec(PoolMode::Magnitude, 8), &x).is_err());
        assert!(PoolSpec::new(PoolMode::Magnitude, 0, 1).is_err());
    }
}
