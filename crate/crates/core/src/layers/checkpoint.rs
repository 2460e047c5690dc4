//! Binary model checkpoints.
//!
//! Layout (all integers `u32` little-endian, all reals `f64` little-endian):
//!
//! ```text
//! "QNN1" layer_count
//! per layer:  tag:u8 n_hyper hyper[n_hyper]:f64 n_tensors tensor[n_tensors]
//! per tensor: kind:u8 (0 real, 1 quaternion) rank dims[rank] data
//! ```
//!
//! Quaternion data is stored as `q0 q1 q2 q3` per element.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, Dropout, Layer, Model, PoolMode, PoolSpec, ProductOrder, QConv1d, QLinear, RealConv1d, RealHead, RealLinear};
use crate::error::{Error, Result};
use crate::{QTensor, Quaternion, RTensor};

const MAGIC: &[u8; 4] = b"QNN1";

const TAG_DROPOUT: u8 = 1;
const TAG_QCONV: u8 = 2;
const TAG_ACTIVATION: u8 = 3;
const TAG_POOL: u8 = 4;
const TAG_FLATTEN: u8 = 5;
const TAG_QLINEAR: u8 = 6;
const TAG_HEAD: u8 = 7;
const TAG_CONV: u8 = 8;
const TAG_LINEAR: u8 = 9;

enum Stored {
    Real(RTensor),
    Quat(QTensor),
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_tensor(w: &mut impl Write, t: &Stored) -> Result<()> {
    let (kind, shape, data): (u8, &[usize], Vec<f64>) = match t {
        Stored::Real(t) => (0, t.shape(), t.data().to_vec()),
        Stored::Quat(t) => (1, t.shape(), t.data().iter().flat_map(|q| q.to_array()).collect()),
    };
    w.write_all(&[kind])?;
    put_u32(w, shape.len())?;
    for &d in shape {
        put_u32(w, d)?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn describe(layer: &Layer) -> (u8, Vec<f64>, Vec<Stored>) {
    match layer {
        Layer::Dropout(d) => (TAG_DROPOUT, vec![d.p()], vec![]),
        Layer::QConv1d(c) => (
            TAG_QCONV,
            vec![c.stride as f64, if c.order == ProductOrder::InputLeft { 1.0 } else { 0.0 }],
            vec![Stored::Quat(c.weight.clone()), Stored::Quat(c.bias.clone())],
        ),
        Layer::Activation(a) => (TAG_ACTIVATION, vec![a.tag() as f64], vec![]),
        Layer::Pool(p) => (
            TAG_POOL,
            vec![if p.mode == PoolMode::Magnitude { 1.0 } else { 0.0 }, p.kernel as f64, p.stride as f64],
            vec![],
        ),
        Layer::Flatten => (TAG_FLATTEN, vec![], vec![]),
        Layer::QLinear(l) => (TAG_QLINEAR, vec![], vec![Stored::Quat(l.weight.clone()), Stored::Quat(l.bias.clone())]),
        Layer::Head(h) => (
            TAG_HEAD,
            vec![],
            vec![Stored::Real(h.linear.weight.clone()), Stored::Real(h.linear.bias.clone())],
        ),
        Layer::Conv1d(c) => (
            TAG_CONV,
            vec![c.stride as f64],
            vec![Stored::Real(c.weight.clone()), Stored::Real(c.bias.clone())],
        ),
        Layer::Linear(l) => (TAG_LINEAR, vec![], vec![Stored::Real(l.weight.clone()), Stored::Real(l.bias.clone())]),
    }
}

pub fn save(model: &Model, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    put_u32(w, model.layers.len())?;
    for layer in &model.layers {
        let (tag, hyper, tensors) = describe(layer);
        w.write_all(&[tag])?;
        put_u32(w, hyper.len())?;
        for h in hyper {
            w.write_all(&h.to_le_bytes())?;
        }
        put_u32(w, tensors.len())?;
        for t in &tensors {
            put_tensor(w, t)?;
        }
    }
    Ok(())
}

pub fn save_file(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    save(model, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn tensor(&mut self) -> Result<Stored> {
        let kind = self.u8()?;
        let rank = self.u32()?;
        if rank > 8 {
            return Err(Error::Format(format!("tensor rank {rank} is implausible")));
        }
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        match kind {
            0 => {
                let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
                Ok(Stored::Real(RTensor::new(shape, data)?))
            }
            1 => {
                let data = (0..n)
                    .map(|_| Ok(Quaternion::new(self.f64()?, self.f64()?, self.f64()?, self.f64()?)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Stored::Quat(QTensor::new(shape, data)?))
            }
            k => Err(Error::Format(format!("unknown tensor kind {k}"))),
        }
    }
}

fn hyper_usize(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(Error::Format(format!("{what} {v} is not a count")))
    }
}

fn quat_pair(tensors: Vec<Stored>) -> Result<(QTensor, QTensor)> {
    match <[Stored; 2]>::try_from(tensors) {
        Ok([Stored::Quat(w), Stored::Quat(b)]) => Ok((w, b)),
        _ => Err(Error::Format("expected a quaternion weight and bias".into())),
    }
}

fn real_pair(tensors: Vec<Stored>) -> Result<(RTensor, RTensor)> {
    match <[Stored; 2]>::try_from(tensors) {
        Ok([Stored::Real(w), Stored::Real(b)]) => Ok((w, b)),
        _ => Err(Error::Format("expected a real weight and bias".into())),
    }
}

fn build(tag: u8, hyper: &[f64], tensors: Vec<Stored>) -> Result<Layer> {
    let need = |n: usize| {
        if hyper.len() == n {
            Ok(())
        } else {
            Err(Error::Format(format!("layer tag {tag} expects {n} hyperparameters, got {}", hyper.len())))
        }
    };
    Ok(match tag {
        TAG_DROPOUT => {
            need(1)?;
            Layer::Dropout(Dropout::new(hyper[0]).map_err(|e| Error::Format(e.to_string()))?)
        }
        TAG_QCONV => {
            need(2)?;
            let (w, b) = quat_pair(tensors)?;
            let order = if hyper[1] == 1.0 { ProductOrder::InputLeft } else { ProductOrder::WeightLeft };
            Layer::QConv1d(QConv1d::new(w, b, hyper_usize(hyper[0], "stride")?, order)?)
        }
        TAG_ACTIVATION => {
            need(1)?;
            let tag = hyper_usize(hyper[0], "activation")?;
            Layer::Activation(
                Activation::from_tag(tag as u8).ok_or_else(|| Error::Format(format!("unknown activation {tag}")))?,
            )
        }
        TAG_POOL => {
            need(3)?;
            let mode = if hyper[0] == 1.0 { PoolMode::Magnitude } else { PoolMode::Component };
            Layer::Pool(PoolSpec::new(mode, hyper_usize(hyper[1], "kernel")?, hyper_usize(hyper[2], "stride")?)?)
        }
        TAG_FLATTEN => Layer::Flatten,
        TAG_QLINEAR => {
            let (w, b) = quat_pair(tensors)?;
            Layer::QLinear(QLinear::new(w, b)?)
        }
        TAG_HEAD => {
            let (w, b) = real_pair(tensors)?;
            let linear = RealLinear::new(w, b)?;
            if linear.in_features() % 4 != 0 {
                return Err(Error::Format("head input width is not a multiple of 4".into()));
            }
            Layer::Head(RealHead { linear })
        }
        TAG_CONV => {
            need(1)?;
            let (w, b) = real_pair(tensors)?;
            Layer::Conv1d(RealConv1d::new(w, b, hyper_usize(hyper[0], "stride")?)?)
        }
        TAG_LINEAR => {
            let (w, b) = real_pair(tensors)?;
            Layer::Linear(RealLinear::new(w, b)?)
        }
        other => return Err(Error::Format(format!("unknown layer tag {other}"))),
    })
}

pub fn load(r: &mut impl Read) -> Result<Model> {
    let mut r = Reader { inner: r };
    if &r.bytes::<4>()? != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let count = r.u32()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let tag = r.u8()?;
        let n_hyper = r.u32()?;
        let hyper = (0..n_hyper).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let n_tensors = r.u32()?;
        let tensors = (0..n_tensors).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
        layers.push(build(tag, &hyper, tensors)?);
    }
    let mut rest = [0u8; 1];
    if r.inner.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Model::new(layers))
}

pub fn load_file(path: impl AsRef<Path>) -> Result<Model> {
    load(&mut BufReader::new(File::open(path)?))
}
