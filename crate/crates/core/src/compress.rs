//! Quaternionic compression of multivariate time series.
//!
//! Each channel is cut into chunks of `l` samples (the last one may be
//! shorter) and every chunk becomes one quaternion
//! `min + max·i + mean·j + std·k`, mapping `m × n` reals onto `m × ⌈n/l⌉`
//! quaternions. `std` is the sample standard deviation (denominator
//! `len − 1`); single-sample chunks get `std = 0`.

use std::io::{Read, Write};

use num_traits::Float;

use crate::error::{Error, Result};
use crate::{Quat, Tensor};

/// `m` channels by `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSeries<T> {
    /// `[m, n]`, channel-major.
    pub values: Tensor<T>,
    pub names: Vec<String>,
    pub sample_period: Option<f64>,
}

impl<T: Float> RealSeries<T> {
    /// Channels are named `ch0, ch1, ...`.
    pub fn new(values: Tensor<T>) -> Result<Self> {
        let [m, n] = values.dims::<2>()?;
        if n == 0 || m == 0 {
            return Err(Error::InvalidArgument("a series needs at least one channel and one sample".into()));
        }
        if values.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("series contains non-finite values".into()));
        }
        Ok(Self {
            names: (0..m).map(|c| format!("ch{c}")).collect(),
            values,
            sample_period: None,
        })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("channels of unequal length".into()));
        }
        Self::new(Tensor::new(vec![m, n], rows.into_iter().flatten().collect())?)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.channels() {
            return Err(Error::Shape(format!("{} names for {} channels", names.len(), self.channels())));
        }
        self.names = names;
        Ok(self)
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn samples(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.samples();
        &self.values.data()[c * n..(c + 1) * n]
    }
}

/// One quaternion per (channel, chunk).
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSeries<T> {
    /// `[m, k]`.
    pub quats: Tensor<Quat<T>>,
    pub chunk_len: usize,
    pub last_chunk_len: usize,
    pub names: Vec<String>,
}

impl<T: Float> CompressedSeries<T> {
    pub fn channels(&self) -> usize {
        self.quats.shape()[0]
    }

    pub fn chunks(&self) -> usize {
        self.quats.shape()[1]
    }
}

fn cast<T: Float>(n: usize) -> T {
    T::from(n).expect("count representable in the scalar type")
}

/// `min + max·i + mean·j + std·k` of one chunk (two-pass mean/variance).
pub fn chunk_stats<T: Float>(chunk: &[T]) -> Quat<T> {
    assert!(!chunk.is_empty(), "empty chunk");
    let len = cast::<T>(chunk.len());
    let (mut lo, mut hi, mut sum) = (chunk[0], chunk[0], T::zero());
    for &v in chunk {
        lo = lo.min(v);
        hi = hi.max(v);
        sum = sum + v;
    }
    let mean = (sum / len).max(lo).min(hi);
    let std = if chunk.len() < 2 {
        T::zero()
    } else {
        let ss = chunk.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean));
        (ss / (len - T::one())).sqrt()
    };
    Quat::new(lo, hi, mean, std)
}

fn chunk_len_check(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::InvalidArgument("chunk length must be positive".into()));
    }
    Ok(())
}

pub fn compress<T: Float>(x: &RealSeries<T>, l: usize) -> Result<CompressedSeries<T>> {
    chunk_len_check(l)?;
    let (m, n) = (x.channels(), x.samples());
    let k = n.div_ceil(l);
    let mut quats = Vec::with_capacity(m * k);
    for c in 0..m {
        quats.extend(x.channel(c).chunks(l).map(chunk_stats));
    }
    Ok(CompressedSeries {
        quats: Tensor::new(vec![m, k], quats)?,
        chunk_len: l,
        last_chunk_len: n - (k - 1) * l,
        names: x.names.clone(),
    })
}

/// Per-chunk means only.
pub fn mean_downsample<T: Float>(x: &RealSeries<T>, l: usize) -> Result<RealSeries<T>> {
    chunk_len_check(l)?;
    let (m, n) = (x.channels(), x.samples());
    let k = n.div_ceil(l);
    let mut out = Vec::with_capacity(m * k);
    for c in 0..m {
        out.extend(x.channel(c).chunks(l).map(|ch| chunk_stats(ch).q2));
    }
    Ok(RealSeries {
        values: Tensor::new(vec![m, k], out)?,
        names: x.names.clone(),
        sample_period: x.sample_period.map(|p| p * l as f64),
    })
}

/// `[m, k]` quaternions to `[4m, k]` reals, rows `(min, max, mean, std)` per
/// source channel.
pub fn real_expand<T: Float>(c: &CompressedSeries<T>) -> RealSeries<T> {
    let (m, k) = (c.channels(), c.chunks());
    let mut out = vec![T::zero(); 4 * m * k];
    for ch in 0..m {
        for t in 0..k {
            let q = c.quats.data()[ch * k + t].to_array();
            for comp in 0..4 {
                out[(4 * ch + comp) * k + t] = q[comp];
            }
        }
    }
    let names = c
        .names
        .iter()
        .flat_map(|n| ["min", "max", "mean", "std"].map(|s| format!("{n}.{s}")))
        .collect();
    RealSeries {
        values: Tensor::new(vec![4 * m, k], out).expect("sizes agree"),
        names,
        sample_period: None,
    }
}

/// Windows of `window` samples starting every `stride` samples.
pub fn sliding_window<T: Float>(x: &RealSeries<T>, window: usize, stride: usize) -> Result<Vec<RealSeries<T>>> {
    let n = x.samples();
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window and stride must be positive".into()));
    }
    if window > n {
        return Err(Error::InvalidArgument(format!("window {window} longer than the series ({n})")));
    }
    let m = x.channels();
    Ok((0..=(n - window) / stride)
        .map(|w| {
            let start = w * stride;
            let data = (0..m).flat_map(|c| x.channel(c)[start..start + window].iter().copied()).collect();
            RealSeries {
                values: Tensor::new(vec![m, window], data).expect("sizes agree"),
                names: x.names.clone(),
                sample_period: x.sample_period,
            }
        })
        .collect())
}

/// Per-channel standardization fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScore<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Float> ZScore<T> {
    /// Pools all samples of every series; constant channels keep `std = 1`.
    pub fn fit(series: &[RealSeries<T>]) -> Result<Self> {
        let first = series.first().ok_or_else(|| Error::InvalidArgument("no series to fit".into()))?;
        let m = first.channels();
        let mut mean = vec![T::zero(); m];
        let mut std = vec![T::zero(); m];
        for c in 0..m {
            let mut count = 0usize;
            let mut sum = T::zero();
            for s in series {
                if s.channels() != m {
                    return Err(Error::Shape("series with different channel counts".into()));
                }
                count += s.samples();
                sum = s.channel(c).iter().fold(sum, |a, &v| a + v);
            }
            let mu = sum / cast(count);
            let ss = series
                .iter()
                .flat_map(|s| s.channel(c).iter())
                .fold(T::zero(), |a, &v| a + (v - mu) * (v - mu));
            let sd = if count > 1 { (ss / cast(count - 1)).sqrt() } else { T::zero() };
            mean[c] = mu;
            std[c] = if sd > T::zero() { sd } else { T::one() };
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &RealSeries<T>) -> Result<RealSeries<T>> {
        if x.channels() != self.mean.len() {
            return Err(Error::Shape(format!("{} channels, scaler fitted on {}", x.channels(), self.mean.len())));
        }
        let n = x.samples();
        let mut i = 0;
        let values = x.values.map(|&v| {
            let c = i / n;
            i += 1;
            (v - self.mean[c]) / self.std[c]
        });
        Ok(RealSeries { values, ..x.clone() })
    }
}

/// Parse a CSV with a header row of channel names and one row per time step.
pub fn read_csv(r: impl Read) -> Result<RealSeries<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let names: Vec<String> = reader
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::Format("line 1: missing header row".into()));
    }
    let m = names.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); m];
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != m {
            return Err(Error::Format(format!("line {line}: expected {m} fields, found {}", record.len())));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::Format(format!(
                    "line {line}, column {} ({}): '{cell}' is not a number",
                    col + 1,
                    names[col]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Format(format!("line {line}, column {}: non-finite value '{cell}'", col + 1)));
            }
            columns[col].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    RealSeries::from_rows(columns)?.with_names(names)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => Error::Format(format!(
            "line {}: expected {expected_len} fields, found {len}",
            line.unwrap_or(0)
        )),
        other => Error::Format(format!("line {}: {other:?}", line.unwrap_or(0))),
    }
}

/// `channel,chunk,min,max,mean,std`.
pub fn write_compressed_csv(c: &CompressedSeries<f64>, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["channel", "chunk", "min", "max", "mean", "std"]).map_err(csv_error)?;
    let k = c.chunks();
    for (ch, name) in c.names.iter().enumerate() {
        for t in 0..k {
            let q = c.quats.data()[ch * k + t];
            out.write_record([
                name.clone(),
                t.to_string(),
                q.q0.to_string(),
                q.q1.to_string(),
                q.q2.to_string(),
                q.q3.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `channel,chunk,mean`.
pub fn write_downsampled_csv(s: &RealSeries<f64>, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["channel", "chunk", "mean"]).map_err(csv_error)?;
    for (ch, name) in s.names.iter().enumerate() {
        for (t, v) in s.channel(ch).iter().enumerate() {
            out.write_record([name.clone(), t.to_string(), v.to_string()]).map_err(csv_error)?;
        }
    }
    out.flush()?;
    Ok(())
}

const QTS_MAGIC: &[u8; 4] = b"QTS1";

/// `"QTS1" m k l` as little-endian `u32`, then `m·k` quaternions as four
/// little-endian `f64` each, channel-major.
pub fn write_compressed_bin(c: &CompressedSeries<f64>, mut w: impl Write) -> Result<()> {
    w.write_all(QTS_MAGIC)?;
    for v in [c.channels(), c.chunks(), c.chunk_len] {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    for q in c.quats.data() {
        for v in q.to_array() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_compressed_bin`]. Channel names are not stored; the
/// last chunk length is not recoverable and is reported as `l`.
pub fn read_compressed_bin(mut r: impl Read) -> Result<CompressedSeries<f64>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 16 || &buf[..4] != QTS_MAGIC {
        return Err(Error::Format("not a compressed series (bad magic)".into()));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (m, k, l) = (word(0), word(1), word(2));
    let body = &buf[16..];
    if body.len() != m * k * 32 {
        return Err(Error::Format(format!("expected {} payload bytes, found {}", m * k * 32, body.len())));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    let quats = vals.chunks_exact(4).map(|c| Quat::new(c[0], c[1], c[2], c[3])).collect();
    Ok(CompressedSeries {
        quats: Tensor::new(vec![m, k], quats)?,
        chunk_len: l,
        last_chunk_len: l,
        names: (0..m).map(|c| format!("ch{c}")).collect(),
    })
}
