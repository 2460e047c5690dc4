use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compress::{compress, mean_downsample, real_expand, RealSeries};
use crate::error::{Error, Result};
use crate::layers::Signal;

/// One model input (unbatched, `[C, L]`) with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Signal,
    pub label: usize,
    /// Regression target for quaternion-MSE training, unbatched.
    pub target: Option<Signal>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub classes: usize,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let first = self
            .train
            .first()
            .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
        for s in self.train.iter().chain(&self.test) {
            if s.input.shape() != first.input.shape() || s.input.is_quat() != first.input.is_quat() {
                return Err(Error::Shape(format!(
                    "sample of shape {:?} in a dataset of {:?}",
                    s.input.shape(),
                    first.input.shape()
                )));
            }
            if s.label >= self.classes.max(1) {
                return Err(Error::InvalidArgument(format!("label {} out of {} classes", s.label, self.classes)));
            }
        }
        Ok(())
    }
}

/// Labelled raw series before encoding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesDataset {
    pub train: Vec<(RealSeries<f64>, usize)>,
    pub test: Vec<(RealSeries<f64>, usize)>,
    pub classes: usize,
}

/// How raw series become model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Encoding {
    /// `[m, k]` quaternions.
    Quaternion { chunk_len: usize },
    /// `[4m, k]` reals (min, max, mean, std rows).
    Expanded { chunk_len: usize },
    /// `[m, k]` chunk means.
    Mean { chunk_len: usize },
    /// `[m, n]` unchanged.
    Raw,
}

fn encode_one(x: &RealSeries<f64>, enc: Encoding) -> Result<Signal> {
    Ok(match enc {
        Encoding::Quaternion { chunk_len } => Signal::Quat(compress(x, chunk_len)?.quats),
        Encoding::Expanded { chunk_len } => Signal::Real(real_expand(&compress(x, chunk_len)?).values),
        Encoding::Mean { chunk_len } => Signal::Real(mean_downsample(x, chunk_len)?.values),
        Encoding::Raw => Signal::Real(x.values.clone()),
    })
}

pub fn encode(data: &SeriesDataset, enc: Encoding) -> Result<Dataset> {
    let conv = |set: &[(RealSeries<f64>, usize)]| {
        set.iter()
            .map(|(x, label)| {
                Ok(Sample {
                    input: encode_one(x, enc)?,
                    label: *label,
                    target: None,
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let out = Dataset {
        train: conv(&data.train)?,
        test: conv(&data.test)?,
        classes: data.classes,
    };
    out.validate()?;
    Ok(out)
}

/// Parameters of the variance-coded synthetic task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub channels: usize,
    pub length: usize,
    #[serde(default = "default_chunk")]
    pub chunk_len: usize,
    #[serde(default = "default_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_per_class")]
    pub test_per_class: usize,
    /// Ratio between the largest and smallest class noise level.
    #[serde(default = "default_ratio")]
    pub sigma_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_chunk() -> usize {
    8
}
fn default_per_class() -> usize {
    32
}
fn default_ratio() -> f64 {
    3.0
}

impl SynthSpec {
    pub fn new(classes: usize, channels: usize, length: usize, seed: u64) -> Self {
        Self {
            classes,
            channels,
            length,
            chunk_len: default_chunk(),
            train_per_class: default_per_class(),
            test_per_class: default_per_class(),
            sigma_ratio: default_ratio(),
            seed,
        }
    }

    /// Noise level of class `c`, geometric from `0.5` to `0.5 · sigma_ratio`.
    pub fn sigma(&self, c: usize) -> f64 {
        if self.classes < 2 {
            return 0.5;
        }
        0.5 * self.sigma_ratio.powf(c as f64 / (self.classes - 1) as f64)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// One series of class `c`: a class-independent random base signal plus
/// zero-mean noise inside every chunk, its spread set by the class.
fn synth_series(spec: &SynthSpec, c: usize, rng: &mut ChaCha8Rng) -> Result<RealSeries<f64>> {
    let sigma = spec.sigma(c);
    let mut rows = Vec::with_capacity(spec.channels);
    for _ in 0..spec.channels {
        let amp = rng.gen_range(0.5..1.5);
        let freq = rng.gen_range(0.5..3.0);
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let offset = rng.gen_range(-0.5..0.5);
        let mut row: Vec<f64> = (0..spec.length)
            .map(|t| offset + amp * (std::f64::consts::TAU * freq * t as f64 / spec.length as f64 + phase).sin())
            .collect();
        for chunk in row.chunks_mut(spec.chunk_len) {
            let noise: Vec<f64> = (0..chunk.len()).map(|_| sigma * gaussian(rng)).collect();
            let mean = noise.iter().sum::<f64>() / noise.len() as f64;
            for (v, n) in chunk.iter_mut().zip(noise) {
                *v += n - mean;
            }
        }
        rows.push(row);
    }
    RealSeries::from_rows(rows)
}

/// Synthetic classification data whose classes share chunk means and differ
/// only in within-chunk spread. Deterministic for a given spec.
pub fn synth_dataset(spec: &SynthSpec) -> Result<SeriesDataset> {
    if spec.classes == 0 || spec.channels == 0 || spec.length == 0 || spec.chunk_len == 0 {
        return Err(Error::InvalidArgument("synthetic dataset dimensions must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut make = |per_class: usize| {
        let mut out = Vec::with_capacity(per_class * spec.classes);
        for i in 0..per_class * spec.classes {
            let c = i % spec.classes;
            out.push((synth_series(spec, c, &mut rng)?, c));
        }
        Ok::<_, Error>(out)
    };
    let train = make(spec.train_per_class)?;
    let test = make(spec.test_per_class)?;
    Ok(SeriesDataset { train, test, classes: spec.classes })
}

/// Batch the inputs (and targets, when present) of the given samples.
pub(crate) fn batch(samples: &[&Sample]) -> Result<(Signal, Vec<usize>, Option<Signal>)> {
    let inputs: Vec<&Signal> = samples.iter().map(|s| &s.input).collect();
    let x = Signal::stack(&inputs)?;
    let labels = samples.iter().map(|s| s.label).collect();
    let targets: Option<Vec<&Signal>> = samples.iter().map(|s| s.target.as_ref()).collect();
    let d = match targets {
        Some(t) if !t.is_empty() => Some(Signal::stack(&t)?),
        _ => None,
    };
    Ok((x, labels, d))
}
