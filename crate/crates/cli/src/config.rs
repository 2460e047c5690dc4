use std::fs;
use std::path::{Path, PathBuf};

use quatnet::compress::{read_csv, sliding_window, RealSeries, ZScore};
use quatnet::train::{
    encode, synth_dataset, Dataset, Encoding, Engine, InputKind, LossKind, ModelConfig, SeriesDataset, SynthSpec,
    TrainSpec,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::failure::Failure;

pub const SEED_ENV: &str = "QUATNET_SEED";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    seed: Option<u64>,
    model: Map<String, Value>,
    train: TrainSection,
    data: DataSource,
    #[serde(default = "default_chunk")]
    chunk_len: usize,
    #[serde(default)]
    zscore: bool,
    #[serde(default)]
    output: Outputs,
}

fn default_chunk() -> usize {
    8
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub loss: LossKind,
}

fn default_batch() -> usize {
    16
}
fn default_epochs() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SynthData),
    Csv(CsvData),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthData {
    pub classes: usize,
    pub channels: usize,
    pub length: usize,
    #[serde(default = "default_per_class")]
    pub train_per_class: usize,
    #[serde(default = "default_per_class")]
    pub test_per_class: usize,
    #[serde(default = "default_ratio")]
    pub sigma_ratio: f64,
}

fn default_per_class() -> usize {
    32
}
fn default_ratio() -> f64 {
    3.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvData {
    pub classes: usize,
    pub train: Vec<LabelledFile>,
    #[serde(default)]
    pub test: Vec<LabelledFile>,
    /// Cut every file into windows of this many samples.
    #[serde(default)]
    pub window: Option<usize>,
    /// Window step; defaults to the window length.
    #[serde(default)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelledFile {
    pub path: PathBuf,
    pub label: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_checkpoint")]
    pub checkpoint: PathBuf,
    #[serde(default = "default_history")]
    pub history: PathBuf,
}

fn default_checkpoint() -> PathBuf {
    "model.qnn".into()
}
fn default_history() -> PathBuf {
    "history.csv".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Self { checkpoint: default_checkpoint(), history: default_history() }
    }
}

/// A validated run description. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub data: DataSource,
    pub chunk_len: usize,
    pub zscore: bool,
    pub output: Outputs,
    base: PathBuf,
}

/// `--seed`, then the config, then `QUATNET_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::format(format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Independent sub-seed for one consumer of the run seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Channels and samples of the first training file.
fn probe_csv(base: &Path, c: &CsvData) -> Result<(usize, usize), Failure> {
    let first = c.train.first().ok_or_else(|| Failure::format("config: data.csv.train lists no files"))?;
    let path = if first.path.is_absolute() { first.path.clone() } else { base.join(&first.path) };
    let file = fs::File::open(&path).map_err(|e| Failure::io(&path, e))?;
    let series = read_csv(file).map_err(|e| Failure::from(e).context(&path))?;
    Ok((series.channels(), series.samples()))
}

impl RunConfig {
    pub fn load(path: &Path, seed_flag: Option<u64>) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base, seed_flag).map_err(|f| f.context(path))
    }

    pub fn parse(text: &str, base: PathBuf, seed_flag: Option<u64>) -> Result<Self, Failure> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Failure::format(format!("config: {e}")))?;
        if raw.chunk_len == 0 {
            return Err(Failure::format("config: chunk_len must be at least 1"));
        }
        let seed = resolve_seed(seed_flag, raw.seed)?;

        let (classes, channels, samples) = match &raw.data {
            DataSource::Synthetic(s) => (s.classes, s.channels, Some(s.length)),
            DataSource::Csv(c) => {
                let (channels, samples) = probe_csv(&base, c)?;
                (c.classes, channels, Some(c.window.unwrap_or(samples)))
            }
        };
        let mut model = raw.model;
        model.entry("classes").or_insert(classes.into());
        model.entry("channels").or_insert(channels.into());
        let input = model.get("input").cloned().map(serde_json::from_value::<InputKind>).transpose();
        let input = input.map_err(|e| Failure::format(format!("config: model.input: {e}")))?.unwrap_or_default();
        if let Some(n) = samples {
            let length = match input {
                InputKind::Uncompressed => n,
                _ => n.div_ceil(raw.chunk_len),
            };
            model.entry("length").or_insert(length.into());
        }
        let model: ModelConfig =
            serde_json::from_value(Value::Object(model)).map_err(|e| Failure::format(format!("config: model: {e}")))?;
        model.validate()?;
        if model.classes != classes {
            return Err(Failure::format(format!(
                "config: model has {} classes but the data has {classes}",
                model.classes
            )));
        }
        Ok(Self {
            seed,
            model,
            train: raw.train,
            data: raw.data,
            chunk_len: raw.chunk_len,
            zscore: raw.zscore,
            output: raw.output,
            base,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn encoding(&self) -> Encoding {
        let chunk_len = self.chunk_len;
        match (self.model.input, self.model.numeric.is_quaternion()) {
            (InputKind::Compressed, true) => Encoding::Quaternion { chunk_len },
            (InputKind::Compressed, false) => Encoding::Expanded { chunk_len },
            (InputKind::Mean, _) => Encoding::Mean { chunk_len },
            (InputKind::Uncompressed, _) => Encoding::Raw,
        }
    }

    pub fn train_spec(&self) -> TrainSpec {
        TrainSpec {
            lr: self.train.lr,
            batch: self.train.batch,
            epochs: self.train.epochs,
            seed: sub_seed(self.seed, 2),
            engine: self.train.engine,
            loss: self.train.loss,
        }
    }

    pub fn init_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(sub_seed(self.seed, 1))
    }

    pub fn series(&self) -> Result<SeriesDataset, Failure> {
        let mut data = match &self.data {
            DataSource::Synthetic(s) => synth_dataset(&SynthSpec {
                classes: s.classes,
                channels: s.channels,
                length: s.length,
                chunk_len: self.chunk_len,
                train_per_class: s.train_per_class,
                test_per_class: s.test_per_class,
                sigma_ratio: s.sigma_ratio,
                seed: sub_seed(self.seed, 0),
            })?,
            DataSource::Csv(c) => SeriesDataset {
                train: self.read_files(c, &c.train)?,
                test: self.read_files(c, &c.test)?,
                classes: c.classes,
            },
        };
        if self.zscore {
            let train: Vec<RealSeries<f64>> = data.train.iter().map(|(s, _)| s.clone()).collect();
            let z = ZScore::fit(&train)?;
            for (s, _) in data.train.iter_mut().chain(data.test.iter_mut()) {
                *s = z.apply(s)?;
            }
        }
        Ok(data)
    }

    fn read_files(&self, c: &CsvData, files: &[LabelledFile]) -> Result<Vec<(RealSeries<f64>, usize)>, Failure> {
        let mut out = Vec::new();
        for f in files {
            let path = self.resolve(&f.path);
            let file = fs::File::open(&path).map_err(|e| Failure::io(&path, e))?;
            let series = read_csv(file).map_err(|e| Failure::from(e).context(&path))?;
            match c.window {
                Some(w) => {
                    for win in sliding_window(&series, w, c.stride.unwrap_or(w)).map_err(|e| Failure::from(e).context(&path))? {
                        out.push((win, f.label));
                    }
                }
                None => out.push((series, f.label)),
            }
        }
        Ok(out)
    }

    pub fn dataset(&self) -> Result<Dataset, Failure> {
        let data = encode(&self.series()?, self.encoding())?;
        let first = &data.train[0].input;
        let channels = self.model.input_channels();
        if first.shape() != [channels, self.model.length] {
            return Err(Failure::format(format!(
                "encoded samples have shape {:?} but the model expects [{channels}, {}]",
                first.shape(),
                self.model.length
            )));
        }
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "seed": 3,
        "model": {"arch": "1c3l", "width": "low", "numeric": "quaternion", "linear_sizes": [4, 2], "conv_channels": [2]},
        "train": {"lr": 0.01, "epochs": 1},
        "data": {"synthetic": {"classes": 2, "channels": 2, "length": 64, "train_per_class": 2, "test_per_class": 1}}
    }"#;

    #[test]
    fn fills_shape_from_data() {
        let cfg = RunConfig::parse(MINIMAL, PathBuf::new(), None).unwrap();
        assert_eq!((cfg.model.classes, cfg.model.channels, cfg.model.length), (2, 2, 8));
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.encoding(), Encoding::Quaternion { chunk_len: 8 });
        let data = cfg.dataset().unwrap();
        assert_eq!(data.train.len(), 4);
    }

    #[test]
    fn flag_overrides_config_seed() {
        assert_eq!(RunConfig::parse(MINIMAL, PathBuf::new(), Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("\"zscore_typo\"", "").replace("\"seed\": 3,", "\"seed\": 3, \"chunk_size\": 4,");
        assert!(RunConfig::parse(&bad, PathBuf::new(), None).is_err());
        let bad = MINIMAL.replace("\"epochs\": 1", "\"epochs\": 1, \"seed\": 2");
        assert!(RunConfig::parse(&bad, PathBuf::new(), None).is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(5, 0), sub_seed(5, 1));
        assert_eq!(sub_seed(5, 2), sub_seed(5, 2));
    }
}
