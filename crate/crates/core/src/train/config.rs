use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{
    conv, Activation, Dropout, Layer, Model, PoolMode, PoolSpec, ProductOrder, QConv1d, QLinear, RealConv1d, RealHead,
    RealLinear,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "1c3l")]
    OneConv,
    #[serde(rename = "2c4l")]
    TwoConv,
    #[serde(rename = "3c4l")]
    ThreeConv,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::OneConv, Arch::TwoConv, Arch::ThreeConv];

    pub fn conv_blocks(self) -> usize {
        match self {
            Arch::OneConv => 1,
            Arch::TwoConv => 2,
            Arch::ThreeConv => 3,
        }
    }

    /// Hidden linear blocks before the head.
    pub fn linear_blocks(self) -> usize {
        match self {
            Arch::OneConv => 2,
            Arch::TwoConv | Arch::ThreeConv => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::OneConv => "1c3l",
            Arch::TwoConv => "2c4l",
            Arch::ThreeConv => "3c4l",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Width {
    Low,
    High,
}

impl Width {
    pub const ALL: [Width; 2] = [Width::Low, Width::High];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Numeric {
    #[default]
    Quaternion,
    RealEqualParams,
    RealEqualFeatures,
}

impl Numeric {
    pub const ALL: [Numeric; 3] = [Numeric::Quaternion, Numeric::RealEqualParams, Numeric::RealEqualFeatures];

    pub fn is_quaternion(self) -> bool {
        self == Numeric::Quaternion
    }
}

/// What the model is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    /// Quaternion-compressed chunks; real models see the `4m` expanded rows.
    #[default]
    Compressed,
    /// Per-chunk means, `m` real channels.
    Mean,
    /// The raw samples, `m` real channels.
    Uncompressed,
}

fn default_pooling() -> PoolMode {
    PoolMode::Magnitude
}
fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_kernel() -> usize {
    4
}
fn default_two() -> usize {
    2
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub width: Width,
    #[serde(default)]
    pub numeric: Numeric,
    #[serde(default = "default_pooling")]
    pub pooling: PoolMode,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
    pub classes: usize,
    /// Source channels `m` before any expansion.
    pub channels: usize,
    /// Sequence length seen by the first layer.
    pub length: usize,
    #[serde(default)]
    pub input: InputKind,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_one")]
    pub conv_stride: usize,
    #[serde(default = "default_two")]
    pub pool_kernel: usize,
    #[serde(default = "default_two")]
    pub pool_stride: usize,
    #[serde(default)]
    pub product_order: ProductOrder,
    /// Overrides the table widths (in the model's own units).
    #[serde(default)]
    pub conv_channels: Option<Vec<usize>>,
    #[serde(default)]
    pub linear_sizes: Option<Vec<usize>>,
    /// Append the classification head. Without it the last linear block's
    /// output is the model output.
    #[serde(default = "default_true")]
    pub head: bool,
}

impl ModelConfig {
    pub fn new(arch: Arch, width: Width, numeric: Numeric, classes: usize, channels: usize, length: usize) -> Self {
        Self {
            arch,
            width,
            numeric,
            pooling: default_pooling(),
            activation: default_activation(),
            dropout: 0.0,
            classes,
            channels,
            length,
            input: InputKind::Compressed,
            kernel: default_kernel(),
            conv_stride: 1,
            pool_kernel: 2,
            pool_stride: 2,
            product_order: ProductOrder::WeightLeft,
            conv_channels: None,
            linear_sizes: None,
            head: true,
        }
    }

    /// Conv channels and hidden linear sizes, in quaternions for the
    /// quaternion variant and reals otherwise.
    pub fn widths(&self) -> (Vec<usize>, Vec<usize>) {
        let (conv, linear) = table_widths(self.arch, self.width, self.numeric);
        (
            self.conv_channels.clone().unwrap_or(conv),
            self.linear_sizes.clone().unwrap_or(linear),
        )
    }

    /// Channels of the first layer's input in the model's own units.
    pub fn input_channels(&self) -> usize {
        match (self.numeric, self.input) {
            (Numeric::Quaternion, _) => self.channels,
            (_, InputKind::Compressed) => 4 * self.channels,
            _ => self.channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.channels == 0 || self.length == 0 {
            return bad("channels and length must be positive".into());
        }
        if self.numeric.is_quaternion() && self.input != InputKind::Compressed {
            return bad("quaternion models take compressed input".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        let (conv, linear) = self.widths();
        if conv.len() != self.arch.conv_blocks() || linear.len() != self.arch.linear_blocks() {
            return bad(format!(
                "{} needs {} conv widths and {} linear sizes, got {} and {}",
                self.arch.name(),
                self.arch.conv_blocks(),
                self.arch.linear_blocks(),
                conv.len(),
                linear.len()
            ));
        }
        if conv.iter().chain(&linear).any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        if self.kernel == 0 || self.conv_stride == 0 || self.pool_kernel == 0 || self.pool_stride == 0 {
            return bad("kernel sizes and strides must be positive".into());
        }
        self.sequence_lengths().map(|_| ())
    }

    /// Sequence length after each conv block.
    pub fn sequence_lengths(&self) -> Result<Vec<usize>> {
        let mut len = self.length;
        let mut out = Vec::new();
        for _ in 0..self.arch.conv_blocks() {
            len = conv::output_len(len, self.kernel, self.conv_stride)
                .and_then(|l| conv::output_len(l, self.pool_kernel, self.pool_stride))
                .map_err(|_| Error::InvalidArgument(format!("input length {} too short for {}", self.length, self.arch.name())))?;
            out.push(len);
        }
        Ok(out)
    }
}

/// Table widths for 52-channel inputs: conv channels and hidden linear
/// sizes (the last one feeds the head).
pub fn table_widths(arch: Arch, width: Width, numeric: Numeric) -> (Vec<usize>, Vec<usize>) {
    let quat = |conv: &[usize], lin: &[usize]| (conv.to_vec(), lin.to_vec());
    let (qc, ql) = match (arch, width) {
        (Arch::OneConv, Width::Low) => quat(&[32], &[128, 8]),
        (Arch::OneConv, Width::High) => quat(&[96], &[256, 8]),
        (Arch::TwoConv, Width::Low) => quat(&[32, 32], &[128, 128, 8]),
        (Arch::TwoConv, Width::High) => quat(&[96, 96], &[256, 256, 8]),
        (Arch::ThreeConv, Width::Low) => quat(&[32, 32, 32], &[128, 128, 8]),
        (Arch::ThreeConv, Width::High) => quat(&[96, 96, 96], &[256, 256, 8]),
    };
    match numeric {
        Numeric::Quaternion => (qc, ql),
        Numeric::RealEqualFeatures => (qc.iter().map(|w| 4 * w).collect(), ql.iter().map(|w| 4 * w).collect()),
        Numeric::RealEqualParams => match (arch, width) {
            (Arch::OneConv, Width::Low) => (vec![100], vec![133, 30]),
            (Arch::OneConv, Width::High) => (vec![340], vec![256, 32]),
            (Arch::TwoConv, Width::Low) => (vec![100, 100], vec![128, 96, 32]),
            (Arch::TwoConv, Width::High) => (vec![292, 292], vec![259, 256, 32]),
            (Arch::ThreeConv, Width::Low) => (vec![92, 88, 88], vec![96, 60, 24]),
            (Arch::ThreeConv, Width::High) => (vec![264, 264, 264], vec![124, 60, 24]),
        },
    }
}

/// `[Dropout, Conv, Act, Pool] × conv blocks, Flatten,
/// [Dropout, Linear, Act] × linear blocks, head`.
pub fn build_model(cfg: &ModelConfig, rng: &mut dyn RngCore) -> Result<Model> {
    cfg.validate()?;
    let (conv_w, lin_w) = cfg.widths();
    let dropout = Dropout::new(cfg.dropout)?;
    let pool = PoolSpec::new(cfg.pooling, cfg.pool_kernel, cfg.pool_stride)?;
    let quat = cfg.numeric.is_quaternion();
    let mut layers = Vec::new();
    let mut c_in = cfg.input_channels();
    for &c_out in &conv_w {
        layers.push(Layer::Dropout(dropout));
        layers.push(if quat {
            Layer::QConv1d(QConv1d::init(c_in, c_out, cfg.kernel, cfg.conv_stride, cfg.product_order, rng))
        } else {
            Layer::Conv1d(RealConv1d::init(c_in, c_out, cfg.kernel, cfg.conv_stride, rng))
        });
        layers.push(Layer::Activation(cfg.activation));
        layers.push(Layer::Pool(pool));
        c_in = c_out;
    }
    layers.push(Layer::Flatten);
    let mut features = c_in * cfg.sequence_lengths()?.last().copied().unwrap_or(cfg.length);
    for &width in &lin_w {
        layers.push(Layer::Dropout(dropout));
        layers.push(if quat {
            Layer::QLinear(QLinear::init(features, width, rng))
        } else {
            Layer::Linear(RealLinear::init(features, width, rng))
        });
        layers.push(Layer::Activation(cfg.activation));
        features = width;
    }
    if cfg.head {
        layers.push(if quat {
            Layer::Head(RealHead::init(features, cfg.classes, rng))
        } else {
            Layer::Linear(RealLinear::init(features, cfg.classes, rng))
        });
    }
    Ok(Model::new(layers))
}
