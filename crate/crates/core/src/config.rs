//! Network description: block/layer layout, dilation schedule, queue sizing.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::FxFormat;

/// Only width-2 causal kernels are supported: each layer combines the
/// current input with the one `dilation` steps back.
pub const SUPPORTED_FILTER_WIDTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_blocks: usize,
    pub layers_per_block: usize,
    pub filter_width: usize,
    /// Output channels of every convolution layer.
    pub channels: usize,
    /// Number of output bins (FC output size).
    pub quant_levels: usize,
    pub sample_rate: u32,
    /// Optional default number format, `"real"` or `"fixed<T,I>"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub number_format: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_blocks: 2,
            layers_per_block: 14,
            filter_width: SUPPORTED_FILTER_WIDTH,
            channels: 128,
            quant_levels: 256,
            sample_rate: 16_000,
            number_format: None,
        }
    }
}

impl ModelConfig {
    pub fn new(num_blocks: usize, layers_per_block: usize, channels: usize) -> Self {
        Self {
            num_blocks,
            layers_per_block,
            channels,
            ..Self::default()
        }
    }

    pub fn with_quant_levels(mut self, quant_levels: usize) -> Self {
        self.quant_levels = quant_levels;
        self
    }

    pub fn total_layers(&self) -> usize {
        self.num_blocks * self.layers_per_block
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    /// The number mode named by `number_format`, defaulting to real.
    pub fn number_mode(&self) -> Result<NumberMode> {
        match &self.number_format {
            Some(s) => s.parse(),
            None => Ok(NumberMode::Real),
        }
    }

    /// Checks every invariant and returns the per-layer layout, block-major.
    pub fn validate(&self) -> Result<Vec<LayerSpec>> {
        validate_config(self)
    }
}

/// Position and shape of one dilated convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    /// 1-based block number.
    pub block_index: usize,
    /// 1-based layer number within the block.
    pub layer_index: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub dilation: usize,
    pub queue_length: usize,
}

impl LayerSpec {
    /// Elements held by this layer's queue.
    pub fn queue_elements(&self) -> usize {
        self.queue_length * self.in_channels
    }
}

pub fn validate_config(cfg: &ModelConfig) -> Result<Vec<LayerSpec>> {
    if cfg.filter_width != SUPPORTED_FILTER_WIDTH {
        return Err(Error::InvalidFilterWidth(cfg.filter_width));
    }
    if cfg.num_blocks == 0 {
        return Err(Error::ZeroBlocks);
    }
    if cfg.layers_per_block == 0 {
        return Err(Error::ZeroLayers);
    }
    if cfg.channels == 0 {
        return Err(Error::ZeroChannels);
    }
    if cfg.quant_levels < 2 {
        return Err(Error::TooFewQuantLevels(cfg.quant_levels));
    }
    if cfg.layers_per_block > 40 {
        return Err(Error::InvalidConfig(format!(
            "{} layers per block overflows the dilation schedule",
            cfg.layers_per_block
        )));
    }
    if cfg.sample_rate == 0 {
        return Err(Error::InvalidConfig("sample_rate must be positive".into()));
    }

    let mut specs = Vec::with_capacity(cfg.total_layers());
    for block in 1..=cfg.num_blocks {
        for layer in 1..=cfg.layers_per_block {
            let dilation = 1usize << (layer - 1);
            let in_channels = if block == 1 && layer == 1 { 1 } else { cfg.channels };
            specs.push(LayerSpec {
                block_index: block,
                layer_index: layer,
                in_channels,
                out_channels: cfg.channels,
                dilation,
                queue_length: dilation,
            });
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueueMemory {
    /// Element count per layer, in layer order.
    pub per_layer: Vec<(LayerSpec, usize)>,
    pub total: usize,
}

pub fn estimate_queue_memory(cfg: &ModelConfig) -> Result<QueueMemory> {
    let per_layer: Vec<_> = validate_config(cfg)?
        .into_iter()
        .map(|spec| (spec, spec.queue_elements()))
        .collect();
    let total = per_layer.iter().map(|(_, n)| n).sum();
    Ok(QueueMemory { per_layer, total })
}

/// Number of input samples that influence one output sample:
/// `1 + sum(dilation * (filter_width - 1))` over all layers.
pub fn receptive_field(cfg: &ModelConfig) -> Result<usize> {
    let specs = validate_config(cfg)?;
    Ok(1 + specs
        .iter()
        .map(|s| s.dilation * (cfg.filter_width - 1))
        .sum::<usize>())
}

/// Arithmetic used for a generation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumberMode {
    /// 32-bit IEEE-754 reals.
    #[default]
    Real,
    Fixed(FxFormat),
}

impl fmt::Display for NumberMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumberMode::Real => f.write_str("real"),
            NumberMode::Fixed(fmt) => write!(f, "{fmt}"),
        }
    }
}

impl FromStr for NumberMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if trimmed.eq_ignore_ascii_case("real") {
            Ok(NumberMode::Real)
        } else {
            Ok(NumberMode::Fixed(trimmed.parse()?))
        }
    }
}
