//! Weight storage and the binary weight file.
//!
//! File layout (all little-endian):
//!
//! ```text
//! magic        8 bytes  "FWAVE001"
//! header       6 x u32  num_blocks, layers_per_block, filter_width,
//!                       channels, quant_levels, sample_rate
//! kernels      per layer (block-major, then layer order):
//!                K[n][0] then K[n][1], each OC x IC row-major f32
//! fc weight    channels x quant_levels row-major f32
//! fc bias      quant_levels f32
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{validate_config, LayerSpec, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const WEIGHT_MAGIC: &[u8; 8] = b"FWAVE001";

/// The two taps of a width-2 dilated kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPair {
    /// Applied to the input `dilation` steps in the past (the queue front).
    pub delayed: Matrix<f32>,
    /// Applied to the current input (previous layer's fresh output).
    pub current: Matrix<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub kernels: Vec<KernelPair>,
    /// `channels x quant_levels`; logits are `x * fc_weight + fc_bias`.
    pub fc_weight: Matrix<f32>,
    pub fc_bias: Vec<f32>,
}

impl WeightSet {
    /// All-zero weights shaped for `cfg`.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        Self::from_fn(cfg, |_| 0.0)
    }

    /// Fills every value in file order from `next`.
    fn from_fn(cfg: &ModelConfig, mut next: impl FnMut(Slot) -> f32) -> Result<Self> {
        let specs = validate_config(cfg)?;
        let kernels = specs
            .iter()
            .map(|s| KernelPair {
                delayed: Matrix::from_fn(s.out_channels, s.in_channels, |_, _| next(Slot::Kernel)),
                current: Matrix::from_fn(s.out_channels, s.in_channels, |_, _| next(Slot::Kernel)),
            })
            .collect();
        let last_out = specs.last().map(|s| s.out_channels).unwrap_or(cfg.channels);
        let fc_weight = Matrix::from_fn(last_out, cfg.quant_levels, |_, _| next(Slot::FcWeight));
        let fc_bias = (0..cfg.quant_levels).map(|_| next(Slot::FcBias)).collect();
        Ok(Self {
            kernels,
            fc_weight,
            fc_bias,
        })
    }

    /// Checks every shape against the layer layout of `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<Vec<LayerSpec>> {
        let specs = validate_config(cfg)?;
        if self.kernels.len() != specs.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} kernel pairs for {} layers",
                self.kernels.len(),
                specs.len()
            )));
        }
        for (i, (k, s)) in self.kernels.iter().zip(&specs).enumerate() {
            let want = (s.out_channels, s.in_channels);
            if k.delayed.shape() != want || k.current.shape() != want {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: kernels {:?}/{:?}, expected {want:?}",
                    k.delayed.shape(),
                    k.current.shape()
                )));
            }
        }
        let last_out = specs.last().map(|s| s.out_channels).unwrap_or(0);
        if self.fc_weight.shape() != (last_out, cfg.quant_levels) {
            return Err(Error::ShapeMismatch(format!(
                "fc weight {:?}, expected {:?}",
                self.fc_weight.shape(),
                (last_out, cfg.quant_levels)
            )));
        }
        if self.fc_bias.len() != cfg.quant_levels {
            return Err(Error::ShapeMismatch(format!(
                "fc bias has {} entries, expected {}",
                self.fc_bias.len(),
                cfg.quant_levels
            )));
        }
        Ok(specs)
    }

    /// Every value in file order.
    pub fn values(&self) -> impl Iterator<Item = f32> + '_ {
        self.kernels
            .iter()
            .flat_map(|k| k.delayed.as_slice().iter().chain(k.current.as_slice()))
            .chain(self.fc_weight.as_slice())
            .chain(&self.fc_bias)
            .copied()
    }
}

#[derive(Clone, Copy)]
enum Slot {
    Kernel,
    FcWeight,
    FcBias,
}

/// Deterministic weights uniform in `[-scale, scale]`.
pub fn random_weights(cfg: &ModelConfig, seed: u64, scale: f32) -> Result<WeightSet> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidConfig(format!("weight scale must be positive, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WeightSet::from_fn(cfg, |_| rng.random_range(-scale..=scale))
}

/// Deterministic integer-valued weights in `[-max_abs, max_abs]`.
///
/// Used with [`crate::arith::IntRing`] for exact-equality checks. The FC
/// bias stays zero.
pub fn lattice_weights(cfg: &ModelConfig, seed: u64, max_abs: i32) -> Result<WeightSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WeightSet::from_fn(cfg, |slot| match slot {
        Slot::FcBias => 0.0,
        _ => rng.random_range(-max_abs..=max_abs) as f32,
    })
}

pub fn write_weights<W: Write>(mut w: W, cfg: &ModelConfig, ws: &WeightSet) -> Result<()> {
    ws.check_shapes(cfg)?;
    w.write_all(WEIGHT_MAGIC)?;
    for field in [
        cfg.num_blocks,
        cfg.layers_per_block,
        cfg.filter_width,
        cfg.channels,
        cfg.quant_levels,
    ] {
        let v = u32::try_from(field)
            .map_err(|_| Error::InvalidConfig(format!("{field} does not fit in 32 bits")))?;
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&cfg.sample_rate.to_le_bytes())?;
    for v in ws.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_weights(path: impl AsRef<Path>, cfg: &ModelConfig, ws: &WeightSet) -> Result<()> {
    let file = File::create(path)?;
    write_weights(BufWriter::new(file), cfg, ws)
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => Error::TruncatedFile,
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a weight file, trusting its own header for the layout.
pub fn read_weights<R: Read>(mut r: R) -> Result<(ModelConfig, WeightSet)> {
    let mut magic = [0u8; 8];
    read_exact_or_truncated(&mut r, &mut magic)?;
    if &magic != WEIGHT_MAGIC {
        return Err(Error::MagicMismatch);
    }
    let mut header = [0usize; 5];
    for h in &mut header {
        *h = read_u32(&mut r)? as usize;
    }
    let sample_rate = read_u32(&mut r)?;
    let cfg = ModelConfig {
        num_blocks: header[0],
        layers_per_block: header[1],
        filter_width: header[2],
        channels: header[3],
        quant_levels: header[4],
        sample_rate,
        number_format: None,
    };
    validate_config(&cfg)?;

    let mut err = None;
    let mut r = BufReader::new(r);
    let ws = WeightSet::from_fn(&cfg, |_| {
        if err.is_some() {
            return 0.0;
        }
        let mut b = [0u8; 4];
        match read_exact_or_truncated(&mut r, &mut b) {
            Ok(()) => f32::from_le_bytes(b),
            Err(e) => {
                err = Some(e);
                0.0
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::ShapeMismatch("trailing bytes after fc bias".into()));
    }
    Ok((cfg, ws))
}

/// Loads a weight file whose layout must match `cfg`.
pub fn load_weights(path: impl AsRef<Path>, cfg: &ModelConfig) -> Result<WeightSet> {
    let (file_cfg, ws) = read_weights(File::open(path)?)?;
    let same_layout = file_cfg.num_blocks == cfg.num_blocks
        && file_cfg.layers_per_block == cfg.layers_per_block
        && file_cfg.filter_width == cfg.filter_width
        && file_cfg.channels == cfg.channels
        && file_cfg.quant_levels == cfg.quant_levels;
    if !same_layout {
        return Err(Error::ShapeMismatch(format!(
            "weight file describes {}x{}x{} with {} levels, config wants {}x{}x{} with {} levels",
            file_cfg.num_blocks,
            file_cfg.layers_per_block,
            file_cfg.channels,
            file_cfg.quant_levels,
            cfg.num_blocks,
            cfg.layers_per_block,
            cfg.channels,
            cfg.quant_levels
        )));
    }
    Ok(ws)
}
