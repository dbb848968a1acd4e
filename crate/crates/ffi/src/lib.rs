//! C ABI over the `fastwave` engine.
//!
//! Every fallible function returns an [`FwStatus`]; on anything other than
//! `FW_STATUS_OK` a human-readable message is available from
//! [`fw_last_error_message`] on the same thread. Models are opaque
//! [`FwModel`] handles created by `fw_model_random` or `fw_model_load` and
//! released with `fw_model_free`. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufReader;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fastwave::config::receptive_field;
use fastwave::inference::{dequantize, generate, quantize, Parallelism};
use fastwave::matmul::estimate_cycles;
use fastwave::metrics::{log_spectral_distance, mse};
use fastwave::weights::{random_weights, read_weights, save_weights};
use fastwave::{Error, FxFormat, ModelConfig, NumberMode, ParallelismParams, SpectrogramParams, WeightSet};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    ShapeMismatch = 4,
    /// A file was readable but not a valid weight or config file.
    Format = 5,
    Io = 6,
    /// An internal panic was caught; the handle involved should be freed.
    Internal = 7,
}

/// A model configuration together with its weights.
pub struct FwModel {
    config: ModelConfig,
    weights: WeightSet,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FwModelInfo {
    pub num_blocks: usize,
    pub layers_per_block: usize,
    pub channels: usize,
    pub quant_levels: usize,
    pub sample_rate: u32,
    pub receptive_field: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FwCostEstimate {
    pub mac_count: u64,
    pub estimated_cycles: u64,
    pub weight_buffer_elems: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> FwStatus {
    match err {
        Error::InvalidFilterWidth(_)
        | Error::ZeroChannels
        | Error::ZeroLayers
        | Error::ZeroBlocks
        | Error::TooFewQuantLevels(_)
        | Error::InvalidConfig(_) => FwStatus::InvalidConfig,
        Error::ShapeMismatch(_) | Error::LengthMismatch { .. } | Error::ChannelMismatch { .. } => {
            FwStatus::ShapeMismatch
        }
        Error::MagicMismatch | Error::TruncatedFile | Error::Json(_) | Error::Wav(_) => FwStatus::Format,
        Error::Io(_) => FwStatus::Io,
        _ => FwStatus::InvalidArgument,
    }
}

struct Failure(FwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn fail(status: FwStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, recording any error or panic and translating it to a status.
fn guarded(f: impl FnOnce() -> Result<(), Failure>) -> FwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FwStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            FwStatus::Internal
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(FwStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FwStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn model_ref<'a>(model: *const FwModel) -> Result<&'a FwModel, Failure> {
    non_null(model, "model")?;
    Ok(&*model)
}

fn number_mode(total_bits: u32, int_bits: u32) -> Result<NumberMode, Failure> {
    if total_bits == 0 {
        Ok(NumberMode::Real)
    } else {
        Ok(NumberMode::Fixed(FxFormat::new(total_bits, int_bits)?))
    }
}

/// Message describing the most recent failure on this thread, or an empty
/// string after a successful call. The pointer stays valid until the next
/// `fw_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Static name of a status code, e.g. `"ok"` or `"shape-mismatch"`.
#[no_mangle]
pub extern "C" fn fw_status_name(status: FwStatus) -> *const c_char {
    let name: &'static CStr = match status {
        FwStatus::Ok => c"ok",
        FwStatus::NullPointer => c"null-pointer",
        FwStatus::InvalidArgument => c"invalid-argument",
        FwStatus::InvalidConfig => c"invalid-config",
        FwStatus::ShapeMismatch => c"shape-mismatch",
        FwStatus::Format => c"format",
        FwStatus::Io => c"io",
        FwStatus::Internal => c"internal",
    };
    name.as_ptr()
}

/// Creates a model with uniform random weights in `[-scale, scale]`.
/// Filter width is fixed at 2.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn fw_model_random(
    num_blocks: usize,
    layers_per_block: usize,
    channels: usize,
    quant_levels: usize,
    sample_rate: u32,
    seed: u64,
    scale: f32,
    out: *mut *mut FwModel,
) -> FwStatus {
    guarded(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let config = ModelConfig {
            sample_rate,
            ..ModelConfig::new(num_blocks, layers_per_block, channels).with_quant_levels(quant_levels)
        };
        config.validate()?;
        let weights = random_weights(&config, seed, scale)?;
        *out = Box::into_raw(Box::new(FwModel { config, weights }));
        Ok(())
    })
}

/// Loads a model from a weight file; the file header carries the config.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_model_load(path: *const c_char, out: *mut *mut FwModel) -> FwStatus {
    guarded(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let file = File::open(path).map_err(|e| fail(FwStatus::Io, format!("{path}: {e}")))?;
        let (config, weights) = read_weights(BufReader::new(file))?;
        *out = Box::into_raw(Box::new(FwModel { config, weights }));
        Ok(())
    })
}

/// Writes the model to a weight file readable by `fw_model_load`.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fw_model_save(model: *const FwModel, path: *const c_char) -> FwStatus {
    guarded(|| {
        let model = model_ref(model)?;
        let path = path_arg(path, "path")?;
        save_weights(path, &model.config, &model.weights)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not already freed.
#[no_mangle]
pub unsafe extern "C" fn fw_model_free(model: *mut FwModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_model_info(model: *const FwModel, out: *mut FwModelInfo) -> FwStatus {
    guarded(|| {
        let model = model_ref(model)?;
        non_null(out, "out")?;
        let cfg = &model.config;
        *out = FwModelInfo {
            num_blocks: cfg.num_blocks,
            layers_per_block: cfg.layers_per_block,
            channels: cfg.channels,
            quant_levels: cfg.quant_levels,
            sample_rate: cfg.sample_rate,
            receptive_field: receptive_field(cfg)?,
        };
        Ok(())
    })
}

/// Generates `n` samples autoregressively.
///
/// `total_bits == 0` selects 32-bit real arithmetic; otherwise the run uses
/// `fixed<total_bits, int_bits>`. `seed` (may be null when `seed_len` is 0)
/// is teacher-forced first. `out_samples` receives `n` values in `[-1, 1]`;
/// `out_bins`, if not null, receives the `n` quantization bins.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn fw_generate(
    model: *const FwModel,
    total_bits: u32,
    int_bits: u32,
    seed: *const f64,
    seed_len: usize,
    n: usize,
    out_samples: *mut f64,
    out_bins: *mut u32,
) -> FwStatus {
    guarded(|| {
        let model = model_ref(model)?;
        let seed = slice_arg(seed, seed_len, "seed")?;
        non_null(out_samples, "out_samples")?;
        let mode = number_mode(total_bits, int_bits)?;
        let parallelism = Parallelism::default_for(&model.config)?;
        let wf = generate(&model.config, &model.weights, seed, n, mode, &parallelism)?;
        std::slice::from_raw_parts_mut(out_samples, n).copy_from_slice(&wf.samples);
        if !out_bins.is_null() {
            for (dst, &b) in std::slice::from_raw_parts_mut(out_bins, n).iter_mut().zip(&wf.bins) {
                *dst = b as u32;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_quantize(x: f64, levels: usize, out: *mut usize) -> FwStatus {
    guarded(|| {
        non_null(out, "out")?;
        if levels < 2 {
            return Err(fail(FwStatus::InvalidArgument, "levels must be at least 2"));
        }
        *out = quantize(x, levels);
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_dequantize(bin: usize, levels: usize, out: *mut f64) -> FwStatus {
    guarded(|| {
        non_null(out, "out")?;
        *out = dequantize(bin, levels)?;
        Ok(())
    })
}

/// Analytic cost of one `rows x cols` matvec. `num_parallel_in` must be a
/// power of two.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn fw_estimate_cycles(
    rows: usize,
    cols: usize,
    num_parallel_out: usize,
    num_parallel_in: usize,
    out: *mut FwCostEstimate,
) -> FwStatus {
    guarded(|| {
        non_null(out, "out")?;
        let c = estimate_cycles(rows, cols, ParallelismParams::new(num_parallel_out, num_parallel_in)?)?;
        *out = FwCostEstimate {
            mac_count: c.mac_count,
            estimated_cycles: c.estimated_cycles,
            weight_buffer_elems: c.weight_buffer_elems,
        };
        Ok(())
    })
}

/// Mean squared error of two equal-length signals.
///
/// # Safety
/// `a` and `b` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_mse(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> FwStatus {
    guarded(|| {
        non_null(out, "out")?;
        *out = mse(slice_arg(a, len, "a")?, slice_arg(b, len, "b")?)?;
        Ok(())
    })
}

/// Log-spectral distance with a periodic Hann window and a 1e-10 floor.
///
/// # Safety
/// `a` and `b` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fw_lsd(
    a: *const f64,
    b: *const f64,
    len: usize,
    window_size: usize,
    hop: usize,
    out: *mut f64,
) -> FwStatus {
    guarded(|| {
        non_null(out, "out")?;
        let params = SpectrogramParams {
            window_size,
            hop,
            ..SpectrogramParams::default()
        };
        *out = log_spectral_distance(slice_arg(a, len, "a")?, slice_arg(b, len, "b")?, &params)?;
        Ok(())
    })
}
