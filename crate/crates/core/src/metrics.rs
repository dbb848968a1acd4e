//! Waveform comparison: mean squared error and log-spectral distance.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hann taper.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, size: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; size],
            Window::Hann => (0..size)
                .map(|n| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / size as f64).cos()
                })
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" => Ok(Window::Hann),
            "rect" | "rectangular" => Ok(Window::Rectangular),
            other => Err(Error::InvalidSpectrogram(format!("unknown window {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramParams {
    pub window_size: usize,
    pub hop: usize,
    pub window: Window,
    /// Floor added to the power spectrum before taking the log.
    pub epsilon: f64,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        Self {
            window_size: 512,
            hop: 128,
            window: Window::Hann,
            epsilon: 1e-10,
        }
    }
}

impl SpectrogramParams {
    pub fn validate(&self) -> Result<()> {
        if !self.window_size.is_power_of_two() {
            return Err(Error::InvalidSpectrogram(format!(
                "window size {} is not a power of two",
                self.window_size
            )));
        }
        if self.hop == 0 || self.hop > self.window_size {
            return Err(Error::InvalidSpectrogram(format!(
                "hop {} outside 1..={}",
                self.hop, self.window_size
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidSpectrogram(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_size {
            0
        } else {
            (len - self.window_size) / self.hop + 1
        }
    }

    pub fn bin_count(&self) -> usize {
        self.window_size / 2 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub lsd: f64,
    pub n_samples: usize,
}

fn check_pair(x1: &[f64], x2: &[f64]) -> Result<()> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch {
            left: x1.len(),
            right: x2.len(),
        });
    }
    if x1.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

pub fn mse(x1: &[f64], x2: &[f64]) -> Result<f64> {
    check_pair(x1, x2)?;
    let sum: f64 = x1.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / x1.len() as f64)
}

/// Short-time Fourier transform without padding: one frame every `hop`
/// samples, `window_size / 2 + 1` bins per frame.
pub fn stft(x: &[f64], params: &SpectrogramParams) -> Result<Vec<Vec<Complex<f64>>>> {
    params.validate()?;
    if x.len() < params.window_size {
        return Err(Error::SignalTooShort {
            len: x.len(),
            window: params.window_size,
        });
    }
    let n = params.window_size;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let taper = params.window.coefficients(n);
    let mut scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
    let frames = params.frame_count(x.len());
    let mut out = Vec::with_capacity(frames);
    let mut buf = vec![Complex::default(); n];
    for f in 0..frames {
        let start = f * params.hop;
        for (b, (&s, &w)) in buf.iter_mut().zip(x[start..start + n].iter().zip(&taper)) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.push(buf[..params.bin_count()].to_vec());
    }
    Ok(out)
}

/// `log(|stft|^2 + epsilon)`, frames x bins.
pub fn log_power_spectrogram(x: &[f64], params: &SpectrogramParams) -> Result<Vec<Vec<f64>>> {
    Ok(stft(x, params)?
        .into_iter()
        .map(|frame| {
            frame
                .into_iter()
                .map(|c| (c.norm_sqr() + params.epsilon).ln())
                .collect()
        })
        .collect())
}

/// Standardizes all cells together to zero mean and unit variance. A
/// constant spectrogram becomes all zeros.
pub fn normalize(spec: &mut [Vec<f64>]) {
    let count = spec.iter().map(Vec::len).sum::<usize>();
    if count == 0 {
        return;
    }
    let mean = spec.iter().flatten().sum::<f64>() / count as f64;
    let var = spec.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    let std = var.sqrt();
    for v in spec.iter_mut().flatten() {
        *v = if std > 0.0 { (*v - mean) / std } else { 0.0 };
    }
}

pub fn normalized_log_spectrogram(x: &[f64], params: &SpectrogramParams) -> Result<Vec<Vec<f64>>> {
    let mut spec = log_power_spectrogram(x, params)?;
    normalize(&mut spec);
    Ok(spec)
}

/// RMSE between the globally standardized log power spectrograms.
pub fn log_spectral_distance(x1: &[f64], x2: &[f64], params: &SpectrogramParams) -> Result<f64> {
    check_pair(x1, x2)?;
    let a = normalized_log_spectrogram(x1, params)?;
    let b = normalized_log_spectrogram(x2, params)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (ra, rb) in a.iter().zip(&b) {
        for (va, vb) in ra.iter().zip(rb) {
            sum += (va - vb) * (va - vb);
            count += 1;
        }
    }
    Ok((sum / count as f64).sqrt())
}

pub fn compare(x1: &[f64], x2: &[f64], params: &SpectrogramParams) -> Result<MetricReport> {
    Ok(MetricReport {
        mse: mse(x1, x2)?,
        lsd: log_spectral_distance(x1, x2, params)?,
        n_samples: x1.len(),
    })
}

/// Writes the normalized log spectrogram as CSV, one frame per row.
pub fn write_spectrogram_csv<W: Write>(mut w: W, spec: &[Vec<f64>]) -> Result<()> {
    for row in spec {
        let line = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_spectrogram(x: &[f64], params: &SpectrogramParams, path: impl AsRef<Path>) -> Result<()> {
    let spec = normalized_log_spectrogram(x, params)?;
    let file = std::fs::File::create(path)?;
    write_spectrogram_csv(std::io::BufWriter::new(file), &spec)
}
