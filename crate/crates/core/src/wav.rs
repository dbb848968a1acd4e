//! 16-bit mono PCM WAV output.

use std::path::Path;

use crate::error::Result;
use crate::inference::Waveform;

pub const BITS_PER_SAMPLE: u16 = 16;
pub const HEADER_LEN: u64 = 44;

/// `clamp(round(s * 32767), -32768, 32767)`
pub fn to_pcm16(s: f64) -> i16 {
    (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn wav_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: BITS_PER_SAMPLE,
        sample_format: hound::SampleFormat::Int,
    }
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let mut writer = hound::WavWriter::create(path, wav_spec(sample_rate))?;
    {
        let mut w = writer.get_i16_writer(samples.len() as u32);
        for &s in samples {
            w.write_sample(to_pcm16(s));
        }
        w.flush()?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn write_wav(path: impl AsRef<Path>, waveform: &Waveform) -> Result<()> {
    write_samples(path, &waveform.samples, waveform.sample_rate)
}

/// Reads any integer or float PCM file, averaging channels, scaled to
/// `[-1, 1]`. Returns the samples and the sample rate.
pub fn read_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = ((1i64 << (spec.bits_per_sample - 1)) - 1) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / frame.len() as f64)
        .collect();
    Ok((samples, spec.sample_rate))
}
