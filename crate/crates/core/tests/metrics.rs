use std::f64::consts::PI;

use fastwave::metrics::{
    export_spectrogram, log_spectral_distance, mse, normalized_log_spectrogram, stft,
};
use fastwave::{SpectrogramParams, Window};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(N^2) DFT of one windowed frame, first N/2+1 bins.
fn naive_dft(frame: &[f64]) -> Vec<(f64, f64)> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in frame.iter().enumerate() {
                let angle = -2.0 * PI * (k * t) as f64 / n as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            (re, im)
        })
        .collect()
}

fn params(window_size: usize, hop: usize, window: Window) -> SpectrogramParams {
    SpectrogramParams {
        window_size,
        hop,
        window,
        epsilon: 1e-10,
    }
}

#[test]
fn fft_matches_naive_dft() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    for window in [Window::Hann, Window::Rectangular] {
        let p = params(256, 100, window);
        let taper = window.coefficients(256);
        let frames = stft(&x, &p).unwrap();
        assert_eq!(frames.len(), (1000 - 256) / 100 + 1);
        for (f, frame) in frames.iter().enumerate() {
            let windowed: Vec<f64> = x[f * 100..f * 100 + 256].iter().zip(&taper).map(|(a, w)| a * w).collect();
            let oracle = naive_dft(&windowed);
            assert_eq!(frame.len(), 129);
            for (c, (re, im)) in frame.iter().zip(oracle) {
                let scale = (re * re + im * im).sqrt().max(1.0);
                assert!((c.re - re).abs() <= 1e-6 * scale && (c.im - im).abs() <= 1e-6 * scale);
            }
        }
    }
}

#[test]
fn bin_centred_sinusoid_has_one_peak() {
    let n = 128;
    let k0 = 9;
    let x: Vec<f64> = (0..4 * n).map(|t| (2.0 * PI * k0 as f64 * t as f64 / n as f64).cos()).collect();
    let frames = stft(&x, &params(n, n, Window::Rectangular)).unwrap();
    for frame in frames {
        let mags: Vec<f64> = frame.iter().map(|c| c.norm()).collect();
        assert!((mags[k0] - n as f64 / 2.0).abs() < 1e-9);
        for (k, &m) in mags.iter().enumerate() {
            if k != k0 {
                assert!(m < 1e-9, "bin {k} has {m}");
            }
        }
    }
}

#[test]
fn parseval_per_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x: Vec<f64> = (0..2048).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = 512;
    let p = params(n, 256, Window::Rectangular);
    for (f, frame) in stft(&x, &p).unwrap().iter().enumerate() {
        let seg = &x[f * 256..f * 256 + n];
        let energy: f64 = seg.iter().map(|v| v * v).sum();
        // One-sided spectrum: interior bins stand for two conjugate bins.
        let spectral: f64 = frame
            .iter()
            .enumerate()
            .map(|(k, c)| if k == 0 || k == n / 2 { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
            .sum();
        assert!((spectral - n as f64 * energy).abs() <= 1e-6 * spectral);
    }
}

#[test]
fn lsd_ignores_global_gain() {
    let x: Vec<f64> = (0..16_000).map(|t| 0.4 * (2.0 * PI * 440.0 * t as f64 / 16_000.0).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();

    // Rectangular leakage keeps every cell far above the epsilon floor.
    let rect = SpectrogramParams { window: Window::Rectangular, ..Default::default() };
    let lsd = log_spectral_distance(&x, &y, &rect).unwrap();
    assert!(lsd < 0.01, "rect: {lsd}");

    // Hann sidelobes decay fast enough to reach 1e-10, so the floor itself
    // breaks the invariance there; a negligible floor restores it.
    let hann = SpectrogramParams { epsilon: 1e-30, ..Default::default() };
    let lsd = log_spectral_distance(&x, &y, &hann).unwrap();
    assert!(lsd < 0.01, "hann: {lsd}");
}

#[test]
fn spectrogram_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spec.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x: Vec<f64> = (0..3000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p = SpectrogramParams::default();
    export_spectrogram(&x, &p, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let parsed: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let direct = normalized_log_spectrogram(&x, &p).unwrap();
    assert_eq!(parsed.len(), p.frame_count(3000));
    assert_eq!(parsed[0].len(), 257);
    for (a, b) in parsed.iter().flatten().zip(direct.iter().flatten()) {
        assert!((a - b).abs() <= 1e-9);
    }

    let zero_path = dir.path().join("zero.csv");
    export_spectrogram(&[0.0; 1024], &p, &zero_path).unwrap();
    let text = std::fs::read_to_string(&zero_path).unwrap();
    let values: Vec<&str> = text.lines().flat_map(|l| l.split(',')).collect();
    assert_eq!(text.lines().count(), 5);
    assert!(values.iter().all(|v| *v == values[0]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mse_symmetric_nonnegative(a in prop::collection::vec(-1.0f64..1.0, 1..200), shift in -0.5f64..0.5) {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let ab = mse(&a, &b).unwrap();
        prop_assert_eq!(ab, mse(&b, &a).unwrap());
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
        if shift != 0.0 {
            prop_assert!(ab > 0.0);
        }
    }

    #[test]
    fn lsd_symmetric_nonnegative(seed in any::<u64>(), gain in 0.1f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..1200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..1200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = SpectrogramParams::default();
        let ab = log_spectral_distance(&a, &b, &p).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - log_spectral_distance(&b, &a, &p).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = a.iter().map(|v| v * gain).collect();
        prop_assert!(log_spectral_distance(&a, &scaled, &p).unwrap() < 0.01);
    }
}
