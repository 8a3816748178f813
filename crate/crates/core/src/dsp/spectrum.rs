use crate::acoustic::PcmStream;
use crate::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

/// Strongest spectral bin of one analysis block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPeak {
    /// Block center, s.
    pub t: f64,
    /// Hz.
    pub peak_freq: f64,
}

/// Bin spacing `ΔF` (Hz) and block length `ΔT` (s) of an FFT analysis.
pub fn fft_resolution(fft_size: usize, sample_rate: f64) -> (f64, f64) {
    (sample_rate / fft_size as f64, fft_size as f64 / sample_rate)
}

/// Hann-windowed FFT peak picking in `search` (Hz) over blocks of
/// `fft_size` samples advanced by a quarter block. No interpolation
/// between bins.
pub fn fft_baseline(pcm: &PcmStream, fft_size: usize, search: (f64, f64)) -> Result<Vec<SpectralPeak>> {
    if !fft_size.is_power_of_two() || fft_size < 2 {
        return Err(Error::invariant("fft_size", format!("{fft_size} is not a power of two")));
    }
    let fs = pcm.sample_rate;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let window: Vec<f64> = (0..fft_size)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / fft_size as f64).cos())
        .collect();
    let bin_lo = ((search.0 / fs * fft_size as f64).floor() as usize).min(fft_size / 2);
    let bin_hi = ((search.1 / fs * fft_size as f64).ceil() as usize).min(fft_size / 2);
    let hop = (fft_size / 4).max(1);
    let mut buf = vec![Complex::default(); fft_size];
    let mut out = Vec::new();
    let mut start = 0;
    while start + fft_size <= pcm.len() {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(pcm.samples[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        let best = (bin_lo..=bin_hi)
            .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
            .unwrap_or(bin_lo);
        out.push(SpectralPeak {
            t: pcm.time(start) + (fft_size as f64 - 1.0) / 2.0 / fs,
            peak_freq: best as f64 * fs / fft_size as f64,
        });
        start += hop;
    }
    Ok(out)
}
