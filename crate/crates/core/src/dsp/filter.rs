use super::remez::{amplitude_response, remez, Band};
use crate::acoustic::PcmStream;
use crate::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Requested bandpass characteristics; see [`design_bandpass`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRequest {
    /// Hz.
    pub center: f64,
    /// Hz.
    pub pass_band: f64,
    /// Width of each transition band, Hz.
    pub transition_width: f64,
    pub stop_attenuation_db: f64,
    /// Allowed pass-band droop, dB.
    pub pass_ripple_db: f64,
    /// Odd tap count.
    pub taps: usize,
}

impl FilterRequest {
    pub fn new(center: f64) -> Self {
        Self {
            center,
            pass_band: 224.0,
            transition_width: 150.0,
            stop_attenuation_db: 60.0,
            pass_ripple_db: 0.5,
            taps: 1001,
        }
    }

    pub fn with_taps(mut self, taps: usize) -> Self {
        self.taps = taps;
        self
    }

    pub fn with_pass_band(mut self, pass_band: f64) -> Self {
        self.pass_band = pass_band;
        self
    }

    pub fn with_transition_width(mut self, width: f64) -> Self {
        self.transition_width = width;
        self
    }
}

/// A designed linear-phase bandpass filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub center: f64,
    pub pass_band: f64,
    pub transition_width: f64,
    pub stop_attenuation_db: f64,
    pub sample_rate: f64,
    /// Symmetric impulse response.
    pub coefficients: Vec<f64>,
}

impl FilterSpec {
    pub fn taps(&self) -> usize {
        self.coefficients.len()
    }

    /// Group delay, samples.
    pub fn group_delay(&self) -> usize {
        (self.taps() - 1) / 2
    }

    /// Zero-phase amplitude response at `freq` Hz.
    pub fn amplitude(&self, freq: f64) -> f64 {
        amplitude_response(&self.coefficients, freq / self.sample_rate)
    }

    /// Magnitude response at `freq` Hz, dB.
    pub fn magnitude_db(&self, freq: f64) -> f64 {
        20.0 * self.amplitude(freq).abs().log10()
    }

    /// Complex frequency response at `freq` Hz.
    pub fn response(&self, freq: f64) -> Complex<f64> {
        let w = -std::f64::consts::TAU * freq / self.sample_rate;
        self.coefficients
            .iter()
            .enumerate()
            .map(|(n, &h)| Complex::from_polar(h, w * n as f64))
            .sum()
    }

    pub fn pass_edges(&self) -> (f64, f64) {
        (self.center - self.pass_band / 2.0, self.center + self.pass_band / 2.0)
    }

    /// Worst stop-band gain over a dense scan, dB.
    pub fn measured_stop_db(&self) -> f64 {
        let (lo, hi) = self.pass_edges();
        let (s1, s2) = (lo - self.transition_width, hi + self.transition_width);
        let nyq = self.sample_rate / 2.0;
        let n = 16 * self.taps();
        (0..=n)
            .map(|i| nyq * i as f64 / n as f64)
            .filter(|&f| f <= s1 || f >= s2)
            .map(|f| self.magnitude_db(f))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Coefficients one per line.
    pub fn to_text(&self) -> String {
        self.coefficients.iter().map(|c| format!("{c:e}\n")).collect()
    }
}

/// Equiripple bandpass design meeting `req` at `sample_rate`.
pub fn design_bandpass(req: &FilterRequest, sample_rate: f64) -> Result<FilterSpec> {
    let nyq = sample_rate / 2.0;
    let lo = req.center - req.pass_band / 2.0;
    let hi = req.center + req.pass_band / 2.0;
    let s1 = lo - req.transition_width;
    let s2 = hi + req.transition_width;
    if !(req.pass_band > 0.0 && req.transition_width > 0.0) {
        return Err(Error::invariant("filter.pass_band_hz", "pass band and transition must be positive"));
    }
    if !(s1 > 0.0 && s2 < nyq) {
        return Err(Error::invariant(
            "filter.center_hz",
            format!("band {s1}..{s2} Hz does not fit in (0, {nyq})"),
        ));
    }
    let delta_pass = 1.0 - 10f64.powf(-req.pass_ripple_db / 20.0);
    // 1 dB of headroom against ripple peaks between grid points
    let delta_stop = 10f64.powf(-(req.stop_attenuation_db + 1.0) / 20.0);
    let w = delta_pass / delta_stop;
    let bands = [
        Band { low: 0.0, high: s1 / sample_rate, desired: 0.0, weight: w },
        Band { low: lo / sample_rate, high: hi / sample_rate, desired: 1.0, weight: 1.0 },
        Band { low: s2 / sample_rate, high: 0.5, desired: 0.0, weight: w },
    ];
    let design = remez(req.taps, &bands, 16)?;
    let spec = FilterSpec {
        center: req.center,
        pass_band: req.pass_band,
        transition_width: req.transition_width,
        stop_attenuation_db: req.stop_attenuation_db,
        sample_rate,
        coefficients: design.coefficients,
    };
    let stop = spec.measured_stop_db();
    if design.delta > delta_pass || stop > -req.stop_attenuation_db {
        return Err(Error::UnmeetableFilter(format!(
            "{} taps reach {:.1} dB stop band and {:.3} pass ripple; need {} dB and {:.3}",
            req.taps, -stop, design.delta, req.stop_attenuation_db, delta_pass
        )));
    }
    Ok(spec)
}

/// Full linear convolution of `x` with `h` by FFT overlap-add.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    if h.len() < 64 || x.len() < 64 {
        let mut y = vec![0.0; out_len];
        for (i, xi) in x.iter().enumerate() {
            for (j, hj) in h.iter().enumerate() {
                y[i + j] += xi * hj;
            }
        }
        return y;
    }
    let nfft = (4 * h.len()).next_power_of_two();
    let block = nfft - h.len() + 1;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);
    let mut hf: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    hf.resize(nfft, Complex::default());
    fwd.process(&mut hf);
    let mut y = vec![0.0; out_len];
    let mut buf = vec![Complex::default(); nfft];
    let scale = 1.0 / nfft as f64;
    for start in (0..x.len()).step_by(block) {
        let end = (start + block).min(x.len());
        buf.iter_mut().for_each(|c| *c = Complex::default());
        for (b, &v) in buf.iter_mut().zip(&x[start..end]) {
            b.re = v;
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&hf).for_each(|(b, h)| *b *= h);
        inv.process(&mut buf);
        let n = (end - start + h.len() - 1).min(out_len - start);
        for i in 0..n {
            y[start + i] += buf[i].re * scale;
        }
    }
    y
}

/// Filters `pcm`, returning the full convolution. The output's timestamps
/// are shifted back by the group delay so each sample lines up with the
/// input instant it represents.
pub fn apply_filter(pcm: &PcmStream, filter: &FilterSpec) -> Result<PcmStream> {
    if pcm.sample_rate != filter.sample_rate {
        return Err(Error::RateMismatch {
            expected: filter.sample_rate,
            found: pcm.sample_rate,
        });
    }
    let y = fft_convolve(&pcm.samples, &filter.coefficients);
    let start = pcm.start_time - filter.group_delay() as f64 / pcm.sample_rate;
    Ok(PcmStream::new(pcm.sample_rate, y, start))
}

/// Filters `pcm` keeping only outputs whose window lies fully inside the
/// input; the first output lines up with input sample `taps - 1 - delay`.
pub fn apply_filter_valid(pcm: &PcmStream, filter: &FilterSpec) -> Result<PcmStream> {
    let full = apply_filter(pcm, filter)?;
    let n = filter.taps();
    if pcm.len() < n {
        return Ok(PcmStream::new(pcm.sample_rate, Vec::new(), pcm.time(n - 1 - filter.group_delay())));
    }
    let samples = full.samples[n - 1..pcm.len()].to_vec();
    Ok(PcmStream::new(pcm.sample_rate, samples, full.time(n - 1)))
}
