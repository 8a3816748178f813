//! Bandpass filtering, gain control, phase tracking and phase-derived kinematics.

mod agc;
mod filter;
mod kinematics;
mod pll;
mod remez;
mod spectrum;

pub use agc::{agc, Agc, AgcConfig, AgcOutput, EnvelopeEstimator};
pub use filter::{
    apply_filter, apply_filter_valid, design_bandpass, fft_convolve, FilterRequest, FilterSpec,
};
pub use kinematics::{centered_slope, phase_to_kinematics};
pub use pll::{interpolate, pll_track, required_slew, run_pll, PhaseTrack, Pll, PllConfig, PllState};
pub use remez::{amplitude_response, remez, Band, RemezDesign};
pub use spectrum::{fft_baseline, fft_resolution, SpectralPeak};

use crate::acoustic::PcmStream;
use crate::scenario::{AnchorNode, WorldConfig};
use crate::{Error, Result};
use serde::Deserialize;

/// Settings for the per-channel front-end.
#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    pub taps: usize,
    /// Hz.
    pub pass_band: f64,
    /// Hz.
    pub transition_width: f64,
    pub stop_attenuation_db: f64,
    pub agc: AgcConfig,
    pub pll: PllConfig,
    /// Differentiation window for `f_shift`, audio samples.
    pub smooth_window: usize,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            taps: 1001,
            pass_band: 224.0,
            transition_width: 150.0,
            stop_attenuation_db: 60.0,
            agc: AgcConfig::default(),
            pll: PllConfig::default(),
            smooth_window: 441,
        }
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDsp {
    filter_taps: Option<usize>,
    pass_band_hz: Option<f64>,
    transition_width_hz: Option<f64>,
    stop_attenuation_db: Option<f64>,
    agc_alpha: Option<f64>,
    agc_window_samples: Option<usize>,
    agc_estimator: Option<String>,
    agc_max_gain: Option<f64>,
    pll_mu: Option<f64>,
    pll_loop_cutoff_hz: Option<f64>,
    pll_lock_threshold: Option<f64>,
    pll_compensate_lag: Option<bool>,
    smooth_window_samples: Option<usize>,
}

impl DspConfig {
    /// Reads the `[dsp]` table of a scenario; missing keys keep defaults.
    pub fn from_table(table: &toml::Table) -> Result<Self> {
        let raw: RawDsp = table
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::invariant("dsp", e.message().trim()))?;
        let mut c = DspConfig::default();
        c.taps = raw.filter_taps.unwrap_or(c.taps);
        c.pass_band = raw.pass_band_hz.unwrap_or(c.pass_band);
        c.transition_width = raw.transition_width_hz.unwrap_or(c.transition_width);
        c.stop_attenuation_db = raw.stop_attenuation_db.unwrap_or(c.stop_attenuation_db);
        c.agc.alpha = raw.agc_alpha.unwrap_or(c.agc.alpha);
        c.agc.window = raw.agc_window_samples.unwrap_or(c.agc.window);
        c.agc.max_gain = raw.agc_max_gain.unwrap_or(c.agc.max_gain);
        if let Some(e) = raw.agc_estimator {
            c.agc.estimator = match e.as_str() {
                "peak_from_mean" => EnvelopeEstimator::PeakFromMean,
                "verbatim" => EnvelopeEstimator::Verbatim,
                other => {
                    return Err(Error::invariant("dsp.agc_estimator", format!("unknown estimator `{other}`")))
                }
            };
        }
        c.pll.mu = raw.pll_mu.unwrap_or(c.pll.mu);
        c.pll.loop_cutoff_hz = raw.pll_loop_cutoff_hz.unwrap_or(c.pll.loop_cutoff_hz);
        c.pll.lock_threshold = raw.pll_lock_threshold.unwrap_or(c.pll.lock_threshold);
        c.pll.compensate_lag = raw.pll_compensate_lag.unwrap_or(c.pll.compensate_lag);
        c.smooth_window = raw.smooth_window_samples.unwrap_or(c.smooth_window);
        if !(c.pll.mu > 0.0 && c.pll.mu < 1.0) {
            return Err(Error::invariant("dsp.pll_mu", "must be in (0, 1)"));
        }
        if !(c.agc.alpha > 0.0 && c.agc.alpha <= 1.0) {
            return Err(Error::invariant("dsp.agc_alpha", "must be in (0, 1]"));
        }
        Ok(c)
    }

    pub fn filter_request(&self, center: f64) -> FilterRequest {
        FilterRequest {
            center,
            pass_band: self.pass_band,
            transition_width: self.transition_width,
            stop_attenuation_db: self.stop_attenuation_db,
            pass_ripple_db: 0.5,
            taps: self.taps,
        }
    }
}

/// Bandpass, gain control, phase tracking and kinematics for one anchor.
pub fn process_channel(
    pcm: &PcmStream,
    anchor: &AnchorNode,
    filter: &FilterSpec,
    world: &WorldConfig,
    config: &DspConfig,
) -> Result<PhaseTrack> {
    let filtered = apply_filter(pcm, filter)?;
    let normalized = agc(&filtered, &config.agc);
    let mut pll = Pll::new(anchor.frequency, pcm.sample_rate, config.pll);
    let mut track = run_pll(&mut pll, &normalized.pcm, anchor.id);
    phase_to_kinematics(&mut track, world, config.smooth_window);
    Ok(track)
}
