use crate::acoustic::PcmStream;
use std::f64::consts::FRAC_PI_2;

/// Coarse envelope estimate `A_r` from recent rectified samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeEstimator {
    /// Window mean of `|r_b|` scaled by π/2, the peak of a sinusoid with
    /// that mean.
    PeakFromMean,
    /// Sum of the last 11 `|r_b|` divided by 7, as originally published.
    /// The factor 11/7 is close to π/2, so this is nearly the same estimate.
    Verbatim,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgcConfig {
    /// Update weight `A_α` of the log-gain recursion.
    pub alpha: f64,
    /// Envelope window, samples (ignored by [`EnvelopeEstimator::Verbatim`]).
    pub window: usize,
    pub estimator: EnvelopeEstimator,
    /// Upper bound on the gain; the lower bound is its reciprocal.
    pub max_gain: f64,
}

impl Default for AgcConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            window: 441,
            estimator: EnvelopeEstimator::PeakFromMean,
            max_gain: 1e4,
        }
    }
}

/// Streaming gain control `log A1[k] = (1-α) log A1[k-1] - α log A_r[k-1]`.
#[derive(Debug, Clone)]
pub struct Agc {
    config: AgcConfig,
    log_gain: f64,
    prev_envelope: Option<f64>,
    ring: Vec<f64>,
    head: usize,
    filled: usize,
    /// Samples at which the gain hit its clamp.
    pub clamped: usize,
}

impl Agc {
    pub fn new(config: AgcConfig) -> Self {
        let window = match config.estimator {
            EnvelopeEstimator::PeakFromMean => config.window.max(1),
            EnvelopeEstimator::Verbatim => 11,
        };
        Self {
            config,
            log_gain: 0.0,
            prev_envelope: None,
            ring: vec![0.0; window],
            head: 0,
            filled: 0,
            clamped: 0,
        }
    }

    pub fn gain(&self) -> f64 {
        self.log_gain.exp()
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let a = self.config.alpha;
        if let Some(env) = self.prev_envelope {
            let limit = self.config.max_gain.ln();
            let target = if env > 0.0 { -env.ln() } else { f64::INFINITY };
            let next = (1.0 - a) * self.log_gain + a * target;
            if next > limit || next < -limit || next.is_nan() {
                self.clamped += 1;
            }
            self.log_gain = if next.is_nan() { limit } else { next.clamp(-limit, limit) };
        }
        let out = self.log_gain.exp() * x;

        self.ring[self.head] = x.abs();
        self.head = (self.head + 1) % self.ring.len();
        self.filled = (self.filled + 1).min(self.ring.len());
        let sum: f64 = self.ring.iter().sum();
        self.prev_envelope = Some(match self.config.estimator {
            EnvelopeEstimator::PeakFromMean => FRAC_PI_2 * sum / self.filled as f64,
            EnvelopeEstimator::Verbatim => sum / 7.0 * 11.0 / self.filled as f64,
        });
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgcOutput {
    pub pcm: PcmStream,
    /// Samples at which the gain was clamped.
    pub clamped: usize,
}

impl AgcOutput {
    /// True when more than half of the stream ran at the gain limit.
    pub fn degraded(&self) -> bool {
        self.clamped * 2 > self.pcm.len()
    }
}

/// Normalizes a band-limited stream toward unit envelope.
pub fn agc(pcm: &PcmStream, config: &AgcConfig) -> AgcOutput {
    let mut state = Agc::new(*config);
    let samples = pcm.samples.iter().map(|&x| state.process(x)).collect();
    AgcOutput {
        pcm: PcmStream::new(pcm.sample_rate, samples, pcm.start_time),
        clamped: state.clamped,
    }
}
