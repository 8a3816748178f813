use crate::acoustic::PcmStream;
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PllConfig {
    /// Step size of the phase update.
    pub mu: f64,
    /// Cutoff of the single-pole loop filter on the mixer output, Hz.
    pub loop_cutoff_hz: f64,
    /// Cutoff of the smoother behind `lock_quality`, Hz.
    pub lock_cutoff_hz: f64,
    /// `lock_quality` below this counts as unlocked.
    pub lock_threshold: f64,
    /// Unlocked stretch that is reported as lock loss, s.
    pub lock_loss_window: f64,
    /// Shift output timestamps back by the ramp-tracking lag `2/μ` samples.
    pub compensate_lag: bool,
    /// Keep every n-th sample of the output track.
    pub decimation: usize,
}

impl Default for PllConfig {
    fn default() -> Self {
        Self {
            mu: 0.03,
            loop_cutoff_hz: 500.0,
            lock_cutoff_hz: 20.0,
            lock_threshold: 0.3,
            lock_loss_window: 0.05,
            compensate_lag: true,
            decimation: 1,
        }
    }
}

/// Loop state carried across blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PllState {
    /// Unwrapped phase estimate, rad.
    pub theta: f64,
    pub mu: f64,
    /// Loop filter output.
    pub lpf: f64,
    /// Smoothed in-phase correlation.
    pub lock: f64,
    /// Samples processed.
    pub k: u64,
    /// Largest `|θ[k+1] - θ[k]|` seen.
    pub max_step: f64,
    /// Largest `|LPF|` seen.
    pub max_lpf: f64,
}

/// Software phase-locked loop on one carrier.
#[derive(Debug, Clone)]
pub struct Pll {
    pub config: PllConfig,
    pub frequency: f64,
    pub sample_rate: f64,
    pub state: PllState,
    a_loop: f64,
    a_lock: f64,
    unlocked_since: Option<f64>,
    lock_lost: Vec<(f64, f64)>,
}

fn one_pole(cutoff: f64, fs: f64) -> f64 {
    1.0 - (-TAU * cutoff / fs).exp()
}

impl Pll {
    pub fn new(frequency: f64, sample_rate: f64, config: PllConfig) -> Self {
        Self {
            config,
            frequency,
            sample_rate,
            state: PllState {
                theta: 0.0,
                mu: config.mu,
                lpf: 0.0,
                lock: 0.0,
                k: 0,
                max_step: 0.0,
                max_lpf: 0.0,
            },
            a_loop: one_pole(config.loop_cutoff_hz, sample_rate),
            a_lock: one_pole(config.lock_cutoff_hz, sample_rate),
            unlocked_since: None,
            lock_lost: Vec::new(),
        }
    }

    pub fn theta(&self) -> f64 {
        self.state.theta
    }

    /// Timestamp correction for the ramp-tracking lag, s.
    pub fn lag(&self) -> f64 {
        if self.config.compensate_lag {
            2.0 / self.config.mu / self.sample_rate
        } else {
            0.0
        }
    }

    pub fn lock_quality(&self) -> f64 {
        self.state.lock.clamp(0.0, 1.0)
    }

    /// Consumes sample `x` taken at time `t`; returns `θ[k]`, the estimate
    /// valid at `t` before this sample is absorbed.
    pub fn step(&mut self, t: f64, x: f64) -> f64 {
        let s = &mut self.state;
        let cycles = self.frequency * t;
        let carrier = TAU * (cycles - cycles.floor());
        let (sn, cs) = (carrier + s.theta).sin_cos();
        s.lpf += self.a_loop * (x * sn - s.lpf);
        s.lock += self.a_lock * (2.0 * x * cs - s.lock);
        let theta = s.theta;
        let delta = self.config.mu * s.lpf;
        s.theta -= delta;
        s.k += 1;
        s.max_step = s.max_step.max(delta.abs());
        s.max_lpf = s.max_lpf.max(s.lpf.abs());

        let locked = s.lock >= self.config.lock_threshold;
        match (locked, self.unlocked_since) {
            (false, None) => self.unlocked_since = Some(t),
            (true, Some(t0)) => {
                if t - t0 >= self.config.lock_loss_window {
                    self.lock_lost.push((t0, t));
                }
                self.unlocked_since = None;
            }
            _ => {}
        }
        theta
    }

    /// Advances the phase open-loop over a gap of `dt` seconds at a constant
    /// frequency shift `f_shift`.
    pub fn coast(&mut self, dt: f64, f_shift: f64) {
        self.state.theta += TAU * f_shift * dt;
    }

    /// Closed intervals of lost lock, including one still open at `now`.
    pub fn lock_loss_intervals(&self, now: f64) -> Vec<(f64, f64)> {
        let mut v = self.lock_lost.clone();
        if let Some(t0) = self.unlocked_since {
            if now - t0 >= self.config.lock_loss_window {
                v.push((t0, now));
            }
        }
        v
    }
}

/// Phase track of one carrier plus kinematics derived from it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseTrack {
    pub anchor_id: u32,
    /// Carrier frequency, Hz.
    pub frequency: f64,
    /// Rate of the track samples, Hz.
    pub sample_rate: f64,
    pub t: Vec<f64>,
    /// Unwrapped PLL phase, rad.
    pub theta: Vec<f64>,
    /// Frequency shift, Hz.
    pub f_shift: Vec<f64>,
    /// Velocity toward the source, m/s.
    pub v_rel: Vec<f64>,
    /// Displacement toward the source since the first sample, m.
    pub s_rel: Vec<f64>,
    pub lock_quality: Vec<f64>,
    /// Intervals (s) during which the loop was unlocked.
    pub lock_lost: Vec<(f64, f64)>,
    /// Largest per-sample phase update.
    pub max_step: f64,
    /// Largest loop-filter magnitude; `max_step <= mu * max_lpf`.
    pub max_lpf: f64,
    pub mu: f64,
}

impl PhaseTrack {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Linear interpolation of `series` (aligned with `t`) at `time`,
    /// clamped at the ends.
    pub fn interpolate(&self, series: &[f64], time: f64) -> f64 {
        interpolate(&self.t, series, time)
    }

    pub fn write_csv<W: std::io::Write>(tracks: &[PhaseTrack], out: W) -> csv::Result<()> {
        Self::write_csv_every(tracks, 1, out)
    }

    /// Like [`PhaseTrack::write_csv`] but keeps only every `step`-th sample.
    pub fn write_csv_every<W: std::io::Write>(tracks: &[PhaseTrack], step: usize, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "anchor_id", "theta", "f_shift", "v_rel", "s_rel", "lock_quality"])?;
        for tr in tracks {
            for i in (0..tr.len()).step_by(step.max(1)) {
                let get = |v: &Vec<f64>| v.get(i).copied().unwrap_or(f64::NAN).to_string();
                w.write_record([
                    tr.t[i].to_string(),
                    tr.anchor_id.to_string(),
                    tr.theta[i].to_string(),
                    get(&tr.f_shift),
                    get(&tr.v_rel),
                    get(&tr.s_rel),
                    get(&tr.lock_quality),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Linear interpolation on sorted `xs`, clamped outside.
pub fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    if x <= xs[0] {
        return ys[0];
    }
    let n = xs.len();
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let u = (x - x0) / (x1 - x0);
    ys[i - 1] + u * (ys[i] - ys[i - 1])
}

/// Runs the loop over a gain-normalized stream. Only `t`, `theta` and
/// `lock_quality` are filled; see [`super::phase_to_kinematics`].
pub fn pll_track(pcm: &PcmStream, frequency: f64, config: &PllConfig) -> PhaseTrack {
    let mut pll = Pll::new(frequency, pcm.sample_rate, *config);
    run_pll(&mut pll, pcm, 0)
}

/// Continues `pll` over `pcm`, tagging the output with `anchor_id`.
pub fn run_pll(pll: &mut Pll, pcm: &PcmStream, anchor_id: u32) -> PhaseTrack {
    let dec = pll.config.decimation.max(1);
    let lag = pll.lag();
    let cap = pcm.len() / dec + 1;
    let mut track = PhaseTrack {
        anchor_id,
        frequency: pll.frequency,
        sample_rate: pcm.sample_rate / dec as f64,
        t: Vec::with_capacity(cap),
        theta: Vec::with_capacity(cap),
        lock_quality: Vec::with_capacity(cap),
        mu: pll.config.mu,
        ..Default::default()
    };
    for (i, &x) in pcm.samples.iter().enumerate() {
        let t = pcm.time(i);
        let theta = pll.step(t, x);
        if i % dec == 0 {
            track.t.push(t - lag);
            track.theta.push(theta);
            track.lock_quality.push(pll.lock_quality());
        }
    }
    let end = pcm.time(pcm.len());
    track.lock_lost = pll.lock_loss_intervals(end);
    track.max_step = pll.state.max_step;
    track.max_lpf = pll.state.max_lpf;
    track
}

/// Per-sample carrier phase change at radial speed `v_max`, rad.
pub fn required_slew(v_max: f64, frequency: f64, speed_of_sound: f64, sample_rate: f64) -> f64 {
    TAU * frequency * v_max / speed_of_sound / sample_rate
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, phase: f64, secs: f64) -> PcmStream {
        let n = (secs * 44100.0) as usize;
        let x = (0..n)
            .map(|i| (TAU * freq * i as f64 / 44100.0 + phase).cos())
            .collect();
        PcmStream::new(44100.0, x, 0.0)
    }

    #[test]
    fn zero_phase_fixed_point() {
        let tr = pll_track(&tone(19000.0, 0.0, 1.0), 19000.0, &PllConfig::default());
        // the first few hundred samples hold the start-up transient of the 2f ripple
        let worst = tr.theta[441..].iter().fold(0.0f64, |m, t| m.max(t.abs()));
        assert!(worst <= 0.01, "{worst}");
        assert!(tr.lock_quality[44100 / 2] > 0.9);
        assert!(tr.lock_lost.is_empty());
    }

    #[test]
    fn acquires_constant_offset() {
        let tr = pll_track(&tone(19000.0, 1.0, 0.5), 19000.0, &PllConfig::default());
        let last = *tr.theta.last().unwrap();
        let err = (last - 1.0 + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
        assert!(err.abs() < 0.01, "{last}");
    }

    #[test]
    fn tracks_frequency_offset() {
        let tr = pll_track(&tone(19050.0, 0.0, 1.0), 19000.0, &PllConfig::default());
        let n = tr.len();
        let slope = (tr.theta[n - 1] - tr.theta[n - 4411]) / (tr.t[n - 1] - tr.t[n - 4411]);
        assert!((slope / TAU - 50.0).abs() < 0.01, "{}", slope / TAU);
        // lag compensation: theta lines up with the true phase at the shifted time
        let i = n - 100;
        let truth = TAU * 50.0 * tr.t[i];
        let d = (tr.theta[i] - truth + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
        // residual is the sin() nonlinearity of the detector: asin(2w/mu) - 2w/mu
        assert!(d.abs() < 0.03, "{d}");
    }

    #[test]
    fn update_respects_mu_bound() {
        let cfg = PllConfig::default();
        let tr = pll_track(&tone(19100.0, 2.0, 0.5), 19000.0, &cfg);
        assert!(tr.max_step <= cfg.mu * tr.max_lpf + 1e-15);
        assert!(tr.max_step <= cfg.mu / 2.0 * 1.1, "{}", tr.max_step);
    }

    #[test]
    fn unreachable_slew_loses_lock() {
        // 150 Hz offset needs 0.021 rad per sample, more than mu/2
        let tr = pll_track(&tone(19150.0, 0.0, 0.5), 19000.0, &PllConfig::default());
        assert!(!tr.lock_lost.is_empty());
        assert!(tr.lock_quality[tr.len() - 1] < 0.3);
    }

    #[test]
    fn hand_speed_slew() {
        let s = required_slew(2.0, 19000.0, 340.0, 44100.0);
        assert!((s - 0.0159).abs() < 1e-4, "{s}");
        assert!(s < PllConfig::default().mu);
    }

    #[test]
    fn coasting_extrapolates_linearly() {
        let mut pll = Pll::new(19000.0, 44100.0, PllConfig::default());
        pll.coast(0.2, 50.0);
        assert!((pll.theta() - TAU * 10.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_clamps() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.0, 10.0, 30.0];
        assert_eq!(interpolate(&xs, &ys, -1.0), 0.0);
        assert_eq!(interpolate(&xs, &ys, 1.5), 20.0);
        assert_eq!(interpolate(&xs, &ys, 3.0), 30.0);
    }
}
