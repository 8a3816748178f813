use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{config_digest, csv_error, random_angle, trial_rng, trial_stream, ExperimentKind, ExperimentReport, NoiseProfile, TrialRecord};
use crate::acoustic::{synthesize_scene, AmplitudeModel, PcmStream};
use crate::dsp::{apply_filter, apply_filter_valid, design_bandpass, Agc, DspConfig, FilterRequest, FilterSpec, Pll};
use crate::localization::{write_fix_csv, PositionFix, TrackConfig, Tracker};
use crate::scenario::{gen_trajectory, AnchorNode, PatternKind, Scenario, Trajectory};
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingSettings {
    /// Fraction of each frame that is processed, `(0, 1]`.
    pub duty_cycle: f64,
    /// Tracker update period, s.
    pub frame: f64,
    /// Distance between the true start and the fix the tracker starts
    /// from, m; the direction is random.
    pub initial_error: f64,
    pub track: TrackConfig,
}

impl Default for TrackingSettings {
    fn default() -> Self {
        Self {
            duty_cycle: 1.0,
            frame: 0.25,
            initial_error: 0.0,
            track: TrackConfig::default(),
        }
    }
}

impl TrackingSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(Error::invariant("experiment.duty_cycle", "must be in (0, 1]"));
        }
        if !(self.frame > 0.0) {
            return Err(Error::invariant("experiment.frame_s", "must be positive"));
        }
        if !(self.initial_error >= 0.0) {
            return Err(Error::invariant("experiment.initial_error_m", "must be non-negative"));
        }
        Ok(())
    }
}

/// Phase of one anchor at the end of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Capture {
    t: f64,
    theta: f64,
    locked: bool,
}

struct AnchorPhases {
    captures: Vec<Option<Capture>>,
    lock_lost: Vec<(f64, f64)>,
}

/// Least-squares slope of `theta` against `t`, in Hz.
fn frequency_estimate(t: &[f64], theta: &[f64]) -> f64 {
    let n = t.len();
    if n < 2 {
        return 0.0;
    }
    let tm = t.iter().sum::<f64>() / n as f64;
    let ym = theta.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in t.iter().zip(theta) {
        sxy += (x - tm) * (y - ym);
        sxx += (x - tm) * (x - tm);
    }
    if sxx > 0.0 {
        sxy / sxx / TAU
    } else {
        0.0
    }
}

/// Runs gain control and the loop over the whole recording, reading the
/// phase at the first sample at or after each of `targets`.
fn continuous_phases(pcm: &PcmStream, anchor: &AnchorNode, filter: &FilterSpec, dsp: &DspConfig, targets: &[f64]) -> Result<AnchorPhases> {
    let filtered = apply_filter(pcm, filter)?;
    let mut agc = Agc::new(dsp.agc);
    let mut pll = Pll::new(anchor.frequency, pcm.sample_rate, dsp.pll);
    let lag = pll.lag();
    let mut captures = vec![None; targets.len()];
    let mut next = 0;
    let mut end = filtered.start_time;
    for (i, &x) in filtered.samples.iter().enumerate() {
        let t = filtered.time(i);
        let theta = pll.step(t, agc.process(x));
        end = t;
        while next < targets.len() && t - lag >= targets[next] {
            captures[next] = Some(Capture {
                t: t - lag,
                theta,
                locked: pll.lock_quality() >= dsp.pll.lock_threshold,
            });
            next += 1;
        }
    }
    Ok(AnchorPhases {
        captures,
        lock_lost: pll.lock_loss_intervals(end),
    })
}

/// Processes only the leading `duty` fraction of each frame: each chunk is
/// filtered on its own, and the loop phase is carried across the gap at
/// the frequency measured at the end of the previous chunk.
fn duty_cycled_phases(
    pcm: &PcmStream,
    anchor: &AnchorNode,
    filter: &FilterSpec,
    dsp: &DspConfig,
    frame: f64,
    duty: f64,
    frames: usize,
) -> Result<AnchorPhases> {
    let fs = pcm.sample_rate;
    let mut agc = Agc::new(dsp.agc);
    let mut pll = Pll::new(anchor.frequency, fs, dsp.pll);
    let lag = pll.lag();
    let mut captures = Vec::with_capacity(frames);
    let mut resume: Option<(f64, f64)> = None;
    let mut end = 0.0;
    let chunk_len = (duty * frame * fs).round() as usize;
    for k in 0..frames {
        let s0 = (k as f64 * frame * fs).round() as usize;
        let s1 = (s0 + chunk_len).min(pcm.len());
        if s0 >= s1 {
            captures.push(None);
            continue;
        }
        let chunk = PcmStream::new(fs, pcm.samples[s0..s1].to_vec(), pcm.time(s0));
        let valid = apply_filter_valid(&chunk, filter)?;
        if valid.is_empty() {
            captures.push(None);
            continue;
        }
        if let Some((t_next, f_shift)) = resume {
            pll.coast(valid.start_time - t_next, f_shift);
        }
        let mut ts = Vec::with_capacity(valid.len());
        let mut thetas = Vec::with_capacity(valid.len());
        for (i, &x) in valid.samples.iter().enumerate() {
            let t = valid.time(i);
            ts.push(t);
            thetas.push(pll.step(t, agc.process(x)));
        }
        let last = valid.len() - 1;
        end = ts[last];
        captures.push(Some(Capture {
            t: ts[last] - lag,
            theta: thetas[last],
            locked: pll.lock_quality() >= dsp.pll.lock_threshold,
        }));
        // the state now holds the phase for the sample after the chunk
        let half = valid.len() / 2;
        resume = Some((ts[last] + 1.0 / fs, frequency_estimate(&ts[half..], &thetas[half..])));
    }
    Ok(AnchorPhases {
        captures,
        lock_lost: pll.lock_loss_intervals(end),
    })
}

/// Filter for chunks of `chunk_len` samples: at most half a chunk long so
/// that half of every chunk survives as valid output. A shortened filter
/// gets a proportionally wider transition band.
fn chunk_filter_request(dsp: &DspConfig, center: f64, chunk_len: usize) -> FilterRequest {
    let req = dsp.filter_request(center);
    let limit = (chunk_len / 2).saturating_sub(1 - (chunk_len / 2) % 2).max(3);
    if dsp.taps <= limit {
        return req;
    }
    let widen = dsp.taps as f64 / limit as f64;
    req.with_taps(limit).with_transition_width(dsp.transition_width * widen)
}

/// Fix stream and ground truth of one walk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingOutcome {
    pub report: ExperimentReport,
    pub fixes: Vec<PositionFix>,
    pub truth: Vec<Vec2>,
    /// `(anchor id, start, end)` of every lock loss, s.
    pub lock_loss: Vec<(u32, f64, f64)>,
    pub duty_cycle: f64,
}

impl TrackingOutcome {
    pub fn final_error(&self) -> Option<f64> {
        let (f, t) = (self.fixes.last()?, self.truth.last()?);
        Some((f.position - t).norm())
    }

    /// CSV rows `t,x,y,true_x,true_y,error_m,n_locked,dead_reckoned`.
    pub fn write_track_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "true_x", "true_y", "error_m", "n_locked", "dead_reckoned"])?;
        for (f, p) in self.fixes.iter().zip(&self.truth) {
            w.write_record([
                format!("{:.6}", f.t),
                format!("{:.6}", f.position.x),
                format!("{:.6}", f.position.y),
                format!("{:.6}", p.x),
                format!("{:.6}", p.y),
                format!("{:.6}", (f.position - p).norm()),
                f.n_locked.to_string(),
                f.dead_reckoned.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV rows `anchor_id,start_s,end_s`.
    pub fn write_lock_loss_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["anchor_id", "start_s", "end_s"])?;
        for (id, a, b) in &self.lock_loss {
            w.write_record([id.to_string(), format!("{a:.6}"), format!("{b:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Report files plus `tracking_fixes.csv` (the fix stream),
    /// `tracking_truth.csv` (fixes against ground truth) and
    /// `tracking_lock_loss.csv`.
    pub fn emit(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = super::emit_report(&self.report, dir)?;
        let create = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path).map(|f| (path.clone(), f)).map_err(|e| Error::io(&path, e))
        };
        let (fixes, file) = create("tracking_fixes.csv")?;
        write_fix_csv(&self.fixes, file).map_err(|e| csv_error(&fixes, e))?;
        let (truth, file) = create("tracking_truth.csv")?;
        self.write_track_csv(file).map_err(|e| csv_error(&truth, e))?;
        let (lost, file) = create("tracking_lock_loss.csv")?;
        self.write_lock_loss_csv(file).map_err(|e| csv_error(&lost, e))?;
        files.extend([fixes, truth, lost]);
        Ok(files)
    }
}

fn truth_at(traj: &Trajectory, t: f64) -> Vec2 {
    traj.motion().position(t).xy()
}

/// Walks the scenario's path once: synthesizes the mixed recording,
/// extracts per-anchor phases at the end of every frame (optionally
/// duty-cycled), then folds the tracker over them from a start fix offset
/// by `initial_error`. Each frame is one report row, error in metres.
pub fn run_tracking_experiment(
    scenario: &Scenario,
    settings: &TrackingSettings,
    noise: &NoiseProfile,
    seed: u64,
) -> Result<TrackingOutcome> {
    let mut out = run_tracking_sweep(scenario, settings, &[settings.duty_cycle], noise, seed)?;
    Ok(out.remove(0))
}

/// Tracks one synthesized walk once per duty cycle; the recording is shared
/// so the runs differ only in processing.
pub fn run_tracking_sweep(
    scenario: &Scenario,
    settings: &TrackingSettings,
    duty_cycles: &[f64],
    noise: &NoiseProfile,
    seed: u64,
) -> Result<Vec<TrackingOutcome>> {
    settings.validate()?;
    if scenario.motion.pattern != PatternKind::WalkPath {
        return Err(Error::invariant("motion.pattern", "tracking needs a walk path"));
    }
    if scenario.anchors.len() < settings.track.min_locked {
        return Err(Error::InsufficientData(format!(
            "tracking needs at least {} anchors, have {}",
            settings.track.min_locked,
            scenario.anchors.len()
        )));
    }
    let world = &scenario.world;
    let dsp = DspConfig::from_table(&scenario.dsp)?;
    let mut rng = trial_rng(seed, ExperimentKind::Tracking, 0);
    let traj = gen_trajectory(&scenario.motion, world)?;
    let loudest = scenario.anchors.iter().map(|a| a.amplitude_at_1m()).fold(0.0, f64::max);
    let noise_dbfs = noise.noise_dbfs(loudest, dsp.pass_band, world.audio_sample_rate);
    let pcm = synthesize_scene(&traj, &scenario.anchors, world, noise_dbfs, AmplitudeModel::default(), &mut rng)?;
    let offset_angle = random_angle(&mut rng);
    duty_cycles
        .iter()
        .map(|&duty| {
            let settings = TrackingSettings {
                duty_cycle: duty,
                ..*settings
            };
            settings.validate()?;
            track_recording(scenario, &settings, &dsp, &traj, &pcm, offset_angle, seed)
        })
        .collect()
}

fn track_recording(
    scenario: &Scenario,
    settings: &TrackingSettings,
    dsp: &DspConfig,
    traj: &Trajectory,
    pcm: &PcmStream,
    offset_angle: f64,
    seed: u64,
) -> Result<TrackingOutcome> {
    let world = &scenario.world;
    let frame = settings.frame;
    let frames = (traj.duration() / frame).floor() as usize;
    let chunk_len = if settings.duty_cycle >= 1.0 {
        usize::MAX
    } else {
        (settings.duty_cycle * frame * world.audio_sample_rate).round() as usize
    };
    let targets: Vec<f64> = (0..frames).map(|k| k as f64 * frame).collect();
    let phases: Vec<AnchorPhases> = scenario
        .anchors
        .par_iter()
        .map(|a| {
            let filter = design_bandpass(&chunk_filter_request(dsp, a.frequency, chunk_len), world.audio_sample_rate)?;
            if settings.duty_cycle >= 1.0 {
                continuous_phases(pcm, a, &filter, dsp, &targets)
            } else {
                duty_cycled_phases(pcm, a, &filter, dsp, frame, settings.duty_cycle, frames)
            }
        })
        .collect::<Result<_>>()?;

    // frame time: the latest capture across anchors, or the nominal one
    let frame_time = |k: usize| {
        phases
            .iter()
            .filter_map(|p| p.captures[k].map(|c| c.t))
            .fold(f64::NAN, f64::max)
    };
    let observed = |k: usize| -> Vec<Option<f64>> {
        phases
            .iter()
            .map(|p| p.captures[k].filter(|c| c.locked).map(|c| c.theta))
            .collect()
    };

    // start while the phone still rests, after the loops have settled
    let first = ((scenario.motion.rest_before / frame).floor() as usize).clamp(1, frames.saturating_sub(1));
    if frames < 2 || !frame_time(first).is_finite() {
        return Err(Error::InsufficientData("walk too short for one tracking frame".into()));
    }
    let t0 = frame_time(first);
    let start = truth_at(traj, t0) + Vec2::new(offset_angle.cos(), offset_angle.sin()) * settings.initial_error;
    let mut track_cfg = settings.track;
    track_cfg.phone_height = scenario.motion.start.z;
    let mut tracker = Tracker::new(
        scenario.anchors.clone(),
        world.clone(),
        track_cfg,
        PositionFix::at(t0, start),
        observed(first),
    );
    let mut fixes = vec![tracker.fix().clone()];
    let mut truth = vec![truth_at(traj, t0)];
    let mut trials = Vec::new();
    for k in first + 1..frames {
        let t = frame_time(k);
        if !t.is_finite() {
            continue;
        }
        let fix = tracker.step(t, observed(k)).clone();
        let p = truth_at(traj, t);
        trials.push(TrialRecord {
            trial: trials.len(),
            label: format!("t={t:.3}"),
            stream: trial_stream(ExperimentKind::Tracking, 0),
            error: Some((fix.position - p).norm()),
            flagged: fix.dead_reckoned,
            note: if fix.dead_reckoned { format!("{} anchors locked", fix.n_locked) } else { String::new() },
        });
        fixes.push(fix);
        truth.push(p);
    }
    let lock_loss = scenario
        .anchors
        .iter()
        .zip(&phases)
        .flat_map(|(a, p)| p.lock_lost.iter().map(move |&(s, e)| (a.id, s, e)))
        .collect();
    Ok(TrackingOutcome {
        report: ExperimentReport::new("tracking", "m", seed, config_digest(scenario), trials),
        fixes,
        truth,
        lock_loss,
        duty_cycle: settings.duty_cycle,
    })
}
