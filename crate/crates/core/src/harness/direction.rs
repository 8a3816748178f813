use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;
use rand::Rng;

use super::{config_digest, random_angle, trial_rng, trial_stream, ExperimentKind, ExperimentReport, NoiseProfile, TrialRecord};
use crate::acoustic::{synthesize_channel, AmplitudeModel};
use crate::angles::wrap_pi;
use crate::direction::{align_to_imu, detect_shake, regress_direction, DirectionEstimate, DirectionRecord};
use crate::dsp::{design_bandpass, process_channel, DspConfig, FilterSpec};
use crate::imu::{estimate_wcs_frame, integrate_motion, synthesize_imu, FrameConfig};
use crate::scenario::{gen_trajectory, AnchorNode, PatternKind, Scenario, Trajectory};
use crate::{Error, Result, Vec2};

/// Horizontal acceleration marking the shake session, m/s^2.
pub(crate) const SHAKE_THRESHOLD: f64 = 0.5;
/// Smoothing of the acceleration magnitude before thresholding, IMU samples.
pub(crate) const SHAKE_SMOOTH: usize = 11;
/// Samples kept on either side of the detected session.
pub(crate) const SHAKE_MARGIN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSettings {
    pub trials: usize,
    /// Horizontal phone-to-anchor distances; trials cycle through them, m.
    pub distances: Vec<f64>,
    /// Shake patterns; trials cycle through them.
    pub patterns: Vec<PatternKind>,
}

impl DirectionSettings {
    /// One distance (the first anchor's) and the scenario's pattern.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let start = scenario.motion.start.xy();
        let distance = scenario
            .anchors
            .first()
            .map_or(8.0, |a| (a.position - start).norm().max(0.5));
        let pattern = if scenario.motion.pattern.is_shake() {
            scenario.motion.pattern
        } else {
            PatternKind::Mixed
        };
        Self {
            trials: 50,
            distances: vec![distance],
            patterns: vec![pattern],
        }
    }

    fn combination(&self, trial: usize) -> (PatternKind, f64) {
        let np = self.patterns.len().max(1);
        let pattern = self.patterns.get(trial % np).copied().unwrap_or(PatternKind::Mixed);
        let distance = self.distances[(trial / np) % self.distances.len()];
        (pattern, distance)
    }
}

/// Ground-truth direction relative to the phone: bearing of the anchor from
/// the centroid of the phone's path over `window`, measured clockwise from
/// the phone's Y axis.
pub(crate) fn true_relative_angle(traj: &Trajectory, window: std::ops::Range<usize>, anchor: &AnchorNode, yaw: f64) -> f64 {
    let pts = &traj.samples[window];
    let centroid = pts.iter().fold(Vec2::zeros(), |acc, s| acc + s.position.xy()) / pts.len() as f64;
    let d = anchor.position - centroid;
    wrap_pi(FRAC_PI_2 - d.y.atan2(d.x) + yaw)
}

/// Everything the direction pipeline produced for one shake.
pub(crate) struct ShakeOutcome {
    pub estimates: Vec<Result<DirectionEstimate>>,
    pub window: std::ops::Range<usize>,
    pub trajectory: Trajectory,
}

/// Synthesizes one shake heard from `anchors` (as a single mixed recording)
/// and runs the direction pipeline for each anchor.
pub(crate) fn run_shake<R: Rng + ?Sized>(
    scenario: &Scenario,
    anchors: &[AnchorNode],
    filters: &[FilterSpec],
    dsp: &DspConfig,
    noise: &NoiseProfile,
    spec: &crate::scenario::MotionPatternSpec,
    rng: &mut R,
) -> Result<ShakeOutcome> {
    let world = &scenario.world;
    let traj = gen_trajectory(spec, world)?;
    let loudest = anchors.iter().map(|a| a.amplitude_at_1m()).fold(0.0, f64::max);
    let noise_dbfs = noise.noise_dbfs(loudest, dsp.pass_band, world.audio_sample_rate);
    let pcm = if anchors.len() == 1 {
        synthesize_channel(&traj, &anchors[0], world, noise_dbfs, AmplitudeModel::default(), rng)?
    } else {
        crate::acoustic::synthesize_scene(&traj, anchors, world, noise_dbfs, AmplitudeModel::default(), rng)?
    };
    let imu = synthesize_imu(&traj, &noise.imu_model(rng), rng);
    let frame_cfg = FrameConfig {
        yaw_offset: random_angle(rng),
        ..Default::default()
    };
    let frame = estimate_wcs_frame(&imu, &frame_cfg)?;
    let integrals = integrate_motion(&imu, &frame);
    let window = detect_shake(&integrals, SHAKE_THRESHOLD, SHAKE_SMOOTH, SHAKE_MARGIN)
        .ok_or_else(|| Error::InsufficientData("no shake found in the accelerometer record".into()))?;
    let session = integrals.slice(window.clone());
    let estimates = anchors
        .par_iter()
        .zip(filters)
        .map(|(anchor, filter)| {
            let track = process_channel(&pcm, anchor, filter, world, dsp)?;
            let f = align_to_imu(&track, &session.t);
            regress_direction(&session, &f, anchor.frequency, world)?.with_frame(&frame)
        })
        .collect();
    Ok(ShakeOutcome {
        estimates,
        window,
        trajectory: traj,
    })
}

fn direction_trial(
    scenario: &Scenario,
    settings: &DirectionSettings,
    noise: &NoiseProfile,
    dsp: &DspConfig,
    filter: &FilterSpec,
    seed: u64,
    trial: usize,
) -> (TrialRecord, Option<DirectionRecord>) {
    let (pattern, distance) = settings.combination(trial);
    let mut rng = trial_rng(seed, ExperimentKind::Direction, trial);
    let mut spec = scenario.motion.clone();
    spec.pattern = pattern;
    spec.yaw = random_angle(&mut rng);
    spec.seed = rng.random();
    let bearing = random_angle(&mut rng);
    let mut anchor = scenario.anchors[0].clone();
    anchor.position = spec.start.xy() + Vec2::new(bearing.cos(), bearing.sin()) * distance;

    let label = format!("{}@{}m", pattern.label(), distance);
    let mut record = TrialRecord {
        trial,
        label,
        stream: trial_stream(ExperimentKind::Direction, trial),
        error: None,
        flagged: false,
        note: String::new(),
    };
    let outcome = run_shake(scenario, std::slice::from_ref(&anchor), std::slice::from_ref(filter), dsp, noise, &spec, &mut rng)
        .and_then(|o| {
            let est = o.estimates.into_iter().next().expect("one anchor")?;
            let truth = true_relative_angle(&o.trajectory, o.window, &anchor, spec.yaw);
            Ok((wrap_pi(est.alpha_r.expect("frame applied") - truth).abs().to_degrees(), est))
        });
    match outcome {
        Ok((e, estimate)) => {
            record.error = Some(e);
            let row = DirectionRecord {
                trial,
                anchor_id: anchor.id,
                estimate,
            };
            (record, Some(row))
        }
        Err(e) => {
            record.note = e.to_string();
            (record, None)
        }
    }
}

/// Repeats a single-anchor shake `settings.trials` times with a fresh
/// phone heading, anchor bearing and sensor noise per trial, and reports
/// the absolute error of the relative direction in degrees.
pub fn run_direction_experiment(
    scenario: &Scenario,
    settings: &DirectionSettings,
    noise: &NoiseProfile,
    seed: u64,
) -> Result<ExperimentReport> {
    let digest = config_digest(scenario);
    if settings.trials == 0 {
        return Ok(ExperimentReport::new("direction", "deg", seed, digest, Vec::new()));
    }
    let anchor = scenario
        .anchors
        .first()
        .ok_or_else(|| Error::InsufficientData("direction experiment needs an anchor".into()))?;
    if settings.distances.is_empty() {
        return Err(Error::invariant("experiment.distances_m", "at least one distance is required"));
    }
    let dsp = DspConfig::from_table(&scenario.dsp)?;
    let filter = design_bandpass(&dsp.filter_request(anchor.frequency), scenario.world.audio_sample_rate)?;
    let (trials, rows): (Vec<TrialRecord>, Vec<Option<DirectionRecord>>) = (0..settings.trials)
        .into_par_iter()
        .map(|k| direction_trial(scenario, settings, noise, &dsp, &filter, seed, k))
        .unzip();
    Ok(ExperimentReport::new("direction", "deg", seed, digest, trials).with_estimates(rows.into_iter().flatten().collect()))
}
