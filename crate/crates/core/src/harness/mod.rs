//! End-to-end experiments over synthetic scenes, error statistics and
//! report files.
//!
//! Every trial draws its randomness from a generator derived from the run
//! seed, the experiment kind and the trial index, so trials can run in any
//! order on the worker pool and still reproduce byte for byte.

mod direction;
mod localize;
mod synth;
mod track;

pub use direction::{run_direction_experiment, DirectionSettings};
pub use localize::{run_localization_experiment, BearingSource, LocalizationSettings};
pub use synth::{synthesize_recording, Recording};
pub use track::{run_tracking_experiment, run_tracking_sweep, TrackingOutcome, TrackingSettings};

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::acoustic::noise_dbfs_for_snr;
use crate::direction::{write_direction_csv, DirectionRecord};
use crate::imu::ImuErrorModel;
use crate::scenario::{PatternKind, Scenario};
use crate::{Error, Result, Vec2, Vec3};

/// Sensor and channel impairments applied to every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    pub name: String,
    /// In-band SNR of an anchor heard from `snr_reference_m`, dB. `None`
    /// disables acoustic noise.
    pub snr_db: Option<f64>,
    /// Range at which `snr_db` holds; farther anchors are quieter, m.
    pub snr_reference_m: f64,
    /// m/s^2.
    pub accel_noise_std: f64,
    /// Largest accelerometer bias magnitude; each trial draws a direction
    /// and a magnitude up to this, m/s^2.
    pub accel_bias_max: f64,
    /// rad/s.
    pub gyro_noise_std: f64,
}

impl NoiseProfile {
    pub fn noiseless() -> Self {
        Self {
            name: "noiseless".into(),
            snr_db: None,
            snr_reference_m: 10.0,
            accel_noise_std: 0.0,
            accel_bias_max: 0.0,
            gyro_noise_std: 0.0,
        }
    }

    /// Phone-grade sensors in a quiet room: 30 dB in-band SNR at 10 m,
    /// accelerometer noise 0.02 m/s^2 with bias up to 0.05 m/s^2, gyroscope
    /// noise 0.002 rad/s. A simulation preset, not a hardware model.
    pub fn paper_like() -> Self {
        Self {
            name: "paper_like".into(),
            snr_db: Some(30.0),
            snr_reference_m: 10.0,
            accel_noise_std: 0.02,
            accel_bias_max: 0.05,
            gyro_noise_std: 0.002,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "noiseless" => Ok(Self::noiseless()),
            "paper_like" => Ok(Self::paper_like()),
            other => Err(Error::invariant(
                "experiment.noise_profile",
                format!("unknown profile `{other}`, expected noiseless or paper_like"),
            )),
        }
    }

    /// White-noise level for a scene whose loudest anchor has peak
    /// amplitude `amplitude_1m` at 1 m.
    pub fn noise_dbfs(&self, amplitude_1m: f64, pass_band: f64, sample_rate: f64) -> f64 {
        match self.snr_db {
            None => f64::NEG_INFINITY,
            Some(snr) => noise_dbfs_for_snr(amplitude_1m / self.snr_reference_m, snr, pass_band, sample_rate),
        }
    }

    /// Draws this trial's sensor errors.
    pub fn imu_model<R: Rng + ?Sized>(&self, rng: &mut R) -> ImuErrorModel {
        let dir = Vec3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let magnitude = self.accel_bias_max * rng.random::<f64>();
        let accel_bias = if dir.norm() > 0.0 { dir.normalize() * magnitude } else { Vec3::zeros() };
        ImuErrorModel {
            accel_bias,
            accel_noise_std: self.accel_noise_std,
            gyro_bias: Vec3::zeros(),
            gyro_noise_std: self.gyro_noise_std,
        }
    }
}

/// Experiment families; each owns a separate range of generator streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Synthesis,
    Direction,
    Localization,
    Tracking,
}

impl ExperimentKind {
    pub fn id(self) -> &'static str {
        match self {
            ExperimentKind::Synthesis => "synth",
            ExperimentKind::Direction => "direction",
            ExperimentKind::Localization => "localization",
            ExperimentKind::Tracking => "tracking",
        }
    }

    fn code(self) -> u64 {
        match self {
            ExperimentKind::Synthesis => 0,
            ExperimentKind::Direction => 1,
            ExperimentKind::Localization => 2,
            ExperimentKind::Tracking => 3,
        }
    }
}

/// Stream number of a trial's generator.
pub fn trial_stream(kind: ExperimentKind, trial: usize) -> u64 {
    (kind.code() << 40) | trial as u64
}

/// Generator for one trial: the run seed keys the cipher and the stream
/// number selects an independent sequence.
pub fn trial_rng(seed: u64, kind: ExperimentKind, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_stream(kind, trial));
    rng
}

/// Hex SHA-256 of the scenario's resolved contents.
pub fn config_digest(scenario: &Scenario) -> String {
    hex::encode(Sha256::digest(format!("{scenario:?}").as_bytes()))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub label: String,
    /// Generator stream the trial drew from.
    pub stream: u64,
    /// Absolute error in the report's unit; `None` when the pipeline failed.
    pub error: Option<f64>,
    /// Degenerate geometry or another soft warning.
    pub flagged: bool,
    pub note: String,
}

impl TrialRecord {
    pub fn status(&self) -> &'static str {
        match (self.error.is_some(), self.flagged) {
            (false, _) => "failed",
            (true, true) => "flagged",
            (true, false) => "ok",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    /// Trials with an error value.
    pub count: usize,
    pub failed: usize,
    pub flagged: usize,
    pub mean: f64,
    pub std: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p100: f64,
}

/// Nearest-rank percentile of ascending `sorted`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl Summary {
    pub fn from_trials(trials: &[TrialRecord]) -> Self {
        let mut errors: Vec<f64> = trials.iter().filter_map(|t| t.error.map(f64::abs)).collect();
        errors.sort_by(f64::total_cmp);
        let n = errors.len();
        let failed = trials.iter().filter(|t| t.error.is_none()).count();
        let flagged = trials.iter().filter(|t| t.error.is_some() && t.flagged).count();
        if n == 0 {
            return Self {
                failed,
                flagged,
                mean: f64::NAN,
                std: f64::NAN,
                p50: f64::NAN,
                p90: f64::NAN,
                p95: f64::NAN,
                p100: f64::NAN,
                count: 0,
            };
        }
        let mean = errors.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            count: n,
            failed,
            flagged,
            mean,
            std: var.sqrt(),
            p50: percentile(&errors, 50.0),
            p90: percentile(&errors, 90.0),
            p95: percentile(&errors, 95.0),
            p100: percentile(&errors, 100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub id: String,
    /// `deg` or `m`.
    pub unit: String,
    pub seed: u64,
    pub config_digest: String,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
    /// Per-anchor regression results, when the experiment ran the direction
    /// pipeline.
    pub estimates: Vec<DirectionRecord>,
}

impl ExperimentReport {
    pub fn new(id: &str, unit: &str, seed: u64, config_digest: String, trials: Vec<TrialRecord>) -> Self {
        let summary = Summary::from_trials(&trials);
        Self {
            id: id.to_string(),
            unit: unit.to_string(),
            seed,
            config_digest,
            trials,
            summary,
            estimates: Vec::new(),
        }
    }

    pub fn with_estimates(mut self, estimates: Vec<DirectionRecord>) -> Self {
        self.estimates = estimates;
        self
    }

    /// Ascending absolute errors.
    pub fn sorted_errors(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.trials.iter().filter_map(|t| t.error.map(f64::abs)).collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Errors of the trials whose label starts with `prefix`.
    pub fn errors_with_label(&self, prefix: &str) -> Vec<f64> {
        self.trials
            .iter()
            .filter(|t| t.label.starts_with(prefix))
            .filter_map(|t| t.error.map(f64::abs))
            .collect()
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "experiment   {}", self.id);
        let _ = writeln!(out, "seed         {}", self.seed);
        let _ = writeln!(out, "config       {}", self.config_digest);
        let _ = writeln!(out, "trials       {}", self.trials.len());
        let _ = writeln!(out, "succeeded    {}", s.count);
        let _ = writeln!(out, "failed       {}", s.failed);
        let _ = writeln!(out, "flagged      {}", s.flagged);
        let u = &self.unit;
        let _ = writeln!(out, "mean         {:.4} {u}", s.mean);
        let _ = writeln!(out, "std          {:.4} {u}", s.std);
        let _ = writeln!(out, "p50          {:.4} {u}", s.p50);
        let _ = writeln!(out, "p90          {:.4} {u}", s.p90);
        let _ = writeln!(out, "p95          {:.4} {u}", s.p95);
        let _ = writeln!(out, "p100         {:.4} {u}", s.p100);
        out
    }

    /// CSV rows `trial,label,stream,error,status,note`.
    pub fn write_trials_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trial", "label", "stream", &format!("error_{}", self.unit), "status", "note"])?;
        for t in &self.trials {
            w.write_record([
                t.trial.to_string(),
                t.label.clone(),
                t.stream.to_string(),
                t.error.map_or(String::new(), |e| format!("{e:.6}")),
                t.status().to_string(),
                t.note.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Empirical CDF rows `error,fraction`.
    pub fn write_cdf_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([format!("error_{}", self.unit), "fraction".to_string()])?;
        let errors = self.sorted_errors();
        let n = errors.len();
        for (i, e) in errors.iter().enumerate() {
            w.write_record([format!("{e:.6}"), format!("{:.6}", (i + 1) as f64 / n as f64)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes `<id>_trials.csv`, `<id>_cdf.csv` and `<id>_summary.txt` into
/// `dir`, plus `<id>_estimates.csv` when the report carries direction
/// estimates, returning the paths in that order.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trials = dir.join(format!("{}_trials.csv", report.id));
    report.write_trials_csv(create(&trials)?).map_err(|e| csv_error(&trials, e))?;
    let cdf = dir.join(format!("{}_cdf.csv", report.id));
    report.write_cdf_csv(create(&cdf)?).map_err(|e| csv_error(&cdf, e))?;
    let summary = dir.join(format!("{}_summary.txt", report.id));
    std::fs::write(&summary, report.summary_text()).map_err(|e| Error::io(&summary, e))?;
    let mut files = vec![trials, cdf, summary];
    if !report.estimates.is_empty() {
        let est = dir.join(format!("{}_estimates.csv", report.id));
        write_direction_csv(&report.estimates, create(&est)?).map_err(|e| csv_error(&est, e))?;
        files.push(est);
    }
    Ok(files)
}

/// Writes `manifest.txt` recording the command, seed, configuration digest
/// and the digest of every output file.
pub fn write_manifest(dir: &Path, command: &str, seed: u64, digest: &str, files: &[PathBuf]) -> Result<PathBuf> {
    let mut text = String::new();
    let _ = writeln!(text, "command = {command}");
    let _ = writeln!(text, "seed = {seed}");
    let _ = writeln!(text, "config_sha256 = {digest}");
    let _ = writeln!(text, "crate_version = {}", env!("CARGO_PKG_VERSION"));
    for f in files {
        let name = f.file_name().map_or_else(|| f.display().to_string(), |n| n.to_string_lossy().into_owned());
        let _ = writeln!(text, "output = {name} sha256:{}", sha256_file(f)?);
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    trials: Option<usize>,
    noise_profile: Option<String>,
    snr_db: Option<f64>,
    snr_reference_m: Option<f64>,
    accel_noise_std: Option<f64>,
    accel_bias_max: Option<f64>,
    gyro_noise_std: Option<f64>,
    distances_m: Option<Vec<f64>>,
    patterns: Option<Vec<String>>,
    spots_m: Option<Vec<[f64; 2]>>,
    trials_per_spot: Option<usize>,
    direction_sigma_deg: Option<f64>,
    anchor_subset: Option<Vec<u32>>,
    duty_cycle: Option<f64>,
    frame_s: Option<f64>,
    initial_error_m: Option<f64>,
}

/// The `[experiment]` table of a scenario, resolved against defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub noise: NoiseProfile,
    pub direction: DirectionSettings,
    pub localization: LocalizationSettings,
    pub tracking: TrackingSettings,
}

impl ExperimentSettings {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self> {
        let raw: RawExperiment = scenario
            .experiment
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| Error::invariant("experiment", e.message().trim()))?;
        let mut noise = NoiseProfile::by_name(raw.noise_profile.as_deref().unwrap_or("paper_like"))?;
        if raw.snr_db.is_some() {
            noise.snr_db = raw.snr_db;
        }
        noise.snr_reference_m = raw.snr_reference_m.unwrap_or(noise.snr_reference_m);
        noise.accel_noise_std = raw.accel_noise_std.unwrap_or(noise.accel_noise_std);
        noise.accel_bias_max = raw.accel_bias_max.unwrap_or(noise.accel_bias_max);
        noise.gyro_noise_std = raw.gyro_noise_std.unwrap_or(noise.gyro_noise_std);
        if !(noise.snr_reference_m > 0.0) {
            return Err(Error::invariant("experiment.snr_reference_m", "must be positive"));
        }

        let mut direction = DirectionSettings::from_scenario(scenario);
        direction.trials = raw.trials.unwrap_or(direction.trials);
        if let Some(d) = raw.distances_m {
            if d.iter().any(|x| !(*x > 0.0)) {
                return Err(Error::invariant("experiment.distances_m", "distances must be positive"));
            }
            direction.distances = d;
        }
        if let Some(p) = raw.patterns {
            direction.patterns = p.iter().map(|s| parse_shake(s)).collect::<Result<_>>()?;
        }

        let mut localization = LocalizationSettings::default();
        if let Some(s) = raw.spots_m {
            localization.spots = s.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        }
        localization.trials_per_spot = raw.trials_per_spot.unwrap_or(localization.trials_per_spot);
        if let Some(sigma) = raw.direction_sigma_deg {
            if !(sigma >= 0.0) {
                return Err(Error::invariant("experiment.direction_sigma_deg", "must be non-negative"));
            }
            localization.bearings = BearingSource::Injected { sigma: sigma.to_radians() };
        }
        localization.anchor_subset = raw.anchor_subset;

        let mut tracking = TrackingSettings::default();
        tracking.duty_cycle = raw.duty_cycle.unwrap_or(tracking.duty_cycle);
        tracking.frame = raw.frame_s.unwrap_or(tracking.frame);
        tracking.initial_error = raw.initial_error_m.unwrap_or(tracking.initial_error);
        tracking.validate()?;

        Ok(Self {
            noise,
            direction,
            localization,
            tracking,
        })
    }
}

fn parse_shake(s: &str) -> Result<PatternKind> {
    match s.to_ascii_uppercase().as_str() {
        "A" => Ok(PatternKind::Mixed),
        "B" => Ok(PatternKind::Circle),
        "C" => Ok(PatternKind::Rectangle),
        "D" => Ok(PatternKind::Arbitrary),
        other => Err(Error::invariant("experiment.patterns", format!("unknown shake pattern `{other}`"))),
    }
}

/// Uniform angle in `[0, 2pi)`.
pub(crate) fn random_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    2.0 * PI * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(trial: usize, error: Option<f64>) -> TrialRecord {
        TrialRecord {
            trial,
            label: "x".into(),
            stream: trial as u64,
            error,
            flagged: false,
            note: String::new(),
        }
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&v, 50.0), 10.0);
        assert_eq!(percentile(&v, 90.0), 18.0);
        assert_eq!(percentile(&v, 95.0), 19.0);
        assert_eq!(percentile(&v, 100.0), 20.0);
        assert_eq!(percentile(&[3.0], 50.0), 3.0);
    }

    #[test]
    fn summary_uses_absolute_errors_and_counts_failures() {
        let trials = vec![record(0, Some(-2.0)), record(1, Some(1.0)), record(2, None)];
        let s = Summary::from_trials(&trials);
        assert_eq!(s.count, 2);
        assert_eq!(s.failed, 1);
        assert_eq!(s.mean, 1.5);
        assert_eq!(s.p100, 2.0);
        assert!((s.std - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_report_has_header_only() {
        let r = ExperimentReport::new("direction", "deg", 1, "d".into(), Vec::new());
        let mut buf = Vec::new();
        r.write_trials_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "trial,label,stream,error_deg,status,note\n");
        assert_eq!(r.summary.count, 0);
    }

    #[test]
    fn trial_streams_are_independent_and_repeatable() {
        let draw = |kind, trial| -> u64 { rand::Rng::random(&mut trial_rng(7, kind, trial)) };
        let a = draw(ExperimentKind::Direction, 3);
        let b = draw(ExperimentKind::Direction, 3);
        let c = draw(ExperimentKind::Direction, 4);
        let d = draw(ExperimentKind::Tracking, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn profiles_by_name() {
        assert_eq!(NoiseProfile::by_name("paper_like").unwrap().snr_db, Some(30.0));
        assert!(NoiseProfile::by_name("loud").is_err());
        let quiet = NoiseProfile::noiseless();
        assert_eq!(quiet.noise_dbfs(0.1, 224.0, 44100.0), f64::NEG_INFINITY);
        let m = quiet.imu_model(&mut trial_rng(1, ExperimentKind::Direction, 0));
        assert_eq!(m, ImuErrorModel::perfect());
    }

    proptest! {
        #[test]
        fn percentiles_are_ordered(v in proptest::collection::vec(-10.0f64..10.0, 1..60)) {
            let trials: Vec<TrialRecord> = v.iter().enumerate().map(|(i, &e)| record(i, Some(e))).collect();
            let s = Summary::from_trials(&trials);
            prop_assert!(s.p50 <= s.p90 && s.p90 <= s.p95 && s.p95 <= s.p100);
            let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert_eq!(s.p100, max);
            let below = v.iter().filter(|x| x.abs() <= s.p50).count();
            prop_assert!(below * 2 >= v.len());
        }
    }
}
