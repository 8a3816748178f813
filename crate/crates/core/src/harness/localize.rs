use rayon::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::direction::run_shake;
use super::{config_digest, random_angle, trial_rng, trial_stream, ExperimentKind, ExperimentReport, NoiseProfile, TrialRecord};
use crate::direction::DirectionRecord;
use crate::dsp::{design_bandpass, DspConfig, FilterSpec};
use crate::localization::{arcs_from_bearings, locate_initial, LocateConfig};
use crate::scenario::{AnchorNode, Scenario};
use crate::{Error, Result, Vec2};

/// Where the per-anchor directions come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BearingSource {
    /// True bearings plus a common unknown rotation and independent
    /// Gaussian noise of `sigma` radians.
    Injected { sigma: f64 },
    /// A synthesized shake run through the full direction pipeline.
    Pipeline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationSettings {
    pub spots: Vec<Vec2>,
    pub trials_per_spot: usize,
    pub bearings: BearingSource,
    /// Anchor ids to use; all when `None`.
    pub anchor_subset: Option<Vec<u32>>,
    pub locate: LocateConfig,
}

impl Default for LocalizationSettings {
    /// Fourteen spots on two rows, `y = -3` and `y = -6`, `x = 6..24`.
    fn default() -> Self {
        let spots = [-3.0, -6.0]
            .iter()
            .flat_map(|&y| (0..7).map(move |i| Vec2::new(6.0 + 3.0 * i as f64, y)))
            .collect();
        Self {
            spots,
            trials_per_spot: 30,
            bearings: BearingSource::Pipeline,
            anchor_subset: None,
            locate: LocateConfig::default(),
        }
    }
}

fn injected_bearings<R: Rng + ?Sized>(anchors: &[AnchorNode], spot: Vec2, sigma: f64, rng: &mut R) -> Vec<(u32, Vec2, f64)> {
    let rotation = random_angle(rng);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    anchors
        .iter()
        .map(|a| {
            let d = a.position - spot;
            (a.id, a.position, d.y.atan2(d.x) + rotation + noise.sample(rng))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn localization_trial(
    scenario: &Scenario,
    settings: &LocalizationSettings,
    anchors: &[AnchorNode],
    filters: &[FilterSpec],
    dsp: &DspConfig,
    noise: &NoiseProfile,
    seed: u64,
    trial: usize,
) -> (TrialRecord, Vec<DirectionRecord>) {
    let spot = settings.spots[trial / settings.trials_per_spot];
    let mut rng = trial_rng(seed, ExperimentKind::Localization, trial);
    let mut record = TrialRecord {
        trial,
        label: format!("({},{})", spot.x, spot.y),
        stream: trial_stream(ExperimentKind::Localization, trial),
        error: None,
        flagged: false,
        note: String::new(),
    };
    let mut rows = Vec::new();
    let bearings = match settings.bearings {
        BearingSource::Injected { sigma } => Ok(injected_bearings(anchors, spot, sigma, &mut rng)),
        BearingSource::Pipeline => {
            let mut spec = scenario.motion.clone();
            spec.start.x = spot.x;
            spec.start.y = spot.y;
            spec.yaw = random_angle(&mut rng);
            spec.seed = rng.random();
            run_shake(scenario, anchors, filters, dsp, noise, &spec, &mut rng).map(|o| {
                let mut failed = Vec::new();
                let b: Vec<(u32, Vec2, f64)> = anchors
                    .iter()
                    .zip(o.estimates)
                    .filter_map(|(a, e)| match e {
                        Ok(e) => {
                            rows.push(DirectionRecord {
                                trial,
                                anchor_id: a.id,
                                estimate: e,
                            });
                            Some((a.id, a.position, e.alpha))
                        }
                        Err(_) => {
                            failed.push(a.id.to_string());
                            None
                        }
                    })
                    .collect();
                if !failed.is_empty() {
                    record.note = format!("no direction for anchors {}", failed.join(" "));
                }
                b
            })
        }
    };
    let fix = bearings.and_then(|b| {
        let arcs = arcs_from_bearings(&b);
        locate_initial(&arcs, &scenario.search_region(), &settings.locate)
    });
    match fix {
        Ok(fix) => {
            record.error = Some((fix.position - spot).norm());
            record.flagged = fix.ambiguous || fix.concyclic;
            if record.flagged {
                let what = match (fix.ambiguous, fix.concyclic) {
                    (true, true) => "ambiguous concyclic",
                    (true, false) => "ambiguous",
                    _ => "concyclic",
                };
                record.note = if record.note.is_empty() { what.to_string() } else { format!("{}; {what}", record.note) };
            }
        }
        Err(e) => record.note = e.to_string(),
    }
    (record, rows)
}

/// Locates the phone at each spot `trials_per_spot` times and reports the
/// position error in metres. Trials are ordered spot by spot.
pub fn run_localization_experiment(
    scenario: &Scenario,
    settings: &LocalizationSettings,
    noise: &NoiseProfile,
    seed: u64,
) -> Result<ExperimentReport> {
    let digest = config_digest(scenario);
    let anchors: Vec<AnchorNode> = match &settings.anchor_subset {
        None => scenario.anchors.clone(),
        Some(ids) => ids
            .iter()
            .map(|id| {
                scenario
                    .anchor(*id)
                    .cloned()
                    .ok_or_else(|| Error::invariant("experiment.anchor_subset", format!("no anchor with id {id}")))
            })
            .collect::<Result<_>>()?,
    };
    if anchors.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "localization needs at least 3 anchors, have {}",
            anchors.len()
        )));
    }
    let total = settings.spots.len() * settings.trials_per_spot;
    if total == 0 {
        return Ok(ExperimentReport::new("localization", "m", seed, digest, Vec::new()));
    }
    let dsp = DspConfig::from_table(&scenario.dsp)?;
    let filters: Vec<FilterSpec> = match settings.bearings {
        BearingSource::Injected { .. } => Vec::new(),
        BearingSource::Pipeline => {
            if !scenario.motion.pattern.is_shake() {
                return Err(Error::invariant("motion.pattern", "localization needs a shake pattern"));
            }
            anchors
                .par_iter()
                .map(|a| design_bandpass(&dsp.filter_request(a.frequency), scenario.world.audio_sample_rate))
                .collect::<Result<_>>()?
        }
    };
    let (trials, rows): (Vec<TrialRecord>, Vec<Vec<DirectionRecord>>) = (0..total)
        .into_par_iter()
        .map(|k| localization_trial(scenario, settings, &anchors, &filters, &dsp, noise, seed, k))
        .unzip();
    Ok(ExperimentReport::new("localization", "m", seed, digest, trials).with_estimates(rows.into_iter().flatten().collect()))
}
