use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{csv_error, trial_rng, ExperimentKind, NoiseProfile};
use crate::acoustic::{phase_oracle, synthesize_scene, write_wav, AmplitudeModel, PcmStream};
use crate::dsp::{design_bandpass, process_channel, DspConfig, FilterSpec, PhaseTrack};
use crate::imu::{synthesize_imu, ImuStream};
use crate::scenario::{gen_trajectory, Scenario, Trajectory};
use crate::{Error, Result};

/// Phase tracks run at the audio rate; the export keeps about this many
/// samples per second, Hz.
const TRACK_EXPORT_RATE: f64 = 1000.0;

/// One synthesized scene: motion, the mixed microphone signal, the IMU
/// record and what the signal chain recovers from it.
pub struct Recording {
    pub trajectory: Trajectory,
    pub pcm: PcmStream,
    pub imu: ImuStream,
    pub filters: Vec<FilterSpec>,
    pub tracks: Vec<PhaseTrack>,
}

/// Synthesizes the scenario's motion as heard from all anchors and runs
/// every channel through the filter, AGC and PLL.
pub fn synthesize_recording(scenario: &Scenario, noise: &NoiseProfile, seed: u64) -> Result<Recording> {
    if scenario.anchors.is_empty() {
        return Err(Error::InsufficientData("the scenario has no anchors".into()));
    }
    let world = &scenario.world;
    let dsp = DspConfig::from_table(&scenario.dsp)?;
    let mut rng = trial_rng(seed, ExperimentKind::Synthesis, 0);
    let trajectory = gen_trajectory(&scenario.motion, world)?;
    let loudest = scenario.anchors.iter().map(|a| a.amplitude_at_1m()).fold(0.0, f64::max);
    let noise_dbfs = noise.noise_dbfs(loudest, dsp.pass_band, world.audio_sample_rate);
    let pcm = synthesize_scene(&trajectory, &scenario.anchors, world, noise_dbfs, AmplitudeModel::default(), &mut rng)?;
    let imu = synthesize_imu(&trajectory, &noise.imu_model(&mut rng), &mut rng);
    let (filters, tracks) = scenario
        .anchors
        .par_iter()
        .map(|a| {
            let filter = design_bandpass(&dsp.filter_request(a.frequency), world.audio_sample_rate)?;
            let track = process_channel(&pcm, a, &filter, world, &dsp)?;
            Ok((filter, track))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(Recording {
        trajectory,
        pcm,
        imu,
        filters,
        tracks,
    })
}

impl Recording {
    /// Writes `trajectory.csv`, `imu.csv`, `recording.wav`, `oracle.csv`,
    /// `phase_tracks.csv` (decimated to about 1 kHz) and one
    /// `filter_<anchor id>.txt` per anchor.
    pub fn emit(&self, scenario: &Scenario, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path).map(|f| (path.clone(), f)).map_err(|e| Error::io(&path, e))
        };
        let mut files = Vec::new();
        let (path, file) = create("trajectory.csv")?;
        self.trajectory.write_csv(file).map_err(|e| csv_error(&path, e))?;
        files.push(path);
        let (path, file) = create("imu.csv")?;
        self.imu.write_csv(file).map_err(|e| csv_error(&path, e))?;
        files.push(path);
        let wav = dir.join("recording.wav");
        write_wav(&self.pcm, &wav)?;
        files.push(wav);
        let (path, file) = create("oracle.csv")?;
        phase_oracle(&self.trajectory, &scenario.anchors, &scenario.world)
            .write_csv(file)
            .map_err(|e| csv_error(&path, e))?;
        files.push(path);
        let (path, file) = create("phase_tracks.csv")?;
        let step = (self.pcm.sample_rate / TRACK_EXPORT_RATE).floor().max(1.0) as usize;
        PhaseTrack::write_csv_every(&self.tracks, step, file).map_err(|e| csv_error(&path, e))?;
        files.push(path);
        for (anchor, filter) in scenario.anchors.iter().zip(&self.filters) {
            let path = dir.join(format!("filter_{}.txt", anchor.id));
            std::fs::write(&path, filter.to_text()).map_err(|e| Error::io(&path, e))?;
            files.push(path);
        }
        Ok(files)
    }
}
