//! Received-signal synthesis under a retarded-time propagation model.

mod wav;

pub use wav::{read_wav, write_wav};

use crate::scenario::{AnchorNode, Trajectory, WorldConfig};
use crate::{Error, Result, Vec3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Mono PCM, nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PcmStream {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
    /// Time of the first sample, s.
    pub start_time: f64,
    /// Number of samples with magnitude above full scale.
    pub clipped: usize,
}

impl PcmStream {
    pub fn new(sample_rate: f64, samples: Vec<f64>, start_time: f64) -> Self {
        let clipped = count_clipped(&samples);
        Self {
            sample_rate,
            samples,
            start_time,
            clipped,
        }
    }

    pub fn silence(sample_rate: f64, len: usize, start_time: f64) -> Self {
        Self::new(sample_rate, vec![0.0; len], start_time)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Timestamp of sample `i`, s.
    pub fn time(&self, i: usize) -> f64 {
        self.start_time + i as f64 / self.sample_rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    /// Index of the first sample at or after `t`.
    pub fn index_at(&self, t: f64) -> usize {
        (((t - self.start_time) * self.sample_rate) - 1e-9).ceil().max(0.0) as usize
    }

    pub fn is_clipped(&self) -> bool {
        self.clipped > 0
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|x| x * x).sum::<f64>() / self.len() as f64).sqrt()
    }
}

fn count_clipped(samples: &[f64]) -> usize {
    samples.iter().filter(|x| x.abs() > 1.0).count()
}

/// Received amplitude as a function of range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeModel {
    /// Free-field `1/L` decay, with `L` floored at `floor` metres.
    InverseDistance { floor: f64 },
    /// Range-independent amplitude equal to the 1 m level.
    Constant,
}

impl Default for AmplitudeModel {
    fn default() -> Self {
        AmplitudeModel::InverseDistance { floor: 0.1 }
    }
}

impl AmplitudeModel {
    pub fn gain(&self, range: f64) -> f64 {
        match *self {
            AmplitudeModel::InverseDistance { floor } => 1.0 / range.max(floor),
            AmplitudeModel::Constant => 1.0,
        }
    }
}

/// Standard deviation of white noise at `dbfs`, where 0 dBFS is the RMS of
/// a full-scale sine.
pub fn noise_std(dbfs: f64) -> f64 {
    10f64.powf(dbfs / 20.0) / std::f64::consts::SQRT_2
}

/// Noise level (dBFS) giving the requested SNR inside `bandwidth` Hz for a
/// tone of peak amplitude `amplitude`.
pub fn noise_dbfs_for_snr(amplitude: f64, snr_db: f64, bandwidth: f64, sample_rate: f64) -> f64 {
    let signal_power = amplitude * amplitude / 2.0;
    let in_band_noise = signal_power / 10f64.powf(snr_db / 10.0);
    let total_noise = in_band_noise * (sample_rate / 2.0) / bandwidth;
    10.0 * (2.0 * total_noise).log10()
}

/// Received amplitude of `anchor` at range `range` in direction `dir`.
fn received_amplitude(anchor: &AnchorNode, model: &AmplitudeModel, range: f64, dir: &Vec3) -> f64 {
    let directivity = anchor.directivity.map_or(1.0, |d| d.gain(dir));
    anchor.amplitude_at_1m() * model.gain(range) * directivity
}

fn audio_len(traj: &Trajectory, world: &WorldConfig) -> usize {
    (traj.duration() * world.audio_sample_rate + 1e-9).floor() as usize + 1
}

/// Tone from `anchor` as heard along `traj`, plus white noise at
/// `noise_dbfs` (`-inf` for none).
pub fn synthesize_channel<R: Rng + ?Sized>(
    traj: &Trajectory,
    anchor: &AnchorNode,
    world: &WorldConfig,
    noise_dbfs: f64,
    amplitude: AmplitudeModel,
    rng: &mut R,
) -> Result<PcmStream> {
    let mut samples = clean_channel(traj, anchor, world, amplitude)?;
    add_noise_in_place(&mut samples, noise_dbfs, rng);
    Ok(PcmStream::new(world.audio_sample_rate, samples, 0.0))
}

fn clean_channel(
    traj: &Trajectory,
    anchor: &AnchorNode,
    world: &WorldConfig,
    amplitude: AmplitudeModel,
) -> Result<Vec<f64>> {
    if anchor.frequency >= world.nyquist() {
        return Err(Error::invariant(
            "anchor.frequency_hz",
            format!("{} Hz is above Nyquist", anchor.frequency),
        ));
    }
    let fs = world.audio_sample_rate;
    let n = audio_len(traj, world);
    let src = anchor.position3();
    let samples = (0..n)
        .into_par_iter()
        .with_min_len(4096)
        .map(|i| {
            let t = i as f64 / fs;
            let rel = traj.motion().position(t) - src;
            let range = rel.norm();
            let a = received_amplitude(anchor, &amplitude, range, &(rel / range.max(1e-12)));
            let cycles = anchor.frequency * t - anchor.frequency * range / world.speed_of_sound;
            a * (TAU * (cycles - cycles.floor())).cos()
        })
        .collect();
    Ok(samples)
}

/// Sum of all anchors' tones plus one shared noise floor.
pub fn synthesize_scene<R: Rng + ?Sized>(
    traj: &Trajectory,
    anchors: &[AnchorNode],
    world: &WorldConfig,
    noise_dbfs: f64,
    amplitude: AmplitudeModel,
    rng: &mut R,
) -> Result<PcmStream> {
    let channels = anchors
        .iter()
        .map(|a| {
            clean_channel(traj, a, world, amplitude)
                .map(|s| PcmStream::new(world.audio_sample_rate, s, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut scene = if channels.is_empty() {
        PcmStream::silence(world.audio_sample_rate, audio_len(traj, world), 0.0)
    } else {
        mix(&channels)?
    };
    add_noise_in_place(&mut scene.samples, noise_dbfs, rng);
    scene.clipped = count_clipped(&scene.samples);
    Ok(scene)
}

fn add_noise_in_place<R: Rng + ?Sized>(samples: &mut [f64], noise_dbfs: f64, rng: &mut R) {
    if noise_dbfs == f64::NEG_INFINITY {
        return;
    }
    let normal = Normal::new(0.0, noise_std(noise_dbfs)).expect("finite noise level");
    for x in samples.iter_mut() {
        *x += normal.sample(rng);
    }
}

/// Adds white noise at `noise_dbfs` to a copy of `pcm`.
pub fn add_noise<R: Rng + ?Sized>(pcm: &PcmStream, noise_dbfs: f64, rng: &mut R) -> PcmStream {
    let mut samples = pcm.samples.clone();
    add_noise_in_place(&mut samples, noise_dbfs, rng);
    PcmStream::new(pcm.sample_rate, samples, pcm.start_time)
}

/// Pointwise sum of aligned streams.
pub fn mix(streams: &[PcmStream]) -> Result<PcmStream> {
    let first = streams
        .first()
        .ok_or_else(|| Error::InsufficientData("mix of zero streams".into()))?;
    let mut samples = first.samples.clone();
    for s in &streams[1..] {
        if s.sample_rate != first.sample_rate {
            return Err(Error::RateMismatch {
                expected: first.sample_rate,
                found: s.sample_rate,
            });
        }
        if (s.start_time - first.start_time).abs() > 0.5 / first.sample_rate || s.len() != first.len() {
            return Err(Error::invariant("streams", "streams are not aligned"));
        }
        samples.iter_mut().zip(&s.samples).for_each(|(a, b)| *a += b);
    }
    Ok(PcmStream::new(first.sample_rate, samples, first.start_time))
}

/// Adds a coherent second source at the frequency of one of `anchors`,
/// with 1 m amplitude `relative_volume` times that anchor's.
pub fn add_interferer(
    scene: &PcmStream,
    traj: &Trajectory,
    anchors: &[AnchorNode],
    interferer: &AnchorNode,
    relative_volume: f64,
    world: &WorldConfig,
) -> Result<PcmStream> {
    let primary = anchors
        .iter()
        .find(|a| a.frequency == interferer.frequency)
        .ok_or_else(|| {
            Error::invariant(
                "interferer.frequency_hz",
                format!("{} Hz matches no anchor", interferer.frequency),
            )
        })?;
    if !(relative_volume >= 0.0) {
        return Err(Error::invariant("relative_volume", "must be >= 0"));
    }
    if relative_volume == 0.0 {
        return Ok(scene.clone());
    }
    let mut source = interferer.clone();
    source.amplitude_dbfs = primary.amplitude_dbfs + 20.0 * relative_volume.log10();
    let extra = clean_channel(traj, &source, world, AmplitudeModel::default())?;
    mix(&[scene.clone(), PcmStream::new(world.audio_sample_rate, extra, 0.0)])
}

/// Ground-truth phase of one anchor's carrier as seen by the phone.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleChannel {
    pub anchor_id: u32,
    pub frequency: f64,
    pub t: Vec<f64>,
    /// `-2π f_a (L(t) - L(0)) / v_a`, rad.
    pub phi: Vec<f64>,
    /// `(1/2π) dφ/dt`, Hz.
    pub f_shift: Vec<f64>,
    /// Range to the source, m.
    pub range: Vec<f64>,
}

impl OracleChannel {
    /// Displacement toward the source since the first sample, m.
    pub fn displacement(&self) -> Vec<f64> {
        self.range.iter().map(|l| self.range[0] - l).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOracle {
    pub channels: Vec<OracleChannel>,
}

/// Analytic phase, frequency shift and range for one anchor at `times`.
/// The phase reference is the range at t = 0.
pub fn oracle_channel(traj: &Trajectory, anchor: &AnchorNode, world: &WorldConfig, times: &[f64]) -> OracleChannel {
    let src = anchor.position3();
    let k = TAU * anchor.frequency / world.speed_of_sound;
    let l0 = (traj.motion().position(0.0) - src).norm();
    let mut out = OracleChannel {
        anchor_id: anchor.id,
        frequency: anchor.frequency,
        t: times.to_vec(),
        phi: Vec::with_capacity(times.len()),
        f_shift: Vec::with_capacity(times.len()),
        range: Vec::with_capacity(times.len()),
    };
    for &t in times {
        let (p, v, _) = traj.motion().state(t);
        let rel = p - src;
        let l = rel.norm();
        let l_dot = rel.dot(&v) / l;
        out.phi.push(-k * (l - l0));
        out.f_shift.push(-k * l_dot / TAU);
        out.range.push(l);
    }
    out
}

/// Oracle for every anchor at the trajectory's own sample times.
pub fn phase_oracle(traj: &Trajectory, anchors: &[AnchorNode], world: &WorldConfig) -> PhaseOracle {
    let times = traj.times();
    PhaseOracle {
        channels: anchors
            .iter()
            .map(|a| oracle_channel(traj, a, world, &times))
            .collect(),
    }
}

impl PhaseOracle {
    /// CSV rows `t,anchor_id,phi_true,f_shift_true,L_true`, time-major.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "anchor_id", "phi_true", "f_shift_true", "L_true"])?;
        let n = self.channels.first().map_or(0, |c| c.t.len());
        for i in 0..n {
            for c in &self.channels {
                w.write_record([
                    c.t[i].to_string(),
                    c.anchor_id.to_string(),
                    c.phi[i].to_string(),
                    c.f_shift[i].to_string(),
                    c.range[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
