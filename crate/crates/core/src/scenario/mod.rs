//! World geometry, anchors, phone motion scripts and channel planning.

mod bounds;
mod channels;
mod config;
mod trajectory;

pub use bounds::{bound_angle_error, AngleErrorBound};
pub use channels::{plan_channels, plan_channels_with_guard, ChannelPlan, HAND_SPEED_MAX};
pub use config::{load_scenario, Region, Scenario};
pub use trajectory::{
    filleted_path, gen_trajectory, min_jerk, Leg, Motion, Path, PathSegment, RandomShake, Trajectory, TrajectorySample,
    WalkMotion,
};

use crate::{Vec2, Vec3};
use nalgebra::UnitQuaternion;

/// Physical constants and sampling rates shared by every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    /// Speed of sound, m/s.
    pub speed_of_sound: f64,
    /// Microphone sample rate, Hz.
    pub audio_sample_rate: f64,
    /// Accelerometer/gyroscope sample rate, Hz.
    pub imu_sample_rate: f64,
    /// Broadband ambient noise level, dBFS. `-inf` disables noise.
    pub noise_floor_dbfs: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            speed_of_sound: 340.0,
            audio_sample_rate: 44100.0,
            imu_sample_rate: 200.0,
            noise_floor_dbfs: f64::NEG_INFINITY,
        }
    }
}

impl WorldConfig {
    pub fn audio_period(&self) -> f64 {
        1.0 / self.audio_sample_rate
    }

    pub fn nyquist(&self) -> f64 {
        self.audio_sample_rate / 2.0
    }

    /// Acoustic wavelength at `frequency`, m.
    pub fn wavelength(&self, frequency: f64) -> f64 {
        self.speed_of_sound / frequency
    }
}

/// Optional cosine-power radiation pattern of a speaker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Directivity {
    /// Horizontal azimuth of the main axis, radians from +X.
    pub azimuth: f64,
    /// Elevation of the main axis, radians above the horizontal.
    pub elevation: f64,
    /// Exponent of the cosine gain; 0 is omnidirectional.
    pub exponent: f64,
}

impl Directivity {
    pub fn axis(&self) -> Vec3 {
        Vec3::new(
            self.elevation.cos() * self.azimuth.cos(),
            self.elevation.cos() * self.azimuth.sin(),
            self.elevation.sin(),
        )
    }

    /// Gain toward unit vector `direction` (from the source).
    pub fn gain(&self, direction: &Vec3) -> f64 {
        if self.exponent == 0.0 {
            return 1.0;
        }
        self.axis().dot(direction).max(0.0).powf(self.exponent)
    }
}

/// A fixed speaker emitting a constant tone.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorNode {
    pub id: u32,
    /// Horizontal position, m.
    pub position: Vec2,
    /// Height of the speaker relative to the phone plane, m.
    pub height: f64,
    /// Emission frequency, Hz.
    pub frequency: f64,
    /// Tone amplitude at 1 m, dBFS (peak).
    pub amplitude_dbfs: f64,
    pub directivity: Option<Directivity>,
}

impl AnchorNode {
    pub fn new(id: u32, position: Vec2, frequency: f64) -> Self {
        Self {
            id,
            position,
            height: 0.0,
            frequency,
            amplitude_dbfs: -20.0,
            directivity: None,
        }
    }

    pub fn with_height(mut self, height: f64) -> Self {
        self.height = height;
        self
    }

    pub fn with_amplitude_dbfs(mut self, dbfs: f64) -> Self {
        self.amplitude_dbfs = dbfs;
        self
    }

    /// 3D position with the phone plane at z = 0.
    pub fn position3(&self) -> Vec3 {
        Vec3::new(self.position.x, self.position.y, self.height)
    }

    /// Peak amplitude at 1 m as a linear full-scale fraction.
    pub fn amplitude_at_1m(&self) -> f64 {
        10f64.powf(self.amplitude_dbfs / 20.0)
    }

    /// Sources are motionless.
    pub fn source_velocity(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// Rectangle with a semicircular cap.
    Mixed,
    Circle,
    Rectangle,
    /// Seeded smooth random motion.
    Arbitrary,
    WalkPath,
}

impl PatternKind {
    pub fn is_shake(self) -> bool {
        !matches!(self, PatternKind::WalkPath)
    }

    pub fn label(self) -> &'static str {
        match self {
            PatternKind::Mixed => "A",
            PatternKind::Circle => "B",
            PatternKind::Rectangle => "C",
            PatternKind::Arbitrary => "D",
            PatternKind::WalkPath => "walk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Clockwise,
    Anticlockwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShakePlane {
    Horizontal,
    Vertical,
}

/// Periodic disturbance of a hand-held phone while walking.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaitSpec {
    /// Amplitude of the forward speed oscillation, m/s.
    pub speed_amplitude: f64,
    /// Step frequency, Hz.
    pub step_frequency: f64,
    /// Amplitude of the vertical bob, m.
    pub vertical_amplitude: f64,
}

/// Scripted phone motion.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPatternSpec {
    pub pattern: PatternKind,
    pub senses: Vec<Sense>,
    /// Shape size (side or diameter), m.
    pub amplitude: f64,
    /// Peak phone speed for shakes, cruise speed for walks, m/s.
    pub peak_speed: f64,
    /// Shake session length, s (walks derive their own).
    pub duration: f64,
    pub seed: u64,
    pub plane: ShakePlane,
    /// Phone position at rest before moving, m.
    pub start: Vec3,
    /// Heading of the phone's X axis, radians from world +X.
    pub yaw: f64,
    /// Rotation about the phone's X axis, radians.
    pub tilt: f64,
    pub rest_before: f64,
    pub rest_after: f64,
    pub waypoints: Vec<Vec2>,
    pub corner_radius: f64,
    pub gait: GaitSpec,
}

impl Default for MotionPatternSpec {
    fn default() -> Self {
        Self {
            pattern: PatternKind::Mixed,
            senses: vec![
                Sense::Clockwise,
                Sense::Anticlockwise,
                Sense::Clockwise,
                Sense::Anticlockwise,
            ],
            amplitude: 0.1,
            peak_speed: 1.0,
            duration: 4.0,
            seed: 0,
            plane: ShakePlane::Horizontal,
            start: Vec3::zeros(),
            yaw: 0.0,
            tilt: 0.0,
            rest_before: 0.5,
            rest_after: 0.3,
            waypoints: Vec::new(),
            corner_radius: 0.5,
            gait: GaitSpec::default(),
        }
    }
}

impl MotionPatternSpec {
    /// Orientation of the phone (UCS to world).
    pub fn orientation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vec3::z_axis(), self.yaw)
            * UnitQuaternion::from_axis_angle(&Vec3::x_axis(), self.tilt)
    }

    /// Checks the spec invariants.
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.pattern.is_shake() {
            if !(self.amplitude > 0.0 && self.amplitude <= 0.15) {
                return Err(Error::invariant(
                    "motion.amplitude_m",
                    format!("shake amplitude must be in (0, 0.15], got {}", self.amplitude),
                ));
            }
            if !(self.peak_speed > 0.0 && self.peak_speed <= HAND_SPEED_MAX) {
                return Err(Error::invariant(
                    "motion.peak_speed_m_per_s",
                    format!("shake speed must be in (0, 2], got {}", self.peak_speed),
                ));
            }
            if !(self.duration > 0.0) {
                return Err(Error::invariant("motion.duration_s", "must be positive"));
            }
            if self.senses.is_empty() && self.pattern != PatternKind::Arbitrary {
                return Err(Error::invariant("motion.senses", "at least one sense required"));
            }
        } else {
            if self.waypoints.len() < 2 {
                return Err(Error::invariant(
                    "motion.waypoints_m",
                    "walk_path needs at least two waypoints",
                ));
            }
            if !(self.peak_speed > 0.0) {
                return Err(Error::invariant("motion.peak_speed_m_per_s", "must be positive"));
            }
            if self.gait.speed_amplitude >= self.peak_speed {
                return Err(Error::invariant(
                    "motion.gait_speed_amplitude_m_per_s",
                    "must be below the walking speed",
                ));
            }
        }
        if self.rest_before < 0.0 || self.rest_after < 0.0 {
            return Err(Error::invariant("motion.rest_before_s", "rest periods must be >= 0"));
        }
        Ok(())
    }
}
