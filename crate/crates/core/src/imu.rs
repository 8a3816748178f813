//! Inertial sensor synthesis, world-frame construction and velocity
//! integrals.
//!
//! Accelerometer samples follow the delta-velocity convention of real IMUs:
//! sample `k` is the mean specific force over `[t_k, t_k + T)`, so summing
//! `T * a` reproduces the true velocity change exactly.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scenario::Trajectory;
use crate::{Error, Result, Vec3};

/// Standard gravity, m/s^2. The accelerometer reads `+GRAVITY` on the world
/// Z axis when the phone is at rest.
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force in the phone frame, gravity included, m/s^2.
    pub accel: Vec3,
    /// Angular rate in the phone frame, rad/s.
    pub gyro: Vec3,
}

/// Sensor imperfections. The accelerometer bias is expressed in the world
/// frame so that it maps directly onto the regression's drift term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuErrorModel {
    pub accel_bias: Vec3,
    pub accel_noise_std: f64,
    pub gyro_bias: Vec3,
    pub gyro_noise_std: f64,
}

impl Default for ImuErrorModel {
    fn default() -> Self {
        Self::perfect()
    }
}

impl ImuErrorModel {
    pub fn perfect() -> Self {
        Self {
            accel_bias: Vec3::zeros(),
            accel_noise_std: 0.0,
            gyro_bias: Vec3::zeros(),
            gyro_noise_std: 0.0,
        }
    }

    pub fn with_accel_bias(mut self, bias: Vec3) -> Self {
        self.accel_bias = bias;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImuStream {
    pub sample_rate: f64,
    pub samples: Vec<ImuSample>,
}

impl ImuStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// CSV rows `t,ax,ay,az,gx,gy,gz` in the phone frame.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "ax", "ay", "az", "gx", "gy", "gz"])?;
        for s in &self.samples {
            w.serialize([
                s.t, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Accelerometer and gyroscope readings along `traj`, sampled at the
/// trajectory's own rate.
pub fn synthesize_imu<R: Rng + ?Sized>(traj: &Trajectory, model: &ImuErrorModel, rng: &mut R) -> ImuStream {
    let period = 1.0 / traj.sample_rate();
    let accel_noise = Normal::new(0.0, model.accel_noise_std).expect("finite accel noise");
    let gyro_noise = Normal::new(0.0, model.gyro_noise_std).expect("finite gyro noise");
    let up = Vec3::new(0.0, 0.0, GRAVITY);
    let samples = traj
        .samples
        .iter()
        .map(|s| {
            let next = traj.state_at(s.t + period);
            let mean_accel = (next.velocity - s.velocity) / period;
            let mid = s.orientation.slerp(&next.orientation, 0.5);
            let specific = mid.inverse_transform_vector(&(mean_accel + up + model.accel_bias));
            let rate = (s.orientation.inverse() * next.orientation).scaled_axis() / period;
            let jitter = |n: &Normal<f64>, rng: &mut R| Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
            let accel = specific + jitter(&accel_noise, rng);
            let gyro = rate + model.gyro_bias + jitter(&gyro_noise, rng);
            ImuSample { t: s.t, accel, gyro }
        })
        .collect();
    ImuStream {
        sample_rate: traj.sample_rate(),
        samples,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    /// Leading quasi-static interval used to find gravity, s.
    pub init_window: f64,
    /// Angle from the phone's X axis to the chosen world X axis, rad. The
    /// world X axis is otherwise arbitrary since the compass is not used.
    pub yaw_offset: f64,
    /// Largest RMS deviation of the accelerometer from its mean that still
    /// counts as static, m/s^2.
    pub static_threshold: f64,
    /// Phone tilt beyond which the relative angle is flagged, rad.
    pub tilt_tolerance: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            init_window: 0.5,
            yaw_offset: 0.0,
            static_threshold: 0.5,
            tilt_tolerance: 1f64.to_radians(),
        }
    }
}

/// Estimated phone-to-world rotation for every IMU sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimate {
    pub t: Vec<f64>,
    /// Rotation from phone (UCS) to estimated world (WCS) coordinates.
    pub rotations: Vec<UnitQuaternion<f64>>,
    /// Angle from the UCS X axis to the WCS X axis, rad.
    pub alpha0: f64,
    /// Angle between the phone's Z axis and the estimated vertical, rad.
    pub tilt: f64,
    /// Gravity magnitude measured during initialization, m/s^2.
    pub gravity: f64,
    pub tilt_tolerance: f64,
}

impl FrameEstimate {
    pub fn is_horizontal(&self) -> bool {
        self.tilt <= self.tilt_tolerance
    }

    /// Estimated world vertical expressed in the phone frame at sample `k`.
    pub fn vertical_in_phone(&self, k: usize) -> Vec3 {
        self.rotations[k].inverse_transform_vector(&Vec3::z())
    }

    /// Angle between the estimated and the true vertical at sample `k`,
    /// given the true phone-to-world rotation.
    pub fn vertical_error(&self, k: usize, truth: &UnitQuaternion<f64>) -> f64 {
        let est = self.vertical_in_phone(k);
        let actual = truth.inverse_transform_vector(&Vec3::z());
        est.angle(&actual)
    }

    /// True when the estimated vertical disagrees with ground truth by more
    /// than the tilt tolerance at the first sample.
    pub fn disagrees_with(&self, truth: &UnitQuaternion<f64>) -> bool {
        !self.rotations.is_empty() && self.vertical_error(0, truth) > self.tilt_tolerance
    }

    /// Largest deviation of any rotation matrix from orthonormality.
    pub fn max_orthonormality_error(&self) -> f64 {
        self.rotations
            .iter()
            .map(|q| {
                let m = q.to_rotation_matrix().into_inner();
                (m.transpose() * m - Matrix3::identity()).abs().max()
            })
            .fold(0.0, f64::max)
    }
}

/// Builds the world frame from gravity seen during the initial static
/// window, then propagates it with the gyroscope.
pub fn estimate_wcs_frame(imu: &ImuStream, config: &FrameConfig) -> Result<FrameEstimate> {
    let init: Vec<Vec3> = imu
        .samples
        .iter()
        .take_while(|s| s.t - imu.samples[0].t < config.init_window)
        .map(|s| s.accel)
        .collect();
    if init.is_empty() {
        return Err(Error::InsufficientData("no IMU samples in the initialization window".into()));
    }
    let mean = init.iter().sum::<Vec3>() / init.len() as f64;
    let spread = (init.iter().map(|a| (a - mean).norm_squared()).sum::<f64>() / init.len() as f64).sqrt();
    if spread > config.static_threshold {
        return Err(Error::NotStatic {
            spread,
            threshold: config.static_threshold,
        });
    }
    let z = mean.normalize();
    let reference = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let horizontal = (reference - z * reference.dot(&z)).normalize();
    let (s, c) = config.yaw_offset.sin_cos();
    let x = horizontal * c + z.cross(&horizontal) * s;
    let y = z.cross(&x);
    let to_world = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
    let start = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(to_world));

    let mut rotations = Vec::with_capacity(imu.len());
    let mut q = start;
    for (k, s) in imu.samples.iter().enumerate() {
        rotations.push(q);
        if let Some(next) = imu.samples.get(k + 1) {
            let dt = next.t - s.t;
            q *= UnitQuaternion::from_scaled_axis(s.gyro * dt);
            q.renormalize();
        }
    }
    Ok(FrameEstimate {
        t: imu.times(),
        rotations,
        alpha0: config.yaw_offset,
        tilt: z.angle(&Vec3::z()),
        gravity: mean.norm(),
        tilt_tolerance: config.tilt_tolerance,
    })
}

/// World-frame accelerations with gravity removed and their running sums
/// `w[k] = sum_{i<k} T[i] a[i]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotionIntegrals {
    pub t: Vec<f64>,
    pub a_x: Vec<f64>,
    pub a_y: Vec<f64>,
    pub a_z: Vec<f64>,
    pub w_x: Vec<f64>,
    pub w_y: Vec<f64>,
    pub w_z: Vec<f64>,
}

impl MotionIntegrals {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Samples `range` of every series. The sums keep their original
    /// reference, which the regression absorbs into its constant term.
    pub fn slice(&self, range: std::ops::Range<usize>) -> MotionIntegrals {
        MotionIntegrals {
            t: self.t[range.clone()].to_vec(),
            a_x: self.a_x[range.clone()].to_vec(),
            a_y: self.a_y[range.clone()].to_vec(),
            a_z: self.a_z[range.clone()].to_vec(),
            w_x: self.w_x[range.clone()].to_vec(),
            w_y: self.w_y[range.clone()].to_vec(),
            w_z: self.w_z[range].to_vec(),
        }
    }

    /// Velocity change since the first sample as 3-vectors.
    pub fn delta_velocity(&self) -> Vec<Vec3> {
        (0..self.len())
            .map(|k| Vec3::new(self.w_x[k], self.w_y[k], self.w_z[k]))
            .collect()
    }
}

/// Rotates the accelerometer into the estimated world frame, removes the
/// measured gravity and accumulates velocity sums.
pub fn integrate_motion(imu: &ImuStream, frame: &FrameEstimate) -> MotionIntegrals {
    let n = imu.len().min(frame.rotations.len());
    let mut out = MotionIntegrals {
        t: Vec::with_capacity(n),
        ..Default::default()
    };
    let up = Vec3::new(0.0, 0.0, frame.gravity);
    let mut w = Vec3::zeros();
    for k in 0..n {
        let s = &imu.samples[k];
        let a = frame.rotations[k].transform_vector(&s.accel) - up;
        if k > 0 {
            let dt = s.t - imu.samples[k - 1].t;
            w += Vec3::new(out.a_x[k - 1], out.a_y[k - 1], out.a_z[k - 1]) * dt;
        }
        out.t.push(s.t);
        out.a_x.push(a.x);
        out.a_y.push(a.y);
        out.a_z.push(a.z);
        out.w_x.push(w.x);
        out.w_y.push(w.y);
        out.w_z.push(w.z);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{gen_trajectory, MotionPatternSpec, PatternKind, WorldConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shake(pattern: PatternKind, yaw: f64, tilt: f64) -> Trajectory {
        let spec = MotionPatternSpec {
            pattern,
            amplitude: 0.1,
            peak_speed: 2.0,
            yaw,
            tilt,
            ..Default::default()
        };
        gen_trajectory(&spec, &WorldConfig::default()).unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn static_reads_gravity() {
        let traj = shake(PatternKind::Rectangle, 0.3, 0.0);
        let imu = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
        for s in imu.samples.iter().take_while(|s| s.t < 0.45) {
            assert!((s.accel.norm() - GRAVITY).abs() < 1e-9);
            assert!(s.gyro.norm() < 1e-12);
        }
    }

    #[test]
    fn truth_frame_recovers_acceleration() {
        let traj = shake(PatternKind::Rectangle, 0.7, 0.2);
        let imu = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
        let period = 1.0 / traj.sample_rate();
        for (s, truth) in imu.samples.iter().zip(&traj.samples) {
            let a = truth.orientation.transform_vector(&s.accel) - Vec3::new(0.0, 0.0, GRAVITY);
            let next = traj.state_at(truth.t + period);
            let mean = (next.velocity - truth.velocity) / period;
            assert!((a - mean).norm() < 1e-9);
        }
    }

    #[test]
    fn round_trip_velocity() {
        for pattern in [PatternKind::Mixed, PatternKind::Circle, PatternKind::Arbitrary] {
            let traj = shake(pattern, 0.4, 0.0);
            let imu = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
            let frame = estimate_wcs_frame(&imu, &FrameConfig::default()).unwrap();
            let ints = integrate_motion(&imu, &frame);
            // the estimated world frame is the true one rotated by the phone yaw
            let yaw = UnitQuaternion::from_axis_angle(&Vec3::z_axis(), -0.4);
            let v0 = traj.samples[0].velocity;
            for (k, s) in traj.samples.iter().enumerate() {
                let dv = yaw.transform_vector(&(s.velocity - v0));
                let err = (Vec3::new(ints.w_x[k], ints.w_y[k], ints.w_z[k]) - dv).norm();
                assert!(err < 1e-6, "{pattern:?} k={k} err={err}");
            }
        }
    }

    #[test]
    fn bias_grows_linearly() {
        let traj = shake(PatternKind::Mixed, 0.0, 0.0);
        let clean = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
        let model = ImuErrorModel::perfect().with_accel_bias(Vec3::new(0.05, 0.0, 0.0));
        let biased = synthesize_imu(&traj, &model, &mut rng());
        // use the clean frame so only the bias differs
        let frame = estimate_wcs_frame(&clean, &FrameConfig::default()).unwrap();
        let a = integrate_motion(&clean, &frame);
        let b = integrate_motion(&biased, &frame);
        for k in 0..a.len() {
            let drift = b.w_x[k] - a.w_x[k];
            assert!((drift - 0.05 * a.t[k]).abs() < 1e-9, "{k}");
        }
    }

    #[test]
    fn horizontal_frame_reports_yaw_offset() {
        let traj = shake(PatternKind::Circle, 1.1, 0.0);
        let imu = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
        let cfg = FrameConfig {
            yaw_offset: 0.35,
            ..Default::default()
        };
        let frame = estimate_wcs_frame(&imu, &cfg).unwrap();
        assert_eq!(frame.alpha0, 0.35);
        assert!(frame.tilt < 1e-12);
        assert!(frame.is_horizontal());
        assert!(frame.vertical_error(0, &traj.samples[0].orientation) < 1e-12);
        // the phone X axis sits at -alpha0 in the estimated world frame
        let x = frame.rotations[0].transform_vector(&Vec3::x());
        assert!((x.y.atan2(x.x) + 0.35).abs() < 1e-12);
    }

    #[test]
    fn gyro_bias_drift_matches_analytic() {
        let traj = shake(PatternKind::Mixed, 0.0, 0.0);
        let model = ImuErrorModel {
            gyro_bias: Vec3::new(0.0, 0.0, 0.01),
            ..ImuErrorModel::perfect()
        };
        let imu = synthesize_imu(&traj, &model, &mut rng());
        let frame = estimate_wcs_frame(&imu, &FrameConfig::default()).unwrap();
        for (k, q) in frame.rotations.iter().enumerate() {
            let t = frame.t[k];
            let x = q.transform_vector(&Vec3::x());
            let yaw = x.y.atan2(x.x);
            assert!((yaw - 0.01 * t).abs() < 1e-9);
        }
        let end = *frame.t.last().unwrap();
        assert!(0.01 * end <= 0.05 + 1e-9, "drift over {end} s");
        assert!(frame.max_orthonormality_error() < 1e-9);
    }

    #[test]
    fn tilted_phone_follows_gravity() {
        let traj = shake(PatternKind::Rectangle, 0.0, 20f64.to_radians());
        let imu = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
        let frame = estimate_wcs_frame(&imu, &FrameConfig::default()).unwrap();
        assert!((frame.tilt - 20f64.to_radians()).abs() < 1e-9);
        assert!(!frame.is_horizontal());
        assert!(!frame.disagrees_with(&traj.samples[0].orientation));

        // a horizontal accelerometer bias pulls the estimated vertical away
        let biased = ImuErrorModel::perfect().with_accel_bias(Vec3::new(0.3, 0.0, 0.0));
        let imu = synthesize_imu(&traj, &biased, &mut rng());
        let frame = estimate_wcs_frame(&imu, &FrameConfig::default()).unwrap();
        let expected = (0.3f64 / GRAVITY).atan();
        assert!((frame.vertical_error(0, &traj.samples[0].orientation) - expected).abs() < 1e-9);
        assert!(frame.disagrees_with(&traj.samples[0].orientation));
    }

    #[test]
    fn moving_init_is_rejected() {
        let spec = MotionPatternSpec {
            pattern: PatternKind::Mixed,
            amplitude: 0.1,
            peak_speed: 2.0,
            rest_before: 0.0,
            ..Default::default()
        };
        let traj = gen_trajectory(&spec, &WorldConfig::default()).unwrap();
        let imu = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
        assert!(matches!(
            estimate_wcs_frame(&imu, &FrameConfig::default()),
            Err(Error::NotStatic { .. })
        ));
    }

    #[test]
    fn zero_motion_zero_integrals() {
        let traj = Trajectory::from_motion(
            crate::scenario::Motion::Static {
                position: Vec3::new(1.0, 2.0, 0.0),
            },
            UnitQuaternion::identity(),
            2.0,
            200.0,
        );
        let imu = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
        let frame = estimate_wcs_frame(&imu, &FrameConfig::default()).unwrap();
        let ints = integrate_motion(&imu, &frame);
        assert!(ints.w_x.iter().chain(&ints.w_y).all(|w| *w == 0.0));
    }

    #[test]
    fn csv_header() {
        let traj = shake(PatternKind::Circle, 0.0, 0.0);
        let imu = synthesize_imu(&traj, &ImuErrorModel::perfect(), &mut rng());
        let mut buf = Vec::new();
        imu.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,ax,ay,az,gx,gy,gz\n"));
        assert_eq!(text.lines().count(), imu.len() + 1);
    }
}
