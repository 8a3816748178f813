use super::{MotionPatternSpec, PatternKind, Sense, ShakePlane, WorldConfig};
use crate::{Result, Vec2, Vec3};
use nalgebra::UnitQuaternion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

/// Quintic minimum-jerk ramp and its first two derivatives on `u` in [0, 1].
pub fn min_jerk(u: f64) -> (f64, f64, f64) {
    let u = u.clamp(0.0, 1.0);
    let v = 1.0 - u;
    (
        u * u * u * (10.0 - 15.0 * u + 6.0 * u * u),
        30.0 * u * u * v * v,
        60.0 * u * v * (1.0 - 2.0 * u),
    )
}

/// Integral of [`min_jerk`] from 0 to `u`.
fn min_jerk_integral(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    let u4 = u.powi(4);
    u4 * (2.5 - 3.0 * u + u * u)
}

/// A smooth piece of a path parametrized by arc length.
#[derive(Debug, Clone, PartialEq)]
pub enum PathSegment {
    Line {
        start: Vec3,
        end: Vec3,
    },
    /// Arc `center + radius (e1 cos θ + e2 sin θ)` for θ from `start_angle`
    /// to `start_angle + sweep`.
    Arc {
        center: Vec3,
        radius: f64,
        start_angle: f64,
        sweep: f64,
        e1: Vec3,
        e2: Vec3,
    },
}

impl PathSegment {
    pub fn length(&self) -> f64 {
        match self {
            PathSegment::Line { start, end } => (end - start).norm(),
            PathSegment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    /// Point, unit tangent and curvature vector at arc length `s`.
    pub fn eval(&self, s: f64) -> (Vec3, Vec3, Vec3) {
        match self {
            PathSegment::Line { start, end } => {
                let dir = (end - start).normalize();
                (start + dir * s, dir, Vec3::zeros())
            }
            PathSegment::Arc {
                center,
                radius,
                start_angle,
                sweep,
                e1,
                e2,
            } => {
                let sign = sweep.signum();
                let th = start_angle + sign * s / radius;
                let (sn, cs) = th.sin_cos();
                let radial = e1 * cs + e2 * sn;
                (
                    center + radial * *radius,
                    (e2 * cs - e1 * sn) * sign,
                    -radial / *radius,
                )
            }
        }
    }

    pub fn start(&self) -> Vec3 {
        self.eval(0.0).0
    }

    pub fn end(&self) -> Vec3 {
        self.eval(self.length()).0
    }
}

/// Connected segments with linear extension beyond both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    segments: Vec<PathSegment>,
    offsets: Vec<f64>,
    length: f64,
}

impl Path {
    pub fn new(segments: Vec<PathSegment>) -> Self {
        let mut offsets = Vec::with_capacity(segments.len());
        let mut length = 0.0;
        for seg in &segments {
            offsets.push(length);
            length += seg.length();
        }
        Self {
            segments,
            offsets,
            length,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn eval(&self, s: f64) -> (Vec3, Vec3, Vec3) {
        if s <= 0.0 {
            let (p, t, _) = self.segments[0].eval(0.0);
            return (p + t * s, t, Vec3::zeros());
        }
        if s >= self.length {
            let last = self.segments.last().expect("non-empty path");
            let (p, t, _) = last.eval(last.length());
            return (p + t * (s - self.length), t, Vec3::zeros());
        }
        let i = self.offsets.partition_point(|&o| o <= s).saturating_sub(1);
        self.segments[i].eval(s - self.offsets[i])
    }
}

/// A segment traversed from rest to rest with a minimum-jerk time law.
#[derive(Debug, Clone, PartialEq)]
pub struct Leg {
    pub start_time: f64,
    pub duration: f64,
    pub segment: PathSegment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomShake {
    origin: Vec3,
    e1: Vec3,
    e2: Vec3,
    start_time: f64,
    duration: f64,
    ramp: f64,
    /// (axis, amplitude, angular frequency, phase)
    components: Vec<(usize, f64, f64, f64)>,
}

impl RandomShake {
    fn window(&self, tau: f64) -> (f64, f64, f64) {
        if tau < self.ramp {
            let (w, w1, w2) = min_jerk(tau / self.ramp);
            (w, w1 / self.ramp, w2 / (self.ramp * self.ramp))
        } else if tau > self.duration - self.ramp {
            let (w, w1, w2) = min_jerk((self.duration - tau) / self.ramp);
            (w, -w1 / self.ramp, w2 / (self.ramp * self.ramp))
        } else {
            (1.0, 0.0, 0.0)
        }
    }

    fn offset(&self, tau: f64) -> (Vec2, Vec2, Vec2) {
        let mut r = [Vec2::zeros(); 3];
        for &(axis, a, w, ph) in &self.components {
            let (sn, cs) = (w * tau + ph).sin_cos();
            r[0][axis] += a * sn;
            r[1][axis] += a * w * cs;
            r[2][axis] -= a * w * w * sn;
        }
        let (w, w1, w2) = self.window(tau);
        (
            r[0] * w,
            r[1] * w + r[0] * w1,
            r[2] * w + r[1] * (2.0 * w1) + r[0] * w2,
        )
    }

    fn state(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let tau = t - self.start_time;
        if tau <= 0.0 || tau >= self.duration {
            return (self.origin, Vec3::zeros(), Vec3::zeros());
        }
        let (p, v, a) = self.offset(tau);
        let lift = |q: Vec2| self.e1 * q.x + self.e2 * q.y;
        (self.origin + lift(p), lift(v), lift(a))
    }

    fn extremes(&self) -> (f64, f64) {
        let n = 4000;
        (0..=n)
            .map(|i| self.offset(self.duration * i as f64 / n as f64))
            .fold((0.0f64, 0.0f64), |(pm, vm), (p, v, _)| {
                (pm.max(p.norm()), vm.max(v.norm()))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkMotion {
    path: Path,
    speed: f64,
    ramp: f64,
    start_time: f64,
    moving_time: f64,
    gait: super::GaitSpec,
}

impl WalkMotion {
    fn weight(&self, tau: f64) -> (f64, f64, f64) {
        if tau < self.ramp {
            let (w, w1, w2) = min_jerk(tau / self.ramp);
            (w, w1 / self.ramp, w2 / (self.ramp * self.ramp))
        } else if tau > self.moving_time - self.ramp {
            let (w, w1, w2) = min_jerk((self.moving_time - tau) / self.ramp);
            (w, -w1 / self.ramp, w2 / (self.ramp * self.ramp))
        } else {
            (1.0, 0.0, 0.0)
        }
    }

    fn base_distance(&self, tau: f64) -> f64 {
        let (v, r) = (self.speed, self.ramp);
        if tau < r {
            v * r * min_jerk_integral(tau / r)
        } else if tau > self.moving_time - r {
            self.path.length() - v * r * min_jerk_integral((self.moving_time - tau) / r)
        } else {
            v * r / 2.0 + v * (tau - r)
        }
    }

    fn state(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        let tau = (t - self.start_time).clamp(0.0, self.moving_time);
        let (w, w1, w2) = self.weight(tau);
        let g = &self.gait;
        let om = TAU * g.step_frequency;
        let (sn, cs) = (om * tau).sin_cos();
        let mut s = self.base_distance(tau);
        let mut sd = self.speed * w;
        let mut sdd = self.speed * w1;
        let mut bob = (0.0, 0.0, 0.0);
        if om > 0.0 {
            let a = g.speed_amplitude;
            s += a / om * sn * w;
            sd += a * cs * w + a / om * sn * w1;
            sdd += -a * om * sn * w + 2.0 * a * cs * w1 + a / om * sn * w2;
            let b = g.vertical_amplitude;
            bob = (
                b * sn * w,
                b * om * cs * w + b * sn * w1,
                -b * om * om * sn * w + 2.0 * b * om * cs * w1 + b * sn * w2,
            );
        }
        let (p, tan, curv) = self.path.eval(s);
        let z = Vec3::z();
        (
            p + z * bob.0,
            tan * sd + z * bob.1,
            curv * (sd * sd) + tan * sdd + z * bob.2,
        )
    }
}

/// Continuous-time phone motion, evaluated analytically.
#[derive(Debug, Clone, PartialEq)]
pub enum Motion {
    Static {
        position: Vec3,
    },
    Linear {
        start: Vec3,
        velocity: Vec3,
    },
    /// Rest-to-rest legs in time order, starting and ending at `origin`.
    Legs {
        origin: Vec3,
        legs: Vec<Leg>,
    },
    Random(RandomShake),
    Walk(WalkMotion),
}

impl Motion {
    /// Position, velocity and acceleration at time `t`.
    pub fn state(&self, t: f64) -> (Vec3, Vec3, Vec3) {
        match self {
            Motion::Static { position } => (*position, Vec3::zeros(), Vec3::zeros()),
            Motion::Linear { start, velocity } => (start + velocity * t, *velocity, Vec3::zeros()),
            Motion::Legs { origin, legs } => {
                let i = legs.partition_point(|l| l.start_time <= t);
                if i == 0 {
                    return (*origin, Vec3::zeros(), Vec3::zeros());
                }
                let leg = &legs[i - 1];
                let len = leg.segment.length();
                let u = (t - leg.start_time) / leg.duration;
                if u >= 1.0 {
                    return (leg.segment.end(), Vec3::zeros(), Vec3::zeros());
                }
                let (s, s1, s2) = min_jerk(u);
                let (p, tan, curv) = leg.segment.eval(len * s);
                let sd = len * s1 / leg.duration;
                let sdd = len * s2 / (leg.duration * leg.duration);
                (p, tan * sd, curv * (sd * sd) + tan * sdd)
            }
            Motion::Random(r) => r.state(t),
            Motion::Walk(w) => w.state(t),
        }
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.state(t).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    /// Rotation from phone (UCS) to world (WCS) coordinates.
    pub orientation: UnitQuaternion<f64>,
}

/// Ground-truth phone motion sampled on a uniform grid starting at t = 0.
///
/// The underlying analytic motion is retained so callers can evaluate it at
/// arbitrary times (e.g. at audio rate) without storing a dense copy.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    motion: Arc<Motion>,
    orientation: UnitQuaternion<f64>,
    sample_rate: f64,
    duration: f64,
}

impl Trajectory {
    pub fn from_motion(
        motion: Motion,
        orientation: UnitQuaternion<f64>,
        duration: f64,
        sample_rate: f64,
    ) -> Self {
        let mut traj = Self {
            samples: Vec::new(),
            motion: Arc::new(motion),
            orientation,
            sample_rate,
            duration,
        };
        traj.samples = traj.sample_grid(sample_rate);
        traj
    }

    fn sample_grid(&self, rate: f64) -> Vec<TrajectorySample> {
        let n = (self.duration * rate + 1e-9).floor() as usize;
        (0..=n).map(|k| self.state_at(k as f64 / rate)).collect()
    }

    pub fn state_at(&self, t: f64) -> TrajectorySample {
        let (position, velocity, acceleration) = self.motion.state(t);
        TrajectorySample {
            t,
            position,
            velocity,
            acceleration,
            orientation: self.orientation,
        }
    }

    /// Copy of this trajectory sampled at `rate`.
    pub fn densify(&self, rate: f64) -> Trajectory {
        let mut traj = self.clone();
        traj.sample_rate = rate;
        traj.samples = self.sample_grid(rate);
        traj
    }

    pub fn motion(&self) -> &Motion {
        &self.motion
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn max_speed(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.velocity.norm())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t", "px", "py", "pz", "vx", "vy", "vz", "ax", "ay", "az", "qw", "qx", "qy", "qz",
        ])?;
        for s in &self.samples {
            let q = s.orientation.quaternion();
            w.serialize([
                s.t,
                s.position.x,
                s.position.y,
                s.position.z,
                s.velocity.x,
                s.velocity.y,
                s.velocity.z,
                s.acceleration.x,
                s.acceleration.y,
                s.acceleration.z,
                q.w,
                q.i,
                q.j,
                q.k,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Closed loop of unit size in the (e1, e2) plane, anticlockwise, starting
/// and ending at the origin.
fn unit_loop(pattern: PatternKind) -> Vec<PathSegment> {
    let p = |x: f64, y: f64| Vec3::new(x, y, 0.0);
    let line = |a: Vec3, b: Vec3| PathSegment::Line { start: a, end: b };
    match pattern {
        PatternKind::Rectangle => vec![
            line(p(0.0, 0.0), p(1.0, 0.0)),
            line(p(1.0, 0.0), p(1.0, 1.0)),
            line(p(1.0, 1.0), p(0.0, 1.0)),
            line(p(0.0, 1.0), p(0.0, 0.0)),
        ],
        PatternKind::Circle => vec![PathSegment::Arc {
            center: p(0.0, 0.5),
            radius: 0.5,
            start_angle: -PI / 2.0,
            sweep: TAU,
            e1: Vec3::x(),
            e2: Vec3::y(),
        }],
        PatternKind::Mixed => vec![
            line(p(0.0, 0.0), p(1.0, 0.0)),
            line(p(1.0, 0.0), p(1.0, 0.5)),
            PathSegment::Arc {
                center: p(0.5, 0.5),
                radius: 0.5,
                start_angle: 0.0,
                sweep: PI,
                e1: Vec3::x(),
                e2: Vec3::y(),
            },
            line(p(0.0, 0.5), p(0.0, 0.0)),
        ],
        PatternKind::Arbitrary | PatternKind::WalkPath => unreachable!("not a loop pattern"),
    }
}

/// Maps unit-loop coordinates into the world: scale, optional mirror for
/// clockwise loops, then the plane basis.
fn place_segment(seg: &PathSegment, scale: f64, mirror: bool, origin: Vec3, e1: Vec3, e2: Vec3) -> PathSegment {
    let m = if mirror { -1.0 } else { 1.0 };
    let map = |q: Vec3| origin + e1 * (m * q.x * scale) + e2 * (q.y * scale);
    match seg {
        PathSegment::Line { start, end } => PathSegment::Line {
            start: map(*start),
            end: map(*end),
        },
        PathSegment::Arc {
            center,
            radius,
            start_angle,
            sweep,
            ..
        } => PathSegment::Arc {
            center: map(*center),
            radius: radius * scale,
            start_angle: *start_angle,
            sweep: *sweep,
            e1: e1 * m,
            e2,
        },
    }
}

fn plane_basis(spec: &MotionPatternSpec) -> (Vec3, Vec3) {
    let e1 = Vec3::new(spec.yaw.cos(), spec.yaw.sin(), 0.0);
    let e2 = match spec.plane {
        ShakePlane::Horizontal => Vec3::new(-spec.yaw.sin(), spec.yaw.cos(), 0.0),
        ShakePlane::Vertical => Vec3::z(),
    };
    (e1, e2)
}

fn loop_motion(spec: &MotionPatternSpec) -> (Motion, f64) {
    let (e1, e2) = plane_basis(spec);
    let unit = unit_loop(spec.pattern);
    let leg_time = |seg: &PathSegment| 1.875 * seg.length() / spec.peak_speed;
    let loop_time: f64 = unit
        .iter()
        .map(|s| leg_time(&place_segment(s, spec.amplitude, false, spec.start, e1, e2)))
        .sum();
    let loops = ((spec.duration / loop_time).floor() as usize).max(1);
    let mut legs = Vec::new();
    let mut t = spec.rest_before;
    for i in 0..loops {
        let mirror = spec.senses[i % spec.senses.len()] == Sense::Clockwise;
        for seg in &unit {
            let segment = place_segment(seg, spec.amplitude, mirror, spec.start, e1, e2);
            let duration = leg_time(&segment);
            legs.push(Leg {
                start_time: t,
                duration,
                segment,
            });
            t += duration;
        }
    }
    let motion = Motion::Legs {
        origin: spec.start,
        legs,
    };
    (motion, t + spec.rest_after)
}

fn random_motion(spec: &MotionPatternSpec) -> (Motion, f64) {
    let (e1, e2) = plane_basis(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut components = Vec::new();
    for axis in 0..2 {
        for _ in 0..4 {
            let a = rng.random_range(0.5..1.0);
            let f = rng.random_range(0.8..2.5);
            let ph = rng.random_range(0.0..TAU);
            components.push((axis, a, TAU * f, ph));
        }
    }
    let mut shake = RandomShake {
        origin: spec.start,
        e1,
        e2,
        start_time: spec.rest_before,
        duration: spec.duration,
        ramp: (spec.duration / 4.0).min(0.5),
        components,
    };
    // alternate extent and speed normalization until both settle
    for _ in 0..6 {
        let (pmax, _) = shake.extremes();
        let ka = spec.amplitude / 2.0 / pmax;
        shake.components.iter_mut().for_each(|c| c.1 *= ka);
        let (_, vmax) = shake.extremes();
        let kw = spec.peak_speed / vmax;
        shake.components.iter_mut().for_each(|c| c.2 *= kw);
    }
    let (pmax, _) = shake.extremes();
    let ka = spec.amplitude / 2.0 / pmax;
    shake.components.iter_mut().for_each(|c| c.1 *= ka);
    let total = spec.rest_before + spec.duration + spec.rest_after;
    (Motion::Random(shake), total)
}

/// Polyline through `waypoints` with circular fillets of `radius` at corners.
pub fn filleted_path(waypoints: &[Vec2], z: f64, radius: f64) -> Path {
    let p3 = |q: Vec2| Vec3::new(q.x, q.y, z);
    let mut segments = Vec::new();
    let mut cursor = p3(waypoints[0]);
    for i in 1..waypoints.len() {
        let corner = p3(waypoints[i]);
        if i + 1 == waypoints.len() {
            segments.push(PathSegment::Line {
                start: cursor,
                end: corner,
            });
            break;
        }
        let next = p3(waypoints[i + 1]);
        let d1 = (corner - p3(waypoints[i - 1])).normalize();
        let d2 = (next - corner).normalize();
        let turn = (d1.x * d2.y - d1.y * d2.x).atan2(d1.dot(&d2));
        if turn.abs() < 1e-9 || radius <= 0.0 {
            segments.push(PathSegment::Line {
                start: cursor,
                end: corner,
            });
            cursor = corner;
            continue;
        }
        let half = (turn.abs() / 2.0).tan();
        let room = ((corner - cursor).norm()).min((next - corner).norm() / 2.0);
        let r = radius.min(room / half);
        let cut = r * half;
        let a = corner - d1 * cut;
        let normal = Vec3::new(-d1.y, d1.x, 0.0) * turn.signum();
        let center = a + normal * r;
        let rel = a - center;
        segments.push(PathSegment::Line {
            start: cursor,
            end: a,
        });
        segments.push(PathSegment::Arc {
            center,
            radius: r,
            start_angle: rel.y.atan2(rel.x),
            sweep: turn,
            e1: Vec3::x(),
            e2: Vec3::y(),
        });
        cursor = corner + d2 * cut;
    }
    Path::new(segments)
}

fn walk_motion(spec: &MotionPatternSpec) -> (Motion, f64) {
    let path = filleted_path(&spec.waypoints, spec.start.z, spec.corner_radius);
    let ramp = 1.0f64.min(path.length() / spec.peak_speed);
    let moving_time = path.length() / spec.peak_speed + ramp;
    let walk = WalkMotion {
        path,
        speed: spec.peak_speed,
        ramp,
        start_time: spec.rest_before,
        moving_time,
        gait: spec.gait,
    };
    let total = spec.rest_before + moving_time + spec.rest_after;
    (Motion::Walk(walk), total)
}

/// Samples the scripted motion at the IMU rate.
///
/// Use [`Trajectory::densify`] or [`Trajectory::state_at`] for audio-rate
/// evaluation.
pub fn gen_trajectory(spec: &MotionPatternSpec, world: &WorldConfig) -> Result<Trajectory> {
    spec.validate()?;
    if !(world.imu_sample_rate > 0.0) {
        return Err(crate::Error::invariant("world.imu_sample_rate_hz", "must be positive"));
    }
    let (motion, duration) = match spec.pattern {
        PatternKind::Mixed | PatternKind::Circle | PatternKind::Rectangle => loop_motion(spec),
        PatternKind::Arbitrary => random_motion(spec),
        PatternKind::WalkPath => walk_motion(spec),
    };
    Ok(Trajectory::from_motion(
        motion,
        spec.orientation(),
        duration,
        world.imu_sample_rate,
    ))
}
