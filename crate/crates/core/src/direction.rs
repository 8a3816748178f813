//! Source direction from Doppler shifts and inertial velocity sums.
//!
//! The 2D solver regresses `(v_a / f_a) f[k]` on `[w_x, w_y, 1, t]`; the last
//! two columns absorb the unknown initial velocity and a constant
//! accelerometer bias.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::angles::{wrap_direction, wrap_pi};
use crate::dsp::{interpolate, PhaseTrack};
use crate::imu::{FrameEstimate, MotionIntegrals};
use crate::scenario::WorldConfig;
use crate::{Error, Result, Vec3};

/// Conditioning of the scaled normal equations above which the solver
/// switches to an orthogonal factorization.
const NORMAL_EQUATION_LIMIT: f64 = 1e8;
/// Relative singular value below which a column is treated as dependent.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionEstimate {
    pub lambda_x: f64,
    pub lambda_y: f64,
    /// `lambda_x v_x[0] + lambda_y v_y[0]`, m/s.
    pub lambda_0: f64,
    /// Coefficient of `t`: `lambda_x e_x + lambda_y e_y` where `e` is the true
    /// minus the measured acceleration (minus the bias), m/s^2.
    pub lambda_1: f64,
    /// Direction in the estimated world frame, `[-pi/2, 3pi/2)`.
    pub alpha: f64,
    /// Direction relative to the phone, `(-pi, pi]`, once a frame is known.
    pub alpha_r: Option<f64>,
    pub residual_hz: f64,
    pub n: usize,
}

impl DirectionEstimate {
    pub fn horizontal_norm(&self) -> f64 {
        self.lambda_x.hypot(self.lambda_y)
    }

    pub fn with_frame(mut self, frame: &FrameEstimate) -> Result<Self> {
        self.alpha_r = Some(relative_angle(self.alpha, frame)?);
        Ok(self)
    }
}

/// Least squares with unit-norm column scaling. Columns that are zero or
/// numerically dependent are reported by name.
fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>, names: &[&str]) -> Result<DVector<f64>> {
    let cols = a.ncols();
    if a.nrows() < cols {
        return Err(Error::InsufficientData(format!(
            "{} samples for {} unknowns",
            a.nrows(),
            cols
        )));
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let zero: Vec<String> = (0..cols)
        .filter(|&j| !(norms[j] > 0.0) || !norms[j].is_finite())
        .map(|j| names[j].to_string())
        .collect();
    if !zero.is_empty() {
        return Err(Error::RankDeficient { directions: zero });
    }
    let mut scaled = a.clone();
    for (j, n) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / n);
    }
    let svd = scaled.clone().svd(false, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if s_min <= RANK_TOLERANCE * s_max {
        let v_t = svd.v_t.expect("requested right singular vectors");
        let k = svd.singular_values.imin();
        let null = v_t.row(k);
        let directions = (0..cols)
            .filter(|&j| null[j].abs() > 0.3)
            .map(|j| names[j].to_string())
            .collect();
        return Err(Error::RankDeficient { directions });
    }
    let condition = (s_max / s_min).powi(2);
    let x = if condition <= NORMAL_EQUATION_LIMIT {
        let ata = scaled.transpose() * &scaled;
        let atb = scaled.transpose() * b;
        match ata.cholesky() {
            Some(ch) => ch.solve(&atb),
            None => qr_solve(&scaled, b),
        }
    } else {
        qr_solve(&scaled, b)
    };
    Ok(DVector::from_iterator(cols, (0..cols).map(|j| x[j] / norms[j])))
}

fn qr_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let cols = a.ncols();
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    let r = qr.r();
    r.rows(0, cols)
        .into_owned()
        .solve_upper_triangular(&qtb.rows(0, cols).into_owned())
        .expect("full rank after the singular value check")
}

/// Doppler shifts resampled at the IMU timestamps by linear interpolation.
pub fn align_to_imu(track: &PhaseTrack, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| interpolate(&track.t, &track.f_shift, t)).collect()
}

/// Solves `[w_x w_y 1 t] [lx ly l0 l1]^T = (v_a / f_a) f` over the given
/// samples. Sums and time are re-based at the first sample so that `l0`
/// carries the velocity at that instant.
pub fn regress_direction(
    integrals: &MotionIntegrals,
    f_shift: &[f64],
    frequency: f64,
    world: &WorldConfig,
) -> Result<DirectionEstimate> {
    let n = integrals.len().min(f_shift.len());
    if n < 4 {
        return Err(Error::InsufficientData(format!("{n} aligned samples, need at least 4")));
    }
    let scale = world.speed_of_sound / frequency;
    let (t0, wx0, wy0) = (integrals.t[0], integrals.w_x[0], integrals.w_y[0]);
    let a = DMatrix::from_fn(n, 4, |k, j| match j {
        0 => integrals.w_x[k] - wx0,
        1 => integrals.w_y[k] - wy0,
        2 => 1.0,
        _ => integrals.t[k] - t0,
    });
    let b = DVector::from_iterator(n, f_shift[..n].iter().map(|f| scale * f));
    let x = least_squares(&a, &b, &["x", "y", "offset", "drift"])?;
    let residual = &b - &a * &x;
    let rms = (residual.norm_squared() / n as f64).sqrt() / scale;
    Ok(DirectionEstimate {
        lambda_x: x[0],
        lambda_y: x[1],
        lambda_0: x[2],
        lambda_1: x[3],
        alpha: to_2d_angle(x[0], x[1])?,
        alpha_r: None,
        residual_hz: rms,
        n,
    })
}

/// Full 3D direction from velocities and Doppler shifts,
/// `lambda . u[k] = (v_a / f_a) f[k]`.
pub fn direction_3d(velocities: &[Vec3], f_shift: &[f64], frequency: f64, world: &WorldConfig) -> Result<Vec3> {
    let n = velocities.len().min(f_shift.len());
    let scale = world.speed_of_sound / frequency;
    let a = DMatrix::from_fn(n, 3, |k, j| velocities[k][j]);
    let b = DVector::from_iterator(n, f_shift[..n].iter().map(|f| scale * f));
    let x = least_squares(&a, &b, &["x", "y", "z"])?;
    Ok(Vec3::new(x[0], x[1], x[2]))
}

/// Two-branch arcsine conversion of a horizontal direction vector into
/// `[-pi/2, 3pi/2)`.
pub fn to_2d_angle(lambda_x: f64, lambda_y: f64) -> Result<f64> {
    let norm = lambda_x.hypot(lambda_y);
    if !(norm > 0.0) {
        return Err(Error::Degenerate("zero direction vector".into()));
    }
    let s = (lambda_y / norm).clamp(-1.0, 1.0).asin();
    let alpha = if lambda_x >= 0.0 { s } else { PI - s };
    Ok(wrap_direction(alpha))
}

/// Direction measured clockwise from the phone's Y axis,
/// `pi/2 - alpha - alpha0`, in `(-pi, pi]`.
pub fn relative_angle(alpha: f64, frame: &FrameEstimate) -> Result<f64> {
    if !frame.is_horizontal() {
        return Err(Error::Tilted {
            tilt_deg: frame.tilt.to_degrees(),
            tolerance_deg: frame.tilt_tolerance.to_degrees(),
        });
    }
    Ok(wrap_pi(FRAC_PI_2 - alpha - frame.alpha0))
}

/// Direction from four constant-speed rectangle legs heading north, east,
/// south and west. Maximizes the Gaussian likelihood of
/// `u1 sin a = c f1, u2 cos a = c f2, -u3 sin a = c f3, -u4 cos a = c f4`.
pub fn simple_rectangle_direction(u: [f64; 4], f: [f64; 4], frequency: f64, world: &WorldConfig) -> Result<f64> {
    if u.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invariant("u", "leg speeds must be positive"));
    }
    let c = world.speed_of_sound / frequency;
    let y: Vec<f64> = f.iter().map(|fi| c * fi).collect();
    if y.iter().all(|v| v.abs() < 1e-12) {
        return Err(Error::Degenerate("all frequency shifts are zero".into()));
    }
    if y[0] * y[2] > 0.0 || y[1] * y[3] > 0.0 {
        return Err(Error::InconsistentSigns(format!(
            "opposite legs share a sign: f = {f:?}"
        )));
    }
    let cost = |a: f64| {
        let (s, co) = a.sin_cos();
        (u[0] * s - y[0]).powi(2) + (u[1] * co - y[1]).powi(2) + (-u[2] * s - y[2]).powi(2) + (-u[3] * co - y[3]).powi(2)
    };
    // coarse scan, then golden-section refinement around the best cell
    let steps = 720;
    let cell = 2.0 * PI / steps as f64;
    let best = (0..steps)
        .map(|i| -FRAC_PI_2 + i as f64 * cell)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .expect("non-empty scan");
    let (mut lo, mut hi) = (best - cell, best + cell);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-13 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if cost(m1) < cost(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    Ok(wrap_direction((lo + hi) / 2.0))
}

/// Index range of the shake session: first to last sample whose
/// horizontal acceleration, smoothed over `smooth` samples, exceeds
/// `threshold`, widened by `margin` samples on each side.
pub fn detect_shake(integrals: &MotionIntegrals, threshold: f64, smooth: usize, margin: usize) -> Option<std::ops::Range<usize>> {
    let n = integrals.len();
    let energy: Vec<f64> = (0..n).map(|k| integrals.a_x[k].hypot(integrals.a_y[k])).collect();
    let h = smooth / 2;
    let smoothed: Vec<f64> = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(h);
            let hi = (k + h + 1).min(n);
            energy[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let first = smoothed.iter().position(|&e| e > threshold)?;
    let last = smoothed.iter().rposition(|&e| e > threshold)?;
    Some(first.saturating_sub(margin)..(last + margin + 1).min(n))
}

/// One row of the direction CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionRecord {
    pub trial: usize,
    pub anchor_id: u32,
    pub estimate: DirectionEstimate,
}

/// CSV rows `trial,anchor_id,lambda_x,lambda_y,lambda_0,lambda_1,alpha_deg,alpha_r_deg,residual_hz,n`.
pub fn write_direction_csv<W: std::io::Write>(records: &[DirectionRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trial", "anchor_id", "lambda_x", "lambda_y", "lambda_0", "lambda_1", "alpha_deg", "alpha_r_deg", "residual_hz", "n",
    ])?;
    for r in records {
        let e = &r.estimate;
        w.write_record([
            r.trial.to_string(),
            r.anchor_id.to_string(),
            format!("{:.9}", e.lambda_x),
            format!("{:.9}", e.lambda_y),
            format!("{:.9}", e.lambda_0),
            format!("{:.9}", e.lambda_1),
            format!("{:.6}", e.alpha.to_degrees()),
            e.alpha_r.map_or(String::new(), |a| format!("{:.6}", a.to_degrees())),
            format!("{:.6}", e.residual_hz),
            e.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
