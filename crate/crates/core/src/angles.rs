//! Angle conventions shared by the direction and localization code.
//!
//! Absolute WCS directions live in `[-pi/2, 3pi/2)`, relative angles in
//! `(-pi, pi]`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_pi(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

/// Wraps an angle into `[-pi/2, 3pi/2)`.
pub fn wrap_direction(angle: f64) -> f64 {
    (angle + FRAC_PI_2).rem_euclid(TAU) - FRAC_PI_2
}

/// Smallest absolute difference between two angles, in `[0, pi]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_pi_range() {
        assert_eq!(wrap_pi(PI), PI);
        assert!((wrap_pi(-PI) - PI).abs() < 1e-15);
        assert!((wrap_pi(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_pi(185f64.to_radians()) + 175f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn wrap_direction_range() {
        assert!((wrap_direction(-FRAC_PI_2) + FRAC_PI_2).abs() < 1e-15);
        assert!((wrap_direction(3.0 * FRAC_PI_2) + FRAC_PI_2).abs() < 1e-12);
        assert!((wrap_direction(5.0 * PI / 4.0) - 5.0 * PI / 4.0).abs() < 1e-12);
    }
}
