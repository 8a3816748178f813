use crate::{Error, Result};

/// Worst-case direction and position error caused by the shake itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleErrorBound {
    /// Maximum angle error, radians.
    pub angle: f64,
    /// Resulting position error at a known range, m.
    pub distance: f64,
}

/// Error bound for a shake of range `d` at distance `distance` from the source.
pub fn bound_angle_error(d: f64, distance: f64) -> Result<AngleErrorBound> {
    if !(d >= 0.0) || !(distance > 0.0) {
        return Err(Error::invariant("d", "need d >= 0 and L > 0"));
    }
    if d >= distance {
        return Err(Error::ShakeExceedsDistance { d, distance });
    }
    let angle = (d / distance).asin();
    Ok(AngleErrorBound {
        angle,
        distance: 2.0 * distance * (angle / 2.0).sin(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_shake() {
        let b = bound_angle_error(0.0, 3.0).unwrap();
        assert_eq!(b.angle, 0.0);
        assert_eq!(b.distance, 0.0);
    }

    #[test]
    fn shake_exceeding_range() {
        assert!(matches!(
            bound_angle_error(1.0, 1.0),
            Err(Error::ShakeExceedsDistance { .. })
        ));
    }

    #[test]
    fn short_and_long_range() {
        let near = bound_angle_error(0.1, 1.0).unwrap().angle.to_degrees();
        let far = bound_angle_error(0.1, 30.0).unwrap().angle.to_degrees();
        assert!((near - 5.7).abs() < 0.05, "{near}");
        assert!((far - 0.19).abs() < 0.005, "{far}");
    }

    proptest! {
        #[test]
        fn position_error_close_to_shake_range(d in 1e-4f64..1.0, ratio in 10.0f64..1e4) {
            let b = bound_angle_error(d, d * ratio).unwrap();
            let r = b.distance / d;
            prop_assert!((1.0..=1.01).contains(&r), "ratio {}", r);
        }
    }
}
