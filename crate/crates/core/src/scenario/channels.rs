use crate::{Error, Result};

/// Assumed upper bound on hand speed, m/s.
pub const HAND_SPEED_MAX: f64 = 2.0;

/// Frequency-division layout of simultaneous anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlan {
    pub band_low: f64,
    pub band_high: f64,
    /// Minimum filter pass band per channel, Hz.
    pub pass_band: f64,
    /// Gap left between adjacent pass bands, Hz.
    pub guard: f64,
    pub centers: Vec<f64>,
}

impl ChannelPlan {
    pub fn capacity(&self) -> usize {
        self.centers.len()
    }

    /// Center spacing, Hz.
    pub fn spacing(&self) -> f64 {
        (self.band_high - self.band_low) / self.capacity() as f64
    }
}

/// Channel count by the rounded division of the band by the minimum pass
/// band `2 v_max f_a / v_a`; centers sit in equal slots across the band.
///
/// Rounding (rather than flooring) can leave slots a few Hz narrower than
/// the pass band; use [`plan_channels_with_guard`] for a strictly disjoint
/// layout.
pub fn plan_channels(
    band_low: f64,
    band_high: f64,
    v_max: f64,
    speed_of_sound: f64,
    carrier: f64,
) -> Result<ChannelPlan> {
    let pass_band = min_pass_band(band_low, band_high, v_max, speed_of_sound, carrier)?;
    let width = band_high - band_low;
    let capacity = (width / pass_band).round() as usize;
    layout(band_low, band_high, pass_band, 0.0, capacity)
}

/// Disjoint layout with `guard_fraction * pass_band` between neighbours.
pub fn plan_channels_with_guard(
    band_low: f64,
    band_high: f64,
    v_max: f64,
    speed_of_sound: f64,
    carrier: f64,
    guard_fraction: f64,
) -> Result<ChannelPlan> {
    if !(guard_fraction >= 0.0) {
        return Err(Error::invariant("guard_fraction", "must be >= 0"));
    }
    let pass_band = min_pass_band(band_low, band_high, v_max, speed_of_sound, carrier)?;
    let guard = guard_fraction * pass_band;
    let width = band_high - band_low;
    // n pass bands and n - 1 guards must fit
    let capacity = ((width + guard) / (pass_band + guard)).floor() as usize;
    layout(band_low, band_high, pass_band, guard, capacity)
}

fn min_pass_band(
    band_low: f64,
    band_high: f64,
    v_max: f64,
    speed_of_sound: f64,
    carrier: f64,
) -> Result<f64> {
    if !(band_high > band_low) {
        return Err(Error::invariant("band_high", "must exceed band_low"));
    }
    if !(speed_of_sound > 0.0) || !(carrier > 0.0) {
        return Err(Error::invariant("speed_of_sound", "speed of sound and carrier must be positive"));
    }
    if !(v_max > 0.0) {
        return Err(Error::Degenerate("zero pass band: v_max must be positive".into()));
    }
    Ok(2.0 * v_max * carrier / speed_of_sound)
}

fn layout(band_low: f64, band_high: f64, pass_band: f64, guard: f64, capacity: usize) -> Result<ChannelPlan> {
    if capacity == 0 {
        return Err(Error::BandTooNarrow {
            width_hz: band_high - band_low,
            pass_band_hz: pass_band,
        });
    }
    let slot = (band_high - band_low) / capacity as f64;
    let centers = (0..capacity)
        .map(|i| band_low + (i as f64 + 0.5) * slot)
        .collect();
    Ok(ChannelPlan {
        band_low,
        band_high,
        pass_band,
        guard,
        centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ultrasonic_band_holds_23_channels() {
        let plan = plan_channels(17000.0, 22050.0, 2.0, 340.0, 19000.0).unwrap();
        assert!((plan.pass_band - 223.529).abs() < 1e-3);
        assert_eq!(plan.capacity(), 23);
    }

    #[test]
    fn single_channel_fits() {
        let plan = plan_channels(17000.0, 17224.0, 2.0, 340.0, 19000.0).unwrap();
        assert_eq!(plan.capacity(), 1);
        assert!((plan.centers[0] - 17112.0).abs() < 1e-9);
    }

    #[test]
    fn zero_speed_is_degenerate() {
        assert!(plan_channels(17000.0, 22050.0, 0.0, 340.0, 19000.0).is_err());
    }

    #[test]
    fn too_narrow() {
        assert!(matches!(
            plan_channels(17000.0, 17050.0, 2.0, 340.0, 19000.0),
            Err(Error::BandTooNarrow { .. })
        ));
    }

    #[test]
    fn guarded_plan_is_disjoint() {
        let plan = plan_channels_with_guard(17000.0, 22050.0, 2.0, 340.0, 19000.0, 0.1).unwrap();
        assert_eq!(plan.capacity(), 20);
        assert!(plan.spacing() >= plan.pass_band + plan.guard - 1e-9);
    }

    proptest! {
        #[test]
        fn capacity_monotone(v1 in 0.1f64..5.0, dv in 0.0f64..5.0, w1 in 300.0f64..5000.0, dw in 0.0f64..3000.0) {
            let cap = |v: f64, w: f64| plan_channels(17000.0, 17000.0 + w, v, 340.0, 19000.0)
                .map(|p| p.capacity()).unwrap_or(0);
            prop_assert!(cap(v1 + dv, w1) <= cap(v1, w1));
            prop_assert!(cap(v1, w1 + dw) >= cap(v1, w1));
        }
    }
}
