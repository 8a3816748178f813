use super::pll::PhaseTrack;
use crate::scenario::WorldConfig;
use std::f64::consts::TAU;

/// Centered least-squares slope of `y` over windows of `2h + 1` samples,
/// per sample; the window shrinks symmetrically near the ends.
pub fn centered_slope(y: &[f64], h: usize) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    let direct = |k: usize, hh: usize| -> f64 {
        if hh == 0 {
            return if k + 1 < n { y[k + 1] - y[k] } else { y[k] - y[k - 1] };
        }
        let mut num = 0.0;
        for j in 1..=hh {
            num += j as f64 * (y[k + j] - y[k - j]);
        }
        let den = (hh * (hh + 1) * (2 * hh + 1)) as f64 / 3.0;
        num / den
    };
    // interior: running numerator N_k = sum_j j (y[k+j] - y[k-j]) with
    // exact recomputation every few thousand samples to bound roundoff
    let den = (h * (h + 1) * (2 * h + 1)) as f64 / 3.0;
    let mut num = 0.0;
    let mut sum = 0.0;
    for k in 0..n {
        let hh = h.min(k).min(n - 1 - k);
        if hh < h || h == 0 {
            out[k] = direct(k, hh);
            continue;
        }
        if k == h || (k - h).is_multiple_of(4096) {
            num = (1..=h).map(|j| j as f64 * (y[k + j] - y[k - j])).sum();
            sum = y[k - h..=k + h].iter().sum();
        } else {
            // N_k = N_{k-1} + h y[k-1-h] + (h+1) y[k+h] - S_k
            let prev_sum = sum;
            sum += y[k + h] - y[k - 1 - h];
            num += h as f64 * y[k - 1 - h] + h as f64 * y[k + h] - (prev_sum - y[k - 1 - h]);
        }
        out[k] = num / den;
    }
    out
}

/// Fills `f_shift`, `v_rel` and `s_rel` from `theta`.
///
/// `smooth_window` is the differentiation window in audio samples (odd);
/// it is rescaled for decimated tracks.
pub fn phase_to_kinematics(track: &mut PhaseTrack, world: &WorldConfig, smooth_window: usize) {
    let fs = track.sample_rate;
    let window = (smooth_window as f64 * fs / world.audio_sample_rate).round() as usize;
    let h = window / 2;
    let slope = centered_slope(&track.theta, h);
    track.f_shift = slope.iter().map(|s| s * fs / TAU).collect();
    let wavelength = world.speed_of_sound / track.frequency;
    track.v_rel = track.f_shift.iter().map(|f| wavelength * f).collect();
    let theta0 = track.theta.first().copied().unwrap_or(0.0);
    track.s_rel = track
        .theta
        .iter()
        .map(|th| wavelength / TAU * (th - theta0))
        .collect();
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(y: &[f64], h: usize) -> Vec<f64> {
        let n = y.len();
        (0..n)
            .map(|k| {
                let hh = h.min(k).min(n - 1 - k);
                if hh == 0 {
                    return if k + 1 < n { y[k + 1] - y[k] } else { y[k] - y[k - 1] };
                }
                // ordinary least squares on (j, y[k+j])
                let xs: Vec<f64> = (0..=2 * hh).map(|i| i as f64).collect();
                let ys = &y[k - hh..=k + hh];
                let mx = xs.iter().sum::<f64>() / xs.len() as f64;
                let my = ys.iter().sum::<f64>() / ys.len() as f64;
                let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
                let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
                sxy / sxx
            })
            .collect()
    }

    proptest! {
        #[test]
        fn running_slope_matches_least_squares(y in prop::collection::vec(-100.0f64..100.0, 2..300), h in 0usize..20) {
            let fast = centered_slope(&y, h);
            let slow = brute(&y, h);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn long_ramp_slope_is_exact() {
        let y: Vec<f64> = (0..100_000).map(|i| 0.01 * i as f64 + 3.0).collect();
        let s = centered_slope(&y, 220);
        assert!(s.iter().all(|v| (v - 0.01).abs() < 1e-9));
    }

    fn track(theta: Vec<f64>) -> PhaseTrack {
        PhaseTrack {
            frequency: 19000.0,
            sample_rate: 44100.0,
            t: (0..theta.len()).map(|i| i as f64 / 44100.0).collect(),
            theta,
            ..Default::default()
        }
    }

    #[test]
    fn one_cycle_is_one_wavelength() {
        let n = 1000;
        let mut tr = track((0..n).map(|i| TAU * i as f64 / (n - 1) as f64).collect());
        phase_to_kinematics(&mut tr, &WorldConfig::default(), 441);
        assert!((tr.s_rel[n - 1] - 340.0 / 19000.0).abs() < 1e-12);
    }

    #[test]
    fn constant_phase_is_still() {
        let mut tr = track(vec![1.3; 2000]);
        phase_to_kinematics(&mut tr, &WorldConfig::default(), 441);
        assert!(tr.f_shift.iter().all(|&f| f.abs() < 1e-9));
        assert!(tr.v_rel.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn displacement_is_integral_of_velocity() {
        let world = WorldConfig::default();
        let n = 5 * 44100;
        let theta: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 44100.0;
                40.0 * (1.3 * t).sin() + 5.0 * t
            })
            .collect();
        let mut tr = track(theta);
        phase_to_kinematics(&mut tr, &world, 441);
        let dt = 1.0 / 44100.0;
        let mut integral = 0.0;
        for i in 1..n {
            integral += 0.5 * (tr.v_rel[i] + tr.v_rel[i - 1]) * dt;
        }
        assert!((integral - tr.s_rel[n - 1]).abs() < 1e-4, "{} {}", integral, tr.s_rel[n - 1]);
    }
}
