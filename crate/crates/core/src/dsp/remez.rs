//! Parks-McClellan exchange for odd-length linear-phase (type I) filters.

use crate::{Error, Result};
use std::f64::consts::TAU;

/// Approximation band in normalized frequency (cycles per sample, 0 to 0.5).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub low: f64,
    pub high: f64,
    pub desired: f64,
    pub weight: f64,
}

/// Outcome of an exchange run.
#[derive(Debug, Clone, PartialEq)]
pub struct RemezDesign {
    pub coefficients: Vec<f64>,
    /// Weighted ripple of the final alternation.
    pub delta: f64,
    pub iterations: usize,
}

/// Barycentric weights `1 / prod_{i != k} (x_k - x_i)`, scaled by a common
/// factor to avoid overflow.
fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut log = vec![0.0; n];
    let mut sign = vec![1.0; n];
    for k in 0..n {
        let mut acc = 0.0;
        let mut s = 1.0;
        for i in 0..n {
            if i != k {
                let d = x[k] - x[i];
                acc -= d.abs().ln();
                if d < 0.0 {
                    s = -s;
                }
            }
        }
        log[k] = acc;
        sign[k] = s;
    }
    let top = log.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    log.iter()
        .zip(&sign)
        .map(|(l, s)| s * (l - top).exp())
        .collect()
}

struct Interpolant {
    x: Vec<f64>,
    w: Vec<f64>,
    c: Vec<f64>,
}

impl Interpolant {
    fn eval(&self, x: f64) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..self.x.len() {
            let d = x - self.x[k];
            if d == 0.0 {
                return self.c[k];
            }
            let t = self.w[k] / d;
            num += t * self.c[k];
            den += t;
        }
        num / den
    }
}

/// Equiripple type I design with `num_taps` (odd) coefficients.
pub fn remez(num_taps: usize, bands: &[Band], grid_density: usize) -> Result<RemezDesign> {
    if num_taps < 3 || num_taps.is_multiple_of(2) {
        return Err(Error::invariant("taps", format!("need an odd count >= 3, got {num_taps}")));
    }
    if bands.is_empty() {
        return Err(Error::invariant("bands", "no bands"));
    }
    for (i, b) in bands.iter().enumerate() {
        if !(0.0 <= b.low && b.low < b.high && b.high <= 0.5 && b.weight > 0.0) {
            return Err(Error::invariant("bands", format!("band {i} is malformed")));
        }
        if i > 0 && b.low <= bands[i - 1].high {
            return Err(Error::invariant("bands", "bands overlap or are unordered"));
        }
    }
    let m = (num_taps - 1) / 2;
    let r = m + 2;

    // dense grid; every point remembers its band
    let step = 0.5 / (grid_density.max(4) * r) as f64;
    let mut freq = Vec::new();
    let mut band_of = Vec::new();
    for (bi, b) in bands.iter().enumerate() {
        let n = ((b.high - b.low) / step).ceil().max(1.0) as usize;
        for j in 0..=n {
            freq.push(b.low + (b.high - b.low) * j as f64 / n as f64);
            band_of.push(bi);
        }
    }
    let ngrid = freq.len();
    if ngrid < r {
        return Err(Error::UnmeetableFilter("frequency grid smaller than alternation set".into()));
    }
    let xg: Vec<f64> = freq.iter().map(|f| (TAU * f).cos()).collect();
    let dg: Vec<f64> = band_of.iter().map(|&b| bands[b].desired).collect();
    let wg: Vec<f64> = band_of.iter().map(|&b| bands[b].weight).collect();

    let mut ext: Vec<usize> = (0..r).map(|j| j * (ngrid - 1) / (r - 1)).collect();
    let mut delta = 0.0;
    let mut interp = None;
    let mut iterations = 0;
    let mut err = vec![0.0; ngrid];

    for it in 0..100 {
        iterations = it + 1;
        let x: Vec<f64> = ext.iter().map(|&i| xg[i]).collect();
        let w = barycentric_weights(&x);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..r {
            let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
            num += w[k] * dg[ext[k]];
            den += w[k] * sgn / wg[ext[k]];
        }
        delta = num / den;
        let c: Vec<f64> = (0..r - 1)
            .map(|k| {
                let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                dg[ext[k]] - sgn * delta / wg[ext[k]]
            })
            .collect();
        let xi = x[..r - 1].to_vec();
        let wi = barycentric_weights(&xi);
        let f = Interpolant { x: xi, w: wi, c };
        for j in 0..ngrid {
            err[j] = wg[j] * (f.eval(xg[j]) - dg[j]);
        }
        interp = Some(f);

        let next = select_extrema(&err, &band_of, r, delta.abs())
            .unwrap_or_else(|| local_exchange(&err, &ext, delta));
        let max_err = err.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let converged = next == ext || (max_err - delta.abs()) <= 1e-7 * max_err;
        ext = next;
        if converged {
            break;
        }
    }

    let f = interp.expect("at least one iteration");
    let n = num_taps as f64;
    let amp: Vec<f64> = (0..=m).map(|j| f.eval((TAU * j as f64 / n).cos())).collect();
    let coefficients = (0..num_taps)
        .map(|i| {
            let k = i as f64 - m as f64;
            let mut s = amp[0];
            for (j, a) in amp.iter().enumerate().skip(1) {
                s += 2.0 * a * (TAU * j as f64 * k / n).cos();
            }
            s / n
        })
        .collect::<Vec<f64>>();
    // exact symmetry
    let mut h = coefficients;
    for i in 0..m {
        let avg = 0.5 * (h[i] + h[num_taps - 1 - i]);
        h[i] = avg;
        h[num_taps - 1 - i] = avg;
    }
    Ok(RemezDesign {
        coefficients: h,
        delta: delta.abs(),
        iterations,
    })
}

/// Moves each extremal point to the strongest error of its expected sign
/// between its neighbours; keeps the set size and the alternation.
fn local_exchange(err: &[f64], ext: &[usize], delta: f64) -> Vec<usize> {
    let r = ext.len();
    let base = if delta < 0.0 { 1.0 } else { -1.0 };
    let mut next = ext.to_vec();
    for k in 0..r {
        let sign = if k % 2 == 0 { base } else { -base };
        let lo = if k == 0 { 0 } else { next[k - 1] + 1 };
        let hi = if k + 1 == r { err.len() - 1 } else { ext[k + 1] - 1 };
        let mut best = ext[k].max(lo).min(hi);
        for j in lo..=hi {
            if sign * err[j] > sign * err[best] {
                best = j;
            }
        }
        next[k] = best;
    }
    next
}

/// New alternation set of `r` local extrema of `err`, or `None` if the
/// error does not alternate enough.
fn select_extrema(err: &[f64], band_of: &[usize], r: usize, floor: f64) -> Option<Vec<usize>> {
    let n = err.len();
    let mut cand: Vec<usize> = Vec::new();
    for j in 0..n {
        let s = err[j].signum();
        let e = err[j].abs();
        let left = j > 0 && band_of[j - 1] == band_of[j];
        let right = j + 1 < n && band_of[j + 1] == band_of[j];
        let ge_left = !left || e >= s * err[j - 1];
        let ge_right = !right || e > s * err[j + 1];
        if ge_left && ge_right && e >= floor * (1.0 - 1e-9) {
            cand.push(j);
        }
    }
    merge_same_sign(&mut cand, err);
    while cand.len() > r {
        if cand.len() - r == 1 {
            if err[cand[0]].abs() < err[*cand.last().unwrap()].abs() {
                cand.remove(0);
            } else {
                cand.pop();
            }
        } else {
            let (pos, _) = cand
                .iter()
                .enumerate()
                .min_by(|a, b| err[*a.1].abs().total_cmp(&err[*b.1].abs()))
                .unwrap();
            cand.remove(pos);
            merge_same_sign(&mut cand, err);
        }
    }
    (cand.len() == r).then_some(cand)
}

fn merge_same_sign(cand: &mut Vec<usize>, err: &[f64]) {
    let mut out: Vec<usize> = Vec::with_capacity(cand.len());
    for &j in cand.iter() {
        match out.last() {
            Some(&p) if err[p].signum() == err[j].signum() => {
                if err[j].abs() > err[p].abs() {
                    *out.last_mut().unwrap() = j;
                }
            }
            _ => out.push(j),
        }
    }
    *cand = out;
}

/// Zero-phase amplitude response of a symmetric odd-length filter at
/// normalized frequency `f`.
pub fn amplitude_response(h: &[f64], f: f64) -> f64 {
    let m = (h.len() - 1) / 2;
    let w = TAU * f;
    let mut a = h[m];
    for k in 1..=m {
        a += 2.0 * h[m + k] * (w * k as f64).cos();
    }
    a
}
