//! Derivative-free minimization in the plane.

use crate::Vec2;

/// Nelder-Mead on a 2D function, started from a right triangle of legs
/// `step` at `start`. Stops once the simplex is smaller than `tol`.
pub fn nelder_mead<F: Fn(Vec2) -> f64>(f: F, start: Vec2, step: f64, tol: f64, max_iter: usize) -> (Vec2, f64) {
    let mut pts = [start, start + Vec2::new(step, 0.0), start + Vec2::new(0.0, step)];
    let mut vals = pts.map(&f);
    for _ in 0..max_iter {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.map(|i| pts[i]);
        vals = idx.map(|i| vals[i]);
        let size = (pts[1] - pts[0]).norm().max((pts[2] - pts[0]).norm());
        if size < tol {
            break;
        }
        let centroid = (pts[0] + pts[1]) / 2.0;
        let reflected = centroid + (centroid - pts[2]);
        let fr = f(reflected);
        if fr < vals[0] {
            let expanded = centroid + (centroid - pts[2]) * 2.0;
            let fe = f(expanded);
            if fe < fr {
                pts[2] = expanded;
                vals[2] = fe;
            } else {
                pts[2] = reflected;
                vals[2] = fr;
            }
            continue;
        }
        if fr < vals[1] {
            pts[2] = reflected;
            vals[2] = fr;
            continue;
        }
        let (contracted, fc) = if fr < vals[2] {
            let c = centroid + (reflected - centroid) * 0.5;
            (c, f(c))
        } else {
            let c = centroid + (pts[2] - centroid) * 0.5;
            (c, f(c))
        };
        if fc < vals[2].min(fr) {
            pts[2] = contracted;
            vals[2] = fc;
            continue;
        }
        for i in 1..3 {
            pts[i] = pts[0] + (pts[i] - pts[0]) * 0.5;
            vals[i] = f(pts[i]);
        }
    }
    let best = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    (pts[best], vals[best])
}

/// Pattern search over `directions` evenly spaced headings, halving the
/// step whenever no heading improves. Robust on the kinked sums of
/// distances where a simplex can stall.
pub fn pattern_search<F: Fn(Vec2) -> f64>(f: F, start: Vec2, step: f64, tol: f64, directions: usize) -> (Vec2, f64) {
    let dirs: Vec<Vec2> = (0..directions)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / directions as f64;
            Vec2::new(a.cos(), a.sin())
        })
        .collect();
    let mut p = start;
    let mut val = f(p);
    let mut h = step;
    while h > tol {
        let mut improved = false;
        for d in &dirs {
            let q = p + d * h;
            let fq = f(q);
            if fq < val {
                p = q;
                val = fq;
                improved = true;
                break;
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    (p, val)
}
