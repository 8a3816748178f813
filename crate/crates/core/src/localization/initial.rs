use nalgebra::Matrix2;

use super::simplex::{nelder_mead, pattern_search};
use super::{ArcConstraint, PositionFix};
use crate::scenario::Region;
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocateConfig {
    /// Coarse grid spacing, m.
    pub grid_step: f64,
    /// Final step of the local refinement, m.
    pub refine_tolerance: f64,
    /// Basins whose objectives differ by less than twice this are
    /// reported as ambiguous, m.
    pub ambiguity_tolerance: f64,
    /// Minimum distance between distinct basins, m.
    pub basin_separation: f64,
    /// Number of coarse minima refined.
    pub max_basins: usize,
    /// The fix is flagged as concyclic when the arc normals at the fix span
    /// one direction only: the smaller eigenvalue of their summed outer
    /// products, relative to the larger, falls below this.
    pub concyclic_ratio: f64,
}

impl Default for LocateConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.25,
            refine_tolerance: 1e-7,
            ambiguity_tolerance: 0.05,
            basin_separation: 0.5,
            max_basins: 6,
            concyclic_ratio: 0.01,
        }
    }
}

fn objective(arcs: &[ArcConstraint], p: Vec2) -> f64 {
    arcs.iter().map(|a| a.distance(p)).sum()
}

/// Point minimizing the summed distance to the valid arcs: coarse grid over
/// `region`, then local refinement of the best few grid minima.
pub fn locate_initial(arcs: &[ArcConstraint], region: &Region, config: &LocateConfig) -> Result<PositionFix> {
    if arcs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable anchor pairs, need at least 3",
            arcs.len()
        )));
    }
    let step = config.grid_step;
    let nx = ((region.max.x - region.min.x) / step).floor() as usize + 1;
    let ny = ((region.max.y - region.min.y) / step).floor() as usize + 1;
    let at = |i: usize, j: usize| region.min + Vec2::new(i as f64 * step, j as f64 * step);
    let grid: Vec<f64> = (0..nx * ny).map(|k| objective(arcs, at(k % nx, k / nx))).collect();

    // local minima of the grid over the 8-neighbourhood
    let mut minima: Vec<(f64, Vec2)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let v = grid[j * nx + i];
            let mut is_min = true;
            'scan: for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii >= nx as i64 || jj >= ny as i64 {
                        continue;
                    }
                    if grid[jj as usize * nx + ii as usize] < v {
                        is_min = false;
                        break 'scan;
                    }
                }
            }
            if is_min {
                minima.push((v, at(i, j)));
            }
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut seeds: Vec<Vec2> = Vec::new();
    for (_, p) in &minima {
        if seeds.iter().all(|s| (s - p).norm() > config.basin_separation) {
            seeds.push(*p);
        }
        if seeds.len() == config.max_basins {
            break;
        }
    }

    // outside the region the objective is that of the nearest inside point
    // plus a steep penalty, so refinement cannot leave the room
    let penalty = arcs.len() as f64;
    let f = |p: Vec2| {
        let q = region.clamp(p);
        objective(arcs, q) + penalty * (p - q).norm()
    };
    let mut basins: Vec<(f64, Vec2)> = seeds
        .iter()
        .map(|&s| {
            // restarts get the simplex off kinks where it can stall
            let (mut p, mut v) = (s, f(s));
            let mut scale = step;
            for _ in 0..4 {
                let (q, _) = nelder_mead(f, p, scale, config.refine_tolerance, 2000);
                let (q, w) = pattern_search(f, q, scale / 8.0, config.refine_tolerance, 16);
                let done = v - w < config.refine_tolerance;
                (p, v) = (q, w);
                if done {
                    break;
                }
                scale /= 2.0;
            }
            let p = region.clamp(p);
            (objective(arcs, p), p)
        })
        .collect();
    basins.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (best_val, best) = basins[0];
    let ambiguous = basins[1..].iter().any(|(v, p)| {
        (p - best).norm() > config.basin_separation && v - best_val < 2.0 * config.ambiguity_tolerance
    });

    let residuals: Vec<f64> = arcs.iter().map(|a| a.distance(best)).collect();
    let value: f64 = residuals.iter().sum();
    let spread = arcs
        .iter()
        .filter_map(|a| a.normal_at(best))
        .fold(Matrix2::zeros(), |m, n| m + n * n.transpose());
    let eig = spread.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let concyclic = !(hi > 0.0) || lo / hi < config.concyclic_ratio;

    Ok(PositionFix {
        t: 0.0,
        position: best,
        objective: value,
        residuals,
        n_locked: arcs.len(),
        ambiguous,
        concyclic,
        dead_reckoned: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::{arcs_from_bearings, subtended_angle};

    fn paper_anchors() -> Vec<(u32, Vec2)> {
        [(0.0, -3.0), (6.0, 0.0), (12.0, 0.0), (18.0, 0.0), (24.0, 0.0), (30.0, -3.0)]
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| (i as u32 + 1, Vec2::new(x, y)))
            .collect()
    }

    fn bearings(anchors: &[(u32, Vec2)], p: Vec2, offset: f64) -> Vec<(u32, Vec2, f64)> {
        anchors
            .iter()
            .map(|&(id, a)| (id, a, (a - p).y.atan2((a - p).x) + offset))
            .collect()
    }

    fn room() -> Region {
        Region::new(Vec2::new(-2.0, -9.0), Vec2::new(32.0, -0.25))
    }

    #[test]
    fn exact_angles_paper_spot() {
        let p = Vec2::new(9.0, -3.0);
        let arcs = arcs_from_bearings(&bearings(&paper_anchors(), p, 0.7));
        // (0,-3), P and (30,-3) are collinear, so that pair drops out
        assert_eq!(arcs.len(), 14);
        let fix = locate_initial(&arcs, &room(), &LocateConfig::default()).unwrap();
        assert!((fix.position - p).norm() < 0.01, "{}", fix.position);
        assert!(!fix.ambiguous);
        assert!(!fix.concyclic);
        let sum: f64 = fix.residuals.iter().sum();
        assert!((sum - fix.objective).abs() < 1e-9);
    }

    #[test]
    fn brute_force_agrees_near_truth() {
        let p = Vec2::new(15.0, -6.0);
        let mut b = bearings(&paper_anchors(), p, 0.0);
        // a fixed perturbation so the minimum is not at zero
        for (k, x) in b.iter_mut().enumerate() {
            x.2 += (k as f64 - 2.5) * 0.01;
        }
        let arcs = arcs_from_bearings(&b);
        let fix = locate_initial(&arcs, &room(), &LocateConfig::default()).unwrap();
        let mut best = (f64::INFINITY, Vec2::zeros());
        for i in 0..=400 {
            for j in 0..=400 {
                let q = fix.position + Vec2::new(i as f64 - 200.0, j as f64 - 200.0) * 0.005;
                let v = objective(&arcs, q);
                if v < best.0 {
                    best = (v, q);
                }
            }
        }
        assert!(fix.objective <= best.0 + 1e-9);
        assert!((best.1 - fix.position).norm() <= 0.005 * 2f64.sqrt() + 1e-9);
    }

    #[test]
    fn concyclic_layout_is_flagged() {
        // three anchors and the phone on one circle of radius 5
        let on_circle = |deg: f64| Vec2::new(5.0 * deg.to_radians().cos(), 5.0 * deg.to_radians().sin());
        let anchors = vec![(1, on_circle(80.0)), (2, on_circle(150.0)), (3, on_circle(20.0))];
        let p = on_circle(-100.0);
        let arcs = arcs_from_bearings(&bearings(&anchors, p, 0.0));
        for a in &arcs {
            assert!((subtended_angle(p, a.a, a.b) - a.opening).abs() < 1e-9);
        }
        let region = Region::new(Vec2::new(-8.0, -8.0), Vec2::new(8.0, 8.0));
        let fix = locate_initial(&arcs, &region, &LocateConfig::default()).unwrap();
        assert!(fix.concyclic);
    }

    #[test]
    fn collinear_layout_is_not_flagged() {
        let anchors = vec![(1, Vec2::new(-6.0, 0.0)), (2, Vec2::new(0.0, 0.0)), (3, Vec2::new(6.0, 0.0))];
        let p = Vec2::new(1.0, -5.0);
        let arcs = arcs_from_bearings(&bearings(&anchors, p, 0.0));
        let region = Region::new(Vec2::new(-8.0, -8.0), Vec2::new(8.0, -0.25));
        let fix = locate_initial(&arcs, &region, &LocateConfig::default()).unwrap();
        assert!(!fix.concyclic);
        assert!((fix.position - p).norm() < 0.01);
    }

    #[test]
    fn mirror_image_is_ambiguous() {
        // collinear anchors cannot tell the two sides apart
        let anchors = vec![(1, Vec2::new(-6.0, 0.0)), (2, Vec2::new(0.0, 0.0)), (3, Vec2::new(6.0, 0.0))];
        let p = Vec2::new(1.0, -5.0);
        let arcs = arcs_from_bearings(&bearings(&anchors, p, 0.0));
        let region = Region::new(Vec2::new(-8.0, -8.0), Vec2::new(8.0, 8.0));
        let fix = locate_initial(&arcs, &region, &LocateConfig::default()).unwrap();
        assert!(fix.ambiguous);
        assert!((fix.position.x - 1.0).abs() < 0.01 && (fix.position.y.abs() - 5.0).abs() < 0.01);
    }

    #[test]
    fn needs_three_arcs() {
        let anchors = vec![(1, Vec2::new(-6.0, 0.0)), (2, Vec2::new(0.0, 0.0))];
        let arcs = arcs_from_bearings(&bearings(&anchors, Vec2::new(0.0, -3.0), 0.0));
        assert!(locate_initial(&arcs, &room(), &LocateConfig::default()).is_err());
    }
}
