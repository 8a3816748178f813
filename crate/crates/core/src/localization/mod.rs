//! Position from opening angles (inscribed-angle arcs) and tracking from
//! per-anchor phase displacement.

mod initial;
mod simplex;
mod tracking;

pub use initial::{locate_initial, LocateConfig};
pub use simplex::{nelder_mead, pattern_search};
pub use tracking::{track_step, TrackConfig, Tracker};

use std::f64::consts::PI;

use crate::angles::wrap_pi;
use crate::{Error, Result, Vec2};

/// Opening angles closer than this to 0 or pi are rejected as collinear.
pub const OPENING_TOLERANCE: f64 = 1e-6;

/// Unsigned angle between two bearings taken in the same frame, in `(0, pi)`.
pub fn opening_angle(alpha_i: f64, alpha_j: f64) -> Result<f64> {
    let d = wrap_pi(alpha_i - alpha_j).abs();
    if d < OPENING_TOLERANCE || PI - d < OPENING_TOLERANCE {
        return Err(Error::Degenerate(format!(
            "opening angle {:.6} deg is collinear",
            d.to_degrees()
        )));
    }
    Ok(d)
}

/// Angle subtended at `p` by the segment `a`-`b`.
pub fn subtended_angle(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let u = a - p;
    let v = b - p;
    (u.x * v.y - u.y * v.x).abs().atan2(u.dot(&v))
}

/// One of the two arcs from which a chord subtends a given angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateArc {
    pub center: Vec2,
    /// Side of the chord holding the arc: +1 for the left of `a -> b`.
    pub side: f64,
}

/// Locus of points seeing anchors `a` and `b` under the opening angle.
/// Both mirror-image arcs are kept; the objective takes the nearer one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcConstraint {
    pub first: u32,
    pub second: u32,
    pub a: Vec2,
    pub b: Vec2,
    pub opening: f64,
    pub radius: f64,
    pub candidates: [CandidateArc; 2],
}

/// Circle through `a` and `b` on which the chord subtends `opening`.
/// For an acute angle the arc lies on the same side as its center, for an
/// obtuse one on the opposite side.
pub fn circle_from_pair(a: Vec2, b: Vec2, opening: f64) -> Result<ArcConstraint> {
    let chord = b - a;
    let d = chord.norm();
    if !(d > 0.0) {
        return Err(Error::Degenerate("anchor pair coincides".into()));
    }
    if !(opening > 0.0 && opening < PI) || opening.sin() < OPENING_TOLERANCE {
        return Err(Error::Degenerate(format!(
            "opening angle {:.6} deg has no finite circle",
            opening.to_degrees()
        )));
    }
    let radius = d / (2.0 * opening.sin());
    let mid = (a + b) / 2.0;
    let normal = Vec2::new(-chord.y, chord.x) / d;
    let offset = d / 2.0 / opening.tan();
    let candidate = |side: f64| CandidateArc {
        center: mid + normal * (side * offset),
        side,
    };
    Ok(ArcConstraint {
        first: 0,
        second: 0,
        a,
        b,
        opening,
        radius,
        candidates: [candidate(1.0), candidate(-1.0)],
    })
}

impl ArcConstraint {
    pub fn with_ids(mut self, first: u32, second: u32) -> Self {
        self.first = first;
        self.second = second;
        self
    }

    fn side_of(&self, p: Vec2) -> f64 {
        let chord = self.b - self.a;
        let rel = p - self.a;
        chord.x * rel.y - chord.y * rel.x
    }

    /// Distance from `p` to one candidate arc, endpoints included.
    pub fn arc_distance(&self, arc: &CandidateArc, p: Vec2) -> f64 {
        let rel = p - arc.center;
        let r = rel.norm();
        if r > 0.0 {
            let q = arc.center + rel * (self.radius / r);
            if self.side_of(q) * arc.side >= 0.0 {
                return (r - self.radius).abs();
            }
        }
        (p - self.a).norm().min((p - self.b).norm())
    }

    /// Distance from `p` to the nearer valid arc.
    pub fn distance(&self, p: Vec2) -> f64 {
        self.arc_distance(&self.candidates[0], p)
            .min(self.arc_distance(&self.candidates[1], p))
    }

    /// Unit normal of the nearer valid arc at its point closest to `p`;
    /// the direction in which moving `p` changes this arc's distance.
    pub fn normal_at(&self, p: Vec2) -> Option<Vec2> {
        let arc = if self.arc_distance(&self.candidates[0], p) <= self.arc_distance(&self.candidates[1], p) {
            &self.candidates[0]
        } else {
            &self.candidates[1]
        };
        let rel = p - arc.center;
        let r = rel.norm();
        if r > 0.0 && self.side_of(arc.center + rel * (self.radius / r)) * arc.side >= 0.0 {
            return Some(rel / r);
        }
        // nearest point is an anchor: the arc's tangent there
        let end = if (p - self.a).norm() <= (p - self.b).norm() { self.a } else { self.b };
        let radial = (end - arc.center) / self.radius;
        Some(radial).filter(|v| v.norm() > 0.0)
    }

    /// Point on candidate arc `k` at parameter `u` in (0, 1), running from
    /// `a` to `b`.
    pub fn point_on_arc(&self, k: usize, u: f64) -> Vec2 {
        let arc = &self.candidates[k];
        let start = (self.a - arc.center).y.atan2((self.a - arc.center).x);
        let end = (self.b - arc.center).y.atan2((self.b - arc.center).x);
        // sweep the way that passes through the arc's side of the chord
        let mut sweep = wrap_pi(end - start);
        let probe = |s: f64| {
            let ang = start + s * 0.5;
            arc.center + Vec2::new(ang.cos(), ang.sin()) * self.radius
        };
        if self.side_of(probe(sweep)) * arc.side < 0.0 {
            sweep -= sweep.signum() * 2.0 * PI;
        }
        let ang = start + sweep * u;
        arc.center + Vec2::new(ang.cos(), ang.sin()) * self.radius
    }
}

/// Arcs for every anchor pair whose opening angle is usable. Bearings must
/// come from one frame; pairs with collinear bearings are skipped.
pub fn arcs_from_bearings(anchors: &[(u32, Vec2, f64)]) -> Vec<ArcConstraint> {
    let mut arcs = Vec::new();
    for i in 0..anchors.len() {
        for j in i + 1..anchors.len() {
            let (id_i, p_i, a_i) = anchors[i];
            let (id_j, p_j, a_j) = anchors[j];
            let Ok(opening) = opening_angle(a_i, a_j) else {
                continue;
            };
            if let Ok(arc) = circle_from_pair(p_i, p_j, opening) {
                arcs.push(arc.with_ids(id_i, id_j));
            }
        }
    }
    arcs
}

/// A position estimate with the objective that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionFix {
    pub t: f64,
    pub position: Vec2,
    /// Sum of `residuals`.
    pub objective: f64,
    /// Distance to each arc, or range mismatch per locked anchor, m.
    pub residuals: Vec<f64>,
    pub n_locked: usize,
    /// Another basin scores almost as well as the reported one.
    pub ambiguous: bool,
    /// The objective is nearly flat along some direction at the minimum,
    /// as happens when anchors and phone are close to one circle.
    pub concyclic: bool,
    /// Too few anchors were locked; the position was held.
    pub dead_reckoned: bool,
}

impl PositionFix {
    pub fn at(t: f64, position: Vec2) -> Self {
        Self {
            t,
            position,
            objective: 0.0,
            residuals: Vec::new(),
            n_locked: 0,
            ambiguous: false,
            concyclic: false,
            dead_reckoned: false,
        }
    }
}

/// CSV rows `t,x,y,objective,n_locked`.
pub fn write_fix_csv<W: std::io::Write>(fixes: &[PositionFix], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "y", "objective", "n_locked"])?;
    for f in fixes {
        w.write_record([
            format!("{:.6}", f.t),
            format!("{:.6}", f.position.x),
            format!("{:.6}", f.position.y),
            format!("{:.9}", f.objective),
            f.n_locked.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
