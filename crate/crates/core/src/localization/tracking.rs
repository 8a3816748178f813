use std::f64::consts::TAU;

use super::simplex::{nelder_mead, pattern_search};
use super::PositionFix;
use crate::scenario::{AnchorNode, WorldConfig};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackConfig {
    /// Largest plausible phone speed; bounds the search disc, m/s.
    pub max_speed: f64,
    /// Height of the phone above the floor; anchor heights are taken
    /// relative to it, m.
    pub phone_height: f64,
    /// Anchors needed for a fix; below this the position is held.
    pub min_locked: usize,
    /// Cap on the search radius growth after held steps, as a multiple of
    /// the nominal radius.
    pub max_widen: f64,
    pub tolerance: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            max_speed: 3.2,
            phone_height: 1.2,
            min_locked: 2,
            max_widen: 4.0,
            tolerance: 1e-7,
        }
    }
}

/// Horizontal distance is computed in the phone plane; the anchor's height
/// above that plane enters the range.
fn range(p: Vec2, anchor: &AnchorNode, phone_height: f64) -> f64 {
    let h = anchor.height - phone_height;
    ((p - anchor.position).norm_squared() + h * h).sqrt()
}

/// Moves `prev` to the point within `radius` whose ranges best match the
/// previous ranges shortened by each anchor's phase displacement. `deltas`
/// holds the phase change per anchor since `prev`, `None` when unlocked.
pub fn track_step(
    prev: &PositionFix,
    t: f64,
    deltas: &[Option<f64>],
    anchors: &[AnchorNode],
    world: &WorldConfig,
    config: &TrackConfig,
    radius: f64,
) -> PositionFix {
    let targets: Vec<(&AnchorNode, f64)> = anchors
        .iter()
        .zip(deltas)
        .filter_map(|(a, d)| {
            d.map(|dphi| {
                let l = range(prev.position, a, config.phone_height);
                (a, l - world.speed_of_sound / (TAU * a.frequency) * dphi)
            })
        })
        .collect();
    if targets.len() < config.min_locked {
        return PositionFix {
            t,
            n_locked: targets.len(),
            dead_reckoned: true,
            ..PositionFix::at(t, prev.position)
        };
    }
    let mismatch = |p: Vec2| -> f64 {
        targets
            .iter()
            .map(|(a, l)| (l - range(p, a, config.phone_height)).abs())
            .sum()
    };
    let center = prev.position;
    let penalized = |p: Vec2| {
        let excess = ((p - center).norm() - radius).max(0.0);
        mismatch(p) + 1e3 * excess
    };
    let start_step = (radius / 4.0).clamp(1e-3, 0.1);
    let (p, _) = nelder_mead(penalized, center, start_step, config.tolerance, 2000);
    let (mut p, _) = pattern_search(penalized, p, start_step / 4.0, config.tolerance, 16);
    let offset = p - center;
    if offset.norm() > radius {
        p = center + offset * (radius / offset.norm());
    }
    let residuals: Vec<f64> = targets
        .iter()
        .map(|(a, l)| (l - range(p, a, config.phone_height)).abs())
        .collect();
    PositionFix {
        t,
        position: p,
        objective: residuals.iter().sum(),
        n_locked: residuals.len(),
        residuals,
        ambiguous: false,
        concyclic: false,
        dead_reckoned: false,
    }
}

/// Sequential tracker fed with absolute phases; keeps the previous phases
/// and widens the search after held steps.
#[derive(Debug, Clone)]
pub struct Tracker {
    anchors: Vec<AnchorNode>,
    world: WorldConfig,
    config: TrackConfig,
    fix: PositionFix,
    phases: Vec<Option<f64>>,
    widen: f64,
}

impl Tracker {
    /// Starts from `initial` with the phases observed at that instant.
    pub fn new(
        anchors: Vec<AnchorNode>,
        world: WorldConfig,
        config: TrackConfig,
        initial: PositionFix,
        phases: Vec<Option<f64>>,
    ) -> Self {
        Self {
            anchors,
            world,
            config,
            fix: initial,
            phases,
            widen: 1.0,
        }
    }

    pub fn fix(&self) -> &PositionFix {
        &self.fix
    }

    /// Advances to time `t` with the phases observed there.
    pub fn step(&mut self, t: f64, phases: Vec<Option<f64>>) -> &PositionFix {
        let dt = (t - self.fix.t).max(0.0);
        let deltas: Vec<Option<f64>> = self
            .phases
            .iter()
            .zip(&phases)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            })
            .collect();
        let radius = self.config.max_speed * dt * self.widen;
        let next = track_step(&self.fix, t, &deltas, &self.anchors, &self.world, &self.config, radius);
        self.widen = if next.dead_reckoned {
            (self.widen * 2.0).min(self.config.max_widen)
        } else {
            1.0
        };
        self.fix = next;
        self.phases = phases;
        &self.fix
    }
}
