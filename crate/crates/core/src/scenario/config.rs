use super::{
    AnchorNode, Directivity, GaitSpec, MotionPatternSpec, PatternKind, Sense, ShakePlane,
    WorldConfig, HAND_SPEED_MAX,
};
use crate::{Error, Result, Vec2, Vec3};
use serde::Deserialize;

/// Axis-aligned search region, m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: Vec2,
    pub max: Vec2,
}

impl Region {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    /// Bounding box of `points` grown by `margin` on every side.
    pub fn around(points: &[Vec2], margin: f64) -> Self {
        let mut min = Vec2::repeat(f64::INFINITY);
        let mut max = Vec2::repeat(f64::NEG_INFINITY);
        for p in points {
            min = min.inf(p);
            max = max.sup(p);
        }
        Self {
            min: min.add_scalar(-margin),
            max: max.add_scalar(margin),
        }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Nearest point of the region.
    pub fn clamp(&self, p: Vec2) -> Vec2 {
        p.sup(&self.min).inf(&self.max)
    }
}

/// A fully resolved scenario file.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: WorldConfig,
    pub anchors: Vec<AnchorNode>,
    pub motion: MotionPatternSpec,
    /// Hand-speed bound used to size channels, m/s.
    pub v_max: f64,
    /// Per-channel filter pass band, Hz.
    pub pass_band: f64,
    pub room: Option<Region>,
    /// Unparsed `[dsp]` table, interpreted by the pipeline.
    pub dsp: toml::Table,
    /// Unparsed `[experiment]` table, interpreted by the harness.
    pub experiment: toml::Table,
}

impl Scenario {
    /// Scenario with defaults and the given anchors; validated.
    pub fn new(world: WorldConfig, anchors: Vec<AnchorNode>, motion: MotionPatternSpec) -> Result<Self> {
        let pass_band = default_pass_band(&world, &anchors, HAND_SPEED_MAX);
        let s = Self {
            world,
            anchors,
            motion,
            v_max: HAND_SPEED_MAX,
            pass_band,
            room: None,
            dsp: toml::Table::new(),
            experiment: toml::Table::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn anchor(&self, id: u32) -> Option<&AnchorNode> {
        self.anchors.iter().find(|a| a.id == id)
    }

    /// Region searched by initial localization.
    pub fn search_region(&self) -> Region {
        self.room.unwrap_or_else(|| {
            let pts: Vec<Vec2> = self.anchors.iter().map(|a| a.position).collect();
            Region::around(&pts, 10.0)
        })
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.world;
        if !(w.speed_of_sound > 0.0) {
            return Err(Error::invariant("world.speed_of_sound_m_per_s", "must be positive"));
        }
        if !(w.audio_sample_rate > 0.0) {
            return Err(Error::invariant("world.audio_sample_rate_hz", "must be positive"));
        }
        if !(w.imu_sample_rate > 0.0) {
            return Err(Error::invariant("world.imu_sample_rate_hz", "must be positive"));
        }
        if !(self.pass_band > 0.0) {
            return Err(Error::invariant("channels.pass_band_hz", "must be positive"));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            let field = |name: &str| format!("anchors[{i}].{name}");
            let doppler = self.v_max * a.frequency / w.speed_of_sound;
            if a.frequency < 17000.0 || a.frequency > w.nyquist() - self.pass_band / 2.0 {
                return Err(Error::invariant(
                    field("frequency_hz"),
                    format!(
                        "{} Hz outside [17000, {}]",
                        a.frequency,
                        w.nyquist() - self.pass_band / 2.0
                    ),
                ));
            }
            if w.audio_sample_rate <= 2.0 * (a.frequency + doppler) {
                return Err(Error::invariant(
                    "world.audio_sample_rate_hz",
                    format!("must exceed twice {} Hz plus Doppler", a.frequency),
                ));
            }
            if !a.amplitude_dbfs.is_finite() || !a.height.is_finite() {
                return Err(Error::invariant(field("amplitude_dbfs"), "must be finite"));
            }
            for b in &self.anchors[..i] {
                if b.id == a.id {
                    return Err(Error::invariant(field("id"), format!("duplicate anchor id {}", a.id)));
                }
                let spacing = (a.frequency - b.frequency).abs();
                if spacing < self.pass_band {
                    return Err(Error::ChannelOverlap {
                        first: b.id,
                        second: a.id,
                        spacing_hz: spacing,
                        pass_band_hz: self.pass_band,
                    });
                }
            }
        }
        self.motion.validate()
    }
}

fn default_pass_band(world: &WorldConfig, anchors: &[AnchorNode], v_max: f64) -> f64 {
    let f_max = anchors
        .iter()
        .map(|a| a.frequency)
        .fold(f64::NAN, f64::max);
    let f = if f_max.is_nan() { 19000.0 } else { f_max };
    2.0 * v_max * f / world.speed_of_sound
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    world: RawWorld,
    #[serde(default)]
    channels: RawChannels,
    #[serde(default)]
    anchors: Vec<RawAnchor>,
    #[serde(default)]
    motion: RawMotion,
    room: Option<RawRoom>,
    #[serde(default)]
    dsp: toml::Table,
    #[serde(default)]
    experiment: toml::Table,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorld {
    speed_of_sound_m_per_s: f64,
    audio_sample_rate_hz: f64,
    imu_sample_rate_hz: f64,
    noise_floor_dbfs: Option<f64>,
}

impl Default for RawWorld {
    fn default() -> Self {
        let w = WorldConfig::default();
        Self {
            speed_of_sound_m_per_s: w.speed_of_sound,
            audio_sample_rate_hz: w.audio_sample_rate,
            imu_sample_rate_hz: w.imu_sample_rate,
            noise_floor_dbfs: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannels {
    #[serde(default = "default_v_max")]
    v_max_m_per_s: f64,
    pass_band_hz: Option<f64>,
}

fn default_v_max() -> f64 {
    HAND_SPEED_MAX
}

impl Default for RawChannels {
    fn default() -> Self {
        Self {
            v_max_m_per_s: HAND_SPEED_MAX,
            pass_band_hz: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnchor {
    id: u32,
    position_m: [f64; 2],
    #[serde(default)]
    height_m: f64,
    frequency_hz: f64,
    #[serde(default = "default_amplitude")]
    amplitude_dbfs: f64,
    directivity: Option<RawDirectivity>,
}

fn default_amplitude() -> f64 {
    -20.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDirectivity {
    azimuth_deg: f64,
    #[serde(default)]
    elevation_deg: f64,
    #[serde(default = "one")]
    exponent: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMotion {
    pattern: Option<String>,
    senses: Option<Vec<String>>,
    amplitude_m: Option<f64>,
    peak_speed_m_per_s: Option<f64>,
    duration_s: Option<f64>,
    seed: Option<u64>,
    plane: Option<String>,
    start_m: Option<[f64; 3]>,
    yaw_deg: Option<f64>,
    tilt_deg: Option<f64>,
    rest_before_s: Option<f64>,
    rest_after_s: Option<f64>,
    waypoints_m: Option<Vec<[f64; 2]>>,
    corner_radius_m: Option<f64>,
    gait: Option<RawGait>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGait {
    speed_amplitude_m_per_s: f64,
    step_frequency_hz: f64,
    #[serde(default)]
    vertical_amplitude_m: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoom {
    min_m: [f64; 2],
    max_m: [f64; 2],
}

fn parse_pattern(s: &str) -> Result<PatternKind> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "a" | "a_mixed" | "mixed" => PatternKind::Mixed,
        "b" | "b_circle" | "circle" => PatternKind::Circle,
        "c" | "c_rectangle" | "rectangle" => PatternKind::Rectangle,
        "d" | "d_arbitrary" | "arbitrary" => PatternKind::Arbitrary,
        "walk" | "walk_path" => PatternKind::WalkPath,
        other => {
            return Err(Error::invariant(
                "motion.pattern",
                format!("unknown pattern `{other}`"),
            ))
        }
    })
}

fn parse_sense(s: &str) -> Result<Sense> {
    match s.to_ascii_lowercase().as_str() {
        "c" | "cw" | "clockwise" => Ok(Sense::Clockwise),
        "a" | "ccw" | "anticlockwise" | "counterclockwise" => Ok(Sense::Anticlockwise),
        other => Err(Error::invariant("motion.senses", format!("unknown sense `{other}`"))),
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses and validates a scenario file, applying defaults.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        Error::ConfigParse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;

    let world = WorldConfig {
        speed_of_sound: raw.world.speed_of_sound_m_per_s,
        audio_sample_rate: raw.world.audio_sample_rate_hz,
        imu_sample_rate: raw.world.imu_sample_rate_hz,
        noise_floor_dbfs: raw.world.noise_floor_dbfs.unwrap_or(f64::NEG_INFINITY),
    };

    let anchors: Vec<AnchorNode> = raw
        .anchors
        .into_iter()
        .map(|a| AnchorNode {
            id: a.id,
            position: Vec2::new(a.position_m[0], a.position_m[1]),
            height: a.height_m,
            frequency: a.frequency_hz,
            amplitude_dbfs: a.amplitude_dbfs,
            directivity: a.directivity.map(|d| Directivity {
                azimuth: d.azimuth_deg.to_radians(),
                elevation: d.elevation_deg.to_radians(),
                exponent: d.exponent,
            }),
        })
        .collect();

    let m = raw.motion;
    let mut motion = MotionPatternSpec::default();
    if let Some(p) = &m.pattern {
        motion.pattern = parse_pattern(p)?;
    }
    if let Some(s) = &m.senses {
        motion.senses = s.iter().map(|s| parse_sense(s)).collect::<Result<_>>()?;
    }
    if let Some(p) = &m.plane {
        motion.plane = match p.to_ascii_lowercase().as_str() {
            "horizontal" => ShakePlane::Horizontal,
            "vertical" => ShakePlane::Vertical,
            other => {
                return Err(Error::invariant("motion.plane", format!("unknown plane `{other}`")))
            }
        };
    }
    if motion.pattern == PatternKind::WalkPath {
        motion.peak_speed = 1.2;
        motion.rest_after = 0.5;
    }
    motion.amplitude = m.amplitude_m.unwrap_or(motion.amplitude);
    motion.peak_speed = m.peak_speed_m_per_s.unwrap_or(motion.peak_speed);
    motion.duration = m.duration_s.unwrap_or(motion.duration);
    motion.seed = m.seed.unwrap_or(motion.seed);
    motion.start = m.start_m.map_or(motion.start, |s| Vec3::new(s[0], s[1], s[2]));
    motion.yaw = m.yaw_deg.map_or(motion.yaw, f64::to_radians);
    motion.tilt = m.tilt_deg.map_or(motion.tilt, f64::to_radians);
    motion.rest_before = m.rest_before_s.unwrap_or(motion.rest_before);
    motion.rest_after = m.rest_after_s.unwrap_or(motion.rest_after);
    motion.corner_radius = m.corner_radius_m.unwrap_or(motion.corner_radius);
    if let Some(w) = m.waypoints_m {
        motion.waypoints = w.iter().map(|p| Vec2::new(p[0], p[1])).collect();
    }
    if let Some(g) = m.gait {
        motion.gait = GaitSpec {
            speed_amplitude: g.speed_amplitude_m_per_s,
            step_frequency: g.step_frequency_hz,
            vertical_amplitude: g.vertical_amplitude_m,
        };
    }

    let v_max = raw.channels.v_max_m_per_s;
    if !(v_max > 0.0) {
        return Err(Error::invariant("channels.v_max_m_per_s", "must be positive"));
    }
    let pass_band = raw
        .channels
        .pass_band_hz
        .unwrap_or_else(|| default_pass_band(&world, &anchors, v_max));

    let room = raw.room.map(|r| Region {
        min: Vec2::new(r.min_m[0], r.min_m[1]),
        max: Vec2::new(r.max_m[0], r.max_m[1]),
    });
    if let Some(r) = &room {
        if !(r.max.x > r.min.x && r.max.y > r.min.y) {
            return Err(Error::invariant("room.max_m", "must exceed room.min_m on both axes"));
        }
    }

    let scenario = Scenario {
        world,
        anchors,
        motion,
        v_max,
        pass_band,
        room,
        dsp: raw.dsp,
        experiment: raw.experiment,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAPER_LAYOUT: &str = r#"
[world]
speed_of_sound_m_per_s = 340.0
audio_sample_rate_hz = 44100.0
imu_sample_rate_hz = 200.0
noise_floor_dbfs = -41.0

[[anchors]]
id = 1
position_m = [0.0, -3.0]
frequency_hz = 17000.0
[[anchors]]
id = 2
position_m = [6.0, 0.0]
frequency_hz = 17500.0
[[anchors]]
id = 3
position_m = [12.0, 0.0]
frequency_hz = 18000.0
[[anchors]]
id = 4
position_m = [18.0, 0.0]
frequency_hz = 18500.0
[[anchors]]
id = 5
position_m = [24.0, 0.0]
frequency_hz = 19000.0
[[anchors]]
id = 6
position_m = [30.0, -3.0]
frequency_hz = 19500.0
"#;

    #[test]
    fn paper_layout_is_valid() {
        let s = load_scenario(PAPER_LAYOUT).unwrap();
        assert_eq!(s.anchors.len(), 6);
        assert_eq!(s.anchors[5].position, Vec2::new(30.0, -3.0));
        assert_eq!(s.world.noise_floor_dbfs, -41.0);
        assert!((s.pass_band - 229.41).abs() < 0.01);
    }

    #[test]
    fn empty_anchor_list_is_valid() {
        let s = load_scenario("").unwrap();
        assert!(s.anchors.is_empty());
        assert_eq!(s.world, WorldConfig::default());
    }

    #[test]
    fn close_anchors_overlap() {
        let text = r#"
[channels]
pass_band_hz = 223.6
[[anchors]]
id = 1
position_m = [0.0, 0.0]
frequency_hz = 19000.0
[[anchors]]
id = 2
position_m = [1.0, 0.0]
frequency_hz = 19100.0
"#;
        let err = load_scenario(text).unwrap_err();
        assert!(matches!(err, Error::ChannelOverlap { first: 1, second: 2, .. }));
        assert!(err.to_string().starts_with("channel overlap"));
    }

    #[test]
    fn parse_error_reports_line() {
        let err = load_scenario("[world]\nspeed_of_sound_m_per_s = \"fast\"\n").unwrap_err();
        match err {
            Error::ConfigParse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_field_rejected() {
        let err = load_scenario("[world]\nspeed_of_sound = 340.0\n").unwrap_err();
        assert!(matches!(err, Error::ConfigParse { line: 2, .. }), "{err}");
    }

    #[test]
    fn invariant_violation_names_field() {
        let err = load_scenario("[motion]\npattern = \"C\"\namplitude_m = 0.3\n").unwrap_err();
        match err {
            Error::Invariant { field, .. } => assert_eq!(field, "motion.amplitude_m"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn low_frequency_rejected() {
        let text = "[[anchors]]\nid = 1\nposition_m = [0.0, 0.0]\nfrequency_hz = 1000.0\n";
        match load_scenario(text).unwrap_err() {
            Error::Invariant { field, .. } => assert_eq!(field, "anchors[0].frequency_hz"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn motion_fields_resolved() {
        let text = r#"
[motion]
pattern = "walk_path"
waypoints_m = [[6.0, -6.0], [24.0, -6.0]]
gait = { speed_amplitude_m_per_s = 0.1, step_frequency_hz = 1.8 }
"#;
        let s = load_scenario(text).unwrap();
        assert_eq!(s.motion.pattern, PatternKind::WalkPath);
        assert_eq!(s.motion.peak_speed, 1.2);
        assert_eq!(s.motion.waypoints.len(), 2);
        assert_eq!(s.motion.gait.step_frequency, 1.8);
    }
}
