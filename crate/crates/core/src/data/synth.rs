//! Synthetic two-modality recordings built from analytic motion templates.
//!
//! Every class owns a template: a posture plus sinusoidal joint motion seen
//! by the camera, and hidden quantities seen only by a wrist-worn sensor
//! (depth motion, orientation, static tilt under gravity). The accelerometer
//! reads the second derivative of the wrist position plus gravity; the
//! gyroscope reads the derivative of the orientation angles. Classes in a
//! vision-ambiguous pair share the camera-visible template, classes in an
//! inertial-ambiguous pair share everything the sensor sees.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{InertialSample, Joint, KeypointFrame, LabeledSequence, JOINTS, MID_HIP, NECK};

pub const FRAME_SIZE: (f64, f64) = (640.0, 480.0);
/// Joint carrying the inertial sensor (right wrist).
pub const SENSOR_JOINT: usize = 4;
pub const INERTIAL_CHANNELS: [&str; 6] = ["ax", "ay", "az", "gx", "gy", "gz"];
/// Metres per template pixel.
pub const METRES_PER_PIXEL: f64 = 0.008;
pub const GRAVITY: f64 = 9.81;

/// Standing pose, pixel offsets from the neck with y pointing down.
const SKELETON: [(f64, f64); JOINTS] = [
    (0.0, -25.0),
    (0.0, 0.0),
    (-20.0, 0.0),
    (-28.0, 35.0),
    (-32.0, 68.0),
    (20.0, 0.0),
    (28.0, 35.0),
    (32.0, 68.0),
    (0.0, 75.0),
    (-12.0, 75.0),
    (-14.0, 125.0),
    (-15.0, 172.0),
    (12.0, 75.0),
    (14.0, 125.0),
    (15.0, 172.0),
    (-5.0, -30.0),
    (5.0, -30.0),
    (-10.0, -27.0),
    (10.0, -27.0),
    (20.0, 182.0),
    (25.0, 180.0),
    (12.0, 178.0),
    (-20.0, 182.0),
    (-25.0, 180.0),
    (-12.0, 178.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Vision,
    Inertial,
}

/// Two classes that look identical in `modality`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguousPair {
    pub a: usize,
    pub b: usize,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub sequences_per_class: usize,
    pub duration_s: f64,
    pub keypoint_rate_hz: f64,
    pub inertial_rate_hz: f64,
    /// Pixels, added to confident joint coordinates.
    pub vision_noise: f64,
    /// Added to every inertial channel (m/s² and deg/s).
    pub inertial_noise: f64,
    pub ambiguity: Vec<AmbiguousPair>,
    /// Minimum gap (m/s²) between the mean horizontal accelerations of
    /// vision-ambiguous classes.
    pub inertial_margin: f64,
    pub distractor_prob: f64,
    pub joint_drop_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_classes: 6,
            sequences_per_class: 60,
            duration_s: 1.6,
            keypoint_rate_hz: 15.0,
            inertial_rate_hz: 50.0,
            vision_noise: 2.0,
            inertial_noise: 0.5,
            ambiguity: vec![
                AmbiguousPair {
                    a: 0,
                    b: 1,
                    modality: Modality::Vision,
                },
                AmbiguousPair {
                    a: 2,
                    b: 3,
                    modality: Modality::Inertial,
                },
            ],
            inertial_margin: 2.0,
            distractor_prob: 0.25,
            joint_drop_prob: 0.01,
            seed: 0,
        }
    }
}

/// Representative class of each class's component under the given pairs.
fn components(n: usize, pairs: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut rep: Vec<usize> = (0..n).collect();
    fn root(rep: &mut [usize], mut c: usize) -> usize {
        while rep[c] != c {
            c = rep[c];
        }
        c
    }
    for (a, b) in pairs {
        let (ra, rb) = (root(&mut rep, a), root(&mut rep, b));
        rep[ra.max(rb)] = ra.min(rb);
    }
    (0..n).map(|c| root(&mut rep, c)).collect()
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.sequences_per_class == 0 {
            return bad("sequences_per_class must be positive".into());
        }
        for (name, v) in [
            ("duration_s", self.duration_s),
            ("keypoint_rate_hz", self.keypoint_rate_hz),
            ("inertial_rate_hz", self.inertial_rate_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("vision_noise", self.vision_noise),
            ("inertial_noise", self.inertial_noise),
            ("inertial_margin", self.inertial_margin),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, p) in [("distractor_prob", self.distractor_prob), ("joint_drop_prob", self.joint_drop_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.inertial_margin > GRAVITY {
            return bad(format!("inertial_margin {} cannot exceed gravity", self.inertial_margin));
        }
        for p in &self.ambiguity {
            if p.a >= self.n_classes || p.b >= self.n_classes || p.a == p.b {
                return bad(format!("invalid ambiguous pair ({}, {})", p.a, p.b));
            }
        }
        let (vis, imu) = (self.groups(Modality::Vision), self.groups(Modality::Inertial));
        for a in 0..self.n_classes {
            for b in a + 1..self.n_classes {
                if vis[a] == vis[b] && imu[a] == imu[b] {
                    return bad(format!("classes {a} and {b} would be identical in both modalities"));
                }
            }
        }
        Ok(())
    }

    fn groups(&self, modality: Modality) -> Vec<usize> {
        components(
            self.n_classes,
            self.ambiguity.iter().filter(|p| p.modality == modality).map(|p| (p.a, p.b)),
        )
    }

    pub fn keypoint_frames(&self) -> usize {
        (self.duration_s * self.keypoint_rate_hz).round().max(1.0) as usize
    }

    pub fn inertial_samples(&self) -> usize {
        (self.duration_s * self.inertial_rate_hz).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub freq_hz: f64,
    pub phase: f64,
}

/// A sum of sinusoids.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub terms: Vec<Sinusoid>,
}

impl Motion {
    pub fn value(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|s| s.amplitude * (TAU * s.freq_hz * t + s.phase).sin())
            .sum()
    }

    pub fn velocity(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|s| {
                let w = TAU * s.freq_hz;
                s.amplitude * w * (w * t + s.phase).cos()
            })
            .sum()
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|s| {
                let w = TAU * s.freq_hz;
                -s.amplitude * w * w * (w * t + s.phase).sin()
            })
            .sum()
    }

    fn random(rng: &mut ChaCha8Rng, terms: usize, amp: (f64, f64), freq: (f64, f64)) -> Self {
        Self {
            terms: (0..terms)
                .map(|_| Sinusoid {
                    amplitude: rng.gen_range(amp.0..amp.1),
                    freq_hz: rng.gen_range(freq.0..freq.1),
                    phase: rng.gen_range(0.0..TAU),
                })
                .collect(),
        }
    }
}

/// Camera-visible part of a class: posture offsets and (x, y) motion per
/// joint, in template pixels relative to the neck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleTemplate {
    pub posture: Vec<(f64, f64)>,
    pub motion: Vec<[Motion; 2]>,
}

/// Quantities only the wrist sensor observes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenTemplate {
    /// Wrist motion along the camera axis, template pixels.
    pub depth: Motion,
    /// Orientation proxy angles in degrees.
    pub orientation: [Motion; 3],
    /// Gravity in the sensor frame, m/s².
    pub gravity: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub visible: VisibleTemplate,
    pub hidden: HiddenTemplate,
}

/// Per-sequence variation that does not depend on the class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nuisance {
    pub tempo: f64,
    pub amplitude: f64,
    pub time_offset: f64,
    /// Neck position in the frame.
    pub anchor: (f64, f64),
    /// Pixels per template pixel.
    pub scale: f64,
    /// Neck position of a bystander, if one is present.
    pub distractor: Option<(f64, f64)>,
    pub distractor_first: bool,
    /// Seed for per-frame confidences and joint dropouts.
    pub detail_seed: u64,
}

impl Nuisance {
    /// No variation: unit tempo and amplitude, subject centred at scale 1.
    pub fn neutral() -> Self {
        Self {
            tempo: 1.0,
            amplitude: 1.0,
            time_offset: 0.0,
            anchor: (FRAME_SIZE.0 / 2.0, 150.0),
            scale: 1.0,
            distractor: None,
            distractor_first: false,
            detail_seed: 0,
        }
    }
}

fn unit_gravity(roll: f64, pitch: f64) -> [f64; 3] {
    [
        GRAVITY * pitch.sin(),
        -GRAVITY * roll.sin() * pitch.cos(),
        GRAVITY * roll.cos() * pitch.cos(),
    ]
}

fn horizontal_gap(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// Builds class templates and renders sequences.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    cfg: SyntheticConfig,
    templates: Vec<ClassTemplate>,
}

const STREAM_TEMPLATES: u64 = 0;
const STREAM_NUISANCE: u64 = 1 << 40;
const STREAM_NOISE: u64 = 2 << 40;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl SyntheticGenerator {
    pub fn new(cfg: SyntheticConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_classes;
        let mut rng = stream_rng(cfg.seed, STREAM_TEMPLATES);
        let mut visible: Vec<VisibleTemplate> = (0..n)
            .map(|_| {
                let mut posture = SKELETON.to_vec();
                let mut motion = Vec::with_capacity(JOINTS);
                for (j, p) in posture.iter_mut().enumerate() {
                    if j == NECK || j == MID_HIP {
                        motion.push([Motion::default(), Motion::default()]);
                        continue;
                    }
                    p.0 += rng.gen_range(-15.0..15.0);
                    p.1 += rng.gen_range(-15.0..15.0);
                    motion.push([
                        Motion::random(&mut rng, 2, (0.0, 15.0), (0.3, 1.5)),
                        Motion::random(&mut rng, 2, (0.0, 15.0), (0.3, 1.5)),
                    ]);
                }
                VisibleTemplate { posture, motion }
            })
            .collect();
        let mut hidden: Vec<HiddenTemplate> = (0..n)
            .map(|_| {
                let depth = Motion::random(&mut rng, 2, (0.0, 20.0), (0.3, 1.5));
                let orientation = [0, 1, 2].map(|_| Motion::random(&mut rng, 2, (5.0, 30.0), (0.3, 1.5)));
                let (roll, pitch) = (rng.gen_range(-PI / 4.0..PI / 4.0), rng.gen_range(-PI / 4.0..PI / 4.0));
                HiddenTemplate {
                    depth,
                    orientation,
                    gravity: unit_gravity(roll, pitch),
                }
            })
            .collect();

        let vis = cfg.groups(Modality::Vision);
        let imu = cfg.groups(Modality::Inertial);
        let both = components(n, cfg.ambiguity.iter().map(|p| (p.a, p.b)));

        // Classes sharing a camera view must differ in mean horizontal
        // acceleration; redraw the tilt of later inertial groups until they do.
        for c in 0..n {
            if imu[c] != c {
                continue;
            }
            let rivals: Vec<usize> = (0..c)
                .filter(|&d| imu[d] == d && (0..n).any(|x| imu[x] == c && (0..n).any(|y| imu[y] == d && vis[x] == vis[y])))
                .collect();
            let mut tries = 0;
            while rivals
                .iter()
                .any(|&d| horizontal_gap(&hidden[c].gravity, &hidden[d].gravity) < cfg.inertial_margin)
            {
                tries += 1;
                if tries > 10_000 {
                    return Err(Error::Config(format!(
                        "cannot separate class {c} by inertial_margin {}",
                        cfg.inertial_margin
                    )));
                }
                let (roll, pitch) = (rng.gen_range(-PI / 4.0..PI / 4.0), rng.gen_range(-PI / 4.0..PI / 4.0));
                hidden[c].gravity = unit_gravity(roll, pitch);
            }
        }

        for c in 0..n {
            if vis[c] != c {
                visible[c] = visible[vis[c]].clone();
            }
            if imu[c] != c {
                hidden[c] = hidden[imu[c]].clone();
            }
        }
        // The wrist is seen by both modalities, so it is shared across the
        // union of all ambiguity groups.
        for c in 0..n {
            if both[c] != c {
                let r = both[c];
                visible[c].posture[SENSOR_JOINT] = visible[r].posture[SENSOR_JOINT];
                visible[c].motion[SENSOR_JOINT] = visible[r].motion[SENSOR_JOINT].clone();
            }
        }
        let templates = visible
            .into_iter()
            .zip(hidden)
            .map(|(visible, hidden)| ClassTemplate { visible, hidden })
            .collect();
        Ok(Self { cfg, templates })
    }

    /// Uses caller-supplied templates, one per class, instead of drawing them.
    pub fn with_templates(cfg: SyntheticConfig, templates: Vec<ClassTemplate>) -> Result<Self> {
        cfg.validate()?;
        if templates.len() != cfg.n_classes {
            return Err(Error::Config(format!(
                "{} templates for {} classes",
                templates.len(),
                cfg.n_classes
            )));
        }
        if let Some(c) = templates
            .iter()
            .position(|t| t.visible.posture.len() != JOINTS || t.visible.motion.len() != JOINTS)
        {
            return Err(Error::Config(format!("template {c} does not cover {JOINTS} joints")));
        }
        Ok(Self { cfg, templates })
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    pub fn templates(&self) -> &[ClassTemplate] {
        &self.templates
    }

    /// Nuisance draw for sequence `index` of `class`.
    pub fn nuisance(&self, class: usize, index: usize) -> Nuisance {
        let stream = STREAM_NUISANCE + (class * self.cfg.sequences_per_class + index) as u64;
        let mut rng = stream_rng(self.cfg.seed, stream);
        let (w, _) = FRAME_SIZE;
        let tempo = rng.gen_range(0.9..1.1);
        let amplitude = rng.gen_range(0.85..1.15);
        let time_offset = rng.gen_range(0.0..0.15);
        let anchor = (w / 2.0 + rng.gen_range(-40.0..40.0), 150.0 + rng.gen_range(-20.0..20.0));
        let scale = rng.gen_range(0.8..1.2);
        let present = rng.gen_bool(self.cfg.distractor_prob);
        let left = rng.gen_bool(0.5);
        let dx = rng.gen_range(40.0..90.0);
        let distractor = present.then(|| (if left { dx } else { w - dx }, 150.0 + rng.gen_range(-20.0..20.0)));
        let distractor_first = rng.gen_bool(0.5);
        Nuisance {
            tempo,
            amplitude,
            time_offset,
            anchor,
            scale,
            distractor,
            distractor_first,
            detail_seed: rng.gen(),
        }
    }

    fn phase_time(&self, n: &Nuisance, t: f64) -> f64 {
        n.tempo * (t + n.time_offset)
    }

    /// Subject joints at time `t` in frame pixels, before noise.
    pub fn pose_at(&self, class: usize, n: &Nuisance, t: f64) -> Vec<(f64, f64)> {
        let v = &self.templates[class].visible;
        let s = self.phase_time(n, t);
        v.posture
            .iter()
            .zip(&v.motion)
            .map(|(&(px, py), [mx, my])| {
                (
                    n.anchor.0 + n.scale * (px + n.amplitude * mx.value(s)),
                    n.anchor.1 + n.scale * (py + n.amplitude * my.value(s)),
                )
            })
            .collect()
    }

    /// Sensor channels at time `t` before noise: acceleration (m/s²) then
    /// angular rate (deg/s).
    pub fn inertial_at(&self, class: usize, n: &Nuisance, t: f64) -> [f64; 6] {
        let tpl = &self.templates[class];
        let s = self.phase_time(n, t);
        let [mx, my] = &tpl.visible.motion[SENSOR_JOINT];
        let k2 = n.amplitude * n.tempo * n.tempo * METRES_PER_PIXEL;
        let k1 = n.amplitude * n.tempo;
        let g = tpl.hidden.gravity;
        let o = &tpl.hidden.orientation;
        [
            k2 * mx.acceleration(s) + g[0],
            k2 * my.acceleration(s) + g[1],
            k2 * tpl.hidden.depth.acceleration(s) + g[2],
            k1 * o[0].velocity(s),
            k1 * o[1].velocity(s),
            k1 * o[2].velocity(s),
        ]
    }

    /// Renders one recording. `noise_rng` supplies the measurement noise;
    /// everything else is a function of the class, the nuisance and the config.
    pub fn render(&self, id: String, class: usize, n: &Nuisance, noise_rng: &mut ChaCha8Rng) -> LabeledSequence {
        let cfg = &self.cfg;
        let mut detail = ChaCha8Rng::seed_from_u64(n.detail_seed);
        let vnoise = Normal::new(0.0, cfg.vision_noise).expect("validated sigma");
        let inoise = Normal::new(0.0, cfg.inertial_noise).expect("validated sigma");
        let mut pose = Vec::with_capacity(cfg.keypoint_frames());
        for k in 0..cfg.keypoint_frames() {
            let t = k as f64 / cfg.keypoint_rate_hz;
            let joints = self
                .pose_at(class, n, t)
                .into_iter()
                .enumerate()
                .map(|(j, (x, y))| {
                    let dropped = j != NECK && j != MID_HIP && detail.gen_bool(cfg.joint_drop_prob);
                    let c = 0.75 + 0.25 * detail.gen::<f64>();
                    let (ex, ey) = (vnoise.sample(noise_rng), vnoise.sample(noise_rng));
                    if dropped {
                        Joint::default()
                    } else {
                        Joint::new(x + ex, y + ey, c)
                    }
                })
                .collect();
            let subject = KeypointFrame { timestamp: t, joints };
            let mut persons = vec![subject];
            if let Some(anchor) = n.distractor {
                let sway = 3.0 * (TAU * 0.5 * t).sin();
                let joints = SKELETON
                    .iter()
                    .map(|&(px, py)| Joint::new(anchor.0 + 0.9 * px + sway, anchor.1 + 0.9 * py, 0.4 + 0.2 * detail.gen::<f64>()))
                    .collect();
                let other = KeypointFrame { timestamp: t, joints };
                if n.distractor_first {
                    persons.insert(0, other);
                } else {
                    persons.push(other);
                }
            }
            pose.push(persons);
        }
        let inertial = (0..cfg.inertial_samples())
            .map(|k| {
                let t = k as f64 / cfg.inertial_rate_hz;
                let channels = self
                    .inertial_at(class, n, t)
                    .iter()
                    .map(|v| v + inoise.sample(noise_rng))
                    .collect();
                InertialSample { timestamp: t, channels }
            })
            .collect();
        LabeledSequence {
            id,
            class_id: class,
            pose,
            inertial,
        }
    }

    pub fn sequence_id(class: usize, index: usize) -> String {
        format!("c{class}_s{index:03}")
    }

    pub fn generate(&self) -> Vec<LabeledSequence> {
        let cfg = &self.cfg;
        let mut out = Vec::with_capacity(cfg.n_classes * cfg.sequences_per_class);
        for class in 0..cfg.n_classes {
            for index in 0..cfg.sequences_per_class {
                let nuisance = self.nuisance(class, index);
                let mut noise = stream_rng(cfg.seed, STREAM_NOISE + (class * cfg.sequences_per_class + index) as u64);
                out.push(self.render(Self::sequence_id(class, index), class, &nuisance, &mut noise));
            }
        }
        out
    }
}

/// Labelled recordings for `cfg`, ordered by class then index.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<LabeledSequence>> {
    Ok(SyntheticGenerator::new(cfg.clone())?.generate())
}
