//! Chamber geometry, agent kinematics, stimulus timing and trial scheduling.
//!
//! Coordinates: the floor spans `x ∈ [0, length_x]`, `y ∈ [0, width_y]`, with
//! `z` pointing up. The two display walls sit at `x = 0` and `x = length_x`.
//! Heading is measured in degrees counter-clockwise from `+x`.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("imprinting trial count must be even, got {0}")]
    OddImprintingCount(usize),
    #[error("invalid chamber: {0}")]
    InvalidChamber(String),
    #[error("invalid agent body: {0}")]
    InvalidBody(String),
    #[error("unknown rearing condition {0} (expected 1..=4)")]
    UnknownCondition(u8),
}

/// Rectangle on a display wall: center `(y, z)` plus extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplayRect {
    pub center_y: f64,
    pub center_z: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChamberSpec {
    pub length_x: f64,
    pub width_y: f64,
    pub wall_height: f64,
    pub display_rect: DisplayRect,
}

impl Default for ChamberSpec {
    fn default() -> Self {
        Self {
            length_x: 20.0,
            width_y: 14.0,
            wall_height: 10.0,
            display_rect: DisplayRect {
                center_y: 7.0,
                center_z: 5.0,
                width: 8.0,
                height: 8.0,
            },
        }
    }
}

impl ChamberSpec {
    /// Midline used by the half-split zone rule.
    pub fn midline(&self) -> f64 {
        self.length_x / 2.0
    }

    pub fn validate(&self, body: &AgentBody) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidChamber(m.to_string()));
        if !(self.length_x > 2.0 * body.radius) {
            return bad("length_x must exceed the agent diameter");
        }
        if !(self.width_y > 2.0 * body.radius) {
            return bad("width_y must exceed the agent diameter");
        }
        if !(self.wall_height > 0.0) {
            return bad("wall_height must be positive");
        }
        let r = &self.display_rect;
        let fits = r.width > 0.0
            && r.height > 0.0
            && r.center_y - r.width / 2.0 >= 0.0
            && r.center_y + r.width / 2.0 <= self.width_y
            && r.center_z - r.height / 2.0 >= 0.0
            && r.center_z + r.height / 2.0 <= self.wall_height;
        if !fits {
            return bad("display_rect must fit within its wall");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentBody {
    pub height: f64,
    pub radius: f64,
    pub camera_height: f64,
    pub translation_step: f64,
    /// Degrees per step.
    pub rotation_step: f64,
}

impl Default for AgentBody {
    fn default() -> Self {
        Self {
            height: 3.5,
            radius: 1.2,
            camera_height: 3.2,
            translation_step: 0.2,
            rotation_step: 10.0,
        }
    }
}

impl AgentBody {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidBody(m.to_string()));
        if !(self.radius > 0.0 && self.height > 0.0) {
            return bad("height and radius must be positive");
        }
        if !(self.camera_height > 0.0 && self.camera_height <= self.height) {
            return bad("camera_height must lie in (0, height]");
        }
        if !(self.translation_step > 0.0) || !(self.rotation_step > 0.0) {
            return bad("translation_step and rotation_step must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Degrees in `[0, 360)`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_degrees(heading),
        }
    }

    /// True when the agent's footprint is inside the chamber walls.
    pub fn within_margins(&self, chamber: &ChamberSpec, body: &AgentBody) -> bool {
        self.x >= body.radius
            && self.x <= chamber.length_x - body.radius
            && self.y >= body.radius
            && self.y <= chamber.width_y - body.radius
    }
}

pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Discrete action: translation and rotation, each in `{-1, 0, +1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub translation: i8,
    pub rotation: i8,
}

impl Action {
    pub const COUNT: usize = 9;
    pub const STAY: Action = Action {
        translation: 0,
        rotation: 0,
    };

    /// Builds an action from per-branch class indices in `0..3`
    /// (class 0 ↦ −1, 1 ↦ 0, 2 ↦ +1).
    pub fn from_branches(translation_class: usize, rotation_class: usize) -> Self {
        assert!(translation_class < 3 && rotation_class < 3);
        Self {
            translation: translation_class as i8 - 1,
            rotation: rotation_class as i8 - 1,
        }
    }

    pub fn translation_class(&self) -> usize {
        (self.translation + 1) as usize
    }

    pub fn rotation_class(&self) -> usize {
        (self.rotation + 1) as usize
    }

    /// Joint index in `0..9`.
    pub fn index(&self) -> usize {
        self.translation_class() * 3 + self.rotation_class()
    }

    pub fn from_index(index: usize) -> Self {
        Self::from_branches(index / 3, index % 3)
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..Self::COUNT).map(Self::from_index)
    }
}

/// Advances a pose by one action: rotate, then translate along the new
/// heading, then clamp so the agent's footprint stays inside the walls.
pub fn step_pose(pose: Pose, action: Action, body: &AgentBody, chamber: &ChamberSpec) -> Pose {
    let heading = wrap_degrees(pose.heading + f64::from(action.rotation) * body.rotation_step);
    let dist = f64::from(action.translation) * body.translation_step;
    let rad = heading.to_radians();
    let x = pose.x + dist * libm::cos(rad);
    let y = pose.y + dist * libm::sin(rad);
    Pose {
        x: x.clamp(body.radius, chamber.length_x - body.radius),
        y: y.clamp(body.radius, chamber.width_y - body.radius),
        heading,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectId {
    A,
    B,
}

impl ObjectId {
    pub fn other(self) -> ObjectId {
        match self {
            ObjectId::A => ObjectId::B,
            ObjectId::B => ObjectId::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RearingView {
    Front,
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RearingCondition {
    pub object_id: ObjectId,
    pub rearing_view: RearingView,
}

impl RearingCondition {
    /// The four conditions, numbered 1..=4 as (A, front), (A, side),
    /// (B, front), (B, side).
    pub fn from_number(n: u8) -> Result<Self, WorldError> {
        let (object_id, rearing_view) = match n {
            1 => (ObjectId::A, RearingView::Front),
            2 => (ObjectId::A, RearingView::Side),
            3 => (ObjectId::B, RearingView::Front),
            4 => (ObjectId::B, RearingView::Side),
            other => return Err(WorldError::UnknownCondition(other)),
        };
        Ok(Self {
            object_id,
            rearing_view,
        })
    }

    pub fn number(&self) -> u8 {
        match (self.object_id, self.rearing_view) {
            (ObjectId::A, RearingView::Front) => 1,
            (ObjectId::A, RearingView::Side) => 2,
            (ObjectId::B, RearingView::Front) => 3,
            (ObjectId::B, RearingView::Side) => 4,
        }
    }

    pub fn all() -> [RearingCondition; 4] {
        [1, 2, 3, 4].map(|n| Self::from_number(n).unwrap())
    }

    pub fn familiar_index(&self) -> usize {
        viewpoint_ranges(self.rearing_view)
            .iter()
            .position(|v| v.is_familiar)
            .expect("exactly one familiar range")
    }

    pub fn familiar_range(&self) -> ViewpointRange {
        viewpoint_ranges(self.rearing_view)[self.familiar_index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewpointRange {
    pub index: usize,
    pub azimuth_center: f64,
    pub elevation: f64,
    pub is_familiar: bool,
}

pub const VIEWPOINT_COUNT: usize = 12;
const GRID_AZIMUTHS: [f64; 6] = [0.0, 60.0, 120.0, 180.0, 240.0, 300.0];
const GRID_ELEVATIONS: [f64; 2] = [0.0, 45.0];
const SIDE_AZIMUTH: f64 = 90.0;

/// The 12 test viewpoint ranges for a rearing view.
///
/// A 6 × 2 grid of azimuth centers × elevations. Front rearing is familiar at
/// (0°, 0°). Side rearing swaps the (60°, 0°) grid entry for (90°, 0°), which
/// becomes the familiar range.
pub fn viewpoint_ranges(view: RearingView) -> [ViewpointRange; VIEWPOINT_COUNT] {
    let mut out = [ViewpointRange {
        index: 0,
        azimuth_center: 0.0,
        elevation: 0.0,
        is_familiar: false,
    }; VIEWPOINT_COUNT];
    let mut i = 0;
    for &elevation in &GRID_ELEVATIONS {
        for &azimuth_center in &GRID_AZIMUTHS {
            out[i] = ViewpointRange {
                index: i,
                azimuth_center,
                elevation,
                is_familiar: false,
            };
            i += 1;
        }
    }
    match view {
        RearingView::Front => out[0].is_familiar = true,
        RearingView::Side => {
            out[1].azimuth_center = SIDE_AZIMUTH;
            out[1].is_familiar = true;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    #[default]
    Triangle,
    Sine,
}

/// Rocking amplitude around the range center, degrees.
pub const ROCK_AMPLITUDE: f64 = 30.0;

/// Instantaneous object azimuth while rocking through a viewpoint range.
///
/// Starts at the center moving upward, peaks at +30° after a quarter period,
/// returns to the center at half a period.
pub fn stimulus_azimuth(time_step: u64, range: &ViewpointRange, period_steps: u64) -> f64 {
    stimulus_azimuth_with(time_step, range, period_steps, Waveform::Triangle)
}

pub fn stimulus_azimuth_with(time_step: u64, range: &ViewpointRange, period_steps: u64, waveform: Waveform) -> f64 {
    assert!(period_steps > 0, "period_steps must be positive");
    let phase = (time_step % period_steps) as f64 / period_steps as f64;
    let unit = match waveform {
        Waveform::Triangle => {
            if phase < 0.25 {
                4.0 * phase
            } else if phase < 0.75 {
                2.0 - 4.0 * phase
            } else {
                4.0 * phase - 4.0
            }
        }
        Waveform::Sine => libm::sin(std::f64::consts::TAU * phase).clamp(-1.0, 1.0),
    };
    range.azimuth_center + ROCK_AMPLITUDE * unit
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimulusState {
    pub object_id: ObjectId,
    pub azimuth: f64,
    pub elevation: f64,
    pub time_step: u64,
}

impl StimulusState {
    pub fn at(
        object_id: ObjectId,
        range: &ViewpointRange,
        time_step: u64,
        period_steps: u64,
        waveform: Waveform,
    ) -> Self {
        Self {
            object_id,
            azimuth: stimulus_azimuth_with(time_step, range, period_steps, waveform),
            elevation: range.elevation,
            time_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Zone {
    SideX0,
    SideXL,
    Neutral,
}

/// Half-split zone rule around the chamber midline.
pub fn zone_of(pose: &Pose, chamber: &ChamberSpec) -> Zone {
    let mid = chamber.midline();
    if pose.x < mid {
        Zone::SideX0
    } else if pose.x > mid {
        Zone::SideXL
    } else {
        Zone::Neutral
    }
}

/// Uniform random pose over the interior shrunk by the agent radius.
pub fn spawn(rng: &mut Rng, chamber: &ChamberSpec, body: &AgentBody) -> Pose {
    let x = rng.random_range(body.radius..=chamber.length_x - body.radius);
    let y = rng.random_range(body.radius..=chamber.width_y - body.radius);
    let heading = rng.random_range(0.0..360.0);
    Pose { x, y, heading }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    X0,
    XL,
}

impl Wall {
    pub fn opposite(self) -> Wall {
        match self {
            Wall::X0 => Wall::XL,
            Wall::XL => Wall::X0,
        }
    }

    pub fn zone(self) -> Zone {
        match self {
            Wall::X0 => Zone::SideX0,
            Wall::XL => Zone::SideXL,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Wall::X0 => "x0",
            Wall::XL => "xL",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialKind {
    Imprinting,
    Recognition,
}

impl TrialKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialKind::Imprinting => "imprinting",
            TrialKind::Recognition => "recognition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial_id: usize,
    pub kind: TrialKind,
    /// Recognition trials only.
    pub viewpoint_index: Option<usize>,
    pub imprint_wall: Wall,
    pub duration: usize,
}

/// One test trial's metadata and its per-step pose trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: usize,
    pub kind: TrialKind,
    pub viewpoint_index: Option<usize>,
    pub imprint_wall: Wall,
    pub trace: Vec<Pose>,
}

pub const RECOGNITION_TRIALS_PER_VIEWPOINT: usize = 40;

/// Test-phase schedule: `n_imprinting` imprinting trials (half per wall),
/// then 480 recognition trials (40 per viewpoint, 20 per wall each). Each
/// block is shuffled with `seed`; trial ids follow final order.
///
/// The schedule layout is the same for every condition; which range is
/// familiar is resolved from the condition when trials are executed.
pub fn make_trial_schedule(
    _condition: &RearingCondition,
    n_imprinting: usize,
    duration: usize,
    seed: u64,
) -> Result<Vec<TrialSpec>, WorldError> {
    if n_imprinting % 2 != 0 {
        return Err(WorldError::OddImprintingCount(n_imprinting));
    }
    let mut rng = crate::rng::rng_from_seed(seed);

    let mut imprinting: Vec<(TrialKind, Option<usize>, Wall)> = (0..n_imprinting)
        .map(|i| {
            let wall = if i % 2 == 0 { Wall::X0 } else { Wall::XL };
            (TrialKind::Imprinting, None, wall)
        })
        .collect();
    imprinting.shuffle(&mut rng);

    let mut recognition = Vec::with_capacity(VIEWPOINT_COUNT * RECOGNITION_TRIALS_PER_VIEWPOINT);
    for v in 0..VIEWPOINT_COUNT {
        for i in 0..RECOGNITION_TRIALS_PER_VIEWPOINT {
            let wall = if i % 2 == 0 { Wall::X0 } else { Wall::XL };
            recognition.push((TrialKind::Recognition, Some(v), wall));
        }
    }
    recognition.shuffle(&mut rng);

    Ok(imprinting
        .into_iter()
        .chain(recognition)
        .enumerate()
        .map(|(trial_id, (kind, viewpoint_index, imprint_wall))| TrialSpec {
            trial_id,
            kind,
            viewpoint_index,
            imprint_wall,
            duration,
        })
        .collect())
}
