//! Deterministic kinematic two-block world.
//!
//! One aggregate effector point moves by bounded per-step displacements and
//! can carry block 2 once it grips within `grasp_radius` of the block center.
//! Released blocks settle instantly onto the highest support below them.
//! A carried block that runs into block 1 either comes to rest on top of it
//! or shoves block 1 sideways along the axis of least penetration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{goal_overlap, AlignedBox, RewardContext, RewardError, Vec3, WorldSnapshot};

/// Gap left between faces after a collision is resolved (m).
const CONTACT_GAP: f64 = 1e-9;

pub const OBSERVATION_LEN: usize = 20;
pub const ACTION_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("episode already terminated at step {0}")]
    Terminal(u64),
    #[error(transparent)]
    Geometry(#[from] RewardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block1Init {
    #[default]
    AtGoal,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Dimensionality {
    /// Motion restricted to the x-z plane.
    #[serde(rename = "2d")]
    Planar,
    #[default]
    #[serde(rename = "3d")]
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnRegion {
    pub min: Vec3,
    pub max: Vec3,
}

impl Default for SpawnRegion {
    fn default() -> Self {
        Self { min: Vec3::new(0.08, -0.12, 0.02), max: Vec3::new(0.2, 0.12, 0.15) }
    }
}

impl SpawnRegion {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        let mut pick = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
        let x = pick(self.min.x, self.max.x);
        let y = pick(self.min.y, self.max.y);
        let z = pick(self.min.z, self.max.z);
        Vec3::new(x, y, z)
    }
}

fn d_arena() -> f64 {
    0.25
}
fn d_edge() -> f64 {
    0.065
}
fn d_max_steps() -> u64 {
    200
}
fn d_delta() -> f64 {
    0.01
}
fn d_grasp() -> f64 {
    0.02
}
fn d_step_seconds() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(default = "d_arena")]
    pub arena_half_extent: f64,
    #[serde(default = "d_edge")]
    pub block_edge: f64,
    #[serde(default = "d_max_steps")]
    pub max_steps: u64,
    #[serde(default = "d_delta")]
    pub action_max_delta: f64,
    #[serde(default = "d_grasp")]
    pub grasp_radius: f64,
    #[serde(default)]
    pub block1_init: Block1Init,
    #[serde(default)]
    pub spawn_region: SpawnRegion,
    #[serde(default)]
    pub dimensionality: Dimensionality,
    /// Horizontal position of goal 1; goal 2 sits directly on top of it.
    #[serde(default)]
    pub goal_xy: [f64; 2],
    /// Control period used to turn displacements into velocities.
    #[serde(default = "d_step_seconds")]
    pub step_seconds: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            arena_half_extent: d_arena(),
            block_edge: d_edge(),
            max_steps: d_max_steps(),
            action_max_delta: d_delta(),
            grasp_radius: d_grasp(),
            block1_init: Block1Init::AtGoal,
            spawn_region: SpawnRegion::default(),
            dimensionality: Dimensionality::Spatial,
            goal_xy: [0.0, 0.0],
            step_seconds: d_step_seconds(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("arena_half_extent", self.arena_half_extent),
            ("block_edge", self.block_edge),
            ("action_max_delta", self.action_max_delta),
            ("grasp_radius", self.grasp_radius),
            ("step_seconds", self.step_seconds),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EnvError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.grasp_radius >= self.block_edge {
            return Err(EnvError::Config("grasp_radius must be smaller than block_edge".into()));
        }
        if self.max_steps < 1 {
            return Err(EnvError::Config("max_steps must be at least 1".into()));
        }
        let h = self.arena_half_extent;
        let r = &self.spawn_region;
        let inside = |p: Vec3| {
            p.is_finite() && p.x.abs() <= h && p.y.abs() <= h && p.z >= 0.0 && p.z <= 2.0 * h
        };
        if !inside(r.min) || !inside(r.max) {
            return Err(EnvError::Config(format!("spawn region {r:?} leaves the arena")));
        }
        if r.min.x > r.max.x || r.min.y > r.max.y || r.min.z > r.max.z {
            return Err(EnvError::Config("spawn region min exceeds max".into()));
        }
        let [gx, gy] = self.goal_xy;
        if gx.abs() > h || gy.abs() > h {
            return Err(EnvError::Config("goal lies outside the arena".into()));
        }
        Ok(())
    }

    fn half_edge(&self) -> f64 {
        self.block_edge / 2.0
    }

    pub fn goal_1(&self) -> AlignedBox {
        let [gx, gy] = self.goal_xy;
        AlignedBox::cube(Vec3::new(gx, gy, self.half_edge()), self.block_edge)
            .expect("validated edge")
    }

    pub fn goal_2(&self) -> AlignedBox {
        self.goal_1().translated(Vec3::new(0.0, 0.0, self.block_edge))
    }

    fn clamp_to_arena(&self, p: Vec3) -> Vec3 {
        let h = self.arena_half_extent;
        Vec3::new(p.x.clamp(-h, h), p.y.clamp(-h, h), p.z.clamp(0.0, 2.0 * h))
    }

    fn planar(&self) -> bool {
        self.dimensionality == Dimensionality::Planar
    }
}

/// Full episode state; cheap to clone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockWorldState {
    pub snapshot: WorldSnapshot,
    pub init: WorldSnapshot,
    /// Block 2 is attached to the effector.
    pub carried: bool,
    /// Block 2 center minus effector position, fixed while carried.
    pub carry_offset: Vec3,
    pub seed: u64,
}

/// Displacement in `[-max, max]³` and grip in `[-1, 1]` (engaged when positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub delta: Vec3,
    pub grip: f64,
}

impl ActionCommand {
    /// Maps a policy output in `[-1, 1]⁴` onto displacement and grip.
    pub fn from_normalized(a: &[f64], max_delta: f64) -> Self {
        Self { delta: Vec3::new(a[0], a[1], a[2]) * max_delta, grip: a[3] }
    }

    pub fn engaged(&self) -> bool {
        self.grip > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn remaining_time_fraction(&self) -> f64 {
        self.values[0]
    }

    pub fn carried_flag(&self) -> f64 {
        self.values[OBSERVATION_LEN - 1]
    }

    /// Positions divided by the arena half extent and velocities by the
    /// per-step speed limit, so network inputs are of order one.
    pub fn normalized(&self, cfg: &EnvConfig) -> Vec<f64> {
        let pos = 1.0 / cfg.arena_half_extent;
        let vel = cfg.step_seconds / cfg.action_max_delta;
        let mut out = self.values.clone();
        for (i, v) in out.iter_mut().enumerate() {
            match i {
                1..=3 | 7..=18 => *v *= pos,
                4..=6 => *v *= vel,
                _ => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub frac_top: f64,
    pub frac_bottom: f64,
    pub frac_overall: f64,
}

#[derive(Debug, Clone)]
pub struct BlockWorld {
    cfg: EnvConfig,
}

impl BlockWorld {
    pub fn new(cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn reset(&self, seed: u64) -> Result<BlockWorldState, EnvError> {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let goal_1 = cfg.goal_1();
        let goal_2 = cfg.goal_2();
        let he = cfg.half_edge();
        let block_1 = match cfg.block1_init {
            Block1Init::AtGoal => goal_1,
            Block1Init::Sampled => {
                let dx = rng.random_range(-he..he);
                let dy = if cfg.planar() { 0.0 } else { rng.random_range(-he..he) };
                goal_1.translated(Vec3::new(dx, dy, 0.0))
            }
        };
        let mut block_2 = None;
        for _ in 0..1000 {
            let mut p = cfg.spawn_region.sample(&mut rng);
            if cfg.planar() {
                p.y = cfg.goal_xy[1];
            }
            let candidate = AlignedBox::cube(Vec3::new(p.x, p.y, he), cfg.block_edge)?;
            if candidate.intersection_volume(&block_1) == 0.0 {
                block_2 = Some(candidate);
                break;
            }
        }
        let block_2 = block_2.ok_or_else(|| {
            EnvError::Config("spawn region leaves no room for block 2 beside block 1".into())
        })?;
        let mut effector = cfg.spawn_region.sample(&mut rng);
        if cfg.planar() {
            effector.y = cfg.goal_xy[1];
        }
        let snapshot = WorldSnapshot {
            effector,
            effector_velocity: Vec3::ZERO,
            block_1,
            block_2,
            goal_1,
            goal_2,
            grip_engaged: false,
            step_index: 0,
        };
        Ok(BlockWorldState {
            snapshot,
            init: snapshot,
            carried: false,
            carry_offset: Vec3::ZERO,
            seed,
        })
    }

    pub fn step(
        &self,
        state: &BlockWorldState,
        action: &ActionCommand,
    ) -> Result<(BlockWorldState, RewardContext), EnvError> {
        let cfg = &self.cfg;
        if self.is_terminal(state) {
            return Err(EnvError::Terminal(state.snapshot.step_index));
        }
        if !action.delta.is_finite() || !action.grip.is_finite() {
            return Err(EnvError::InvalidAction(format!("{action:?}")));
        }
        let m = cfg.action_max_delta;
        let mut delta = action.delta.map(|d| d.clamp(-m, m));
        if cfg.planar() {
            delta.y = 0.0;
        }
        let grip = action.grip.clamp(-1.0, 1.0) > 0.0;

        let prev = state.snapshot;
        let mut next = state.clone();
        let snap = &mut next.snapshot;
        let mut effector = cfg.clamp_to_arena(prev.effector + delta);

        if next.carried && !grip {
            next.carried = false;
            settle(&mut snap.block_2, &snap.block_1);
        }
        if next.carried {
            let he2 = snap.block_2.half_extents.z;
            let mut block_2 = snap.block_2;
            block_2.center = effector + next.carry_offset;
            if block_2.bottom() < 0.0 {
                let lift = he2 - block_2.center.z;
                block_2.center.z += lift;
                effector.z += lift;
            }
            let lift = resolve_collision(&mut snap.block_1, &block_2);
            block_2.center.z += lift;
            effector.z += lift;
            snap.block_2 = block_2;
        } else if grip && effector.distance(&snap.block_2.center) <= cfg.grasp_radius {
            next.carried = true;
            next.carry_offset = snap.block_2.center - effector;
        }

        snap.effector_velocity = (effector - prev.effector) * (1.0 / cfg.step_seconds);
        snap.effector = effector;
        snap.grip_engaged = grip;
        snap.step_index = prev.step_index + 1;

        let ctx = RewardContext { prev, curr: next.snapshot, init: state.init };
        Ok((next, ctx))
    }

    pub fn observe(&self, state: &BlockWorldState) -> Observation {
        let s = &state.snapshot;
        let remaining = 1.0 - s.step_index.min(self.cfg.max_steps) as f64 / self.cfg.max_steps as f64;
        let mut values = Vec::with_capacity(OBSERVATION_LEN);
        values.push(remaining);
        for v in [
            s.effector,
            s.effector_velocity,
            s.block_1.center,
            s.block_2.center,
            s.goal_1.center,
            s.goal_2.center,
        ] {
            values.extend_from_slice(&v.to_array());
        }
        values.push(if state.carried { 1.0 } else { 0.0 });
        Observation { values }
    }

    pub fn fractional_success(&self, state: &BlockWorldState) -> SuccessReport {
        fractional_success(&state.snapshot)
    }

    pub fn is_terminal(&self, state: &BlockWorldState) -> bool {
        state.snapshot.step_index >= self.cfg.max_steps
    }
}

/// Per-block overlap with its goal and the volume-weighted mean of the two.
pub fn fractional_success(s: &WorldSnapshot) -> SuccessReport {
    let frac_top = goal_overlap(&s.block_2, &s.goal_2).unwrap_or(0.0);
    let frac_bottom = goal_overlap(&s.block_1, &s.goal_1).unwrap_or(0.0);
    let (v1, v2) = (s.block_1.volume(), s.block_2.volume());
    let frac_overall = (v2 * frac_top + v1 * frac_bottom) / (v1 + v2);
    SuccessReport { frac_top, frac_bottom, frac_overall }
}

/// Drops `block` onto block 1 when their footprints overlap, else onto the floor.
fn settle(block: &mut AlignedBox, support: &AlignedBox) {
    let he = block.half_extents.z;
    let base = if block.footprint_overlaps(support) { support.top() + CONTACT_GAP } else { 0.0 };
    block.center.z = base + he;
}

/// Removes interpenetration between a carried block and block 1.
///
/// Returns how far the carried block must be lifted (zero when block 1 is
/// shoved horizontally instead).
fn resolve_collision(block_1: &mut AlignedBox, carried: &AlignedBox) -> f64 {
    let [ox, oy, oz] = carried.axis_overlaps(block_1);
    if ox <= 0.0 || oy <= 0.0 || oz <= 0.0 {
        return 0.0;
    }
    if oz <= ox.min(oy) && carried.center.z >= block_1.center.z {
        return block_1.top() + CONTACT_GAP + carried.half_extents.z - carried.center.z;
    }
    let axis = if ox <= oy { 0 } else { 1 };
    let diff = block_1.center.component(axis) - carried.center.component(axis);
    let sign = if diff >= 0.0 { 1.0 } else { -1.0 };
    let reach = carried.half_extents.component(axis) + block_1.half_extents.component(axis);
    *block_1.center.component_mut(axis) =
        carried.center.component(axis) + sign * (reach + CONTACT_GAP);
    0.0
}

/// Scripted pick-and-place controller used to show the task is solvable.
#[derive(Debug, Clone, Copy)]
pub struct ScriptedPilot {
    /// Clearance above goal 2 while moving horizontally (m).
    pub clearance: f64,
    pub tolerance: f64,
}

impl Default for ScriptedPilot {
    fn default() -> Self {
        Self { clearance: 0.02, tolerance: 1e-4 }
    }
}

impl ScriptedPilot {
    pub fn act(&self, state: &BlockWorldState) -> ActionCommand {
        let s = &state.snapshot;
        let toward = |target: Vec3| target - s.effector;
        if !state.carried {
            if s.step_index > 0 && fractional_success(s).frac_top > 0.99 {
                return ActionCommand { delta: Vec3::ZERO, grip: -1.0 };
            }
            let delta = toward(s.block_2.center);
            let grip = 1.0;
            return ActionCommand { delta, grip };
        }
        let goal = s.goal_2.center;
        let block = s.block_2.center;
        let cruise = goal.z + self.clearance;
        let block_target = if block.xy_distance(&goal) > self.tolerance {
            if block.z < cruise - self.tolerance {
                Vec3::new(block.x, block.y, cruise)
            } else {
                Vec3::new(goal.x, goal.y, cruise)
            }
        } else {
            goal
        };
        if block.distance(&goal) <= self.tolerance {
            return ActionCommand { delta: Vec3::ZERO, grip: -1.0 };
        }
        ActionCommand { delta: toward(block_target - state.carry_offset), grip: 1.0 }
    }

    /// Runs one full episode and returns the final state.
    pub fn run(&self, world: &BlockWorld, seed: u64) -> Result<BlockWorldState, EnvError> {
        let mut state = world.reset(seed)?;
        while !world.is_terminal(&state) {
            let a = self.act(&state);
            state = world.step(&state, &a)?.0;
        }
        Ok(state)
    }
}
