//! Compound reward functions for the two-block manipulation tasks.
//!
//! A [`CompoundReward`] is an ordered list of weighted components, each
//! optionally switched by one or more gates. Components are drawn from a
//! fixed eight-entry taxonomy ([`ComponentKind`]); the same taxonomy backs
//! the binary presence vectors used for task similarity.

mod builders;
mod geometry;

pub use builders::{
    baseline_stack_reward, builtin_reward, grasp_reward, pick_reward, refined_stack_reward,
    BUILTIN_REWARDS, CONTACT_THRESHOLD, DEFAULT_VELOCITY_WEIGHT,
};
pub use geometry::{goal_overlap, AlignedBox, Vec3};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::RewardVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid reward configuration: {0}")]
    Config(String),
    #[error("invalid reward context: {0}")]
    Context(String),
}

/// Positions, velocity and block/goal regions at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldSnapshot {
    pub effector: Vec3,
    pub effector_velocity: Vec3,
    pub block_1: AlignedBox,
    pub block_2: AlignedBox,
    pub goal_1: AlignedBox,
    pub goal_2: AlignedBox,
    pub grip_engaged: bool,
    pub step_index: u64,
}

impl WorldSnapshot {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !self.effector.is_finite() || !self.effector_velocity.is_finite() {
            return Err(RewardError::InvalidGeometry("non-finite effector state".into()));
        }
        for b in [&self.block_1, &self.block_2, &self.goal_1, &self.goal_2] {
            b.validate()?;
        }
        Ok(())
    }

    pub fn block(&self, id: BlockId) -> &AlignedBox {
        match id {
            BlockId::Block1 => &self.block_1,
            BlockId::Block2 => &self.block_2,
        }
    }

    pub fn goal(&self, id: GoalId) -> &AlignedBox {
        match id {
            GoalId::Goal1 => &self.goal_1,
            GoalId::Goal2 => &self.goal_2,
        }
    }

    pub fn position(&self, subject: Subject) -> Vec3 {
        match subject {
            Subject::Effector => self.effector,
            Subject::Block1 => self.block_1.center,
            Subject::Block2 => self.block_2.center,
            Subject::Goal1 => self.goal_1.center,
            Subject::Goal2 => self.goal_2.center,
        }
    }
}

/// The previous, current and episode-initial snapshots a reward is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardContext {
    pub prev: WorldSnapshot,
    pub curr: WorldSnapshot,
    pub init: WorldSnapshot,
}

impl RewardContext {
    pub fn new(
        prev: WorldSnapshot,
        curr: WorldSnapshot,
        init: WorldSnapshot,
    ) -> Result<Self, RewardError> {
        let ctx = Self { prev, curr, init };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.prev.step_index + 1 != self.curr.step_index {
            return Err(RewardError::Context(format!(
                "step indices {} -> {} are not consecutive",
                self.prev.step_index, self.curr.step_index
            )));
        }
        if self.init.step_index != 0 {
            return Err(RewardError::Context(format!(
                "initial snapshot has step index {}",
                self.init.step_index
            )));
        }
        self.prev.validate()?;
        self.curr.validate()?;
        self.init.validate()
    }
}

/// The eight reward-component categories, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    /// R_end: end-effector approaching the target block.
    EndEffectorApproach,
    /// R_move: target block moving away from where it started.
    BlockDisplacementFromInit,
    /// R_vert: target block approaching its goal height.
    VerticalToGoal,
    /// R_goal1: overlap of block 1 with goal 1.
    Goal1Overlap,
    /// R_goal2: overlap of block 2 with goal 2.
    Goal2Overlap,
    /// R_dist: clamped linear ramp on effector-to-block distance.
    EffectorBlockProximity,
    /// R_hori: target block approaching its goal in the horizontal plane.
    HorizontalToGoal,
    /// R_vel: change in effector velocity.
    VelocitySmoothness,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 8] = [
        ComponentKind::EndEffectorApproach,
        ComponentKind::BlockDisplacementFromInit,
        ComponentKind::VerticalToGoal,
        ComponentKind::Goal1Overlap,
        ComponentKind::Goal2Overlap,
        ComponentKind::EffectorBlockProximity,
        ComponentKind::HorizontalToGoal,
        ComponentKind::VelocitySmoothness,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ComponentKind::EndEffectorApproach => "R_end",
            ComponentKind::BlockDisplacementFromInit => "R_move",
            ComponentKind::VerticalToGoal => "R_vert",
            ComponentKind::Goal1Overlap => "R_goal1",
            ComponentKind::Goal2Overlap => "R_goal2",
            ComponentKind::EffectorBlockProximity => "R_dist",
            ComponentKind::HorizontalToGoal => "R_hori",
            ComponentKind::VelocitySmoothness => "R_vel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockId {
    Block1,
    #[default]
    Block2,
}

impl BlockId {
    pub fn goal(self) -> GoalId {
        match self {
            BlockId::Block1 => GoalId::Goal1,
            BlockId::Block2 => GoalId::Goal2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalId {
    Goal1,
    Goal2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Effector,
    Block1,
    Block2,
    Goal1,
    Goal2,
}

/// An indicator condition evaluated on the current snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    DistanceAbove { a: Subject, b: Subject, threshold: f64 },
    DistanceBelow { a: Subject, b: Subject, threshold: f64 },
    BlockAboveGoalHeight { block: BlockId, goal: GoalId },
}

impl Gate {
    pub fn validate(&self) -> Result<(), RewardError> {
        match *self {
            Gate::DistanceAbove { threshold, .. } | Gate::DistanceBelow { threshold, .. } => {
                if !(threshold.is_finite() && threshold > 0.0) {
                    return Err(RewardError::Config(format!(
                        "gate threshold must be positive, got {threshold}"
                    )));
                }
                Ok(())
            }
            Gate::BlockAboveGoalHeight { .. } => Ok(()),
        }
    }

    /// Strict inequalities: a distance exactly at the threshold satisfies neither form.
    pub fn is_satisfied(&self, snap: &WorldSnapshot) -> bool {
        match *self {
            Gate::DistanceAbove { a, b, threshold } => {
                snap.position(a).distance(&snap.position(b)) > threshold
            }
            Gate::DistanceBelow { a, b, threshold } => {
                snap.position(a).distance(&snap.position(b)) < threshold
            }
            Gate::BlockAboveGoalHeight { block, goal } => {
                snap.block(block).center.z - snap.goal(goal).center.z > 0.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityConfig {
    pub min_dist: f64,
    pub max_dist: f64,
}

impl ProximityConfig {
    pub fn new(min_dist: f64, max_dist: f64) -> Result<Self, RewardError> {
        let p = Self { min_dist, max_dist };
        p.validate()?;
        Ok(p)
    }

    /// `min_dist` at the contact threshold, `max_dist` at the diagonal of an
    /// arena spanning `[-h, h]² × [0, 2h]`.
    pub fn for_arena(arena_half_extent: f64) -> Self {
        Self {
            min_dist: CONTACT_THRESHOLD,
            max_dist: 2.0 * arena_half_extent * 3f64.sqrt(),
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.min_dist.is_finite() && self.max_dist.is_finite())
            || self.min_dist <= 0.0
            || self.min_dist >= self.max_dist
        {
            return Err(RewardError::Config(format!(
                "proximity requires 0 < min_dist < max_dist, got {} / {}",
                self.min_dist, self.max_dist
            )));
        }
        Ok(())
    }

    pub fn ramp(&self, distance: f64) -> f64 {
        (1.0 - (distance - self.min_dist) / (self.max_dist - self.min_dist)).min(1.0)
    }
}

fn is_default_target(b: &BlockId) -> bool {
    *b == BlockId::Block2
}

/// One weighted term of a compound reward.
///
/// `target` selects the block the distance-style kinds refer to (block 2
/// unless stated); the overlap kinds are tied to their own block and ignore it.
/// All `gates` must hold for the component to be active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardComponent {
    pub kind: ComponentKind,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "is_default_target")]
    pub target: BlockId,
    #[serde(default, alias = "gate", skip_serializing_if = "Vec::is_empty")]
    pub gates: Vec<Gate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proximity: Option<ProximityConfig>,
}

impl RewardComponent {
    pub fn new(kind: ComponentKind, weight: f64) -> Self {
        Self { kind, weight, target: BlockId::Block2, gates: Vec::new(), proximity: None }
    }

    pub fn on(mut self, target: BlockId) -> Self {
        self.target = target;
        self
    }

    pub fn gated(mut self, gate: Gate) -> Self {
        self.gates.push(gate);
        self
    }

    pub fn with_proximity(mut self, p: ProximityConfig) -> Self {
        self.proximity = Some(p);
        self
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !self.weight.is_finite() || self.weight == 0.0 {
            return Err(RewardError::Config(format!(
                "{:?} weight must be finite and nonzero, got {}",
                self.kind, self.weight
            )));
        }
        for g in &self.gates {
            g.validate()?;
        }
        match (self.kind, &self.proximity) {
            (ComponentKind::EffectorBlockProximity, Some(p)) => p.validate(),
            (ComponentKind::EffectorBlockProximity, None) => Err(RewardError::Config(
                "effector_block_proximity requires a proximity config".into(),
            )),
            (kind, Some(_)) => Err(RewardError::Config(format!(
                "{kind:?} does not take a proximity config"
            ))),
            (_, None) => Ok(()),
        }
    }

    /// The unweighted term for this component's kind.
    pub fn raw_term(&self, ctx: &RewardContext) -> Result<f64, RewardError> {
        let (prev, curr) = (&ctx.prev, &ctx.curr);
        let k = self.target;
        let g = k.goal();
        let value = match self.kind {
            ComponentKind::EndEffectorApproach => {
                curr.block(k).center.distance(&curr.effector)
                    - prev.block(k).center.distance(&prev.effector)
            }
            ComponentKind::BlockDisplacementFromInit => {
                let origin = ctx.init.block(k).center;
                curr.block(k).center.distance(&origin) - prev.block(k).center.distance(&origin)
            }
            ComponentKind::VerticalToGoal => {
                let goal_z = curr.goal(g).center.z;
                (curr.block(k).center.z - goal_z).abs() - (prev.block(k).center.z - goal_z).abs()
            }
            ComponentKind::Goal1Overlap => goal_overlap(&curr.block_1, &curr.goal_1)?,
            ComponentKind::Goal2Overlap => goal_overlap(&curr.block_2, &curr.goal_2)?,
            ComponentKind::EffectorBlockProximity => {
                let p = self.proximity.ok_or_else(|| {
                    RewardError::Config("effector_block_proximity requires a proximity config".into())
                })?;
                p.ramp(curr.block(k).center.distance(&curr.effector))
            }
            ComponentKind::HorizontalToGoal => {
                curr.block(k).center.xy_distance(&curr.goal(g).center)
                    - prev.block(k).center.xy_distance(&prev.goal(g).center)
            }
            ComponentKind::VelocitySmoothness => {
                (curr.effector_velocity - prev.effector_velocity).norm()
            }
        };
        Ok(value)
    }
}

/// Evaluates one component: `(false, 0)` when a gate fails, otherwise the weighted term.
pub fn eval_component(
    c: &RewardComponent,
    ctx: &RewardContext,
) -> Result<(bool, f64), RewardError> {
    if c.kind == ComponentKind::EffectorBlockProximity && c.proximity.is_none() {
        return Err(RewardError::Config(
            "effector_block_proximity requires a proximity config".into(),
        ));
    }
    if !c.gates.iter().all(|g| g.is_satisfied(&ctx.curr)) {
        return Ok((false, 0.0));
    }
    Ok((true, c.weight * c.raw_term(ctx)?))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCompound {
    name: String,
    components: Vec<RewardComponent>,
}

/// An ordered, validated list of reward components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCompound")]
pub struct CompoundReward {
    name: String,
    components: Vec<RewardComponent>,
}

impl TryFrom<RawCompound> for CompoundReward {
    type Error = RewardError;
    fn try_from(raw: RawCompound) -> Result<Self, Self::Error> {
        CompoundReward::new(raw.name, raw.components)
    }
}

impl CompoundReward {
    pub fn new(
        name: impl Into<String>,
        components: Vec<RewardComponent>,
    ) -> Result<Self, RewardError> {
        let name = name.into();
        if components.is_empty() {
            return Err(RewardError::Config(format!("reward '{name}' has no components")));
        }
        for (i, c) in components.iter().enumerate() {
            c.validate()?;
            let dup = components[..i]
                .iter()
                .any(|o| o.kind == c.kind && o.target == c.target && o.gates == c.gates);
            if dup {
                return Err(RewardError::Config(format!(
                    "reward '{name}' repeats {:?} with identical gates",
                    c.kind
                )));
            }
        }
        Ok(Self { name, components })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> &[RewardComponent] {
        &self.components
    }

    pub fn gate_count(&self) -> usize {
        self.components.iter().map(|c| c.gates.len()).sum()
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, RewardError> {
        let components = self
            .components
            .iter()
            .map(|c| RewardComponent { weight: c.weight * factor, ..c.clone() })
            .collect();
        Self::new(self.name.clone(), components)
    }

    pub fn to_vector(&self) -> RewardVector {
        reward_to_vector(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentTrace {
    pub kind: ComponentKind,
    pub active: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewardBreakdown {
    pub per_component: Vec<ComponentTrace>,
    pub total: f64,
}

/// Evaluates every component in declaration order and sums the values.
pub fn eval_compound(
    r: &CompoundReward,
    ctx: &RewardContext,
) -> Result<RewardBreakdown, RewardError> {
    let mut per_component = Vec::with_capacity(r.components.len());
    let mut total = 0.0;
    for c in &r.components {
        let (active, value) = eval_component(c, ctx)?;
        total += value;
        per_component.push(ComponentTrace { kind: c.kind, active, value });
    }
    Ok(RewardBreakdown { per_component, total })
}

/// Presence vector over the canonical kinds; gated components count as present.
pub fn reward_to_vector(r: &CompoundReward) -> RewardVector {
    let mut flags = [0u8; 8];
    for c in &r.components {
        flags[c.kind.index()] = 1;
    }
    RewardVector::new(flags).expect("flags are binary by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn cube(center: Vec3) -> AlignedBox {
        AlignedBox::cube(center, 0.065).unwrap()
    }

    pub(crate) fn snapshot(step: u64) -> WorldSnapshot {
        let goal_1 = cube(Vec3::new(0.0, 0.0, 0.0325));
        let goal_2 = cube(Vec3::new(0.0, 0.0, 0.0975));
        WorldSnapshot {
            effector: Vec3::new(0.2, 0.0, 0.1),
            effector_velocity: Vec3::ZERO,
            block_1: goal_1,
            block_2: cube(Vec3::new(0.1, 0.0, 0.0325)),
            goal_1,
            goal_2,
            grip_engaged: false,
            step_index: step,
        }
    }

    fn still_context() -> RewardContext {
        let s0 = snapshot(0);
        let mut s1 = s0;
        s1.step_index = 1;
        RewardContext::new(s0, s1, s0).unwrap()
    }

    #[test]
    fn approach_example() {
        let mut ctx = still_context();
        // effector 0.10 m from block 2, then 0.08 m
        ctx.prev.effector = ctx.prev.block_2.center + Vec3::new(0.10, 0.0, 0.0);
        ctx.curr.effector = ctx.curr.block_2.center + Vec3::new(0.08, 0.0, 0.0);
        let c = RewardComponent::new(ComponentKind::EndEffectorApproach, -750.0);
        let (active, v) = eval_component(&c, &ctx).unwrap();
        assert!(active);
        assert!((v - 15.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn unsatisfied_gate_gives_inactive_zero() {
        let ctx = still_context();
        for kind in ComponentKind::ALL {
            let mut c = RewardComponent::new(kind, 3.0).gated(Gate::DistanceBelow {
                a: Subject::Effector,
                b: Subject::Block2,
                threshold: 0.001,
            });
            if kind == ComponentKind::EffectorBlockProximity {
                c = c.with_proximity(ProximityConfig::new(0.02, 0.52).unwrap());
            }
            assert_eq!(eval_component(&c, &ctx).unwrap(), (false, 0.0));
        }
    }

    #[test]
    fn proximity_clamps_at_min_dist() {
        let mut ctx = still_context();
        ctx.curr.effector = ctx.curr.block_2.center + Vec3::new(0.0, 0.02, 0.0);
        let p = ProximityConfig::new(0.02, 0.52).unwrap();
        let c = RewardComponent::new(ComponentKind::EffectorBlockProximity, 1.0).with_proximity(p);
        let (active, v) = eval_component(&c, &ctx).unwrap();
        assert!(active);
        assert!((v - 1.0).abs() < 1e-12);
        // inside min_dist the ramp saturates
        ctx.curr.effector = ctx.curr.block_2.center;
        assert_eq!(eval_component(&c, &ctx).unwrap().1, 1.0);
    }

    #[test]
    fn missing_proximity_is_a_config_error() {
        let c = RewardComponent::new(ComponentKind::EffectorBlockProximity, 1.0);
        assert!(matches!(eval_component(&c, &still_context()), Err(RewardError::Config(_))));
        assert!(CompoundReward::new("x", vec![c]).is_err());
        let stray = RewardComponent::new(ComponentKind::VelocitySmoothness, 1.0)
            .with_proximity(ProximityConfig::new(0.02, 0.52).unwrap());
        assert!(CompoundReward::new("x", vec![stray]).is_err());
    }

    #[test]
    fn compound_validation() {
        assert!(CompoundReward::new("empty", vec![]).is_err());
        let zero = RewardComponent::new(ComponentKind::VelocitySmoothness, 0.0);
        assert!(CompoundReward::new("zero", vec![zero]).is_err());
        let a = RewardComponent::new(ComponentKind::VelocitySmoothness, 1.0);
        assert!(CompoundReward::new("dup", vec![a.clone(), a.clone()]).is_err());
        let gated = a.clone().gated(Gate::BlockAboveGoalHeight {
            block: BlockId::Block2,
            goal: GoalId::Goal2,
        });
        assert!(CompoundReward::new("ok", vec![a, gated]).is_ok());
        let bad_gate = RewardComponent::new(ComponentKind::Goal1Overlap, 1.0).gated(
            Gate::DistanceAbove { a: Subject::Block1, b: Subject::Effector, threshold: 0.0 },
        );
        assert!(CompoundReward::new("bad", vec![bad_gate]).is_err());
    }

    #[test]
    fn context_requires_consecutive_steps() {
        let s0 = snapshot(0);
        assert!(RewardContext::new(s0, s0, s0).is_err());
        let s3 = snapshot(3);
        assert!(RewardContext::new(snapshot(2), s3, s3).is_err());
        assert!(RewardContext::new(snapshot(2), s3, s0).is_ok());
    }

    #[test]
    fn velocity_only_vector() {
        let r = CompoundReward::new(
            "vel",
            vec![RewardComponent::new(ComponentKind::VelocitySmoothness, 0.005)],
        )
        .unwrap();
        assert_eq!(reward_to_vector(&r).flags(), [0, 0, 0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn compound_round_trips_through_json() {
        let r = baseline_stack_reward();
        let json = serde_json::to_string(&r).unwrap();
        let back: CompoundReward = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let bad = r#"{"name":"x","components":[{"kind":"goal1_overlap","weight":0}]}"#;
        assert!(serde_json::from_str::<CompoundReward>(bad).is_err());
    }
}
