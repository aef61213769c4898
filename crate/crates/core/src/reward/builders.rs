use super::{
    BlockId, ComponentKind, CompoundReward, Gate, GoalId, ProximityConfig, RewardComponent,
    RewardError, Subject,
};

/// Effector-to-block contact distance used by the stacking gates (m).
pub const CONTACT_THRESHOLD: f64 = 0.02;

/// Weight of the velocity-change term in both stacking rewards.
pub const DEFAULT_VELOCITY_WEIGHT: f64 = 0.005;

pub const BUILTIN_REWARDS: [&str; 4] = ["baseline_stack", "refined_stack", "grasp", "pick"];

use ComponentKind::*;

fn build(name: &str, components: Vec<RewardComponent>) -> CompoundReward {
    CompoundReward::new(name, components).expect("built-in reward is valid")
}

/// Benchmark stacking reward with its three indicator gates.
///
/// Branch A (effector farther than the contact threshold from block 1)
/// rewards approaching block 1 and moving block 1 toward goal 1. Block 1
/// only ever slides on the floor, so its goal distance is tracked in the
/// horizontal plane. Branch B (effector within the threshold) rewards
/// approaching block 2, closing the height gap, and, once block 2 is above
/// its goal height, closing the horizontal gap.
pub fn baseline_stack_reward() -> CompoundReward {
    let far = Gate::DistanceAbove {
        a: Subject::Block1,
        b: Subject::Effector,
        threshold: CONTACT_THRESHOLD,
    };
    let near = Gate::DistanceBelow {
        a: Subject::Block1,
        b: Subject::Effector,
        threshold: CONTACT_THRESHOLD,
    };
    let above = Gate::BlockAboveGoalHeight { block: BlockId::Block2, goal: GoalId::Goal2 };
    build(
        "baseline_stack",
        vec![
            RewardComponent::new(EndEffectorApproach, -750.0).on(BlockId::Block1).gated(far),
            RewardComponent::new(HorizontalToGoal, -250.0).on(BlockId::Block1).gated(far),
            RewardComponent::new(EndEffectorApproach, -750.0).gated(near),
            RewardComponent::new(VerticalToGoal, -250.0).gated(near),
            RewardComponent::new(HorizontalToGoal, -125.0).gated(near).gated(above),
            RewardComponent::new(Goal1Overlap, 1.0),
            RewardComponent::new(Goal2Overlap, 1.0),
            RewardComponent::new(VelocitySmoothness, DEFAULT_VELOCITY_WEIGHT),
        ],
    )
}

/// Stacking reward with all gates removed and goal weights favouring block 2.
pub fn refined_stack_reward() -> CompoundReward {
    build(
        "refined_stack",
        vec![
            RewardComponent::new(EndEffectorApproach, -750.0),
            RewardComponent::new(VerticalToGoal, -250.0),
            RewardComponent::new(HorizontalToGoal, -125.0),
            RewardComponent::new(Goal1Overlap, 0.5),
            RewardComponent::new(Goal2Overlap, 1.0),
            RewardComponent::new(VelocitySmoothness, DEFAULT_VELOCITY_WEIGHT),
        ],
    )
}

pub fn grasp_reward(p: ProximityConfig) -> Result<CompoundReward, RewardError> {
    p.validate()?;
    CompoundReward::new(
        "grasp",
        vec![
            RewardComponent::new(EndEffectorApproach, -750.0),
            RewardComponent::new(BlockDisplacementFromInit, -250.0),
            RewardComponent::new(Goal1Overlap, 0.5),
            RewardComponent::new(EffectorBlockProximity, 1.0).with_proximity(p),
        ],
    )
}

pub fn pick_reward() -> CompoundReward {
    build(
        "pick",
        vec![
            RewardComponent::new(EndEffectorApproach, -750.0),
            RewardComponent::new(VerticalToGoal, -250.0),
            RewardComponent::new(Goal1Overlap, 0.5),
            RewardComponent::new(Goal2Overlap, 1.0),
        ],
    )
}

/// Looks up one of [`BUILTIN_REWARDS`]; `proximity` is only used by `grasp`.
pub fn builtin_reward(name: &str, proximity: ProximityConfig) -> Result<CompoundReward, RewardError> {
    match name {
        "baseline_stack" => Ok(baseline_stack_reward()),
        "refined_stack" => Ok(refined_stack_reward()),
        "grasp" => grasp_reward(proximity),
        "pick" => Ok(pick_reward()),
        other => Err(RewardError::Config(format!(
            "unknown built-in reward '{other}' (expected one of {BUILTIN_REWARDS:?})"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::snapshot;
    use super::super::*;
    use super::*;

    fn proximity() -> ProximityConfig {
        ProximityConfig::new(0.02, 0.52).unwrap()
    }

    fn ctx_with(f: impl Fn(&mut WorldSnapshot, &mut WorldSnapshot)) -> RewardContext {
        let mut prev = snapshot(4);
        let mut curr = snapshot(5);
        f(&mut prev, &mut curr);
        RewardContext::new(prev, curr, snapshot(0)).unwrap()
    }

    #[test]
    fn baseline_has_eight_components_and_six_kinds() {
        let r = baseline_stack_reward();
        assert_eq!(r.components().len(), 8);
        assert_eq!(reward_to_vector(&r).flags(), [1, 0, 1, 1, 1, 0, 1, 1]);
    }

    #[test]
    fn baseline_far_from_block1_activates_branch_a_only() {
        let ctx = ctx_with(|p, c| {
            p.effector = p.block_1.center + Vec3::new(0.06, 0.0, 0.0);
            c.effector = c.block_1.center + Vec3::new(0.05, 0.0, 0.0);
        });
        let b = eval_compound(&baseline_stack_reward(), &ctx).unwrap();
        let active: Vec<bool> = b.per_component.iter().map(|t| t.active).collect();
        assert_eq!(active, [true, true, false, false, false, true, true, true]);
        for t in &b.per_component[2..5] {
            assert_eq!(t.value, 0.0);
        }
    }

    #[test]
    fn baseline_horizontal_needs_block2_above_goal_height() {
        // effector 0.01 m from block 1, block 2 on the floor below goal 2
        let ctx = ctx_with(|p, c| {
            p.effector = p.block_1.center + Vec3::new(0.0, 0.01, 0.0);
            c.effector = c.block_1.center + Vec3::new(0.01, 0.0, 0.0);
        });
        let b = eval_compound(&baseline_stack_reward(), &ctx).unwrap();
        assert!(b.per_component[3].active, "vertical");
        assert!(!b.per_component[4].active, "horizontal");
        assert!(!b.per_component[0].active && !b.per_component[1].active);
    }

    #[test]
    fn baseline_exact_threshold_activates_neither_branch() {
        let ctx = ctx_with(|_, c| {
            c.effector = c.block_1.center + Vec3::new(CONTACT_THRESHOLD, 0.0, 0.0);
        });
        let b = eval_compound(&baseline_stack_reward(), &ctx).unwrap();
        assert!(b.per_component[..5].iter().all(|t| !t.active));
    }

    #[test]
    fn refined_has_no_gates_and_expected_weights() {
        let r = refined_stack_reward();
        assert_eq!(r.gate_count(), 0);
        let w = |k: ComponentKind| r.components().iter().find(|c| c.kind == k).unwrap().weight;
        assert_eq!(w(ComponentKind::Goal1Overlap), 0.5);
        assert_eq!(w(ComponentKind::Goal2Overlap), 1.0);
        assert_eq!(w(ComponentKind::VelocitySmoothness), 0.005);
    }

    #[test]
    fn refined_worked_example() {
        // approach delta -0.02, vertical delta -0.02, horizontal delta -0.01,
        // block 1 on goal 1, block 2 off goal 2, |v_t - v_{t-1}| = 0.4
        let ctx = ctx_with(|p, c| {
            p.block_2 = p.block_2.translated(Vec3::new(0.0, 0.0, 0.015));
            c.block_2 = p.block_2.translated(Vec3::new(-0.01, 0.0, 0.02));
            p.effector = p.block_2.center + Vec3::new(0.0, 0.0, 0.10);
            c.effector = c.block_2.center + Vec3::new(0.0, 0.0, 0.08);
            p.effector_velocity = Vec3::ZERO;
            c.effector_velocity = Vec3::new(0.0, 0.4, 0.0);
        });
        let b = eval_compound(&refined_stack_reward(), &ctx).unwrap();
        assert_eq!(b.per_component[4].value, 0.0);
        assert!((b.total - 21.752).abs() < 1e-9, "{}", b.total);
    }

    #[test]
    fn zero_motion_gives_zero_total() {
        let s = snapshot(0);
        let mut far = s;
        far.block_1 = far.block_1.translated(Vec3::new(-0.2, 0.0, 0.0));
        far.block_2 = far.block_2.translated(Vec3::new(0.1, 0.1, 0.0));
        let mut curr = far;
        curr.step_index = 1;
        let ctx = RewardContext::new(far, curr, far).unwrap();
        for r in [refined_stack_reward(), pick_reward(), baseline_stack_reward()] {
            assert_eq!(eval_compound(&r, &ctx).unwrap().total, 0.0, "{}", r.name());
        }
    }

    #[test]
    fn grasp_vector_and_stationary_block() {
        let r = grasp_reward(proximity()).unwrap();
        assert_eq!(reward_to_vector(&r).flags(), [1, 1, 0, 1, 0, 1, 0, 0]);
        let ctx = ctx_with(|_, _| {});
        let b = eval_compound(&r, &ctx).unwrap();
        assert_eq!(b.per_component[1].value, 0.0);
        assert!(grasp_reward(ProximityConfig { min_dist: 0.5, max_dist: 0.1 }).is_err());
    }

    #[test]
    fn grasp_proximity_zero_at_max_dist() {
        let p = proximity();
        let ctx = ctx_with(|_, c| {
            c.effector = c.block_2.center + Vec3::new(0.0, 0.0, p.max_dist);
        });
        let r = grasp_reward(p).unwrap();
        let b = eval_compound(&r, &ctx).unwrap();
        assert!(b.per_component[3].value.abs() < 1e-12);
    }

    #[test]
    fn pick_vector_gates_and_lift() {
        let r = pick_reward();
        assert_eq!(reward_to_vector(&r).flags(), [1, 0, 1, 1, 1, 0, 0, 0]);
        assert_eq!(r.gate_count(), 0);
        // z-gap 0.20 -> 0.18 with the effector carried along
        let ctx = ctx_with(|p, c| {
            let gz = p.goal_2.center.z;
            p.block_2.center.z = gz - 0.20;
            c.block_2.center.z = gz - 0.18;
            p.block_2.center.x = 0.3;
            c.block_2.center.x = 0.3;
            p.effector = p.block_2.center;
            c.effector = c.block_2.center;
        });
        let b = eval_compound(&r, &ctx).unwrap();
        let goals = 0.5 * 1.0 + 0.0;
        assert!((b.total - (-250.0 * -0.02 + goals)).abs() < 1e-9, "{}", b.total);
    }

    #[test]
    fn builtin_lookup() {
        for name in BUILTIN_REWARDS {
            assert_eq!(builtin_reward(name, proximity()).unwrap().name(), name);
        }
        assert!(builtin_reward("push", proximity()).is_err());
    }
}
