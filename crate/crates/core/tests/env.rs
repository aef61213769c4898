use kcac_core::env::*;
use kcac_core::reward::{goal_overlap, Vec3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(planar: bool, sampled: bool) -> EnvConfig {
    EnvConfig {
        max_steps: 120,
        action_max_delta: 0.02,
        dimensionality: if planar { Dimensionality::Planar } else { Dimensionality::Spatial },
        block1_init: if sampled { Block1Init::Sampled } else { Block1Init::AtGoal },
        ..EnvConfig::default()
    }
}

/// Random actions mixed with scripted pick-and-place moves so carrying,
/// releasing and collisions all occur.
fn exploratory_action(state: &BlockWorldState, rng: &mut ChaCha8Rng) -> ActionCommand {
    if rng.random_bool(0.6) {
        let mut a = ScriptedPilot::default().act(state);
        a.delta = a.delta + Vec3::new(rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01), rng.random_range(-0.01..0.01));
        if rng.random_bool(0.05) {
            a.grip = -a.grip;
        }
        a
    } else {
        ActionCommand {
            delta: Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
            grip: rng.random_range(-1.0..1.0),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollouts_respect_geometry(seed in any::<u64>(), planar in any::<bool>(), sampled in any::<bool>()) {
        let cfg = config(planar, sampled);
        let world = BlockWorld::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut state = world.reset(seed).unwrap();
        let vol = state.snapshot.block_1.volume();
        let h = cfg.arena_half_extent;
        while !world.is_terminal(&state) {
            let a = exploratory_action(&state, &mut rng);
            let (next, ctx) = world.step(&state, &a).unwrap();
            let s = &next.snapshot;
            prop_assert_eq!(ctx.prev, state.snapshot);
            prop_assert_eq!(ctx.curr, *s);
            prop_assert_eq!(s.step_index, state.snapshot.step_index + 1);
            // no interpenetration, nothing below the floor, volumes conserved
            prop_assert!(s.block_1.intersection_volume(&s.block_2) < 1e-12);
            prop_assert!(s.block_1.bottom() >= -1e-12 && s.block_2.bottom() >= -1e-12);
            prop_assert!((s.block_2.volume() - vol).abs() < 1e-15);
            // horizontal motion is bounded by the action limit and the arena
            let d = s.effector - state.snapshot.effector;
            prop_assert!(d.x.abs() <= cfg.action_max_delta + 1e-12);
            prop_assert!(d.y.abs() <= cfg.action_max_delta + 1e-12);
            prop_assert!(s.effector.x.abs() <= h && s.effector.y.abs() <= h);
            if planar {
                prop_assert_eq!(s.effector.y, cfg.goal_xy[1]);
                prop_assert_eq!(s.block_2.center.y, cfg.goal_xy[1]);
            }
            // a carried block keeps its offset from the effector
            if next.carried && state.carried {
                let off = s.block_2.center - s.effector;
                prop_assert!((off - next.carry_offset).norm() < 1e-12);
            }
            // a block that is not carried rests on the floor or on block 1
            if !next.carried {
                let b = s.block_2.bottom();
                prop_assert!(b.abs() < 1e-9 || (b - s.block_1.top()).abs() < 1e-8, "floating block at {b}");
            }
            let obs = world.observe(&next);
            prop_assert_eq!(obs.len(), OBSERVATION_LEN);
            prop_assert!(obs.values.iter().all(|v| v.is_finite()));
            let rep = world.fractional_success(&next);
            prop_assert!((0.0..=1.0).contains(&rep.frac_top) && (0.0..=1.0).contains(&rep.frac_bottom));
            prop_assert!((rep.frac_top - goal_overlap(&s.block_2, &s.goal_2).unwrap()).abs() < 1e-12);
            state = next;
        }
        let idle = ActionCommand { delta: Vec3::ZERO, grip: 0.0 };
        prop_assert!(world.step(&state, &idle).is_err());
    }

    #[test]
    fn reset_is_seeded(seed in any::<u64>()) {
        let world = BlockWorld::new(config(false, true)).unwrap();
        prop_assert_eq!(world.reset(seed).unwrap(), world.reset(seed).unwrap());
        let s = world.reset(seed).unwrap().snapshot;
        prop_assert_eq!(s.block_1.intersection_volume(&s.block_2), 0.0);
        prop_assert_eq!(s.step_index, 0);
    }
}

#[test]
fn pilot_solves_most_seeds() {
    let world = BlockWorld::new(EnvConfig::default()).unwrap();
    let solved = (0..20)
        .filter(|&s| world.fractional_success(&ScriptedPilot::default().run(&world, s).unwrap()).frac_top >= 0.9)
        .count();
    assert!(solved >= 19, "{solved}/20");
}

#[test]
fn invalid_inputs_are_rejected() {
    let world = BlockWorld::new(EnvConfig::default()).unwrap();
    let s = world.reset(0).unwrap();
    let nan = ActionCommand { delta: Vec3::new(f64::NAN, 0.0, 0.0), grip: 0.0 };
    assert!(matches!(world.step(&s, &nan), Err(EnvError::InvalidAction(_))));
    let bad = EnvConfig { grasp_radius: 0.1, ..EnvConfig::default() };
    assert!(BlockWorld::new(bad).is_err());
    let json = r#"{"max_steps": 50, "dimensionality": "2d", "bogus": 1}"#;
    assert!(serde_json::from_str::<EnvConfig>(json).is_err());
    let cfg: EnvConfig = serde_json::from_str(r#"{"max_steps": 50, "dimensionality": "2d"}"#).unwrap();
    assert_eq!(cfg.dimensionality, Dimensionality::Planar);
}
