use kcac_core::curriculum::{preset_params, LearnerParams, TargetEntropy};
use kcac_core::sac::{grad_check, ActionMode, Learner, ParamBlob, SacConfig, SacError, SacLearner, Transition};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBS: usize = 6;
const ACT: usize = 2;

fn params(tau: f64) -> LearnerParams {
    LearnerParams {
        learning_rate: 1e-3,
        tau,
        entropy_coeff: 0.2,
        batch_size: 16,
        buffer_size: 1000,
        discount: 0.9,
        target_entropy: TargetEntropy::Auto,
    }
}

fn small() -> SacConfig {
    SacConfig { hidden: vec![16, 16], warmup: 0 }
}

fn batch(rng: &mut ChaCha8Rng, n: usize, terminal: bool) -> Vec<Transition> {
    (0..n)
        .map(|_| Transition {
            observation: (0..OBS).map(|_| rng.random_range(-1.0..1.0)).collect(),
            action: (0..ACT).map(|_| rng.random_range(-1.0..1.0)).collect(),
            reward: rng.random_range(-1.0..1.0),
            next_observation: (0..OBS).map(|_| rng.random_range(-1.0..1.0)).collect(),
            terminal,
        })
        .collect()
}

fn tensors(blob: &ParamBlob, prefix: &str) -> Vec<f64> {
    blob.tensors.iter().filter(|t| t.name.starts_with(prefix)).flat_map(|t| t.data.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn actions_stay_in_bounds(seed in any::<u64>(), obs in prop::collection::vec(-1e3..1e3f64, OBS)) {
        let mut l = SacLearner::new(OBS, ACT, params(0.005), small(), seed).unwrap();
        for mode in [ActionMode::Stochastic, ActionMode::Deterministic] {
            let a = l.select_action(&obs, mode).unwrap();
            prop_assert_eq!(a.len(), ACT);
            prop_assert!(a.iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
        }
        let d1 = l.select_action(&obs, ActionMode::Deterministic).unwrap();
        let d2 = l.select_action(&obs, ActionMode::Deterministic).unwrap();
        prop_assert_eq!(d1, d2);
    }

    #[test]
    fn export_import_preserves_everything(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = SacLearner::new(OBS, ACT, params(0.05), small(), seed).unwrap();
        a.update_on(&batch(&mut rng, 16, false)).unwrap();
        let blob = a.export_params();
        let bytes = blob.to_bytes();
        let back = ParamBlob::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &blob);
        let mut b = SacLearner::new(OBS, ACT, params(0.05), small(), seed.wrapping_add(1)).unwrap();
        b.import_params(&back).unwrap();
        prop_assert_eq!(b.export_params().network_hash(), blob.network_hash());
        let probe = vec![0.1; OBS];
        prop_assert_eq!(
            a.select_action(&probe, ActionMode::Deterministic).unwrap(),
            b.select_action(&probe, ActionMode::Deterministic).unwrap()
        );
    }
}

#[test]
fn target_tracking_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = batch(&mut rng, 16, false);
    let mut frozen = SacLearner::new(OBS, ACT, params(0.0), small(), 1).unwrap();
    let before = tensors(&frozen.export_params(), "target");
    for _ in 0..5 {
        frozen.update_on(&data).unwrap();
    }
    let after = frozen.export_params();
    assert_eq!(tensors(&after, "target"), before);
    assert_ne!(tensors(&after, "critic"), before);

    let mut copy = SacLearner::new(OBS, ACT, params(1.0), small(), 1).unwrap();
    for _ in 0..5 {
        copy.update_on(&data).unwrap();
        let b = copy.export_params();
        assert_eq!(tensors(&b, "target"), tensors(&b, "critic"));
    }
}

#[test]
fn soft_update_is_exact_blend() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = batch(&mut rng, 16, false);
    let tau = 0.3;
    let mut l = SacLearner::new(OBS, ACT, params(tau), small(), 2).unwrap();
    let t0 = tensors(&l.export_params(), "target");
    l.update_on(&data).unwrap();
    let b = l.export_params();
    let (c1, t1) = (tensors(&b, "critic"), tensors(&b, "target"));
    for i in 0..t0.len() {
        let expect = (1.0 - tau) * t0[i] + tau * c1[i];
        assert!((t1[i] - expect).abs() <= 1e-15 * (1.0 + expect.abs()));
    }
}

#[test]
fn overfits_a_fixed_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = batch(&mut rng, 32, true);
    let mut l = SacLearner::new(OBS, ACT, params(0.005), SacConfig { hidden: vec![32, 32], warmup: 0 }, 4).unwrap();
    let losses: Vec<f64> = (0..50).map(|_| l.update_on(&data).unwrap().critic_loss).collect();
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn long_training_stays_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut l = SacLearner::new(OBS, ACT, params(0.005), small(), 5).unwrap();
    for t in batch(&mut rng, 200, false) {
        l.observe_transition(t).unwrap();
    }
    for _ in 0..500 {
        assert!(l.update().unwrap().is_finite());
    }
    assert!(l.temperature().is_finite() && l.temperature() > 0.0);
}

#[test]
fn warmup_gates_updates() {
    let mut l = SacLearner::new(OBS, ACT, params(0.005), SacConfig { hidden: vec![8], warmup: 40 }, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for t in batch(&mut rng, 39, false) {
        l.observe_transition(t).unwrap();
    }
    assert_eq!(l.update(), Err(SacError::NotReady { have: 39, need: 40 }));
    l.observe_transition(batch(&mut rng, 1, false).remove(0)).unwrap();
    assert!(l.update().is_ok());
}

#[test]
fn rejects_bad_inputs() {
    let mut l = SacLearner::new(OBS, ACT, preset_params("lr_1e-4").unwrap(), small(), 0).unwrap();
    assert!(matches!(l.select_action(&[0.0; 3], ActionMode::Deterministic), Err(SacError::Shape(_))));
    let nan = vec![f64::NAN; OBS];
    assert!(matches!(l.select_action(&nan, ActionMode::Stochastic), Err(SacError::InvalidObservation(_))));
    let other = SacLearner::new(OBS + 1, ACT, params(0.1), small(), 0).unwrap();
    assert!(l.import_params(&other.export_params()).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    assert!(grad_check(1e-5) <= 1e-4);
}
