use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{CurriculumError, CurriculumPlan, LearnerParams, Stage, TaskSpec};
use crate::env::{ActionCommand, BlockWorld, BlockWorldState, SuccessReport, ACTION_DIM, OBSERVATION_LEN};
use crate::reward::eval_compound;
use crate::sac::{ActionMode, Learner, ParamBlob, SacConfig, SacError, SacLearner, Transition};

fn d_eval_episodes() -> usize {
    5
}
fn d_reward_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default)]
    pub sac: SacConfig,
    /// Fill `wall_ms`; off by default so metric files stay reproducible.
    #[serde(default)]
    pub record_wall_clock: bool,
    /// Deterministic evaluation every this many episodes (0 disables).
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default = "d_eval_episodes")]
    pub eval_episodes: usize,
    /// Multiplier applied to every reward before it reaches the learner.
    #[serde(default = "d_reward_scale")]
    pub reward_scale: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sac: SacConfig::default(),
            record_wall_clock: false,
            eval_every: 0,
            eval_episodes: d_eval_episodes(),
            reward_scale: d_reward_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub stage: usize,
    /// 1-based, cumulative over all stages.
    pub episode: u64,
    pub episodic_reward: f64,
    pub success: SuccessReport,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub stage: usize,
    pub episode: u64,
    pub mean_reward: f64,
    pub success: SuccessReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    /// Cumulative episode after which the transfer happened (`T_i`).
    pub episode: u64,
    pub from_stage: usize,
    pub to_stage: usize,
    pub exported_hash: String,
    pub imported_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub plan: String,
    pub seed: u64,
    pub rows: Vec<EpisodeRow>,
    pub evals: Vec<EvalRow>,
    pub transfers: Vec<TransferEvent>,
}

/// Hooks for streaming a run's artifacts as they are produced.
pub trait RunObserver {
    fn on_episode(&mut self, _row: &EpisodeRow) -> Result<(), CurriculumError> {
        Ok(())
    }
    fn on_eval(&mut self, _row: &EvalRow) -> Result<(), CurriculumError> {
        Ok(())
    }
    fn on_transfer(&mut self, _event: &TransferEvent) -> Result<(), CurriculumError> {
        Ok(())
    }
    /// Called with the learner's parameters at the end of every stage.
    fn on_stage_end(&mut self, _stage: usize, _episode: u64, _params: &ParamBlob) -> Result<(), CurriculumError> {
        Ok(())
    }
    /// Only called when [`RunObserver::wants_steps`] is true.
    fn on_step(&mut self, _episode: u64, _state: &BlockWorldState) -> Result<(), CurriculumError> {
        Ok(())
    }
    fn wants_steps(&self) -> bool {
        false
    }
}

impl RunObserver for () {}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Environment reset seed for cumulative `episode` of a run.
pub fn episode_seed(run_seed: u64, episode: u64) -> u64 {
    splitmix64(splitmix64(run_seed) ^ episode)
}

fn stage_seed(run_seed: u64, stage: usize) -> u64 {
    if stage == 0 {
        run_seed
    } else {
        splitmix64(run_seed ^ (stage as u64).rotate_left(32))
    }
}

const EVAL_SALT: u64 = 0x00E7_A100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub reward: f64,
    pub success: SuccessReport,
    pub steps: u64,
    pub updates: u64,
}

/// Plays one episode to the horizon. With `learn` set, every transition is
/// stored and followed by one update attempt.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<L: Learner>(
    env: &BlockWorld,
    task: &TaskSpec,
    learner: &mut L,
    env_seed: u64,
    mode: ActionMode,
    learn: bool,
    reward_scale: f64,
    mut on_step: Option<&mut dyn FnMut(&BlockWorldState) -> Result<(), CurriculumError>>,
) -> Result<EpisodeOutcome, CurriculumError> {
    let cfg = env.config();
    let mut state = env.reset(env_seed)?;
    let mut obs = env.observe(&state).normalized(cfg);
    let (mut reward, mut steps, mut updates) = (0.0, 0, 0);
    if let Some(f) = on_step.as_mut() {
        f(&state)?;
    }
    while !env.is_terminal(&state) {
        let action = learner.select_action(&obs, mode)?;
        let cmd = ActionCommand::from_normalized(&action, cfg.action_max_delta);
        let (next, ctx) = env.step(&state, &cmd)?;
        let r = eval_compound(&task.reward, &ctx)?.total * reward_scale;
        let next_obs = env.observe(&next).normalized(cfg);
        if learn {
            // the horizon is a time limit, so the last transition still bootstraps
            learner.observe_transition(Transition {
                observation: obs,
                action,
                reward: r,
                next_observation: next_obs.clone(),
                terminal: false,
            })?;
            match learner.update() {
                Ok(_) => updates += 1,
                Err(SacError::NotReady { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
        reward += r;
        steps += 1;
        state = next;
        obs = next_obs;
        if let Some(f) = on_step.as_mut() {
            f(&state)?;
        }
    }
    Ok(EpisodeOutcome { reward, success: env.fractional_success(&state), steps, updates })
}

fn mean_success(reports: &[SuccessReport]) -> SuccessReport {
    let n = reports.len().max(1) as f64;
    SuccessReport {
        frac_top: reports.iter().map(|r| r.frac_top).sum::<f64>() / n,
        frac_bottom: reports.iter().map(|r| r.frac_bottom).sum::<f64>() / n,
        frac_overall: reports.iter().map(|r| r.frac_overall).sum::<f64>() / n,
    }
}

/// Trains through every stage of `plan` with default environments and
/// [`SacLearner`]s.
pub fn kcac_run(
    plan: &CurriculumPlan,
    seed: u64,
    opts: &RunOptions,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord, CurriculumError> {
    let sac = opts.sac.clone();
    kcac_run_with(
        plan,
        seed,
        opts,
        |task: &TaskSpec| Ok(BlockWorld::new(task.env.clone())?),
        move |stage: &Stage, s: u64| {
            Ok(SacLearner::new(OBSERVATION_LEN, ACTION_DIM, stage.params, sac.clone(), s)?)
        },
        observer,
    )
}

/// Staged training loop with pluggable environment and learner factories.
///
/// At each stage boundary the current learner's parameters are exported and
/// imported into a fresh learner built for the next stage (empty replay,
/// temperature from the new stage's params).
pub fn kcac_run_with<L, EF, LF>(
    plan: &CurriculumPlan,
    seed: u64,
    opts: &RunOptions,
    mut env_factory: EF,
    mut learner_factory: LF,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord, CurriculumError>
where
    L: Learner,
    EF: FnMut(&TaskSpec) -> Result<BlockWorld, CurriculumError>,
    LF: FnMut(&Stage, u64) -> Result<L, CurriculumError>,
{
    let mut record = RunRecord {
        plan: plan.describe(),
        seed,
        rows: Vec::with_capacity(plan.total_episodes() as usize),
        evals: Vec::new(),
        transfers: Vec::new(),
    };
    let mut learner = learner_factory(&plan.stages()[0], stage_seed(seed, 0))?;
    let mut episode = 0u64;
    for (i, stage) in plan.stages().iter().enumerate() {
        let env = env_factory(&stage.task)?;
        if i > 0 {
            let blob = learner.export_params();
            let mut next = learner_factory(stage, stage_seed(seed, i))?;
            next.import_params(&blob)?;
            next.reset_temperature();
            let probe = env.observe(&env.reset(episode_seed(seed, episode + 1))?).normalized(env.config());
            let before = learner.select_action(&probe, ActionMode::Deterministic)?;
            let after = next.select_action(&probe, ActionMode::Deterministic)?;
            let event = TransferEvent {
                episode,
                from_stage: i - 1,
                to_stage: i,
                exported_hash: blob.network_hash(),
                imported_hash: next.export_params().network_hash(),
            };
            if event.exported_hash != event.imported_hash || before != after {
                return Err(CurriculumError::Transfer(format!(
                    "stage {} -> {i}: parameters changed in transit",
                    i - 1
                )));
            }
            observer.on_transfer(&event)?;
            record.transfers.push(event);
            learner = next;
        }
        for _ in 0..stage.episodes {
            episode += 1;
            let started = Instant::now();
            let out = if observer.wants_steps() {
                let ep = episode;
                let mut hook = |s: &BlockWorldState| observer.on_step(ep, s);
                run_episode(
                    &env,
                    &stage.task,
                    &mut learner,
                    episode_seed(seed, episode),
                    ActionMode::Stochastic,
                    true,
                    opts.reward_scale,
                    Some(&mut hook),
                )?
            } else {
                run_episode(
                    &env,
                    &stage.task,
                    &mut learner,
                    episode_seed(seed, episode),
                    ActionMode::Stochastic,
                    true,
                    opts.reward_scale,
                    None,
                )?
            };
            let wall_ms = if opts.record_wall_clock { started.elapsed().as_millis() as u64 } else { 0 };
            let row = EpisodeRow { stage: i, episode, episodic_reward: out.reward, success: out.success, wall_ms };
            observer.on_episode(&row)?;
            record.rows.push(row);
            if opts.eval_every > 0 && episode.is_multiple_of(opts.eval_every) {
                let mut rewards = 0.0;
                let mut reports = Vec::with_capacity(opts.eval_episodes);
                for k in 0..opts.eval_episodes {
                    let s = episode_seed(seed ^ EVAL_SALT, k as u64);
                    let o = run_episode(
                        &env,
                        &stage.task,
                        &mut learner,
                        s,
                        ActionMode::Deterministic,
                        false,
                        opts.reward_scale,
                        None,
                    )?;
                    rewards += o.reward;
                    reports.push(o.success);
                }
                let row = EvalRow {
                    stage: i,
                    episode,
                    mean_reward: rewards / opts.eval_episodes.max(1) as f64,
                    success: mean_success(&reports),
                };
                observer.on_eval(&row)?;
                record.evals.push(row);
            }
        }
        observer.on_stage_end(i, episode, &learner.export_params())?;
    }
    Ok(record)
}

/// Plain training on one task, written independently of the staged loop so
/// the two can be checked against each other.
pub fn direct_run(
    task: &TaskSpec,
    episodes: u64,
    params: LearnerParams,
    opts: &RunOptions,
    seed: u64,
) -> Result<RunRecord, CurriculumError> {
    let env = BlockWorld::new(task.env.clone())?;
    let mut learner = SacLearner::new(OBSERVATION_LEN, ACTION_DIM, params, opts.sac.clone(), seed)?;
    let mut rows = Vec::new();
    for episode in 1..=episodes {
        let out = run_episode(
            &env,
            task,
            &mut learner,
            episode_seed(seed, episode),
            ActionMode::Stochastic,
            true,
            opts.reward_scale,
            None,
        )?;
        rows.push(EpisodeRow { stage: 0, episode, episodic_reward: out.reward, success: out.success, wall_ms: 0 });
    }
    Ok(RunRecord {
        plan: format!("{}:{episodes}", task.name),
        seed,
        rows,
        evals: Vec::new(),
        transfers: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::{builtin_task, TargetEntropy};
    use crate::env::EnvConfig;

    fn env() -> EnvConfig {
        EnvConfig { max_steps: 10, ..EnvConfig::default() }
    }

    fn params() -> LearnerParams {
        LearnerParams {
            learning_rate: 1e-3,
            tau: 0.01,
            entropy_coeff: 0.1,
            batch_size: 8,
            buffer_size: 1000,
            discount: 0.95,
            target_entropy: TargetEntropy::Auto,
        }
    }

    fn opts() -> RunOptions {
        RunOptions { sac: SacConfig { hidden: vec![8], warmup: 16 }, ..RunOptions::default() }
    }

    fn stage(name: &str, episodes: u64) -> Stage {
        Stage { task: builtin_task(name, &env()).unwrap(), episodes, params: params(), preset: None }
    }

    #[derive(Default)]
    struct Counter {
        episodes: u64,
        transfers: Vec<u64>,
        stage_ends: Vec<(usize, u64)>,
        steps: usize,
    }

    impl RunObserver for Counter {
        fn on_episode(&mut self, _: &EpisodeRow) -> Result<(), CurriculumError> {
            self.episodes += 1;
            Ok(())
        }
        fn on_transfer(&mut self, e: &TransferEvent) -> Result<(), CurriculumError> {
            self.transfers.push(e.episode);
            Ok(())
        }
        fn on_stage_end(&mut self, s: usize, ep: u64, _: &ParamBlob) -> Result<(), CurriculumError> {
            self.stage_ends.push((s, ep));
            Ok(())
        }
        fn on_step(&mut self, _: u64, _: &BlockWorldState) -> Result<(), CurriculumError> {
            self.steps += 1;
            Ok(())
        }
        fn wants_steps(&self) -> bool {
            true
        }
    }

    #[test]
    fn transfers_at_boundaries() {
        let plan = CurriculumPlan::new(vec![stage("grasp", 3), stage("pick", 2), stage("stack", 4)]).unwrap();
        let mut c = Counter::default();
        let rec = kcac_run(&plan, 1, &opts(), &mut c).unwrap();
        assert_eq!(rec.rows.len(), 9);
        assert_eq!(c.episodes, 9);
        assert_eq!(c.transfers, vec![3, 5]);
        assert_eq!(c.stage_ends, vec![(0, 3), (1, 5), (2, 9)]);
        assert_eq!(c.steps, 9 * 11);
        assert!(rec.rows.windows(2).all(|w| w[1].episode == w[0].episode + 1));
        for t in &rec.transfers {
            assert_eq!(t.exported_hash, t.imported_hash);
        }
        let stages: Vec<usize> = rec.rows.iter().map(|r| r.stage).collect();
        assert_eq!(stages, [0, 0, 0, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn single_stage_matches_direct() {
        let plan = CurriculumPlan::direct(builtin_task("stack", &env()).unwrap(), 6, params()).unwrap();
        let a = kcac_run(&plan, 4, &opts(), &mut ()).unwrap();
        let b = direct_run(plan.target(), 6, params(), &opts(), 4).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(a.transfers.is_empty());
    }

    #[test]
    fn runs_are_reproducible() {
        let plan = CurriculumPlan::new(vec![stage("grasp", 2), stage("stack", 3)]).unwrap();
        let a = kcac_run(&plan, 9, &opts(), &mut ()).unwrap();
        assert_eq!(a, kcac_run(&plan, 9, &opts(), &mut ()).unwrap());
        assert_ne!(a.rows, kcac_run(&plan, 10, &opts(), &mut ()).unwrap().rows);
    }

    #[test]
    fn evaluation_rows() {
        let plan = CurriculumPlan::direct(builtin_task("stack", &env()).unwrap(), 4, params()).unwrap();
        let o = RunOptions { eval_every: 2, eval_episodes: 3, ..opts() };
        let rec = kcac_run(&plan, 0, &o, &mut ()).unwrap();
        assert_eq!(rec.evals.iter().map(|e| e.episode).collect::<Vec<_>>(), [2, 4]);
        // evaluation never touches the training stream
        assert_eq!(rec.rows, kcac_run(&plan, 0, &opts(), &mut ()).unwrap().rows);
    }

    #[test]
    fn episode_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (1..=1000).map(|e| episode_seed(3, e)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(episode_seed(3, 1), episode_seed(4, 1));
    }
}
