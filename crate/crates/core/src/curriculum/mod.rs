//! Staged training with parameter transfer between related tasks.
//!
//! [`generate_subtasks`] orders candidate sub-tasks by reward similarity to
//! the target, [`select_schedule`] turns that chain into budgets and learner
//! settings, and [`kcac_run`] trains through the stages, copying network
//! parameters into a fresh learner at every stage boundary.

mod params;
mod runner;
mod schedule;

pub use params::{preset_params, LearnerParams, PresetTable, TargetEntropy, PRESET_NAMES};
pub use runner::{
    direct_run, episode_seed, kcac_run, kcac_run_with, run_episode, EpisodeOutcome, EpisodeRow,
    EvalRow, RunObserver, RunOptions, RunRecord, TransferEvent,
};
pub use schedule::{generate_subtasks, select_schedule, ScheduleRules, DEFAULT_SIMILARITY_FLOOR};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvConfig, EnvError, SuccessReport};
use crate::reward::{builtin_reward, CompoundReward, ProximityConfig, RewardError};
use crate::sac::SacError;
use crate::similarity::SimilarityError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurriculumError {
    #[error("invalid learner parameters: {0}")]
    InvalidParams(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("parameter transfer failed: {0}")]
    Transfer(String),
    #[error("output error: {0}")]
    Output(String),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learner(#[from] SacError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessMetric {
    #[default]
    FracTop,
    FracOverall,
}

impl SuccessMetric {
    pub fn of(&self, r: &SuccessReport) -> f64 {
        match self {
            Self::FracTop => r.frac_top,
            Self::FracOverall => r.frac_overall,
        }
    }
}

/// A trainable task: a reward over a configured world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub reward: CompoundReward,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub success_metric: SuccessMetric,
}

pub const BUILTIN_TASKS: [&str; 4] = ["grasp", "pick", "stack", "baseline_stack"];

/// Built-in task by name; `stack` uses the refined (ungated) stacking reward.
pub fn builtin_task(name: &str, env: &EnvConfig) -> Result<TaskSpec, CurriculumError> {
    let reward_name = match name {
        "stack" => "refined_stack",
        "grasp" | "pick" | "baseline_stack" => name,
        other => return Err(CurriculumError::UnknownTask(other.to_string())),
    };
    let reward = builtin_reward(reward_name, ProximityConfig::for_arena(env.arena_half_extent))?;
    Ok(TaskSpec {
        name: name.to_string(),
        reward,
        env: env.clone(),
        success_metric: SuccessMetric::FracTop,
    })
}

/// One stage of a plan; the stage ends at cumulative episode `T_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub task: TaskSpec,
    pub episodes: u64,
    pub params: LearnerParams,
    /// Preset the params were taken from, when they came from one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan")]
pub struct CurriculumPlan {
    stages: Vec<Stage>,
}

#[derive(Deserialize)]
struct RawPlan {
    stages: Vec<Stage>,
}

impl TryFrom<RawPlan> for CurriculumPlan {
    type Error = CurriculumError;
    fn try_from(r: RawPlan) -> Result<Self, Self::Error> {
        Self::new(r.stages)
    }
}

impl CurriculumPlan {
    pub fn new(stages: Vec<Stage>) -> Result<Self, CurriculumError> {
        if stages.is_empty() {
            return Err(CurriculumError::InvalidPlan("a plan needs at least one stage".into()));
        }
        for (i, s) in stages.iter().enumerate() {
            if s.episodes < 1 {
                return Err(CurriculumError::InvalidPlan(format!("stage {i} has no episodes")));
            }
            s.params.validate()?;
            s.task.env.validate()?;
        }
        Ok(Self { stages })
    }

    /// Single-stage plan: plain training on `task`.
    pub fn direct(task: TaskSpec, episodes: u64, params: LearnerParams) -> Result<Self, CurriculumError> {
        Self::new(vec![Stage { task, episodes, params, preset: None }])
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn target(&self) -> &TaskSpec {
        &self.stages.last().expect("non-empty").task
    }

    /// Cumulative episode at which each stage ends (`T_1 … T_N`).
    pub fn boundaries(&self) -> Vec<u64> {
        self.stages
            .iter()
            .scan(0, |acc, s| {
                *acc += s.episodes;
                Some(*acc)
            })
            .collect()
    }

    pub fn total_episodes(&self) -> u64 {
        self.stages.iter().map(|s| s.episodes).sum()
    }

    /// Stage index that owns 1-based cumulative `episode`.
    pub fn stage_of(&self, episode: u64) -> Option<usize> {
        if episode == 0 {
            return None;
        }
        self.boundaries().iter().position(|&t| episode <= t)
    }

    pub fn describe(&self) -> String {
        self.stages
            .iter()
            .map(|s| format!("{}:{}", s.task.name, s.episodes))
            .collect::<Vec<_>>()
            .join(" -> ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(budgets: &[u64]) -> CurriculumPlan {
        let env = EnvConfig::default();
        let stages = budgets
            .iter()
            .map(|&episodes| Stage {
                task: builtin_task("stack", &env).unwrap(),
                episodes,
                params: preset_params("lr_1e-4").unwrap(),
                preset: Some("lr_1e-4".into()),
            })
            .collect();
        CurriculumPlan::new(stages).unwrap()
    }

    #[test]
    fn boundaries_and_ownership() {
        let p = plan(&[60, 900, 1000]);
        assert_eq!(p.boundaries(), vec![60, 960, 1960]);
        assert_eq!(p.total_episodes(), 1960);
        assert_eq!(p.stage_of(0), None);
        assert_eq!(p.stage_of(60), Some(0));
        assert_eq!(p.stage_of(61), Some(1));
        assert_eq!(p.stage_of(1960), Some(2));
        assert_eq!(p.stage_of(1961), None);
        assert_eq!(p.describe(), "stack:60 -> stack:900 -> stack:1000");
    }

    #[test]
    fn invalid_plans() {
        assert!(CurriculumPlan::new(vec![]).is_err());
        let mut s = plan(&[5]).stages()[0].clone();
        s.episodes = 0;
        assert!(CurriculumPlan::new(vec![s]).is_err());
    }

    #[test]
    fn builtin_tasks_resolve() {
        let env = EnvConfig::default();
        for name in BUILTIN_TASKS {
            assert_eq!(builtin_task(name, &env).unwrap().name, name);
        }
        assert_eq!(builtin_task("stack", &env).unwrap().reward.name(), "refined_stack");
        assert!(matches!(builtin_task("push", &env), Err(CurriculumError::UnknownTask(_))));
    }

    #[test]
    fn plan_json_round_trip() {
        let p = plan(&[3, 4]);
        let json = serde_json::to_string(&p).unwrap();
        let back: CurriculumPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<CurriculumPlan>(r#"{"stages":[]}"#).is_err());
    }
}
