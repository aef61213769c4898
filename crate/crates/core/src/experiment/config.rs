use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::curriculum::{
    builtin_task, generate_subtasks, select_schedule, CurriculumPlan, LearnerParams, PresetTable,
    RunOptions, ScheduleRules, Stage, SuccessMetric, TaskSpec, DEFAULT_SIMILARITY_FLOOR,
};
use crate::env::EnvConfig;
use crate::reward::CompoundReward;
use crate::sac::SacConfig;

/// Environment variable that replaces `output_dir`.
pub const OUTPUT_ENV_VAR: &str = "KCAC_OUT";

fn d_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn d_threshold() -> f64 {
    0.8
}
fn d_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn d_eval_episodes() -> usize {
    5
}
fn d_reward_scale() -> f64 {
    1.0
}
fn d_preset() -> String {
    "lr_1e-4".into()
}
fn d_floor() -> f64 {
    DEFAULT_SIMILARITY_FLOOR
}

/// A registry entry: a built-in task name or a full custom definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskEntry {
    Builtin(String),
    Custom(CustomTask),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomTask {
    pub name: String,
    pub reward: CompoundReward,
    /// Defaults to the experiment's environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env: Option<EnvConfig>,
    #[serde(default)]
    pub success_metric: SuccessMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub task: String,
    /// Required for all but the last stage, which defaults to `episodes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<u64>,
    #[serde(default = "d_preset")]
    pub preset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanConfig {
    Direct {
        task: String,
        #[serde(default = "d_preset")]
        preset: String,
    },
    Explicit {
        stages: Vec<StageConfig>,
    },
    Auto {
        registry: Vec<String>,
        target: String,
        #[serde(default = "d_floor")]
        similarity_floor: f64,
    },
}

impl PlanConfig {
    pub fn target(&self) -> &str {
        match self {
            Self::Direct { task, .. } => task,
            Self::Explicit { stages } => stages.last().map(|s| s.task.as_str()).unwrap_or(""),
            Self::Auto { target, .. } => target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub env: EnvConfig,
    /// Extra tasks; built-ins (`grasp`, `pick`, `stack`, `baseline_stack`)
    /// are always addressable by name.
    #[serde(default)]
    pub tasks: Vec<TaskEntry>,
    pub plan: PlanConfig,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    /// Budget of the final (target) stage.
    pub episodes: u64,
    #[serde(default)]
    pub eval_every: u64,
    #[serde(default = "d_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "d_threshold")]
    pub success_threshold: f64,
    #[serde(default = "d_output_dir")]
    pub output_dir: PathBuf,
    /// Replaces or adds named learner presets.
    #[serde(default)]
    pub presets: BTreeMap<String, LearnerParams>,
    #[serde(default)]
    pub schedule: ScheduleRules,
    #[serde(default)]
    pub learner: SacConfig,
    #[serde(default = "d_reward_scale")]
    pub reward_scale: f64,
    #[serde(default)]
    pub record_wall_clock: bool,
    /// Write every step's world snapshot to `trajectory.jsonl`.
    #[serde(default)]
    pub dump_trajectories: bool,
}

impl ExperimentConfig {
    /// Parses JSON, reporting errors with the offending field path.
    pub fn from_json_str(text: &str) -> Result<Self, ExperimentError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ExperimentError::Config { path, message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the `KCAC_OUT` override.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_json_str(&text)?;
        cfg.apply_output_override(std::env::var(OUTPUT_ENV_VAR).ok());
        Ok(cfg)
    }

    pub fn apply_output_override(&mut self, value: Option<String>) {
        if let Some(v) = value.filter(|v| !v.is_empty()) {
            self.output_dir = PathBuf::from(v);
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |path: &str, message: String| Err(ExperimentError::Config { path: path.into(), message });
        let safe = |c: char| c.is_ascii_alphanumeric() || "-_.".contains(c);
        if self.name.is_empty() || !self.name.chars().all(safe) {
            return bad("name", "use only letters, digits, '-', '_' and '.'".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required".into());
        }
        if self.episodes < 1 {
            return bad("episodes", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.success_threshold) {
            return bad("success_threshold", format!("must lie in [0, 1], got {}", self.success_threshold));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad("reward_scale", "must be positive".into());
        }
        if let Err(e) = self.env.validate() {
            return bad("env", e.to_string());
        }
        for (name, p) in &self.presets {
            if let Err(e) = p.validate() {
                return bad(&format!("presets.{name}"), e.to_string());
            }
        }
        let mut seen = Vec::new();
        for (i, t) in self.tasks.iter().enumerate() {
            let name = match t {
                TaskEntry::Builtin(n) => n,
                TaskEntry::Custom(c) => &c.name,
            };
            if seen.contains(&name) {
                return bad(&format!("tasks[{i}]"), format!("duplicate task name '{name}'"));
            }
            seen.push(name);
        }
        if let PlanConfig::Explicit { stages } = &self.plan {
            if stages.is_empty() {
                return bad("plan.explicit.stages", "at least one stage is required".into());
            }
            for (i, s) in stages[..stages.len() - 1].iter().enumerate() {
                if s.episodes.unwrap_or(0) < 1 {
                    return bad(&format!("plan.explicit.stages[{i}].episodes"), "must be at least 1".into());
                }
            }
        }
        Ok(())
    }

    pub fn preset_table(&self) -> Result<PresetTable, ExperimentError> {
        Ok(PresetTable::with_overrides(&self.presets)?)
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            sac: self.learner.clone(),
            record_wall_clock: self.record_wall_clock,
            eval_every: self.eval_every,
            eval_episodes: self.eval_episodes,
            reward_scale: self.reward_scale,
        }
    }

    /// Looks a task up among the configured entries, then the built-ins.
    pub fn resolve_task(&self, name: &str) -> Result<TaskSpec, ExperimentError> {
        for t in &self.tasks {
            match t {
                TaskEntry::Custom(c) if c.name == name => {
                    return Ok(TaskSpec {
                        name: c.name.clone(),
                        reward: c.reward.clone(),
                        env: c.env.clone().unwrap_or_else(|| self.env.clone()),
                        success_metric: c.success_metric,
                    })
                }
                _ => {}
            }
        }
        Ok(builtin_task(name, &self.env)?)
    }

    /// Task registry for similarity reports: configured tasks (or `grasp` and
    /// `pick` when none are configured) followed by the plan's target.
    pub fn registry(&self) -> Result<Vec<TaskSpec>, ExperimentError> {
        let mut names: Vec<String> = self
            .tasks
            .iter()
            .map(|t| match t {
                TaskEntry::Builtin(n) => n.clone(),
                TaskEntry::Custom(c) => c.name.clone(),
            })
            .collect();
        if names.is_empty() {
            names = vec!["grasp".into(), "pick".into()];
        }
        let target = self.plan.target().to_string();
        if !names.contains(&target) {
            names.push(target);
        }
        names.iter().map(|n| self.resolve_task(n)).collect()
    }

    pub fn build_plan(&self) -> Result<CurriculumPlan, ExperimentError> {
        let presets = self.preset_table()?;
        let stage = |task: &str, episodes: u64, preset: &str| -> Result<Stage, ExperimentError> {
            Ok(Stage {
                task: self.resolve_task(task)?,
                episodes,
                params: presets.get(preset)?,
                preset: Some(preset.to_string()),
            })
        };
        let plan = match &self.plan {
            PlanConfig::Direct { task, preset } => CurriculumPlan::new(vec![stage(task, self.episodes, preset)?])?,
            PlanConfig::Explicit { stages } => {
                let last = stages.len() - 1;
                let built = stages
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let n = if i == last { s.episodes.unwrap_or(self.episodes) } else { s.episodes.unwrap_or(0) };
                        stage(&s.task, n, &s.preset)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                CurriculumPlan::new(built)?
            }
            PlanConfig::Auto { registry, target, similarity_floor } => {
                let target = self.resolve_task(target)?;
                let registry = registry.iter().map(|n| self.resolve_task(n)).collect::<Result<Vec<_>, _>>()?;
                let chain = generate_subtasks(&target, &registry, *similarity_floor)?;
                let rules = ScheduleRules { final_budget: self.episodes, ..self.schedule.clone() };
                select_schedule(&chain, &rules, &presets)?
            }
        };
        Ok(plan)
    }
}
