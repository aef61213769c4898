use serde::{Deserialize, Serialize};

use super::{CurriculumError, CurriculumPlan, PresetTable, Stage, TaskSpec};
use crate::similarity::task_similarity;

pub const DEFAULT_SIMILARITY_FLOOR: f64 = 0.3;

/// Registry tasks more similar to `target` than `floor`, least similar first,
/// followed by the target itself. Ties keep registry order; registry entries
/// named like the target are skipped.
pub fn generate_subtasks(
    target: &TaskSpec,
    registry: &[TaskSpec],
    floor: f64,
) -> Result<Vec<TaskSpec>, CurriculumError> {
    if target.reward.components().is_empty() {
        return Err(CurriculumError::InvalidPlan(format!("target '{}' has no reward", target.name)));
    }
    let mut scored = Vec::new();
    for t in registry.iter().filter(|t| t.name != target.name) {
        let s = task_similarity(&t.reward, &target.reward)?;
        if s > floor {
            scored.push((s, t));
        }
    }
    // stable sort keeps registry order among equal similarities
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut chain: Vec<TaskSpec> = scored.into_iter().map(|(_, t)| t.clone()).collect();
    chain.push(target.clone());
    Ok(chain)
}

fn d_low() -> f64 {
    0.45
}
fn d_high() -> f64 {
    0.65
}
fn d_low_budget() -> u64 {
    60
}
fn d_mid_budget() -> u64 {
    300
}
fn d_high_budget() -> u64 {
    900
}
fn d_high_first_budget() -> u64 {
    1800
}
fn d_final_budget() -> u64 {
    1000
}
fn d_fast() -> String {
    "lr_1e-4".into()
}
fn d_slow() -> String {
    "lr_1e-5".into()
}

/// Similarity bands used by [`select_schedule`].
///
/// A consecutive pair with similarity `σ` sets the earlier stage's budget
/// and, when the later stage is the target, its preset:
/// `σ < low` gives `low_budget` and `fast_preset`, `low ≤ σ < high` gives
/// `mid_budget` and `fast_preset`, and `σ ≥ high` gives `high_budget`
/// (`high_first_budget` for the chain's first stage) and `slow_preset`.
/// Pretraining stages always use `pretrain_preset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRules {
    #[serde(default = "d_low")]
    pub low: f64,
    #[serde(default = "d_high")]
    pub high: f64,
    #[serde(default = "d_low_budget")]
    pub low_budget: u64,
    #[serde(default = "d_mid_budget")]
    pub mid_budget: u64,
    #[serde(default = "d_high_budget")]
    pub high_budget: u64,
    #[serde(default = "d_high_first_budget")]
    pub high_first_budget: u64,
    #[serde(default = "d_final_budget")]
    pub final_budget: u64,
    #[serde(default = "d_fast")]
    pub pretrain_preset: String,
    #[serde(default = "d_fast")]
    pub fast_preset: String,
    #[serde(default = "d_slow")]
    pub slow_preset: String,
}

impl Default for ScheduleRules {
    fn default() -> Self {
        Self {
            low: d_low(),
            high: d_high(),
            low_budget: d_low_budget(),
            mid_budget: d_mid_budget(),
            high_budget: d_high_budget(),
            high_first_budget: d_high_first_budget(),
            final_budget: d_final_budget(),
            pretrain_preset: d_fast(),
            fast_preset: d_fast(),
            slow_preset: d_slow(),
        }
    }
}

impl ScheduleRules {
    /// Budget for the earlier stage of a pair and the preset for the later one.
    pub fn band(&self, similarity: f64, first: bool) -> (u64, &str) {
        if similarity < self.low {
            (self.low_budget, &self.fast_preset)
        } else if similarity < self.high {
            (self.mid_budget, &self.fast_preset)
        } else if first {
            (self.high_first_budget, &self.slow_preset)
        } else {
            (self.high_budget, &self.slow_preset)
        }
    }
}

/// Turns a sub-task chain (target last) into a staged plan.
pub fn select_schedule(
    chain: &[TaskSpec],
    rules: &ScheduleRules,
    presets: &PresetTable,
) -> Result<CurriculumPlan, CurriculumError> {
    if rules.low > rules.high {
        return Err(CurriculumError::InvalidPlan("band thresholds out of order".into()));
    }
    let n = chain.len();
    if n == 0 {
        return Err(CurriculumError::InvalidPlan("empty task chain".into()));
    }
    if chain[..n - 1].iter().any(|t| t.name == chain[n - 1].name) {
        return Err(CurriculumError::InvalidPlan(format!(
            "chain must end with its target '{}' exactly once",
            chain[n - 1].name
        )));
    }
    let mut budgets = vec![rules.final_budget; n];
    let mut final_preset = rules.fast_preset.clone();
    for i in 0..n - 1 {
        let s = task_similarity(&chain[i].reward, &chain[i + 1].reward)?;
        let (budget, preset) = rules.band(s, i == 0);
        budgets[i] = budget;
        if i + 1 == n - 1 {
            final_preset = preset.to_string();
        }
    }
    let mut stages = Vec::with_capacity(n);
    for (i, task) in chain.iter().enumerate() {
        let preset = if i + 1 == n { final_preset.clone() } else { rules.pretrain_preset.clone() };
        stages.push(Stage {
            task: task.clone(),
            episodes: budgets[i],
            params: presets.get(&preset)?,
            preset: Some(preset),
        });
    }
    CurriculumPlan::new(stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::builtin_task;
    use crate::env::EnvConfig;

    fn tasks(names: &[&str]) -> Vec<TaskSpec> {
        names.iter().map(|n| builtin_task(n, &EnvConfig::default()).unwrap()).collect()
    }

    fn names(chain: &[TaskSpec]) -> Vec<&str> {
        chain.iter().map(|t| t.name.as_str()).collect()
    }

    fn budgets_and_final(chain: &[&str]) -> (Vec<u64>, String) {
        let p = select_schedule(&tasks(chain), &ScheduleRules::default(), &PresetTable::default()).unwrap();
        let b = p.stages().iter().map(|s| s.episodes).collect();
        (b, p.stages().last().unwrap().preset.clone().unwrap())
    }

    #[test]
    fn subtask_ordering() {
        let target = &tasks(&["stack"])[0];
        let chain = generate_subtasks(target, &tasks(&["grasp", "pick"]), DEFAULT_SIMILARITY_FLOOR).unwrap();
        assert_eq!(names(&chain), ["grasp", "pick", "stack"]);
        let chain = generate_subtasks(target, &tasks(&["pick", "grasp"]), DEFAULT_SIMILARITY_FLOOR).unwrap();
        assert_eq!(names(&chain), ["grasp", "pick", "stack"]);
        let chain = generate_subtasks(target, &[], DEFAULT_SIMILARITY_FLOOR).unwrap();
        assert_eq!(names(&chain), ["stack"]);
        let chain = generate_subtasks(target, &tasks(&["pick"]), DEFAULT_SIMILARITY_FLOOR).unwrap();
        assert_eq!(names(&chain), ["pick", "stack"]);
        // grasp sits at 0.408, below a 0.45 floor
        let chain = generate_subtasks(target, &tasks(&["grasp", "pick"]), 0.45).unwrap();
        assert_eq!(names(&chain), ["pick", "stack"]);
        let chain = generate_subtasks(target, &tasks(&["stack", "pick"]), DEFAULT_SIMILARITY_FLOOR).unwrap();
        assert_eq!(names(&chain), ["pick", "stack"]);
    }

    #[test]
    fn ties_keep_registry_order() {
        let target = &tasks(&["stack"])[0];
        let mut a = tasks(&["pick"])[0].clone();
        a.name = "pick_a".into();
        let mut b = a.clone();
        b.name = "pick_b".into();
        let chain = generate_subtasks(target, &[b.clone(), a.clone()], 0.3).unwrap();
        assert_eq!(names(&chain), ["pick_b", "pick_a", "stack"]);
    }

    #[test]
    fn published_schedules() {
        assert_eq!(budgets_and_final(&["grasp", "stack"]), (vec![60, 1000], "lr_1e-4".into()));
        assert_eq!(budgets_and_final(&["pick", "stack"]), (vec![1800, 1000], "lr_1e-5".into()));
        assert_eq!(budgets_and_final(&["grasp", "pick", "stack"]), (vec![300, 900, 1000], "lr_1e-5".into()));
        assert_eq!(budgets_and_final(&["stack"]), (vec![1000], "lr_1e-4".into()));
    }

    #[test]
    fn pretraining_uses_pretrain_preset() {
        let p = select_schedule(&tasks(&["grasp", "pick", "stack"]), &ScheduleRules::default(), &PresetTable::default())
            .unwrap();
        assert_eq!(p.stages()[0].preset.as_deref(), Some("lr_1e-4"));
        assert_eq!(p.stages()[1].preset.as_deref(), Some("lr_1e-4"));
        assert_eq!(p.stages()[2].params.learning_rate, 1e-5);
    }

    #[test]
    fn bands_are_monotone() {
        let r = ScheduleRules::default();
        let presets = PresetTable::default();
        let mut last = f64::INFINITY;
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let lr = presets.get(r.band(s, false).1).unwrap().learning_rate;
            assert!(lr <= last);
            last = lr;
        }
    }

    #[test]
    fn rejects_bad_chains() {
        let r = ScheduleRules::default();
        let p = PresetTable::default();
        assert!(select_schedule(&[], &r, &p).is_err());
        assert!(select_schedule(&tasks(&["stack", "grasp", "stack"]), &r, &p).is_err());
    }
}
