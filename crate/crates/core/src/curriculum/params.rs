use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::CurriculumError;

/// How the entropy target for temperature tuning is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetEntropy {
    /// `-act_dim`, with the temperature learned.
    #[default]
    Auto,
    /// Temperature held at `entropy_coeff`; the value only enters the reported loss.
    Fixed(f64),
}

/// Optimiser and replay settings for one learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerParams {
    pub learning_rate: f64,
    pub tau: f64,
    pub entropy_coeff: f64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub discount: f64,
    #[serde(default)]
    pub target_entropy: TargetEntropy,
}

impl LearnerParams {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let bad = |m: String| Err(CurriculumError::InvalidParams(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.entropy_coeff.is_finite() && self.entropy_coeff > 0.0) {
            return bad(format!("entropy_coeff must be positive, got {}", self.entropy_coeff));
        }
        // tau = 0 (frozen targets) is allowed for testing the update limits
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount must lie in (0, 1), got {}", self.discount));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_size {
            return bad(format!(
                "need 0 < batch_size <= buffer_size, got {} / {}",
                self.batch_size, self.buffer_size
            ));
        }
        if let TargetEntropy::Fixed(h) = self.target_entropy {
            if !h.is_finite() {
                return bad("fixed target entropy must be finite".into());
            }
        }
        Ok(())
    }
}

pub const PRESET_NAMES: [&str; 3] = ["lr_1e-4", "lr_5e-5", "lr_1e-5"];

/// The three published learning-parameter sets.
pub fn preset_params(name: &str) -> Result<LearnerParams, CurriculumError> {
    let row = |learning_rate, tau, entropy_coeff, batch_size| LearnerParams {
        learning_rate,
        tau,
        entropy_coeff,
        batch_size,
        buffer_size: 1_000_000,
        discount: 0.95,
        target_entropy: TargetEntropy::Auto,
    };
    match name {
        "lr_1e-4" => Ok(row(1e-4, 1e-3, 1e-3, 256 * 4)),
        "lr_5e-5" => Ok(row(5e-5, 1e-4, 1e-4, 256)),
        "lr_1e-5" => Ok(row(1e-5, 1e-4, 1e-4, 256)),
        other => Err(CurriculumError::UnknownPreset(other.to_string())),
    }
}

/// Named parameter sets, seeded with the published presets and overridable
/// per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PresetTable(BTreeMap<String, LearnerParams>);

impl Default for PresetTable {
    fn default() -> Self {
        let map = PRESET_NAMES
            .iter()
            .map(|&n| (n.to_string(), preset_params(n).expect("known preset")))
            .collect();
        Self(map)
    }
}

impl PresetTable {
    pub fn get(&self, name: &str) -> Result<LearnerParams, CurriculumError> {
        self.0.get(name).copied().ok_or_else(|| CurriculumError::UnknownPreset(name.to_string()))
    }

    pub fn insert(&mut self, name: impl Into<String>, params: LearnerParams) {
        self.0.insert(name.into(), params);
    }

    /// Default table with the given entries replaced or added.
    pub fn with_overrides(overrides: &BTreeMap<String, LearnerParams>) -> Result<Self, CurriculumError> {
        let mut t = Self::default();
        for (name, p) in overrides {
            p.validate()?;
            t.insert(name.clone(), *p);
        }
        Ok(t)
    }

    /// Name of a preset whose values equal `p`, if any.
    pub fn name_of(&self, p: &LearnerParams) -> Option<&str> {
        self.0.iter().find(|(_, v)| *v == p).map(|(k, _)| k.as_str())
    }
}
