//! Binary reward-presence vectors and cosine similarity between tasks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reward::{reward_to_vector, ComponentKind, CompoundReward};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("cosine similarity is undefined for an all-zero reward vector")]
    ZeroVector,
    #[error("reward vector flags must be 0 or 1, got {0:?}")]
    NonBinary([u8; 8]),
    #[error("duplicate task name '{0}'")]
    DuplicateName(String),
    #[error("no tasks given")]
    Empty,
    #[error("malformed similarity csv: {0}")]
    Parse(String),
}

/// Presence flags over [`ComponentKind::ALL`], in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RewardVector([u8; 8]);

impl RewardVector {
    pub fn new(flags: [u8; 8]) -> Result<Self, SimilarityError> {
        if flags.iter().any(|&f| f > 1) {
            return Err(SimilarityError::NonBinary(flags));
        }
        Ok(Self(flags))
    }

    pub fn flags(&self) -> [u8; 8] {
        self.0
    }

    pub fn has(&self, kind: ComponentKind) -> bool {
        self.0[kind.index()] == 1
    }

    pub fn count(&self) -> u32 {
        self.0.iter().map(|&f| f as u32).sum()
    }

    pub fn dot(&self, other: &RewardVector) -> u32 {
        self.0.iter().zip(other.0.iter()).map(|(&a, &b)| (a * b) as u32).sum()
    }
}

/// `(a·b) / (‖a‖‖b‖)` over the binary flags.
pub fn cosine_similarity(a: &RewardVector, b: &RewardVector) -> Result<f64, SimilarityError> {
    let (na, nb) = (a.count(), b.count());
    if na == 0 || nb == 0 {
        return Err(SimilarityError::ZeroVector);
    }
    // binary flags: ‖v‖² is the number of set flags
    let sim = a.dot(b) as f64 / ((na as f64).sqrt() * (nb as f64).sqrt());
    Ok(sim.min(1.0))
}

pub fn task_similarity(a: &CompoundReward, b: &CompoundReward) -> Result<f64, SimilarityError> {
    cosine_similarity(&reward_to_vector(a), &reward_to_vector(b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    pub task_names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.task_names.iter().position(|n| n == a)?;
        let j = self.task_names.iter().position(|n| n == b)?;
        Some(self.values[i][j])
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.values.len();
        (0..n).all(|i| (0..n).all(|j| self.values[i][j] == self.values[j][i]))
    }

    /// Header row `task,<names...>`, then one row per task. Values are
    /// written at full precision so the matrix parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task");
        for n in &self.task_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (name, row) in self.task_names.iter().zip(&self.values) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, SimilarityError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| SimilarityError::Parse("empty input".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("task") {
            return Err(SimilarityError::Parse("header must start with 'task'".into()));
        }
        let task_names: Vec<String> = cols.map(str::to_owned).collect();
        let mut values = Vec::with_capacity(task_names.len());
        for (i, line) in lines.enumerate() {
            let mut cells = line.split(',');
            let name = cells.next().unwrap_or_default();
            if task_names.get(i).map(String::as_str) != Some(name) {
                return Err(SimilarityError::Parse(format!("row {i} is '{name}'")));
            }
            let row = cells
                .map(|c| c.parse::<f64>().map_err(|e| SimilarityError::Parse(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != task_names.len() {
                return Err(SimilarityError::Parse(format!("row '{name}' has {} cells", row.len())));
            }
            values.push(row);
        }
        if values.len() != task_names.len() {
            return Err(SimilarityError::Parse("matrix is not square".into()));
        }
        Ok(Self { task_names, values })
    }
}

pub fn similarity_matrix(
    tasks: &[(String, CompoundReward)],
) -> Result<SimilarityMatrix, SimilarityError> {
    if tasks.is_empty() {
        return Err(SimilarityError::Empty);
    }
    for (i, (name, _)) in tasks.iter().enumerate() {
        if tasks[..i].iter().any(|(n, _)| n == name) {
            return Err(SimilarityError::DuplicateName(name.clone()));
        }
    }
    let vectors: Vec<RewardVector> = tasks.iter().map(|(_, r)| reward_to_vector(r)).collect();
    let n = tasks.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let s = cosine_similarity(&vectors[i], &vectors[j])?;
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    Ok(SimilarityMatrix { task_names: tasks.iter().map(|(n, _)| n.clone()).collect(), values })
}
