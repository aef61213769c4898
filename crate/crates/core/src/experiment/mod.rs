//! Config-driven experiments: seeded runs, persisted metrics and
//! checkpoints, and run-to-run comparison.
//!
//! Output layout under `{output_dir}/{name}/`:
//!
//! ```text
//! manifest.json                      config hash, seeds, stages, completion flag
//! metrics.csv                        one row per episode, all seeds
//! {run_id}/metrics.jsonl             episode and transfer events
//! {run_id}/eval.csv                  deterministic evaluations (eval_every > 0)
//! {run_id}/stage{i}_ep{t}.params     parameters at the end of each stage
//! {run_id}/trajectory.jsonl          per-step snapshots (dump_trajectories)
//! ```

mod compare;
mod config;

pub use compare::{
    compare_records, compare_runs, read_metrics, CompareOptions, ComparisonReport, RunSummary,
};
pub use config::{
    CustomTask, ExperimentConfig, PlanConfig, StageConfig, TaskEntry, OUTPUT_ENV_VAR,
};

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::curriculum::{
    kcac_run, CurriculumError, EpisodeRow, EvalRow, LearnerParams, RunObserver, RunRecord,
    SuccessMetric, TransferEvent,
};
use crate::env::{BlockWorldState, EnvConfig};
use crate::sac::ParamBlob;
use crate::similarity::{similarity_matrix, SimilarityError, SimilarityMatrix};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error at '{path}': {message}")]
    Config { path: String, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("runs are not comparable: {0}")]
    Mismatch(String),
    #[error("malformed run output: {0}")]
    Parse(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

impl ExperimentError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } => 2,
            Self::Curriculum(
                CurriculumError::UnknownTask(_)
                | CurriculumError::UnknownPreset(_)
                | CurriculumError::InvalidPlan(_)
                | CurriculumError::InvalidParams(_),
            ) => 2,
            _ => 3,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ExperimentError {
    ExperimentError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub const METRICS_HEADER: &str =
    "run_id,seed,stage,episode,episodic_reward,frac_top,frac_bottom,frac_overall,wall_ms";

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub seed: u64,
    pub stage: usize,
    pub episode: u64,
    pub episodic_reward: f64,
    pub frac_top: f64,
    pub frac_bottom: f64,
    pub frac_overall: f64,
    pub wall_ms: u64,
}

impl MetricRow {
    pub fn new(run_id: &str, seed: u64, r: &EpisodeRow) -> Self {
        Self {
            run_id: run_id.to_string(),
            seed,
            stage: r.stage,
            episode: r.episode,
            episodic_reward: r.episodic_reward,
            frac_top: r.success.frac_top,
            frac_bottom: r.success.frac_bottom,
            frac_overall: r.success.frac_overall,
            wall_ms: r.wall_ms,
        }
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.stage,
            self.episode,
            self.episodic_reward,
            self.frac_top,
            self.frac_bottom,
            self.frac_overall,
            self.wall_ms
        )
    }

    pub fn from_csv(line: &str) -> Result<Self, ExperimentError> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(ExperimentError::Parse(format!("expected 9 fields in '{line}'")));
        }
        fn num<T: std::str::FromStr>(s: &str, line: &str) -> Result<T, ExperimentError> {
            s.parse().map_err(|_| ExperimentError::Parse(format!("bad number '{s}' in '{line}'")))
        }
        Ok(Self {
            run_id: f[0].to_string(),
            seed: num(f[1], line)?,
            stage: num(f[2], line)?,
            episode: num(f[3], line)?,
            episodic_reward: num(f[4], line)?,
            frac_top: num(f[5], line)?,
            frac_bottom: num(f[6], line)?,
            frac_overall: num(f[7], line)?,
            wall_ms: num(f[8], line)?,
        })
    }

    pub fn success(&self, metric: SuccessMetric) -> f64 {
        match metric {
            SuccessMetric::FracTop => self.frac_top,
            SuccessMetric::FracOverall => self.frac_overall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStage {
    pub task: String,
    pub episodes: u64,
    pub preset: Option<String>,
    pub params: LearnerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub code_version: String,
    pub seeds: Vec<u64>,
    pub run_ids: Vec<String>,
    pub plan: String,
    pub stages: Vec<ManifestStage>,
    /// Cumulative episode at which each stage ends.
    pub boundaries: Vec<u64>,
    pub success_metric: SuccessMetric,
    pub success_threshold: f64,
    pub target_env: EnvConfig,
    pub complete: bool,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, ExperimentError> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Parse(format!("{}: {e}", path.display())))
    }

    fn save(&self, dir: &Path) -> Result<(), ExperimentError> {
        let path = dir.join("manifest.json");
        let tmp = dir.join("manifest.json.tmp");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
    }
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub records: Vec<RunRecord>,
}

pub fn run_id(name: &str, seed: u64) -> String {
    format!("{name}-s{seed}")
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    // output_dir is excluded so that relocating a run keeps its identity
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    let json = serde_json::to_string(&c).expect("config serializes");
    crate::sac::hex(&Sha256::digest(json.as_bytes()))
}

fn append(file: &mut File, path: &Path, line: &str) -> Result<(), CurriculumError> {
    file.write_all(line.as_bytes())
        .and_then(|_| file.write_all(b"\n"))
        .map_err(|e| CurriculumError::Output(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<File, ExperimentError> {
    File::create(path).map_err(|e| io_err(path, e))
}

/// Streams one run's artifacts to disk.
struct RunWriter<'a> {
    run_id: String,
    seed: u64,
    dir: PathBuf,
    csv: &'a mut File,
    csv_path: PathBuf,
    jsonl: File,
    eval: Option<File>,
    trajectory: Option<File>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum JsonLine<'a> {
    Episode(&'a MetricRow),
    Transfer {
        run_id: &'a str,
        #[serde(flatten)]
        event: &'a TransferEvent,
    },
}

#[derive(Serialize)]
struct StepLine<'a> {
    episode: u64,
    #[serde(flatten)]
    state: &'a BlockWorldState,
}

impl RunObserver for RunWriter<'_> {
    fn on_episode(&mut self, row: &EpisodeRow) -> Result<(), CurriculumError> {
        let m = MetricRow::new(&self.run_id, self.seed, row);
        append(self.csv, &self.csv_path, &m.to_csv())?;
        let line = serde_json::to_string(&JsonLine::Episode(&m)).expect("row serializes");
        append(&mut self.jsonl, &self.dir.join("metrics.jsonl"), &line)
    }

    fn on_eval(&mut self, row: &EvalRow) -> Result<(), CurriculumError> {
        if let Some(f) = self.eval.as_mut() {
            let s = &row.success;
            let line = format!(
                "{},{},{},{},{},{}",
                row.stage, row.episode, row.mean_reward, s.frac_top, s.frac_bottom, s.frac_overall
            );
            append(f, &self.dir.join("eval.csv"), &line)?;
        }
        Ok(())
    }

    fn on_transfer(&mut self, event: &TransferEvent) -> Result<(), CurriculumError> {
        let line = serde_json::to_string(&JsonLine::Transfer { run_id: &self.run_id, event })
            .expect("event serializes");
        append(&mut self.jsonl, &self.dir.join("metrics.jsonl"), &line)
    }

    fn on_stage_end(&mut self, stage: usize, episode: u64, params: &ParamBlob) -> Result<(), CurriculumError> {
        let path = self.dir.join(format!("stage{stage}_ep{episode}.params"));
        params.save(&path).map_err(|e| CurriculumError::Output(format!("{}: {e}", path.display())))
    }

    fn on_step(&mut self, episode: u64, state: &BlockWorldState) -> Result<(), CurriculumError> {
        if let Some(f) = self.trajectory.as_mut() {
            let line = serde_json::to_string(&StepLine { episode, state }).expect("state serializes");
            append(f, &self.dir.join("trajectory.jsonl"), &line)?;
        }
        Ok(())
    }

    fn wants_steps(&self) -> bool {
        self.trajectory.is_some()
    }
}

/// Runs every seed of `cfg` in sequence and persists all artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, ExperimentError> {
    cfg.validate()?;
    let plan = cfg.build_plan()?;
    let dir = cfg.output_dir.join(&cfg.name);
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let target = plan.target();
    let mut manifest = Manifest {
        name: cfg.name.clone(),
        config_hash: config_hash(cfg),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seeds: cfg.seeds.clone(),
        run_ids: cfg.seeds.iter().map(|&s| run_id(&cfg.name, s)).collect(),
        plan: plan.describe(),
        stages: plan
            .stages()
            .iter()
            .map(|s| ManifestStage {
                task: s.task.name.clone(),
                episodes: s.episodes,
                preset: s.preset.clone(),
                params: s.params,
            })
            .collect(),
        boundaries: plan.boundaries(),
        success_metric: target.success_metric,
        success_threshold: cfg.success_threshold,
        target_env: target.env.clone(),
        complete: false,
    };
    manifest.save(&dir)?;

    let csv_path = dir.join("metrics.csv");
    let mut csv = create(&csv_path)?;
    append(&mut csv, &csv_path, METRICS_HEADER)?;
    let opts = cfg.run_options();
    let mut records = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let id = run_id(&cfg.name, seed);
        let run_dir = dir.join(&id);
        if run_dir.exists() {
            fs::remove_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;
        }
        fs::create_dir_all(&run_dir).map_err(|e| io_err(&run_dir, e))?;
        let eval = if cfg.eval_every > 0 {
            let p = run_dir.join("eval.csv");
            let mut f = create(&p)?;
            append(&mut f, &p, "stage,episode,mean_reward,frac_top,frac_bottom,frac_overall")?;
            Some(f)
        } else {
            None
        };
        let trajectory =
            if cfg.dump_trajectories { Some(create(&run_dir.join("trajectory.jsonl"))?) } else { None };
        let mut writer = RunWriter {
            run_id: id,
            seed,
            jsonl: create(&run_dir.join("metrics.jsonl"))?,
            dir: run_dir,
            csv: &mut csv,
            csv_path: csv_path.clone(),
            eval,
            trajectory,
        };
        records.push(kcac_run(&plan, seed, &opts, &mut writer)?);
    }
    csv.sync_all().map_err(|e| io_err(&csv_path, e))?;
    manifest.complete = true;
    manifest.save(&dir)?;
    Ok(ExperimentOutcome { dir, manifest, records })
}

/// Similarity matrix over the config's task registry and plan target.
pub fn emit_similarity(cfg: &ExperimentConfig) -> Result<SimilarityMatrix, ExperimentError> {
    let tasks: Vec<(String, _)> = cfg.registry()?.into_iter().map(|t| (t.name, t.reward)).collect();
    Ok(similarity_matrix(&tasks)?)
}
