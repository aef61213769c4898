//! Soft actor-critic over continuous actions in `[-1, 1]^act_dim`.
//!
//! Squashed-Gaussian actor, twin critics with soft-updated targets, and a
//! learned temperature. All networks are small tanh MLPs trained with Adam;
//! gradients are derived by hand (see [`grad_check`] for the verification).

mod blob;
mod buffer;
mod gradcheck;
pub mod nn;

pub(crate) use blob::hex;
pub use blob::{NamedTensor, ParamBlob, BLOB_VERSION};
pub use buffer::{ReplayBuffer, Transition};
pub use gradcheck::{grad_check, GradCheckFixture};

use ndarray::{concatenate, s, Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curriculum::{LearnerParams, TargetEntropy};
use nn::{Adam, Mlp, MlpGrads, ScalarAdam};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SacError {
    #[error("invalid learner parameters: {0}")]
    InvalidParams(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("not ready to update: {have} transitions stored, {need} required")]
    NotReady { have: usize, need: usize },
    #[error("parameter mismatch: {0}")]
    Mismatch(String),
    #[error("malformed parameter blob: {0}")]
    Blob(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("training diverged: {0}")]
    Diverged(String),
}

fn d_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn d_warmup() -> usize {
    1000
}

/// Architecture and cadence settings not covered by [`LearnerParams`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SacConfig {
    #[serde(default = "d_hidden")]
    pub hidden: Vec<usize>,
    /// Updates start once this many transitions are stored.
    #[serde(default = "d_warmup")]
    pub warmup: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self { hidden: d_hidden(), warmup: d_warmup() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub temperature_loss: f64,
    pub entropy_estimate: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        self.critic_loss.is_finite()
            && self.actor_loss.is_finite()
            && self.temperature_loss.is_finite()
            && self.entropy_estimate.is_finite()
    }
}

/// The interface the curriculum runner drives.
pub trait Learner {
    fn select_action(&mut self, obs: &[f64], mode: ActionMode) -> Result<Vec<f64>, SacError>;
    fn observe_transition(&mut self, t: Transition) -> Result<(), SacError>;
    fn update(&mut self) -> Result<LossReport, SacError>;
    fn export_params(&self) -> ParamBlob;
    fn import_params(&mut self, blob: &ParamBlob) -> Result<(), SacError>;
    /// Resets the temperature to the configured initial value.
    fn reset_temperature(&mut self);
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 − tanh²u)` without cancellation.
fn log1m_tanh2(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Reparameterised squashed-Gaussian draw for a batch.
pub(crate) struct PolicySample {
    std: Array2<f64>,
    /// 1 where the raw log-std lay inside the clamp range, else 0.
    unclamped: Array2<f64>,
    noise: Array2<f64>,
    pub action: Array2<f64>,
    pub log_prob: Array1<f64>,
}

pub(crate) fn policy_sample(actor_out: &Array2<f64>, noise: &Array2<f64>) -> PolicySample {
    let act_dim = noise.ncols();
    let mu = actor_out.slice(s![.., ..act_dim]);
    let raw = actor_out.slice(s![.., act_dim..]);
    let log_std = raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    let unclamped = raw.mapv(|v| if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) { 1.0 } else { 0.0 });
    let std = log_std.mapv(f64::exp);
    let u = &mu + &(&std * noise);
    let action = u.mapv(f64::tanh);
    let mut log_prob = Array1::zeros(noise.nrows());
    for i in 0..noise.nrows() {
        let mut lp = 0.0;
        for j in 0..act_dim {
            let e = noise[[i, j]];
            lp += -0.5 * e * e - log_std[[i, j]] - HALF_LN_2PI - log1m_tanh2(u[[i, j]]);
        }
        log_prob[i] = lp;
    }
    PolicySample { std, unclamped, noise: noise.clone(), action, log_prob }
}

/// `0.5·mean((Q − y)²)` and its parameter gradient.
pub(crate) fn critic_loss_grads(critic: &Mlp, x: &Array2<f64>, y: &Array1<f64>) -> (f64, MlpGrads) {
    let n = x.nrows() as f64;
    let (q, cache) = critic.forward(x);
    let diff = &q.column(0) - y;
    let loss = 0.5 * diff.mapv(|d| d * d).sum() / n;
    let grad_out = (diff / n).insert_axis(Axis(1));
    let (g, _) = critic.backward(&cache, &grad_out, true, false);
    (loss, g.expect("requested"))
}

pub(crate) fn critic_loss(critic: &Mlp, x: &Array2<f64>, y: &Array1<f64>) -> f64 {
    let q = critic.predict(x);
    let diff = &q.column(0) - y;
    0.5 * diff.mapv(|d| d * d).sum() / x.nrows() as f64
}

pub(crate) struct ActorStep {
    pub loss: f64,
    pub grads: MlpGrads,
    pub log_prob: Array1<f64>,
}

/// `mean(α·log π(a|s) − min(Q1, Q2)(s, a))` with `a` reparameterised by `noise`.
pub(crate) fn actor_loss_grads(
    actor: &Mlp,
    critics: [&Mlp; 2],
    obs: &Array2<f64>,
    noise: &Array2<f64>,
    alpha: f64,
) -> ActorStep {
    let n = obs.nrows() as f64;
    let obs_dim = obs.ncols();
    let (out, cache) = actor.forward(obs);
    let ps = policy_sample(&out, noise);
    let x = concatenate![Axis(1), *obs, ps.action];
    let (q1, c1) = critics[0].forward(&x);
    let (q2, c2) = critics[1].forward(&x);
    let mut loss = 0.0;
    let mut g1 = Array2::zeros((obs.nrows(), 1));
    let mut g2 = Array2::zeros((obs.nrows(), 1));
    for i in 0..obs.nrows() {
        let (a, b) = (q1[[i, 0]], q2[[i, 0]]);
        loss += alpha * ps.log_prob[i] - a.min(b);
        if a <= b {
            g1[[i, 0]] = -1.0 / n;
        } else {
            g2[[i, 0]] = -1.0 / n;
        }
    }
    loss /= n;
    let (_, dx1) = critics[0].backward(&c1, &g1, false, true);
    let (_, dx2) = critics[1].backward(&c2, &g2, false, true);
    let dq_da = &dx1.unwrap().slice(s![.., obs_dim..]) + &dx2.unwrap().slice(s![.., obs_dim..]);

    let a = &ps.action;
    let mut du = a.mapv(|a| alpha * 2.0 * a / n);
    Zip::from(&mut du).and(&dq_da).and(a).for_each(|d, &g, &a| *d += g * (1.0 - a * a));
    let mut dls = Array2::from_elem(du.raw_dim(), -alpha / n);
    Zip::from(&mut dls)
        .and(&du)
        .and(&ps.std)
        .and(&ps.noise)
        .and(&ps.unclamped)
        .for_each(|d, &du, &s, &e, &m| *d = (*d + du * s * e) * m);
    let grad_out = concatenate![Axis(1), du, dls];
    let (g, _) = actor.backward(&cache, &grad_out, true, false);
    ActorStep { loss, grads: g.expect("requested"), log_prob: ps.log_prob }
}

pub(crate) fn actor_loss(
    actor: &Mlp,
    critics: [&Mlp; 2],
    obs: &Array2<f64>,
    noise: &Array2<f64>,
    alpha: f64,
) -> f64 {
    let ps = policy_sample(&actor.predict(obs), noise);
    let x = concatenate![Axis(1), *obs, ps.action];
    let q1 = critics[0].predict(&x);
    let q2 = critics[1].predict(&x);
    let n = obs.nrows();
    (0..n).map(|i| alpha * ps.log_prob[i] - q1[[i, 0]].min(q2[[i, 0]])).sum::<f64>() / n as f64
}

#[derive(Debug, Clone)]
pub struct SacLearner {
    obs_dim: usize,
    act_dim: usize,
    params: LearnerParams,
    config: SacConfig,
    actor: Mlp,
    critics: [Mlp; 2],
    targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    log_alpha: f64,
    alpha_opt: ScalarAdam,
    target_entropy: f64,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
}

impl SacLearner {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        params: LearnerParams,
        config: SacConfig,
        seed: u64,
    ) -> Result<Self, SacError> {
        if obs_dim == 0 || act_dim == 0 {
            return Err(SacError::InvalidParams("observation and action dims must be >= 1".into()));
        }
        params.validate().map_err(|e| SacError::InvalidParams(e.to_string()))?;
        if config.hidden.contains(&0) {
            return Err(SacError::InvalidParams("hidden layer widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&config.hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new(&sizes(obs_dim, 2 * act_dim), &mut rng);
        let critic_sizes = sizes(obs_dim + act_dim, 1);
        let critics = [Mlp::new(&critic_sizes, &mut rng), Mlp::new(&critic_sizes, &mut rng)];
        let targets = critics.clone();
        let lr = params.learning_rate;
        let target_entropy = match params.target_entropy {
            TargetEntropy::Auto => -(act_dim as f64),
            TargetEntropy::Fixed(h) => h,
        };
        Ok(Self {
            obs_dim,
            act_dim,
            actor_opt: Adam::new(&actor, lr),
            critic_opts: [Adam::new(&critics[0], lr), Adam::new(&critics[1], lr)],
            actor,
            critics,
            targets,
            log_alpha: params.entropy_coeff.ln(),
            alpha_opt: ScalarAdam::new(lr),
            target_entropy,
            buffer: ReplayBuffer::new(params.buffer_size),
            params,
            config,
            rng,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn params(&self) -> &LearnerParams {
        &self.params
    }

    pub fn config(&self) -> &SacConfig {
        &self.config
    }

    pub fn temperature(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critics(&self) -> &[Mlp; 2] {
        &self.critics
    }

    pub fn targets(&self) -> &[Mlp; 2] {
        &self.targets
    }

    fn learns_temperature(&self) -> bool {
        self.params.target_entropy == TargetEntropy::Auto
    }

    /// Transitions needed before [`Learner::update`] does anything.
    pub fn ready_threshold(&self) -> usize {
        self.params.batch_size.max(self.config.warmup)
    }

    fn normal(&mut self, rows: usize) -> Array2<f64> {
        let rng = &mut self.rng;
        Array2::from_shape_simple_fn((rows, self.act_dim), || rng.sample::<f64, _>(StandardNormal))
    }

    fn check_obs(&self, obs: &[f64]) -> Result<(), SacError> {
        if obs.len() != self.obs_dim {
            return Err(SacError::Shape(format!(
                "observation has {} entries, expected {}",
                obs.len(),
                self.obs_dim
            )));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(SacError::InvalidObservation("non-finite entry".into()));
        }
        Ok(())
    }

    fn networks(&self) -> [(&'static str, &Mlp); 5] {
        [
            ("actor", &self.actor),
            ("critic1", &self.critics[0]),
            ("critic2", &self.critics[1]),
            ("target1", &self.targets[0]),
            ("target2", &self.targets[1]),
        ]
    }

    /// One full update on an explicit batch (used by `update` and by tests
    /// that replay a fixed batch).
    pub fn update_on(&mut self, batch: &[Transition]) -> Result<LossReport, SacError> {
        let n = batch.len();
        if n == 0 {
            return Err(SacError::NotReady { have: 0, need: 1 });
        }
        let (od, ad) = (self.obs_dim, self.act_dim);
        let mut obs = Vec::with_capacity(n * od);
        let mut act = Vec::with_capacity(n * ad);
        let mut next = Vec::with_capacity(n * od);
        let mut rew = Vec::with_capacity(n);
        let mut live = Vec::with_capacity(n);
        for t in batch {
            obs.extend_from_slice(&t.observation);
            act.extend_from_slice(&t.action);
            next.extend_from_slice(&t.next_observation);
            rew.push(t.reward);
            live.push(if t.terminal { 0.0 } else { 1.0 });
        }
        let obs = Array2::from_shape_vec((n, od), obs).expect("checked on insert");
        let act = Array2::from_shape_vec((n, ad), act).expect("checked on insert");
        let next = Array2::from_shape_vec((n, od), next).expect("checked on insert");
        let rew = Array1::from(rew);
        let live = Array1::from(live);

        let noise_pi = self.normal(n);
        let noise_next = self.normal(n);
        let alpha = self.log_alpha.exp();

        // soft Bellman target
        let next_ps = policy_sample(&self.actor.predict(&next), &noise_next);
        let xt = concatenate![Axis(1), next, next_ps.action];
        let q1t = self.targets[0].predict(&xt);
        let q2t = self.targets[1].predict(&xt);
        let mut y = rew;
        for i in 0..n {
            let soft = q1t[[i, 0]].min(q2t[[i, 0]]) - alpha * next_ps.log_prob[i];
            y[i] += self.params.discount * live[i] * soft;
        }

        let x = concatenate![Axis(1), obs, act];
        let mut critic_loss = 0.0;
        for k in 0..2 {
            let (loss, g) = critic_loss_grads(&self.critics[k], &x, &y);
            self.critic_opts[k].step(&mut self.critics[k], &g);
            critic_loss += loss;
        }

        let step = actor_loss_grads(&self.actor, [&self.critics[0], &self.critics[1]], &obs, &noise_pi, alpha);
        self.actor_opt.step(&mut self.actor, &step.grads);

        let mean_lp = step.log_prob.mean().unwrap_or(0.0);
        let temperature_loss = -self.log_alpha * (mean_lp + self.target_entropy);
        if self.learns_temperature() {
            let grad = -(mean_lp + self.target_entropy);
            self.alpha_opt.step(&mut self.log_alpha, grad);
        }

        let tau = self.params.tau;
        for k in 0..2 {
            self.targets[k].soft_update_from(&self.critics[k], tau);
        }

        let report = LossReport {
            critic_loss,
            actor_loss: step.loss,
            temperature_loss,
            entropy_estimate: -mean_lp,
        };
        if !report.is_finite() || !self.log_alpha.is_finite() {
            return Err(SacError::Diverged(format!("{report:?}")));
        }
        Ok(report)
    }
}

impl Learner for SacLearner {
    fn select_action(&mut self, obs: &[f64], mode: ActionMode) -> Result<Vec<f64>, SacError> {
        self.check_obs(obs)?;
        let x = Array2::from_shape_vec((1, self.obs_dim), obs.to_vec()).expect("length checked");
        let out = self.actor.predict(&x);
        let action = match mode {
            ActionMode::Deterministic => out.slice(s![0, ..self.act_dim]).mapv(f64::tanh).to_vec(),
            ActionMode::Stochastic => {
                let noise = self.normal(1);
                policy_sample(&out, &noise).action.row(0).to_vec()
            }
        };
        Ok(action)
    }

    fn observe_transition(&mut self, t: Transition) -> Result<(), SacError> {
        if t.observation.len() != self.obs_dim
            || t.next_observation.len() != self.obs_dim
            || t.action.len() != self.act_dim
        {
            return Err(SacError::Shape(format!(
                "transition dims obs {}/{} act {}, expected {} and {}",
                t.observation.len(),
                t.next_observation.len(),
                t.action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        self.buffer.push(t);
        Ok(())
    }

    fn update(&mut self) -> Result<LossReport, SacError> {
        let need = self.ready_threshold();
        if self.buffer.len() < need {
            return Err(SacError::NotReady { have: self.buffer.len(), need });
        }
        let batch: Vec<Transition> = self
            .buffer
            .sample(self.params.batch_size, &mut self.rng)
            .expect("size checked")
            .into_iter()
            .cloned()
            .collect();
        self.update_on(&batch)
    }

    fn export_params(&self) -> ParamBlob {
        let mut tensors = Vec::new();
        for (net, mlp) in self.networks() {
            for (i, l) in mlp.layers.iter().enumerate() {
                tensors.push(NamedTensor {
                    name: format!("{net}.{i}.weight"),
                    shape: l.weight.shape().to_vec(),
                    data: l.weight.iter().copied().collect(),
                });
                tensors.push(NamedTensor {
                    name: format!("{net}.{i}.bias"),
                    shape: l.bias.shape().to_vec(),
                    data: l.bias.to_vec(),
                });
            }
        }
        ParamBlob {
            version: BLOB_VERSION,
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            tensors,
            log_temperature: self.log_alpha,
        }
    }

    fn import_params(&mut self, blob: &ParamBlob) -> Result<(), SacError> {
        if blob.version != BLOB_VERSION {
            return Err(SacError::Mismatch(format!("blob version {}", blob.version)));
        }
        if blob.obs_dim != self.obs_dim || blob.act_dim != self.act_dim {
            return Err(SacError::Mismatch(format!(
                "blob dims ({}, {}) vs learner ({}, {})",
                blob.obs_dim, blob.act_dim, self.obs_dim, self.act_dim
            )));
        }
        let mine = self.export_params();
        if mine.tensors.len() != blob.tensors.len() {
            return Err(SacError::Mismatch("tensor count differs".into()));
        }
        for (a, b) in mine.tensors.iter().zip(&blob.tensors) {
            if a.name != b.name || a.shape != b.shape || b.data.len() != a.data.len() {
                return Err(SacError::Mismatch(format!(
                    "tensor {} {:?} vs {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        let mut it = blob.tensors.iter();
        let nets: [&mut Mlp; 5] = {
            let [c1, c2] = &mut self.critics;
            let [t1, t2] = &mut self.targets;
            [&mut self.actor, c1, c2, t1, t2]
        };
        for mlp in nets {
            for l in &mut mlp.layers {
                let w = it.next().expect("counted");
                l.weight.iter_mut().zip(&w.data).for_each(|(p, v)| *p = *v);
                let b = it.next().expect("counted");
                l.bias.iter_mut().zip(&b.data).for_each(|(p, v)| *p = *v);
            }
        }
        self.log_alpha = blob.log_temperature;
        let lr = self.params.learning_rate;
        self.actor_opt = Adam::new(&self.actor, lr);
        self.critic_opts = [Adam::new(&self.critics[0], lr), Adam::new(&self.critics[1], lr)];
        self.alpha_opt = ScalarAdam::new(lr);
        Ok(())
    }

    fn reset_temperature(&mut self) {
        self.log_alpha = self.params.entropy_coeff.ln();
        self.alpha_opt = ScalarAdam::new(self.params.learning_rate);
    }
}
