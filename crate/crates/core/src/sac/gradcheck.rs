//! Central-difference verification of the critic and actor gradients used by
//! [`SacLearner::update`](super::SacLearner).

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::nn::Mlp;
use super::{actor_loss, actor_loss_grads, critic_loss, critic_loss_grads};

const BATCH: usize = 8;

/// Tiny networks and a fixed batch: 1-d observation, 1-d action, one hidden
/// layer of 4 units (a 2-4-1 critic and a 1-4-2 actor).
#[derive(Debug, Clone)]
pub struct GradCheckFixture {
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub targets: Array1<f64>,
    pub noise: Array2<f64>,
    pub alpha: f64,
}

fn rel_err(a: f64, n: f64) -> f64 {
    let d = (a - n).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(n.abs()).max(1e-6)
    }
}

fn max_error(
    net: &Mlp,
    analytic: &[f64],
    epsilon: f64,
    loss: impl Fn(&Mlp) -> f64,
) -> f64 {
    let base = net.flat_params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + epsilon;
        probe.set_flat_params(&p);
        let up = loss(&probe);
        p[i] = base[i] - epsilon;
        probe.set_flat_params(&p);
        let down = loss(&probe);
        worst = worst.max(rel_err(a, (up - down) / (2.0 * epsilon)));
    }
    worst
}

impl GradCheckFixture {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(&[1, 4, 2], &mut rng);
        let critics = [Mlp::new(&[2, 4, 1], &mut rng), Mlp::new(&[2, 4, 1], &mut rng)];
        let mut uniform = |n| Array2::from_shape_simple_fn((BATCH, n), || rng.random_range(-1.0..1.0));
        let obs = uniform(1);
        let actions = uniform(1);
        let targets = uniform(1).column(0).to_owned();
        let noise = Array2::from_shape_simple_fn((BATCH, 1), || rng.sample::<f64, _>(StandardNormal));
        Self { actor, critics, obs, actions, targets, noise, alpha: 0.2 }
    }

    /// All weights, targets and the temperature zero.
    pub fn zeroed() -> Self {
        let mut f = Self::seeded(0);
        let [c1, c2] = &mut f.critics;
        for net in [&mut f.actor, c1, c2] {
            let n = net.num_params();
            net.set_flat_params(&vec![0.0; n]);
        }
        f.targets.fill(0.0);
        f.alpha = 0.0;
        f
    }

    pub fn num_params(&self) -> usize {
        self.actor.num_params() + self.critics[0].num_params()
    }

    /// Analytic critic and actor gradients, flattened and concatenated.
    pub fn analytic_gradients(&self) -> Vec<f64> {
        let x = concatenate![Axis(1), self.obs, self.actions];
        let mut g = critic_loss_grads(&self.critics[0], &x, &self.targets).1.flat();
        let critics = [&self.critics[0], &self.critics[1]];
        g.extend(actor_loss_grads(&self.actor, critics, &self.obs, &self.noise, self.alpha).grads.flat());
        g
    }

    /// Largest relative error between analytic and finite-difference
    /// gradients. `corrupt` may tamper with the analytic vector before the
    /// comparison (critic entries first, then actor).
    pub fn max_relative_error(&self, epsilon: f64, corrupt: Option<&dyn Fn(&mut [f64])>) -> f64 {
        let x = concatenate![Axis(1), self.obs, self.actions];
        let mut all = self.analytic_gradients();
        if let Some(f) = corrupt {
            f(&mut all);
        }
        let split = self.critics[0].num_params();
        let actor_part = all.split_off(split);
        let critic_err = max_error(&self.critics[0], &all, epsilon, |c| critic_loss(c, &x, &self.targets));
        let critics = [&self.critics[0], &self.critics[1]];
        let actor_err = max_error(&self.actor, &actor_part, epsilon, |a| {
            actor_loss(a, critics, &self.obs, &self.noise, self.alpha)
        });
        critic_err.max(actor_err)
    }
}

/// Max relative gradient error on the default seeded fixture.
pub fn grad_check(epsilon: f64) -> f64 {
    GradCheckFixture::seeded(0).max_relative_error(epsilon, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_small() {
        let f = GradCheckFixture::seeded(0);
        assert_eq!(f.critics[0].num_params(), 2 * 4 + 4 + 4 + 1);
        assert!(f.actor.num_params() <= 64);
    }

    #[test]
    fn analytic_matches_finite_difference() {
        for seed in 0..5 {
            let e = GradCheckFixture::seeded(seed).max_relative_error(1e-5, None);
            assert!(e <= 1e-4, "seed {seed}: {e}");
        }
    }

    #[test]
    fn zero_fixture_has_zero_gradients() {
        let f = GradCheckFixture::zeroed();
        assert!(f.analytic_gradients().iter().all(|&g| g == 0.0));
        assert_eq!(f.max_relative_error(1e-5, None), 0.0);
    }

    #[test]
    fn corruption_is_detected() {
        let f = GradCheckFixture::seeded(0);
        let flip: &dyn Fn(&mut [f64]) = &|g| g[3] = -g[3] + 0.5;
        assert!(f.max_relative_error(1e-5, Some(flip)) >= 0.1);
        let last: &dyn Fn(&mut [f64]) = &|g| {
            let n = g.len();
            g[n - 1] *= 2.0;
        };
        assert!(f.max_relative_error(1e-5, Some(last)) >= 0.1);
    }
}
