//! Score-function (REINFORCE) learners for continuous one-dimensional actions and small bandits.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gaussian policy whose mean is `scale * sigmoid(mean_logit)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub mean_logit: f64,
    pub log_std: f64,
    pub scale: f64,
}

impl GaussianPolicy {
    pub fn new(initial_mean: f64, std: f64, scale: f64) -> Self {
        let p = (initial_mean / scale).clamp(1e-6, 1.0 - 1e-6);
        Self { mean_logit: (p / (1.0 - p)).ln(), log_std: std.ln(), scale }
    }

    pub fn mean(&self) -> f64 {
        self.scale * sigmoid(self.mean_logit)
    }

    pub fn std(&self) -> f64 {
        self.log_std.exp()
    }

    /// Raw Gaussian draw; callers clamp it to their action range when acting.
    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean() + self.std() * z
    }

    pub fn log_prob(&self, x: f64) -> f64 {
        let s = self.std();
        let d = x - self.mean();
        -d * d / (2.0 * s * s) - self.log_std - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// Gradient of `log_prob(x)` with respect to `(mean_logit, log_std)`.
    pub fn grad_log_prob(&self, x: f64) -> [f64; 2] {
        let s = self.std();
        let sg = sigmoid(self.mean_logit);
        let d = x - self.mean();
        [d / (s * s) * self.scale * sg * (1.0 - sg), d * d / (s * s) - 1.0]
    }
}

/// One batch of sampled actions and their advantages (return minus baseline).
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub actions: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Mean of `log_prob(x) * advantage`; its gradient is the REINFORCE estimate.
pub fn surrogate(policy: &GaussianPolicy, batch: &Batch) -> f64 {
    let n = batch.actions.len() as f64;
    batch.actions.iter().zip(&batch.advantages).map(|(x, a)| policy.log_prob(*x) * a).sum::<f64>() / n
}

pub fn surrogate_grad(policy: &GaussianPolicy, batch: &Batch) -> [f64; 2] {
    let n = batch.actions.len() as f64;
    let mut g = [0.0; 2];
    for (x, a) in batch.actions.iter().zip(&batch.advantages) {
        let d = policy.grad_log_prob(*x);
        g[0] += d[0] * a / n;
        g[1] += d[1] * a / n;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgSchedule {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    /// Multiplicative learning-rate decay per iteration.
    pub lr_decay: f64,
    /// The policy spread never shrinks below this.
    pub min_std: f64,
    /// When false the spread stays fixed at its initial value.
    pub learn_std: bool,
}

impl Default for PgSchedule {
    fn default() -> Self {
        Self { iterations: 400, batch: 256, lr: 2.0, lr_decay: 0.995, min_std: 0.005, learn_std: false }
    }
}

/// Gradient ascent on the expected episodic return of a one-step episode
/// whose return for action `x` is sampled by `episode(x, rng)`.
pub fn episodic_policy_gradient<F>(
    mut policy: GaussianPolicy,
    schedule: &PgSchedule,
    rng: &mut SimRng,
    mut episode: F,
) -> Result<GaussianPolicy>
where
    F: FnMut(f64, &mut SimRng) -> f64,
{
    let mut lr = schedule.lr;
    for it in 0..schedule.iterations {
        let mut batch = Batch::default();
        for _ in 0..schedule.batch {
            let x = policy.sample(rng);
            let ret = episode(x.clamp(0.0, policy.scale), rng);
            if !ret.is_finite() {
                return Err(Error::Schedule(format!("non-finite return at iteration {it}")));
            }
            batch.actions.push(x);
            batch.advantages.push(ret);
        }
        let baseline = batch.advantages.iter().sum::<f64>() / batch.advantages.len() as f64;
        batch.advantages.iter_mut().for_each(|r| *r -= baseline);
        let g = surrogate_grad(&policy, &batch);
        policy.mean_logit += lr * g[0];
        if schedule.learn_std {
            policy.log_std += lr * g[1];
        }
        policy.log_std = policy.log_std.max(schedule.min_std.ln());
        if !policy.mean_logit.is_finite() || !policy.log_std.is_finite() {
            return Err(Error::Schedule(format!("parameters diverged at iteration {it}")));
        }
        lr *= schedule.lr_decay;
    }
    Ok(policy)
}

/// Softmax bandit trained by REINFORCE with a running baseline; returns arm probabilities.
pub fn softmax_bandit(arm_means: &[f64], noise: f64, steps: usize, lr: f64, rng: &mut SimRng) -> Result<Vec<f64>> {
    let k = arm_means.len();
    let mut logits = vec![0.0; k];
    let mut baseline = 0.0;
    for t in 0..steps {
        let probs = softmax(&logits);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut arm = k - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                arm = i;
                break;
            }
        }
        let z: f64 = StandardNormal.sample(rng);
        let r = arm_means[arm] + noise * z;
        let adv = r - baseline;
        baseline += 0.05 * (r - baseline);
        for (i, l) in logits.iter_mut().enumerate() {
            let ind = if i == arm { 1.0 } else { 0.0 };
            *l += lr * adv * (ind - probs[i]);
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Schedule(format!("bandit logits diverged at step {t}")));
        }
    }
    Ok(softmax(&logits))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = stream(3, 0);
        let policy = GaussianPolicy::new(0.12, 0.03, 0.5);
        let mut batch = Batch::default();
        for _ in 0..64 {
            let x = policy.sample(&mut rng);
            batch.actions.push(x);
            batch.advantages.push((x - 0.1).sin() + rng.gen::<f64>() - 0.5);
        }
        let g = surrogate_grad(&policy, &batch);
        let h = 1e-6;
        let mut p = policy;
        p.mean_logit += h;
        let up = surrogate(&p, &batch);
        p.mean_logit -= 2.0 * h;
        let down = surrogate(&p, &batch);
        let fd0 = (up - down) / (2.0 * h);
        let mut p = policy;
        p.log_std += h;
        let up = surrogate(&p, &batch);
        p.log_std -= 2.0 * h;
        let down = surrogate(&p, &batch);
        let fd1 = (up - down) / (2.0 * h);
        assert!(((g[0] - fd0) / fd0).abs() < 1e-3, "{} vs {}", g[0], fd0);
        assert!(((g[1] - fd1) / fd1).abs() < 1e-3, "{} vs {}", g[1], fd1);
    }

    #[test]
    fn bandit_finds_best_arm() {
        let mut rng = stream(11, 0);
        let p = softmax_bandit(&[0.2, 0.5, 0.9], 0.1, 20_000, 0.5, &mut rng).unwrap();
        assert!(p[2] > 0.99, "{p:?}");
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = stream(1, 0);
        let r = episodic_policy_gradient(GaussianPolicy::new(0.2, 0.05, 1.0), &PgSchedule::default(), &mut rng, |_, _| f64::NAN);
        assert!(matches!(r, Err(Error::Schedule(_))));
    }

    #[test]
    fn climbs_a_concave_return() {
        let mut rng = stream(5, 0);
        let sched = PgSchedule { iterations: 300, batch: 128, lr: 2.0, lr_decay: 0.995, min_std: 0.01, learn_std: false };
        let p = episodic_policy_gradient(GaussianPolicy::new(0.1, 0.05, 1.0), &sched, &mut rng, |x, _| -(x - 0.6).powi(2)).unwrap();
        assert!((p.mean() - 0.6).abs() < 0.02, "{}", p.mean());
    }
}
