//! Advantage estimation, the clipped surrogate loss with its analytic
//! gradient, and the Adam optimizer.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{
    add_entropy_grad, add_log_prob_grad, add_value_grad, HeadAction, PolicyNet, PolicyOutput,
    OUT_DIM,
};
use super::LearnerError;

/// Advantages and returns for one contiguous trajectory segment.
///
/// `values` has one more entry than `rewards`: the bootstrap value of the
/// state after the last transition.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), LearnerError> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(LearnerError::Shape {
            rewards: n,
            values: values.len(),
            dones: dones.len(),
        });
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// One transition as seen by the update.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<u32>,
    pub action: HeadAction,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefs {
    pub clip_epsilon: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
}

impl Default for LossCoefs {
    fn default() -> Self {
        LossCoefs {
            clip_epsilon: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// `-mean(min(rA, clip(r)A)) + value_coef * mean((V - R)^2) - entropy_coef * mean(H)`.
/// Adds its gradient into `grad` when given.
pub fn loss_and_grad(
    net: &PolicyNet,
    batch: &[Sample],
    coefs: &LossCoefs,
    mut grad: Option<&mut [f64]>,
) -> LossStats {
    let n = batch.len() as f64;
    let eps = coefs.clip_epsilon;
    let mut stats = LossStats::default();
    let mut clipped = 0usize;
    for s in batch {
        let fwd = net.forward(&s.input);
        let out = PolicyOutput::from_raw(&fwd.out);
        let ratio = (out.joint_log_prob(&s.action) - s.old_log_prob).exp();
        let a = s.advantage;
        let unclipped = ratio * a;
        let bounded = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
        let saturated = bounded < unclipped;
        if saturated {
            clipped += 1;
        }
        let diff = out.value - s.ret;
        let h = out.entropy();
        stats.policy -= unclipped.min(bounded) / n;
        stats.value += diff * diff / n;
        stats.entropy += h / n;
        if let Some(g) = grad.as_deref_mut() {
            let mut d_out = [0.0; OUT_DIM];
            if !saturated {
                // d(-rA)/d(log p) = -rA
                add_log_prob_grad(&out, &s.action, -unclipped / n, &mut d_out);
            }
            add_value_grad(coefs.value_coef * 2.0 * diff / n, &mut d_out);
            add_entropy_grad(&out, -coefs.entropy_coef / n, &mut d_out);
            net.backward(&s.input, &fwd, &d_out, g);
        }
    }
    stats.total = stats.policy + coefs.value_coef * stats.value - coefs.entropy_coef * stats.entropy;
    stats.clip_fraction = clipped as f64 / n;
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64, eps: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateConfig {
    pub coefs: LossCoefs,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Global gradient-norm ceiling; `0` disables clipping.
    pub max_grad_norm: f64,
}

/// Several epochs of shuffled minibatch Adam steps on the surrogate loss.
/// Returns the statistics of the last minibatch of each epoch.
pub fn clipped_update(
    net: &mut PolicyNet,
    opt: &mut Adam,
    batch: &[Sample],
    cfg: &UpdateConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LossStats>, LearnerError> {
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut grad = vec![0.0; net.num_params()];
    let mut per_epoch = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut last = LossStats::default();
        for chunk in order.chunks(cfg.minibatch_size.max(1)) {
            let mb: Vec<Sample> = chunk.iter().map(|&i| batch[i].clone()).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            last = loss_and_grad(net, &mb, &cfg.coefs, Some(&mut grad));
            if !last.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(LearnerError::NonFinite("loss"));
            }
            if cfg.max_grad_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.max_grad_norm {
                    let s = cfg.max_grad_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            opt.step(&mut net.params, &grad);
        }
        if !net.all_finite() {
            return Err(LearnerError::NonFinite("parameters"));
        }
        per_epoch.push(last);
    }
    Ok(per_epoch)
}
