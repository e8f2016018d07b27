use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_log_prob, Adam, LearnerError, Mlp, RolloutBatch};

const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub learning_rate: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub transitions: usize,
    pub minibatch: usize,
    pub epochs: usize,
    pub envs: usize,
    pub sigma: f64,
    pub entropy: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            learning_rate: 1.2e-4,
            gamma: 0.97,
            lambda: 0.95,
            transitions: 6144,
            minibatch: 768,
            epochs: 5,
            envs: 64,
            sigma: 0.1,
            entropy: 0.0,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![128, 128],
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |m: String| Err(LearnerError::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip ratio {} must be positive", self.clip));
        }
        if !(self.sigma > 0.0) {
            return bad(format!("action stddev {} must be positive", self.sigma));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        if self.minibatch == 0 || self.transitions == 0 || self.transitions % self.minibatch != 0 {
            return bad(format!(
                "minibatch {} must divide transitions per iteration {}",
                self.minibatch, self.transitions
            ));
        }
        if self.envs == 0 || self.epochs == 0 {
            return bad("envs and epochs must be positive".into());
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layers must be non-empty".into());
        }
        Ok(())
    }
}

/// Losses and gradients of one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    /// Negated clipped surrogate minus the entropy bonus.
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub grad_actor: Vec<f64>,
    pub grad_critic: Vec<f64>,
}

/// Entropy of the fixed-stddev Gaussian policy.
pub fn gaussian_entropy(dim: usize, sigma: f64) -> f64 {
    dim as f64 * (0.5 * LN_2PI_E + sigma.ln())
}

/// Clipped surrogate objective over `indices`, averaged.
pub fn surrogate_objective(actor: &Mlp, batch: &RolloutBatch, indices: &[usize], clip: f64, sigma: f64) -> Result<f64, LearnerError> {
    let mut total = 0.0;
    for &i in indices {
        let t = &batch.transitions[i];
        let mean = actor.predict(&t.observation)?;
        let ratio = (gaussian_log_prob(&t.action, &mean, sigma) - t.log_prob).exp();
        let a = batch.advantages[i];
        total += (ratio * a).min(ratio.clamp(1.0 - clip, 1.0 + clip) * a);
    }
    Ok(total / indices.len() as f64)
}

/// Policy and value losses on `indices` with their analytic gradients.
pub fn ppo_loss(actor: &Mlp, critic: &Mlp, batch: &RolloutBatch, indices: &[usize], config: &PpoConfig) -> Result<LossGrad, LearnerError> {
    let b = indices.len() as f64;
    let sigma = config.sigma;
    let mut out = LossGrad {
        policy_loss: 0.0,
        value_loss: 0.0,
        kl: 0.0,
        clip_fraction: 0.0,
        grad_actor: vec![0.0; actor.params.len()],
        grad_critic: vec![0.0; critic.params.len()],
    };
    for &i in indices {
        let t = &batch.transitions[i];
        let a = batch.advantages[i];
        let cache = actor.forward(&t.observation)?;
        let mean = cache.output();
        let log_prob = gaussian_log_prob(&t.action, mean, sigma);
        let ratio = (log_prob - t.log_prob).exp();
        let clipped = ratio.clamp(1.0 - config.clip, 1.0 + config.clip);
        out.policy_loss -= (ratio * a).min(clipped * a) / b;
        out.kl += (t.log_prob - log_prob) / b;
        if (ratio - 1.0).abs() > config.clip {
            out.clip_fraction += 1.0 / b;
        }
        let active = ratio * a <= clipped * a || ratio == clipped;
        if active && a != 0.0 {
            let g: Vec<f64> = t
                .action
                .iter()
                .zip(mean)
                .map(|(x, m)| -a * ratio * (x - m) / (sigma * sigma) / b)
                .collect();
            actor.backward(&cache, &g, &mut out.grad_actor);
        }
        let vcache = critic.forward(&t.observation)?;
        let err = vcache.output()[0] - batch.returns[i];
        out.value_loss += 0.5 * err * err / b;
        critic.backward(&vcache, &[err / b], &mut out.grad_critic);
    }
    out.policy_loss -= config.entropy * gaussian_entropy(actor.output_len(), sigma);
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate updates over shuffled minibatches. On a non-finite gradient every
/// network and optimizer is restored to its state before the call.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update<R: Rng + ?Sized>(
    actor: &mut Mlp,
    critic: &mut Mlp,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
    batch: &RolloutBatch,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateStats, LearnerError> {
    let n = batch.len();
    if batch.advantages.len() != n || batch.returns.len() != n {
        return Err(LearnerError::DimensionMismatch {
            what: "advantages",
            got: batch.advantages.len(),
            expected: n,
        });
    }
    let saved = (actor.clone(), critic.clone(), actor_opt.clone(), critic_opt.clone());
    let size = config.minibatch.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0.0;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(size) {
            let loss = ppo_loss(actor, critic, batch, chunk, config)?;
            if !loss.grad_actor.iter().chain(&loss.grad_critic).all(|g| g.is_finite()) {
                (*actor, *critic, *actor_opt, *critic_opt) = saved;
                return Err(LearnerError::NonFiniteGradient);
            }
            actor_opt.step(&mut actor.params, &loss.grad_actor, config.learning_rate);
            critic_opt.step(&mut critic.params, &loss.grad_critic, config.learning_rate);
            stats.policy_loss += loss.policy_loss;
            stats.value_loss += loss.value_loss;
            stats.kl += loss.kl;
            stats.clip_fraction += loss.clip_fraction;
            count += 1.0;
        }
    }
    if count > 0.0 {
        stats.policy_loss /= count;
        stats.value_loss /= count;
        stats.kl /= count;
        stats.clip_fraction /= count;
    }
    Ok(stats)
}
