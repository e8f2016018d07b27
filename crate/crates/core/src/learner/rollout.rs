use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{compute_gae, sample_action, LearnerError, Mlp, Normalizer, TrackingEnv};

/// One control step as seen by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// Normalized observation.
    pub observation: Vec<f64>,
    /// Pre-clamp action sample.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// The episode terminated; no future value.
    pub done: bool,
    /// The episode was cut short; `bootstrap` stands in for the future.
    pub cut: bool,
    pub bootstrap: f64,
}

/// Per-environment transition sequences stored back to back.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    /// Length of each environment's sequence, in environment order.
    pub segments: Vec<usize>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Raw observations, for updating the normalizer.
    pub raw_observations: Vec<Vec<f64>>,
    pub episodes: usize,
    pub failures: usize,
    pub diverged: usize,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn mean_reward(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.transitions.iter().map(|t| t.reward).sum::<f64>() / self.len() as f64
    }

    /// Fills advantages and returns segment by segment.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        self.advantages.clear();
        self.returns.clear();
        let mut at = 0;
        for &n in &self.segments {
            let (a, r) = compute_gae(&self.transitions[at..at + n], gamma, lambda);
            self.advantages.extend(a);
            self.returns.extend(r);
            at += n;
        }
    }

    /// Shifts and scales advantages to zero mean and unit variance.
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt() + 1e-8;
        for a in &mut self.advantages {
            *a = (*a - mean) / std;
        }
    }
}

/// Networks and statistics used while collecting.
#[derive(Debug, Clone, Copy)]
pub struct Behaviour<'a> {
    pub actor: &'a Mlp,
    pub critic: &'a Mlp,
    pub normalizer: &'a Normalizer,
    pub sigma: f64,
}

/// RNG for one environment in one collection phase.
pub fn env_rng(seed: u64, iteration: u64, env: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(env as u64);
    rng
}

struct EnvRun {
    transitions: Vec<Transition>,
    raw: Vec<Vec<f64>>,
    episodes: usize,
    failures: usize,
    diverged: usize,
}

fn value_of(critic: &Mlp, observation: &[f64]) -> Result<f64, LearnerError> {
    Ok(critic.predict(observation)?[0])
}

fn run_env(env: &mut TrackingEnv, steps: usize, policy: Behaviour<'_>, rng: &mut ChaCha8Rng) -> Result<EnvRun, LearnerError> {
    let mut run = EnvRun {
        transitions: Vec::with_capacity(steps),
        raw: Vec::with_capacity(steps),
        episodes: 0,
        failures: 0,
        diverged: 0,
    };
    if steps == 0 {
        return Ok(run);
    }
    env.reset_random(rng)?;
    let mut raw = env.observe()?;
    for k in 0..steps {
        let observation = policy.normalizer.normalize(&raw);
        let mean = policy.actor.predict(&observation)?;
        let value = value_of(policy.critic, &observation)?;
        let (action, clamped, log_prob) = sample_action(&mean, policy.sigma, rng);
        let outcome = env.step(&clamped)?;
        let last = k + 1 == steps;
        let mut cut = outcome.cut || (last && !outcome.done);
        let mut bootstrap = 0.0;
        let next_raw = if outcome.done { None } else { Some(env.observe()?) };
        if let (true, Some(next)) = (cut, &next_raw) {
            bootstrap = value_of(policy.critic, &policy.normalizer.normalize(next))?;
        }
        if outcome.done {
            cut = false;
        }
        if outcome.diverged {
            log::warn!("simulation diverged in clip {:?}; resetting", env.data().clip.task);
            run.diverged += 1;
        }
        run.raw.push(std::mem::take(&mut raw));
        run.transitions.push(Transition {
            observation,
            action,
            log_prob,
            reward: outcome.reward.total,
            value,
            done: outcome.done,
            cut,
            bootstrap,
        });
        if outcome.done || outcome.cut {
            run.episodes += 1;
            run.failures += usize::from(outcome.done);
            if !last {
                env.reset_random(rng)?;
                raw = env.observe()?;
            }
        } else if let Some(next) = next_raw {
            raw = next;
        }
    }
    Ok(run)
}

/// Steps every environment from a fresh random reset. `target` transitions are split
/// round-robin, so the first `target % envs` environments take one extra step.
pub fn collect_rollouts(
    envs: &mut [TrackingEnv],
    policy: Behaviour<'_>,
    target: usize,
    seed: u64,
    iteration: u64,
) -> Result<RolloutBatch, LearnerError> {
    if envs.is_empty() {
        return Err(LearnerError::InvalidConfig("empty environment pool".into()));
    }
    let n = envs.len();
    let runs: Vec<Result<EnvRun, LearnerError>> = envs
        .par_iter_mut()
        .enumerate()
        .map(|(i, env)| {
            let steps = target / n + usize::from(i < target % n);
            let mut rng = env_rng(seed, iteration, i);
            run_env(env, steps, policy, &mut rng)
        })
        .collect();
    let mut batch = RolloutBatch::default();
    for run in runs {
        let run = run?;
        batch.segments.push(run.transitions.len());
        batch.transitions.extend(run.transitions);
        batch.raw_observations.extend(run.raw);
        batch.episodes += run.episodes;
        batch.failures += run.failures;
        batch.diverged += run.diverged;
    }
    Ok(batch)
}
