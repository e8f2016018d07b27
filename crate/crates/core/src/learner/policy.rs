use rand::Rng;
use rand_distr::StandardNormal;

use super::{LearnerError, Mlp};
use crate::charscene::CharacterSpec;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Running per-entry mean and variance of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

/// Normalized entries are clipped to this magnitude.
pub const NORMALIZER_CLIP: f64 = 10.0;

impl Normalizer {
    pub fn new(n: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; n],
            m2: vec![0.0; n],
        }
    }

    /// Merges a batch of samples, in order.
    pub fn update<'a>(&mut self, samples: impl IntoIterator<Item = &'a [f64]>) {
        let n = self.mean.len();
        let mut count = 0.0;
        let mut mean = vec![0.0; n];
        let mut m2 = vec![0.0; n];
        for x in samples {
            count += 1.0;
            for i in 0..n {
                let d = x[i] - mean[i];
                mean[i] += d / count;
                m2[i] += d * (x[i] - mean[i]);
            }
        }
        if count == 0.0 {
            return;
        }
        let total = self.count + count;
        for i in 0..n {
            let d = mean[i] - self.mean[i];
            self.mean[i] += d * count / total;
            self.m2[i] += m2[i] + d * d * self.count * count / total;
        }
        self.count = total;
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2[i] / self.count + 1e-8).sqrt()
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| ((v - self.mean[i]) / self.std(i)).clamp(-NORMALIZER_CLIP, NORMALIZER_CLIP))
            .collect()
    }
}

/// Log density of a diagonal Gaussian with shared standard deviation.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], sigma: f64) -> f64 {
    let n = x.len() as f64;
    let q: f64 = x.iter().zip(mean).map(|(a, m)| ((a - m) / sigma).powi(2)).sum();
    -0.5 * q - n * sigma.ln() - 0.5 * n * LN_2PI
}

/// Gaussian sample around `mean`: the raw sample, its clamped action and the raw log density.
pub fn sample_action<R: Rng + ?Sized>(mean: &[f64], sigma: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>, f64) {
    let raw: Vec<f64> = mean
        .iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            m + sigma * z
        })
        .collect();
    let clamped = raw.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
    let logp = gaussian_log_prob(&raw, mean, sigma);
    (raw, clamped, logp)
}

/// Samples an action for a normalized observation.
pub fn policy_sample<R: Rng + ?Sized>(actor: &Mlp, observation: &[f64], sigma: f64, rng: &mut R) -> Result<(Vec<f64>, f64), LearnerError> {
    let mean = actor.predict(observation)?;
    let (_, clamped, logp) = sample_action(&mean, sigma, rng);
    Ok((clamped, logp))
}

pub fn action_to_torques(action: &[f64], spec: &CharacterSpec) -> Result<Vec<f64>, LearnerError> {
    if action.len() != spec.joints.len() {
        return Err(LearnerError::DimensionMismatch {
            what: "action",
            got: action.len(),
            expected: spec.joints.len(),
        });
    }
    Ok(action.iter().zip(&spec.joints).map(|(a, j)| a * j.max_torque).collect())
}

/// Deterministic controller used for evaluation and replay.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub actor: Mlp,
    pub normalizer: Normalizer,
}

impl Policy {
    pub fn mean_action(&self, observation: &[f64]) -> Result<Vec<f64>, LearnerError> {
        let mean = self.actor.predict(&self.normalizer.normalize(observation))?;
        Ok(mean.into_iter().map(|a| a.clamp(-1.0, 1.0)).collect())
    }
}
