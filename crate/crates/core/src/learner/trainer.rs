use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    collect_rollouts, env_rng, ppo_update, Adam, Behaviour, Checkpoint, ClipData, EnvConfig, LearnerError, Mlp, Normalizer, Policy,
    PpoConfig, TrackingEnv, UpdateStats,
};
use crate::charscene::CharacterSpec;
use crate::motionlib::ReferenceClip;
use crate::observation::ObservationLayout;

/// Scale of the actor's initial output layer, so early actions stay near zero.
const ACTOR_OUTPUT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    pub mean_reward: f64,
    pub episodes: usize,
    pub failures: usize,
    pub diverged: usize,
    pub update: UpdateStats,
    /// The update hit a non-finite gradient and was discarded.
    pub skipped: bool,
}

/// PPO training state over a pool of tracking environments.
pub struct Trainer {
    pub config: PpoConfig,
    pub seed: u64,
    pub iteration: u64,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub normalizer: Normalizer,
    pub envs: Vec<TrackingEnv>,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend(hidden);
    s.push(output);
    s
}

impl Trainer {
    pub fn new(spec: CharacterSpec, clips: Vec<ReferenceClip>, env_config: EnvConfig, config: PpoConfig, seed: u64) -> Result<Self, LearnerError> {
        config.validate()?;
        let obs = ObservationLayout::new(&spec, &env_config.observation).len();
        let act = spec.joints.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::init(&layer_sizes(obs, &config.actor_hidden, act), ACTOR_OUTPUT_SCALE, &mut rng);
        let critic = Mlp::init(&layer_sizes(obs, &config.critic_hidden, 1), 1.0, &mut rng);
        let data = clips.into_iter().map(|c| ClipData::new(c, &spec)).collect::<Result<Vec<_>, _>>()?;
        let (spec, data, env_config) = (Arc::new(spec), Arc::new(data), Arc::new(env_config));
        let envs = (0..config.envs)
            .map(|_| TrackingEnv::new(spec.clone(), data.clone(), env_config.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            seed,
            iteration: 0,
            actor_opt: Adam::new(actor.params.len()),
            critic_opt: Adam::new(critic.params.len()),
            normalizer: Normalizer::new(obs),
            actor,
            critic,
            envs,
            config,
        })
    }

    /// Replaces the learned state with a checkpoint's.
    pub fn restore(&mut self, c: Checkpoint) -> Result<(), LearnerError> {
        if c.actor.sizes != self.actor.sizes || c.critic.sizes != self.critic.sizes {
            return Err(LearnerError::InvalidConfig("checkpoint network sizes differ from the configuration".into()));
        }
        self.seed = c.seed;
        self.iteration = c.iteration;
        self.actor = c.actor;
        self.critic = c.critic;
        self.actor_opt = c.actor_opt;
        self.critic_opt = c.critic_opt;
        self.normalizer = c.normalizer;
        Ok(())
    }

    pub fn checkpoint(&self, config_hash: &str) -> Checkpoint {
        Checkpoint {
            config_hash: config_hash.to_string(),
            iteration: self.iteration,
            seed: self.seed,
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
            normalizer: self.normalizer.clone(),
        }
    }

    pub fn policy(&self) -> Policy {
        Policy {
            actor: self.actor.clone(),
            normalizer: self.normalizer.clone(),
        }
    }

    /// One collection phase followed by one PPO update.
    pub fn iterate(&mut self) -> Result<IterationStats, LearnerError> {
        let behaviour = Behaviour {
            actor: &self.actor,
            critic: &self.critic,
            normalizer: &self.normalizer,
            sigma: self.config.sigma,
        };
        let mut batch = collect_rollouts(&mut self.envs, behaviour, self.config.transitions, self.seed, self.iteration)?;
        batch.compute_advantages(self.config.gamma, self.config.lambda);
        batch.normalize_advantages();
        let mut rng = env_rng(self.seed, self.iteration, usize::MAX);
        let mut stats = IterationStats {
            iteration: self.iteration,
            mean_reward: batch.mean_reward(),
            episodes: batch.episodes,
            failures: batch.failures,
            diverged: batch.diverged,
            ..Default::default()
        };
        match ppo_update(
            &mut self.actor,
            &mut self.critic,
            &mut self.actor_opt,
            &mut self.critic_opt,
            &batch,
            &self.config,
            &mut rng,
        ) {
            Ok(u) => stats.update = u,
            Err(LearnerError::NonFiniteGradient) => {
                log::warn!("iteration {}: non-finite gradient, update discarded", self.iteration);
                stats.skipped = true;
            }
            Err(e) => return Err(e),
        }
        self.normalizer.update(batch.raw_observations.iter().map(|o| o.as_slice()));
        self.iteration += 1;
        Ok(stats)
    }
}
