use std::sync::Arc;

use rand::Rng;

use super::{action_to_torques, LearnerError};
use crate::charscene::{build_randomized, build_world, label_contacts, pad_torques, CharacterSpec, ContactState, RandomizationParams};
use crate::motionlib::{sensors_from_world, ReferenceClip, SensorFrame};
use crate::observation::{build_observation, ObservationConfig};
use crate::reward::{check_termination, total_reward, KinematicState, RewardBreakdown, RewardWeights, Termination};
use crate::rigidbody2d::WorldState;

/// Physics step, s.
pub const PHYSICS_DT: f64 = 1.0 / 240.0;
/// Physics steps per control step.
pub const SUBSTEPS: usize = 8;

/// Settings shared by every environment of a pool.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub observation: ObservationConfig,
    pub weights: RewardWeights,
    /// `None` keeps every scene at its nominal placement.
    pub randomization: Option<RandomizationParams>,
    pub physics_dt: f64,
    pub substeps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            observation: ObservationConfig::default(),
            weights: RewardWeights::default(),
            randomization: Some(RandomizationParams::default()),
            physics_dt: PHYSICS_DT,
            substeps: SUBSTEPS,
        }
    }
}

/// A reference clip with its precomputed sensor stream and reward targets.
#[derive(Debug, Clone)]
pub struct ClipData {
    pub clip: ReferenceClip,
    pub stream: Vec<SensorFrame>,
    pub targets: Vec<KinematicState>,
}

impl ClipData {
    pub fn new(clip: ReferenceClip, spec: &CharacterSpec) -> Result<Self, LearnerError> {
        if clip.frames.len() < 2 {
            return Err(LearnerError::InvalidConfig(format!("clip {:?} has fewer than two frames", clip.task)));
        }
        let stream = clip.sensor_stream(spec);
        let targets = clip.frames.iter().map(|f| KinematicState::from_reference(f, spec)).collect();
        Ok(Self { clip, stream, targets })
    }

    pub fn frame_count(&self) -> usize {
        self.clip.frames.len()
    }
}

/// Result of one control step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    /// Tracking failed or the simulation diverged.
    pub done: bool,
    /// The clip ran out.
    pub cut: bool,
    pub diverged: bool,
    pub contacts: ContactState,
    pub sensors: SensorFrame,
    pub reference: SensorFrame,
}

/// One simulated character tracking one reference clip.
#[derive(Debug, Clone)]
pub struct TrackingEnv {
    pub spec: Arc<CharacterSpec>,
    pub clips: Arc<Vec<ClipData>>,
    pub config: Arc<EnvConfig>,
    pub clip: usize,
    pub frame: usize,
    pub world: WorldState,
    pub previous_action: Vec<f64>,
    pub episode_steps: usize,
}

impl TrackingEnv {
    /// Environment posed at frame 0 of clip 0 with the nominal scene.
    pub fn new(spec: Arc<CharacterSpec>, clips: Arc<Vec<ClipData>>, config: Arc<EnvConfig>) -> Result<Self, LearnerError> {
        let data = clips.first().ok_or_else(|| LearnerError::InvalidConfig("no reference clips".into()))?;
        let world = data.clip.world_at(&spec, &data.clip.frames[0])?;
        let joints = spec.joints.len();
        Ok(Self {
            spec,
            clips,
            config,
            clip: 0,
            frame: 0,
            world,
            previous_action: vec![0.0; joints],
            episode_steps: 0,
        })
    }

    pub fn data(&self) -> &ClipData {
        &self.clips[self.clip]
    }

    pub fn time(&self) -> f64 {
        self.data().clip.frame_time(self.frame)
    }

    /// Reference-state initialization at `frame`, with the scene randomized when enabled.
    pub fn reset_to<R: Rng + ?Sized>(&mut self, clip: usize, frame: usize, rng: &mut R) -> Result<(), LearnerError> {
        let data = &self.clips[clip];
        if frame + 1 >= data.frame_count() {
            return Err(LearnerError::InvalidConfig(format!(
                "start frame {frame} leaves no step in a {}-frame clip",
                data.frame_count()
            )));
        }
        let reference = &data.clip.frames[frame];
        let scene = data.clip.scene_at(reference);
        self.world = match &self.config.randomization {
            Some(params) => build_randomized(&self.spec, &scene, &reference.pose, params, rng)?.0,
            None => build_world(&self.spec, &scene, &reference.pose)?,
        };
        self.clip = clip;
        self.frame = frame;
        self.previous_action = vec![0.0; self.spec.joints.len()];
        self.episode_steps = 0;
        Ok(())
    }

    /// Reset at a uniformly drawn clip and start frame.
    pub fn reset_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), LearnerError> {
        let clip = rng.gen_range(0..self.clips.len());
        let frame = rng.gen_range(0..self.clips[clip].frame_count() - 1);
        self.reset_to(clip, frame, rng)
    }

    pub fn observe(&self) -> Result<Vec<f64>, LearnerError> {
        let data = self.data();
        Ok(build_observation(
            &self.world,
            &self.spec,
            &data.stream,
            data.clip.dt,
            self.time(),
            &self.config.observation,
            self.config.physics_dt,
        )?)
    }

    /// Applies a clamped action for one control step and scores the result against the next frame.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, LearnerError> {
        let torques = pad_torques(&self.world, &action_to_torques(action, &self.spec)?);
        let dt = self.config.physics_dt;
        let mut diverged = false;
        for _ in 0..self.config.substeps {
            if self.world.step_in_place(&torques, dt).is_err() {
                diverged = true;
                break;
            }
        }
        self.frame += 1;
        self.episode_steps += 1;
        let data = &self.clips[self.clip];
        let reference = data.stream[self.frame];
        let cut = self.frame + 1 >= data.frame_count();
        if diverged {
            return Ok(StepOutcome {
                reward: RewardBreakdown {
                    imitation: 0.0,
                    contact: 0.0,
                    regularization: 0.0,
                    total: 0.0,
                },
                done: true,
                cut: false,
                diverged: true,
                contacts: ContactState::default(),
                sensors: reference,
                reference,
            });
        }
        let contacts = label_contacts(&self.world, &self.spec, dt);
        let sim = KinematicState::from_world(&self.world, &self.spec);
        let reward = total_reward(
            &sim,
            &data.targets[self.frame],
            &contacts,
            &data.clip.frames[self.frame].contacts,
            action,
            &self.previous_action,
            &self.config.weights,
        )?;
        self.previous_action = action.to_vec();
        let sensors = sensors_from_world(&self.spec, &self.world);
        let done = check_termination(&sensors, &reference) == Termination::Failed;
        Ok(StepOutcome {
            reward,
            done,
            cut: cut && !done,
            diverged: false,
            contacts,
            sensors,
            reference,
        })
    }
}
