//! Experiment configuration, run directories and the gendata/train/eval/replay commands.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::charscene::{CharacterSpec, RandomizationParams};
use crate::evalmetrics::{aggregate, episode_steps_csv, evaluate_all_frames, run_episode, MetricsError, MetricsReport};
use crate::learner::{
    load_checkpoint, save_checkpoint, ClipData, EnvConfig, IterationStats, LearnerError, Policy, PpoConfig, TrackingEnv, Trainer,
};
use crate::motionlib::{generate_clip, load_clip, save_clip, sensors_from_world, MotionError, ReferenceClip, Task};
use crate::observation::{HeightGrid, ObservationConfig, ObservationError, ObservationLayout, WindowParams};
use crate::reward::RewardWeights;

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "SIMTRACK_OUT";
pub const LOCK_FILE: &str = "run.lock";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const INDEX_FILE: &str = "index.toml";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Consecutive discarded updates after which training aborts.
pub const MAX_NON_FINITE_ITERATIONS: usize = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("invalid task {0:?}")]
    InvalidTask(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("run directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error("{0}")]
    Range(String),
    #[error("training aborted: {0}")]
    Training(String),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
}

impl HarnessError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::InvalidTask(_) => "invalid-task",
            Self::Io { .. } => "io",
            Self::Locked(_) => "locked",
            Self::Range(_) => "range",
            Self::Training(_) => "training",
            Self::Motion(MotionError::InvalidTask(_)) => "invalid-task",
            Self::Motion(MotionError::Io(_)) => "io",
            Self::Motion(_) => "format",
            Self::Learner(LearnerError::ConfigMismatch { .. }) => "config-mismatch",
            Self::Learner(LearnerError::Io(_)) => "io",
            Self::Learner(LearnerError::Format(_)) => "format",
            Self::Learner(_) => "learner",
            Self::Metrics(_) => "metrics",
            Self::Observation(_) => "observation",
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacterChoice {
    pub mirrored: bool,
}

/// Reference clips: every (task, seed) pair generated in memory, plus clip files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipSet {
    pub tasks: Vec<String>,
    pub seeds: Vec<u64>,
    pub duration: f64,
    pub files: Vec<PathBuf>,
}

impl Default for ClipSet {
    fn default() -> Self {
        Self {
            tasks: vec!["stand-idle".into()],
            seeds: vec![0, 1],
            duration: 8.0,
            files: Vec::new(),
        }
    }
}

/// Switches that remove one input or reward term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_scene_obs: bool,
    pub no_contact_reward: bool,
    pub no_randomization: bool,
    pub no_future: bool,
    pub headset_only: bool,
}

impl Ablations {
    /// Sets every flag that is set in `other`.
    pub fn merge(&mut self, other: Ablations) {
        self.no_scene_obs |= other.no_scene_obs;
        self.no_contact_reward |= other.no_contact_reward;
        self.no_randomization |= other.no_randomization;
        self.no_future |= other.no_future;
        self.headset_only |= other.headset_only;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSchedule {
    pub iterations: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            iterations: 300,
            checkpoint_every: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Evaluation clips; the training clips when absent.
    pub clips: Option<ClipSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    /// Run directory. Not part of the hash.
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
    pub character: CharacterChoice,
    pub clips: ClipSet,
    pub eval: EvalSettings,
    pub train: TrainSchedule,
    pub ablation: Ablations,
    pub window: WindowParams,
    pub grid: HeightGrid,
    pub randomization: RandomizationParams,
    pub reward: RewardWeights,
    pub ppo: PpoConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            seed: 0,
            output: None,
            character: CharacterChoice::default(),
            clips: ClipSet::default(),
            eval: EvalSettings::default(),
            train: TrainSchedule::default(),
            ablation: Ablations::default(),
            window: WindowParams::default(),
            grid: HeightGrid::default(),
            randomization: RandomizationParams::default(),
            reward: RewardWeights::default(),
            ppo: PpoConfig::default(),
        }
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io(path))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string().replace('\n', " ")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.ppo.validate()?;
        self.window.validate()?;
        if !self.reward.is_valid() {
            return Err(HarnessError::Config("reward weights must be finite and non-negative".into()));
        }
        for set in std::iter::once(&self.clips).chain(self.eval.clips.as_ref()) {
            for t in &set.tasks {
                t.parse::<Task>().map_err(|_| HarnessError::InvalidTask(t.clone()))?;
            }
            for f in &set.files {
                if !f.is_file() {
                    return Err(HarnessError::Config(format!("clip file {} does not exist", f.display())));
                }
            }
            if set.files.is_empty() && (set.tasks.is_empty() || set.seeds.is_empty()) {
                return Err(HarnessError::Config("clip set is empty".into()));
            }
        }
        if self.train.checkpoint_every == 0 {
            return Err(HarnessError::Config("checkpoint_every must be positive".into()));
        }
        Ok(())
    }

    /// Hash of every field that affects results.
    pub fn config_hash(&self) -> String {
        sha256_hex(&self.to_toml())
    }

    pub fn character(&self) -> CharacterSpec {
        let spec = CharacterSpec::standard();
        if self.character.mirrored {
            spec.mirrored()
        } else {
            spec
        }
    }

    pub fn observation(&self) -> ObservationConfig {
        let mut window = self.window;
        if self.ablation.no_future {
            window.future = 0.0;
        }
        ObservationConfig {
            window,
            grid: self.grid.clone(),
            scene: !self.ablation.no_scene_obs,
            hand: !self.ablation.headset_only,
        }
    }

    pub fn weights(&self) -> RewardWeights {
        let mut w = self.reward;
        if self.ablation.no_contact_reward {
            w.w_c = 0.0;
        }
        w
    }

    pub fn env_config(&self, training: bool) -> EnvConfig {
        EnvConfig {
            observation: self.observation(),
            weights: self.weights(),
            randomization: (training && !self.ablation.no_randomization).then_some(self.randomization),
            ..EnvConfig::default()
        }
    }

    pub fn layout(&self) -> ObservationLayout {
        ObservationLayout::new(&self.character(), &self.observation())
    }

    /// Hash of everything a checkpoint's networks depend on: the observation layout,
    /// the action size and the network shapes.
    pub fn model_hash(&self) -> String {
        let spec = self.character();
        let obs = self.observation();
        sha256_hex(&format!(
            "{}\nactions {}\nactor {:?}\ncritic {:?}\n",
            ObservationLayout::new(&spec, &obs).hash(&obs),
            spec.joints.len(),
            self.ppo.actor_hidden,
            self.ppo.critic_hidden
        ))
    }

    /// Output directory: the config's, else `$SIMTRACK_OUT/<name>`, else `runs/<name>`.
    pub fn run_dir(&self) -> PathBuf {
        if let Some(o) = &self.output {
            return o.clone();
        }
        let root = std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        root.join(&self.name)
    }
}

fn clip_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Clip generated for a task tag and seed.
pub fn generated_clip(tag: &str, seed: u64, duration: f64) -> Result<ReferenceClip, HarnessError> {
    let task: Task = tag.parse().map_err(|_| HarnessError::InvalidTask(tag.to_string()))?;
    Ok(generate_clip(task, duration, &mut clip_rng(seed))?)
}

/// Clips of a set, generated tasks first in (task, seed) order, then files.
pub fn resolve_clips(set: &ClipSet) -> Result<Vec<ReferenceClip>, HarnessError> {
    let mut clips = Vec::new();
    for t in &set.tasks {
        for &seed in &set.seeds {
            clips.push(generated_clip(t, seed, set.duration)?);
        }
    }
    for f in &set.files {
        clips.push(load_clip(f)?);
    }
    Ok(clips)
}

/// Exclusive ownership of a run directory for the lifetime of the value.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id()).map_err(io(&path))?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(HarnessError::Locked(dir.to_path_buf())),
            Err(e) => Err(io(&path)(e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    task: String,
    seed: u64,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    clips: Vec<IndexEntry>,
}

/// Writes one clip file per (task, seed) and an index listing them.
pub fn cmd_gendata(set: &ClipSet, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let tasks = set
        .tasks
        .iter()
        .map(|t| t.parse::<Task>().map_err(|_| HarnessError::InvalidTask(t.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out).map_err(io(out))?;
    let mut index = Index { clips: Vec::new() };
    let mut paths = Vec::new();
    for task in tasks {
        for &seed in &set.seeds {
            let clip = generate_clip(task, set.duration, &mut clip_rng(seed))?;
            let file = format!("{}_s{seed}.clip", task.to_string().replace(['(', ')'], "_").trim_end_matches('_'));
            let path = out.join(&file);
            save_clip(&clip, &path)?;
            index.clips.push(IndexEntry {
                task: task.to_string(),
                seed,
                file,
            });
            paths.push(path);
        }
    }
    let index_path = out.join(INDEX_FILE);
    fs::write(&index_path, toml::to_string(&index).expect("index serializes")).map_err(io(&index_path))?;
    Ok(paths)
}

#[derive(Debug, Serialize)]
struct ManifestHeader<'a> {
    code_version: &'a str,
    config_hash: String,
    model_hash: String,
    seed: u64,
    observation_length: usize,
    /// Reward weights after ablations.
    effective_reward: RewardWeights,
    config: &'a ExperimentConfig,
}

#[derive(Debug, Serialize)]
struct IterationRow {
    iteration: u64,
    mean_reward: f64,
    episodes: usize,
    failures: usize,
    diverged: usize,
    policy_loss: f64,
    value_loss: f64,
    kl: f64,
    clip_fraction: f64,
    skipped: bool,
}

impl From<&IterationStats> for IterationRow {
    fn from(s: &IterationStats) -> Self {
        Self {
            iteration: s.iteration,
            mean_reward: s.mean_reward,
            episodes: s.episodes,
            failures: s.failures,
            diverged: s.diverged,
            policy_loss: s.update.policy_loss,
            value_loss: s.update.value_loss,
            kl: s.update.kl,
            clip_fraction: s.update.clip_fraction,
            skipped: s.skipped,
        }
    }
}

fn manifest_row(s: &IterationStats) -> String {
    #[derive(Serialize)]
    struct Wrap<'a> {
        iterations: [&'a IterationRow; 1],
    }
    let row = IterationRow::from(s);
    toml::to_string(&Wrap { iterations: [&row] }).expect("row serializes")
}

pub fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("iter_{iteration:06}.ckpt"))
}

pub fn latest_checkpoint(dir: &Path) -> PathBuf {
    dir.join("checkpoints").join("latest.ckpt")
}

/// Summary of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub stats: Vec<IterationStats>,
}

/// Trains for the configured number of iterations, optionally continuing from a
/// checkpoint. Writes the manifest, timings and checkpoints into the run directory.
pub fn cmd_train(config: &ExperimentConfig, resume: Option<&Path>) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let dir = config.run_dir();
    let _lock = RunLock::acquire(&dir)?;
    fs::create_dir_all(dir.join("checkpoints")).map_err(io(&dir))?;
    let model_hash = config.model_hash();
    let clips = resolve_clips(&config.clips)?;
    let mut trainer = Trainer::new(config.character(), clips, config.env_config(true), config.ppo.clone(), config.seed)?;
    if let Some(path) = resume {
        trainer.restore(load_checkpoint(path, &model_hash)?)?;
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let header = ManifestHeader {
        code_version: CODE_VERSION,
        config_hash: config.config_hash(),
        model_hash: model_hash.clone(),
        seed: config.seed,
        observation_length: config.layout().len(),
        effective_reward: config.weights(),
        config,
    };
    let mut manifest = File::create(&manifest_path).map_err(io(&manifest_path))?;
    manifest
        .write_all(toml::to_string(&header).expect("manifest header serializes").as_bytes())
        .map_err(io(&manifest_path))?;
    let timings_path = dir.join(TIMINGS_FILE);
    let mut timings = File::create(&timings_path).map_err(io(&timings_path))?;
    writeln!(timings, "iteration,seconds").map_err(io(&timings_path))?;

    let mut stats = Vec::new();
    let mut non_finite = 0;
    let total = config.train.iterations as u64;
    while trainer.iteration < total {
        let started = Instant::now();
        let s = trainer.iterate()?;
        non_finite = if s.skipped { non_finite + 1 } else { 0 };
        manifest.write_all(b"\n").map_err(io(&manifest_path))?;
        manifest.write_all(manifest_row(&s).as_bytes()).map_err(io(&manifest_path))?;
        manifest.flush().map_err(io(&manifest_path))?;
        writeln!(timings, "{},{:.3}", s.iteration, started.elapsed().as_secs_f64()).map_err(io(&timings_path))?;
        log::info!(
            "iteration {} reward {:.4} episodes {} failures {} kl {:.5} clip {:.3}",
            s.iteration,
            s.mean_reward,
            s.episodes,
            s.failures,
            s.update.kl,
            s.update.clip_fraction
        );
        stats.push(s);
        if non_finite >= MAX_NON_FINITE_ITERATIONS {
            return Err(HarnessError::Training(format!(
                "non-finite gradients in {MAX_NON_FINITE_ITERATIONS} consecutive iterations ending at {}",
                s.iteration
            )));
        }
        if trainer.iteration % config.train.checkpoint_every as u64 == 0 || trainer.iteration == total {
            let ckpt = trainer.checkpoint(&model_hash);
            save_checkpoint(&ckpt, &checkpoint_path(&dir, trainer.iteration))?;
            save_checkpoint(&ckpt, &latest_checkpoint(&dir))?;
        }
    }
    Ok(TrainOutcome { dir, stats })
}

/// Loads a policy, refusing checkpoints whose model hash differs from the config's.
pub fn load_policy(config: &ExperimentConfig, checkpoint: &Path) -> Result<Policy, HarnessError> {
    let c = load_checkpoint(checkpoint, &config.model_hash())?;
    Ok(Policy {
        actor: c.actor,
        normalizer: c.normalizer,
    })
}

fn evaluation_env(config: &ExperimentConfig, clips: Vec<ReferenceClip>) -> Result<TrackingEnv, HarnessError> {
    let spec = config.character();
    let data = clips.into_iter().map(|c| ClipData::new(c, &spec)).collect::<Result<Vec<_>, _>>()?;
    Ok(TrackingEnv::new(Arc::new(spec), Arc::new(data), Arc::new(config.env_config(false)))?)
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub results: Vec<crate::evalmetrics::EpisodeResult>,
}

/// All-frame evaluation without scene randomization. Writes the report CSV and, when
/// `steps` is given, the per-step dump.
pub fn cmd_eval(config: &ExperimentConfig, checkpoint: &Path, report: &Path, steps: Option<&Path>) -> Result<EvalOutcome, HarnessError> {
    config.validate()?;
    let policy = load_policy(config, checkpoint)?;
    let set = config.eval.clips.as_ref().unwrap_or(&config.clips);
    let env = evaluation_env(config, resolve_clips(set)?)?;
    let results = evaluate_all_frames(&policy, &env)?;
    let metrics = aggregate(&results)?;
    if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(report, metrics.to_csv()).map_err(io(report))?;
    if let Some(path) = steps {
        fs::write(path, episode_steps_csv(&results)).map_err(io(path))?;
    }
    Ok(EvalOutcome { report: metrics, results })
}

/// Closed-loop rollout of one clip from `start`, one CSV row per control step.
pub fn cmd_replay(config: &ExperimentConfig, checkpoint: &Path, clip: ReferenceClip, start: usize, out: &Path) -> Result<usize, HarnessError> {
    let policy = load_policy(config, checkpoint)?;
    let frames = clip.frames.len();
    if start + 1 >= frames {
        return Err(HarnessError::Range(format!("start frame {start} leaves no step in a {frames}-frame clip")));
    }
    let mut env = evaluation_env(config, vec![clip])?;
    env.reset_to(0, start, &mut clip_rng(0))?;
    let spec = env.spec.clone();
    let obs_len = env.observe()?.len();
    let mut csv = String::from("step,frame,time,root_x,root_y,root_angle");
    for j in &spec.joints {
        write!(csv, ",q_{}", j.name).expect("writing to a string");
    }
    csv.push_str(",head_x,head_y,hand_x,hand_y,ref_head_x,ref_head_y,ref_hand_x,ref_hand_y");
    csv.push_str(",reward_imitation,reward_contact,reward_regularization,reward_total");
    for n in ["pelvis", "spine", "foot_l", "foot_r", "hand"] {
        write!(csv, ",contact_{n},ref_contact_{n}").expect("writing to a string");
    }
    csv.push_str(",failed");
    for k in 0..obs_len {
        write!(csv, ",obs_{k}").expect("writing to a string");
    }
    csv.push('\n');
    let mut rows = 0;
    for step in 1..frames - start {
        let observation = env.observe()?;
        let action = policy.mean_action(&observation)?;
        let o = env.step(&action)?;
        let root = &env.world.bodies[0];
        write!(csv, "{step},{},{:.6},{:.6},{:.6},{:.6}", env.frame, env.time(), root.position.x, root.position.y, root.angle)
            .expect("writing to a string");
        for j in &env.world.joints[..spec.joints.len()] {
            write!(csv, ",{:.6}", j.angle(&env.world.bodies)).expect("writing to a string");
        }
        let s = sensors_from_world(&spec, &env.world);
        write!(
            csv,
            ",{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.head_position.x,
            s.head_position.y,
            s.hand_position.x,
            s.hand_position.y,
            o.reference.head_position.x,
            o.reference.head_position.y,
            o.reference.hand_position.x,
            o.reference.hand_position.y
        )
        .expect("writing to a string");
        write!(csv, ",{:.6},{:.6},{:.6},{:.6}", o.reward.imitation, o.reward.contact, o.reward.regularization, o.reward.total)
            .expect("writing to a string");
        let reference = env.data().clip.frames[env.frame].contacts;
        for k in 0..5 {
            write!(csv, ",{},{}", u8::from(o.contacts.0[k]), u8::from(reference.0[k])).expect("writing to a string");
        }
        write!(csv, ",{}", u8::from(o.done)).expect("writing to a string");
        for v in &observation {
            write!(csv, ",{v:.6}").expect("writing to a string");
        }
        csv.push('\n');
        rows += 1;
        if o.done {
            break;
        }
    }
    fs::write(out, csv).map_err(io(out))?;
    Ok(rows)
}

/// Layout description followed by the layout and model hashes.
pub fn describe_observation(config: &ExperimentConfig) -> String {
    let obs = config.observation();
    let layout = config.layout();
    format!(
        "{}layout_hash {}\nmodel_hash {}\n",
        layout.describe(),
        layout.hash(&obs),
        config.model_hash()
    )
}

/// Episode runner exposed for callers that evaluate a single start frame.
pub fn evaluate_start(config: &ExperimentConfig, policy: &Policy, clip: ReferenceClip, start: usize) -> Result<crate::evalmetrics::EpisodeResult, HarnessError> {
    let mut env = evaluation_env(config, vec![clip])?;
    Ok(run_episode(policy, &mut env, 0, start)?)
}
