use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use simtrack::harness::{
    cmd_eval, cmd_gendata, cmd_replay, cmd_train, describe_observation, latest_checkpoint, Ablations, ClipSet, ExperimentConfig,
    generated_clip, HarnessError,
};
use simtrack::motionlib::load_clip;

#[derive(Parser)]
#[command(name = "simtrack", version, about = "Physics-based sparse-sensor motion tracking: data, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate reference clips and an index file.
    Gendata(GendataArgs),
    /// Train a tracking policy.
    Train(TrainArgs),
    /// Evaluate a checkpoint from every start frame of every clip.
    Eval(EvalArgs),
    /// Roll out one clip and dump per-step states as CSV.
    Replay(ReplayArgs),
    /// Print the observation layout and its hashes.
    DescribeObservation(ConfigArgs),
}

#[derive(Args)]
struct AblationArgs {
    /// Zero the contact reward weight.
    #[arg(long)]
    no_contact_reward: bool,
    /// Drop the height profile from the observation.
    #[arg(long)]
    no_scene_obs: bool,
    /// Keep every scene at its nominal placement during training.
    #[arg(long)]
    no_randomization: bool,
    /// Observe past and present sensor samples only.
    #[arg(long)]
    no_future: bool,
    /// Observe the headset only.
    #[arg(long)]
    headset_only: bool,
}

impl AblationArgs {
    fn flags(&self) -> Ablations {
        Ablations {
            no_scene_obs: self.no_scene_obs,
            no_contact_reward: self.no_contact_reward,
            no_randomization: self.no_randomization,
            no_future: self.no_future,
            headset_only: self.headset_only,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override the global seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    ablation: AblationArgs,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        config.ablation.merge(self.ablation.flags());
        Ok(config)
    }
}

#[derive(Args)]
struct GendataArgs {
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Comma-separated task tags, e.g. `stand-idle,sit-on-object(0.45)`.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    /// Comma-separated clip seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Clip duration, s.
    #[arg(long)]
    duration: Option<f64>,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Run directory; defaults to the config's, then $SIMTRACK_OUT/<name>, then runs/<name>.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint; defaults to the run directory's latest.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Report CSV; defaults to <run dir>/eval/report.csv.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Optional per-step CSV dump.
    #[arg(long)]
    steps: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Clip file to replay.
    #[arg(long, conflicts_with = "task")]
    clip: Option<PathBuf>,
    /// Task tag of a generated clip to replay.
    #[arg(long)]
    task: Option<String>,
    /// Seed of the generated clip.
    #[arg(long, default_value_t = 0)]
    clip_seed: u64,
    /// Duration of the generated clip, s.
    #[arg(long, default_value_t = 8.0)]
    duration: f64,
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, short)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gendata(a) => {
            let mut set = match &a.config {
                Some(path) => ExperimentConfig::load(path)?.clips,
                None => ClipSet::default(),
            };
            if !a.tasks.is_empty() {
                set.tasks = a.tasks;
            }
            if !a.seeds.is_empty() {
                set.seeds = a.seeds;
            }
            if let Some(d) = a.duration {
                set.duration = d;
            }
            let paths = cmd_gendata(&set, &a.out)?;
            println!("wrote {} clips to {}", paths.len(), a.out.display());
        }
        Command::Train(a) => {
            let mut config = a.config.load()?;
            if let Some(out) = a.out {
                config.output = Some(out);
            }
            if let Some(n) = a.iterations {
                config.train.iterations = n;
            }
            let outcome = cmd_train(&config, a.resume.as_deref())?;
            println!("trained {} iterations into {}", outcome.stats.len(), outcome.dir.display());
        }
        Command::Eval(a) => {
            let config = a.config.load()?;
            let dir = config.run_dir();
            let checkpoint = a.checkpoint.unwrap_or_else(|| latest_checkpoint(&dir));
            let report = a.report.unwrap_or_else(|| dir.join("eval").join("report.csv"));
            let outcome = cmd_eval(&config, &checkpoint, &report, a.steps.as_deref())?;
            print!("{}", outcome.report.to_csv());
        }
        Command::Replay(a) => {
            let config = a.config.load()?;
            let clip = match (&a.clip, &a.task) {
                (Some(path), _) => load_clip(path).map_err(HarnessError::from)?,
                (None, Some(tag)) => generated_clip(tag, a.clip_seed, a.duration)?,
                (None, None) => return Err(HarnessError::Config("replay needs --clip or --task".into()).into()),
            };
            let rows = cmd_replay(&config, &a.checkpoint, clip, a.start, &a.out)?;
            println!("wrote {rows} steps to {}", a.out.display());
        }
        Command::DescribeObservation(a) => {
            let config = a.load().context("loading configuration")?;
            print!("{}", describe_observation(&config));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.chain().find_map(|c| c.downcast_ref::<HarnessError>()).map_or("other", HarnessError::kind);
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{kind}]: {message}");
            ExitCode::FAILURE
        }
    }
}
