use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ellm_core::harness::analysis::read_transcript;
use ellm_core::harness::report::render_chart;
use ellm_core::harness::{
    analyze_suggestions, emit_reports, evaluate, pretrain, read_episode_csv, transfer, ChartSeries, EnvKind,
    Method, RunArtifacts, RunConfig, TransferMode,
};
use ellm_core::llm_client::{merge_caches, ResponseCache};

#[derive(Parser)]
#[command(name = "ellm", version, about = "Language-model guided exploration pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain with an intrinsic reward.
    Pretrain(RunArgs),
    /// Train on a downstream task from pretrained weights.
    Transfer {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "finetune")]
        mode: ModeArg,
        #[arg(long)]
        task: Option<String>,
        /// Checkpoint file; `{seed}` expands to each seed.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        transfer_steps: Option<u64>,
        #[arg(long)]
        transfer_lr: Option<f64>,
    },
    /// Evaluate a checkpoint over trials of episodes.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Categorise suggested and rewarded goals of a transcript.
    Analyze {
        transcript: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Inspect or merge response caches.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Chart one metric from run directories.
    Plot {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "unique_achievements")]
        metric: String,
        #[arg(long, default_value = "chart.svg")]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long)]
        title: Option<String>,
    },
}

#[derive(Subcommand)]
enum CacheAction {
    Stats { path: PathBuf },
    Merge {
        #[arg(long)]
        output: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvArg {
    Gridcraft,
    Housegrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Finetune,
    Guided,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    env: Option<EnvArg>,
    /// ellm, oracle, novelty, uniform, apt, rnd, noveld or ellm_no_novelty.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    goal_conditioned: Option<bool>,
    #[arg(long)]
    caption_conditioned: Option<bool>,
    #[arg(long)]
    llm_cache: Option<PathBuf>,
    /// Serve only cached responses; misses abort.
    #[arg(long)]
    replay: bool,
    #[arg(long)]
    match_accuracy: Option<f64>,
    #[arg(long)]
    mismatch_accuracy: Option<f64>,
    #[arg(long)]
    noise_matrix: Option<PathBuf>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 3)]
    n_step: usize,
    /// Defaults to 64 (gridcraft) or 256 (housegrid).
    #[arg(long)]
    batch_size: Option<usize>,
    /// Defaults to 6.25e-5 (gridcraft) or 1e-4 (housegrid).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    target_update_interval: u64,
    /// Defaults to 0.01 (gridcraft) or 0.1 (housegrid).
    #[arg(long)]
    eps_min: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    eps_decay_fraction: f64,
    #[arg(long, default_value_t = 4)]
    update_every: u64,
    #[arg(long, default_value_t = 5000)]
    seed_frames: u64,
    #[arg(long, default_value_t = 4)]
    frame_stack: usize,
    #[arg(long, default_value_t = ellm_core::harness::DESK_HIDDEN)]
    hidden: usize,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => {
                let env = match self.env.unwrap_or(EnvArg::Gridcraft) {
                    EnvArg::Gridcraft => EnvKind::Gridcraft,
                    EnvArg::Housegrid => EnvKind::Housegrid,
                };
                let method = Method::parse(self.method.as_deref().unwrap_or("ellm"))?;
                let mut cfg = RunConfig::new(env, method);
                let mut agent = cfg.agent_config();
                agent.gamma = self.gamma;
                agent.n_step = self.n_step;
                agent.target_update_interval = self.target_update_interval;
                agent.eps_decay_fraction = self.eps_decay_fraction;
                agent.update_every = self.update_every;
                agent.seed_frames = self.seed_frames;
                agent.frame_stack = self.frame_stack;
                agent.hidden = self.hidden;
                cfg.agent = Some(agent);
                cfg
            }
        };
        if self.config.is_some() && (self.env.is_some() || self.method.is_some()) {
            bail!("--env and --method cannot override a config file");
        }
        let mut agent = cfg.agent_config();
        if let Some(v) = self.batch_size {
            agent.batch_size = v;
        }
        if let Some(v) = self.lr {
            agent.lr = v;
        }
        if let Some(v) = self.eps_min {
            agent.eps_min = v;
        }
        cfg.agent = Some(agent);
        if let Some(v) = &self.name {
            cfg.name = v.clone();
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out_dir = Some(v.clone());
        }
        if self.threshold.is_some() {
            cfg.threshold = self.threshold;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if self.goal_conditioned.is_some() {
            cfg.goal_conditioned = self.goal_conditioned;
        }
        if let Some(v) = self.caption_conditioned {
            cfg.caption_conditioned = v;
        }
        if let Some(v) = &self.llm_cache {
            cfg.llm.cache = Some(v.clone());
        }
        if self.replay {
            cfg.llm.cache_mode = ellm_core::llm_client::CacheMode::Replay;
        }
        if let Some(v) = self.match_accuracy {
            cfg.llm.match_accuracy = v;
        }
        if let Some(v) = self.mismatch_accuracy {
            cfg.llm.mismatch_accuracy = v;
        }
        if let Some(v) = &self.noise_matrix {
            cfg.noise.matrix = Some(v.clone());
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = v;
        }
        if cfg.out_dir.is_none() {
            cfg.out_dir = Some(PathBuf::from("runs").join(&cfg.name));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report(art: &RunArtifacts) -> Result<()> {
    let dir = art.config.out_dir.clone().expect("resolved config has an output dir");
    let written = emit_reports(art, &dir)?;
    for s in &art.seeds {
        let n = s.episodes.len();
        let mean = |f: &dyn Fn(&ellm_core::harness::EpisodeMetrics) -> f64| {
            s.episodes.iter().map(f).sum::<f64>() / n.max(1) as f64
        };
        println!(
            "seed {}: {n} episodes, {} updates, {} model calls, mean unique achievements {:.2}, mean extrinsic return {:.3}",
            s.seed,
            s.updates,
            s.network_calls,
            mean(&|e| e.unique_achievements as f64),
            mean(&|e| e.extrinsic_return),
        );
    }
    println!("wrote {} files under {}", written.len(), dir.display());
    Ok(())
}

fn plot(runs: &[PathBuf], metric: &str, out: &Path, bins: usize, title: Option<&str>) -> Result<()> {
    let mut series = Vec::new();
    for dir in runs {
        let csv = if dir.is_dir() { dir.join("episodes.csv") } else { dir.clone() };
        let episodes = read_episode_csv(&csv)?;
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| csv.display().to_string());
        series.push(ChartSeries::from_episodes(&label, &episodes, metric));
    }
    let svg = render_chart(title.unwrap_or(metric), metric, &series, bins);
    std::fs::write(out, svg).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Pretrain(args) => {
            let cfg = args.resolve()?;
            report(&pretrain(&cfg)?)?;
        }
        Command::Transfer {
            run,
            mode,
            task,
            checkpoint,
            transfer_steps,
            transfer_lr,
        } => {
            let mut cfg = run.resolve()?;
            cfg.transfer.mode = match mode {
                ModeArg::Finetune => TransferMode::Finetune,
                ModeArg::Guided => TransferMode::Guided,
            };
            if let Some(t) = task {
                cfg.transfer.task = t;
            }
            if checkpoint.is_some() {
                cfg.transfer.checkpoint = checkpoint;
            }
            if let Some(s) = transfer_steps {
                cfg.transfer.steps = s;
            }
            if let Some(lr) = transfer_lr {
                cfg.transfer.lr = lr;
            }
            cfg.validate()?;
            report(&transfer(&cfg)?)?;
        }
        Command::Eval {
            run,
            checkpoint,
            episodes,
            trials,
        } => {
            let mut cfg = run.resolve()?;
            if let Some(e) = episodes {
                cfg.eval.episodes = e;
            }
            if let Some(t) = trials {
                cfg.eval.trials = t;
            }
            let s = evaluate(&cfg, &checkpoint)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Analyze { transcript, json } => {
            let entries = read_transcript(&transcript)?;
            let a = analyze_suggestions(&entries);
            if json {
                println!("{}", serde_json::to_string_pretty(&a)?);
            } else {
                print!("{}", a.table());
            }
        }
        Command::Cache { action } => match action {
            CacheAction::Stats { path } => {
                let cache = ResponseCache::open(&path)?;
                println!("{}", serde_json::to_string_pretty(&cache.stats())?);
            }
            CacheAction::Merge { output, inputs } => {
                let n = merge_caches(&inputs, &output)?;
                println!("merged {n} entries into {}", output.display());
            }
        },
        Command::Plot {
            runs,
            metric,
            out,
            bins,
            title,
        } => plot(&runs, &metric, &out, bins, title.as_deref())?,
    }
    Ok(())
}
