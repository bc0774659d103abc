//! Downstream-task transfer from pretrained weights: finetuning the
//! weights, or a fresh learner guided by the frozen pretrained policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::checkpoint::{self, CheckpointHeader};
use crate::agent::nn::DuelingQNetwork;
use crate::agent::{argmax, DqnAgent, InputAssembler};
use crate::env_core::{Environment, Observation};
use crate::error::{Error, Result};
use crate::gridcraft::tasks::task_goal;
use crate::reward::Embedder;
use crate::scalar::{cast_slice, Scalar};

use super::config::{stream_seed, EnvKind, Precision, RunConfig, TransferMode};
use super::eval::check_compatible;
use super::pretrain::embed_text;
use super::setup::{build_embedder, build_env};
use super::{param_hash, EpisodeMetrics, Event, RunArtifacts, SeedRun};

pub fn transfer(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    if cfg.transfer.mode == TransferMode::None {
        return Err(Error::config("transfer mode is `none`"));
    }
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        log::info!(
            "transfer ({:?}) to {} seed {seed} for {} steps",
            cfg.transfer.mode,
            cfg.transfer.task,
            cfg.transfer.steps
        );
        seeds.push(match cfg.precision {
            Precision::F32 => run_seed::<f32>(cfg, seed)?,
            Precision::F64 => run_seed::<f64>(cfg, seed)?,
        });
    }
    Ok(RunArtifacts {
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        seeds,
    })
}

/// Text given to goal-conditioned networks during transfer.
pub fn transfer_goal(env: EnvKind, task: &str) -> Option<&'static str> {
    match env {
        EnvKind::Gridcraft => task_goal(task),
        EnvKind::Housegrid => None,
    }
}

/// Builds inputs for one network layout with a fixed goal text.
struct Inputs<T: Scalar> {
    assembler: InputAssembler<T>,
    goal: Option<Vec<T>>,
}

impl<T: Scalar> Inputs<T> {
    fn new(assembler: InputAssembler<T>, goal_text: Option<&str>, embedder: &dyn Embedder<T>) -> Self {
        let goal = assembler
            .layout()
            .goal_dim
            .and(goal_text)
            .map(|g| embed_text(embedder, g));
        Inputs { assembler, goal }
    }

    fn reset(&mut self, features: &[T]) -> Result<()> {
        self.assembler.reset(features)
    }

    fn push(&mut self, features: &[T]) -> Result<()> {
        self.assembler.push(features)
    }

    fn build(&self, env: &dyn Environment, obs: &Observation, embedder: &dyn Embedder<T>) -> Result<Vec<T>> {
        let caption = self
            .assembler
            .layout()
            .caption_dim
            .map(|_| embed_text(embedder, &env.caption_state(obs)));
        self.assembler.assemble(caption.as_deref(), self.goal.as_deref())
    }
}

struct Guide<T: Scalar> {
    net: DuelingQNetwork<T>,
    inputs: Inputs<T>,
}

fn load<T: Scalar>(cfg: &RunConfig, seed: u64) -> Result<(CheckpointHeader, DuelingQNetwork<T>)> {
    let path = cfg
        .transfer
        .checkpoint_for(seed)
        .ok_or_else(|| Error::config("transfer needs a checkpoint"))?;
    checkpoint::load::<T>(&path)
}

fn run_seed<T: Scalar>(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let mut env = build_env(cfg)?;
    env.set_task(Some(&cfg.transfer.task))?;
    let embedder = build_embedder::<T>(cfg.embedder);
    let goal_text = transfer_goal(cfg.env, &cfg.transfer.task);
    let (header, net) = load::<T>(cfg, seed)?;
    check_compatible(&header, env.as_ref())?;
    let agent_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "agent"));

    let (mut agent, mut inputs, mut guide) = match cfg.transfer.mode {
        TransferMode::Finetune => {
            let mut agent = DqnAgent::from_network(header.agent.clone(), net, agent_rng);
            agent.set_lr(cfg.transfer.lr);
            let inputs = Inputs::new(InputAssembler::from_layout(header.layout), goal_text, embedder.as_ref());
            (agent, inputs, None)
        }
        TransferMode::Guided => {
            let agent_cfg = cfg.agent_config();
            let assembler = InputAssembler::new(
                env.feature_dim(),
                agent_cfg.frame_stack,
                cfg.caption_conditioned.then(|| embedder.dim()),
                cfg.goal_conditioned().then(|| embedder.dim()),
            );
            let agent = DqnAgent::new(
                agent_cfg,
                assembler.input_dim(),
                env.action_space().len(),
                stream_seed(seed, "agent"),
            )?;
            let guide = Guide {
                net,
                inputs: Inputs::new(InputAssembler::from_layout(header.layout), goal_text, embedder.as_ref()),
            };
            (agent, Inputs::new(assembler, goal_text, embedder.as_ref()), Some(guide))
        }
        TransferMode::None => unreachable!("checked by caller"),
    };
    let hash_before = guide.as_ref().map(|g| param_hash(&g.net));

    let mut env_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "env"));
    let mut out = SeedRun {
        seed,
        ..SeedRun::default()
    };
    let total = cfg.transfer.steps;
    let seed_frames = agent.cfg.seed_frames;
    let update_every = agent.cfg.update_every;
    let mut episode = 0u64;
    let (mut length, mut ret) = (0u64, 0.0f64);

    let mut begin = |env: &mut dyn Environment,
                     agent: &mut DqnAgent<T>,
                     inputs: &mut Inputs<T>,
                     guide: &mut Option<Guide<T>>|
     -> Result<(Observation, Vec<T>)> {
        let obs = env.reset(env_rng.random());
        let f: Vec<T> = cast_slice(&env.features(&obs));
        inputs.reset(&f)?;
        if let Some(g) = guide {
            g.inputs.reset(&f)?;
        }
        let input = inputs.build(env, &obs, embedder.as_ref())?;
        agent.begin_episode(&input);
        Ok((obs, input))
    };

    if total > 0 {
        let (mut obs, mut input) = begin(env.as_mut(), &mut agent, &mut inputs, &mut guide)?;
        for step in 0..total {
            let eps = if step < seed_frames {
                1.0
            } else {
                agent.cfg.epsilon(step, total)
            };
            let action = match &guide {
                Some(g) => {
                    let guide_input = g.inputs.build(env.as_ref(), &obs, embedder.as_ref())?;
                    let pick = || g.net.q_values(&guide_input).map(argmax).unwrap_or(0);
                    agent.act(&input, eps, Some(&pick))?
                }
                None => agent.act(&input, eps, None)?,
            };
            let res = env.step(action);
            let f: Vec<T> = cast_slice(&env.features(&res.observation));
            inputs.push(&f)?;
            if let Some(g) = &mut guide {
                g.inputs.push(&f)?;
            }
            obs = res.observation;
            let next_input = inputs.build(env.as_ref(), &obs, embedder.as_ref())?;
            let truncated = res.done && env.truncated();
            agent.record(action, res.extrinsic_reward, &next_input, res.done && !truncated, truncated);
            input = next_input;
            length += 1;
            ret += res.extrinsic_reward;
            if step >= seed_frames && (step + 1) % update_every == 0 {
                agent.train_step()?;
            }
            if res.done {
                out.events.push(Event::EpisodeEnd {
                    seed,
                    episode,
                    step: step + 1,
                    unique_achievements: env.unique_achievements(),
                    intrinsic_return: 0.0,
                });
                out.episodes.push(EpisodeMetrics {
                    seed,
                    step: step + 1,
                    episode,
                    length,
                    unique_achievements: env.unique_achievements(),
                    intrinsic_return: 0.0,
                    extrinsic_return: ret,
                    rewarded_goals: 0,
                    success_rate: env.success_rate(),
                    task_success: Some(env.task_success()),
                });
                episode += 1;
                (length, ret) = (0, 0.0);
                if step + 1 < total {
                    (obs, input) = begin(env.as_mut(), &mut agent, &mut inputs, &mut guide)?;
                }
            }
        }
    }

    out.env_steps = total;
    out.updates = agent.updates();
    out.guide_hash = hash_before.zip(guide.as_ref().map(|g| param_hash(&g.net)));
    let header = CheckpointHeader {
        shape: agent.shape(),
        layout: inputs.assembler.layout(),
        agent: agent.cfg.clone(),
        config_hash: cfg.config_hash(),
        env_steps: total,
        updates: agent.updates(),
    };
    out.checkpoint = Some(checkpoint::encode(&header, &agent.online)?);
    if let Some(dir) = &cfg.out_dir {
        let dir = dir.join(format!("seed_{seed}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        checkpoint::save(&dir.join("checkpoint.bin"), &header, &agent.online)?;
    }
    Ok(out)
}
