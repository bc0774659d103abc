//! Evaluation trials: greedy rollouts summarised by mean, median and IQM.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::checkpoint::{self, CheckpointHeader};
use crate::agent::nn::DuelingQNetwork;
use crate::agent::{act_with, InputAssembler};
use crate::env_core::{Environment, Observation, StepResult};
use crate::error::{Error, Result};
use crate::reward::{ellm_reward, Embedder};
use crate::scalar::{cast_slice, Scalar};
use crate::suggestion::{filter_achieved, SuggestContext, Suggestor};

use super::config::{stream_seed, Method, Precision, RunConfig};
use super::pretrain::{embed_text, goal_text};
use super::setup::{build_embedder, build_env, build_suggestor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// `unique_achievements` or `success_rate`.
    pub metric: String,
    pub per_trial: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub iqm: f64,
    pub min: f64,
    pub max: f64,
}

impl EvalSummary {
    pub fn from_trials(metric: &str, per_trial: Vec<f64>) -> Self {
        let mean = per_trial.iter().sum::<f64>() / per_trial.len().max(1) as f64;
        EvalSummary {
            metric: metric.to_string(),
            mean,
            median: median(&per_trial),
            iqm: iqm(&per_trial),
            min: per_trial.iter().copied().fold(f64::INFINITY, f64::min),
            max: per_trial.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            per_trial,
        }
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn median(values: &[f64]) -> f64 {
    let v = sorted(values);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Interquartile mean: the mean after dropping the lowest and highest
/// quarter of the values.
pub fn iqm(values: &[f64]) -> f64 {
    let v = sorted(values);
    if v.is_empty() {
        return f64::NAN;
    }
    let cut = v.len() / 4;
    let mid = &v[cut..v.len() - cut];
    mid.iter().sum::<f64>() / mid.len() as f64
}

pub trait Policy {
    fn begin(&mut self, env: &mut dyn Environment, obs: &Observation) -> Result<()>;

    fn act(&mut self, env: &dyn Environment, obs: &Observation) -> Result<usize>;

    /// Sees the result of the last action.
    fn observe(&mut self, _env: &mut dyn Environment, _res: &StepResult) -> Result<()> {
        Ok(())
    }
}

/// Adapts a closure into a memoryless policy.
pub struct FnPolicy<F>(pub F);

impl<F: FnMut(&dyn Environment, &Observation) -> usize> Policy for FnPolicy<F> {
    fn begin(&mut self, _env: &mut dyn Environment, _obs: &Observation) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, env: &dyn Environment, obs: &Observation) -> Result<usize> {
        Ok((self.0)(env, obs))
    }
}

/// Runs `trials` × `episodes` rollouts and averages the per-episode metric
/// within each trial.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    policy: &mut dyn Policy,
    trials: usize,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "eval"));
    let mut per_trial = Vec::with_capacity(trials);
    let mut metric = "unique_achievements";
    for _ in 0..trials {
        let mut total = 0.0;
        for _ in 0..episodes {
            let mut obs = env.reset(rng.next_u64());
            policy.begin(env, &obs)?;
            loop {
                let a = policy.act(env, &obs)?;
                let res = env.step(a);
                policy.observe(env, &res)?;
                obs = res.observation;
                if res.done {
                    break;
                }
            }
            total += match env.success_rate() {
                Some(s) => {
                    metric = "success_rate";
                    s
                }
                None => env.unique_achievements() as f64,
            };
        }
        per_trial.push(total / episodes.max(1) as f64);
    }
    Ok(EvalSummary::from_trials(metric, per_trial))
}

/// Greedy (or ε-greedy) policy from a checkpoint, fed the same inputs as
/// during training.
pub struct CheckpointPolicy<T: Scalar> {
    pub net: DuelingQNetwork<T>,
    assembler: InputAssembler<T>,
    embedder: Box<dyn Embedder<T>>,
    suggestor: Option<Box<dyn Suggestor>>,
    method: Method,
    threshold: f64,
    epsilon: f64,
    rng: ChaCha8Rng,
    sugg_rng: ChaCha8Rng,
    goals: Vec<String>,
    step: u64,
}

/// Checks that a checkpoint fits the environment of `cfg`.
pub(crate) fn check_compatible(header: &CheckpointHeader, env: &dyn Environment) -> Result<()> {
    if header.layout.obs_dim != env.feature_dim() || header.shape.n_actions != env.action_space().len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint expects {} features and {} actions, environment `{}` has {} and {}",
            header.layout.obs_dim,
            header.shape.n_actions,
            env.id(),
            env.feature_dim(),
            env.action_space().len()
        )));
    }
    Ok(())
}

impl<T: Scalar> CheckpointPolicy<T> {
    pub fn new(cfg: &RunConfig, header: &CheckpointHeader, net: DuelingQNetwork<T>, seed: u64) -> Result<Self> {
        let embedder = build_embedder::<T>(cfg.embedder);
        let suggestor = if header.layout.goal_dim.is_some() {
            build_suggestor(cfg)?
        } else {
            None
        };
        Ok(CheckpointPolicy {
            net,
            assembler: InputAssembler::from_layout(header.layout),
            embedder,
            suggestor,
            method: cfg.method,
            threshold: cfg.threshold(),
            epsilon: cfg.eval.epsilon,
            rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, "agent")),
            sugg_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, "suggestor")),
            goals: Vec::new(),
            step: 0,
        })
    }

    fn suggest(&mut self, env: &dyn Environment, obs: &Observation) -> Result<()> {
        let Some(s) = self.suggestor.as_mut() else {
            return Ok(());
        };
        let caption = env.caption_state(obs);
        let ctx = SuggestContext {
            env,
            obs,
            caption: &caption,
            timestep: self.step,
        };
        let raw = s.suggest(&ctx, &mut self.sugg_rng as &mut dyn RngCore)?;
        self.goals = if self.method.novelty_filter() {
            filter_achieved(&raw, env.ledger()).goals
        } else {
            raw.goals
        };
        Ok(())
    }
}

impl<T: Scalar> Policy for CheckpointPolicy<T> {
    fn begin(&mut self, env: &mut dyn Environment, obs: &Observation) -> Result<()> {
        self.assembler.reset(&cast_slice(&env.features(obs)))?;
        self.suggest(env, obs)
    }

    fn act(&mut self, env: &dyn Environment, obs: &Observation) -> Result<usize> {
        let layout = self.assembler.layout();
        let caption = layout
            .caption_dim
            .map(|_| embed_text(self.embedder.as_ref(), &env.caption_state(obs)));
        let goals = layout
            .goal_dim
            .and_then(|_| goal_text(&self.goals))
            .map(|g| embed_text(self.embedder.as_ref(), &g));
        let input = self.assembler.assemble(caption.as_deref(), goals.as_deref())?;
        act_with(&self.net, &input, self.epsilon, &mut self.rng, None)
    }

    fn observe(&mut self, env: &mut dyn Environment, res: &StepResult) -> Result<()> {
        self.step += 1;
        if self.method.novelty_filter() && !self.goals.is_empty() {
            let caption = env.caption_transition(res.action_outcome.as_ref());
            let rec = ellm_reward(&caption, &self.goals, self.threshold, self.embedder.as_ref());
            if let Some(g) = rec.matched_goal {
                env.ledger_mut().mark(&g);
            }
        }
        self.assembler.push(&cast_slice(&env.features(&res.observation)))?;
        if !res.done {
            self.suggest(env, &res.observation)?;
        }
        Ok(())
    }
}

fn evaluate_typed<T: Scalar>(cfg: &RunConfig, path: &Path, seed: u64) -> Result<EvalSummary> {
    let (header, net) = checkpoint::load::<T>(path)?;
    let mut env = build_env(cfg)?;
    check_compatible(&header, env.as_ref())?;
    let mut policy = CheckpointPolicy::new(cfg, &header, net, seed)?;
    evaluate_policy(env.as_mut(), &mut policy, cfg.eval.trials, cfg.eval.episodes, seed)
}

/// Evaluates a saved checkpoint on the environment of `cfg`.
pub fn evaluate(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalSummary> {
    cfg.validate()?;
    let seed = cfg.seeds[0];
    match cfg.precision {
        Precision::F32 => evaluate_typed::<f32>(cfg, checkpoint, seed),
        Precision::F64 => evaluate_typed::<f64>(cfg, checkpoint, seed),
    }
}
