//! Intrinsically motivated pretraining: caption, suggest, filter, act,
//! step, reward, store, update.

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::checkpoint::{self, CheckpointHeader};
use crate::agent::{DqnAgent, InputAssembler};
use crate::captioning::{inject_noise, CaptionConfusion};
use crate::env_core::{Environment, Observation};
use crate::error::{Error, Result};
use crate::reward::{
    apt_reward, ellm_reward, hardcoded_goal_reward, noveld_reward, AptBuffer, Embedder, RndConfig, RndState,
    VisitSet, APT_K, NOVELD_ALPHA,
};
use crate::scalar::{cast_slice, Scalar};
use crate::suggestion::{filter_achieved, SuggestContext, SuggestionSet, Suggestor};

use super::config::{stream_seed, Method, Precision, RunConfig};
use super::setup::{build_embedder, build_env, build_suggestor};
use super::{ContextSnapshot, EpisodeMetrics, Event, RunArtifacts, SeedRun, TranscriptEntry};

/// States kept for the APT nearest-neighbour estimate.
const APT_BUFFER: usize = 256;

pub fn pretrain(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        log::info!("pretraining {} seed {seed} for {} steps", cfg.name, cfg.steps);
        seeds.push(match cfg.precision {
            Precision::F32 => Session::<f32>::new(cfg, seed)?.run()?,
            Precision::F64 => Session::<f64>::new(cfg, seed)?.run()?,
        });
    }
    Ok(RunArtifacts {
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        seeds,
    })
}

enum Intrinsic<T> {
    Goals,
    Apt(AptBuffer<T>),
    Rnd(RndState<T>),
    Noveld(RndState<T>, VisitSet),
}

#[derive(Default)]
struct EpisodeAcc {
    index: u64,
    length: u64,
    intrinsic: f64,
    extrinsic: f64,
    rewarded: BTreeSet<String>,
    last_logged: Option<String>,
}

pub(crate) fn embed_text<T: Scalar>(embedder: &dyn Embedder<T>, text: &str) -> Vec<T> {
    embedder.embed(text).components().to_vec()
}

/// Goal slot content: the goal list as one text sequence, or nothing.
pub(crate) fn goal_text<S: AsRef<str>>(goals: &[S]) -> Option<String> {
    if goals.is_empty() {
        return None;
    }
    Some(goals.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(", "))
}

struct Session<'a, T: Scalar> {
    cfg: &'a RunConfig,
    seed: u64,
    env: Box<dyn Environment>,
    embedder: Box<dyn Embedder<T>>,
    suggestor: Option<Box<dyn Suggestor>>,
    confusion: Option<CaptionConfusion>,
    intrinsic: Intrinsic<T>,
    assembler: InputAssembler<T>,
    agent: DqnAgent<T>,
    env_rng: ChaCha8Rng,
    sugg_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    aux_rng: ChaCha8Rng,
    threshold: f64,
    out: SeedRun,
    ep: EpisodeAcc,
}

impl<'a, T: Scalar> Session<'a, T> {
    fn new(cfg: &'a RunConfig, seed: u64) -> Result<Self> {
        let env = build_env(cfg)?;
        let embedder = build_embedder::<T>(cfg.embedder);
        let obs_dim = env.feature_dim();
        let agent_cfg = cfg.agent_config();
        let assembler = InputAssembler::new(
            obs_dim,
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
        let mut aux_rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "intrinsic"));
        let intrinsic = match cfg.method {
            Method::Apt => Intrinsic::Apt(AptBuffer::new(APT_K, APT_BUFFER)?),
            Method::Rnd => Intrinsic::Rnd(RndState::new(obs_dim, &RndConfig::default(), &mut aux_rng)),
            Method::Noveld => Intrinsic::Noveld(
                RndState::new(obs_dim, &RndConfig::default(), &mut aux_rng),
                VisitSet::default(),
            ),
            _ => Intrinsic::Goals,
        };
        Ok(Session {
            cfg,
            seed,
            suggestor: build_suggestor(cfg)?,
            confusion: cfg.noise.resolve()?,
            threshold: cfg.threshold(),
            env,
            embedder,
            intrinsic,
            assembler,
            agent,
            env_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, "env")),
            sugg_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, "suggestor")),
            noise_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, "noise")),
            aux_rng,
            out: SeedRun {
                seed,
                ..SeedRun::default()
            },
            ep: EpisodeAcc::default(),
        })
    }

    fn seed_dir(&self) -> Option<PathBuf> {
        self.cfg.out_dir.as_ref().map(|d| d.join(format!("seed_{}", self.seed)))
    }

    /// Goals handed to the agent for the state `obs`.
    fn suggest(&mut self, obs: &Observation, step: u64) -> Result<Vec<String>> {
        let Some(sugg) = self.suggestor.as_mut() else {
            return Ok(Vec::new());
        };
        let caption = self.env.caption_state(obs);
        let ctx = SuggestContext {
            env: self.env.as_ref(),
            obs,
            caption: &caption,
            timestep: step,
        };
        let raw: SuggestionSet = sugg.suggest(&ctx, &mut self.sugg_rng as &mut dyn RngCore)?;
        if self.cfg.record_transcript
            && self.cfg.method.logs_transcript()
            && self.ep.last_logged.as_deref() != Some(caption.as_str())
        {
            self.out.transcript.push(TranscriptEntry::Suggested {
                seed: self.seed,
                episode: self.ep.index,
                step,
                caption: caption.clone(),
                goals: raw.goals.clone(),
                context: ContextSnapshot::of(obs),
            });
            self.ep.last_logged = Some(caption);
        }
        let set = if self.cfg.method.novelty_filter() {
            filter_achieved(&raw, self.env.ledger())
        } else {
            raw
        };
        Ok(set.goals)
    }

    fn input(&self, obs: &Observation, goals: &[String]) -> Result<Vec<T>> {
        let caption = self
            .cfg
            .caption_conditioned
            .then(|| embed_text(self.embedder.as_ref(), &self.env.caption_state(obs)));
        let goals = if self.cfg.goal_conditioned() {
            goal_text(goals).map(|g| embed_text(self.embedder.as_ref(), &g))
        } else {
            None
        };
        self.assembler.assemble(caption.as_deref(), goals.as_deref())
    }

    /// Similarity (or exact-match) reward for the transition caption, with
    /// the matched goal marked achieved when the method filters novelty.
    fn goal_reward(&mut self, caption: &str, goals: &[String]) -> (f64, Option<String>) {
        if caption.is_empty() {
            return (0.0, None);
        }
        let captions = match &self.confusion {
            Some(c) => inject_noise(caption, c, &mut self.noise_rng),
            None => vec![caption.to_string()],
        };
        let mut best = (0.0, None);
        for c in &captions {
            let (r, g) = match self.cfg.method {
                Method::Ellm | Method::EllmNoNovelty => {
                    let rec = ellm_reward(c, goals, self.threshold, self.embedder.as_ref());
                    (rec.reward, rec.matched_goal)
                }
                Method::Oracle | Method::Novelty => (
                    hardcoded_goal_reward(c, goals, Some(self.env.ledger())),
                    Some(c.clone()),
                ),
                _ => (hardcoded_goal_reward(c, goals, None), Some(c.clone())),
            };
            if r > best.0 {
                best = (r, g);
            }
        }
        if best.0 > 0.0 && self.cfg.method.novelty_filter() {
            if let Some(g) = &best.1 {
                self.env.ledger_mut().mark(g);
            }
        }
        best
    }

    fn state_reward(&mut self, prev: &[T], next: &[T], state_hash: u64) -> Result<f64> {
        Ok(match &mut self.intrinsic {
            Intrinsic::Goals => 0.0,
            Intrinsic::Apt(buf) => {
                let r = apt_reward(next, buf);
                if self.agent.updates() == 0 {
                    buf.push(next.to_vec());
                }
                r
            }
            Intrinsic::Rnd(rnd) => rnd.reward(next)?,
            Intrinsic::Noveld(rnd, visits) => {
                let first = visits.visit(state_hash);
                let r = noveld_reward(rnd.novelty(prev)?, rnd.novelty(next)?, first, NOVELD_ALPHA);
                rnd.reward(next)?;
                r
            }
        })
    }

    /// Refreshes the APT neighbour set from a memory minibatch.
    fn refresh_apt(&mut self) {
        if let Intrinsic::Apt(buf) = &mut self.intrinsic {
            let d = self.assembler.layout().obs_dim;
            let from = d * (self.agent.cfg.frame_stack - 1);
            let states = self.agent.replay.sample_states(APT_BUFFER, &mut self.aux_rng);
            if !states.is_empty() {
                buf.fill(states.into_iter().map(|s| s[from..from + d].to_vec()));
            }
        }
    }

    fn begin_episode(&mut self, step: u64) -> Result<(Observation, Vec<String>, Vec<T>)> {
        let obs = self.env.reset(self.env_rng.random());
        self.assembler.reset(&cast_slice(&self.env.features(&obs)))?;
        if let Intrinsic::Noveld(_, visits) = &mut self.intrinsic {
            visits.clear();
            visits.visit(self.env.state_hash());
        }
        self.ep.last_logged = None;
        let goals = self.suggest(&obs, step)?;
        let input = self.input(&obs, &goals)?;
        self.agent.begin_episode(&input);
        Ok((obs, goals, input))
    }

    fn end_episode(&mut self, step: u64) {
        let m = EpisodeMetrics {
            seed: self.seed,
            step,
            episode: self.ep.index,
            length: self.ep.length,
            unique_achievements: self.env.unique_achievements(),
            intrinsic_return: self.ep.intrinsic,
            extrinsic_return: self.ep.extrinsic,
            rewarded_goals: self.ep.rewarded.len(),
            success_rate: self.env.success_rate(),
            task_success: None,
        };
        self.out.events.push(Event::EpisodeEnd {
            seed: self.seed,
            episode: m.episode,
            step,
            unique_achievements: m.unique_achievements,
            intrinsic_return: m.intrinsic_return,
        });
        self.out.episodes.push(m);
        self.ep = EpisodeAcc {
            index: self.ep.index + 1,
            ..EpisodeAcc::default()
        };
    }

    fn header(&self, step: u64) -> CheckpointHeader {
        CheckpointHeader {
            shape: self.agent.shape(),
            layout: self.assembler.layout(),
            agent: self.agent.cfg.clone(),
            config_hash: self.cfg.config_hash(),
            env_steps: step,
            updates: self.agent.updates(),
        }
    }

    fn save_checkpoint(&mut self, step: u64) -> Result<()> {
        let Some(dir) = self.seed_dir() else {
            return Ok(());
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("checkpoint.bin");
        checkpoint::save(&path, &self.header(step), &self.agent.online)?;
        self.out.events.push(Event::Checkpoint {
            seed: self.seed,
            step,
            path: path.display().to_string(),
        });
        Ok(())
    }

    fn run(mut self) -> Result<SeedRun> {
        let total = self.cfg.steps;
        if total == 0 {
            return Ok(self.out);
        }
        let seed_frames = self.agent.cfg.seed_frames;
        let update_every = self.agent.cfg.update_every;
        let (mut obs, mut goals, mut input) = self.begin_episode(0)?;
        for step in 0..total {
            let eps = if step < seed_frames {
                1.0
            } else {
                self.agent.cfg.epsilon(step, total)
            };
            let action = self.agent.act(&input, eps, None)?;
            let prev_features = self.assembler.latest().map(<[T]>::to_vec).unwrap_or_default();
            let res = self.env.step(action);
            let caption = self.env.caption_transition(res.action_outcome.as_ref());
            let next_features: Vec<T> = cast_slice(&self.env.features(&res.observation));

            let (goal_r, matched) = if self.suggestor.is_some() {
                self.goal_reward(&caption, &goals)
            } else {
                (0.0, None)
            };
            let state_r = self.state_reward(&prev_features, &next_features, self.env.state_hash())?;
            let reward = goal_r + state_r;
            if goal_r > 0.0 {
                self.out.events.push(Event::Reward {
                    seed: self.seed,
                    episode: self.ep.index,
                    step,
                    caption: caption.clone(),
                    goal: matched.clone(),
                    reward: goal_r,
                });
                if let Some(g) = &matched {
                    self.ep.rewarded.insert(g.clone());
                    if self.cfg.record_transcript && self.cfg.method.logs_transcript() {
                        self.out.transcript.push(TranscriptEntry::Rewarded {
                            seed: self.seed,
                            episode: self.ep.index,
                            step,
                            goal: g.clone(),
                            reward: goal_r,
                            context: ContextSnapshot::of(&obs),
                        });
                    }
                }
            }
            self.ep.length += 1;
            self.ep.intrinsic += reward;
            self.ep.extrinsic += res.extrinsic_reward;

            self.assembler.push(&next_features)?;
            let done = res.done;
            obs = res.observation;
            goals = if done { Vec::new() } else { self.suggest(&obs, step + 1)? };
            let next_input = self.input(&obs, &goals)?;
            let truncated = done && self.env.truncated();
            self.agent.record(action, reward, &next_input, done && !truncated, truncated);
            input = next_input;

            if step >= seed_frames && (step + 1) % update_every == 0 && self.agent.train_step()?.is_some() {
                self.refresh_apt();
            }
            if self.cfg.checkpoint_every > 0 && (step + 1) % self.cfg.checkpoint_every == 0 {
                self.save_checkpoint(step + 1)?;
            }
            if done {
                self.end_episode(step + 1);
                if step + 1 < total {
                    (obs, goals, input) = self.begin_episode(step + 1)?;
                }
            }
        }
        self.out.env_steps = total;
        self.out.updates = self.agent.updates();
        self.out.network_calls = self.suggestor.as_ref().map_or(0, |s| s.network_calls());
        self.out.checkpoint = Some(checkpoint::encode(&self.header(total), &self.agent.online)?);
        if self.cfg.checkpoint_every == 0 || total % self.cfg.checkpoint_every != 0 {
            self.save_checkpoint(total)?;
        }
        Ok(self.out)
    }
}

/// Uniformly random action, used by scripted baselines and tests.
pub fn random_action<R: Rng + ?Sized>(env: &dyn Environment, rng: &mut R) -> usize {
    rng.random_range(0..env.action_space().len())
}
