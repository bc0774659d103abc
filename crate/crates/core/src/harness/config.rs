//! Declarative run configuration (TOML) and named seed streams.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentConfig;
use crate::captioning::CaptionConfusion;
use crate::error::{Error, Result};
use crate::gridcraft::tasks::TASKS;
use crate::gridcraft::GridcraftConfig;
use crate::hashing::Fnv;
use crate::housegrid::HousegridConfig;
use crate::llm_client::{CacheMode, HttpConfig};
use crate::reward::{DEFAULT_THRESHOLD, NOISY_THRESHOLD};

/// Hidden width used by the default agent presets of a run. Small enough
/// for CPU-only pretraining runs of a few hundred thousand steps.
pub const DESK_HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Gridcraft,
    Housegrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ellm,
    Oracle,
    Novelty,
    Uniform,
    Apt,
    Rnd,
    Noveld,
    EllmNoNovelty,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ellm,
        Method::Oracle,
        Method::Novelty,
        Method::Uniform,
        Method::Apt,
        Method::Rnd,
        Method::Noveld,
        Method::EllmNoNovelty,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Ellm => "ellm",
            Method::Oracle => "oracle",
            Method::Novelty => "novelty",
            Method::Uniform => "uniform",
            Method::Apt => "apt",
            Method::Rnd => "rnd",
            Method::Noveld => "noveld",
            Method::EllmNoNovelty => "ellm_no_novelty",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::config(format!("unknown method `{s}`")))
    }

    /// Goal-based methods: a suggestor proposes goals each step.
    pub fn uses_suggestions(self) -> bool {
        !matches!(self, Method::Apt | Method::Rnd | Method::Noveld)
    }

    /// Whether achieved goals are filtered out of suggestions and rewards.
    pub fn novelty_filter(self) -> bool {
        matches!(self, Method::Ellm | Method::Oracle | Method::Novelty)
    }

    /// Methods whose suggestions are logged for quality analysis.
    pub fn logs_transcript(self) -> bool {
        matches!(self, Method::Ellm | Method::EllmNoNovelty | Method::Oracle)
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, Method::Ellm | Method::EllmNoNovelty)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmSource {
    /// Rule-based model answering open-ended crafting prompts.
    Scripted,
    /// Yes/no answers from the rearrangement ground truth.
    GroundTruth,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Defaults to `scripted` for gridcraft and `ground_truth` for housegrid.
    pub source: Option<LlmSource>,
    pub model: String,
    /// Response cache file; in-memory when absent.
    pub cache: Option<PathBuf>,
    pub cache_mode: CacheMode,
    pub max_goals: usize,
    /// Ground-truth model accuracy on correct placements.
    pub match_accuracy: f64,
    /// Ground-truth model accuracy on wrong placements.
    pub mismatch_accuracy: f64,
    /// Directory with `preamble.txt`, `few_shot.txt` and `query_suffix.txt`.
    pub prompt_dir: Option<PathBuf>,
    pub http: Option<HttpConfig>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            source: None,
            model: "scripted".into(),
            cache: None,
            cache_mode: CacheMode::Record,
            max_goals: crate::suggestion::DEFAULT_MAX_GOALS,
            match_accuracy: 1.0,
            mismatch_accuracy: 1.0,
            prompt_dir: None,
            http: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Lexical,
    RandomProjection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub confusion: Option<CaptionConfusion>,
    /// CSV of `row,column,probability`, merged over `confusion`.
    pub matrix: Option<PathBuf>,
}

impl NoiseConfig {
    pub fn enabled(&self) -> bool {
        self.confusion.is_some() || self.matrix.is_some()
    }

    pub fn resolve(&self) -> Result<Option<CaptionConfusion>> {
        if !self.enabled() {
            return Ok(None);
        }
        let mut c = self.confusion.clone().unwrap_or_default();
        if let Some(path) = &self.matrix {
            let m = CaptionConfusion::load_csv(path)?;
            for (row, cols) in m.rows {
                for (col, p) in cols {
                    c.set(&row, &col, p)?;
                }
            }
            c.false_negative.extend(m.false_negative);
        }
        Ok(Some(c))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    None,
    Finetune,
    Guided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferConfig {
    pub mode: TransferMode,
    /// Gridcraft task name, or `rearrange` for housegrid.
    pub task: String,
    /// Pretrained weights; `{seed}` is replaced by the run seed.
    pub checkpoint: Option<PathBuf>,
    pub steps: u64,
    pub lr: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            mode: TransferMode::None,
            task: "place_table".into(),
            checkpoint: None,
            steps: 100_000,
            lr: 2e-5,
        }
    }
}

impl TransferConfig {
    pub fn checkpoint_for(&self, seed: u64) -> Option<PathBuf> {
        self.checkpoint
            .as_ref()
            .map(|p| PathBuf::from(p.to_string_lossy().replace("{seed}", &seed.to_string())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    pub trials: usize,
    pub epsilon: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 10,
            trials: 10,
            epsilon: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub env: EnvKind,
    pub method: Method,
    /// Defaults to true for goal-based methods and false otherwise.
    pub goal_conditioned: Option<bool>,
    pub caption_conditioned: bool,
    pub embedder: EmbedderKind,
    /// Similarity threshold; 0.99 for clean captions, 0.5 with noise.
    pub threshold: Option<f64>,
    /// Goals drawn per step by the uniform baseline.
    pub k: usize,
    pub seeds: Vec<u64>,
    pub steps: u64,
    pub precision: Precision,
    pub gridcraft_preset: String,
    /// Full gridcraft configuration, overriding the preset.
    pub gridcraft: Option<GridcraftConfig>,
    pub housegrid: HousegridConfig,
    /// Defaults to the environment preset with `DESK_HIDDEN` units.
    pub agent: Option<AgentConfig>,
    pub llm: LlmConfig,
    pub noise: NoiseConfig,
    pub transfer: TransferConfig,
    pub eval: EvalConfig,
    /// Steps between checkpoints; 0 saves only at the end.
    pub checkpoint_every: u64,
    pub record_transcript: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            env: EnvKind::Gridcraft,
            method: Method::Ellm,
            goal_conditioned: None,
            caption_conditioned: true,
            embedder: EmbedderKind::Lexical,
            threshold: None,
            k: 5,
            seeds: vec![0],
            steps: 200_000,
            precision: Precision::F32,
            gridcraft_preset: "desk".into(),
            gridcraft: None,
            housegrid: HousegridConfig::default(),
            agent: None,
            llm: LlmConfig::default(),
            noise: NoiseConfig::default(),
            transfer: TransferConfig::default(),
            eval: EvalConfig::default(),
            checkpoint_every: 0,
            record_transcript: true,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn new(env: EnvKind, method: Method) -> Self {
        RunConfig {
            name: format!("{}-{}", env_label(env), method.label()),
            env,
            method,
            transfer: TransferConfig {
                task: match env {
                    EnvKind::Gridcraft => "place_table".into(),
                    EnvKind::Housegrid => "rearrange".into(),
                },
                ..TransferConfig::default()
            },
            ..RunConfig::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn goal_conditioned(&self) -> bool {
        self.goal_conditioned.unwrap_or(self.method.uses_suggestions())
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(if self.noise.enabled() {
            NOISY_THRESHOLD
        } else {
            DEFAULT_THRESHOLD
        })
    }

    pub fn llm_source(&self) -> LlmSource {
        self.llm.source.unwrap_or(match self.env {
            EnvKind::Gridcraft => LlmSource::Scripted,
            EnvKind::Housegrid => LlmSource::GroundTruth,
        })
    }

    pub fn gridcraft_config(&self) -> Result<GridcraftConfig> {
        match &self.gridcraft {
            Some(c) => Ok(c.clone()),
            None => GridcraftConfig::preset(&self.gridcraft_preset),
        }
    }

    pub fn agent_config(&self) -> AgentConfig {
        self.agent.clone().unwrap_or_else(|| {
            let base = match self.env {
                EnvKind::Gridcraft => AgentConfig::gridcraft(),
                EnvKind::Housegrid => AgentConfig::housegrid(),
            };
            AgentConfig {
                hidden: DESK_HIDDEN,
                ..base
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.goal_conditioned == Some(true) && !self.method.uses_suggestions() {
            return Err(Error::config(format!(
                "method `{}` has no goals to condition on",
                self.method.label()
            )));
        }
        let t = self.threshold();
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::config(format!("threshold {t} outside [-1, 1]")));
        }
        if self.method == Method::Uniform && self.k == 0 {
            return Err(Error::config("uniform baseline needs k >= 1"));
        }
        for (name, p) in [
            ("match_accuracy", self.llm.match_accuracy),
            ("mismatch_accuracy", self.llm.mismatch_accuracy),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.method.uses_llm() {
            match (self.env, self.llm_source()) {
                (EnvKind::Gridcraft, LlmSource::GroundTruth) => {
                    return Err(Error::config("ground_truth answers only rearrangement questions"))
                }
                (EnvKind::Housegrid, LlmSource::Scripted) => {
                    return Err(Error::config("scripted model answers only crafting prompts"))
                }
                _ => {}
            }
        }
        if self.noise.enabled() && !self.method.uses_suggestions() {
            return Err(Error::config("caption noise applies only to goal-based methods"));
        }
        self.gridcraft_config()?.validate()?;
        self.agent_config().validate()?;
        if self.transfer.mode != TransferMode::None {
            if self.transfer.checkpoint.is_none() {
                return Err(Error::config("transfer needs a checkpoint"));
            }
            let ok = match self.env {
                EnvKind::Gridcraft => TASKS.contains(&self.transfer.task.as_str()),
                EnvKind::Housegrid => self.transfer.task == "rearrange",
            };
            if !ok {
                return Err(Error::config(format!("unknown task `{}`", self.transfer.task)));
            }
            if self.transfer.lr < 0.0 {
                return Err(Error::config("transfer lr must be non-negative"));
            }
        }
        if self.eval.episodes == 0 || self.eval.trials == 0 {
            return Err(Error::config("evaluation needs at least one trial and episode"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding output locations.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn env_label(env: EnvKind) -> &'static str {
    match env {
        EnvKind::Gridcraft => "gridcraft",
        EnvKind::Housegrid => "housegrid",
    }
}

/// Independent seed for the stream `name` of root seed `root`.
pub fn stream_seed(root: u64, name: &str) -> u64 {
    let mut h = Fnv::default();
    h.write(&root.to_le_bytes()).write(name.as_bytes());
    // splitmix64 finaliser
    let mut z = h.finish().wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub const STREAMS: [&str; 4] = ["env", "agent", "suggestor", "noise"];
