//! Experiment orchestration: pretraining, transfer, evaluation, suggestion
//! analysis and report files.

pub mod analysis;
pub mod config;
pub mod eval;
pub mod pretrain;
pub mod report;
mod setup;
pub mod transfer;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::nn::DuelingQNetwork;
use crate::env_core::{Observation, StatusFlag};
use crate::scalar::Scalar;

pub use analysis::{analyze_suggestions, CategoryCounts, SuggestionAnalysis, SuggestionVerdict};
pub use config::{
    stream_seed, EmbedderKind, EnvKind, EvalConfig, LlmConfig, LlmSource, Method, NoiseConfig, Precision,
    RunConfig, TransferConfig, TransferMode, DESK_HIDDEN,
};
pub use eval::{evaluate, evaluate_policy, iqm, median, EvalSummary};
pub use pretrain::pretrain;
pub use report::{emit_reports, read_episode_csv, render_chart, ChartSeries};
pub use transfer::transfer;

/// Metrics of one finished episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    /// Global step count at the end of the episode.
    pub step: u64,
    pub episode: u64,
    pub length: u64,
    pub unique_achievements: usize,
    pub intrinsic_return: f64,
    pub extrinsic_return: f64,
    /// Distinct goals that paid a positive reward.
    pub rewarded_goals: usize,
    pub success_rate: Option<f64>,
    pub task_success: Option<bool>,
}

/// Entries of the JSON-lines event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Reward {
        seed: u64,
        episode: u64,
        step: u64,
        caption: String,
        goal: Option<String>,
        reward: f64,
    },
    EpisodeEnd {
        seed: u64,
        episode: u64,
        step: u64,
        unique_achievements: usize,
        intrinsic_return: f64,
    },
    Checkpoint {
        seed: u64,
        step: u64,
        path: String,
    },
}

/// What the agent could see when a goal was suggested or rewarded.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSnapshot {
    pub visible: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inventory: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub status: BTreeSet<StatusFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holding: Option<String>,
}

impl ContextSnapshot {
    pub fn of(obs: &Observation) -> Self {
        ContextSnapshot {
            visible: obs.visible_kinds().into_iter().map(str::to_string).collect(),
            inventory: obs.inventory.clone(),
            status: obs.status.clone(),
            holding: obs.holding.clone(),
        }
    }

    /// An observation with the same visible kinds, inventory and status.
    pub fn to_observation(&self) -> Observation {
        Observation {
            local_view: vec![self
                .visible
                .iter()
                .map(|k| crate::env_core::CellView::new(k.clone()))
                .collect()],
            inventory: self.inventory.clone(),
            status: self.status.clone(),
            holding: self.holding.clone(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Suggested {
        seed: u64,
        episode: u64,
        step: u64,
        caption: String,
        goals: Vec<String>,
        context: ContextSnapshot,
    },
    Rewarded {
        seed: u64,
        episode: u64,
        step: u64,
        goal: String,
        reward: f64,
        context: ContextSnapshot,
    },
}

/// Everything one seed of a run produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeMetrics>,
    pub events: Vec<Event>,
    pub transcript: Vec<TranscriptEntry>,
    pub env_steps: u64,
    pub updates: u64,
    pub network_calls: u64,
    /// Encoded final checkpoint.
    pub checkpoint: Option<Vec<u8>>,
    /// Guide parameter hash before and after a guided transfer.
    pub guide_hash: Option<(String, String)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub config_hash: String,
    pub seeds: Vec<SeedRun>,
}

impl RunArtifacts {
    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeMetrics> {
        self.seeds.iter().flat_map(|s| &s.episodes)
    }

    /// Mean of `metric` over episodes ending after `from_fraction` of the
    /// step budget, averaged per seed first.
    pub fn late_mean(&self, from_fraction: f64, metric: impl Fn(&EpisodeMetrics) -> f64) -> f64 {
        let steps = self.config.steps.max(1) as f64;
        let per_seed: Vec<f64> = self
            .seeds
            .iter()
            .filter_map(|s| {
                let v: Vec<f64> = s
                    .episodes
                    .iter()
                    .filter(|e| e.step as f64 >= from_fraction * steps)
                    .map(&metric)
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        if per_seed.is_empty() {
            return 0.0;
        }
        per_seed.iter().sum::<f64>() / per_seed.len() as f64
    }
}

/// SHA-256 over the little-endian parameter bytes.
pub fn param_hash<T: Scalar>(net: &DuelingQNetwork<T>) -> String {
    let mut bytes = Vec::with_capacity(net.params.len() * size_of::<T>());
    for p in &net.params {
        p.write_le(&mut bytes);
    }
    hex::encode(Sha256::digest(&bytes))
}
