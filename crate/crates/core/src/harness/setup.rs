//! Builds environments, embedders, model clients and suggestors from a run
//! configuration.

use crate::env_core::Environment;
use crate::error::Result;
use crate::gridcraft::Gridcraft;
use crate::housegrid::Housegrid;
use crate::llm_client::{CacheMode, CompletionBackend, HttpBackend, HttpConfig, LlmClient, ResponseCache};
use crate::reward::{CachedEmbedder, Embedder, LexicalEmbedder, RandomProjectionEmbedder};
use crate::scalar::Scalar;
use crate::suggestion::scripted::{GroundTruthLlm, ScriptedCrafterLlm};
use crate::suggestion::{
    ClosedFormSuggestor, NoveltySuggestor, OpenEndedSuggestor, OracleSuggestor, PromptTemplate, Suggestor,
    UniformSuggestor,
};

use super::config::{EmbedderKind, EnvKind, LlmSource, Method, RunConfig};

pub(crate) fn build_env(cfg: &RunConfig) -> Result<Box<dyn Environment>> {
    Ok(match cfg.env {
        EnvKind::Gridcraft => Box::new(Gridcraft::new(cfg.gridcraft_config()?)?),
        EnvKind::Housegrid => Box::new(Housegrid::new(cfg.housegrid.clone())?),
    })
}

pub(crate) fn build_embedder<T: Scalar>(kind: EmbedderKind) -> Box<dyn Embedder<T>> {
    match kind {
        EmbedderKind::Lexical => Box::new(CachedEmbedder::new(LexicalEmbedder)),
        EmbedderKind::RandomProjection => Box::new(CachedEmbedder::new(RandomProjectionEmbedder::default())),
    }
}

pub(crate) fn prompt_template(cfg: &RunConfig) -> Result<PromptTemplate> {
    match &cfg.llm.prompt_dir {
        Some(dir) => PromptTemplate::load_dir(dir),
        None => Ok(match cfg.env {
            EnvKind::Gridcraft => PromptTemplate::crafter_v1(),
            EnvKind::Housegrid => PromptTemplate::housegrid_v1(),
        }),
    }
}

pub(crate) fn build_client(cfg: &RunConfig, template: &PromptTemplate) -> Result<LlmClient> {
    let cache = match &cfg.llm.cache {
        Some(path) => ResponseCache::open(path)?,
        None => ResponseCache::in_memory(),
    };
    if cfg.llm.cache_mode == CacheMode::Replay {
        return Ok(LlmClient::replay(cache));
    }
    let backend: Box<dyn CompletionBackend> = match cfg.llm_source() {
        LlmSource::Scripted => Box::new(ScriptedCrafterLlm {
            template: template.clone(),
            max_goals: cfg.llm.max_goals,
        }),
        LlmSource::GroundTruth => {
            let task = Housegrid::new(cfg.housegrid.clone())?.task().clone();
            Box::new(GroundTruthLlm {
                task,
                match_accuracy: cfg.llm.match_accuracy,
                mismatch_accuracy: cfg.llm.mismatch_accuracy,
                seed: 0,
            })
        }
        LlmSource::Http => {
            let mut http = cfg.llm.http.clone().unwrap_or_else(HttpConfig::from_env);
            if http.api_key.is_none() {
                http.api_key = HttpConfig::from_env().api_key;
            }
            Box::new(HttpBackend::new(http))
        }
    };
    Ok(LlmClient::new(cache, backend).with_mode(cfg.llm.cache_mode))
}

pub(crate) fn build_suggestor(cfg: &RunConfig) -> Result<Option<Box<dyn Suggestor>>> {
    Ok(Some(match cfg.method {
        Method::Ellm | Method::EllmNoNovelty => {
            let template = prompt_template(cfg)?;
            let client = build_client(cfg, &template)?;
            match cfg.env {
                EnvKind::Gridcraft => Box::new(OpenEndedSuggestor::new(
                    client,
                    template,
                    cfg.llm.model.clone(),
                    cfg.llm.max_goals,
                )),
                EnvKind::Housegrid => Box::new(ClosedFormSuggestor::new(client, template, cfg.llm.model.clone())),
            }
        }
        Method::Oracle => Box::new(OracleSuggestor),
        Method::Novelty => Box::new(NoveltySuggestor),
        Method::Uniform => Box::new(UniformSuggestor::new(cfg.k)),
        Method::Apt | Method::Rnd | Method::Noveld => return Ok(None),
    }))
}
