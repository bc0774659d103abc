//! Goal suggestion: prompts, completion parsing, yes/no decisions and the
//! scripted and baseline goal samplers.

pub mod prompts;
pub mod scripted;

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env_core::{EpisodeLedger, Environment, Observation};
use crate::error::{Error, Result};
use crate::hashing::fnv1a64;
use crate::llm_client::{CompletionRequest, CompletionResponse, LlmClient};
pub use prompts::{build_prompt_crafter, build_prompt_housegrid, PromptTemplate};

/// Default cap on parsed open-ended suggestions.
pub const DEFAULT_MAX_GOALS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionSource {
    OpenEndedLlm,
    ClosedFormLlm,
    ScriptedOracle,
    Uniform,
    NoveltySampler,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuggestionSet {
    pub goals: Vec<String>,
    pub source: SuggestionSource,
    pub timestep: u64,
}

impl SuggestionSet {
    /// Lowercases, trims and deduplicates `goals`, keeping at most `max` of them.
    pub fn new<S: AsRef<str>>(goals: &[S], source: SuggestionSource, timestep: u64, max: usize) -> Self {
        let mut seen = HashSet::new();
        let goals = goals
            .iter()
            .map(|g| g.as_ref().trim().to_lowercase())
            .filter(|g| !g.is_empty() && seen.insert(g.clone()))
            .take(max)
            .collect();
        SuggestionSet {
            goals,
            source,
            timestep,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }
}

/// Drops goals already achieved this episode, preserving order.
pub fn filter_achieved(set: &SuggestionSet, ledger: &EpisodeLedger) -> SuggestionSet {
    SuggestionSet {
        goals: set.goals.iter().filter(|g| !ledger.contains(g)).cloned().collect(),
        ..set.clone()
    }
}

/// Reads a "- item" list from the start of a completion.
pub fn parse_open_ended(completion: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in completion.lines().skip_while(|l| l.trim().is_empty()) {
        let Some(item) = line.trim_start().strip_prefix("- ") else {
            break;
        };
        let item = item.trim().to_lowercase();
        if !item.is_empty() {
            out.push(item);
        }
    }
    if out.is_empty() && !completion.trim().is_empty() {
        log::debug!("no suggestions parsed from completion {completion:?}");
    }
    out
}

/// Renders goals in the list format the prompt's examples use.
pub fn render_goal_list<S: AsRef<str>>(goals: &[S]) -> String {
    goals
        .iter()
        .map(|g| {
            let mut c = g.as_ref().chars();
            match c.next() {
                Some(f) => format!("- {}{}", f.to_uppercase(), c.as_str()),
                None => "- ".to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Accepts when "Yes" is strictly more likely than "No".
pub fn closed_form_decide(logprob_yes: f64, logprob_no: f64) -> Result<bool> {
    if !logprob_yes.is_finite() || !logprob_no.is_finite() {
        return Err(Error::NonFinite(format!(
            "yes/no log-probabilities {logprob_yes}, {logprob_no}"
        )));
    }
    Ok(logprob_yes > logprob_no)
}

fn label_logprob(lps: &BTreeMap<String, f64>, label: &str) -> Option<f64> {
    lps.iter()
        .filter(|(tok, _)| tok.trim().trim_end_matches('.').eq_ignore_ascii_case(label))
        .map(|(_, lp)| *lp)
        .reduce(f64::max)
}

/// Yes/no from first-token log-probabilities, else from the leading word.
pub fn decide_from_response(resp: &CompletionResponse) -> Result<bool> {
    let lps = &resp.first_token_logprobs;
    if let (Some(y), Some(n)) = (label_logprob(lps, "yes"), label_logprob(lps, "no")) {
        return closed_form_decide(y, n);
    }
    Ok(resp.text.trim_start().to_lowercase().starts_with("yes"))
}

/// What a suggestor sees at a step.
pub struct SuggestContext<'a> {
    pub env: &'a dyn Environment,
    pub obs: &'a Observation,
    pub caption: &'a str,
    pub timestep: u64,
}

pub trait Suggestor {
    fn suggest(&mut self, ctx: &SuggestContext, rng: &mut dyn rand::RngCore) -> Result<SuggestionSet>;

    /// Hash of the last prompt sent, when the suggestor prompts a model.
    fn last_prompt_hash(&self) -> Option<u64> {
        None
    }

    /// Whether the last call reused the previous suggestions.
    fn reused(&self) -> bool {
        false
    }

    /// Backend calls made by the underlying model client, cache hits excluded.
    fn network_calls(&self) -> u64 {
        0
    }
}

/// Every common-sense goal whose context currently holds.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleSuggestor;

impl Suggestor for OracleSuggestor {
    fn suggest(&mut self, ctx: &SuggestContext, _rng: &mut dyn rand::RngCore) -> Result<SuggestionSet> {
        let goals = ctx.env.oracle_goals(ctx.obs);
        Ok(SuggestionSet::new(&goals, SuggestionSource::ScriptedOracle, ctx.timestep, usize::MAX))
    }
}

/// `k` independent uniform draws from the expressible goals.
#[derive(Clone, Debug)]
pub struct UniformSuggestor {
    pub k: usize,
    goals: Vec<String>,
}

impl UniformSuggestor {
    pub fn new(k: usize) -> Self {
        UniformSuggestor { k, goals: Vec::new() }
    }
}

pub fn uniform_suggest<R: Rng + ?Sized>(goals: &[String], k: usize, rng: &mut R) -> Vec<String> {
    if goals.is_empty() {
        return Vec::new();
    }
    (0..k).map(|_| goals[rng.random_range(0..goals.len())].clone()).collect()
}

impl Suggestor for UniformSuggestor {
    fn suggest(&mut self, ctx: &SuggestContext, rng: &mut dyn rand::RngCore) -> Result<SuggestionSet> {
        if self.goals.is_empty() {
            self.goals = ctx.env.expressible_goals();
        }
        let draws = uniform_suggest(&self.goals, self.k, rng);
        Ok(SuggestionSet::new(&draws, SuggestionSource::Uniform, ctx.timestep, usize::MAX))
    }
}

/// Expressible goals not yet achieved this episode.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoveltySuggestor;

pub fn novelty_suggest(goals: &[String], ledger: &EpisodeLedger) -> Vec<String> {
    goals.iter().filter(|g| !ledger.contains(g)).cloned().collect()
}

impl Suggestor for NoveltySuggestor {
    fn suggest(&mut self, ctx: &SuggestContext, _rng: &mut dyn rand::RngCore) -> Result<SuggestionSet> {
        let goals = novelty_suggest(&ctx.env.expressible_goals(), ctx.env.ledger());
        Ok(SuggestionSet::new(&goals, SuggestionSource::NoveltySampler, ctx.timestep, usize::MAX))
    }
}

/// Open-ended generation from the state caption. The model is queried only
/// when the caption differs from the previous query.
pub struct OpenEndedSuggestor {
    client: LlmClient,
    template: PromptTemplate,
    model: String,
    max_goals: usize,
    last: Option<(String, Vec<String>)>,
    last_hash: Option<u64>,
    reused: bool,
    queries: u64,
}

impl OpenEndedSuggestor {
    pub fn new(client: LlmClient, template: PromptTemplate, model: impl Into<String>, max_goals: usize) -> Self {
        OpenEndedSuggestor {
            client,
            template,
            model: model.into(),
            max_goals,
            last: None,
            last_hash: None,
            reused: false,
            queries: 0,
        }
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    /// Prompts issued to the client (cache hits included).
    pub fn queries(&self) -> u64 {
        self.queries
    }
}

impl Suggestor for OpenEndedSuggestor {
    fn suggest(&mut self, ctx: &SuggestContext, _rng: &mut dyn rand::RngCore) -> Result<SuggestionSet> {
        if let Some((cap, goals)) = &self.last {
            if cap == ctx.caption {
                self.reused = true;
                return Ok(SuggestionSet::new(goals, SuggestionSource::OpenEndedLlm, ctx.timestep, self.max_goals));
            }
        }
        self.reused = false;
        let prompt = build_prompt_crafter(ctx.caption, &self.template);
        self.last_hash = Some(fnv1a64(prompt.as_bytes()));
        let resp = self.client.complete(&CompletionRequest::new(&self.model, prompt))?;
        self.queries += 1;
        let goals = parse_open_ended(&resp.text);
        self.last = Some((ctx.caption.to_string(), goals.clone()));
        Ok(SuggestionSet::new(&goals, SuggestionSource::OpenEndedLlm, ctx.timestep, self.max_goals))
    }

    fn last_prompt_hash(&self) -> Option<u64> {
        self.last_hash
    }

    fn reused(&self) -> bool {
        self.reused
    }

    fn network_calls(&self) -> u64 {
        self.client.network_calls()
    }
}

/// Yes/no queries per (object, receptacle) pair for rearrangement goals:
/// pick an object that is not in an accepted receptacle, place the held
/// object in an accepted receptacle.
pub struct ClosedFormSuggestor {
    client: LlmClient,
    template: PromptTemplate,
    model: String,
    decisions: BTreeMap<(String, String), bool>,
    queries: u64,
}

impl ClosedFormSuggestor {
    pub fn new(client: LlmClient, template: PromptTemplate, model: impl Into<String>) -> Self {
        ClosedFormSuggestor {
            client,
            template,
            model: model.into(),
            decisions: BTreeMap::new(),
            queries: 0,
        }
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// Whether the model accepts `object` in `receptacle`.
    pub fn accepts(&mut self, object: &str, receptacle: &str) -> Result<bool> {
        let key = (object.to_string(), receptacle.to_string());
        if let Some(d) = self.decisions.get(&key) {
            return Ok(*d);
        }
        let prompt = build_prompt_housegrid(object, receptacle, &self.template);
        let mut req = CompletionRequest::new(&self.model, prompt);
        req.max_tokens = 1;
        req.logprob_count = 5;
        let resp = self.client.complete(&req)?;
        self.queries += 1;
        let d = decide_from_response(&resp)?;
        self.decisions.insert(key, d);
        Ok(d)
    }
}

impl Suggestor for ClosedFormSuggestor {
    fn suggest(&mut self, ctx: &SuggestContext, _rng: &mut dyn rand::RngCore) -> Result<SuggestionSet> {
        let mut goals = Vec::new();
        match &ctx.obs.holding {
            Some(h) => {
                for r in &ctx.obs.seen {
                    if self.accepts(h, r)? {
                        goals.push(format!("place {h} in/on {r}"));
                    }
                }
            }
            None => {
                for cell in ctx.obs.local_view.iter().flatten() {
                    for o in &cell.contents {
                        if !self.accepts(o, &cell.kind)? {
                            goals.push(format!("pick {o}"));
                        }
                    }
                }
            }
        }
        Ok(SuggestionSet::new(&goals, SuggestionSource::ClosedFormLlm, ctx.timestep, usize::MAX))
    }

    fn network_calls(&self) -> u64 {
        self.client.network_calls()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_examples() {
        assert_eq!(
            parse_open_ended("- Eat plant\n- Chop tree\n- Attack skeleton"),
            vec!["eat plant", "chop tree", "attack skeleton"]
        );
        assert!(parse_open_ended("I think you should relax").is_empty());
        assert_eq!(parse_open_ended("- Chop tree\n\nUnrelated text"), vec!["chop tree"]);
        assert_eq!(parse_open_ended("\n- Drink water\n"), vec!["drink water"]);
    }

    #[test]
    fn decide_examples() {
        assert!(closed_form_decide(-0.3, -1.2).unwrap());
        assert!(!closed_form_decide(-1.2, -0.3).unwrap());
        assert!(!closed_form_decide(-0.5, -0.5).unwrap());
        assert!(closed_form_decide(f64::NAN, -0.5).is_err());
        let mut resp = CompletionResponse {
            text: " No.".into(),
            ..Default::default()
        };
        assert!(!decide_from_response(&resp).unwrap());
        resp.text = "Yes.".into();
        assert!(decide_from_response(&resp).unwrap());
        resp.first_token_logprobs.insert(" Yes".into(), -2.0);
        resp.first_token_logprobs.insert(" No".into(), -0.2);
        assert!(!decide_from_response(&resp).unwrap());
    }

    #[test]
    fn filter_examples() {
        let set = SuggestionSet::new(&["chop tree", "attack cow"], SuggestionSource::Uniform, 0, 7);
        let mut ledger = EpisodeLedger::new();
        assert_eq!(filter_achieved(&set, &ledger), set);
        ledger.mark("chop tree");
        assert_eq!(filter_achieved(&set, &ledger).goals, vec!["attack cow"]);
        ledger.mark("attack cow");
        assert!(filter_achieved(&set, &ledger).is_empty());
    }

    #[test]
    fn set_normalises() {
        let set = SuggestionSet::new(&[" Chop Tree", "chop tree", "", "Eat cow"], SuggestionSource::OpenEndedLlm, 3, 7);
        assert_eq!(set.goals, vec!["chop tree", "eat cow"]);
        let capped = SuggestionSet::new(&["a", "b", "c"], SuggestionSource::OpenEndedLlm, 0, 2);
        assert_eq!(capped.len(), 2);
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(goals in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,2}", 0..8)) {
            prop_assert_eq!(parse_open_ended(&render_goal_list(&goals)), goals);
        }

        #[test]
        fn filter_is_idempotent(
            goals in proptest::collection::vec("[a-d]{1,2}", 0..8),
            done in proptest::collection::vec("[a-d]{1,2}", 0..4),
        ) {
            let set = SuggestionSet::new(&goals, SuggestionSource::Uniform, 0, usize::MAX);
            let mut ledger = EpisodeLedger::new();
            for d in &done {
                ledger.mark(d);
            }
            let once = filter_achieved(&set, &ledger);
            prop_assert_eq!(filter_achieved(&once, &ledger), once);
        }
    }
}
