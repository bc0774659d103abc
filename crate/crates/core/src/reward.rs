//! Similarity-based goal reward and the baseline intrinsic rewards.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::nn::{Adam, Mlp};
use crate::env_core::EpisodeLedger;
use crate::error::{Error, Result};
use crate::hashing::fnv1a64;
use crate::scalar::Scalar;

pub const EMBED_DIM: usize = 128;

/// Threshold for templated captions, where a match is effectively exact.
pub const DEFAULT_THRESHOLD: f64 = 0.99;
/// Threshold when captions are noisy or paraphrased.
pub const NOISY_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector<T> {
    components: Vec<T>,
    norm: f64,
}

impl<T: Scalar> EmbeddingVector<T> {
    pub fn new(components: Vec<T>) -> Self {
        let norm = components
            .iter()
            .map(|c| {
                let c = c.to_f64_lossy();
                c * c
            })
            .sum::<f64>()
            .sqrt();
        EmbeddingVector { components, norm }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![T::zero(); dim])
    }

    pub fn components(&self) -> &[T] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn scaled(&self, a: T) -> Self {
        Self::new(self.components.iter().map(|c| *c * a).collect())
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine<T: Scalar>(u: &EmbeddingVector<T>, v: &EmbeddingVector<T>) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Dimension {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    if u.norm == 0.0 || v.norm == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u
        .components
        .iter()
        .zip(&v.components)
        .map(|(a, b)| a.to_f64_lossy() * b.to_f64_lossy())
        .sum();
    Ok((dot / (u.norm * v.norm)).clamp(-1.0, 1.0))
}

/// Text encoder behind the similarity reward.
pub trait Embedder<T>: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> EmbeddingVector<T>;
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn normalised<T: Scalar>(raw: Vec<f64>) -> EmbeddingVector<T> {
    let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        return EmbeddingVector::new(raw.into_iter().map(T::from_f64_lossy).collect());
    }
    EmbeddingVector::new(raw.into_iter().map(|v| T::from_f64_lossy(v / n)).collect())
}

/// Bag of hashed tokens.
#[derive(Clone, Copy, Debug, Default)]
pub struct LexicalEmbedder;

impl LexicalEmbedder {
    pub fn bucket(token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % EMBED_DIM as u64) as usize
    }
}

impl<T: Scalar> Embedder<T> for LexicalEmbedder {
    fn dim(&self) -> usize {
        EMBED_DIM
    }

    fn embed(&self, text: &str) -> EmbeddingVector<T> {
        let mut raw = vec![0.0; EMBED_DIM];
        for t in tokens(text) {
            raw[Self::bucket(&t)] += 1.0;
        }
        normalised(raw)
    }
}

/// Sum of per-token Gaussian vectors seeded by the token hash.
#[derive(Clone, Copy, Debug)]
pub struct RandomProjectionEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for RandomProjectionEmbedder {
    fn default() -> Self {
        RandomProjectionEmbedder {
            dim: EMBED_DIM,
            seed: 0x5eed,
        }
    }
}

impl<T: Scalar> Embedder<T> for RandomProjectionEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> EmbeddingVector<T> {
        let mut raw = vec![0.0; self.dim];
        for t in tokens(text) {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(t.as_bytes()) ^ self.seed);
            for r in raw.iter_mut() {
                let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                let u2: f64 = rng.random();
                *r += (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            }
        }
        normalised(raw)
    }
}

/// Memoises another embedder.
pub struct CachedEmbedder<T, E> {
    inner: E,
    memo: Mutex<HashMap<String, EmbeddingVector<T>>>,
}

impl<T, E> CachedEmbedder<T, E> {
    pub fn new(inner: E) -> Self {
        CachedEmbedder {
            inner,
            memo: Mutex::new(HashMap::new()),
        }
    }
}

impl<T: Scalar, E: Embedder<T>> Embedder<T> for CachedEmbedder<T, E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> EmbeddingVector<T> {
        if let Some(v) = self.memo.lock().unwrap().get(text) {
            return v.clone();
        }
        let v = self.inner.embed(text);
        self.memo.lock().unwrap().insert(text.to_string(), v.clone());
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub delta_max: f64,
    pub matched_goal: Option<String>,
    pub threshold: f64,
    pub reward: f64,
}

/// Rewards the best cosine match between the caption and any goal when it
/// clears `threshold`. Ties keep the earliest goal.
pub fn ellm_reward<T: Scalar, S: AsRef<str>>(
    caption: &str,
    goals: &[S],
    threshold: f64,
    embedder: &dyn Embedder<T>,
) -> RewardRecord {
    let mut best = 0.0;
    let mut best_goal = None;
    if !caption.trim().is_empty() && !goals.is_empty() {
        let c = embedder.embed(caption);
        best = f64::NEG_INFINITY;
        for g in goals {
            let s = cosine(&c, &embedder.embed(g.as_ref())).unwrap_or(0.0);
            if s > best {
                best = s;
                best_goal = Some(g.as_ref().to_string());
            }
        }
    }
    let hit = best > threshold;
    RewardRecord {
        delta_max: best,
        matched_goal: if hit { best_goal } else { None },
        threshold,
        reward: if hit { best } else { 0.0 },
    }
}

/// Exact-match reward used by the Oracle, Novelty and Uniform baselines.
/// With a ledger, goals already achieved this episode pay nothing.
pub fn hardcoded_goal_reward<S: AsRef<str>>(caption: &str, goals: &[S], ledger: Option<&EpisodeLedger>) -> f64 {
    if caption.is_empty() || !goals.iter().any(|g| g.as_ref() == caption) {
        return 0.0;
    }
    match ledger {
        Some(l) if l.contains(caption) => 0.0,
        _ => 1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RndConfig {
    pub hidden: usize,
    pub output: usize,
    pub lr: f64,
}

impl Default for RndConfig {
    fn default() -> Self {
        RndConfig {
            hidden: 64,
            output: 32,
            lr: 1e-3,
        }
    }
}

/// Random network distillation: a predictor chases a frozen random target.
pub struct RndState<T> {
    net: Mlp,
    target: Vec<T>,
    predictor: Vec<T>,
    adam: Adam<T>,
}

impl<T: Scalar> RndState<T> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, cfg: &RndConfig, rng: &mut R) -> Self {
        let net = Mlp::new(&[input_dim, cfg.hidden, cfg.output], 0, false);
        let mut target = vec![T::zero(); net.param_count()];
        let mut predictor = target.clone();
        net.init(&mut target, rng);
        net.init(&mut predictor, rng);
        RndState {
            adam: Adam::new(predictor.len(), cfg.lr),
            net,
            target,
            predictor,
        }
    }

    pub fn target_params(&self) -> &[T] {
        &self.target
    }

    /// Prediction error without training.
    pub fn novelty(&self, x: &[T]) -> Result<f64> {
        if x.len() != self.net.in_dim() {
            return Err(Error::Dimension {
                expected: self.net.in_dim(),
                got: x.len(),
            });
        }
        let v = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        let t = self.net.forward(&self.target, v);
        let p = self.net.forward(&self.predictor, v);
        Ok(l2(p.output(), t.output()))
    }

    /// Returns the prediction error, then takes one optimiser step.
    pub fn reward(&mut self, x: &[T]) -> Result<f64> {
        let err = self.novelty(x)?;
        let v = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        let t = self.net.forward(&self.target, v);
        let p = self.net.forward(&self.predictor, v);
        let dout: Array2<T> = (p.output() - t.output()).mapv(|d| d + d);
        let mut grads = vec![T::zero(); self.predictor.len()];
        self.net.backward(&self.predictor, &p, dout, &mut grads);
        self.adam.step(&mut self.predictor, &grads);
        Ok(err)
    }
}

fn l2<T: Scalar>(a: &Array2<T>, b: &Array2<T>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

pub fn l2_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Ring of state embeddings for the particle-based entropy reward.
#[derive(Clone, Debug)]
pub struct AptBuffer<T> {
    k: usize,
    capacity: usize,
    items: VecDeque<Vec<T>>,
}

pub const APT_K: usize = 12;

impl<T: Scalar> AptBuffer<T> {
    pub fn new(k: usize, capacity: usize) -> Result<Self> {
        if k == 0 || capacity == 0 {
            return Err(Error::config("APT needs k >= 1 and a positive capacity"));
        }
        Ok(AptBuffer {
            k,
            capacity,
            items: VecDeque::with_capacity(capacity),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, e: Vec<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    /// Replaces the contents, e.g. with a minibatch drawn from memory.
    pub fn fill(&mut self, items: impl IntoIterator<Item = Vec<T>>) {
        self.items.clear();
        for e in items {
            self.push(e);
        }
    }

    /// Indices of the `k` nearest entries, nearest first (ties by index).
    pub fn nearest(&self, query: &[T]) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = self
            .items
            .iter()
            .enumerate()
            .map(|(i, e)| (i, l2_distance(query, e)))
            .collect();
        let k = self.k.min(d.len());
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            d.truncate(k);
        }
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d
    }
}

/// `log(1 + mean kNN distance)`; 0 for an empty buffer.
pub fn apt_reward<T: Scalar>(embedding: &[T], buffer: &AptBuffer<T>) -> f64 {
    let nn = buffer.nearest(embedding);
    if nn.is_empty() {
        return 0.0;
    }
    let mean = nn.iter().map(|(_, d)| d).sum::<f64>() / nn.len() as f64;
    mean.ln_1p()
}

pub const NOVELD_ALPHA: f64 = 0.5;

/// Novelty-difference reward, paid only on the first visit to a state.
pub fn noveld_reward(novelty_s: f64, novelty_next: f64, first_visit: bool, alpha: f64) -> f64 {
    if !first_visit {
        return 0.0;
    }
    (novelty_next - alpha * novelty_s).max(0.0)
}

/// Per-episode visited-state set for the NovelD gate.
#[derive(Clone, Debug, Default)]
pub struct VisitSet(HashSet<u64>);

impl VisitSet {
    /// True when `hash` was not seen before this episode.
    pub fn visit(&mut self, hash: u64) -> bool {
        self.0.insert(hash)
    }

    pub fn clear(&mut self) {
        self.0.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(t: &str) -> EmbeddingVector<f64> {
        LexicalEmbedder.embed(t)
    }

    #[test]
    fn lexical_examples() {
        assert_ne!(LexicalEmbedder::bucket("chop"), LexicalEmbedder::bucket("tree"));
        assert_ne!(LexicalEmbedder::bucket("grass"), LexicalEmbedder::bucket("tree"));
        assert_ne!(LexicalEmbedder::bucket("chop"), LexicalEmbedder::bucket("grass"));
        let e = lex("chop tree");
        assert_eq!(e.components().iter().filter(|c| **c != 0.0).count(), 2);
        assert_eq!(lex(""), EmbeddingVector::zeros(EMBED_DIM));
        assert_eq!(lex("Chop Tree"), e);
        let c = cosine(&e, &lex("chop grass")).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
        assert_eq!(cosine(&e, &lex("")).unwrap(), 0.0);
        assert!((cosine(&e, &e).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = EmbeddingVector::<f64>::zeros(3);
        assert!(cosine(&a, &lex("x")).is_err());
    }

    #[test]
    fn reward_examples() {
        let r = ellm_reward("chop tree", &["chop tree"], 0.99, &LexicalEmbedder as &dyn Embedder<f64>);
        assert_eq!(r.reward, 1.0);
        assert_eq!(r.matched_goal.as_deref(), Some("chop tree"));
        let r = ellm_reward("attack cow", &["chop tree", "attack cow"], 0.99, &LexicalEmbedder as &dyn Embedder<f64>);
        assert_eq!(r.delta_max, 1.0);
        assert_eq!(r.matched_goal.as_deref(), Some("attack cow"));
        let r = ellm_reward("chop tree", &["eat zombie"], 0.99, &LexicalEmbedder as &dyn Embedder<f64>);
        assert_eq!((r.reward, r.matched_goal), (0.0, None));
        let none: [&str; 0] = [];
        assert_eq!(ellm_reward("chop tree", &none, 0.5, &LexicalEmbedder as &dyn Embedder<f64>).reward, 0.0);
        assert_eq!(ellm_reward("", &["chop tree"], 0.5, &LexicalEmbedder as &dyn Embedder<f64>).reward, 0.0);
    }

    #[test]
    fn hardcoded_examples() {
        let goals = ["drink tree", "chop tree"];
        let mut ledger = EpisodeLedger::new();
        assert_eq!(hardcoded_goal_reward("drink tree", &goals, Some(&ledger)), 1.0);
        ledger.mark("drink tree");
        assert_eq!(hardcoded_goal_reward("drink tree", &goals, Some(&ledger)), 0.0);
        assert_eq!(hardcoded_goal_reward("drink tree", &goals, None), 1.0);
        assert_eq!(hardcoded_goal_reward("eat cow", &goals, None), 0.0);
    }

    #[test]
    fn apt_examples() {
        let mut b = AptBuffer::<f64>::new(1, 4).unwrap();
        b.push(vec![0.0, 0.0]);
        assert_eq!(apt_reward(&[0.0, 0.0], &b), 0.0);
        b.fill([vec![std::f64::consts::E - 1.0, 0.0]]);
        assert!((apt_reward(&[0.0, 0.0], &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noveld_examples() {
        assert_eq!(noveld_reward(1.0, 1.0, true, 0.5), 0.5);
        assert_eq!(noveld_reward(1.0, 1.0, false, 0.5), 0.0);
        assert_eq!(noveld_reward(1.0, 0.4, true, 0.5), 0.0);
        let mut v = VisitSet::default();
        assert!(v.visit(3));
        assert!(!v.visit(3));
    }

    #[test]
    fn rnd_converges_and_target_is_frozen() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rnd = RndState::<f64>::new(6, &RndConfig::default(), &mut rng);
        let frozen = rnd.target_params().to_vec();
        let x = [0.5, -0.3, 0.1, 0.9, 0.0, 0.2];
        let first = rnd.reward(&x).unwrap();
        for _ in 0..3000 {
            rnd.reward(&x).unwrap();
        }
        let last = rnd.novelty(&x).unwrap();
        assert!(last <= 1e-3, "{first} -> {last}");
        assert_eq!(rnd.target_params(), &frozen[..]);
        assert!(rnd.novelty(&[-1.0, 1.0, 0.7, -0.2, 0.4, 0.8]).unwrap() > last);
    }
}
