//! Double DQN with dueling heads, n-step returns and optional text inputs.

pub mod checkpoint;
pub mod nn;
pub mod replay;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use nn::{Adam, DuelingQNetwork, QNetShape};
use replay::{Batch, NStepAccumulator, ReplayBuffer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub n_step: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    /// Gradient updates between target-network syncs.
    pub target_update_interval: u64,
    pub eps_start: f64,
    pub eps_min: f64,
    /// Fraction of the step budget over which ε decays linearly.
    pub eps_decay_fraction: f64,
    pub update_every: u64,
    pub seed_frames: u64,
    pub frame_stack: usize,
    pub hidden: usize,
    pub replay_capacity: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self::gridcraft()
    }
}

impl AgentConfig {
    pub fn gridcraft() -> Self {
        AgentConfig {
            gamma: 0.99,
            n_step: 3,
            batch_size: 64,
            lr: 6.25e-5,
            tau: 1.0,
            target_update_interval: 1000,
            eps_start: 1.0,
            eps_min: 0.01,
            eps_decay_fraction: 0.2,
            update_every: 4,
            seed_frames: 5000,
            frame_stack: 4,
            hidden: 512,
            replay_capacity: 100_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    pub fn housegrid() -> Self {
        AgentConfig {
            batch_size: 256,
            lr: 1e-4,
            eps_min: 0.1,
            ..Self::gridcraft()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.n_step == 0 || self.batch_size == 0 || self.frame_stack == 0 || self.hidden == 0 {
            return bad("n_step, batch_size, frame_stack and hidden must be positive");
        }
        if self.update_every == 0 || self.target_update_interval == 0 {
            return bad("update_every and target_update_interval must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_min) || !(0.0..=1.0).contains(&self.eps_start) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if self.lr < 0.0 {
            return bad("lr must be non-negative");
        }
        Ok(())
    }

    /// ε after `step` of `total` steps.
    pub fn epsilon(&self, step: u64, total: u64) -> f64 {
        let horizon = (total as f64 * self.eps_decay_fraction).max(1.0);
        let frac = (step as f64 / horizon).min(1.0);
        self.eps_start + frac * (self.eps_min - self.eps_start)
    }
}

/// Shape of the assembled network input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputLayout {
    pub obs_dim: usize,
    pub frame_stack: usize,
    pub caption_dim: Option<usize>,
    pub goal_dim: Option<usize>,
}

impl InputLayout {
    pub fn input_dim(&self) -> usize {
        self.obs_dim * self.frame_stack + self.caption_dim.unwrap_or(0) + self.goal_dim.unwrap_or(0)
    }
}

/// Builds network inputs as `[frame stack, caption?, goals?]`.
#[derive(Clone, Debug)]
pub struct InputAssembler<T> {
    obs_dim: usize,
    frame_stack: usize,
    caption_dim: Option<usize>,
    goal_dim: Option<usize>,
    frames: Vec<Vec<T>>,
}

impl<T: Scalar> InputAssembler<T> {
    pub fn new(obs_dim: usize, frame_stack: usize, caption_dim: Option<usize>, goal_dim: Option<usize>) -> Self {
        InputAssembler {
            obs_dim,
            frame_stack,
            caption_dim,
            goal_dim,
            frames: Vec::new(),
        }
    }

    pub fn from_layout(layout: InputLayout) -> Self {
        Self::new(layout.obs_dim, layout.frame_stack, layout.caption_dim, layout.goal_dim)
    }

    pub fn layout(&self) -> InputLayout {
        InputLayout {
            obs_dim: self.obs_dim,
            frame_stack: self.frame_stack,
            caption_dim: self.caption_dim,
            goal_dim: self.goal_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layout().input_dim()
    }

    /// Most recent frame.
    pub fn latest(&self) -> Option<&[T]> {
        self.frames.last().map(Vec::as_slice)
    }

    /// Starts an episode: the stack is filled with copies of `obs`.
    pub fn reset(&mut self, obs: &[T]) -> Result<()> {
        self.check(obs.len(), self.obs_dim)?;
        self.frames = vec![obs.to_vec(); self.frame_stack];
        Ok(())
    }

    pub fn push(&mut self, obs: &[T]) -> Result<()> {
        self.check(obs.len(), self.obs_dim)?;
        if self.frames.is_empty() {
            return self.reset(obs);
        }
        self.frames.remove(0);
        self.frames.push(obs.to_vec());
        Ok(())
    }

    fn check(&self, got: usize, expected: usize) -> Result<()> {
        if got == expected {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }

    fn slot(&self, out: &mut Vec<T>, dim: Option<usize>, emb: Option<&[T]>) -> Result<()> {
        match (dim, emb) {
            (None, None) => Ok(()),
            (None, Some(e)) => Err(Error::Dimension {
                expected: 0,
                got: e.len(),
            }),
            (Some(d), None) => {
                out.extend(std::iter::repeat_n(T::zero(), d));
                Ok(())
            }
            (Some(d), Some(e)) => {
                self.check(e.len(), d)?;
                out.extend_from_slice(e);
                Ok(())
            }
        }
    }

    /// Assembles the current input; a missing embedding in an enabled slot
    /// becomes zeros.
    pub fn assemble(&self, caption: Option<&[T]>, goals: Option<&[T]>) -> Result<Vec<T>> {
        if self.frames.is_empty() {
            return Err(Error::config("input assembler used before reset"));
        }
        let mut out = Vec::with_capacity(self.input_dim());
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        self.slot(&mut out, self.caption_dim, caption)?;
        self.slot(&mut out, self.goal_dim, goals)?;
        Ok(out)
    }
}

/// Batched Q-value evaluation, abstracted so target computation can be
/// instrumented.
pub trait QFunction<T> {
    fn q_batch(&self, inputs: ArrayView2<T>) -> Array2<T>;
}

impl<T: Scalar> QFunction<T> for DuelingQNetwork<T> {
    fn q_batch(&self, inputs: ArrayView2<T>) -> Array2<T> {
        DuelingQNetwork::q_batch(self, inputs)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: impl IntoIterator<Item = T>) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Double-Q n-step targets: the online network picks the bootstrap action,
/// the target network evaluates it.
pub fn td_target<T: Scalar>(
    batch: &Batch<T>,
    online: &dyn QFunction<T>,
    target: &dyn QFunction<T>,
) -> Vec<f64> {
    let q_online = online.q_batch(batch.next_inputs.view());
    let q_target = target.q_batch(batch.next_inputs.view());
    (0..batch.len())
        .map(|i| {
            if batch.dones[i] {
                return batch.returns[i];
            }
            let a = argmax(q_online.row(i).iter().copied());
            batch.returns[i] + batch.discounts[i] * q_target[[i, a]].to_f64_lossy()
        })
        .collect()
}

/// Online network, target network, optimiser and replay memory.
pub struct DqnAgent<T: Scalar> {
    pub cfg: AgentConfig,
    pub online: DuelingQNetwork<T>,
    pub target: DuelingQNetwork<T>,
    adam: Adam<T>,
    pub replay: ReplayBuffer<T>,
    nstep: NStepAccumulator,
    rng: ChaCha8Rng,
    updates: u64,
    last_state: Option<u64>,
}

impl<T: Scalar> DqnAgent<T> {
    pub fn new(cfg: AgentConfig, input_dim: usize, n_actions: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = QNetShape {
            input_dim,
            hidden: cfg.hidden,
            n_actions,
        };
        let online = DuelingQNetwork::new(shape, &mut rng);
        Ok(Self::from_network(cfg, online, rng))
    }

    /// Wraps an existing network (e.g. a loaded checkpoint).
    pub fn from_network(cfg: AgentConfig, online: DuelingQNetwork<T>, rng: ChaCha8Rng) -> Self {
        let mut adam = Adam::new(online.param_count(), cfg.lr);
        adam.beta1 = cfg.adam_beta1;
        adam.beta2 = cfg.adam_beta2;
        adam.eps = cfg.adam_eps;
        DqnAgent {
            replay: ReplayBuffer::new(online.shape().input_dim, cfg.replay_capacity.max(cfg.n_step + 2)),
            nstep: NStepAccumulator::new(cfg.n_step, cfg.gamma),
            target: online.clone(),
            online,
            adam,
            rng,
            updates: 0,
            last_state: None,
            cfg,
        }
    }

    pub fn shape(&self) -> QNetShape {
        self.online.shape()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
        self.adam.lr = lr;
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn greedy(&self, input: &[T]) -> Result<usize> {
        Ok(argmax(self.online.q_values(input)?))
    }

    /// ε-greedy action; with a guide, half of the exploratory actions come
    /// from the guide's greedy choice.
    pub fn act(&mut self, input: &[T], epsilon: f64, guide: Option<&dyn Fn() -> usize>) -> Result<usize> {
        act_with(&self.online, input, epsilon, &mut self.rng, guide)
    }

    /// Marks the start of an episode at `input`.
    pub fn begin_episode(&mut self, input: &[T]) {
        self.nstep.clear();
        self.last_state = Some(self.replay.push_state(input));
    }

    /// Stores the transition to `next_input` and returns the number of
    /// transitions added to memory.
    pub fn record(&mut self, action: usize, reward: f64, next_input: &[T], terminal: bool, truncated: bool) -> usize {
        let prev = self
            .last_state
            .expect("begin_episode must be called before record");
        let next = self.replay.push_state(next_input);
        let done = self.nstep.push(prev, action, reward, next, terminal, truncated);
        let n = done.len();
        for t in done {
            self.replay.push(t);
        }
        self.last_state = Some(next);
        n
    }

    /// One gradient step on a sampled minibatch; `None` until memory holds
    /// enough transitions.
    pub fn train_step(&mut self) -> Result<Option<f64>> {
        if self.replay.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng);
        self.update(&batch).map(Some)
    }

    /// Optimises mean squared TD error on `batch` and syncs the target
    /// network on schedule. Returns the loss before the step.
    pub fn update(&mut self, batch: &Batch<T>) -> Result<f64> {
        let y = td_target(batch, &self.online, &self.target);
        let trace = self.online.forward(batch.inputs.view());
        let q = trace.q();
        let n = batch.len() as f64;
        let mut dq = Array2::<T>::zeros(q.raw_dim());
        let mut loss = 0.0;
        for (i, (&a, yi)) in batch.actions.iter().zip(&y).enumerate() {
            let err = q[[i, a]].to_f64_lossy() - yi;
            loss += err * err / n;
            dq[[i, a]] = T::from_f64_lossy(2.0 * err / n);
        }
        if !loss.is_finite() {
            let mut dump = format!("loss {loss} at update {}; targets:", self.updates);
            for v in y.iter().take(8) {
                dump.push_str(&format!(" {v}"));
            }
            log::error!("{dump}");
            return Err(Error::NonFinite(dump));
        }
        let grads = self.online.backward(&trace, &dq);
        self.adam.step(&mut self.online.params, &grads);
        self.updates += 1;
        if self.updates % self.cfg.target_update_interval == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    pub fn sync_target(&mut self) {
        if self.cfg.tau >= 1.0 {
            self.target.copy_from(&self.online);
        } else {
            let tau = T::from_f64_lossy(self.cfg.tau);
            for (t, o) in self.target.params.iter_mut().zip(&self.online.params) {
                *t = tau * *o + (T::one() - tau) * *t;
            }
        }
    }
}

/// ε-greedy selection against `net`.
pub fn act_with<T: Scalar, R: Rng + ?Sized>(
    net: &DuelingQNetwork<T>,
    input: &[T],
    epsilon: f64,
    rng: &mut R,
    guide: Option<&dyn Fn() -> usize>,
) -> Result<usize> {
    let n = net.shape().n_actions;
    if rng.random::<f64>() >= epsilon {
        return Ok(argmax(net.q_values(input)?));
    }
    if let Some(g) = guide {
        if rng.random::<f64>() < 0.5 {
            return Ok(g());
        }
    }
    Ok(rng.random_range(0..n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax([1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax([0.0f32; 4]), 0);
    }

    #[test]
    fn epsilon_schedule() {
        let c = AgentConfig::gridcraft();
        assert_eq!(c.epsilon(0, 1000), 1.0);
        assert!((c.epsilon(100, 1000) - 0.505).abs() < 1e-12);
        assert!((c.epsilon(200, 1000) - 0.01).abs() < 1e-12);
        assert_eq!(c.epsilon(900, 1000), c.epsilon(200, 1000));
    }

    #[test]
    fn assembler_dims() {
        let mut a = InputAssembler::<f32>::new(3, 4, Some(128), Some(128));
        a.reset(&[1.0, 2.0, 3.0]).unwrap();
        let x = a.assemble(None, None).unwrap();
        assert_eq!(x.len(), 4 * 3 + 128 + 128);
        assert!(x[12..].iter().all(|v| *v == 0.0));
        assert!(a.push(&[1.0]).is_err());
        assert!(a.assemble(Some(&[0.0; 5]), None).is_err());
        let free = InputAssembler::<f32>::new(3, 4, None, None);
        assert_eq!(free.input_dim(), 12);
    }

    #[test]
    fn hyperparameter_defaults() {
        let g = AgentConfig::gridcraft();
        assert_eq!((g.batch_size, g.lr, g.eps_min), (64, 6.25e-5, 0.01));
        let h = AgentConfig::housegrid();
        assert_eq!((h.batch_size, h.lr, h.eps_min), (256, 1e-4, 0.1));
        assert_eq!((h.n_step, h.frame_stack, h.update_every, h.seed_frames), (3, 4, 4, 5000));
    }

    fn numeric_grad(f: &dyn Fn(&[f64]) -> f64, p: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..p.len())
            .map(|i| {
                let mut a = p.to_vec();
                let mut b = p.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let mlp = nn::Mlp::new(&[1, 3, 1], 0, false);
        assert_eq!(mlp.param_count(), 10);
        let p = vec![0.3, -0.7, 0.5, 0.1, 0.2, -0.4, 0.9, -0.6, 0.8, 0.05];
        let x = ndarray::array![[0.7], [-1.3]];
        let loss = |p: &[f64]| mlp.forward(p, x.view()).output().iter().map(|v| v * v).sum::<f64>();
        let tr = mlp.forward(&p, x.view());
        let dout = tr.output().mapv(|v| 2.0 * v);
        let mut g = vec![0.0; 10];
        mlp.backward(&p, &tr, dout, &mut g);
        for (a, n) in g.iter().zip(numeric_grad(&loss, &p)) {
            assert!((a - n).abs() < 1e-6, "{a} vs {n}");
        }
    }

    #[test]
    fn dueling_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = QNetShape {
            input_dim: 3,
            hidden: 4,
            n_actions: 3,
        };
        let net = DuelingQNetwork::<f64>::new(shape, &mut rng);
        let x = ndarray::array![[0.5, -0.2, 0.9], [1.1, 0.4, -0.8]];
        let w = ndarray::array![[1.0, -2.0, 0.5], [0.3, 0.0, 1.5]];
        let tr = net.forward(x.view());
        let g = net.backward(&tr, &w);
        let base = net.clone();
        let loss = |p: &[f64]| {
            let mut n = base.clone();
            n.params.copy_from_slice(p);
            (&n.q_batch(x.view()) * &w).sum()
        };
        let num = numeric_grad(&loss, &base.params);
        for (a, n) in g.iter().zip(&num) {
            assert!((a - n).abs() < 1e-5, "{a} vs {n}");
        }
    }

    struct Fixed(Array2<f64>, std::cell::Cell<usize>);

    impl QFunction<f64> for Fixed {
        fn q_batch(&self, _inputs: ArrayView2<f64>) -> Array2<f64> {
            self.1.set(self.1.get() + 1);
            self.0.clone()
        }
    }

    #[test]
    fn double_q_target_uses_online_argmax() {
        let batch = replay::Batch::<f64> {
            inputs: Array2::zeros((2, 1)),
            actions: vec![0, 0],
            returns: vec![1.0, 2.0],
            next_inputs: Array2::zeros((2, 1)),
            discounts: vec![0.5, 0.5],
            dones: vec![false, true],
        };
        let online = Fixed(ndarray::array![[0.0, 5.0], [9.0, 0.0]], Default::default());
        let target = Fixed(ndarray::array![[100.0, 10.0], [7.0, 7.0]], Default::default());
        let y = td_target(&batch, &online, &target);
        assert_eq!(y, vec![1.0 + 0.5 * 10.0, 2.0]);
        assert_eq!((online.1.get(), target.1.get()), (1, 1));
    }

    fn chain_cfg() -> AgentConfig {
        AgentConfig {
            gamma: 0.9,
            n_step: 1,
            batch_size: 32,
            lr: 1e-2,
            target_update_interval: 50,
            hidden: 16,
            replay_capacity: 5000,
            ..AgentConfig::gridcraft()
        }
    }

    #[test]
    fn learns_chain_mdp() {
        // States 0..4 one-hot; action 1 moves right, action 0 resets to 0.
        // Reaching state 4 pays 1 and ends the episode.
        let n = 5;
        let one_hot = |s: usize| {
            let mut v = vec![0.0f64; n];
            v[s] = 1.0;
            v
        };
        let mut agent = DqnAgent::<f64>::new(chain_cfg(), n, 2, 7).unwrap();
        let mut s = 0;
        agent.begin_episode(&one_hot(s));
        for step in 0..4000u64 {
            let eps = agent.cfg.epsilon(step, 4000).max(0.2);
            let a = agent.act(&one_hot(s), eps, None).unwrap();
            let next = if a == 1 { s + 1 } else { 0 };
            let done = next == n - 1;
            let r = if done { 1.0 } else { 0.0 };
            agent.record(a, r, &one_hot(next), done, false);
            agent.train_step().unwrap();
            s = if done { 0 } else { next };
            if done {
                agent.begin_episode(&one_hot(s));
            }
        }
        for s in 0..n - 1 {
            let q = agent.online.q_values(&one_hot(s)).unwrap();
            assert_eq!(argmax(q.iter().copied()), 1, "state {s}: {q:?}");
            let expected = 0.9f64.powi((n - 2 - s) as i32);
            assert!((q[1] - expected).abs() < 0.15, "state {s}: {q:?} vs {expected}");
        }
    }

    #[test]
    fn act_distribution_matches_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shape = QNetShape {
            input_dim: 2,
            hidden: 4,
            n_actions: 4,
        };
        let net = DuelingQNetwork::<f64>::new(shape, &mut rng);
        let x = [0.3, -0.5];
        let g = argmax(net.q_values(&x).unwrap());
        let guide_action = (g + 1) % 4;
        let guide = move || guide_action;
        let trials = 20_000;
        let mut counts = [0usize; 4];
        for _ in 0..trials {
            counts[act_with(&net, &x, 0.4, &mut rng, Some(&guide)).unwrap()] += 1;
        }
        let freq = |a: usize| counts[a] as f64 / trials as f64;
        // greedy 0.6 + 0.4*0.5/4; guide 0.4*0.5 + 0.4*0.5/4
        assert!((freq(g) - 0.65).abs() < 0.015);
        assert!((freq(guide_action) - 0.25).abs() < 0.015);
    }

    #[test]
    fn loss_decreases_on_fixed_batch() {
        let mut cfg = chain_cfg();
        cfg.lr = 1e-3;
        cfg.target_update_interval = 1_000_000;
        let mut agent = DqnAgent::<f64>::new(cfg, 3, 2, 1).unwrap();
        let ts: Vec<replay::ReplayTransition<f64>> = (0..8)
            .map(|i| replay::ReplayTransition {
                input: vec![i as f64 / 8.0, 1.0, -0.5],
                action: i % 2,
                n_step_return: (i as f64).sin(),
                bootstrap_input: vec![0.0, 0.0, 1.0],
                discount_power: 0.9,
                done: i % 3 == 0,
            })
            .collect();
        let batch = replay::Batch::from_transitions(&ts);
        let first = agent.update(&batch).unwrap();
        let mut last = first;
        for _ in 0..200 {
            last = agent.update(&batch).unwrap();
        }
        assert!(last < first * 0.5, "{first} -> {last}");
    }
}
