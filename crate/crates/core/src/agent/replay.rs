//! Replay memory with n-step returns. Each assembled input is stored once;
//! transitions refer to inputs by absolute step index.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;

use crate::scalar::Scalar;

/// An n-step transition ready for a TD update.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayTransition<T> {
    pub input: Vec<T>,
    pub action: usize,
    pub n_step_return: f64,
    pub bootstrap_input: Vec<T>,
    /// Discount applied to the bootstrap value (`γ^m` for `m` realised steps).
    pub discount_power: f64,
    pub done: bool,
}

/// Compact stored form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stored {
    pub input: u64,
    pub action: usize,
    pub n_step_return: f64,
    pub next_input: u64,
    pub discount_power: f64,
    pub done: bool,
}

pub struct Batch<T> {
    pub inputs: Array2<T>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
    pub next_inputs: Array2<T>,
    pub discounts: Vec<f64>,
    pub dones: Vec<bool>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn from_transitions(ts: &[ReplayTransition<T>]) -> Self {
        let dim = ts.first().map_or(0, |t| t.input.len());
        let mut inputs = Array2::zeros((ts.len(), dim));
        let mut next_inputs = Array2::zeros((ts.len(), dim));
        for (i, t) in ts.iter().enumerate() {
            inputs.row_mut(i).assign(&ndarray::ArrayView1::from(&t.input[..]));
            next_inputs
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(&t.bootstrap_input[..]));
        }
        Batch {
            inputs,
            actions: ts.iter().map(|t| t.action).collect(),
            returns: ts.iter().map(|t| t.n_step_return).collect(),
            next_inputs,
            discounts: ts.iter().map(|t| t.discount_power).collect(),
            dones: ts.iter().map(|t| t.done).collect(),
        }
    }
}

pub struct ReplayBuffer<T> {
    dim: usize,
    capacity: usize,
    states: Vec<T>,
    next_abs: u64,
    transitions: VecDeque<Stored>,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            dim,
            capacity,
            states: vec![T::zero(); dim * capacity],
            next_abs: 0,
            transitions: VecDeque::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Stores an assembled input and returns its absolute index.
    pub fn push_state(&mut self, input: &[T]) -> u64 {
        assert_eq!(input.len(), self.dim, "replay input dimension");
        let abs = self.next_abs;
        let slot = (abs % self.capacity as u64) as usize;
        self.states[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(input);
        self.next_abs += 1;
        let oldest = self.next_abs.saturating_sub(self.capacity as u64);
        while self.transitions.front().is_some_and(|t| t.input < oldest) {
            self.transitions.pop_front();
        }
        abs
    }

    pub fn state(&self, abs: u64) -> &[T] {
        assert!(
            abs < self.next_abs && abs + self.capacity as u64 >= self.next_abs,
            "state {abs} evicted"
        );
        let slot = (abs % self.capacity as u64) as usize;
        &self.states[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn push(&mut self, t: Stored) {
        self.transitions.push_back(t);
    }

    pub fn stored(&self) -> impl Iterator<Item = &Stored> {
        self.transitions.iter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Batch<T> {
        let mut inputs = Array2::zeros((n, self.dim));
        let mut next_inputs = Array2::zeros((n, self.dim));
        let mut actions = Vec::with_capacity(n);
        let mut returns = Vec::with_capacity(n);
        let mut discounts = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        for i in 0..n {
            let t = self.transitions[rng.random_range(0..self.transitions.len())];
            inputs
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(self.state(t.input)));
            next_inputs
                .row_mut(i)
                .assign(&ndarray::ArrayView1::from(self.state(t.next_input)));
            actions.push(t.action);
            returns.push(t.n_step_return);
            discounts.push(t.discount_power);
            dones.push(t.done);
        }
        Batch {
            inputs,
            actions,
            returns,
            next_inputs,
            discounts,
            dones,
        }
    }

    /// Uniformly sampled stored inputs (used as a memory minibatch).
    pub fn sample_states<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<T>> {
        (0..n.min(self.transitions.len()))
            .map(|_| {
                let t = self.transitions[rng.random_range(0..self.transitions.len())];
                self.state(t.input).to_vec()
            })
            .collect()
    }
}

/// Turns a stream of one-step rewards into n-step transitions.
#[derive(Clone, Debug)]
pub struct NStepAccumulator {
    n: usize,
    gamma: f64,
    pending: VecDeque<(u64, usize, f64)>,
}

impl NStepAccumulator {
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(n >= 1);
        NStepAccumulator {
            n,
            gamma,
            pending: VecDeque::new(),
        }
    }

    fn emit(&self, next_input: u64, done: bool) -> Stored {
        let (input, action, _) = self.pending[0];
        let mut ret = 0.0;
        let mut disc = 1.0;
        for (_, _, r) in &self.pending {
            ret += disc * r;
            disc *= self.gamma;
        }
        Stored {
            input,
            action,
            n_step_return: ret,
            next_input,
            discount_power: disc,
            done,
        }
    }

    /// Records `(input, action, reward)` whose successor input is `next_input`.
    /// Returns the transitions that became complete.
    pub fn push(
        &mut self,
        input: u64,
        action: usize,
        reward: f64,
        next_input: u64,
        terminal: bool,
        truncated: bool,
    ) -> Vec<Stored> {
        self.pending.push_back((input, action, reward));
        let mut out = Vec::new();
        if terminal || truncated {
            while !self.pending.is_empty() {
                out.push(self.emit(next_input, terminal));
                self.pending.pop_front();
            }
        } else if self.pending.len() == self.n {
            out.push(self.emit(next_input, false));
            self.pending.pop_front();
        }
        out
    }

    pub fn clear(&mut self) {
        self.pending.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_step_return() {
        let mut acc = NStepAccumulator::new(3, 0.99);
        assert!(acc.push(0, 1, 1.0, 1, false, false).is_empty());
        assert!(acc.push(1, 0, 0.0, 2, false, false).is_empty());
        let t = acc.push(2, 0, 0.0, 3, false, false);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].n_step_return, 1.0);
        assert!((t[0].discount_power - 0.970299).abs() < 1e-12);
        assert_eq!(t[0].next_input, 3);
    }

    #[test]
    fn eviction_keeps_states_valid() {
        let mut rb = ReplayBuffer::<f32>::new(2, 4);
        for i in 0..10u64 {
            let abs = rb.push_state(&[i as f32, 0.0]);
            if i > 0 {
                rb.push(Stored {
                    input: abs - 1,
                    action: 0,
                    n_step_return: 0.0,
                    next_input: abs,
                    discount_power: 0.99,
                    done: false,
                });
            }
        }
        assert!(rb.len() <= 4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let b = rb.sample(16, &mut rng);
        for i in 0..16 {
            assert_eq!(b.next_inputs[[i, 0]], b.inputs[[i, 0]] + 1.0);
        }
    }

    proptest! {
        #[test]
        fn truncated_episodes_use_realised_steps(
            rewards in proptest::collection::vec(-2.0f64..2.0, 1..6),
            terminal in any::<bool>(),
        ) {
            let gamma = 0.9;
            let n = 3;
            let mut acc = NStepAccumulator::new(n, gamma);
            let mut out = Vec::new();
            let len = rewards.len();
            for (t, r) in rewards.iter().enumerate() {
                let last = t + 1 == len;
                out.extend(acc.push(t as u64, 0, *r, t as u64 + 1, last && terminal, last && !terminal));
            }
            prop_assert_eq!(out.len(), len);
            for (t, tr) in out.iter().enumerate() {
                let m = n.min(len - t);
                let expected: f64 = (0..m).map(|i| gamma.powi(i as i32) * rewards[t + i]).sum();
                prop_assert!((tr.n_step_return - expected).abs() < 1e-12);
                prop_assert!((tr.discount_power - gamma.powi(m as i32)).abs() < 1e-12);
                prop_assert_eq!(tr.next_input, (t + m) as u64);
                prop_assert_eq!(tr.done, terminal && t + m == len);
            }
        }
    }
}
