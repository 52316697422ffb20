//! Sample-only access to a model, with revealed states and an episode counter.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;

use crate::model::{sample_categorical, Mdp, Pomdp};

/// Episodic access to a fully observed chain.
pub trait EpisodicEnv {
    fn horizon(&self) -> usize;
    fn states(&self) -> usize;
    fn actions(&self) -> usize;
    /// Starts an episode and returns `s_1`.
    fn reset(&self, rng: &mut dyn rand::RngCore) -> usize;
    /// Returns `s_{h+1}` after playing `a` in `s` at step `h`.
    fn step(&self, h: usize, s: usize, a: usize, rng: &mut dyn rand::RngCore) -> usize;
    fn episodes(&self) -> usize;
}

/// Privileged simulator of a POMDP: each episode reveals states and observations.
#[derive(Debug)]
pub struct Simulator<'a> {
    model: &'a Pomdp,
    count: AtomicUsize,
}

impl<'a> Simulator<'a> {
    pub fn new(model: &'a Pomdp) -> Self {
        Simulator { model, count: AtomicUsize::new(0) }
    }

    pub fn horizon(&self) -> usize {
        self.model.horizon
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.model.states, self.model.actions, self.model.observations)
    }

    /// Rewards are known to the learner.
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.model.reward(h, s, a)
    }

    /// Starts an episode: `(s_1, o_1)`.
    pub fn start<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        self.count.fetch_add(1, Ordering::Relaxed);
        let s = sample_categorical(&self.model.mu1, rng);
        (s, sample_categorical(self.model.emit(1, s), rng))
    }

    /// `s_{h+1}`, plus `o_{h+1}` when `h < H`.
    pub fn advance<R: Rng + ?Sized>(&self, h: usize, s: usize, a: usize, rng: &mut R) -> (usize, Option<usize>) {
        let s2 = sample_categorical(self.model.trans(h, s, a), rng);
        let o2 = (h < self.model.horizon).then(|| sample_categorical(self.model.emit(h + 1, s2), rng));
        (s2, o2)
    }

    pub fn episodes(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }

    /// The true `mu1`, for configurations that treat it as known.
    pub fn known_initial(&self) -> &[f64] {
        &self.model.mu1
    }
}

impl EpisodicEnv for Simulator<'_> {
    fn horizon(&self) -> usize {
        self.model.horizon
    }
    fn states(&self) -> usize {
        self.model.states
    }
    fn actions(&self) -> usize {
        self.model.actions
    }
    fn reset(&self, rng: &mut dyn rand::RngCore) -> usize {
        self.start(rng).0
    }
    fn step(&self, h: usize, s: usize, a: usize, rng: &mut dyn rand::RngCore) -> usize {
        sample_categorical(self.model.trans(h, s, a), rng)
    }
    fn episodes(&self) -> usize {
        Simulator::episodes(self)
    }
}

#[derive(Debug)]
pub struct MdpEnv<'a> {
    model: &'a Mdp,
    count: AtomicUsize,
}

impl<'a> MdpEnv<'a> {
    pub fn new(model: &'a Mdp) -> Self {
        MdpEnv { model, count: AtomicUsize::new(0) }
    }
}

impl EpisodicEnv for MdpEnv<'_> {
    fn horizon(&self) -> usize {
        self.model.horizon
    }
    fn states(&self) -> usize {
        self.model.states
    }
    fn actions(&self) -> usize {
        self.model.actions
    }
    fn reset(&self, rng: &mut dyn rand::RngCore) -> usize {
        self.count.fetch_add(1, Ordering::Relaxed);
        sample_categorical(&self.model.mu1, rng)
    }
    fn step(&self, h: usize, s: usize, a: usize, rng: &mut dyn rand::RngCore) -> usize {
        sample_categorical(self.model.trans(h, s, a), rng)
    }
    fn episodes(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}
