//! Policy representations, exact evaluation and episode sampling.
//!
//! Every executable policy is a [`Controller`]: it keeps an internal key
//! (nothing, a memory window, a decoded-state register) that is advanced
//! after each action/observation pair. Exact evaluation runs a forward pass
//! over `(key, state)` masses, which is exact because the next key depends
//! only on the current key and the new action/observation.

use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Memory;
use crate::distill::DecodedPolicy;
use crate::error::{Error, Result};
use crate::model::{sample_categorical, Pomdp, Trajectory, ROW_TOL};
use crate::util::uniform;

/// Default bound on trajectory enumeration.
pub const ENUMERATION_CAP: u128 = 1_000_000;

pub trait Controller {
    type Key: Clone + Ord + std::fmt::Debug;

    fn start(&self, obs: usize) -> Self::Key;

    /// Action distribution at step `h`. `state` is only read by state policies.
    fn row(&self, h: usize, key: &Self::Key, state: usize) -> Result<Cow<'_, [f64]>>;

    /// Key at step `h + 1` after playing `action` at `h` and observing `obs`.
    fn advance(&self, h: usize, key: &Self::Key, action: usize, obs: usize) -> Self::Key;
}

/// `pi_h(a | s)`, stored as `[h - 1][s][a]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatePolicy {
    pub table: Vec<Vec<Vec<f64>>>,
}

impl StatePolicy {
    pub fn uniform(horizon: usize, states: usize, actions: usize) -> Self {
        StatePolicy { table: vec![vec![uniform(actions); states]; horizon] }
    }

    /// Deterministic policy from `choice[h - 1][s]`.
    pub fn deterministic(choice: &[Vec<usize>], actions: usize) -> Self {
        let table = choice
            .iter()
            .map(|per_s| per_s.iter().map(|&a| crate::util::one_hot(actions, a)).collect())
            .collect();
        StatePolicy { table }
    }

    #[inline]
    pub fn dist(&self, h: usize, s: usize) -> &[f64] {
        &self.table[h - 1][s]
    }

    pub fn horizon(&self) -> usize {
        self.table.len()
    }
}

impl Controller for StatePolicy {
    type Key = ();

    fn start(&self, _obs: usize) {}

    fn row(&self, h: usize, _key: &(), state: usize) -> Result<Cow<'_, [f64]>> {
        Ok(Cow::Borrowed(self.dist(h, state)))
    }

    fn advance(&self, _h: usize, _key: &(), _action: usize, _obs: usize) {}
}

/// Table over `(h, memory)` keys. Missing rows are uniform unless `strict`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryPolicy {
    pub horizon: usize,
    pub actions: usize,
    pub memory: usize,
    #[serde(with = "crate::util::entries")]
    pub rows: BTreeMap<(usize, Memory), Vec<f64>>,
    pub strict: bool,
}

impl MemoryPolicy {
    pub fn uniform(horizon: usize, actions: usize, memory: usize) -> Self {
        MemoryPolicy { horizon, actions, memory, rows: BTreeMap::new(), strict: false }
    }

    /// Full-history table: every reachable history must have a row.
    pub fn full_history(horizon: usize, actions: usize) -> Self {
        MemoryPolicy { horizon, actions, memory: horizon, rows: BTreeMap::new(), strict: true }
    }

    pub fn get(&self, h: usize, key: &Memory) -> Option<&Vec<f64>> {
        self.rows.get(&(h, key.clone()))
    }

    pub fn set(&mut self, h: usize, key: Memory, row: Vec<f64>) {
        self.rows.insert((h, key), row);
    }

    pub fn dist(&self, h: usize, key: &Memory) -> Cow<'_, [f64]> {
        match self.get(h, key) {
            Some(r) => Cow::Borrowed(r.as_slice()),
            None => Cow::Owned(uniform(self.actions)),
        }
    }
}

impl Controller for MemoryPolicy {
    type Key = Memory;

    fn start(&self, obs: usize) -> Memory {
        Memory::start(obs)
    }

    fn row(&self, h: usize, key: &Memory, _state: usize) -> Result<Cow<'_, [f64]>> {
        match self.get(h, key) {
            Some(r) => Ok(Cow::Borrowed(r.as_slice())),
            None if self.strict => Err(Error::MissingRow { step: h, key: key.to_string() }),
            None => Ok(Cow::Owned(uniform(self.actions))),
        }
    }

    fn advance(&self, _h: usize, key: &Memory, action: usize, obs: usize) -> Memory {
        key.push(action, obs, self.memory)
    }
}

#[derive(Clone, Debug)]
pub enum Policy {
    State(StatePolicy),
    Memory(MemoryPolicy),
    /// Full-history table; evaluated by enumeration under a cap.
    History(MemoryPolicy),
    Decoded(DecodedPolicy),
    /// Uniform mixture: one member is drawn per episode.
    Mixture(Vec<Policy>),
}

impl Policy {
    /// Checks that every stored row is a distribution.
    pub fn validate(&self) -> Result<()> {
        let check = |row: &[f64], what: &str| -> Result<()> {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > ROW_TOL {
                Err(Error::InvalidArgument(format!("{what} is not a distribution")))
            } else {
                Ok(())
            }
        };
        match self {
            Policy::State(p) => p.table.iter().flatten().try_for_each(|r| check(r, "state policy row")),
            Policy::Memory(p) | Policy::History(p) => p.rows.values().try_for_each(|r| check(r, "memory policy row")),
            Policy::Decoded(p) => p.expert.table.iter().flatten().try_for_each(|r| check(r, "expert row")),
            Policy::Mixture(ps) => ps.iter().try_for_each(Policy::validate),
        }
    }
}

/// Exact expected return with the default enumeration cap.
pub fn evaluate_policy_exact(model: &Pomdp, policy: &Policy) -> Result<f64> {
    evaluate_with_cap(model, policy, ENUMERATION_CAP)
}

pub fn evaluate_with_cap(model: &Pomdp, policy: &Policy, cap: u128) -> Result<f64> {
    match policy {
        Policy::State(p) => evaluate_controller(model, p),
        Policy::Memory(p) => evaluate_controller(model, p),
        Policy::History(p) => {
            let needed = (model.observations as u128).saturating_pow(model.horizon as u32)
                .saturating_mul((model.actions as u128).saturating_pow(model.horizon as u32));
            if needed > cap {
                return Err(Error::CapExceeded { needed, cap });
            }
            evaluate_controller(model, p)
        }
        Policy::Decoded(p) => evaluate_controller(model, p),
        Policy::Mixture(ps) => {
            if ps.is_empty() {
                return Err(Error::InvalidArgument("empty mixture".into()));
            }
            let mut total = 0.0;
            for p in ps {
                total += evaluate_with_cap(model, p, cap)?;
            }
            Ok(total / ps.len() as f64)
        }
    }
}

/// Forward pass over `(key, state)` masses.
pub fn evaluate_controller<C: Controller>(model: &Pomdp, c: &C) -> Result<f64> {
    evaluate_from(model, c, initial_layer(model, c))
}

/// Expected return from step 1 given an explicit (possibly unnormalized) start layer.
pub fn evaluate_from<C: Controller>(model: &Pomdp, c: &C, start: BTreeMap<(C::Key, usize), f64>) -> Result<f64> {
    let mut layer = start;
    let mut value = 0.0;
    for h in 1..=model.horizon {
        let mut next = BTreeMap::new();
        for ((key, s), mass) in layer {
            let row = c.row(h, &key, s)?;
            for (a, &p) in row.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let m = mass * p;
                value += m * model.reward(h, s, a);
                if h < model.horizon {
                    spread(model, c, h, &key, s, a, m, &mut next);
                }
            }
        }
        layer = next;
    }
    Ok(value)
}

pub(crate) fn initial_layer<C: Controller>(model: &Pomdp, c: &C) -> BTreeMap<(C::Key, usize), f64> {
    let mut layer = BTreeMap::new();
    for s in 0..model.states {
        for o in 0..model.observations {
            let m = model.mu1[s] * model.emit(1, s)[o];
            if m > 0.0 {
                *layer.entry((c.start(o), s)).or_insert(0.0) += m;
            }
        }
    }
    layer
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn spread<C: Controller>(
    model: &Pomdp,
    c: &C,
    h: usize,
    key: &C::Key,
    s: usize,
    a: usize,
    mass: f64,
    next: &mut BTreeMap<(C::Key, usize), f64>,
) {
    for (s2, &pt) in model.trans(h, s, a).iter().enumerate() {
        if pt <= 0.0 {
            continue;
        }
        for (o2, &po) in model.emit(h + 1, s2).iter().enumerate() {
            if po > 0.0 {
                *next.entry((c.advance(h, key, a, o2), s2)).or_insert(0.0) += mass * pt * po;
            }
        }
    }
}

pub fn sample_episode<R: Rng + ?Sized>(model: &Pomdp, policy: &Policy, rng: &mut R) -> Result<Trajectory> {
    match policy {
        Policy::State(p) => sample_with(model, p, rng),
        Policy::Memory(p) | Policy::History(p) => sample_with(model, p, rng),
        Policy::Decoded(p) => sample_with(model, p, rng),
        Policy::Mixture(ps) => {
            if ps.is_empty() {
                return Err(Error::InvalidArgument("empty mixture".into()));
            }
            let i = rng.random_range(0..ps.len());
            sample_episode(model, &ps[i], rng)
        }
    }
}

pub fn sample_with<C: Controller, R: Rng + ?Sized>(model: &Pomdp, c: &C, rng: &mut R) -> Result<Trajectory> {
    let hh = model.horizon;
    let mut states = Vec::with_capacity(hh + 1);
    let mut observations = Vec::with_capacity(hh);
    let mut actions = Vec::with_capacity(hh);
    let mut rewards = Vec::with_capacity(hh);
    let mut s = sample_categorical(&model.mu1, rng);
    let mut o = sample_categorical(model.emit(1, s), rng);
    let mut key = c.start(o);
    for h in 1..=hh {
        states.push(s);
        observations.push(o);
        let a = sample_categorical(&c.row(h, &key, s)?, rng);
        actions.push(a);
        rewards.push(model.reward(h, s, a));
        s = sample_categorical(model.trans(h, s, a), rng);
        if h < hh {
            o = sample_categorical(model.emit(h + 1, s), rng);
            key = c.advance(h, &key, a, o);
        }
    }
    states.push(s);
    Ok(Trajectory { states, observations, actions, rewards })
}

/// Every deterministic table over the reachable keys of a memory-`len` policy,
/// enumerated with the last step chosen greedily (its keys only affect the final reward).
/// Returns the best value and its policy. Caps the number of enumerated prefixes.
pub fn best_memory_policy(model: &Pomdp, len: usize, cap: u128) -> Result<(f64, MemoryPolicy)> {
    let keys = memory_keys(model, len);
    let early: Vec<(usize, Memory)> = keys.iter().filter(|(h, _)| *h < model.horizon).cloned().collect();
    let count = (model.actions as u128).checked_pow(early.len() as u32).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::CapExceeded { needed: count, cap });
    }
    let mut best: Option<(f64, MemoryPolicy)> = None;
    let mut digits = vec![0usize; early.len()];
    loop {
        let mut pol = MemoryPolicy::uniform(model.horizon, model.actions, len);
        pol.strict = false;
        for ((h, k), &a) in early.iter().zip(&digits) {
            pol.set(*h, k.clone(), crate::util::one_hot(model.actions, a));
        }
        let value = greedy_last_step(model, &mut pol)?;
        if best.as_ref().map_or(true, |(v, _)| value > *v + 1e-15) {
            best = Some((value, pol));
        }
        // odometer increment
        let mut i = 0;
        while i < digits.len() {
            digits[i] += 1;
            if digits[i] < model.actions {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == digits.len() {
            break;
        }
    }
    Ok(best.expect("at least one policy is enumerated"))
}

/// Fills the step-H rows of `pol` with the reward-maximizing action per key and returns the value.
fn greedy_last_step(model: &Pomdp, pol: &mut MemoryPolicy) -> Result<f64> {
    let hh = model.horizon;
    let mut layer = initial_layer(model, pol);
    let mut value = 0.0;
    for h in 1..hh {
        let mut next = BTreeMap::new();
        for ((key, s), mass) in layer {
            let row = pol.row(h, &key, s)?.into_owned();
            for (a, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    value += mass * p * model.reward(h, s, a);
                    spread(model, pol, h, &key, s, a, mass * p, &mut next);
                }
            }
        }
        layer = next;
    }
    let mut per_key: BTreeMap<Memory, Vec<f64>> = BTreeMap::new();
    for ((key, s), mass) in layer {
        let acc = per_key.entry(key).or_insert_with(|| vec![0.0; model.actions]);
        for (a, x) in acc.iter_mut().enumerate() {
            *x += mass * model.reward(hh, s, a);
        }
    }
    for (key, acc) in per_key {
        let a = crate::util::argmax(&acc);
        value += acc[a];
        pol.set(hh, key, crate::util::one_hot(model.actions, a));
    }
    Ok(value)
}

/// Memory keys reachable with positive probability under some policy, by step.
pub fn memory_keys(model: &Pomdp, len: usize) -> Vec<(usize, Memory)> {
    let mut out = Vec::new();
    let mut layer: BTreeMap<Memory, Vec<f64>> = BTreeMap::new();
    for o in 0..model.observations {
        let b: Vec<f64> = (0..model.states).map(|s| model.mu1[s] * model.emit(1, s)[o]).collect();
        if b.iter().sum::<f64>() > 0.0 {
            layer.insert(Memory::start(o), b);
        }
    }
    for h in 1..=model.horizon {
        out.extend(layer.keys().map(|k| (h, k.clone())));
        if h == model.horizon {
            break;
        }
        // track reachable state support per key to prune impossible observations
        let mut next: BTreeMap<Memory, Vec<f64>> = BTreeMap::new();
        for (key, support) in &layer {
            for a in 0..model.actions {
                let pushed = crate::belief::push_forward(model, h, support, a);
                for o in 0..model.observations {
                    let w: Vec<f64> = (0..model.states).map(|s| pushed[s] * model.emit(h + 1, s)[o]).collect();
                    if w.iter().sum::<f64>() > 0.0 {
                        let e = next.entry(key.push(a, o, len)).or_insert_with(|| vec![0.0; model.states]);
                        for (x, y) in e.iter_mut().zip(&w) {
                            *x += if *y > 0.0 { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
        }
        layer = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::counterexample_pomdp;
    use crate::harness::gen::{gen_pomdp, InstanceKind};
    use crate::util::rng_from_seed;

    fn optimal_history_policy() -> Policy {
        let mut p = MemoryPolicy::full_history(1, 2);
        p.set(1, Memory::start(0), vec![1.0, 0.0]);
        p.set(1, Memory::start(1), vec![0.0, 1.0]);
        Policy::History(p)
    }

    #[test]
    fn zero_reward_has_zero_value() {
        let m = Pomdp::uniform(3, 2, 2, 2);
        let v = evaluate_policy_exact(&m, &Policy::State(StatePolicy::uniform(3, 2, 2))).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn counterexample_optimal_value_is_half() {
        let m = counterexample_pomdp(0.5, 0.5).unwrap();
        let v = evaluate_policy_exact(&m, &optimal_history_policy()).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let mix = Policy::Mixture(vec![optimal_history_policy(), optimal_history_policy()]);
        assert!((evaluate_policy_exact(&m, &mix).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn strict_table_reports_missing_row() {
        let m = counterexample_pomdp(0.5, 0.5).unwrap();
        let p = Policy::History(MemoryPolicy::full_history(1, 2));
        assert!(matches!(evaluate_policy_exact(&m, &p), Err(Error::MissingRow { step: 1, .. })));
    }

    #[test]
    fn history_cap_enforced() {
        let m = Pomdp::uniform(10, 2, 4, 4);
        let p = Policy::History(MemoryPolicy::full_history(10, 4));
        assert!(matches!(evaluate_policy_exact(&m, &p), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let m = gen_pomdp(InstanceKind::Generic, 3, 2, 2, 4, 5).unwrap();
        let p = Policy::Memory(MemoryPolicy::uniform(4, 2, 2));
        let a = sample_episode(&m, &p, &mut rng_from_seed(9)).unwrap();
        let b = sample_episode(&m, &p, &mut rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states.len(), 5);
        assert_eq!(a.observations.len(), 4);
    }

    #[test]
    fn memory_value_matches_monte_carlo() {
        let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, 2).unwrap();
        let mut p = MemoryPolicy::uniform(3, 2, 1);
        p.set(2, Memory { actions: vec![0], observations: vec![1] }, vec![0.9, 0.1]);
        let exact = evaluate_controller(&m, &p).unwrap();
        let mut rng = rng_from_seed(1);
        let n = 40_000;
        let mc: f64 = (0..n).map(|_| sample_with(&m, &p, &mut rng).unwrap().total_reward()).sum::<f64>() / n as f64;
        assert!((mc - exact).abs() < 0.02, "{mc} vs {exact}");
    }

    #[test]
    fn best_memory_policy_counts_keys() {
        let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 2, 4).unwrap();
        let keys = memory_keys(&m, 1);
        assert_eq!(keys.len(), 2 + 4);
        let (v, pol) = best_memory_policy(&m, 1, 1 << 20).unwrap();
        assert!((evaluate_controller(&m, &pol).unwrap() - v).abs() < 1e-12);
    }
}
