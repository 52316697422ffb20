//! Bayes filtering, finite-memory keys and approximate beliefs.
//!
//! A memory key at step `h` holds the observations `o_{h-L+1..h}` and the
//! actions `a_{h-L..h-1}`. While `h <= L` the key is the whole history and
//! the leading action slot is simply absent, so `actions.len() + 1 ==
//! observations.len()`. Once the window slides both lists have length `L`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Pomdp;

/// Likelihoods below this are treated as zero.
pub const MIN_LIKELIHOOD: f64 = 1e-300;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Memory {
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
}

impl Memory {
    pub fn start(obs: usize) -> Self {
        Memory { actions: Vec::new(), observations: vec![obs] }
    }

    /// Full history from explicit sequences (`observations.len() == actions.len() + 1`).
    pub fn history(actions: &[usize], observations: &[usize]) -> Self {
        debug_assert_eq!(actions.len() + 1, observations.len());
        Memory { actions: actions.to_vec(), observations: observations.to_vec() }
    }

    /// Key at the next step after playing `action` and seeing `obs`, keeping `len` pairs.
    pub fn push(&self, action: usize, obs: usize, len: usize) -> Self {
        let mut next = self.clone();
        next.actions.push(action);
        next.observations.push(obs);
        if next.observations.len() > len {
            next.observations.remove(0);
        }
        if next.actions.len() > len {
            next.actions.remove(0);
        }
        next
    }

    /// Suffix of a full history kept by a memory of length `len`.
    pub fn suffix(&self, len: usize) -> Self {
        let h = self.observations.len();
        if h <= len {
            return self.clone();
        }
        Memory {
            actions: self.actions[self.actions.len() - len..].to_vec(),
            observations: self.observations[h - len..].to_vec(),
        }
    }

    pub fn covers_start(&self) -> bool {
        self.actions.len() < self.observations.len()
    }

    pub fn last_obs(&self) -> usize {
        *self.observations.last().expect("memory always holds the current observation")
    }
}

impl std::fmt::Display for Memory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let offset = if self.covers_start() { 1 } else { 0 };
        let mut parts = Vec::new();
        for (i, o) in self.observations.iter().enumerate() {
            if i >= offset {
                parts.push(format!("a{}", self.actions[i - offset]));
            }
            parts.push(format!("o{o}"));
        }
        write!(f, "[{}]", parts.join(" "))
    }
}

/// `B_h(b; o)`: condition `b` on observing `o` at step `h`.
pub fn bayes_update(model: &Pomdp, h: usize, b: &[f64], obs: usize) -> Result<Vec<f64>> {
    let mut post: Vec<f64> = (0..model.states).map(|s| model.emit(h, s)[obs] * b[s]).collect();
    let lik: f64 = post.iter().sum();
    if !(lik >= MIN_LIKELIHOOD) {
        return Err(Error::ImpossibleObservation { step: h, obs });
    }
    post.iter_mut().for_each(|x| *x /= lik);
    Ok(post)
}

/// Push `b` through the step-`h` kernel under `action`.
pub fn push_forward(model: &Pomdp, h: usize, b: &[f64], action: usize) -> Vec<f64> {
    let mut next = vec![0.0; model.states];
    for (s, &w) in b.iter().enumerate() {
        if w > 0.0 {
            for (x, &p) in next.iter_mut().zip(model.trans(h, s, action)) {
                *x += w * p;
            }
        }
    }
    next
}

/// `U_h(b; a, o) = B_{h+1}(T_h(a) b; o)`.
pub fn belief_update(model: &Pomdp, h: usize, b: &[f64], action: usize, obs: usize) -> Result<Vec<f64>> {
    bayes_update(model, h + 1, &push_forward(model, h, b, action), obs)
}

/// Posterior over `s_h` given a full history (`h = observations.len()`).
pub fn exact_belief(model: &Pomdp, history: &Memory) -> Result<Vec<f64>> {
    if !history.covers_start() {
        return Err(Error::InvalidArgument("exact belief needs a full history".into()));
    }
    let h = history.observations.len();
    replay(model, h, history, &model.mu1).map_err(|e| match e {
        Error::ImpossibleObservation { step, .. } => Error::Unreachable { step },
        other => other,
    })
}

/// Finite-memory belief at step `h`. Full-history keys start from `mu1`;
/// truncated keys start from `prior` (uniform when `None`) as the posterior at step `h - L`.
pub fn approx_belief(model: &Pomdp, h: usize, key: &Memory, prior: Option<&[f64]>) -> Result<Vec<f64>> {
    check_key(model, h, key)?;
    if key.covers_start() {
        return replay(model, h, key, &model.mu1);
    }
    let uniform;
    let prior = match prior {
        Some(p) => p,
        None => {
            uniform = vec![1.0 / model.states as f64; model.states];
            &uniform
        }
    };
    replay(model, h, key, prior)
}

fn check_key(model: &Pomdp, h: usize, key: &Memory) -> Result<()> {
    let n = key.observations.len();
    let shape_ok = n >= 1
        && n <= h
        && h <= model.horizon
        && (key.actions.len() == n || (key.actions.len() + 1 == n && n == h));
    let range_ok = key.observations.iter().all(|&o| o < model.observations)
        && key.actions.iter().all(|&a| a < model.actions);
    if shape_ok && range_ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("memory {key} does not fit step {h}")))
    }
}

fn replay(model: &Pomdp, h: usize, key: &Memory, start: &[f64]) -> Result<Vec<f64>> {
    let n = key.observations.len();
    if key.covers_start() {
        let mut b = bayes_update(model, 1, start, key.observations[0])?;
        for (t, (&a, &o)) in key.actions.iter().zip(&key.observations[1..]).enumerate() {
            b = belief_update(model, t + 1, &b, a, o)?;
        }
        Ok(b)
    } else {
        let first = h - n;
        let mut b = start.to_vec();
        for (j, (&a, &o)) in key.actions.iter().zip(&key.observations).enumerate() {
            b = belief_update(model, first + j, &b, a, o)?;
        }
        Ok(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    ExactModel,
    LearnedTruncated,
}

/// Lazily filled table `(h, z) -> b^apx_h(z)`.
///
/// The prior at each step is uniform over `support[h]`; impossible replays
/// either fail or, with `reset_on_impossible`, fall back to that uniform and are flagged.
#[derive(Debug)]
pub struct BeliefTable {
    model: Pomdp,
    memory: usize,
    support: Vec<Vec<bool>>,
    reset_on_impossible: bool,
    pub provenance: Provenance,
    cache: RwLock<HashMap<(usize, Memory), Arc<Vec<f64>>>>,
    flagged: RwLock<Vec<(usize, Memory)>>,
}

impl BeliefTable {
    /// Uniform prior over all states, errors on impossible replays.
    pub fn exact(model: Pomdp, memory: usize) -> Result<Self> {
        let support = vec![vec![true; model.states]; model.horizon + 1];
        Self::build(model, memory, support, false, Provenance::ExactModel)
    }

    /// Prior uniform over `support[h - 1]` at step `h`; impossible replays reset and flag.
    pub fn with_support(model: Pomdp, memory: usize, support: Vec<Vec<bool>>) -> Result<Self> {
        Self::build(model, memory, support, true, Provenance::LearnedTruncated)
    }

    fn build(model: Pomdp, memory: usize, support: Vec<Vec<bool>>, reset: bool, provenance: Provenance) -> Result<Self> {
        if memory == 0 {
            return Err(Error::InvalidArgument("memory length must be at least 1".into()));
        }
        if support.len() < model.horizon || support.iter().take(model.horizon).any(|row| !row.iter().any(|&x| x)) {
            return Err(Error::InvalidArgument("every step needs a nonempty prior support".into()));
        }
        Ok(BeliefTable {
            model,
            memory,
            support,
            reset_on_impossible: reset,
            provenance,
            cache: RwLock::new(HashMap::new()),
            flagged: RwLock::new(Vec::new()),
        })
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn model(&self) -> &Pomdp {
        &self.model
    }

    fn uniform_on(&self, h: usize) -> Vec<f64> {
        let row = &self.support[h - 1];
        let k = row.iter().filter(|&&x| x).count() as f64;
        row.iter().map(|&x| if x { 1.0 / k } else { 0.0 }).collect()
    }

    pub fn get(&self, h: usize, key: &Memory) -> Result<Arc<Vec<f64>>> {
        if let Some(b) = self.cache.read().expect("belief cache poisoned").get(&(h, key.clone())) {
            return Ok(b.clone());
        }
        let computed = if key.covers_start() {
            approx_belief(&self.model, h, key, None)
        } else {
            let first = h - key.observations.len();
            approx_belief(&self.model, h, key, Some(&self.uniform_on(first)))
        };
        let b = match computed {
            Ok(b) => b,
            Err(Error::ImpossibleObservation { .. }) if self.reset_on_impossible => {
                self.flagged.write().expect("flag list poisoned").push((h, key.clone()));
                self.uniform_on(h)
            }
            Err(e) => return Err(e),
        };
        let b = Arc::new(b);
        let mut cache = self.cache.write().expect("belief cache poisoned");
        Ok(cache.entry((h, key.clone())).or_insert(b).clone())
    }

    /// Keys whose replay hit an impossible observation.
    pub fn flagged(&self) -> Vec<(usize, Memory)> {
        let mut v = self.flagged.read().expect("flag list poisoned").clone();
        v.sort();
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::counterexample_pomdp;
    use crate::harness::gen::{gen_pomdp, InstanceKind};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Joint posterior `P(s_h | history)` by brute-force enumeration of state paths.
    fn enumerate_posterior(m: &Pomdp, hist: &Memory) -> Vec<f64> {
        let h = hist.observations.len();
        let mut post = vec![0.0; m.states];
        let mut paths: Vec<(usize, f64)> = (0..m.states).map(|s| (s, m.mu1[s] * m.emit(1, s)[hist.observations[0]])).collect();
        for t in 1..h {
            let mut next = Vec::new();
            for &(s, w) in &paths {
                for s2 in 0..m.states {
                    let p = w * m.trans(t, s, hist.actions[t - 1])[s2] * m.emit(t + 1, s2)[hist.observations[t]];
                    next.push((s2, p));
                }
            }
            paths = next;
        }
        for (s, w) in paths {
            post[s] += w;
        }
        let z: f64 = post.iter().sum();
        post.iter().map(|x| x / z).collect()
    }

    #[test]
    fn memory_push_slides_window() {
        let z = Memory::start(1).push(0, 2, 2);
        assert_eq!(z, Memory::history(&[0], &[1, 2]));
        let z = z.push(1, 0, 2);
        assert_eq!(z, Memory { actions: vec![0, 1], observations: vec![2, 0] });
        assert!(!z.covers_start());
        let full = Memory::history(&[0, 1], &[1, 2, 0]);
        assert_eq!(full.suffix(2), z);
        assert_eq!(full.suffix(3), full);
        assert_eq!(format!("{z}"), "[a0 o2 a1 o0]");
        assert_eq!(format!("{full}"), "[o1 a0 o2 a1 o0]");
    }

    #[test]
    fn identical_rows_leave_belief_unchanged() {
        let m = Pomdp::uniform(1, 3, 1, 2);
        let b = vec![0.2, 0.3, 0.5];
        assert!(close(&bayes_update(&m, 1, &b, 1).unwrap(), &b, 1e-15));
    }

    #[test]
    fn counterexample_first_observation_gives_uniform() {
        let m = counterexample_pomdp(0.5, 0.5).unwrap();
        assert!(close(&m.mu1, &[1.0 / 3.0, 2.0 / 3.0], 1e-15));
        let b = exact_belief(&m, &Memory::start(0)).unwrap();
        assert!(close(&b, &[0.5, 0.5], 1e-12));
        let b2 = bayes_update(&m, 1, &[1.0, 0.0], 0).unwrap();
        assert_eq!(b2, vec![1.0, 0.0]);
    }

    #[test]
    fn impossible_observation_errors() {
        let m = counterexample_pomdp(0.5, 0.5).unwrap();
        assert!(matches!(bayes_update(&m, 1, &[1.0, 0.0], 1), Err(Error::ImpossibleObservation { step: 1, obs: 1 })));
    }

    #[test]
    fn update_matches_enumeration() {
        for seed in 0..20 {
            let m = gen_pomdp(InstanceKind::Generic, 3, 2, 3, 4, seed).unwrap();
            let hist = Memory::history(&[1, 0, 1], &[2, 0, 1, 2]);
            let b = exact_belief(&m, &hist).unwrap();
            assert!(close(&b, &enumerate_posterior(&m, &hist), 1e-12), "seed {seed}");
        }
    }

    #[test]
    fn empty_history_is_prior_after_first_observation() {
        let mut m = Pomdp::uniform(2, 2, 2, 2);
        m.mu1 = vec![0.3, 0.7];
        assert!(close(&exact_belief(&m, &Memory::start(1)).unwrap(), &[0.3, 0.7], 1e-15));
    }

    #[test]
    fn block_instances_give_one_hot_beliefs() {
        let m = gen_pomdp(InstanceKind::BlockMdp, 3, 2, 5, 3, 7).unwrap();
        for o1 in 0..5 {
            if let Ok(b) = exact_belief(&m, &Memory::start(o1)) {
                assert!(b.iter().all(|&x| x < 1e-12 || (x - 1.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn memory_one_uses_uniform_prior_one_step_back() {
        for seed in 0..10 {
            let m = gen_pomdp(InstanceKind::Generic, 3, 2, 2, 3, seed).unwrap();
            let key = Memory { actions: vec![1], observations: vec![0] };
            let got = approx_belief(&m, 3, &key, None).unwrap();
            // oracle: uniform state at step 2, weight each path by the step-3 likelihood
            let mut want = vec![0.0; 3];
            for s2 in 0..3 {
                for s3 in 0..3 {
                    want[s3] += m.trans(2, s2, 1)[s3] * m.emit(3, s3)[0] / 3.0;
                }
            }
            let z: f64 = want.iter().sum();
            want.iter_mut().for_each(|x| *x /= z);
            assert!(close(&got, &want, 1e-12));
        }
    }

    #[test]
    fn table_flags_impossible_replays() {
        let m = counterexample_pomdp(0.5, 0.5).unwrap();
        let support = vec![vec![true, false], vec![true, true]];
        let t = BeliefTable::with_support(m, 1, support).unwrap();
        let b = t.get(1, &Memory::start(0)).unwrap();
        assert!(close(&b, &[0.5, 0.5], 1e-12));
        assert!(t.flagged().is_empty());
    }
}
