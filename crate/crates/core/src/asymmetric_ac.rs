//! Belief-weighted optimistic actor-critic over finite-memory policies.
//!
//! The critic is a table `Q(z, s, a)` over memory keys and latent states.
//! [`optimistic_q`] estimates it from fresh privileged rollouts with
//! count-based bonuses; the actor applies a Hedge step on every key, scoring
//! actions by `E_{s ~ b(z)} Q(z, s, .)`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::belief::{BeliefTable, Memory};
use crate::env::Simulator;
use crate::error::{Error, Result};
use crate::model::{sample_categorical, Pomdp};
use crate::policy::{MemoryPolicy, Policy};

/// `Q[h][(z)] -> [s][a]`, one entry per materialized key.
#[derive(Clone, Debug, Serialize)]
pub struct MemoryStateQ {
    pub horizon: usize,
    pub memory: usize,
    #[serde(with = "crate::util::entries")]
    pub table: BTreeMap<(usize, Memory), Vec<Vec<f64>>>,
}

impl MemoryStateQ {
    pub fn get(&self, h: usize, key: &Memory) -> Option<&Vec<Vec<f64>>> {
        self.table.get(&(h, key.clone()))
    }

    /// `V(z, s) = E_{a ~ pi(z)} Q(z, s, a)`; zero for keys not materialized.
    pub fn value(&self, policy: &MemoryPolicy, h: usize, key: &Memory, s: usize) -> f64 {
        match self.get(h, key) {
            Some(rows) => policy.dist(h, key).iter().zip(&rows[s]).map(|(p, q)| p * q).sum(),
            None => 0.0,
        }
    }

    /// Largest entry relative to its ceiling `H - h + 1` (positive means the clamp failed).
    pub fn max_ceiling_excess(&self) -> f64 {
        self.table
            .iter()
            .flat_map(|((h, _), rows)| {
                let ceil = (self.horizon - h + 1) as f64;
                rows.iter().flatten().map(move |&q| (q - ceil).max(-q))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Every syntactically valid key per step for memory length `len`.
pub fn all_memory_keys(horizon: usize, actions: usize, observations: usize, len: usize) -> Vec<(usize, Memory)> {
    let mut out = Vec::new();
    let mut layer: Vec<Memory> = (0..observations).map(Memory::start).collect();
    for h in 1..=horizon {
        out.extend(layer.iter().map(|k| (h, k.clone())));
        if h == horizon {
            break;
        }
        let mut next: Vec<Memory> = layer
            .iter()
            .flat_map(|k| (0..actions).flat_map(move |a| (0..observations).map(move |o| k.push(a, o, len))))
            .collect();
        next.sort();
        next.dedup();
        layer = next;
    }
    out
}

/// Transition/emission estimates for one backward step.
struct StepModel {
    /// `[s][a][s']`
    trans: Vec<Vec<Vec<f64>>>,
    /// `[s'][o']` at step `h + 1`
    emit_next: Vec<Vec<f64>>,
    /// Bonus per `(s, a)` and expected next-state bonus per `(s, a)`.
    bonus: Option<Vec<Vec<f64>>>,
}

fn backward(
    keys: &[(usize, Memory)],
    policy: &MemoryPolicy,
    horizon: usize,
    states: usize,
    reward: &dyn Fn(usize, usize, usize) -> f64,
    mut step_model: impl FnMut(usize) -> StepModel,
    clamp: bool,
) -> MemoryStateQ {
    let mut q = MemoryStateQ { horizon, memory: policy.memory, table: BTreeMap::new() };
    let actions = policy.actions;
    for h in (1..=horizon).rev() {
        let sm = step_model(h);
        for (kh, key) in keys.iter().filter(|(kh, _)| *kh == h) {
            let mut rows = vec![vec![0.0; actions]; states];
            for (s, row) in rows.iter_mut().enumerate() {
                for (a, cell) in row.iter_mut().enumerate() {
                    let mut future = 0.0;
                    if h < horizon {
                        for (s2, &pt) in sm.trans[s][a].iter().enumerate() {
                            if pt <= 0.0 {
                                continue;
                            }
                            for (o2, &po) in sm.emit_next[s2].iter().enumerate() {
                                if po > 0.0 {
                                    future += pt * po * q.value(policy, h + 1, &key.push(a, o2, policy.memory), s2);
                                }
                            }
                        }
                    }
                    let bonus = sm.bonus.as_ref().map_or(0.0, |b| b[s][a]);
                    let raw = reward(*kh, s, a) + future + bonus;
                    *cell = if clamp { raw.min((horizon - h + 1) as f64) } else { raw };
                }
            }
            q.table.insert((h, key.clone()), rows);
        }
    }
    q
}

fn true_step(model: &Pomdp, h: usize) -> StepModel {
    let emit_next = if h < model.horizon { model.emission[h].clone() } else { vec![vec![]; model.states] };
    StepModel { trans: model.transition[h - 1].clone(), emit_next, bonus: None }
}

/// Exact `Q^pi(z, s, a)` for a finite-memory policy, on keys reachable in the model.
pub fn exact_q(model: &Pomdp, policy: &MemoryPolicy, cap: usize) -> Result<MemoryStateQ> {
    let keys = crate::policy::memory_keys(model, policy.memory);
    check_cap(keys.len(), model.states, model.actions, cap)?;
    let reward = |h: usize, s: usize, a: usize| model.reward(h, s, a);
    Ok(backward(&keys, policy, model.horizon, model.states, &reward, |h| true_step(model, h), false))
}

fn check_cap(keys: usize, states: usize, actions: usize, cap: usize) -> Result<()> {
    let needed = keys * states * actions;
    if needed > cap {
        Err(Error::CapExceeded { needed: needed as u128, cap: cap as u128 })
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimismConfig {
    /// Episodes collected per step.
    pub episodes_per_step: usize,
    pub delta: f64,
    pub c: f64,
}

impl Default for OptimismConfig {
    fn default() -> Self {
        OptimismConfig { episodes_per_step: 2000, delta: 0.05, c: 2.0 }
    }
}

/// `H * min(2, C sqrt(n log(1/delta1) / max(N, 1)))`.
pub fn clipped_bonus(horizon: usize, c: f64, dim: usize, log_inv_delta: f64, count: usize) -> f64 {
    horizon as f64 * (c * (dim as f64 * log_inv_delta / count.max(1) as f64).sqrt()).min(2.0)
}

/// Optimistic critic from `M` fresh episodes per step under `policy`, on the given keys.
/// There is no emission after step `H`, so the observation bonus is dropped there.
pub fn optimistic_q<R: Rng + ?Sized>(
    sim: &Simulator,
    policy: &MemoryPolicy,
    keys: &[(usize, Memory)],
    cfg: &OptimismConfig,
    rng: &mut R,
) -> Result<MemoryStateQ> {
    if cfg.episodes_per_step == 0 {
        return Err(Error::InvalidArgument("M must be positive".into()));
    }
    let (s_n, a_n, o_n) = sim.sizes();
    let hh = sim.horizon();
    let log_inv = (2.0 * s_n as f64 * (a_n as f64 + 1.0) / cfg.delta).ln();
    let reward = |h: usize, s: usize, a: usize| sim.reward(h, s, a);
    let mut failure = None;
    let q = backward(keys, policy, hh, s_n, &reward, |h| {
        let mut n_sa = vec![vec![0usize; a_n]; s_n];
        let mut n_sas = vec![vec![vec![0usize; s_n]; a_n]; s_n];
        let mut n_next = vec![0usize; s_n];
        let mut n_next_o = vec![vec![0usize; o_n]; s_n];
        for _ in 0..cfg.episodes_per_step {
            match run_to(sim, policy, h, rng) {
                Ok((s, a, s2, o2)) => {
                    n_sa[s][a] += 1;
                    n_sas[s][a][s2] += 1;
                    if let Some(o2) = o2 {
                        n_next[s2] += 1;
                        n_next_o[s2][o2] += 1;
                    }
                }
                Err(e) => failure = Some(e),
            }
        }
        let ratio = |num: usize, den: usize| num as f64 / den.max(1) as f64;
        let trans: Vec<Vec<Vec<f64>>> = (0..s_n)
            .map(|s| (0..a_n).map(|a| n_sas[s][a].iter().map(|&c| ratio(c, n_sa[s][a])).collect()).collect())
            .collect();
        let emit_next: Vec<Vec<f64>> = (0..s_n).map(|s| n_next_o[s].iter().map(|&c| ratio(c, n_next[s])).collect()).collect();
        let obs_bonus: Vec<f64> = (0..s_n)
            .map(|s2| if h < hh { clipped_bonus(hh, cfg.c, o_n, log_inv, n_next[s2]) } else { 0.0 })
            .collect();
        let bonus = (0..s_n)
            .map(|s| {
                (0..a_n)
                    .map(|a| {
                        clipped_bonus(hh, cfg.c, s_n, log_inv, n_sa[s][a])
                            + trans[s][a].iter().zip(&obs_bonus).map(|(p, b)| p * b).sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        StepModel { trans, emit_next, bonus: Some(bonus) }
    }, true);
    match failure {
        Some(e) => Err(e),
        None => Ok(q),
    }
}

/// One episode under the policy up to step `h`: `(s_h, a_h, s_{h+1}, o_{h+1})`.
fn run_to<R: Rng + ?Sized>(sim: &Simulator, policy: &MemoryPolicy, h: usize, rng: &mut R) -> Result<(usize, usize, usize, Option<usize>)> {
    let (mut s, o) = sim.start(rng);
    let mut key = Memory::start(o);
    let mut t = 1;
    loop {
        let a = sample_categorical(&policy.dist(t, &key), rng);
        let (s2, o2) = sim.advance(t, s, a, rng);
        if t == h {
            return Ok((s, a, s2, o2));
        }
        key = key.push(a, o2.expect("t < H"), policy.memory);
        s = s2;
        t += 1;
    }
}

/// Entries where `Q(z,s,a) < r + E_true[V_{h+1}]` by more than `tol`, and the worst shortfall.
pub fn optimism_violations(model: &Pomdp, q: &MemoryStateQ, policy: &MemoryPolicy, tol: f64) -> (usize, f64) {
    let mut count = 0;
    let mut worst = 0.0f64;
    for ((h, key), rows) in &q.table {
        for s in 0..model.states {
            for a in 0..model.actions {
                let mut target = model.reward(*h, s, a);
                if *h < model.horizon {
                    for (s2, &pt) in model.trans(*h, s, a).iter().enumerate() {
                        for (o2, &po) in model.emit(h + 1, s2).iter().enumerate() {
                            if pt * po > 0.0 {
                                target += pt * po * q.value(policy, h + 1, &key.push(a, o2, q.memory), s2);
                            }
                        }
                    }
                }
                let gap = target - rows[s][a];
                if gap > tol {
                    count += 1;
                }
                worst = worst.max(gap);
            }
        }
    }
    (count, worst)
}

/// `pi'(.|z) ∝ pi(.|z) exp(eta E_{s ~ b(z)} Q(z, s, .))` on every key of `q`.
pub fn mwu_update(prev: &MemoryPolicy, q: &MemoryStateQ, belief: &dyn Fn(usize, &Memory) -> Result<Vec<f64>>, eta: f64) -> Result<MemoryPolicy> {
    if eta < 0.0 {
        return Err(Error::InvalidArgument("step size must be nonnegative".into()));
    }
    let mut next = prev.clone();
    for ((h, key), rows) in &q.table {
        let b = belief(*h, key)?;
        let scores: Vec<f64> = (0..prev.actions).map(|a| b.iter().zip(rows).map(|(w, row)| w * row[a]).sum()).collect();
        next.set(*h, key.clone(), hedge_step(&prev.dist(*h, key), &scores, eta));
    }
    Ok(next)
}

pub fn hedge_step(prev: &[f64], scores: &[f64], eta: f64) -> Vec<f64> {
    let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut row: Vec<f64> = prev.iter().zip(scores).map(|(p, s)| p * (eta * (s - top)).exp()).collect();
    if !crate::util::normalize(&mut row) {
        return prev.to_vec();
    }
    row
}

#[derive(Clone, Debug, Serialize)]
pub struct NpgConfig {
    pub iterations: usize,
    /// Defaults to `sqrt(log A / (T H))`.
    pub eta: Option<f64>,
    pub memory: usize,
}

impl NpgConfig {
    pub fn step_size(&self, actions: usize, horizon: usize) -> f64 {
        self.eta.unwrap_or_else(|| ((actions as f64).ln() / (self.iterations * horizon) as f64).sqrt())
    }
}

pub struct NpgOutput {
    /// Uniform mixture over `pi^1..pi^T`.
    pub mixture: Policy,
    pub iterates: Vec<MemoryPolicy>,
}

/// Belief-weighted NPG with a pluggable critic:
/// `critic(pi)` returns the Q-table used to update `pi` (sampled or exact).
pub fn belief_weighted_npg(
    horizon: usize,
    actions: usize,
    cfg: &NpgConfig,
    belief: &dyn Fn(usize, &Memory) -> Result<Vec<f64>>,
    critic: &mut dyn FnMut(&MemoryPolicy) -> Result<MemoryStateQ>,
) -> Result<NpgOutput> {
    if cfg.iterations == 0 {
        return Err(Error::InvalidArgument("T must be positive".into()));
    }
    let eta = cfg.step_size(actions, horizon);
    let mut pi = MemoryPolicy::uniform(horizon, actions, cfg.memory);
    let mut iterates = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let q = critic(&pi)?;
        pi = mwu_update(&pi, &q, belief, eta)?;
        iterates.push(pi.clone());
    }
    let mixture = Policy::Mixture(iterates.iter().cloned().map(Policy::Memory).collect());
    Ok(NpgOutput { mixture, iterates })
}

/// Belief lookup backed by a [`BeliefTable`].
pub fn table_lookup(table: &BeliefTable) -> impl Fn(usize, &Memory) -> Result<Vec<f64>> + '_ {
    move |h, key| table.get(h, key).map(|b| b.as_ref().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen::{gen_pomdp, InstanceKind};
    use crate::policy::{best_memory_policy, evaluate_controller, evaluate_policy_exact, initial_layer};
    use crate::util::rng_from_seed;

    #[test]
    fn zero_reward_q_is_zero() {
        let m = Pomdp::uniform(3, 2, 2, 2);
        let q = exact_q(&m, &MemoryPolicy::uniform(3, 2, 2), 1 << 20).unwrap();
        assert!(q.table.values().flatten().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn exact_q_start_value_matches_evaluation() {
        for seed in 0..10 {
            let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, seed).unwrap();
            let mut pol = MemoryPolicy::uniform(3, 2, 2);
            pol.set(1, Memory::start(0), vec![0.8, 0.2]);
            pol.set(2, Memory::history(&[1], &[1, 0]), vec![0.1, 0.9]);
            let q = exact_q(&m, &pol, 1 << 20).unwrap();
            let start: f64 = initial_layer(&m, &pol).iter().map(|((k, s), w)| w * q.value(&pol, 1, k, *s)).sum();
            assert!((start - evaluate_controller(&m, &pol).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn one_step_q_is_reward() {
        let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 1, 3).unwrap();
        let q = exact_q(&m, &MemoryPolicy::uniform(1, 2, 1), 1 << 20).unwrap();
        for rows in q.table.values() {
            assert_eq!(rows, &m.r[0]);
        }
    }

    #[test]
    fn zero_counts_hit_the_ceiling() {
        let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, 1).unwrap();
        let sim = Simulator::new(&m);
        let pol = MemoryPolicy::uniform(3, 2, 1);
        let keys = all_memory_keys(3, 2, 2, 1);
        let cfg = OptimismConfig { episodes_per_step: 1, delta: 0.05, c: 2.0 };
        let q = optimistic_q(&sim, &pol, &keys, &cfg, &mut rng_from_seed(0)).unwrap();
        // bonuses of 2H exceed every ceiling
        for ((h, _), rows) in &q.table {
            assert!(rows.iter().flatten().all(|&x| x == (3 - h + 1) as f64));
        }
        assert!(q.max_ceiling_excess() <= 0.0);
    }

    #[test]
    fn single_state_bonus_vanishes() {
        let mut m = Pomdp::uniform(1, 1, 2, 1);
        m.r[0][0] = vec![0.3, 0.6];
        let sim = Simulator::new(&m);
        let pol = MemoryPolicy::uniform(1, 2, 1);
        let keys = all_memory_keys(1, 2, 1, 1);
        let cfg = OptimismConfig { episodes_per_step: 200_000, delta: 0.05, c: 2.0 };
        let q = optimistic_q(&sim, &pol, &keys, &cfg, &mut rng_from_seed(0)).unwrap();
        let row = &q.get(1, &Memory::start(0)).unwrap()[0];
        let log_inv = (2.0 * 1.0 * 3.0 / 0.05f64).ln();
        for (a, r) in [0.3, 0.6].iter().enumerate() {
            let n = 100_000.0;
            let b = 2.0 * (log_inv / n).sqrt();
            assert!((row[a] - (r + b)).abs() < 0.01, "{} vs {}", row[a], r + b);
        }
    }

    #[test]
    fn hedge_closed_form() {
        let out = hedge_step(&[0.5, 0.5], &[1.0, 0.0], 1.0);
        let e = std::f64::consts::E;
        assert!((out[0] - e / (1.0 + e)).abs() < 1e-12);
        assert_eq!(hedge_step(&[0.3, 0.7], &[1.0, 0.0], 0.0), vec![0.3, 0.7]);
    }

    #[test]
    fn mwu_with_zero_q_or_eta_is_identity() {
        let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 2, 0).unwrap();
        let mut pol = MemoryPolicy::uniform(2, 2, 1);
        pol.set(1, Memory::start(1), vec![0.25, 0.75]);
        let table = BeliefTable::exact(m.clone(), 1).unwrap();
        let lookup = table_lookup(&table);
        let zero = exact_q(&Pomdp::uniform(2, 2, 2, 2), &pol, 1 << 20).unwrap();
        let same = mwu_update(&pol, &zero, &lookup, 1.0).unwrap();
        for (k, row) in &same.rows {
            assert_eq!(row.as_slice(), pol.dist(k.0, &k.1).as_ref());
        }
        let q = exact_q(&m, &pol, 1 << 20).unwrap();
        let frozen = mwu_update(&pol, &q, &lookup, 0.0).unwrap();
        for (k, row) in &frozen.rows {
            assert_eq!(row.as_slice(), pol.dist(k.0, &k.1).as_ref());
        }
    }

    #[test]
    fn one_frozen_iteration_is_uniform() {
        let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 2, 0).unwrap();
        let table = BeliefTable::exact(m.clone(), 1).unwrap();
        let cfg = NpgConfig { iterations: 1, eta: Some(0.0), memory: 1 };
        let out = belief_weighted_npg(2, 2, &cfg, &table_lookup(&table), &mut |p| exact_q(&m, p, 1 << 20)).unwrap();
        let v = evaluate_policy_exact(&m, &out.mixture).unwrap();
        let u = evaluate_controller(&m, &MemoryPolicy::uniform(2, 2, 1)).unwrap();
        assert!((v - u).abs() < 1e-12);
    }

    #[test]
    fn mixture_value_is_mean_of_iterates() {
        let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 2, 4).unwrap();
        let table = BeliefTable::exact(m.clone(), 1).unwrap();
        let cfg = NpgConfig { iterations: 10, eta: Some(0.5), memory: 1 };
        let out = belief_weighted_npg(2, 2, &cfg, &table_lookup(&table), &mut |p| exact_q(&m, p, 1 << 20)).unwrap();
        let mean: f64 = out.iterates.iter().map(|p| evaluate_controller(&m, p).unwrap()).sum::<f64>() / 10.0;
        assert!((evaluate_policy_exact(&m, &out.mixture).unwrap() - mean).abs() < 1e-9);
        let (best, _) = best_memory_policy(&m, 1, 1 << 10).unwrap();
        assert!(mean <= best + 1e-9);
    }
}
