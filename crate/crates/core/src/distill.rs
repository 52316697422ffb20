//! Expert distillation: decoder tables, composed policies and the
//! belief-weighted distillation objective, plus the two-state instance on
//! which distilling into a history policy loses value.

use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{exact_belief, push_forward, Memory};
use crate::env::Simulator;
use crate::error::{Error, Result};
use crate::model::{sample_categorical, Pomdp};
use crate::policy::{evaluate_from, Controller, MemoryPolicy, StatePolicy};
use crate::util::uniform;

/// `H = 1`, two states, two actions, two observations. Only the first state is
/// fully identified by its observation; `gamma` is the observability constant.
pub fn counterexample_pomdp(gamma: f64, eps: f64) -> Result<Pomdp> {
    if !(gamma > 0.0 && gamma < 1.0 && eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma={gamma}, eps={eps} must lie in (0,1)")));
    }
    let mut m = Pomdp::uniform(1, 2, 2, 2);
    m.mu1 = vec![(1.0 - gamma) / (2.0 - gamma), 1.0 / (2.0 - gamma)];
    m.emission[0] = vec![vec![1.0, 0.0], vec![1.0 - gamma, gamma]];
    m.r[0] = vec![vec![1.0, 0.0], vec![0.0, eps]];
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FilterCheck {
    pub is_filter: bool,
    /// First reachable history whose belief is not one-hot.
    pub witness: Option<Memory>,
}

/// Checks that every reachable history has a one-hot belief.
pub fn is_deterministic_filter(model: &Pomdp, cap: usize) -> Result<FilterCheck> {
    let one_hot = |b: &[f64]| b.iter().all(|&x| x.abs() < 1e-9 || (x - 1.0).abs() < 1e-9);
    let mut layer: Vec<(Memory, Vec<f64>)> = Vec::new();
    for o in 0..model.observations {
        let key = Memory::start(o);
        if let Ok(b) = exact_belief(model, &key) {
            layer.push((key, b));
        }
    }
    let mut seen = 0usize;
    for h in 1..=model.horizon {
        seen += layer.len();
        if seen > cap {
            return Err(Error::CapExceeded { needed: seen as u128, cap: cap as u128 });
        }
        if let Some((key, _)) = layer.iter().find(|(_, b)| !one_hot(b)) {
            return Ok(FilterCheck { is_filter: false, witness: Some(key.clone()) });
        }
        if h == model.horizon {
            break;
        }
        let mut next = Vec::new();
        for (key, b) in &layer {
            for a in 0..model.actions {
                let pushed = push_forward(model, h, b, a);
                for o in 0..model.observations {
                    if let Ok(b2) = crate::belief::bayes_update(model, h + 1, &pushed, o) {
                        next.push((key.push(a, o, usize::MAX), b2));
                    }
                }
            }
        }
        layer = next;
    }
    Ok(FilterCheck { is_filter: true, witness: None })
}

/// Lookup decoders: `o_1 -> s_1` and `(h, s_{h-1}, a_{h-1}, o_h) -> s_h`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecoderTable {
    #[serde(with = "crate::util::entries")]
    pub first: BTreeMap<usize, usize>,
    #[serde(with = "crate::util::entries")]
    pub steps: BTreeMap<(usize, usize, usize, usize), usize>,
    /// Number of samples that disagreed with an already stored entry.
    pub conflicts: usize,
}

impl DecoderTable {
    fn record_first(&mut self, o: usize, s: usize) {
        match self.first.get(&o) {
            Some(&prev) if prev != s => self.conflicts += 1,
            Some(_) => {}
            None => {
                self.first.insert(o, s);
            }
        }
    }

    fn record(&mut self, h: usize, s_prev: usize, a_prev: usize, o: usize, s: usize) {
        match self.steps.get(&(h, s_prev, a_prev, o)) {
            Some(&prev) if prev != s => self.conflicts += 1,
            Some(_) => {}
            None => {
                self.steps.insert((h, s_prev, a_prev, o), s);
            }
        }
    }

    /// `[h, s_prev, a_prev, o, s]` rows; step-1 rows carry `null` for the previous pair.
    pub fn to_tuples(&self) -> Vec<(usize, Option<usize>, Option<usize>, usize, usize)> {
        let mut out: Vec<_> = self.first.iter().map(|(&o, &s)| (1, None, None, o, s)).collect();
        out.extend(self.steps.iter().map(|(&(h, sp, ap, o), &s)| (h, Some(sp), Some(ap), o, s)));
        out
    }

    /// Decoded state at step `h + 1` from the register at step `h`.
    pub fn next(&self, h: usize, reg: Option<usize>, a: usize, o: usize) -> Option<usize> {
        reg.and_then(|s| self.steps.get(&(h + 1, s, a, o)).copied())
    }
}

/// Decoder learning: `m` episodes for step 1 and a fresh batch of `m` expert
/// episodes for each later step.
pub fn learn_decoders<R: Rng + ?Sized>(sim: &Simulator, expert: &StatePolicy, m: usize, rng: &mut R) -> Result<DecoderTable> {
    if m == 0 {
        return Err(Error::InvalidArgument("M must be positive".into()));
    }
    let mut table = DecoderTable::default();
    for _ in 0..m {
        let (s, o) = sim.start(rng);
        table.record_first(o, s);
    }
    for h in 2..=sim.horizon() {
        for _ in 0..m {
            let (mut s, _) = sim.start(rng);
            for t in 1..h {
                let a = sample_categorical(expert.dist(t, s), rng);
                let (s2, o2) = sim.advance(t, s, a, rng);
                if t + 1 == h {
                    table.record(h, s, a, o2.expect("h <= H"), s2);
                }
                s = s2;
            }
        }
    }
    Ok(table)
}

/// Theory-scaled batch size `M = (A O S + log(H / delta)) / eps^2`.
pub fn decoder_batch_size(s: usize, a: usize, o: usize, h: usize, eps: f64, delta: f64) -> usize {
    (((a * o * s) as f64 + (h as f64 / delta).ln()) / (eps * eps)).ceil() as usize
}

/// Expert acting on recursively decoded states. An unknown key switches to
/// uniform actions for the rest of the episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedPolicy {
    pub decoders: DecoderTable,
    pub expert: StatePolicy,
    pub actions: usize,
}

pub fn compose_policy(decoders: DecoderTable, expert: StatePolicy) -> DecodedPolicy {
    let actions = expert.table.first().and_then(|r| r.first()).map_or(1, |row| row.len());
    DecodedPolicy { decoders, expert, actions }
}

impl Controller for DecodedPolicy {
    type Key = Option<usize>;

    fn start(&self, obs: usize) -> Option<usize> {
        self.decoders.first.get(&obs).copied()
    }

    fn row(&self, h: usize, key: &Option<usize>, _state: usize) -> Result<Cow<'_, [f64]>> {
        Ok(match key {
            Some(s) => Cow::Borrowed(self.expert.dist(h, *s)),
            None => Cow::Owned(uniform(self.actions)),
        })
    }

    fn advance(&self, h: usize, key: &Option<usize>, action: usize, obs: usize) -> Option<usize> {
        self.decoders.next(h, *key, action, obs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureMode {
    Exact,
    MonteCarlo { episodes: usize, seed: u64 },
}

/// Probability, with the expert acting on true states, that some step decodes
/// to a wrong state or to an unknown key.
pub fn decode_failure_prob(model: &Pomdp, expert: &StatePolicy, decoders: &DecoderTable, mode: FailureMode) -> Result<f64> {
    match mode {
        FailureMode::Exact => {
            // mass on histories decoded correctly so far; the register then equals the state
            let mut alive = vec![0.0; model.states];
            for s in 0..model.states {
                for o in 0..model.observations {
                    if decoders.first.get(&o) == Some(&s) {
                        alive[s] += model.mu1[s] * model.emit(1, s)[o];
                    }
                }
            }
            for h in 1..model.horizon {
                let mut next = vec![0.0; model.states];
                for s in 0..model.states {
                    if alive[s] <= 0.0 {
                        continue;
                    }
                    for (a, &pa) in expert.dist(h, s).iter().enumerate() {
                        for (s2, &pt) in model.trans(h, s, a).iter().enumerate() {
                            for (o2, &po) in model.emit(h + 1, s2).iter().enumerate() {
                                if decoders.steps.get(&(h + 1, s, a, o2)) == Some(&s2) {
                                    next[s2] += alive[s] * pa * pt * po;
                                }
                            }
                        }
                    }
                }
                alive = next;
            }
            Ok((1.0 - alive.iter().sum::<f64>()).clamp(0.0, 1.0))
        }
        FailureMode::MonteCarlo { episodes, seed } => {
            if episodes == 0 {
                return Err(Error::InvalidArgument("need at least one episode".into()));
            }
            let mut rng = crate::util::rng_from_seed(seed);
            let mut failures = 0usize;
            for _ in 0..episodes {
                let traj = crate::policy::sample_with(model, expert, &mut rng)?;
                let mut reg = decoders.first.get(&traj.observations[0]).copied();
                let mut failed = reg != Some(traj.states[0]);
                for h in 1..model.horizon {
                    if failed {
                        break;
                    }
                    reg = decoders.next(h, reg, traj.actions[h - 1], traj.observations[h]);
                    failed = reg != Some(traj.states[h]);
                }
                failures += failed as usize;
            }
            Ok(failures as f64 / episodes as f64)
        }
    }
}

/// Divergence `D(expert row || candidate row)` minimized per history.
pub enum Divergence {
    ForwardKl,
    Custom(Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>),
}

/// For each history reachable under `behavior`, the row minimizing
/// `E_{s ~ b(history)} D(expert(.|s) || q)`.
pub fn distill_expected_objective(
    model: &Pomdp,
    expert: &StatePolicy,
    behavior: &MemoryPolicy,
    divergence: &Divergence,
    cap: usize,
) -> Result<MemoryPolicy> {
    if let Divergence::Custom(f) = divergence {
        check_convexity(f.as_ref(), model.actions)?;
    }
    let mut out = MemoryPolicy::full_history(model.horizon, model.actions);
    let mut layer: Vec<Memory> = (0..model.observations)
        .map(Memory::start)
        .filter(|k| exact_belief(model, k).is_ok())
        .collect();
    let mut seen = 0;
    for h in 1..=model.horizon {
        seen += layer.len();
        if seen > cap {
            return Err(Error::CapExceeded { needed: seen as u128, cap: cap as u128 });
        }
        let mut next = Vec::new();
        for key in &layer {
            let b = exact_belief(model, key)?;
            let rows: Vec<(f64, &[f64])> = b.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(s, &w)| (w, expert.dist(h, s))).collect();
            let q = match divergence {
                Divergence::ForwardKl => {
                    let mut q = vec![0.0; model.actions];
                    for (w, row) in &rows {
                        q.iter_mut().zip(row.iter()).for_each(|(x, p)| *x += w * p);
                    }
                    q
                }
                Divergence::Custom(f) => minimize_on_simplex(|q| rows.iter().map(|(w, p)| w * f(p, q)).sum(), model.actions),
            };
            if h < model.horizon {
                let behave = behavior.dist(h, &key.suffix(behavior.memory));
                for (a, &pa) in behave.iter().enumerate() {
                    if pa <= 0.0 {
                        continue;
                    }
                    let pushed = push_forward(model, h, &b, a);
                    for o in 0..model.observations {
                        let lik: f64 = (0..model.states).map(|s| pushed[s] * model.emit(h + 1, s)[o]).sum();
                        if lik > crate::belief::MIN_LIKELIHOOD {
                            next.push(key.push(a, o, usize::MAX));
                        }
                    }
                }
            }
            out.set(h, key.clone(), q);
        }
        next.sort();
        next.dedup();
        layer = next;
    }
    Ok(out)
}

fn check_convexity(f: &(dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync), n: usize) -> Result<()> {
    let mut rng = crate::util::rng_from_seed(0x5eed);
    let draw = |rng: &mut crate::util::SeededRng| {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        crate::util::normalize(&mut v);
        v
    };
    for _ in 0..200 {
        let (p, x, y) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        if f(&p, &mid) > 0.5 * (f(&p, &x) + f(&p, &y)) + 1e-9 {
            return Err(Error::InvalidArgument("divergence is not convex in its second argument".into()));
        }
    }
    Ok(())
}

/// Projected gradient descent with finite-difference gradients and backtracking.
fn minimize_on_simplex(obj: impl Fn(&[f64]) -> f64, n: usize) -> Vec<f64> {
    let mut q = uniform(n);
    let mut val = obj(&q);
    let mut step = 0.5;
    for _ in 0..20_000 {
        let mut grad = vec![0.0; n];
        let hstep = 1e-7;
        for i in 0..n {
            let mut up = q.clone();
            let mut dn = q.clone();
            up[i] += hstep;
            dn[i] = (dn[i] - hstep).max(0.0);
            grad[i] = (obj(&up) - obj(&dn)) / (up[i] - dn[i]);
        }
        let mut improved = false;
        while step > 1e-14 {
            let cand: Vec<f64> = q.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let cand = crate::baselines::project_simplex(&cand);
            let cv = obj(&cand);
            if cv < val - 1e-16 {
                let moved = crate::util::l1(&cand, &q);
                q = cand;
                val = cv;
                improved = moved > 1e-12;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    q
}

/// `(E_{s ~ b(o_1)} V_1(s), V_1(o_1))` for a policy: the belief-averaged state
/// value and the value of the history itself.
pub fn value_bias<C: Controller>(model: &Pomdp, policy: &C, o1: usize) -> Result<(f64, f64)> {
    let b = exact_belief(model, &Memory::start(o1))?;
    let mut state_avg = 0.0;
    for s in 0..model.states {
        if b[s] <= 0.0 {
            continue;
        }
        let mut start = BTreeMap::new();
        for o in 0..model.observations {
            let p = model.emit(1, s)[o];
            if p > 0.0 {
                *start.entry((policy.start(o), s)).or_insert(0.0) += p;
            }
        }
        state_avg += b[s] * evaluate_from(model, policy, start)?;
    }
    let mut start = BTreeMap::new();
    for s in 0..model.states {
        if b[s] > 0.0 {
            start.insert((policy.start(o1), s), b[s]);
        }
    }
    Ok((state_avg, evaluate_from(model, policy, start)?))
}
