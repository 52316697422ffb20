//! Exact trajectory enumeration, and randomized checks of the ℓ1 inequalities
//! behind the model-learning analysis (see [`OracleCase`]).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gen::{dirichlet, gen_pomdp, InstanceKind};
use crate::asymmetric_ac::all_memory_keys;
use crate::error::{Error, Result};
use crate::learning::redirect_row;
use crate::model::Pomdp;
use crate::policy::{Controller, MemoryPolicy};
use crate::util::{l1, rng_from_seed, uniform};

/// `(s_1..s_H, o_1..o_H, a_1..a_{H-1})`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TrajKey {
    pub states: Vec<usize>,
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
}

/// Exact law of state-inclusive trajectories under a controller.
pub fn enumerate_trajectories<C: Controller>(model: &Pomdp, c: &C, cap: u128) -> Result<BTreeMap<TrajKey, f64>> {
    let hh = model.horizon as u32;
    let needed = ((model.states * model.observations) as u128)
        .saturating_pow(hh)
        .saturating_mul((model.actions as u128).saturating_pow(hh - 1));
    if needed > cap {
        return Err(Error::CapExceeded { needed, cap });
    }
    let mut layer: Vec<(TrajKey, C::Key, f64)> = Vec::new();
    for s in 0..model.states {
        for o in 0..model.observations {
            let p = model.mu1[s] * model.emit(1, s)[o];
            if p > 0.0 {
                layer.push((TrajKey { states: vec![s], observations: vec![o], actions: vec![] }, c.start(o), p));
            }
        }
    }
    for h in 1..model.horizon {
        let mut next = Vec::new();
        for (traj, key, p) in &layer {
            let s = *traj.states.last().expect("nonempty");
            let row = c.row(h, key, s)?;
            for (a, &pa) in row.iter().enumerate() {
                for (s2, &pt) in model.trans(h, s, a).iter().enumerate() {
                    for (o2, &po) in model.emit(h + 1, s2).iter().enumerate() {
                        let q = p * pa * pt * po;
                        if q > 0.0 {
                            let mut t = traj.clone();
                            t.states.push(s2);
                            t.observations.push(o2);
                            t.actions.push(a);
                            next.push((t, c.advance(h, key, a, o2), q));
                        }
                    }
                }
            }
        }
        layer = next;
    }
    Ok(layer.into_iter().map(|(t, _, p)| (t, p)).collect())
}

/// ℓ1 distance between two sparse laws.
fn sparse_l1<K: Ord + Clone>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut total: f64 = p.iter().map(|(k, &x)| (x - q.get(k).copied().unwrap_or(0.0)).abs()).sum();
    total += q.iter().filter(|(k, _)| !p.contains_key(*k)).map(|(_, &y)| y).sum::<f64>();
    total
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajCheck {
    /// `||P - P_hat||_1` over trajectories.
    pub trajectory_l1: f64,
    /// `||mu - mu_hat|| + E_P sum_{h<H} ||T_h - T_hat_h|| + E_P sum_h ||O_h - O_hat_h||`.
    pub bound: f64,
    /// `E_P ||b_h - b_hat_h||_1` per step.
    pub belief_l1: Vec<f64>,
    /// `min(bound - trajectory_l1, 2 bound - max_h belief_l1)`.
    pub slack: f64,
}

/// Joint law of `(o_1..o_h, a_1..a_{h-1}, s_h)` from trajectories.
fn history_state_marginal(law: &BTreeMap<TrajKey, f64>, h: usize) -> BTreeMap<(Vec<usize>, Vec<usize>), Vec<f64>> {
    let mut out: BTreeMap<(Vec<usize>, Vec<usize>), Vec<f64>> = BTreeMap::new();
    let s_n = law.keys().flat_map(|t| t.states.iter()).max().map_or(1, |m| m + 1);
    for (t, &p) in law {
        let key = (t.observations[..h].to_vec(), t.actions[..h - 1].to_vec());
        let row = out.entry(key).or_insert_with(|| vec![0.0; s_n]);
        row[t.states[h - 1]] += p;
    }
    out
}

pub fn traj_check<C: Controller>(p: &Pomdp, q: &Pomdp, c: &C, cap: u128) -> Result<TrajCheck> {
    let lp = enumerate_trajectories(p, c, cap)?;
    let lq = enumerate_trajectories(q, c, cap)?;
    let trajectory_l1 = sparse_l1(&lp, &lq);
    let hh = p.horizon;
    let mut bound = l1(&p.mu1, &q.mu1);
    for (t, &w) in &lp {
        for h in 1..=hh {
            let s = t.states[h - 1];
            bound += w * l1(p.emit(h, s), q.emit(h, s));
            if h < hh {
                let a = t.actions[h - 1];
                bound += w * l1(p.trans(h, s, a), q.trans(h, s, a));
            }
        }
    }
    let mut belief_l1 = Vec::with_capacity(hh);
    for h in 1..=hh {
        let mp = history_state_marginal(&lp, h);
        let mq = history_state_marginal(&lq, h);
        let mut e = 0.0;
        for (key, row) in &mp {
            let z: f64 = row.iter().sum();
            let b: Vec<f64> = row.iter().map(|x| x / z).collect();
            let b_hat = match mq.get(key) {
                Some(r) if r.iter().sum::<f64>() > 0.0 => {
                    let zq: f64 = r.iter().sum();
                    let mut v: Vec<f64> = r.iter().map(|x| x / zq).collect();
                    v.resize(b.len(), 0.0);
                    v
                }
                _ => uniform(b.len()),
            };
            e += z * l1(&b, &b_hat);
        }
        belief_l1.push(e);
    }
    let worst = belief_l1.iter().cloned().fold(0.0, f64::max);
    let slack = (bound - trajectory_l1).min(2.0 * bound - worst);
    Ok(TrajCheck { trajectory_l1, bound, belief_l1, slack })
}

/// Smaller slack of the two-sided bound
/// `-E ||P1(.|x) - P2(.|x)|| <= ||P1 - P2|| - ||P1_x - P2_x|| <= E ||P1(.|x) - P2(.|x)||`,
/// with the expectation under `P1(x)`. Rows are indexed by `x`.
pub fn trick_slack(p1: &[Vec<f64>], p2: &[Vec<f64>]) -> f64 {
    let joint: f64 = p1.iter().zip(p2).map(|(a, b)| l1(a, b)).sum();
    let m1: Vec<f64> = p1.iter().map(|r| r.iter().sum()).collect();
    let m2: Vec<f64> = p2.iter().map(|r| r.iter().sum()).collect();
    let middle = joint - l1(&m1, &m2);
    let cond = |row: &[f64], m: f64| if m > 0.0 { row.iter().map(|x| x / m).collect() } else { uniform(row.len()) };
    let expected: f64 = p1
        .iter()
        .zip(p2)
        .zip(m1.iter().zip(&m2))
        .map(|((a, b), (&x1, &x2))| if x1 > 0.0 { x1 * l1(&cond(a, x1), &cond(b, x2)) } else { 0.0 })
        .sum();
    (middle + expected).min(expected - middle)
}

/// `||x - y||_1 - ||x_hat - y_hat||_1` after moving the masked mass uniformly onto the rest.
pub fn mask_slack(x: &[f64], y: &[f64], masked: &[bool]) -> Result<f64> {
    let keep: Vec<bool> = masked.iter().map(|m| !m).collect();
    if !keep.iter().any(|&k| k) {
        return Err(Error::InvalidArgument("the mask must leave at least one index".into()));
    }
    Ok(l1(x, y) - l1(&redirect_row(x, &keep), &redirect_row(y, &keep)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleCase {
    /// Trajectory and belief distance under perturbed kernels.
    Traj,
    /// Joint distance against marginal distance plus expected conditional distance.
    Trick,
    /// Redirecting masked mass never increases ℓ1 distance.
    Mask,
}

impl fmt::Display for OracleCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleCase::Traj => "traj",
            OracleCase::Trick => "trick",
            OracleCase::Mask => "mask",
        })
    }
}

impl FromStr for OracleCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traj" => Ok(OracleCase::Traj),
            "trick" => Ok(OracleCase::Trick),
            "mask" => Ok(OracleCase::Mask),
            other => Err(Error::InvalidArgument(format!("unknown case {other:?}"))),
        }
    }
}

/// Slack at or above this counts as a pass.
pub const SLACK_TOL: f64 = -1e-10;

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub case: OracleCase,
    pub trials: usize,
    pub failures: usize,
    pub min_slack: f64,
    /// Trial index with the smallest slack.
    pub worst_trial: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Random full-history policy over every syntactic history.
pub fn random_history_policy<R: Rng + ?Sized>(horizon: usize, actions: usize, observations: usize, rng: &mut R) -> MemoryPolicy {
    let mut pi = MemoryPolicy::full_history(horizon, actions);
    for (h, key) in all_memory_keys(horizon, actions, observations, horizon) {
        pi.set(h, key, dirichlet(actions, rng));
    }
    pi
}

/// `(1 - w) P + w Q` row by row.
fn blend(p: &Pomdp, q: &Pomdp, w: f64) -> Pomdp {
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect::<Vec<_>>();
    let mut out = p.clone();
    out.mu1 = mix(&p.mu1, &q.mu1);
    for h in 0..p.horizon {
        for s in 0..p.states {
            out.emission[h][s] = mix(&p.emission[h][s], &q.emission[h][s]);
            for a in 0..p.actions {
                out.transition[h][s][a] = mix(&p.transition[h][s][a], &q.transition[h][s][a]);
            }
        }
    }
    out
}

/// Runs `trials` random instances of one inequality (sizes `S = A = O = 2`, `H = 3` for `traj`).
pub fn check_inequalities(case: OracleCase, trials: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = rng_from_seed(seed);
    let mut failures = 0;
    let mut min_slack = f64::INFINITY;
    let mut worst_trial = 0;
    let kinds = [InstanceKind::Generic, InstanceKind::DeterministicTransition, InstanceKind::BlockMdp];
    for trial in 0..trials {
        let slack = match case {
            OracleCase::Traj => {
                let p = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, rng.random())?;
                let other = gen_pomdp(kinds[trial % 3], 2, 2, 2, 3, rng.random())?;
                // every tenth trial compares a model with itself
                let w = if trial % 10 == 0 { 0.0 } else { rng.random::<f64>() };
                let q = blend(&p, &other, w);
                let pi = random_history_policy(3, 2, 2, &mut rng);
                traj_check(&p, &q, &pi, 1 << 20)?.slack
            }
            OracleCase::Trick => {
                let nx = rng.random_range(1..=4);
                let ny = rng.random_range(1..=4);
                let draw = |rng: &mut crate::util::SeededRng, sparse: bool| -> Vec<Vec<f64>> {
                    let mut flat = dirichlet(nx * ny, rng);
                    if sparse {
                        // empty one x-row so a conditional is undefined
                        let x = rng.random_range(0..nx);
                        for v in &mut flat[x * ny..(x + 1) * ny] {
                            *v = 0.0;
                        }
                        crate::util::normalize(&mut flat);
                    }
                    flat.chunks(ny).map(|c| c.to_vec()).collect()
                };
                let p1 = draw(&mut rng, nx > 1 && trial % 7 == 0);
                let p2 = draw(&mut rng, nx > 1 && trial % 5 == 0);
                trick_slack(&p1, &p2)
            }
            OracleCase::Mask => {
                let n = rng.random_range(2..=6);
                let x = dirichlet(n, &mut rng);
                let y = dirichlet(n, &mut rng);
                let mut masked: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.4).collect();
                if masked.iter().all(|&m| m) {
                    masked[rng.random_range(0..n)] = false;
                }
                mask_slack(&x, &y, &masked)?
            }
        };
        if slack < SLACK_TOL || !slack.is_finite() {
            failures += 1;
        }
        if slack < min_slack {
            min_slack = slack;
            worst_trial = trial;
        }
    }
    Ok(OracleReport { case, trials, failures, min_slack, worst_trial })
}
