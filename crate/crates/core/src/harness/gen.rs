//! Seeded random instances.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marl::{Layout, Posg, Sharing};
use crate::model::Pomdp;
use crate::observability::{estimate_observability, Observability};
use crate::util::{one_hot, rng_from_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    /// Dirichlet(1) rows everywhere.
    Generic,
    /// 0/1 transitions and a fixed initial state, random emissions.
    DeterministicTransition,
    /// Disjoint emission supports, so the observation reveals the state.
    BlockMdp,
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InstanceKind::Generic => "generic",
            InstanceKind::DeterministicTransition => "deterministic_transition",
            InstanceKind::BlockMdp => "block_mdp",
        })
    }
}

impl FromStr for InstanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(InstanceKind::Generic),
            "deterministic_transition" => Ok(InstanceKind::DeterministicTransition),
            "block_mdp" => Ok(InstanceKind::BlockMdp),
            other => Err(Error::InvalidArgument(format!("unknown instance kind {other:?}"))),
        }
    }
}

/// Flat Dirichlet draw.
pub fn dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let z: f64 = v.iter().sum();
    if z <= 0.0 {
        return one_hot(n, rng.random_range(0..n));
    }
    for x in v.iter_mut() {
        *x /= z;
    }
    v
}

/// Dirichlet row supported on `support`.
fn dirichlet_on<R: Rng + ?Sized>(n: usize, support: &[usize], rng: &mut R) -> Vec<f64> {
    let w = dirichlet(support.len(), rng);
    let mut row = vec![0.0; n];
    for (&o, p) in support.iter().zip(w) {
        row[o] = p;
    }
    row
}

/// Observations `o` with `o % S == s`.
fn block(s: usize, states: usize, observations: usize) -> Vec<usize> {
    (0..observations).filter(|o| o % states == s).collect()
}

pub fn gen_pomdp(kind: InstanceKind, s: usize, a: usize, o: usize, h: usize, seed: u64) -> Result<Pomdp> {
    if s == 0 || a == 0 || o == 0 || h == 0 {
        return Err(Error::InvalidArgument("all sizes must be positive".into()));
    }
    if kind == InstanceKind::BlockMdp && o < s {
        return Err(Error::InvalidArgument(format!("block instances need O >= S, got O = {o}, S = {s}")));
    }
    let mut rng = rng_from_seed(seed);
    let deterministic = kind == InstanceKind::DeterministicTransition;
    let mu1 = if deterministic { one_hot(s, rng.random_range(0..s)) } else { dirichlet(s, &mut rng) };
    let transition = (0..h)
        .map(|_| {
            (0..s)
                .map(|_| {
                    (0..a)
                        .map(|_| if deterministic { one_hot(s, rng.random_range(0..s)) } else { dirichlet(s, &mut rng) })
                        .collect()
                })
                .collect()
        })
        .collect();
    let emission = (0..h)
        .map(|_| {
            (0..s)
                .map(|x| match kind {
                    InstanceKind::BlockMdp => dirichlet_on(o, &block(x, s, o), &mut rng),
                    _ => dirichlet(o, &mut rng),
                })
                .collect()
        })
        .collect();
    let r = (0..h).map(|_| (0..s).map(|_| (0..a).map(|_| rng.random::<f64>()).collect()).collect()).collect();
    let model = Pomdp { horizon: h, states: s, actions: a, observations: o, mu1, transition, emission, r };
    model.ensure_valid()?;
    Ok(model)
}

/// Observability constant of every step's emission matrix.
pub fn observability_report(model: &Pomdp) -> Result<Vec<Observability>> {
    model.emission.iter().map(|e| estimate_observability(e)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosgKind {
    /// Dirichlet(1) joint kernels and emissions.
    Generic,
    /// Every agent's own observation reveals the state.
    Block,
    /// One state, two actions each, agent 0 wins on a match.
    MatchingPennies,
}

impl FromStr for PosgKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(PosgKind::Generic),
            "block" => Ok(PosgKind::Block),
            "matching_pennies" => Ok(PosgKind::MatchingPennies),
            other => Err(Error::InvalidArgument(format!("unknown game kind {other:?}"))),
        }
    }
}

/// Random POSG with `n` agents sharing the per-agent sizes `actions` and `observations`.
/// The centralized reward is the agents' mean.
#[allow(clippy::too_many_arguments)]
pub fn gen_posg(
    kind: PosgKind,
    n: usize,
    s: usize,
    actions: usize,
    observations: usize,
    h: usize,
    sharing: Sharing,
    zero_sum: bool,
    seed: u64,
) -> Result<Posg> {
    if n == 0 || s == 0 || actions == 0 || observations == 0 || h == 0 {
        return Err(Error::InvalidArgument("all sizes must be positive".into()));
    }
    if zero_sum && n != 2 {
        return Err(Error::InvalidArgument("zero-sum games need exactly two agents".into()));
    }
    let mut rng = rng_from_seed(seed);
    let layout = Layout { actions: vec![actions; n], observations: vec![observations; n], sharing };
    let (a_n, o_n) = (layout.joint_actions(), layout.joint_observations());
    let mut model = match kind {
        PosgKind::MatchingPennies => {
            if n != 2 || s != 1 || actions != 2 || observations != 1 {
                return Err(Error::InvalidArgument("matching pennies has n = 2, S = 1, A_i = 2, O_i = 1".into()));
            }
            Pomdp::uniform(h, 1, 4, 1)
        }
        PosgKind::Generic => {
            let mut m = gen_pomdp(InstanceKind::Generic, s, a_n, o_n, h, seed)?;
            m.r = vec![vec![vec![0.0; a_n]; s]; h];
            m
        }
        PosgKind::Block => {
            if observations < s {
                return Err(Error::InvalidArgument(format!("block games need O_i >= S, got {observations} < {s}")));
            }
            let mut m = gen_pomdp(InstanceKind::Generic, s, a_n, o_n, h, seed)?;
            m.r = vec![vec![vec![0.0; a_n]; s]; h];
            for step in m.emission.iter_mut() {
                for (x, row) in step.iter_mut().enumerate() {
                    let own: Vec<Vec<f64>> = (0..n).map(|_| dirichlet_on(observations, &block(x, s, observations), &mut rng)).collect();
                    for (o, p) in row.iter_mut().enumerate() {
                        *p = layout.split_obs(o).iter().zip(&own).map(|(&oi, e)| e[oi]).product();
                    }
                }
            }
            m
        }
    };
    let mut rewards = vec![vec![vec![vec![0.0; a_n]; model.states]; h]; n];
    for t in 0..h {
        for x in 0..model.states {
            for a in 0..a_n {
                let r0 = match kind {
                    PosgKind::MatchingPennies => {
                        let p = layout.split_action(a);
                        if p[0] == p[1] { 1.0 } else { 0.0 }
                    }
                    _ => rng.random::<f64>(),
                };
                rewards[0][t][x][a] = r0;
                for ri in rewards.iter_mut().skip(1) {
                    ri[t][x][a] = if zero_sum || kind == PosgKind::MatchingPennies { 1.0 - r0 } else { rng.random::<f64>() };
                }
            }
        }
    }
    for t in 0..h {
        for x in 0..model.states {
            for a in 0..a_n {
                model.r[t][x][a] = rewards.iter().map(|ri| ri[t][x][a]).sum::<f64>() / n as f64;
            }
        }
    }
    let posg = Posg { model, n, layout, rewards, zero_sum: zero_sum || kind == PosgKind::MatchingPennies };
    let report = posg.validate();
    if !report.is_empty() {
        return Err(Error::InvalidModel(format!("generated game failed validation: {}", report[0].location)));
    }
    Ok(posg)
}
