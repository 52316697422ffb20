//! Optimistic value iteration over compressed common information.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::belief::CommonBelief;
use super::info::{compress_common, info_split, next_increment, CommonInfo, Increment};
use super::solver::{bayesian_solver, BayesianGame, Profile, SolverConfig, TypeCell};
use super::{law_prob, JointPolicy, Law, Layout, Posg, Sharing};
use crate::belief::Memory;
use crate::env::Simulator;
use crate::error::{Error, Result};
use crate::model::sample_categorical;

/// Constants entering the exploration bonus.
#[derive(Clone, Debug, Serialize)]
pub struct BonusScale {
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    pub episodes: usize,
    pub delta: f64,
    pub c3: f64,
}

/// `min(c3 (H - h) sqrt(O log(S A H K / delta) / max(N, 1)), 2 (H - h))`.
pub fn bonus(count: usize, h: usize, scale: &BonusScale) -> f64 {
    let rest = (scale.horizon - h) as f64;
    let log = ((scale.states * scale.actions * scale.horizon * scale.episodes) as f64 / scale.delta).ln();
    (scale.c3 * rest * (scale.observations as f64 * log / count.max(1) as f64).sqrt()).min(2.0 * rest)
}

/// How the per-agent gap proxies `V^high - V^low` are combined when picking the output episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Minimum over episodes and agents jointly.
    #[default]
    MinOverAgents,
    /// Minimum over episodes of the worst agent.
    MaxOverAgents,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OviConfig {
    pub episodes: usize,
    pub delta: f64,
    pub c3: f64,
    pub solver: SolverConfig,
    pub selector: Selector,
    /// Largest number of compressed keys per step.
    pub cap: usize,
}

impl Default for OviConfig {
    fn default() -> Self {
        OviConfig { episodes: 1000, delta: 0.05, c3: 2.0, solver: SolverConfig::default(), selector: Selector::default(), cap: 100_000 }
    }
}

/// Executes one stage-game profile per `(h, compressed common information)`.
#[derive(Clone, Debug, Serialize)]
pub struct PrescriptionPolicy {
    pub layout: Layout,
    pub memory: usize,
    #[serde(with = "crate::util::entries")]
    pub table: BTreeMap<(usize, CommonInfo), Arc<Profile>>,
}

impl PrescriptionPolicy {
    pub fn profile(&self, h: usize, c: &CommonInfo) -> Result<&Profile> {
        self.table
            .get(&(h, c.clone()))
            .map(|p| p.as_ref())
            .ok_or_else(|| Error::MissingRow { step: h, key: format!("{:?}", c.0) })
    }
}

impl JointPolicy for PrescriptionPolicy {
    fn law(&self, h: usize, history: &Memory, _state: usize) -> Result<Law> {
        let info = info_split(&self.layout, history)?;
        let key = compress_common(&info.common, self.memory);
        Ok(self.profile(h, &key)?.law(&info.types()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeTrace {
    /// `V^high_1` per agent, averaged over the first common information.
    pub high: Vec<f64>,
    pub low: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OviOutput {
    pub policy: PrescriptionPolicy,
    /// 0-based episode whose policy is returned.
    pub best_episode: usize,
    pub trace: Vec<EpisodeTrace>,
    /// Entries with `Q^low > Q^high`.
    pub order_violations: usize,
    /// Entries outside `[0, H - h + 1]`.
    pub clamp_violations: usize,
}

/// Every compressed common information that can occur at step `h`.
fn compressed_keys(layout: &Layout, h: usize, memory: usize, cap: usize) -> Result<Vec<CommonInfo>> {
    let full = CommonInfo::full_len(layout.sharing, h);
    let len = full.min(memory);
    let steps_obs = match layout.sharing {
        Sharing::Full => layout.joint_observations(),
        Sharing::OneStepDelay => layout.joint_types(),
    };
    let with_start = layout.sharing == Sharing::Full && len == full;
    let n_steps = if with_start { len - 1 } else { len };
    let per_step = layout.joint_actions() * steps_obs;
    let starts = if with_start { layout.joint_observations() } else { 1 };
    let total = (starts as u128).saturating_mul((per_step as u128).saturating_pow(n_steps as u32));
    if total > cap as u128 {
        return Err(Error::CapExceeded { needed: total, cap: cap as u128 });
    }
    let mut keys: Vec<Vec<Increment>> = if with_start { (0..starts).map(|o| vec![Increment::Start(o)]).collect() } else { vec![vec![]] };
    for _ in 0..n_steps {
        keys = keys
            .into_iter()
            .flat_map(|k| {
                (0..per_step).map(move |x| {
                    let mut k = k.clone();
                    k.push(Increment::Step { action: x % layout.joint_actions(), obs: x / layout.joint_actions() });
                    k
                })
            })
            .collect();
    }
    Ok(keys.into_iter().map(CommonInfo).collect())
}

struct Counts {
    /// `[h-1][s][a]`
    sa: Vec<Vec<Vec<usize>>>,
    /// `[h-1][s][a][o']`
    sao: Vec<Vec<Vec<Vec<usize>>>>,
}

impl Counts {
    fn next_obs(&self, h: usize, s: usize, a: usize) -> Vec<f64> {
        let n = self.sa[h - 1][s][a];
        let row = &self.sao[h - 1][s][a];
        if n == 0 {
            vec![1.0 / row.len() as f64; row.len()]
        } else {
            row.iter().map(|&c| c as f64 / n as f64).collect()
        }
    }
}

/// Optimistic common-information value iteration.
///
/// Each episode sweeps backward over every compressed key, building per-agent
/// `Q^high` / `Q^low` from the learned next-observation frequencies and the
/// bonus, solves the Bayesian stage game on `Q^high`, then runs the resulting
/// policy once in the simulator to update the counts. The returned policy is
/// the one from the episode minimizing the selector's gap proxy; zero-sum games
/// return its per-agent marginals.
pub fn optimistic_vi<R: Rng>(posg: &Posg, belief: &CommonBelief, cfg: &OviConfig, rng: &mut R) -> Result<OviOutput> {
    if cfg.episodes == 0 {
        return Err(Error::InvalidArgument("need at least one episode".into()));
    }
    if belief.sharing() != posg.layout.sharing {
        return Err(Error::InvalidArgument("belief and game use different sharing".into()));
    }
    let m = &posg.model;
    let (hh, s_n, a_n, o_n) = (m.horizon, m.states, m.actions, m.observations);
    let n = posg.n;
    let layout = &posg.layout;
    let memory = belief.memory();
    let privates = belief.privates();
    let keys: Vec<Vec<CommonInfo>> = (1..=hh).map(|h| compressed_keys(layout, h, memory, cfg.cap)).collect::<Result<_>>()?;
    let scale = BonusScale { horizon: hh, states: s_n, actions: a_n, observations: o_n, episodes: cfg.episodes, delta: cfg.delta, c3: cfg.c3 };
    let type_of = |p: usize| -> Vec<usize> {
        match layout.sharing {
            Sharing::Full => vec![0; n],
            Sharing::OneStepDelay => layout.split_obs(p),
        }
    };
    let mut counts = Counts { sa: vec![vec![vec![0; a_n]; s_n]; hh], sao: vec![vec![vec![vec![0; o_n]; a_n]; s_n]; hh] };
    let mut memo: BTreeMap<(usize, CommonInfo), (BayesianGame, Arc<Profile>)> = BTreeMap::new();
    let initial = belief.initial();
    let sim = Simulator::new(m);
    let mut trace = Vec::with_capacity(cfg.episodes);
    let mut order_violations = 0;
    let mut clamp_violations = 0;
    let mut best: Option<(f64, usize, BTreeMap<(usize, CommonInfo), Arc<Profile>>)> = None;

    for k in 0..cfg.episodes {
        // values[key] = (V^high per agent, V^low per agent) at the step being built
        let mut upper: BTreeMap<CommonInfo, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        let mut table = BTreeMap::new();
        for h in (1..=hh).rev() {
            let ceiling = (hh - h + 1) as f64;
            let mut values = BTreeMap::new();
            for key in &keys[h - 1] {
                let b = belief.get(h, key)?;
                let mut cells = Vec::new();
                let mut low_payoffs = Vec::new();
                for p in 0..privates {
                    let prob: f64 = (0..s_n).map(|s| b[s * privates + p]).sum();
                    if prob <= 0.0 {
                        continue;
                    }
                    let mut high = vec![vec![0.0; a_n]; n];
                    let mut low = vec![vec![0.0; a_n]; n];
                    for s in 0..s_n {
                        let w = b[s * privates + p] / prob;
                        if w <= 0.0 {
                            continue;
                        }
                        for a in 0..a_n {
                            let bon = bonus(counts.sa[h - 1][s][a], h, &scale);
                            let jhat = if h < hh { counts.next_obs(h, s, a) } else { Vec::new() };
                            for i in 0..n {
                                let mut fut_hi = 0.0;
                                let mut fut_lo = 0.0;
                                for (o2, &q) in jhat.iter().enumerate() {
                                    if q > 0.0 {
                                        let next = key.extend(next_increment(layout.sharing, p, a, o2), memory);
                                        let (vh, vl) = &upper[&next];
                                        fut_hi += q * vh[i];
                                        fut_lo += q * vl[i];
                                    }
                                }
                                let r = posg.reward(i, h, s, a);
                                let qh = (r + fut_hi + bon).min(ceiling);
                                let ql = (r + fut_lo - bon).max(0.0);
                                if ql > qh + 1e-12 {
                                    order_violations += 1;
                                }
                                if !(0.0..=ceiling + 1e-12).contains(&qh) || !(0.0..=ceiling + 1e-12).contains(&ql) {
                                    clamp_violations += 1;
                                }
                                high[i][a] += w * qh;
                                low[i][a] += w * ql;
                            }
                        }
                    }
                    cells.push(TypeCell { types: type_of(p), prob, payoff: high });
                    low_payoffs.push(low);
                }
                let game = BayesianGame { actions: layout.actions.clone(), types: layout.types(), cells, scale: ceiling };
                let profile = match memo.get(&(h, key.clone())) {
                    Some((g, prof)) if *g == game => prof.clone(),
                    _ => {
                        let prof = Arc::new(bayesian_solver(&game, &cfg.solver)?);
                        memo.insert((h, key.clone()), (game.clone(), prof.clone()));
                        prof
                    }
                };
                let mut vh = vec![0.0; n];
                let mut vl = vec![0.0; n];
                for (cell, low) in game.cells.iter().zip(&low_payoffs) {
                    let law = profile.law(&cell.types);
                    for a in 0..a_n {
                        let pa = law_prob(&law, &layout.split_action(a));
                        if pa > 0.0 {
                            for i in 0..n {
                                vh[i] += cell.prob * pa * cell.payoff[i][a];
                                vl[i] += cell.prob * pa * low[i][a];
                            }
                        }
                    }
                }
                values.insert(key.clone(), (vh, vl));
                table.insert((h, key.clone()), profile);
            }
            upper = values;
        }
        let mut high = vec![0.0; n];
        let mut low = vec![0.0; n];
        for (c, w) in &initial {
            let (vh, vl) = &upper[&compress_common(c, memory)];
            for i in 0..n {
                high[i] += w * vh[i];
                low[i] += w * vl[i];
            }
        }
        let diffs = high.iter().zip(&low).map(|(h, l)| h - l);
        let proxy = match cfg.selector {
            Selector::MinOverAgents => diffs.fold(f64::INFINITY, f64::min),
            Selector::MaxOverAgents => diffs.fold(f64::NEG_INFINITY, f64::max),
        };
        trace.push(EpisodeTrace { high, low });

        // execute pi^k once
        let (mut s, o1) = sim.start(rng);
        let mut c = match layout.sharing {
            Sharing::Full => CommonInfo(vec![Increment::Start(o1)]),
            Sharing::OneStepDelay => CommonInfo::default(),
        };
        c = compress_common(&c, memory);
        let mut p = o1;
        for h in 1..=hh {
            let profile = &table[&(h, c.clone())];
            let member = &profile.members[rng.random_range(0..profile.members.len())];
            let types = type_of(if layout.sharing == Sharing::Full { 0 } else { p });
            let parts: Vec<usize> = (0..n).map(|i| sample_categorical(&member[i][types[i]], rng)).collect();
            let a = layout.join_action(&parts);
            let (s2, o2) = sim.advance(h, s, a, rng);
            counts.sa[h - 1][s][a] += 1;
            if let Some(o2) = o2 {
                counts.sao[h - 1][s][a][o2] += 1;
                c = c.extend(next_increment(layout.sharing, p, a, o2), memory);
                p = o2;
            }
            s = s2;
        }

        if best.as_ref().is_none_or(|(g, _, _)| proxy < *g) {
            best = Some((proxy, k, table));
        }
    }
    let (_, best_episode, mut table) = best.expect("at least one episode");
    if posg.zero_sum {
        for prof in table.values_mut() {
            *prof = Arc::new(prof.marginalize());
        }
    }
    Ok(OviOutput {
        policy: PrescriptionPolicy { layout: layout.clone(), memory, table },
        best_episode,
        trace,
        order_violations,
        clamp_violations,
    })
}
