//! State-based equilibrium experts, per-agent decoders learned from unilateral
//! exploration, and the distilled (decoded) joint policy.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, RngCore};
use serde::Serialize;

use super::gap::{best_deviation, expected_total};
use super::solver::{bayesian_solver, BayesianGame, Concept, Profile, SolverConfig, TypeCell};
use super::{JointPolicy, Law, Posg, Sharing};
use crate::belief::{exact_belief, push_forward, Memory};
use crate::distill::decoder_batch_size;
use crate::env::EpisodicEnv;
use crate::error::{Error, Result};
use crate::learning::{estimate_model, EmpiricalModel};
use crate::mdp::reach_policy;
use crate::model::{sample_categorical, Pomdp};
use crate::policy::StatePolicy;
use crate::util::{normalize, uniform};

/// Joint policy that reads the state: one stage-game profile per `(h, s)`.
/// All profiles share the same member count so that a member index acts as a
/// common seed across states.
#[derive(Clone, Debug, Serialize)]
pub struct StateExpert {
    pub actions: Vec<usize>,
    /// `[h-1][s]`, single-type profiles.
    pub profiles: Vec<Vec<Profile>>,
}

impl StateExpert {
    pub fn horizon(&self) -> usize {
        self.profiles.len()
    }

    fn members(&self) -> usize {
        self.profiles[0][0].members.len()
    }

    /// Distribution of agent `i`'s action under member `m` at `(h, s)`.
    fn row(&self, h: usize, s: usize, m: usize, i: usize) -> &[f64] {
        &self.profiles[h - 1][s].members[m][i][0]
    }

    pub fn law_at(&self, h: usize, s: usize) -> Law {
        self.profiles[h - 1][s].law(&vec![0; self.actions.len()])
    }
}

impl JointPolicy for StateExpert {
    fn law(&self, h: usize, _history: &Memory, state: usize) -> Result<Law> {
        Ok(self.law_at(h, state))
    }

    fn state_dependent(&self) -> bool {
        true
    }
}

/// Backward induction on the underlying Markov game, solving each stage game
/// `r_i(h, s, a) + E[V_i(h+1, s')]` with the Bayesian solver (one type per agent).
pub fn stage_game_expert(posg: &Posg, cfg: &SolverConfig) -> Result<StateExpert> {
    let m = &posg.model;
    let mut next = vec![vec![0.0; m.states]; posg.n];
    let mut profiles = vec![Vec::new(); m.horizon];
    for h in (1..=m.horizon).rev() {
        let mut cur = vec![vec![0.0; m.states]; posg.n];
        for s in 0..m.states {
            let payoff: Vec<Vec<f64>> = (0..posg.n)
                .map(|i| {
                    (0..m.actions)
                        .map(|a| posg.reward(i, h, s, a) + m.trans(h, s, a).iter().zip(&next[i]).map(|(p, v)| p * v).sum::<f64>())
                        .collect()
                })
                .collect();
            let game = BayesianGame {
                actions: posg.layout.actions.clone(),
                types: vec![1; posg.n],
                cells: vec![TypeCell { types: vec![0; posg.n], prob: 1.0, payoff: payoff.clone() }],
                scale: (m.horizon - h + 1) as f64,
            };
            let profile = bayesian_solver(&game, cfg)?;
            let law = profile.law(&vec![0; posg.n]);
            for a in 0..m.actions {
                let p = super::law_prob(&law, &posg.layout.split_action(a));
                for i in 0..posg.n {
                    cur[i][s] += p * payoff[i][a];
                }
            }
            profiles[h - 1].push(profile);
        }
        next = cur;
    }
    Ok(StateExpert { actions: posg.layout.actions.clone(), profiles })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecoderConfig {
    /// Episodes per `(agent, h, target, own action)`.
    pub per_cell: usize,
    /// UCB-VI episodes per reach policy.
    pub reach_budget: usize,
    pub delta: f64,
    /// `Ce` explores in the MDP extended with the agent's recommended action.
    pub concept: Concept,
}

/// Agent `i`'s view when the others follow the expert: a chain over `s`, or
/// over `(s, recommended a_i)` in CE mode, encoded as `s * R + rec`.
struct AgentChain<'a> {
    posg: &'a Posg,
    expert: &'a StateExpert,
    agent: usize,
    recs: usize,
    count: AtomicUsize,
}

impl<'a> AgentChain<'a> {
    fn new(posg: &'a Posg, expert: &'a StateExpert, agent: usize, concept: Concept) -> Self {
        let recs = if concept == Concept::Ce { posg.layout.actions[agent] } else { 1 };
        AgentChain { posg, expert, agent, recs, count: AtomicUsize::new(0) }
    }

    /// Draws the step-`h` member and, in CE mode, agent `i`'s recommendation.
    fn draw(&self, h: usize, s: usize, rng: &mut dyn RngCore) -> (usize, usize) {
        let m = rng.random_range(0..self.expert.members());
        let rec = if self.recs > 1 { sample_categorical(self.expert.row(h, s, m, self.agent), rng) } else { 0 };
        (m, rec)
    }

    /// Joint action with agent `i` playing `own` and the others following member `m`.
    fn joint(&self, h: usize, s: usize, m: usize, own: usize, rng: &mut dyn RngCore) -> usize {
        let parts: Vec<usize> = (0..self.posg.n)
            .map(|j| if j == self.agent { own } else { sample_categorical(self.expert.row(h, s, m, j), rng) })
            .collect();
        self.posg.layout.join_action(&parts)
    }
}

/// Member index is hidden inside the extended state through the recommendation
/// only; the remaining members are resampled conditionally on it.
fn member_given_rec(chain: &AgentChain, h: usize, s: usize, rec: usize, rng: &mut dyn RngCore) -> usize {
    if chain.recs == 1 {
        return rng.random_range(0..chain.expert.members());
    }
    let w: Vec<f64> = (0..chain.expert.members()).map(|m| chain.expert.row(h, s, m, chain.agent)[rec]).collect();
    sample_categorical(&w, rng)
}

impl EpisodicEnv for AgentChain<'_> {
    fn horizon(&self) -> usize {
        self.posg.model.horizon
    }
    fn states(&self) -> usize {
        self.posg.model.states * self.recs
    }
    fn actions(&self) -> usize {
        self.posg.layout.actions[self.agent]
    }
    fn reset(&self, rng: &mut dyn RngCore) -> usize {
        self.count.fetch_add(1, Ordering::Relaxed);
        let s = sample_categorical(&self.posg.model.mu1, rng);
        let (_, rec) = self.draw(1, s, rng);
        s * self.recs + rec
    }
    fn step(&self, h: usize, x: usize, a: usize, rng: &mut dyn RngCore) -> usize {
        let (s, rec) = (x / self.recs, x % self.recs);
        let m = member_given_rec(self, h, s, rec, rng);
        let joint = self.joint(h, s, m, a, rng);
        let s2 = sample_categorical(self.posg.model.trans(h, s, joint), rng);
        if h == self.posg.model.horizon {
            return s2 * self.recs;
        }
        let (_, rec2) = self.draw(h + 1, s2, rng);
        s2 * self.recs + rec2
    }
    fn episodes(&self) -> usize {
        self.count.load(Ordering::Relaxed)
    }
}

/// Decoders `P(s_h | c_h, p_{j,h})` computed in a fitted centralized model.
#[derive(Clone, Debug, Serialize)]
pub struct MultiDecoders {
    pub model: Pomdp,
    pub layout: super::Layout,
    /// Simulator episodes used, reach policies included.
    pub episodes: usize,
}

impl MultiDecoders {
    /// Decoders that always answer with the prior of `model`'s belief.
    pub fn new(model: Pomdp, layout: super::Layout) -> Self {
        MultiDecoders { model, layout, episodes: 0 }
    }

    /// Posterior over states for agent `j` at step `h`, given the joint history.
    /// Histories impossible under the fitted model get the uniform distribution.
    pub fn posterior(&self, j: usize, h: usize, history: &Memory) -> Vec<f64> {
        let m = &self.model;
        let fallback = || uniform(m.states);
        match self.layout.sharing {
            Sharing::Full => exact_belief(m, history).unwrap_or_else(|_| fallback()),
            Sharing::OneStepDelay => {
                let mut b = m.mu1.clone();
                for t in 1..h {
                    let prefix = Memory::history(&history.actions[..t - 1], &history.observations[..t]);
                    let Ok(post) = exact_belief(m, &prefix) else { return fallback() };
                    b = push_forward(m, t, &post, history.actions[t - 1]);
                }
                let own = self.layout.split_obs(history.observations[h - 1])[j];
                let mut out: Vec<f64> = (0..m.states)
                    .map(|s| {
                        let lik: f64 = m
                            .emit(h, s)
                            .iter()
                            .enumerate()
                            .filter(|(o, _)| self.layout.split_obs(*o)[j] == own)
                            .map(|(_, p)| p)
                            .sum();
                        b[s] * lik
                    })
                    .collect();
                if normalize(&mut out) {
                    out
                } else {
                    fallback()
                }
            }
        }
    }
}

/// Theory-scaled `per_cell` on the joint sizes, spread over the `n` agents'
/// unilateral batches: `ceil(M / n)` with `M` from [`decoder_batch_size`].
pub fn theory_per_cell(posg: &Posg, eps: f64, delta: f64) -> usize {
    let m = &posg.model;
    decoder_batch_size(m.states, m.actions, m.observations, m.horizon, eps, delta).div_ceil(posg.n)
}

/// Learns a centralized model from unilateral exploration around the expert:
/// for every agent `i`, step `h` and (extended) target state, a reach policy in
/// agent `i`'s chain, then `per_cell` episodes per own action at step `h`.
pub fn multi_agent_decoders<R: Rng>(posg: &Posg, expert: &StateExpert, cfg: &DecoderConfig, rng: &mut R) -> Result<MultiDecoders> {
    if cfg.per_cell == 0 || cfg.reach_budget == 0 {
        return Err(Error::InvalidArgument("budgets must be at least 1".into()));
    }
    let members = expert.members();
    if expert.profiles.iter().flatten().any(|p| p.members.len() != members) {
        return Err(Error::InvalidArgument("expert profiles need equal member counts".into()));
    }
    let m = &posg.model;
    let hh = m.horizon;
    let rewards = m.r.clone();
    let mut em = EmpiricalModel::zeros(hh, m.states, m.actions, m.observations, cfg.per_cell, rewards);
    let mut episodes = 0;
    for agent in 0..posg.n {
        let chain = AgentChain::new(posg, expert, agent, cfg.concept);
        let own_actions = posg.layout.actions[agent];
        for h in 1..=hh {
            for target in 0..chain.states() {
                let guide = if h == 1 {
                    StatePolicy::uniform(hh, chain.states(), own_actions)
                } else {
                    reach_policy(&chain, h, target, cfg.reach_budget, cfg.delta, &mut *rng)?.policy
                };
                for a_own in 0..own_actions {
                    for _ in 0..cfg.per_cell {
                        episodes += 1;
                        let mut s = sample_categorical(&m.mu1, rng);
                        let mut o = sample_categorical(m.emit(1, s), rng);
                        if h == 1 {
                            em.n_first[s] += 1;
                        }
                        for t in 1..=h {
                            let (mem, rec) = chain.draw(t, s, rng);
                            let own = if t == h { a_own } else { sample_categorical(guide.dist(t, s * chain.recs + rec), rng) };
                            let joint = chain.joint(t, s, mem, own, rng);
                            let s2 = sample_categorical(m.trans(t, s, joint), rng);
                            if t == h {
                                em.record(h, s, o, joint, s2);
                            } else {
                                o = sample_categorical(m.emit(t + 1, s2), rng);
                            }
                            s = s2;
                        }
                    }
                }
            }
        }
        episodes += chain.episodes();
    }
    em.episodes = episodes;
    let est = estimate_model(&em, None);
    Ok(MultiDecoders { model: est.model, layout: posg.layout.clone(), episodes })
}

/// Each agent samples a state from its own decoder, independently of the
/// others, and plays the expert's member at that state.
#[derive(Clone, Debug)]
pub struct DistilledPolicy {
    pub expert: StateExpert,
    pub decoders: MultiDecoders,
}

pub fn distill_equilibrium(expert: StateExpert, decoders: MultiDecoders) -> DistilledPolicy {
    DistilledPolicy { expert, decoders }
}

impl JointPolicy for DistilledPolicy {
    fn law(&self, h: usize, history: &Memory, _state: usize) -> Result<Law> {
        let n = self.expert.actions.len();
        let post: Vec<Vec<f64>> = (0..n).map(|j| self.decoders.posterior(j, h, history)).collect();
        let k = self.expert.members();
        let w = 1.0 / k as f64;
        Ok((0..k)
            .map(|m| {
                let rows = (0..n)
                    .map(|j| {
                        let mut row = vec![0.0; self.expert.actions[j]];
                        for (s, &g) in post[j].iter().enumerate() {
                            if g > 0.0 {
                                for (x, p) in row.iter_mut().zip(self.expert.row(h, s, m, j)) {
                                    *x += g * p;
                                }
                            }
                        }
                        row
                    })
                    .collect();
                (w, rows)
            })
            .collect())
    }
}

/// Largest per-`(j, h)` probability that decoder `j` misses `s_h`, over
/// the expert itself and every unilateral history-dependent deviation from it.
pub fn max_decode_failure(posg: &Posg, expert: &StateExpert, decoders: &MultiDecoders, cap: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for j in 0..posg.n {
        for h in 1..=posg.model.horizon {
            let miss = |t: usize, hist: &Memory, s: usize, _a: usize| if t == h { 1.0 - decoders.posterior(j, h, hist)[s] } else { 0.0 };
            worst = worst.max(expected_total(posg, expert, &miss, cap)?);
            for i in 0..posg.n {
                worst = worst.max(best_deviation(posg, expert, i, &miss, cap)?);
            }
        }
    }
    Ok(worst)
}
