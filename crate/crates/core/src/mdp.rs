//! Fully observable subroutines: value iteration, occupancy measures and the
//! optimistic tabular learner used to reach individual states.

use rand::RngCore;
use serde::Serialize;

use crate::env::EpisodicEnv;
use crate::error::{Error, Result};
use crate::model::Mdp;
use crate::policy::StatePolicy;
use crate::util::{argmax, one_hot};

#[derive(Clone, Debug, Serialize)]
pub struct QTable {
    /// `[h - 1][s][a]`
    pub q: Vec<Vec<Vec<f64>>>,
    /// `[h - 1][s]`, with `v[H] = 0` appended.
    pub v: Vec<Vec<f64>>,
    pub policy: StatePolicy,
}

impl QTable {
    /// `E_{s ~ mu1} V_1(s)`.
    pub fn initial_value(&self, mu1: &[f64]) -> f64 {
        mu1.iter().zip(&self.v[0]).map(|(p, v)| p * v).sum()
    }
}

pub fn value_iteration(mdp: &Mdp) -> QTable {
    backward_greedy(mdp.horizon, mdp.states, mdp.actions, |h, s, a, next| {
        mdp.reward(h, s, a) + mdp.trans(h, s, a).iter().zip(next).map(|(p, v)| p * v).sum::<f64>()
    })
}

/// Backward induction with greedy (lowest-index tie) extraction.
fn backward_greedy(
    horizon: usize,
    states: usize,
    actions: usize,
    mut backup: impl FnMut(usize, usize, usize, &[f64]) -> f64,
) -> QTable {
    let mut q = vec![vec![vec![0.0; actions]; states]; horizon];
    let mut v = vec![vec![0.0; states]; horizon + 1];
    let mut choice = vec![vec![0; states]; horizon];
    for h in (1..=horizon).rev() {
        for s in 0..states {
            for a in 0..actions {
                q[h - 1][s][a] = backup(h, s, a, &v[h]);
            }
            let best = argmax(&q[h - 1][s]);
            choice[h - 1][s] = best;
            v[h - 1][s] = q[h - 1][s][best];
        }
    }
    QTable { q, v, policy: StatePolicy::deterministic(&choice, actions) }
}

/// `d[h - 1][s] = P(s_h = s)` under the policy.
pub fn occupancy(mdp: &Mdp, policy: &StatePolicy) -> Vec<Vec<f64>> {
    let mut d = vec![mdp.mu1.clone()];
    for h in 1..mdp.horizon {
        let mut next = vec![0.0; mdp.states];
        for (s, &w) in d[h - 1].iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            for (a, &p) in policy.dist(h, s).iter().enumerate() {
                for (x, &t) in next.iter_mut().zip(mdp.trans(h, s, a)) {
                    *x += w * p * t;
                }
            }
        }
        d.push(next);
    }
    d
}

/// Hoeffding bonus `c sqrt(log(S A H K / delta) / max(N, 1))`.
pub fn ucb_bonus(count: usize, log_term: f64, c: f64) -> f64 {
    c * (log_term / count.max(1) as f64).sqrt()
}

/// Visit statistics gathered by [`ucbvi`].
#[derive(Clone, Debug)]
pub struct VisitCounts {
    pub sa: Vec<Vec<Vec<usize>>>,
    pub sas: Vec<Vec<Vec<Vec<usize>>>>,
}

impl VisitCounts {
    pub fn new(horizon: usize, states: usize, actions: usize) -> Self {
        VisitCounts {
            sa: vec![vec![vec![0; actions]; states]; horizon],
            sas: vec![vec![vec![vec![0; states]; actions]; states]; horizon],
        }
    }

    fn estimate(&self, h: usize, s: usize, a: usize) -> Option<Vec<f64>> {
        let n = self.sa[h - 1][s][a];
        (n > 0).then(|| self.sas[h - 1][s][a].iter().map(|&c| c as f64 / n as f64).collect())
    }
}

#[derive(Clone, Debug)]
pub struct UcbConfig {
    pub episodes: usize,
    pub delta: f64,
    pub c: f64,
    /// Largest achievable return from step 1 onward; Q at step `h` is clamped at
    /// `min(value_cap, H - h + 1)`.
    pub value_cap: f64,
}

/// UCB-VI with Hoeffding bonuses. Returns the bonus-free greedy policy on the
/// empirical model built from all episodes, and the counts.
pub fn ucbvi<E: EpisodicEnv + ?Sized>(
    env: &E,
    reward: &dyn Fn(usize, usize, usize) -> f64,
    cfg: &UcbConfig,
    rng: &mut dyn RngCore,
) -> Result<(StatePolicy, VisitCounts)> {
    if cfg.episodes == 0 {
        return Err(Error::InvalidArgument("episode budget must be positive".into()));
    }
    let (hh, s_n, a_n) = (env.horizon(), env.states(), env.actions());
    let log_term = ((s_n * a_n * hh * cfg.episodes) as f64 / cfg.delta).ln().max(1.0);
    let mut counts = VisitCounts::new(hh, s_n, a_n);
    for _ in 0..cfg.episodes {
        let table = plan(hh, s_n, a_n, &counts, reward, cfg, Some(log_term));
        let mut s = env.reset(rng);
        for h in 1..=hh {
            let a = argmax(&table.q[h - 1][s]);
            let s2 = env.step(h, s, a, rng);
            counts.sa[h - 1][s][a] += 1;
            counts.sas[h - 1][s][a][s2] += 1;
            s = s2;
        }
    }
    let table = plan(hh, s_n, a_n, &counts, reward, cfg, None);
    Ok((table.policy, counts))
}

fn plan(
    hh: usize,
    s_n: usize,
    a_n: usize,
    counts: &VisitCounts,
    reward: &dyn Fn(usize, usize, usize) -> f64,
    cfg: &UcbConfig,
    log_term: Option<f64>,
) -> QTable {
    backward_greedy(hh, s_n, a_n, |h, s, a, next| {
        let ceiling = cfg.value_cap.min((hh - h + 1) as f64);
        let future = match counts.estimate(h, s, a) {
            Some(p) => p.iter().zip(next).map(|(p, v)| p * v).sum::<f64>(),
            None => next.iter().sum::<f64>() / s_n as f64,
        };
        let bonus = log_term.map_or(0.0, |l| ucb_bonus(counts.sa[h - 1][s][a], l, cfg.c));
        (reward(h, s, a) + future + bonus).min(ceiling)
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ReachResult {
    pub policy: StatePolicy,
    /// Fraction of evaluation episodes that hit the target.
    pub reach: f64,
    pub episodes: usize,
}

/// Learns a policy maximizing `P(s_h = target)` with UCB-VI on the indicator reward
/// `1[h' = h, s' = target]`, then estimates its reach probability from
/// `max(budget / 10, 1)` fresh rollouts.
pub fn reach_policy<E: EpisodicEnv + ?Sized>(
    env: &E,
    h: usize,
    target: usize,
    budget: usize,
    delta: f64,
    rng: &mut dyn RngCore,
) -> Result<ReachResult> {
    if budget == 0 {
        return Err(Error::InvalidArgument("reach budget must be positive".into()));
    }
    if h == 0 || h > env.horizon() {
        return Err(Error::InvalidArgument(format!("step {h} outside 1..={}", env.horizon())));
    }
    let start = env.episodes();
    let indicator = move |hp: usize, sp: usize, _a: usize| if hp == h && sp == target { 1.0 } else { 0.0 };
    let cfg = UcbConfig { episodes: budget, delta, c: 1.0, value_cap: 1.0 };
    let (policy, _) = ucbvi(env, &indicator, &cfg, rng)?;
    let evals = (budget / 10).max(1);
    let mut hits = 0;
    for _ in 0..evals {
        if roll_to(env, &policy, h, rng) == target {
            hits += 1;
        }
    }
    Ok(ReachResult { policy, reach: hits as f64 / evals as f64, episodes: env.episodes() - start })
}

/// Runs the policy for `h - 1` steps and returns `s_h` (one episode).
pub fn roll_to<E: EpisodicEnv + ?Sized>(env: &E, policy: &StatePolicy, h: usize, rng: &mut dyn RngCore) -> usize {
    let mut s = env.reset(rng);
    for t in 1..h {
        let a = crate::model::sample_categorical(policy.dist(t, s), rng);
        s = env.step(t, s, a, rng);
    }
    s
}

/// Deterministic state policy that always plays `a`.
pub fn constant_policy(horizon: usize, states: usize, actions: usize, a: usize) -> StatePolicy {
    StatePolicy { table: vec![vec![one_hot(actions, a); states]; horizon] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::counterexample_pomdp;
    use crate::env::MdpEnv;
    use crate::harness::gen::{gen_pomdp, InstanceKind};
    use crate::util::rng_from_seed;

    /// Two states; from s0, action 1 moves to s1 w.p. 0.9, action 0 stays.
    pub(crate) fn switch_mdp() -> Mdp {
        let step = vec![vec![vec![1.0, 0.0], vec![0.1, 0.9]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]];
        Mdp {
            horizon: 3,
            states: 2,
            actions: 2,
            mu1: vec![1.0, 0.0],
            transition: vec![step; 3],
            r: vec![vec![vec![0.0; 2]; 2]; 3],
        }
    }

    #[test]
    fn zero_reward_gives_zero_q() {
        let m = crate::model::Pomdp::uniform(3, 2, 2, 2).mdp();
        assert!(value_iteration(&m).q.iter().flatten().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn counterexample_mdp_value() {
        for (g, e) in [(0.5, 0.5), (0.2, 0.7)] {
            let m = counterexample_pomdp(g, e).unwrap().mdp();
            assert_eq!(m.r[0][0][0], 1.0);
            assert_eq!(m.r[0][1][1], e);
            let v = value_iteration(&m).initial_value(&m.mu1);
            assert!((v - (1.0 - g + e) / (2.0 - g)).abs() < 1e-12);
        }
    }

    #[test]
    fn bandit_picks_argmax_row() {
        let mut m = crate::model::Pomdp::uniform(1, 1, 3, 1).mdp();
        m.r[0][0] = vec![0.2, 0.9, 0.9];
        let t = value_iteration(&m);
        assert_eq!(t.policy.dist(1, 0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn occupancy_rows_are_distributions() {
        let m = gen_pomdp(InstanceKind::Generic, 3, 2, 2, 4, 1).unwrap().mdp();
        let d = occupancy(&m, &StatePolicy::uniform(4, 3, 2));
        assert_eq!(d[0], m.mu1);
        for row in &d {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_chain_occupancy_is_indicator() {
        let m = switch_mdp();
        let mut det = m.clone();
        det.transition[0][0][1] = vec![0.0, 1.0];
        let d = occupancy(&det, &constant_policy(3, 2, 2, 1));
        assert_eq!(d, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn occupancy_matches_monte_carlo() {
        let m = gen_pomdp(InstanceKind::Generic, 3, 2, 2, 3, 8).unwrap().mdp();
        let pol = StatePolicy::uniform(3, 3, 2);
        let d = occupancy(&m, &pol);
        let env = MdpEnv::new(&m);
        let mut rng = rng_from_seed(4);
        let n = 100_000;
        let mut freq = vec![0.0; 3];
        for _ in 0..n {
            freq[roll_to(&env, &pol, 3, &mut rng)] += 1.0 / n as f64;
        }
        assert!(crate::util::l1(&freq, &d[2]) < 0.02);
    }

    #[test]
    fn bonus_shrinks_with_counts() {
        let mut last = f64::INFINITY;
        for n in 0..50 {
            let b = ucb_bonus(n, 5.0, 1.0);
            assert!(b <= last);
            last = b;
        }
    }

    #[test]
    fn certain_state_is_always_reached() {
        let m = switch_mdp();
        let env = MdpEnv::new(&m);
        let r = reach_policy(&env, 1, 0, 200, 0.1, &mut rng_from_seed(0)).unwrap();
        assert_eq!(r.reach, 1.0);
        assert_eq!(r.episodes, 220);
    }

    #[test]
    fn unreachable_state_has_zero_reach() {
        let mut m = switch_mdp();
        m.transition[0][0][1] = vec![1.0, 0.0];
        let env = MdpEnv::new(&m);
        let r = reach_policy(&env, 2, 1, 200, 0.1, &mut rng_from_seed(0)).unwrap();
        assert_eq!(r.reach, 0.0);
    }

    #[test]
    fn switch_state_reached_across_seeds() {
        let m = switch_mdp();
        let ok = (0..20)
            .filter(|&seed| {
                let env = MdpEnv::new(&m);
                reach_policy(&env, 2, 1, 2000, 0.1, &mut rng_from_seed(seed)).unwrap().reach >= 0.45
            })
            .count();
        assert!(ok >= 18, "{ok}/20");
    }

    #[test]
    fn zero_budget_rejected() {
        let m = switch_mdp();
        assert!(reach_policy(&MdpEnv::new(&m), 1, 0, 0, 0.1, &mut rng_from_seed(0)).is_err());
    }
}
