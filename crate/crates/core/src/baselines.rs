//! Comparison learners: vanilla asymmetric actor-critic with a projected
//! policy-gradient actor, and asymmetric Q-learning with a decaying
//! epsilon-greedy schedule. Both touch only the keys they sample.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

use crate::belief::Memory;
use crate::env::Simulator;
use crate::error::{Error, Result};
use crate::model::sample_categorical;
use crate::policy::MemoryPolicy;
use crate::util::{argmax, one_hot};

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

type CriticKey = (usize, Memory, usize);

/// Sparse `(h, key, state) -> Q[a]`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct AsyncCritic {
    #[serde(with = "crate::util::entries")]
    pub q: BTreeMap<CriticKey, Vec<f64>>,
    pub alpha: f64,
}

impl AsyncCritic {
    fn value(&self, key: &CriticKey, a: usize) -> f64 {
        self.q.get(key).map_or(0.0, |row| row[a])
    }

    fn blend(&mut self, key: CriticKey, a: usize, target: f64, actions: usize) {
        let row = self.q.entry(key).or_insert_with(|| vec![0.0; actions]);
        row[a] = (1.0 - self.alpha) * row[a] + self.alpha * target;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AacConfig {
    pub iterations: usize,
    pub episodes_per_iteration: usize,
    /// Constant actor step size `lambda_t`.
    pub step: f64,
    pub alpha: f64,
    pub memory: usize,
}

impl Default for AacConfig {
    fn default() -> Self {
        AacConfig { iterations: 100, episodes_per_iteration: 10, step: 0.1, alpha: 0.1, memory: 3 }
    }
}

#[derive(Clone, Debug)]
pub struct BaselineOutput {
    pub policy: MemoryPolicy,
    /// Distinct keys touched by each update round.
    pub updated_keys: Vec<usize>,
    pub sampled_keys: Vec<usize>,
    pub episodes: usize,
}

struct Step {
    h: usize,
    key: Memory,
    s: usize,
    a: usize,
    r: f64,
}

fn rollout<R: Rng + ?Sized>(
    sim: &Simulator,
    memory: usize,
    rng: &mut R,
    mut choose: impl FnMut(usize, &Memory, &mut R) -> usize,
) -> Vec<Step> {
    let (mut s, o) = sim.start(rng);
    let mut key = Memory::start(o);
    let mut out = Vec::with_capacity(sim.horizon());
    for h in 1..=sim.horizon() {
        let a = choose(h, &key, rng);
        let r = sim.reward(h, s, a);
        let (s2, o2) = sim.advance(h, s, a, rng);
        let next_key = o2.map(|o| key.push(a, o, memory));
        out.push(Step { h, key, s, a, r });
        if let Some(k) = next_key {
            key = k;
        } else {
            break;
        }
        s = s2;
    }
    out
}

/// Actor: `pi(.|z) <- Proj(pi(.|z) + (lambda / K) sum grad log pi(a|z) Q(z, s, a))`
/// over the sampled `(z, s, a)`; critic: TD(0) toward `r + Q(z', s', a')` on sampled transitions.
pub fn vanilla_aac<R: Rng + ?Sized>(sim: &Simulator, cfg: &AacConfig, rng: &mut R) -> Result<BaselineOutput> {
    if cfg.iterations == 0 || cfg.episodes_per_iteration == 0 || cfg.memory == 0 {
        return Err(Error::InvalidArgument("iterations, episodes and memory must be positive".into()));
    }
    let (_, a_n, _) = sim.sizes();
    let mut policy = MemoryPolicy::uniform(sim.horizon(), a_n, cfg.memory);
    let mut critic = AsyncCritic { q: BTreeMap::new(), alpha: cfg.alpha };
    let start = sim.episodes();
    let mut updated_keys = Vec::new();
    let mut sampled_keys = Vec::new();
    for _ in 0..cfg.iterations {
        let batch: Vec<Vec<Step>> = (0..cfg.episodes_per_iteration)
            .map(|_| rollout(sim, cfg.memory, rng, |h, key, rng| sample_categorical(&policy.dist(h, key), rng)))
            .collect();
        for ep in &batch {
            for i in (0..ep.len()).rev() {
                let st = &ep[i];
                let future = ep.get(i + 1).map_or(0.0, |nx| critic.value(&(nx.h, nx.key.clone(), nx.s), nx.a));
                critic.blend((st.h, st.key.clone(), st.s), st.a, st.r + future, a_n);
            }
        }
        let mut grads: BTreeMap<(usize, Memory), Vec<f64>> = BTreeMap::new();
        for st in batch.iter().flatten() {
            let pi = policy.dist(st.h, &st.key)[st.a];
            let g = grads.entry((st.h, st.key.clone())).or_insert_with(|| vec![0.0; a_n]);
            g[st.a] += critic.value(&(st.h, st.key.clone(), st.s), st.a) / pi;
        }
        sampled_keys.push(grads.len());
        let mut touched = 0;
        let scale = cfg.step / cfg.episodes_per_iteration as f64;
        for ((h, key), g) in grads {
            if scale == 0.0 {
                continue;
            }
            let cur = policy.dist(h, &key).into_owned();
            let moved: Vec<f64> = cur.iter().zip(&g).map(|(p, d)| p + scale * d).collect();
            policy.set(h, key, project_simplex(&moved));
            touched += 1;
        }
        updated_keys.push(touched);
    }
    Ok(BaselineOutput { policy, updated_keys, sampled_keys, episodes: sim.episodes() - start })
}

/// `epsilon_t = (H + 1) / (H + t)`.
pub fn epsilon_schedule(horizon: usize, t: usize) -> f64 {
    (horizon as f64 + 1.0) / (horizon as f64 + t as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct QLearningConfig {
    pub episodes: usize,
    pub alpha: f64,
    pub memory: usize,
}

/// State-conditioned critic over memory keys. The acting policy is greedy in
/// the critic averaged over states with the empirical state visitation of each key.
#[derive(Default)]
struct Marginal {
    q: BTreeMap<CriticKey, Vec<f64>>,
    visits: BTreeMap<(usize, Memory), BTreeMap<usize, usize>>,
}

impl Marginal {
    fn scores(&self, h: usize, key: &Memory, a_n: usize) -> Vec<f64> {
        let mut acc = vec![0.0; a_n];
        if let Some(v) = self.visits.get(&(h, key.clone())) {
            let total: usize = v.values().sum();
            for (&s, &n) in v {
                if let Some(row) = self.q.get(&(h, key.clone(), s)) {
                    for (x, q) in acc.iter_mut().zip(row) {
                        *x += n as f64 / total as f64 * q;
                    }
                }
            }
        }
        acc
    }
}

pub fn asymmetric_q_learning<R: Rng + ?Sized>(sim: &Simulator, cfg: &QLearningConfig, rng: &mut R) -> Result<BaselineOutput> {
    if cfg.episodes == 0 || cfg.memory == 0 {
        return Err(Error::InvalidArgument("episodes and memory must be positive".into()));
    }
    let (_, a_n, _) = sim.sizes();
    let hh = sim.horizon();
    let start = sim.episodes();
    let mut m = Marginal::default();
    let mut updated_keys = Vec::new();
    for t in 1..=cfg.episodes {
        let eps = epsilon_schedule(hh, t);
        let ep = rollout(sim, cfg.memory, rng, |h, key, rng| {
            if rng.random::<f64>() < eps {
                rng.random_range(0..a_n)
            } else {
                argmax(&m.scores(h, key, a_n))
            }
        });
        let mut touched = BTreeSet::new();
        for st in &ep {
            *m.visits.entry((st.h, st.key.clone())).or_default().entry(st.s).or_insert(0) += 1;
        }
        for i in (0..ep.len()).rev() {
            let st = &ep[i];
            let future = match ep.get(i + 1) {
                Some(nx) => {
                    let greedy = argmax(&m.scores(nx.h, &nx.key, a_n));
                    m.q.get(&(nx.h, nx.key.clone(), nx.s)).map_or(0.0, |row| row[greedy])
                }
                None => 0.0,
            };
            let row = m.q.entry((st.h, st.key.clone(), st.s)).or_insert_with(|| vec![0.0; a_n]);
            row[st.a] = (1.0 - cfg.alpha) * row[st.a] + cfg.alpha * (st.r + future);
            touched.insert((st.h, st.key.clone(), st.s));
        }
        updated_keys.push(touched.len());
    }
    let mut policy = MemoryPolicy::uniform(hh, a_n, cfg.memory);
    for (h, key) in m.visits.keys() {
        policy.set(*h, key.clone(), one_hot(a_n, argmax(&m.scores(*h, key, a_n))));
    }
    let sampled = updated_keys.clone();
    Ok(BaselineOutput { policy, updated_keys, sampled_keys: sampled, episodes: sim.episodes() - start })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Pomdp;
    use crate::util::{rng_from_seed, uniform};
    use proptest::prelude::*;

    fn bandit() -> Pomdp {
        let mut m = Pomdp::uniform(1, 1, 3, 1);
        m.r[0][0] = vec![0.2, 0.8, 0.5];
        m
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.3, 0.7]), vec![0.3, 0.7]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(v in proptest::collection::vec(-5.0f64..5.0, 1..6)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_step_keeps_uniform() {
        let m = bandit();
        let sim = Simulator::new(&m);
        let cfg = AacConfig { iterations: 20, episodes_per_iteration: 5, step: 0.0, alpha: 0.1, memory: 3 };
        let out = vanilla_aac(&sim, &cfg, &mut rng_from_seed(0)).unwrap();
        assert!(out.policy.rows.is_empty());
        assert_eq!(out.policy.dist(1, &Memory::start(0)).as_ref(), &uniform(3)[..]);
    }

    #[test]
    fn aac_solves_bandit() {
        let m = bandit();
        let sim = Simulator::new(&m);
        let cfg = AacConfig { iterations: 400, episodes_per_iteration: 10, step: 0.1, alpha: 0.1, memory: 3 };
        let out = vanilla_aac(&sim, &cfg, &mut rng_from_seed(1)).unwrap();
        assert!(out.policy.dist(1, &Memory::start(0))[1] >= 0.9);
        assert_eq!(out.episodes, 4000);
        assert!(out.updated_keys.iter().zip(&out.sampled_keys).all(|(u, s)| u == s));
    }

    #[test]
    fn schedule_values() {
        assert_eq!(epsilon_schedule(5, 1), 1.0);
        for h in [1, 10, 40] {
            assert!(epsilon_schedule(h, 1_000_000) < 1e-4);
        }
    }

    #[test]
    fn q_learning_solves_bandit() {
        let m = bandit();
        let sim = Simulator::new(&m);
        let cfg = QLearningConfig { episodes: 2000, alpha: 0.5, memory: 3 };
        let out = asymmetric_q_learning(&sim, &cfg, &mut rng_from_seed(2)).unwrap();
        assert_eq!(out.policy.dist(1, &Memory::start(0)).as_ref(), &[0.0, 1.0, 0.0]);
        assert!(out.updated_keys.iter().all(|&k| k == 1));
    }
}
