//! Common-information beliefs over (state, joint private information).

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::Rng;

use super::info::{CommonInfo, Increment};
use super::{Posg, Sharing};
use crate::belief::{bayes_update, push_forward, BeliefTable};
use crate::env::Simulator;
use crate::error::{Error, Result};
use crate::learning::{estimate_model, explore_and_count, truncate_model, ExploreConfig, TruncatedModel};
use crate::model::Pomdp;

/// `P(s_h, p_h | c_h)` on compressed common information, stored as `[s * P + p]`.
///
/// Under full sharing `P = 1` and this is the finite-memory belief over states.
/// Under delayed sharing it is the predictive belief times the emission.
#[derive(Debug)]
pub struct CommonBelief {
    model: Pomdp,
    sharing: Sharing,
    memory: usize,
    support: Vec<Vec<bool>>,
    states_only: Option<BeliefTable>,
    cache: RwLock<HashMap<(usize, CommonInfo), Arc<Vec<f64>>>>,
    flagged: RwLock<Vec<(usize, CommonInfo)>>,
}

impl CommonBelief {
    /// Belief in the true centralized model, uniform prior on all states for truncated keys.
    pub fn exact(posg: &Posg, memory: usize) -> Result<Self> {
        let support = vec![vec![true; posg.model.states]; posg.model.horizon];
        Self::with_support(posg.model.clone(), posg.layout.sharing, memory, support)
    }

    /// Belief in `model` with a uniform prior over `support[h - 1]` for keys that do
    /// not reach back to step 1. Impossible replays fall back to that uniform and are flagged.
    pub fn with_support(model: Pomdp, sharing: Sharing, memory: usize, support: Vec<Vec<bool>>) -> Result<Self> {
        let states_only = match sharing {
            Sharing::Full => Some(BeliefTable::with_support(model.clone(), memory, support.clone())?),
            Sharing::OneStepDelay => {
                if memory == 0 || support.iter().take(model.horizon).any(|r| !r.iter().any(|&x| x)) {
                    return Err(Error::InvalidArgument("need memory >= 1 and nonempty supports".into()));
                }
                None
            }
        };
        Ok(CommonBelief {
            model,
            sharing,
            memory,
            support,
            states_only,
            cache: RwLock::new(HashMap::new()),
            flagged: RwLock::new(Vec::new()),
        })
    }

    pub fn model(&self) -> &Pomdp {
        &self.model
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn sharing(&self) -> Sharing {
        self.sharing
    }

    /// Number of joint private-information values.
    pub fn privates(&self) -> usize {
        match self.sharing {
            Sharing::Full => 1,
            Sharing::OneStepDelay => self.model.observations,
        }
    }

    fn uniform_on(&self, h: usize) -> Vec<f64> {
        let row = &self.support[h - 1];
        let k = row.iter().filter(|&&x| x).count() as f64;
        row.iter().map(|&x| if x { 1.0 / k } else { 0.0 }).collect()
    }

    pub fn get(&self, h: usize, c: &CommonInfo) -> Result<Arc<Vec<f64>>> {
        if let Some(b) = self.cache.read().expect("cache poisoned").get(&(h, c.clone())) {
            return Ok(b.clone());
        }
        let b = match &self.states_only {
            Some(table) => table.get(h, &c.to_memory())?.as_ref().clone(),
            None => self.delayed(h, c),
        };
        let b = Arc::new(b);
        Ok(self.cache.write().expect("cache poisoned").entry((h, c.clone())).or_insert(b).clone())
    }

    fn delayed(&self, h: usize, c: &CommonInfo) -> Vec<f64> {
        let first = h - c.0.len();
        let mut b = if c.covers_start(self.sharing, h) { self.model.mu1.clone() } else { self.uniform_on(first) };
        for (j, inc) in c.0.iter().enumerate() {
            let t = first + j;
            let Increment::Step { action, obs } = *inc else { continue };
            b = match bayes_update(&self.model, t, &b, obs) {
                Ok(post) => post,
                Err(_) => {
                    self.flagged.write().expect("flags poisoned").push((h, c.clone()));
                    self.uniform_on(t)
                }
            };
            b = push_forward(&self.model, t, &b, action);
        }
        let o_n = self.model.observations;
        let mut out = vec![0.0; self.model.states * o_n];
        for (s, &w) in b.iter().enumerate() {
            for (o, &p) in self.model.emit(h, s).iter().enumerate() {
                out[s * o_n + o] = w * p;
            }
        }
        out
    }

    /// Distribution of the step-1 common information.
    pub fn initial(&self) -> Vec<(CommonInfo, f64)> {
        match self.sharing {
            Sharing::OneStepDelay => vec![(CommonInfo::default(), 1.0)],
            Sharing::Full => (0..self.model.observations)
                .map(|o| {
                    let p = (0..self.model.states).map(|s| self.model.mu1[s] * self.model.emit(1, s)[o]).sum();
                    (CommonInfo(vec![Increment::Start(o)]), p)
                })
                .filter(|(_, p)| *p > 0.0)
                .collect(),
        }
    }

    /// Keys whose replay hit an impossible observation.
    pub fn flagged(&self) -> Vec<(usize, CommonInfo)> {
        let mut v = self.flagged.read().expect("flags poisoned").clone();
        if let Some(t) = &self.states_only {
            v.extend(t.flagged().into_iter().map(|(h, k)| (h, memory_to_common(&k))));
        }
        v.sort();
        v.dedup();
        v
    }
}

fn memory_to_common(key: &crate::belief::Memory) -> CommonInfo {
    let mut c = Vec::new();
    let offset = key.observations.len() - key.actions.len();
    if offset == 1 {
        c.push(Increment::Start(key.observations[0]));
    }
    c.extend(key.actions.iter().zip(&key.observations[offset..]).map(|(&action, &obs)| Increment::Step { action, obs }));
    CommonInfo(c)
}

/// Learns the centralized model with reward-free exploration, truncates it, and
/// returns the common-information belief on the truncated model.
pub fn posg_belief_learning<R: Rng>(
    posg: &Posg,
    explore: &ExploreConfig,
    threshold: f64,
    memory: usize,
    rng: &mut R,
) -> Result<(CommonBelief, TruncatedModel)> {
    let sim = Simulator::new(&posg.model);
    let counts = explore_and_count(&sim, explore, rng)?;
    let est = estimate_model(&counts, None);
    let truncated = truncate_model(&est.model, &counts, threshold)?;
    let belief = CommonBelief::with_support(truncated.model.clone(), posg.layout.sharing, memory, truncated.high.clone())?;
    Ok((belief, truncated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Memory;
    use crate::harness::gen::{gen_posg, PosgKind};
    use crate::marl::info::info_split;
    use crate::util::rng_from_seed;

    /// `P(s_h, o_h | o_1..o_{h-1}, a_1..a_{h-1})` by summing over state paths.
    fn enumerate(m: &Pomdp, obs: &[usize], acts: &[usize]) -> Vec<f64> {
        let h = obs.len() + 1;
        let mut paths: Vec<(usize, f64)> = (0..m.states).map(|s| (s, m.mu1[s])).collect();
        for t in 1..h {
            let mut next = Vec::new();
            for &(s, w) in &paths {
                let w = w * m.emit(t, s)[obs[t - 1]];
                for s2 in 0..m.states {
                    next.push((s2, w * m.trans(t, s, acts[t - 1])[s2]));
                }
            }
            paths = next;
        }
        let o_n = m.observations;
        let mut out = vec![0.0; m.states * o_n];
        for (s, w) in paths {
            for o in 0..o_n {
                out[s * o_n + o] += w * m.emit(h, s)[o];
            }
        }
        let z: f64 = out.iter().sum();
        out.iter().map(|x| x / z).collect()
    }

    #[test]
    fn delayed_belief_matches_enumeration() {
        for seed in 0..5 {
            let g = gen_posg(PosgKind::Generic, 2, 2, 2, 2, 3, Sharing::OneStepDelay, false, seed).unwrap();
            let cb = CommonBelief::exact(&g, 3).unwrap();
            let hist = Memory::history(&[1, 3], &[2, 0, 3]);
            let info = info_split(&g.layout, &hist).unwrap();
            let got = cb.get(3, &info.common).unwrap();
            let want = enumerate(&g.model, &[2, 0], &[1, 3]);
            assert!(got.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_sharing_is_a_state_belief() {
        let g = gen_posg(PosgKind::Generic, 2, 3, 2, 2, 2, Sharing::Full, false, 1).unwrap();
        let cb = CommonBelief::exact(&g, 2).unwrap();
        assert_eq!(cb.privates(), 1);
        let info = info_split(&g.layout, &Memory::history(&[2], &[1, 3])).unwrap();
        let b = cb.get(2, &info.common).unwrap();
        assert_eq!(b.len(), 3);
        let want = crate::belief::exact_belief(&g.model, &Memory::history(&[2], &[1, 3])).unwrap();
        assert!(b.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
        let total: f64 = cb.initial().iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn learned_belief_sums_to_one() {
        let g = gen_posg(PosgKind::Generic, 2, 2, 2, 2, 2, Sharing::OneStepDelay, false, 4).unwrap();
        let cfg = ExploreConfig { per_cell: 20, reach_budget: 30, delta: 0.1 };
        let (cb, t) = posg_belief_learning(&g, &cfg, 0.0, 1, &mut rng_from_seed(2)).unwrap();
        let info = info_split(&g.layout, &Memory::history(&[1], &[2, 0])).unwrap();
        let b = cb.get(2, &crate::marl::compress_common(&info.common, 1)).unwrap();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (s, hi) in t.high[1].iter().enumerate() {
            if !hi {
                assert!(b[s * 4..(s + 1) * 4].iter().all(|&x| x == 0.0));
            }
        }
    }
}
