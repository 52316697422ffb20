//! Reward-free privileged exploration, count-based model estimates, truncation
//! of rarely visited states, and the approximate belief built on the result.

use rand::Rng;
use serde::Serialize;

use crate::belief::BeliefTable;
use crate::env::Simulator;
use crate::error::{Error, Result};
use crate::mdp::reach_policy;
use crate::model::{sample_categorical, ModelFile, Pomdp};
use crate::policy::StatePolicy;
use crate::util::uniform;

#[derive(Clone, Debug, Serialize)]
pub struct ExploreConfig {
    /// Trajectories per `(h, s, a)` cell.
    pub per_cell: usize,
    /// UCB-VI episodes for each reach policy.
    pub reach_budget: usize,
    pub delta: f64,
}

/// Visit counts gathered by [`explore_and_count`]. Step `h` statistics come only
/// from the batches aimed at step `h`.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalModel {
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    pub per_cell: usize,
    /// `[h-1][s]`
    pub n_s: Vec<Vec<usize>>,
    /// `[h-1][s][a]`
    pub n_sa: Vec<Vec<Vec<usize>>>,
    /// `[h-1][s][a][s']`
    pub n_sas: Vec<Vec<Vec<Vec<usize>>>>,
    /// `[h-1][s][o]`
    pub n_so: Vec<Vec<Vec<usize>>>,
    /// Visits to `s` at step `h` within the batch aimed at `(h, s)`.
    pub target_visits: Vec<Vec<usize>>,
    /// First-step state counts.
    pub n_first: Vec<usize>,
    /// Known rewards `[h-1][s][a]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
    pub episodes: usize,
    pub reach_episodes: usize,
}

impl EmpiricalModel {
    fn empty(sim: &Simulator, per_cell: usize) -> Self {
        let (s, a, o) = sim.sizes();
        let h = sim.horizon();
        let rewards = (1..=h).map(|t| (0..s).map(|x| (0..a).map(|y| sim.reward(t, x, y)).collect()).collect()).collect();
        Self::zeros(h, s, a, o, per_cell, rewards)
    }

    pub(crate) fn zeros(h: usize, s: usize, a: usize, o: usize, per_cell: usize, rewards: Vec<Vec<Vec<f64>>>) -> Self {
        EmpiricalModel {
            horizon: h,
            states: s,
            actions: a,
            observations: o,
            per_cell,
            n_s: vec![vec![0; s]; h],
            n_sa: vec![vec![vec![0; a]; s]; h],
            n_sas: vec![vec![vec![vec![0; s]; a]; s]; h],
            n_so: vec![vec![vec![0; o]; s]; h],
            target_visits: vec![vec![0; s]; h],
            n_first: vec![0; s],
            rewards,
            episodes: 0,
            reach_episodes: 0,
        }
    }

    /// One step-`h` sample `(s_h, o_h, a_h, s_{h+1})`.
    pub(crate) fn record(&mut self, h: usize, s: usize, o: usize, a: usize, s2: usize) {
        let i = h - 1;
        self.n_s[i][s] += 1;
        self.n_sa[i][s][a] += 1;
        self.n_sas[i][s][a][s2] += 1;
        self.n_so[i][s][o] += 1;
    }

    /// Marginal counts agree with the joint ones.
    pub fn consistent(&self) -> bool {
        (0..self.horizon).all(|h| {
            (0..self.states).all(|s| {
                let by_a: usize = self.n_sa[h][s].iter().sum();
                let by_o: usize = self.n_so[h][s].iter().sum();
                by_a == self.n_s[h][s]
                    && by_o == self.n_s[h][s]
                    && (0..self.actions).all(|a| self.n_sas[h][s][a].iter().sum::<usize>() == self.n_sa[h][s][a])
            })
        })
    }
}

/// For every `(h, s)`: learn a reach policy (none needed at `h = 1`), then for
/// each action run `per_cell` episodes that follow it for `h - 1` steps and play
/// the action at step `h`.
pub fn explore_and_count<R: Rng>(sim: &Simulator, cfg: &ExploreConfig, rng: &mut R) -> Result<EmpiricalModel> {
    if cfg.per_cell == 0 || cfg.reach_budget == 0 {
        return Err(Error::InvalidArgument("budgets must be at least 1".into()));
    }
    let start = sim.episodes();
    let mut em = EmpiricalModel::empty(sim, cfg.per_cell);
    let (s_n, a_n, _) = sim.sizes();
    let hh = sim.horizon();
    for h in 1..=hh {
        for target in 0..s_n {
            let guide = if h == 1 {
                StatePolicy::uniform(hh, s_n, a_n)
            } else {
                let before = sim.episodes();
                let r = reach_policy(sim, h, target, cfg.reach_budget, cfg.delta, rng)?;
                em.reach_episodes += sim.episodes() - before;
                r.policy
            };
            for a in 0..a_n {
                for _ in 0..cfg.per_cell {
                    let (mut s, mut o) = sim.start(rng);
                    if h == 1 {
                        em.n_first[s] += 1;
                    }
                    for t in 1..h {
                        let act = sample_categorical(guide.dist(t, s), rng);
                        let (s2, o2) = sim.advance(t, s, act, rng);
                        s = s2;
                        o = o2.expect("t < h <= H");
                    }
                    let (s2, _) = sim.advance(h, s, a, rng);
                    em.record(h, s, o, a, s2);
                    if s == target {
                        em.target_visits[h - 1][s] += 1;
                    }
                }
            }
        }
    }
    em.episodes = sim.episodes() - start;
    Ok(em)
}

#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    pub model: Pomdp,
    /// Rows that had no data and fell back to uniform, e.g. `"T[h=2][s=1][a=0]"`.
    pub fallback_rows: Vec<String>,
}

fn ratio_row(counts: &[usize], total: usize) -> Option<Vec<f64>> {
    (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// `T(s'|s,a) = N(s,a,s') / N(s,a)`, `O(o|s) = N(s,o) / N(s)`, uniform where unvisited.
/// `known_mu1` replaces the first-step frequency estimate.
pub fn estimate_model(em: &EmpiricalModel, known_mu1: Option<&[f64]>) -> Estimate {
    let mut fallback_rows = Vec::new();
    let mut take = |row: Option<Vec<f64>>, n: usize, label: String| {
        row.unwrap_or_else(|| {
            fallback_rows.push(label);
            uniform(n)
        })
    };
    let mu1 = match known_mu1 {
        Some(m) => m.to_vec(),
        None => take(ratio_row(&em.n_first, em.n_first.iter().sum()), em.states, "mu1".into()),
    };
    let mut transition = Vec::with_capacity(em.horizon);
    let mut emission = Vec::with_capacity(em.horizon);
    for h in 0..em.horizon {
        let mut step = Vec::with_capacity(em.states);
        let mut obs = Vec::with_capacity(em.states);
        for s in 0..em.states {
            step.push(
                (0..em.actions)
                    .map(|a| {
                        let label = format!("T[h={}][s={s}][a={a}]", h + 1);
                        take(ratio_row(&em.n_sas[h][s][a], em.n_sa[h][s][a]), em.states, label)
                    })
                    .collect::<Vec<_>>(),
            );
            let label = format!("O[h={}][s={s}]", h + 1);
            obs.push(take(ratio_row(&em.n_so[h][s], em.n_s[h][s]), em.observations, label));
        }
        transition.push(step);
        emission.push(obs);
    }
    let model = Pomdp {
        horizon: em.horizon,
        states: em.states,
        actions: em.actions,
        observations: em.observations,
        mu1,
        transition,
        emission,
        r: em.rewards.clone(),
    };
    Estimate { model, fallback_rows }
}

/// Moves the mass on states outside `high` uniformly onto `high`.
pub fn redirect_row(row: &[f64], high: &[bool]) -> Vec<f64> {
    let k = high.iter().filter(|&&x| x).count();
    let low: f64 = row.iter().zip(high).filter(|(_, &hi)| !hi).map(|(p, _)| p).sum();
    row.iter().zip(high).map(|(&p, &hi)| if hi { p + low / k as f64 } else { 0.0 }).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncatedModel {
    pub model: Pomdp,
    /// `[h-1][s]`: true when `s` is kept at step `h`.
    pub high: Vec<Vec<bool>>,
    pub threshold: f64,
}

impl TruncatedModel {
    pub fn low_sets(&self) -> Vec<Vec<usize>> {
        self.high.iter().map(|row| row.iter().enumerate().filter(|(_, &hi)| !hi).map(|(s, _)| s).collect()).collect()
    }

    /// Model file JSON plus a `truncation` block with the low sets per step.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Block {
            threshold: f64,
            low: Vec<Vec<usize>>,
        }
        #[derive(Serialize)]
        struct File {
            #[serde(flatten)]
            model: ModelFile,
            truncation: Block,
        }
        let f = File {
            model: ModelFile::Pomdp(self.model.clone()),
            truncation: Block { threshold: self.threshold, low: self.low_sets() },
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }
}

/// `S^low_h = {s : target_visits_h(s) / (N A) <= threshold}`. Transition rows into step
/// `h + 1` and `mu1` are redirected onto the kept states; emissions and the last
/// transition are left as estimated.
pub fn truncate_model(estimate: &Pomdp, counts: &EmpiricalModel, threshold: f64) -> Result<TruncatedModel> {
    let denom = (counts.per_cell * counts.actions) as f64;
    let high: Vec<Vec<bool>> = counts.target_visits.iter().map(|row| row.iter().map(|&n| n as f64 / denom > threshold).collect()).collect();
    if let Some(h) = high.iter().position(|row| !row.iter().any(|&x| x)) {
        return Err(Error::Truncation { step: h + 1 });
    }
    let mut model = estimate.clone();
    model.mu1 = redirect_row(&model.mu1, &high[0]);
    for h in 1..model.horizon {
        for rows in model.transition[h - 1].iter_mut() {
            for row in rows.iter_mut() {
                *row = redirect_row(row, &high[h]);
            }
        }
    }
    Ok(TruncatedModel { model, high, threshold })
}

/// Finite-memory belief on the truncated model, with a uniform prior on the kept states.
pub fn build_approx_belief(truncated: &TruncatedModel, memory: usize) -> Result<BeliefTable> {
    BeliefTable::with_support(truncated.model.clone(), memory, truncated.high.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoryDefaults {
    pub per_cell: usize,
    pub threshold: f64,
    pub memory: usize,
}

/// Unit-constant instantiation: `eps1 = eps / (H^2 S)`,
/// `N = ceil(8 O log(S H / delta) / (gamma^2 eps1))`, `L = ceil(gamma^-4 log(S H / eps))`.
pub fn theory_defaults(s: usize, _a: usize, o: usize, h: usize, gamma: f64, eps: f64, delta: f64) -> Result<TheoryDefaults> {
    for (name, v) in [("gamma", gamma), ("eps", eps), ("delta", delta)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1)")));
        }
    }
    let sh = (s * h) as f64;
    let threshold = eps / ((h * h * s) as f64);
    let per_cell = (8.0 * o as f64 * (sh / delta).ln() / (gamma * gamma * threshold)).ceil() as usize;
    let memory = ((sh / eps).ln() / gamma.powi(4)).ceil().max(1.0) as usize;
    Ok(TheoryDefaults { per_cell, threshold, memory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{exact_belief, Memory};
    use crate::harness::gen::{gen_pomdp, InstanceKind};
    use crate::util::{l1, rng_from_seed};
    use proptest::prelude::*;

    fn single_path() -> Pomdp {
        let mut m = gen_pomdp(InstanceKind::DeterministicTransition, 2, 2, 2, 3, 0).unwrap();
        for step in m.transition.iter_mut() {
            for rows in step.iter_mut() {
                for row in rows.iter_mut() {
                    *row = vec![1.0, 0.0];
                }
            }
        }
        m.mu1 = vec![1.0, 0.0];
        m
    }

    #[test]
    fn single_path_counts_and_accounting() {
        let m = single_path();
        let sim = Simulator::new(&m);
        let cfg = ExploreConfig { per_cell: 1, reach_budget: 20, delta: 0.1 };
        let em = explore_and_count(&sim, &cfg, &mut rng_from_seed(0)).unwrap();
        // every batch lands on state 0: S targets x A actions x N
        for h in 0..3 {
            assert_eq!(em.n_s[h], vec![4, 0]);
            assert_eq!(em.n_sa[h][0], vec![2, 2]);
        }
        assert!(em.consistent());
        assert_eq!(em.reach_episodes, 2 * 2 * (20 + 2));
        assert_eq!(em.episodes, 2 * 3 * 2 + em.reach_episodes);
    }

    #[test]
    fn deterministic_rows_estimated_exactly() {
        let m = gen_pomdp(InstanceKind::DeterministicTransition, 3, 2, 2, 3, 4).unwrap();
        let sim = Simulator::new(&m);
        let cfg = ExploreConfig { per_cell: 50, reach_budget: 100, delta: 0.1 };
        let em = explore_and_count(&sim, &cfg, &mut rng_from_seed(1)).unwrap();
        let est = estimate_model(&em, None);
        for h in 0..3 {
            for s in 0..3 {
                for a in 0..2 {
                    if em.n_sa[h][s][a] > 0 {
                        assert_eq!(est.model.transition[h][s][a], m.transition[h][s][a]);
                    }
                }
            }
        }
        assert!(est.model.validate().is_empty());
    }

    #[test]
    fn unvisited_rows_are_uniform_and_flagged() {
        let m = single_path();
        let sim = Simulator::new(&m);
        let cfg = ExploreConfig { per_cell: 2, reach_budget: 10, delta: 0.1 };
        let em = explore_and_count(&sim, &cfg, &mut rng_from_seed(0)).unwrap();
        let est = estimate_model(&em, Some(&m.mu1));
        assert_eq!(est.model.transition[1][1][0], vec![0.5, 0.5]);
        assert_eq!(est.model.emission[1][1], vec![0.5, 0.5]);
        assert!(est.fallback_rows.contains(&"T[h=2][s=1][a=0]".to_string()));
        assert!(est.fallback_rows.contains(&"O[h=2][s=1]".to_string()));
        assert_eq!(est.model.mu1, m.mu1);
    }

    /// Row error concentration over independent seeds.
    #[test]
    fn row_error_concentrates() {
        let m = gen_pomdp(InstanceKind::Generic, 3, 2, 2, 2, 7).unwrap();
        let delta: f64 = 0.05;
        let mut ok = 0;
        for seed in 0..100 {
            let sim = Simulator::new(&m);
            let cfg = ExploreConfig { per_cell: 30, reach_budget: 10, delta: 0.1 };
            let em = explore_and_count(&sim, &cfg, &mut rng_from_seed(seed)).unwrap();
            let est = estimate_model(&em, None);
            let n = em.n_sa[0][0][0];
            let bound = 2.0 * (3.0 * (1.0 / delta).ln() / n.max(1) as f64).sqrt();
            if l1(&est.model.transition[0][0][0], &m.transition[0][0][0]) <= bound {
                ok += 1;
            }
        }
        assert!(ok >= 95, "{ok}");
    }

    #[test]
    fn redirect_examples() {
        assert_eq!(redirect_row(&[0.5, 0.3, 0.2], &[true, true, true]), vec![0.5, 0.3, 0.2]);
        let r = redirect_row(&[0.5, 0.3, 0.2], &[true, true, false]);
        assert!((r[0] - 0.6).abs() < 1e-12 && (r[1] - 0.4).abs() < 1e-12 && r[2] == 0.0);
    }

    proptest! {
        #[test]
        fn redirect_is_stochastic_and_contracts(
            raw in proptest::collection::vec((0.01f64..1.0, 0.01f64..1.0, any::<bool>()), 2..7),
        ) {
            let mut x: Vec<f64> = raw.iter().map(|t| t.0).collect();
            let mut y: Vec<f64> = raw.iter().map(|t| t.1).collect();
            crate::util::normalize(&mut x);
            crate::util::normalize(&mut y);
            let mut high: Vec<bool> = raw.iter().map(|t| t.2).collect();
            high[0] = true;
            let (rx, ry) = (redirect_row(&x, &high), redirect_row(&y, &high));
            prop_assert!((rx.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(rx.iter().zip(&high).all(|(p, &hi)| hi || *p == 0.0));
            prop_assert!(l1(&rx, &ry) <= l1(&x, &y) + 1e-12);
        }
    }

    #[test]
    fn truncation_keeps_rows_stochastic() {
        let m = gen_pomdp(InstanceKind::Generic, 4, 2, 3, 3, 2).unwrap();
        let sim = Simulator::new(&m);
        let cfg = ExploreConfig { per_cell: 20, reach_budget: 50, delta: 0.1 };
        let em = explore_and_count(&sim, &cfg, &mut rng_from_seed(3)).unwrap();
        let est = estimate_model(&em, None);
        let t = truncate_model(&est.model, &em, 0.2).unwrap();
        assert!(t.model.validate().is_empty());
        for h in 1..3 {
            for rows in &t.model.transition[h - 1] {
                for row in rows {
                    assert!(row.iter().zip(&t.high[h]).all(|(p, &hi)| hi || *p == 0.0));
                }
            }
        }
        let json = t.to_json().unwrap();
        assert!(json.contains("\"truncation\"") && json.contains("\"kind\": \"pomdp\""));
    }

    #[test]
    fn empty_high_set_names_step() {
        let m = single_path();
        let sim = Simulator::new(&m);
        let cfg = ExploreConfig { per_cell: 2, reach_budget: 10, delta: 0.1 };
        let em = explore_and_count(&sim, &cfg, &mut rng_from_seed(0)).unwrap();
        let est = estimate_model(&em, None);
        match truncate_model(&est.model, &em, 1.0) {
            Err(Error::Truncation { step }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn untruncated_long_memory_is_exact() {
        let m = gen_pomdp(InstanceKind::Generic, 3, 2, 2, 3, 5).unwrap();
        let t = TruncatedModel { model: m.clone(), high: vec![vec![true; 3]; 3], threshold: 0.0 };
        let table = build_approx_belief(&t, 3).unwrap();
        let key = Memory::history(&[0, 1], &[1, 0, 1]);
        let got = table.get(3, &key).unwrap();
        assert!(l1(&got, &exact_belief(&m, &key).unwrap()) < 1e-12);
    }

    #[test]
    fn theory_defaults_arithmetic() {
        let d = theory_defaults(2, 2, 2, 3, 0.5, 0.1, 0.1).unwrap();
        let eps1 = 0.1 / 18.0;
        assert!((d.threshold - eps1).abs() < 1e-15);
        // 8 * 2 * ln 60 / (0.25 * eps1) = 47166.9..
        assert_eq!(d.per_cell, 47167);
        // 16 * ln 60 = 65.50..
        assert_eq!(d.memory, 66);
        let mut last = usize::MAX;
        for g in [0.1, 0.3, 0.5, 0.9] {
            let n = theory_defaults(2, 2, 2, 3, g, 0.1, 0.1).unwrap();
            assert!(n.per_cell <= last && n.memory >= 1);
            last = n.per_cell;
        }
        assert!(theory_defaults(2, 2, 2, 3, 1.0, 0.1, 0.1).is_err());
    }
}
