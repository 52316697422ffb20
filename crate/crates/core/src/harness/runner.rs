//! Seeded sweeps over random instances: train every algorithm of the roster under
//! an episode budget, evaluate exactly, and write one CSV of records.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gen::{gen_pomdp, InstanceKind};
use crate::asymmetric_ac::{all_memory_keys, belief_weighted_npg, optimistic_q, table_lookup, NpgConfig, OptimismConfig};
use crate::baselines::{asymmetric_q_learning, vanilla_aac, AacConfig, QLearningConfig};
use crate::distill::{compose_policy, learn_decoders};
use crate::env::Simulator;
use crate::error::{Error, Result};
use crate::learning::{build_approx_belief, estimate_model, explore_and_count, truncate_model, ExploreConfig};
use crate::mdp::{ucbvi, UcbConfig};
use crate::model::Pomdp;
use crate::policy::{evaluate_policy_exact, Policy};
use crate::util::rng_from_seed;

pub const CSV_HEADER: &str = "algo,instance_kind,S,A,O,H,seed,episodes_used,metric,value";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    /// Explore, truncate, learned finite-memory belief, belief-weighted NPG with an optimistic critic.
    AsymmetricOptimisticNpg,
    /// UCB-VI state expert composed with learned decoders.
    ExpertDistillation,
    AsymmetricQLearning,
    VanillaAac,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::AsymmetricOptimisticNpg, Algo::ExpertDistillation, Algo::AsymmetricQLearning, Algo::VanillaAac];

    pub fn name(self) -> &'static str {
        match self {
            Algo::AsymmetricOptimisticNpg => "asymmetric_optimistic_npg",
            Algo::ExpertDistillation => "expert_distillation",
            Algo::AsymmetricQLearning => "asymmetric_q_learning",
            Algo::VanillaAac => "vanilla_aac",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm {s:?}")))
    }
}

/// Hyperparameters shared by the roster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    /// Memory length of every finite-memory learner.
    pub memory: usize,
    pub delta: f64,
    /// Share of the NPG budget spent on exploration.
    pub explore_fraction: f64,
    /// Visit-frequency threshold below which a state is truncated.
    pub truncation_threshold: f64,
    pub npg_iterations: usize,
    /// `None` uses `sqrt(log A / (T H))`.
    pub npg_eta: Option<f64>,
    pub optimism_c: f64,
    /// Share of the distillation budget spent on the expert.
    pub expert_fraction: f64,
    pub ucb_c: f64,
    pub q_alpha: f64,
    pub aac_episodes_per_iteration: usize,
    pub aac_step: f64,
    pub aac_alpha: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            memory: 3,
            delta: 0.05,
            explore_fraction: 0.3,
            truncation_threshold: 0.02,
            npg_iterations: 20,
            npg_eta: Some(1.0),
            optimism_c: 0.1,
            expert_fraction: 0.5,
            ucb_c: 0.5,
            q_alpha: 0.1,
            aac_episodes_per_iteration: 10,
            aac_step: 0.1,
            aac_alpha: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kinds: Vec<InstanceKind>,
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    #[serde(rename = "O")]
    pub observations: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    /// Used when `seeds` is empty: seeds `0..instances`.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// One instance per seed; the seed also drives training.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_roster")]
    pub roster: Vec<Algo>,
    /// Episodes per training run, the same for every algorithm.
    pub budget: usize,
    /// Evenly spaced budgets `budget * k / curve_points` for learning curves.
    #[serde(default = "default_points")]
    pub curve_points: usize,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_instances() -> usize {
    20
}

fn default_roster() -> Vec<Algo> {
    Algo::ALL.to_vec()
}

fn default_points() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(kinds: Vec<InstanceKind>, sizes: (usize, usize, usize, usize), budget: usize) -> Self {
        let (states, actions, observations, horizon) = sizes;
        ExperimentConfig {
            kinds,
            states,
            actions,
            observations,
            horizon,
            instances: default_instances(),
            seeds: Vec::new(),
            roster: default_roster(),
            budget,
            curve_points: 1,
            hyper: Hyper::default(),
            out_dir: None,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.instances as u64).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.kinds.is_empty() || self.roster.is_empty() {
            return bad("need at least one instance kind and one algorithm");
        }
        if self.states == 0 || self.actions == 0 || self.observations == 0 || self.horizon == 0 {
            return bad("sizes must be positive");
        }
        if self.budget == 0 || self.curve_points == 0 || self.budget < self.curve_points {
            return bad("budgets must be positive");
        }
        let seeds = self.seed_list();
        if seeds.is_empty() {
            return bad("no instances");
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return bad("seeds must be distinct");
        }
        let h = &self.hyper;
        for (name, v) in [("explore_fraction", h.explore_fraction), ("expert_fraction", h.expert_fraction)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1)")));
            }
        }
        if h.memory == 0 || h.npg_iterations == 0 || h.aac_episodes_per_iteration == 0 {
            return bad("memory and iteration counts must be positive");
        }
        Ok(())
    }
}

/// One CSV row. Summary rows leave `seed` empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algo: String,
    pub instance_kind: String,
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    #[serde(rename = "O")]
    pub observations: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub seed: Option<u64>,
    pub episodes_used: usize,
    pub metric: String,
    pub value: f64,
}

pub const METRIC_REWARD: &str = "reward";
pub const METRIC_MEAN: &str = "reward_mean";
pub const METRIC_STD: &str = "reward_std";
pub const METRIC_FAILED: &str = "failed";

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<RunRecord>,
    /// `(algo, kind, seed, budget, message)` for runs that returned an error.
    pub failures: Vec<(Algo, InstanceKind, u64, usize, String)>,
    pub csv_path: Option<PathBuf>,
}

/// A trained policy and the episodes it consumed.
pub struct Trained {
    pub policy: Policy,
    pub episodes: usize,
}

/// Trains one algorithm on `model` with at most `budget` simulator episodes.
pub fn train(algo: Algo, model: &Pomdp, budget: usize, hp: &Hyper, seed: u64) -> Result<Trained> {
    let sim = Simulator::new(model);
    let mut rng = rng_from_seed(seed);
    let (s_n, a_n, o_n) = sim.sizes();
    let hh = sim.horizon();
    let policy = match algo {
        Algo::AsymmetricOptimisticNpg => {
            let explore = (budget as f64 * hp.explore_fraction) as usize;
            let reach_runs = (hh - 1) * s_n;
            let reach_budget = if reach_runs == 0 { 1 } else { (explore / (2 * reach_runs)).max(1) };
            let per_cell = ((explore - (reach_budget * reach_runs).min(explore)) / (hh * s_n * a_n)).max(1);
            let cfg = ExploreConfig { per_cell, reach_budget, delta: hp.delta };
            let counts = explore_and_count(&sim, &cfg, &mut rng)?;
            let estimate = estimate_model(&counts, None);
            let truncated = truncate_model(&estimate.model, &counts, hp.truncation_threshold)?;
            let belief = build_approx_belief(&truncated, hp.memory)?;
            let lookup = table_lookup(&belief);
            let left = budget.saturating_sub(sim.episodes());
            let per_step = (left / (hp.npg_iterations * hh)).max(1);
            let keys = all_memory_keys(hh, a_n, o_n, hp.memory);
            let ocfg = OptimismConfig { episodes_per_step: per_step, delta: hp.delta, c: hp.optimism_c };
            let ncfg = NpgConfig { iterations: hp.npg_iterations, eta: hp.npg_eta, memory: hp.memory };
            let mut critic = |pi: &_| optimistic_q(&sim, pi, &keys, &ocfg, &mut rng);
            belief_weighted_npg(hh, a_n, &ncfg, &lookup, &mut critic)?.mixture
        }
        Algo::ExpertDistillation => {
            let expert_episodes = ((budget as f64 * hp.expert_fraction) as usize).max(1);
            let ucfg = UcbConfig { episodes: expert_episodes, delta: hp.delta, c: hp.ucb_c, value_cap: hh as f64 };
            let (expert, _) = ucbvi(&sim, &|h, s, a| sim.reward(h, s, a), &ucfg, &mut rng)?;
            let m = (budget.saturating_sub(sim.episodes()) / hh).max(1);
            let decoders = learn_decoders(&sim, &expert, m, &mut rng)?;
            Policy::Decoded(compose_policy(decoders, expert))
        }
        Algo::AsymmetricQLearning => {
            let cfg = QLearningConfig { episodes: budget, alpha: hp.q_alpha, memory: hp.memory };
            Policy::Memory(asymmetric_q_learning(&sim, &cfg, &mut rng)?.policy)
        }
        Algo::VanillaAac => {
            let cfg = AacConfig {
                iterations: (budget / hp.aac_episodes_per_iteration).max(1),
                episodes_per_iteration: hp.aac_episodes_per_iteration,
                step: hp.aac_step,
                alpha: hp.aac_alpha,
                memory: hp.memory,
            };
            Policy::Memory(vanilla_aac(&sim, &cfg, &mut rng)?.policy)
        }
    };
    Ok(Trained { policy, episodes: sim.episodes() })
}

/// Training seed for one run, distinct across algorithms and curve points.
fn run_seed(instance_seed: u64, algo: Algo, point: usize) -> u64 {
    let idx = Algo::ALL.iter().position(|&a| a == algo).unwrap_or(0) as u64;
    instance_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (idx << 48) ^ ((point as u64) << 32) ^ 0x5EED
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the sweep. Per-run errors become `failed` rows; only invalid
/// configurations and I/O problems are returned as errors.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let seeds = config.seed_list();
    let points: Vec<usize> = (1..=config.curve_points).map(|k| config.budget * k / config.curve_points).collect();
    let mut tasks = Vec::new();
    for &kind in &config.kinds {
        for &seed in &seeds {
            for &algo in &config.roster {
                for (p, &budget) in points.iter().enumerate() {
                    tasks.push((kind, seed, algo, p, budget));
                }
            }
        }
    }
    let sizes = (config.states, config.actions, config.observations, config.horizon);
    let outcomes: Vec<Result<(f64, usize)>> = tasks
        .par_iter()
        .map(|&(kind, seed, algo, p, budget)| {
            let model = gen_pomdp(kind, sizes.0, sizes.1, sizes.2, sizes.3, seed)?;
            let trained = train(algo, &model, budget, &config.hyper, run_seed(seed, algo, p))?;
            let value = evaluate_policy_exact(&model, &trained.policy)?;
            if !value.is_finite() {
                return Err(Error::Oracle(format!("non-finite value {value}")));
            }
            Ok((value, trained.episodes))
        })
        .collect();

    let row = |algo: &str, kind: InstanceKind, seed: Option<u64>, episodes: usize, metric: &str, value: f64| RunRecord {
        algo: algo.to_string(),
        instance_kind: kind.to_string(),
        states: sizes.0,
        actions: sizes.1,
        observations: sizes.2,
        horizon: sizes.3,
        seed,
        episodes_used: episodes,
        metric: metric.to_string(),
        value,
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut finals: Vec<((InstanceKind, Algo), f64)> = Vec::new();
    for (&(kind, seed, algo, p, budget), outcome) in tasks.iter().zip(outcomes) {
        match outcome {
            Ok((value, episodes)) => {
                records.push(row(algo.name(), kind, Some(seed), episodes, METRIC_REWARD, value));
                if p + 1 == points.len() {
                    finals.push(((kind, algo), value));
                }
            }
            Err(e) => {
                records.push(row(algo.name(), kind, Some(seed), budget, METRIC_FAILED, 1.0));
                failures.push((algo, kind, seed, budget, e.to_string()));
            }
        }
    }
    for &kind in &config.kinds {
        for &algo in &config.roster {
            let xs: Vec<f64> = finals.iter().filter(|(k, _)| *k == (kind, algo)).map(|(_, v)| *v).collect();
            if xs.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&xs);
            records.push(row(algo.name(), kind, None, config.budget, METRIC_MEAN, mean));
            records.push(row(algo.name(), kind, None, config.budget, METRIC_STD, std));
        }
    }

    let csv_path = match &config.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join("results.csv");
            write_csv(&path, &records)?;
            if !failures.is_empty() {
                let text: String = failures
                    .iter()
                    .map(|(a, k, s, b, m)| format!("{a} {k} seed={s} budget={b}: {m}\n"))
                    .collect();
                fs::write(dir.join("failures.log"), text)?;
            }
            Some(path)
        }
        None => None,
    };
    Ok(ExperimentOutput { records, failures, csv_path })
}

pub fn write_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected CSV header {:?}", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: RunRecord = rec?;
        if !rec.value.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite value in row {}", out.len() + 1)));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Mean and population std of the `reward` rows for each `(kind, algo)` at the full budget.
pub fn summarize(records: &[RunRecord]) -> Vec<(String, String, f64, f64)> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.metric == METRIC_MEAN) {
        let std = records
            .iter()
            .find(|s| s.metric == METRIC_STD && s.algo == r.algo && s.instance_kind == r.instance_kind)
            .map_or(0.0, |s| s.value);
        out.push((r.instance_kind.clone(), r.algo.clone(), r.value, std));
    }
    out
}
