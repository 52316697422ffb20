//! Acceptance suite: ten end-to-end criteria, one PASS/FAIL line each.

use std::io::Write;
use std::time::{Duration, Instant};

use privileged_rl::asymmetric_ac::{all_memory_keys, belief_weighted_npg, exact_q, optimistic_q, optimism_violations, table_lookup, NpgConfig, OptimismConfig};
use privileged_rl::belief::{approx_belief, BeliefTable, Memory};
use privileged_rl::distill::{counterexample_pomdp, distill_expected_objective, value_bias, Divergence};
use privileged_rl::env::Simulator;
use privileged_rl::harness::gen::{gen_pomdp, gen_posg, observability_report, InstanceKind, PosgKind};
use privileged_rl::harness::oracles::{check_inequalities, OracleCase};
use privileged_rl::harness::runner::{run_experiment, Algo, ExperimentConfig, METRIC_REWARD};
use privileged_rl::learning::{build_approx_belief, estimate_model, explore_and_count, truncate_model, ExploreConfig};
use privileged_rl::marl::{
    distill_equilibrium, equilibrium_gap, max_decode_failure, multi_agent_decoders, optimistic_vi, stage_game_expert, theory_per_cell, CommonBelief,
    Concept, DecoderConfig, OviConfig, Sharing, SolverConfig,
};
use privileged_rl::mdp::value_iteration;
use privileged_rl::model::Pomdp;
use privileged_rl::policy::{best_memory_policy, evaluate_policy_exact, MemoryPolicy, Policy};
use privileged_rl::util::rng_from_seed;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Value lost by KL-distilling the optimal state policy at `(gamma, eps)`,
/// against the closed form `(1 - gamma)(1 - eps) / (2 (2 - gamma))`.
fn distillation_gap(gamma: f64, eps: f64) -> (f64, f64, Vec<f64>) {
    let m = counterexample_pomdp(gamma, eps).unwrap();
    let expert = value_iteration(&m.mdp()).policy;
    let behavior = MemoryPolicy::uniform(1, 2, 1);
    let distilled = distill_expected_objective(&m, &expert, &behavior, &Divergence::ForwardKl, 100).unwrap();
    let (best, _) = best_memory_policy(&m, 1, 1 << 10).unwrap();
    let value = evaluate_policy_exact(&m, &Policy::History(distilled.clone())).unwrap();
    let closed = (1.0 - gamma) * (1.0 - eps) / (2.0 * (2.0 - gamma));
    (best - value, closed, distilled.get(1, &Memory::start(0)).unwrap().clone())
}

fn criterion_1() -> Outcome {
    let (gap, closed, row) = distillation_gap(0.5, 0.5);
    let uniform = (row[0] - 0.5).abs() < 1e-12 && (row[1] - 0.5).abs() < 1e-12;
    let mut pass = uniform && (gap - 1.0 / 12.0).abs() <= 1e-9 && (closed - 1.0 / 12.0).abs() < 1e-15 && gap >= 0.0625;
    let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
    let mut worst = 0.0f64;
    for &g in &grid {
        for &e in &grid {
            let (gap, closed, _) = distillation_gap(g, e);
            worst = worst.max((gap - closed).abs());
            pass &= (gap - closed).abs() <= 1e-9 && gap >= (1.0 - e) * (1.0 - g) / 4.0 - 1e-12;
        }
    }
    outcome(pass, format!("row at o1 = {row:?}, gap = {gap:.12}, grid max |gap - closed form| = {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let m = counterexample_pomdp(0.5, 0.5).unwrap();
    let (_, best) = best_memory_policy(&m, 1, 1 << 10).unwrap();
    let (state_avg, history) = value_bias(&m, &best, 0).unwrap();
    let pass = (state_avg - 0.625).abs() <= 1e-9 && (history - 0.5).abs() <= 1e-9 && (state_avg - history - 0.125).abs() <= 1e-9;
    outcome(pass, format!("E_b[V(s)] = {state_avg:.12}, V(o1) = {history:.12}"))
}

/// Depth-first walk over every reachable history, carrying the unnormalized
/// forward weights `P(s_h, history)`. Returns the largest l-inf distance to the
/// beliefs under test and the number of histories visited.
fn check_beliefs(m: &Pomdp, table: &BeliefTable) -> (f64, usize) {
    fn walk(m: &Pomdp, table: &BeliefTable, h: usize, key: &Memory, alpha: &[f64], worst: &mut f64, count: &mut usize) {
        let z: f64 = alpha.iter().sum();
        let oracle: Vec<f64> = alpha.iter().map(|x| x / z).collect();
        let direct = approx_belief(m, h, key, None).unwrap();
        let cached = table.get(h, key).unwrap();
        for s in 0..m.states {
            *worst = worst.max((direct[s] - oracle[s]).abs()).max((cached[s] - oracle[s]).abs());
        }
        *count += 1;
        if h == m.horizon {
            return;
        }
        for a in 0..m.actions {
            for o in 0..m.observations {
                let next: Vec<f64> = (0..m.states)
                    .map(|s2| (0..m.states).map(|s| alpha[s] * m.trans(h, s, a)[s2]).sum::<f64>() * m.emit(h + 1, s2)[o])
                    .collect();
                if next.iter().sum::<f64>() > 0.0 {
                    walk(m, table, h + 1, &key.push(a, o, usize::MAX), &next, worst, count);
                }
            }
        }
    }
    let mut worst = 0.0;
    let mut count = 0;
    for o in 0..m.observations {
        let alpha: Vec<f64> = (0..m.states).map(|s| m.mu1[s] * m.emit(1, s)[o]).collect();
        if alpha.iter().sum::<f64>() > 0.0 {
            walk(m, table, 1, &Memory::start(o), &alpha, &mut worst, &mut count);
        }
    }
    (worst, count)
}

fn criterion_3() -> Outcome {
    let mut rng = rng_from_seed(3);
    let kinds = [InstanceKind::Generic, InstanceKind::DeterministicTransition, InstanceKind::BlockMdp];
    let mut worst = 0.0f64;
    let mut histories = 0;
    for i in 0..50 {
        let s = rng.random_range(1..=4);
        let a = rng.random_range(1..=4);
        let o = rng.random_range(s.max(1)..=4);
        let h = rng.random_range(1..=5);
        let m = gen_pomdp(kinds[i % 3], s, a, o, h, rng.random()).unwrap();
        let table = BeliefTable::exact(m.clone(), h).unwrap();
        let (w, n) = check_beliefs(&m, &table);
        worst = worst.max(w);
        histories += n;
    }
    outcome(worst <= 1e-9, format!("{histories} histories, max l-inf = {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let runs = [(OracleCase::Traj, 100), (OracleCase::Trick, 1000), (OracleCase::Mask, 1000)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (case, trials) in runs {
        let r = check_inequalities(case, trials, 4).unwrap();
        pass &= r.passed() && r.min_slack >= -1e-10;
        parts.push(format!("{case}: {}/{} ok, min slack {:.3e}", r.trials - r.failures, r.trials, r.min_slack));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, 5).unwrap();
    let policy = MemoryPolicy::uniform(3, 2, 2);
    let keys = all_memory_keys(3, 2, 2, 2);
    let cfg = OptimismConfig { episodes_per_step: 2000, delta: 0.05, c: 2.0 };
    let (mut optimistic, mut capped) = (0, 0);
    let seeds = 20;
    for seed in 0..seeds {
        let sim = Simulator::new(&m);
        let q = optimistic_q(&sim, &policy, &keys, &cfg, &mut rng_from_seed(500 + seed)).unwrap();
        let (violations, _) = optimism_violations(&m, &q, &policy, 0.0);
        optimistic += (violations == 0) as usize;
        capped += (q.max_ceiling_excess() <= 0.0) as usize;
    }
    let pass = optimistic as f64 >= 0.95 * seeds as f64 && capped == seeds as usize;
    outcome(pass, format!("optimistic in {optimistic}/{seeds} seeds, within H - h + 1 in {capped}/{seeds}"))
}

fn criterion_6() -> Outcome {
    let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 2, 6).unwrap();
    let (best, _) = best_memory_policy(&m, 1, 1 << 10).unwrap();
    let table = BeliefTable::exact(m.clone(), 1).unwrap();
    let lookup = table_lookup(&table);
    let t = 400;
    let cfg = NpgConfig { iterations: t, eta: None, memory: 1 };
    let mut critic = |pi: &MemoryPolicy| exact_q(&m, pi, 1 << 16);
    let out = belief_weighted_npg(2, 2, &cfg, &lookup, &mut critic).unwrap();
    let avg = evaluate_policy_exact(&m, &out.mixture).unwrap();
    let h = 2.0f64;
    let slack = 2.0 * h * (h * 2f64.ln() / t as f64).sqrt();
    let pass = avg >= best - slack + 1e-6;
    outcome(pass, format!("average iterate {avg:.6}, best deterministic {best:.6}, allowed regret {slack:.4}"))
}

/// Knobs for the learned-belief pipeline at `S = A = O = 2`, `H = 3`, `L = 2`.
const E2E_PER_CELL: usize = 400;
const E2E_REACH: usize = 200;
const E2E_THRESHOLD: f64 = 0.02;
const E2E_ITERATIONS: usize = 30;
const E2E_ETA: f64 = 1.0;
const E2E_EPISODES_PER_STEP: usize = 300;
const E2E_C: f64 = 0.1;
const E2E_MIN_GAMMA: f64 = 0.2;

fn criterion_7() -> Outcome {
    let mut finals = Vec::new();
    let mut optima = Vec::new();
    let mut seed = 0u64;
    while finals.len() < 10 {
        let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, 700 + seed).unwrap();
        seed += 1;
        let gamma = observability_report(&m).unwrap().iter().map(|g| g.gamma).fold(1.0, f64::min);
        if gamma < E2E_MIN_GAMMA {
            continue;
        }
        let (opt, _) = best_memory_policy(&m, 2, 1 << 20).unwrap();
        let sim = Simulator::new(&m);
        let mut rng = rng_from_seed(7_000 + seed);
        let counts = explore_and_count(&sim, &ExploreConfig { per_cell: E2E_PER_CELL, reach_budget: E2E_REACH, delta: 0.05 }, &mut rng).unwrap();
        let estimate = estimate_model(&counts, None);
        let truncated = truncate_model(&estimate.model, &counts, E2E_THRESHOLD).unwrap();
        let belief = build_approx_belief(&truncated, 2).unwrap();
        let lookup = table_lookup(&belief);
        let keys = all_memory_keys(3, 2, 2, 2);
        let ocfg = OptimismConfig { episodes_per_step: E2E_EPISODES_PER_STEP, delta: 0.05, c: E2E_C };
        let mut critic = |pi: &MemoryPolicy| optimistic_q(&sim, pi, &keys, &ocfg, &mut rng);
        let ncfg = NpgConfig { iterations: E2E_ITERATIONS, eta: Some(E2E_ETA), memory: 2 };
        let out = belief_weighted_npg(3, 2, &ncfg, &lookup, &mut critic).unwrap();
        let last = Policy::Memory(out.iterates.last().unwrap().clone());
        finals.push(evaluate_policy_exact(&m, &last).unwrap());
        optima.push(opt);
    }
    let mean = finals.iter().sum::<f64>() / 10.0;
    let opt = optima.iter().sum::<f64>() / 10.0;
    outcome(mean >= 0.9 * opt, format!("mean final value {mean:.4}, mean optimum {opt:.4}, ratio {:.4}", mean / opt))
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut worst_gap = 0.0f64;
    let mut violations = 0;
    for h in [1, 2] {
        let g = gen_posg(PosgKind::MatchingPennies, 2, 1, 2, 1, h, Sharing::Full, true, 0).unwrap();
        let belief = CommonBelief::exact(&g, h).unwrap();
        for seed in 0..5 {
            let cfg = OviConfig {
                episodes: 5000,
                solver: SolverConfig { concept: Concept::Ne, rounds: 2000, zero_sum: true },
                ..OviConfig::default()
            };
            let out = optimistic_vi(&g, &belief, &cfg, &mut rng_from_seed(800 + seed)).unwrap();
            let gap = equilibrium_gap(&g, &out.policy, Concept::Ne, 1 << 20).unwrap().gap;
            worst_gap = worst_gap.max(gap);
            violations += out.order_violations;
            pass &= gap <= 0.05 && out.order_violations == 0;
        }
    }
    outcome(pass, format!("max NE gap {worst_gap:.2e}, Q^low > Q^high entries {violations}"))
}

fn criterion_9() -> Outcome {
    let mut pass = true;
    let mut worst_fail = 0.0f64;
    let mut worst_margin = f64::INFINITY;
    let mut per_cell = 0;
    for seed in 0..5 {
        let g = gen_posg(PosgKind::Block, 2, 2, 2, 2, 2, Sharing::Full, false, 900 + seed).unwrap();
        let expert = stage_game_expert(&g, &SolverConfig::default()).unwrap();
        per_cell = theory_per_cell(&g, 0.1, 0.05);
        let cfg = DecoderConfig { per_cell, reach_budget: 200, delta: 0.05, concept: Concept::Cce };
        let decoders = multi_agent_decoders(&g, &expert, &cfg, &mut rng_from_seed(9_000 + seed)).unwrap();
        let fail = max_decode_failure(&g, &expert, &decoders, 1 << 20).unwrap();
        let base = equilibrium_gap(&g, &expert, Concept::Cce, 1 << 20).unwrap().gap;
        let distilled = distill_equilibrium(expert, decoders);
        let gap = equilibrium_gap(&g, &distilled, Concept::Cce, 1 << 20).unwrap().gap;
        let bound = base + 2.0 * 2.0 * 4.0 * fail;
        worst_fail = worst_fail.max(fail);
        worst_margin = worst_margin.min(bound - gap);
        pass &= fail <= 0.05 && gap <= bound + 1e-12;
    }
    outcome(pass, format!("N = {per_cell} per cell, max decode failure {worst_fail:.2e}, min bound margin {worst_margin:.2e}"))
}

fn criterion_10() -> Outcome {
    let config = ExperimentConfig::new(vec![InstanceKind::DeterministicTransition, InstanceKind::BlockMdp], (2, 2, 3, 5), 10_000);
    let out = run_experiment(&config).unwrap();
    let mut pass = out.failures.is_empty();
    let mut parts = Vec::new();
    for kind in &config.kinds {
        let values = |algo: Algo| -> Vec<f64> {
            out.records
                .iter()
                .filter(|r| r.metric == METRIC_REWARD && r.algo == algo.name() && r.instance_kind == kind.to_string())
                .map(|r| r.value)
                .collect()
        };
        let stats = |xs: &[f64]| {
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
            (m, var / n)
        };
        let (d, dv) = stats(&values(Algo::ExpertDistillation));
        for other in [Algo::AsymmetricQLearning, Algo::VanillaAac] {
            let (x, xv) = stats(&values(other));
            let se = (dv + xv).sqrt();
            pass &= d >= x - se;
            parts.push(format!("{kind}: distillation {d:.3} vs {other} {x:.3} (se {se:.3})"));
        }
    }
    outcome(pass, parts.join("; "))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("distillation pitfall", criterion_1, Duration::from_secs(1)),
        ("value-bias witness", criterion_2, Duration::from_secs(1)),
        ("belief exactness", criterion_3, Duration::from_secs(10)),
        ("inequality oracles", criterion_4, Duration::from_secs(30)),
        ("optimistic critic", criterion_5, Duration::from_secs(60)),
        ("NPG regret", criterion_6, Duration::from_secs(10)),
        ("end-to-end learned belief", criterion_7, Duration::from_secs(300)),
        ("POSG equilibrium", criterion_8, Duration::from_secs(180)),
        ("multi-agent decoding", criterion_9, Duration::from_secs(180)),
        ("reward ordering", criterion_10, Duration::from_secs(900)),
    ];
    let mut failed = Vec::new();
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed < *limit;
        // written past the test harness capture so the lines always show
        let line = format!(
            "criterion {:>2} {:<26} {} | {} | {:.2?} (limit {:?})\n",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed,
            limit
        );
        std::io::stdout().write_all(line.as_bytes()).unwrap();
        if !pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
