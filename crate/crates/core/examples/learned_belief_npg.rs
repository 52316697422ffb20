//! The full learned-belief actor-critic: explore to count transitions and
//! emissions, truncate rarely visited states, build a finite-memory belief on
//! the truncated model, then run belief-weighted NPG with an optimistic critic
//! estimated from fresh episodes.

use privileged_rl::asymmetric_ac::{all_memory_keys, belief_weighted_npg, optimistic_q, table_lookup, NpgConfig, OptimismConfig};
use privileged_rl::env::Simulator;
use privileged_rl::harness::gen::{gen_pomdp, InstanceKind};
use privileged_rl::learning::{build_approx_belief, estimate_model, explore_and_count, truncate_model, ExploreConfig};
use privileged_rl::policy::{best_memory_policy, evaluate_policy_exact, MemoryPolicy, Policy};
use privileged_rl::util::rng_from_seed;

fn main() -> privileged_rl::Result<()> {
    let m = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, 11)?;
    let memory = 2;
    let sim = Simulator::new(&m);
    let mut rng = rng_from_seed(1);

    let counts = explore_and_count(&sim, &ExploreConfig { per_cell: 400, reach_budget: 200, delta: 0.05 }, &mut rng)?;
    let estimate = estimate_model(&counts, None);
    let truncated = truncate_model(&estimate.model, &counts, 0.02)?;
    println!("exploration: {} episodes, {} fallback rows, low states {:?}", counts.episodes, estimate.fallback_rows.len(), truncated.low_sets());

    let belief = build_approx_belief(&truncated, memory)?;
    let lookup = table_lookup(&belief);
    let keys = all_memory_keys(m.horizon, m.actions, m.observations, memory);
    let ocfg = OptimismConfig { episodes_per_step: 300, delta: 0.05, c: 0.1 };
    let mut critic = |pi: &MemoryPolicy| optimistic_q(&sim, pi, &keys, &ocfg, &mut rng);
    let out = belief_weighted_npg(m.horizon, m.actions, &NpgConfig { iterations: 30, eta: Some(1.0), memory }, &lookup, &mut critic)?;

    let (optimum, _) = best_memory_policy(&m, memory, 1 << 20)?;
    for t in [0, 4, 9, 19, 29] {
        let v = evaluate_policy_exact(&m, &Policy::Memory(out.iterates[t].clone()))?;
        println!("iterate {:>2}: {v:.4}", t + 1);
    }
    println!("mixture:    {:.4}", evaluate_policy_exact(&m, &out.mixture)?);
    println!("best memory-{memory} policy: {optimum:.4}, total episodes {}", sim.episodes());
    Ok(())
}
