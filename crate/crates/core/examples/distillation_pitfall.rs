//! Distilling a state expert into a history policy can lose value when the
//! observation does not pin down the state. On the two-state instance the
//! forward-KL distilled row at the ambiguous observation is the belief mixture
//! of the expert rows.

use privileged_rl::belief::Memory;
use privileged_rl::distill::{counterexample_pomdp, distill_expected_objective, is_deterministic_filter, value_bias, Divergence};
use privileged_rl::mdp::value_iteration;
use privileged_rl::policy::{best_memory_policy, evaluate_policy_exact, MemoryPolicy, Policy};

fn main() -> privileged_rl::Result<()> {
    println!("{:>6} {:>6} {:>10} {:>10} {:>10}", "gamma", "eps", "best", "distilled", "gap");
    for gamma in [0.2, 0.5, 0.8] {
        for eps in [0.2, 0.5, 0.8] {
            let m = counterexample_pomdp(gamma, eps)?;
            let expert = value_iteration(&m.mdp()).policy;
            let q = distill_expected_objective(&m, &expert, &MemoryPolicy::uniform(1, 2, 1), &Divergence::ForwardKl, 100)?;
            let (best, _) = best_memory_policy(&m, 1, 1 << 10)?;
            let v = evaluate_policy_exact(&m, &Policy::History(q))?;
            println!("{gamma:>6} {eps:>6} {best:>10.4} {v:>10.4} {:>10.4}", best - v);
        }
    }

    let m = counterexample_pomdp(0.5, 0.5)?;
    let check = is_deterministic_filter(&m, 100)?;
    println!("\ndeterministic filter: {} (witness {:?})", check.is_filter, check.witness.map(|k: Memory| k.to_string()));
    let (_, best) = best_memory_policy(&m, 1, 1 << 10)?;
    let (state_avg, history) = value_bias(&m, &best, 0)?;
    println!("best policy at o = 0: E_b[V(s)] = {state_avg:.4}, V(history) = {history:.4}");
    Ok(())
}
