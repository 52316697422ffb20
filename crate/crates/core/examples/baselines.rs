//! Asymmetric Q-learning and vanilla asymmetric actor-critic with memory-3
//! policies, both using the true state in the critic during training.

use privileged_rl::baselines::{asymmetric_q_learning, vanilla_aac, AacConfig, QLearningConfig};
use privileged_rl::env::Simulator;
use privileged_rl::harness::gen::{gen_pomdp, InstanceKind};
use privileged_rl::mdp::value_iteration;
use privileged_rl::policy::{evaluate_policy_exact, Policy};
use privileged_rl::util::rng_from_seed;

fn main() -> privileged_rl::Result<()> {
    let m = gen_pomdp(InstanceKind::DeterministicTransition, 2, 2, 3, 4, 3)?;
    let upper = value_iteration(&m.mdp()).initial_value(&m.mu1);
    println!("fully observed optimum {upper:.4}");
    for budget in [500, 2000, 8000] {
        let sim = Simulator::new(&m);
        let q = asymmetric_q_learning(&sim, &QLearningConfig { episodes: budget, alpha: 0.1, memory: 3 }, &mut rng_from_seed(5))?;
        let sim = Simulator::new(&m);
        let cfg = AacConfig { iterations: budget / 10, ..AacConfig::default() };
        let ac = vanilla_aac(&sim, &cfg, &mut rng_from_seed(5))?;
        println!(
            "{budget:>5} episodes: Q-learning {:.4}, AAC {:.4}",
            evaluate_policy_exact(&m, &Policy::Memory(q.policy))?,
            evaluate_policy_exact(&m, &Policy::Memory(ac.policy))?
        );
    }
    Ok(())
}
