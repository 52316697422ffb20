//! Expert distillation on a block MDP: learn a state expert with UCB-VI from
//! privileged episodes, learn lookup decoders under the expert, then act on
//! decoded states.

use privileged_rl::distill::{compose_policy, decode_failure_prob, decoder_batch_size, learn_decoders, FailureMode};
use privileged_rl::env::Simulator;
use privileged_rl::harness::gen::{gen_pomdp, InstanceKind};
use privileged_rl::mdp::{ucbvi, value_iteration, UcbConfig};
use privileged_rl::policy::{evaluate_policy_exact, Policy};
use privileged_rl::util::rng_from_seed;

fn main() -> privileged_rl::Result<()> {
    let m = gen_pomdp(InstanceKind::BlockMdp, 3, 2, 6, 5, 4)?;
    let sim = Simulator::new(&m);
    let mut rng = rng_from_seed(0);

    let cfg = UcbConfig { episodes: 3000, delta: 0.05, c: 0.5, value_cap: m.horizon as f64 };
    let (expert, _) = ucbvi(&sim, &|h, s, a| sim.reward(h, s, a), &cfg, &mut rng)?;
    let optimum = value_iteration(&m.mdp()).initial_value(&m.mu1);
    let expert_value = evaluate_policy_exact(&m, &Policy::State(expert.clone()))?;

    let batch = decoder_batch_size(m.states, m.actions, m.observations, m.horizon, 0.3, 0.05);
    let decoders = learn_decoders(&sim, &expert, batch, &mut rng)?;
    let failure = decode_failure_prob(&m, &expert, &decoders, FailureMode::Exact)?;
    let policy = compose_policy(decoders, expert.clone());
    let value = evaluate_policy_exact(&m, &Policy::Decoded(policy.clone()))?;

    println!("MDP optimum            {optimum:.4}");
    println!("UCB-VI expert          {expert_value:.4}");
    println!("decoded policy         {value:.4}");
    println!("decoder batch {batch}, {} entries, {} conflicts, failure {failure:.4}", policy.decoders.steps.len(), policy.decoders.conflicts);
    println!("episodes used          {}", sim.episodes());
    Ok(())
}
