//! Optimistic value iteration over common information on two games: matching
//! pennies (zero-sum, exact NE per stage) and a random general-sum game with
//! one-step delayed sharing (CCE per stage).

use privileged_rl::harness::gen::{gen_posg, PosgKind};
use privileged_rl::marl::{equilibrium_gap, optimistic_vi, CommonBelief, Concept, OviConfig, Sharing, SolverConfig};
use privileged_rl::util::rng_from_seed;

fn main() -> privileged_rl::Result<()> {
    let pennies = gen_posg(PosgKind::MatchingPennies, 2, 1, 2, 1, 2, Sharing::Full, true, 0)?;
    let belief = CommonBelief::exact(&pennies, 2)?;
    let cfg = OviConfig { episodes: 2000, solver: SolverConfig { concept: Concept::Ne, rounds: 2000, zero_sum: true }, ..OviConfig::default() };
    let out = optimistic_vi(&pennies, &belief, &cfg, &mut rng_from_seed(0))?;
    let report = equilibrium_gap(&pennies, &out.policy, Concept::Ne, 1 << 20)?;
    println!("matching pennies: NE gap {:.2e}, values {:?}, episode {}", report.gap, report.values, out.best_episode);

    let game = gen_posg(PosgKind::Generic, 2, 2, 2, 2, 2, Sharing::OneStepDelay, false, 3)?;
    let belief = CommonBelief::exact(&game, 1)?;
    let cfg = OviConfig { episodes: 1500, solver: SolverConfig { rounds: 500, ..SolverConfig::default() }, ..OviConfig::default() };
    let out = optimistic_vi(&game, &belief, &cfg, &mut rng_from_seed(1))?;
    let report = equilibrium_gap(&game, &out.policy, Concept::Cce, 1 << 20)?;
    let last = out.trace.last().expect("at least one episode");
    println!("delayed sharing: CCE gap {:.4}, final V^high {:?}, V^low {:?}", report.gap, last.high, last.low);
    println!("ordering violations {}, clamp violations {}", out.order_violations, out.clamp_violations);
    Ok(())
}
