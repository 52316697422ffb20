//! Decentralized execution of a state-based equilibrium: each agent decodes the
//! state from its own information with a posterior fitted to exploration data,
//! then plays the expert's stage profile.

use privileged_rl::harness::gen::{gen_posg, PosgKind};
use privileged_rl::marl::{
    distill_equilibrium, equilibrium_gap, max_decode_failure, multi_agent_decoders, stage_game_expert, theory_per_cell, Concept, DecoderConfig,
    Sharing, SolverConfig,
};
use privileged_rl::util::rng_from_seed;

fn main() -> privileged_rl::Result<()> {
    for sharing in [Sharing::Full, Sharing::OneStepDelay] {
        let g = gen_posg(PosgKind::Block, 2, 2, 2, 3, 2, sharing, false, 8)?;
        let expert = stage_game_expert(&g, &SolverConfig::default())?;
        let cfg = DecoderConfig { per_cell: theory_per_cell(&g, 0.2, 0.05), reach_budget: 100, delta: 0.05, concept: Concept::Cce };
        let decoders = multi_agent_decoders(&g, &expert, &cfg, &mut rng_from_seed(2))?;
        let episodes = decoders.episodes;
        let fail = max_decode_failure(&g, &expert, &decoders, 1 << 20)?;
        let base = equilibrium_gap(&g, &expert, Concept::Cce, 1 << 20)?.gap;
        let gap = equilibrium_gap(&g, &distill_equilibrium(expert, decoders), Concept::Cce, 1 << 20)?.gap;
        let (n, h) = (g.n as f64, g.model.horizon as f64);
        println!(
            "{sharing:?}: {episodes} episodes, decode failure {fail:.4}, expert gap {base:.4}, distilled gap {gap:.4} <= {:.4}",
            base + 2.0 * n * h * h * fail
        );
    }
    Ok(())
}
