//! Reward table over 20 deterministic-transition POMDPs and 20 block MDPs
//! (S = A = 2, O = 3, H = 5) with the same episode budget for every algorithm.
//!
//! `cargo run --release --example table_sweep -- [budget]`

use privileged_rl::harness::gen::InstanceKind;
use privileged_rl::harness::runner::{run_experiment, summarize, ExperimentConfig};

fn main() -> privileged_rl::Result<()> {
    let budget = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let config = ExperimentConfig::new(vec![InstanceKind::DeterministicTransition, InstanceKind::BlockMdp], (2, 2, 3, 5), budget);
    let t = std::time::Instant::now();
    let out = run_experiment(&config)?;
    println!("{:<26} {:<28} {:>8} {:>8}", "instances", "algorithm", "mean", "std");
    for (kind, algo, mean, std) in summarize(&out.records) {
        println!("{kind:<26} {algo:<28} {mean:>8.3} {std:>8.3}");
    }
    println!("{} failed runs, {:.1?}", out.failures.len(), t.elapsed());
    for f in &out.failures {
        println!("  {f:?}");
    }
    Ok(())
}
