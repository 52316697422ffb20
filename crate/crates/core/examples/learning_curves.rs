//! Learning curves: rerun every algorithm at increasing budgets, write the CSV
//! and one SVG per instance family.
//!
//! `cargo run --release --example learning_curves -- [out_dir]`

use std::path::PathBuf;

use privileged_rl::harness::gen::InstanceKind;
use privileged_rl::harness::plot::emit_plots;
use privileged_rl::harness::runner::{run_experiment, ExperimentConfig};

fn main() -> privileged_rl::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("privileged-rl-curves"));
    let mut config = ExperimentConfig::new(vec![InstanceKind::DeterministicTransition, InstanceKind::BlockMdp], (2, 2, 3, 5), 8000);
    config.instances = 10;
    config.curve_points = 4;
    config.out_dir = Some(out.clone());
    let result = run_experiment(&config)?;
    println!("{} records, {} failed runs", result.records.len(), result.failures.len());
    for path in emit_plots(&out.join("results.csv"), &out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
