//! Observability constants of generated emission matrices: block emissions are
//! fully revealing, Dirichlet emissions vary with the number of observations.

use privileged_rl::harness::gen::{gen_pomdp, observability_report, InstanceKind};

fn main() -> privileged_rl::Result<()> {
    for kind in [InstanceKind::Generic, InstanceKind::DeterministicTransition, InstanceKind::BlockMdp] {
        for o in [3, 6] {
            let mut worst = f64::INFINITY;
            let mut mean = 0.0;
            for seed in 0..20 {
                let m = gen_pomdp(kind, 3, 2, o, 2, seed)?;
                for g in observability_report(&m)? {
                    worst = worst.min(g.gamma);
                    mean += g.gamma / 40.0;
                }
            }
            println!("{kind:<25} O = {o}: mean gamma {mean:.3}, min {worst:.3}");
        }
    }
    Ok(())
}
