//! Exact filtering against finite-memory beliefs started from a uniform prior.
//! The error shrinks quickly with the window length on an observable instance.

use privileged_rl::belief::{approx_belief, exact_belief, Memory};
use privileged_rl::harness::gen::{gen_pomdp, observability_report, InstanceKind};
use privileged_rl::policy::{sample_episode, MemoryPolicy, Policy};
use privileged_rl::util::{l1, rng_from_seed};

fn main() -> privileged_rl::Result<()> {
    let m = gen_pomdp(InstanceKind::Generic, 3, 2, 3, 8, 1)?;
    let gammas: Vec<String> = observability_report(&m)?.iter().map(|g| format!("{:.2}", g.gamma)).collect();
    println!("observability per step: {}", gammas.join(" "));

    let mut rng = rng_from_seed(2);
    let behavior = Policy::Memory(MemoryPolicy::uniform(m.horizon, m.actions, 1));
    let episodes = 500;
    let mut err = vec![0.0; m.horizon + 1];
    for _ in 0..episodes {
        let t = sample_episode(&m, &behavior, &mut rng)?;
        let h = m.horizon;
        let history = Memory::history(&t.actions[..h - 1], &t.observations[..h]);
        let exact = exact_belief(&m, &history)?;
        for len in 1..=h {
            err[len] += l1(&exact, &approx_belief(&m, h, &history.suffix(len), None)?) / episodes as f64;
        }
    }
    println!("mean l1 error of the step-{} belief by window length:", m.horizon);
    for (len, e) in err.iter().enumerate().skip(1) {
        println!("  L = {len}: {e:.5}");
    }
    Ok(())
}
