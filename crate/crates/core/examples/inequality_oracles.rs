//! Randomized checks of the trajectory/belief perturbation bound, the
//! marginal/conditional split and masked redirection, plus one exact
//! trajectory law.

use privileged_rl::harness::gen::{gen_pomdp, InstanceKind};
use privileged_rl::harness::oracles::{check_inequalities, enumerate_trajectories, random_history_policy, traj_check, OracleCase};
use privileged_rl::util::rng_from_seed;

fn main() -> privileged_rl::Result<()> {
    for (case, trials) in [(OracleCase::Traj, 100), (OracleCase::Trick, 1000), (OracleCase::Mask, 1000)] {
        let r = check_inequalities(case, trials, 0)?;
        println!("{case:>5}: {} of {} failed, min slack {:.3e} (trial {})", r.failures, r.trials, r.min_slack, r.worst_trial);
    }

    let p = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, 1)?;
    let q = gen_pomdp(InstanceKind::Generic, 2, 2, 2, 3, 2)?;
    let pi = random_history_policy(3, 2, 2, &mut rng_from_seed(3));
    let law = enumerate_trajectories(&p, &pi, 1 << 20)?;
    println!("\n{} trajectories with positive probability", law.len());
    let c = traj_check(&p, &q, &pi, 1 << 20)?;
    println!("||P - Q||_1 = {:.4} <= bound {:.4}", c.trajectory_l1, c.bound);
    println!("belief l1 per step {:?} <= {:.4}", c.belief_l1.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(), 2.0 * c.bound);
    Ok(())
}
