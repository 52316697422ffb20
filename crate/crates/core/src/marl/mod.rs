//! Partially observable stochastic games with information sharing.
//!
//! Joint actions and observations are single indices in a mixed radix with
//! agent 0 as the least significant digit. The centralized model (joint
//! actions, joint observations) is an ordinary [`Pomdp`], so the single-agent
//! machinery applies to it directly.

use serde::{Deserialize, Serialize};

use crate::belief::Memory;
use crate::error::Result;
use crate::model::{check_rewards, Pomdp, Violation};

pub mod belief;
pub mod decoders;
pub mod gap;
pub mod info;
pub mod ovi;
pub mod solver;

pub use belief::{posg_belief_learning, CommonBelief};
pub use decoders::{distill_equilibrium, max_decode_failure, multi_agent_decoders, stage_game_expert, theory_per_cell, DecoderConfig, DistilledPolicy, MultiDecoders, StateExpert};
pub use gap::{best_deviation, equilibrium_gap, policy_values, EquilibriumReport};
pub use info::{compress_common, info_split, CommonInfo, Increment, InfoState};
pub use ovi::{bonus, optimistic_vi, OviConfig, OviOutput, PrescriptionPolicy, Selector};
pub use solver::{bayesian_gap, bayesian_solver, BayesianGame, Concept, Profile, SolverConfig, TypeCell};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    /// Everything observed so far is common; nothing is private.
    Full,
    /// Older observations and all actions are common; the current observation is private.
    OneStepDelay,
}

/// Per-agent action/observation counts and the sharing pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    #[serde(rename = "Ai")]
    pub actions: Vec<usize>,
    #[serde(rename = "Oi")]
    pub observations: Vec<usize>,
    pub sharing: Sharing,
}

pub(crate) fn split_index(mut joint: usize, sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .map(|&k| {
            let d = joint % k;
            joint /= k;
            d
        })
        .collect()
}

pub(crate) fn join_index(parts: &[usize], sizes: &[usize]) -> usize {
    parts.iter().zip(sizes).rev().fold(0, |acc, (&p, &k)| acc * k + p)
}

impl Layout {
    pub fn agents(&self) -> usize {
        self.actions.len()
    }

    pub fn joint_actions(&self) -> usize {
        self.actions.iter().product()
    }

    pub fn joint_observations(&self) -> usize {
        self.observations.iter().product()
    }

    pub fn split_action(&self, a: usize) -> Vec<usize> {
        split_index(a, &self.actions)
    }

    pub fn join_action(&self, parts: &[usize]) -> usize {
        join_index(parts, &self.actions)
    }

    pub fn split_obs(&self, o: usize) -> Vec<usize> {
        split_index(o, &self.observations)
    }

    /// Number of private-information values per agent.
    pub fn types(&self) -> Vec<usize> {
        match self.sharing {
            Sharing::Full => vec![1; self.agents()],
            Sharing::OneStepDelay => self.observations.clone(),
        }
    }

    /// Number of joint private-information values.
    pub fn joint_types(&self) -> usize {
        self.types().iter().product()
    }
}

/// A POSG: centralized model plus per-agent structure and rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posg {
    #[serde(flatten)]
    pub model: Pomdp,
    pub n: usize,
    #[serde(flatten)]
    pub layout: Layout,
    /// `[i][h-1][s][a]`
    #[serde(rename = "ri")]
    pub rewards: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub zero_sum: bool,
}

impl Posg {
    pub fn reward(&self, i: usize, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[i][h - 1][s][a]
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut report = self.model.validate();
        let shape = |msg: String| Violation { location: msg, deviation: f64::NAN };
        if self.layout.agents() != self.n || self.layout.observations.len() != self.n || self.rewards.len() != self.n {
            report.push(shape(format!("per-agent arrays must have n = {} entries", self.n)));
            return report;
        }
        if self.layout.joint_actions() != self.model.actions {
            report.push(shape("product of Ai must equal A".into()));
        }
        if self.layout.joint_observations() != self.model.observations {
            report.push(shape("product of Oi must equal O".into()));
        }
        for (i, ri) in self.rewards.iter().enumerate() {
            if ri.len() != self.model.horizon {
                report.push(shape(format!("ri[{i}] must have H entries")));
                continue;
            }
            let mut local = Vec::new();
            for (h, r) in ri.iter().enumerate() {
                check_rewards(&mut local, h, r, self.model.states, self.model.actions);
            }
            report.extend(local.into_iter().map(|v| Violation { location: format!("ri[{i}].{}", v.location), ..v }));
        }
        if self.zero_sum && report.is_empty() {
            if self.n != 2 {
                report.push(shape("zero-sum games need exactly two agents".into()));
            } else {
                for h in 0..self.model.horizon {
                    for s in 0..self.model.states {
                        for a in 0..self.model.actions {
                            let dev = (self.rewards[0][h][s][a] + self.rewards[1][h][s][a] - 1.0).abs();
                            if dev > crate::model::ROW_TOL {
                                report.push(Violation { location: format!("r1+r2[h={}][s={s}][a={a}]", h + 1), deviation: dev });
                            }
                        }
                    }
                }
            }
        }
        report
    }
}

/// Mixture of product action laws: `(weight, rows[i][a_i])`.
pub type Law = Vec<(f64, Vec<Vec<f64>>)>;

/// Joint behavior at step `h` given the joint history `(o_1..o_h, a_1..a_{h-1})`
/// and, for privileged policies, the current state. The mixture component is
/// shared by all agents within a step, playing the role of a common random seed.
pub trait JointPolicy {
    fn law(&self, h: usize, history: &Memory, state: usize) -> Result<Law>;

    /// True when the law depends on the state, not just the history.
    fn state_dependent(&self) -> bool {
        false
    }
}

/// `P(a)` of a joint action under a law.
pub fn law_prob(law: &Law, parts: &[usize]) -> f64 {
    law.iter().map(|(w, rows)| w * rows.iter().zip(parts).map(|(r, &a)| r[a]).product::<f64>()).sum()
}

/// Probability of the other agents playing `parts`, times the probability of
/// `agent` being recommended `parts[agent]` when `with_rec` is set.
pub(crate) fn others_prob(law: &Law, parts: &[usize], agent: usize, with_rec: bool) -> f64 {
    law.iter()
        .map(|(w, rows)| {
            w * rows
                .iter()
                .zip(parts)
                .enumerate()
                .map(|(j, (r, &a))| if j == agent && !with_rec { 1.0 } else { r[a] })
                .product::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen::{gen_posg, PosgKind};
    use crate::model::ModelFile;

    #[test]
    fn mixed_radix_round_trip() {
        let sizes = [2, 3, 2];
        for j in 0..12 {
            assert_eq!(join_index(&split_index(j, &sizes), &sizes), j);
        }
        assert_eq!(split_index(1, &sizes), vec![1, 0, 0]);
    }

    #[test]
    fn json_layout_round_trips() {
        let g = gen_posg(PosgKind::Generic, 2, 2, 2, 2, 2, Sharing::OneStepDelay, true, 3).unwrap();
        let text = serde_json::to_string(&ModelFile::Posg(g.clone())).unwrap();
        assert!(text.starts_with("{\"kind\":\"posg\""));
        assert!(text.contains("\"sharing\":\"one_step_delay\"") && text.contains("\"Ai\":[2,2]"));
        match serde_json::from_str::<ModelFile>(&text).unwrap() {
            ModelFile::Posg(back) => assert_eq!(back, g),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn unknown_sharing_rejected() {
        let g = gen_posg(PosgKind::Generic, 2, 2, 2, 2, 2, Sharing::Full, false, 0).unwrap();
        let text = serde_json::to_string(&ModelFile::Posg(g)).unwrap().replace("\"full\"", "\"delay_3\"");
        assert!(serde_json::from_str::<ModelFile>(&text).is_err());
    }

    #[test]
    fn zero_sum_identity_checked() {
        let mut g = gen_posg(PosgKind::Generic, 2, 2, 2, 2, 2, Sharing::Full, true, 1).unwrap();
        assert!(g.validate().is_empty());
        g.rewards[1][0][0][0] = (g.rewards[1][0][0][0] + 0.5) % 1.0;
        assert!(g.validate().iter().any(|v| v.location.starts_with("r1+r2")));
    }
}
