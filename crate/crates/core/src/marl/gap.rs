//! Exact values, best responses and equilibrium gaps by enumeration of joint histories.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::info::{info_split, CommonInfo};
use super::solver::Concept;
use super::{law_prob, others_prob, JointPolicy, Law, Posg};
use crate::belief::Memory;
use crate::error::{Error, Result};

type Node = (Memory, usize);
type Layer = BTreeMap<Node, f64>;
/// Agent-level information set: common information and own private part.
type InfoKey = (CommonInfo, Option<usize>);

/// Reward-like quantity `f(h, history, state, joint action)`.
pub type StepValue<'a> = &'a dyn Fn(usize, &Memory, usize, usize) -> f64;

fn first_layer(posg: &Posg) -> Layer {
    let m = &posg.model;
    let mut layer = Layer::new();
    for s in 0..m.states {
        for o in 0..m.observations {
            let w = m.mu1[s] * m.emit(1, s)[o];
            if w > 0.0 {
                *layer.entry((Memory::start(o), s)).or_insert(0.0) += w;
            }
        }
    }
    layer
}

fn push_children(posg: &Posg, h: usize, node: &Node, a: usize, w: f64, next: &mut Layer) {
    let m = &posg.model;
    for (s2, &pt) in m.trans(h, node.1, a).iter().enumerate() {
        if pt <= 0.0 {
            continue;
        }
        for (o2, &po) in m.emit(h + 1, s2).iter().enumerate() {
            if po > 0.0 {
                *next.entry((node.0.push(a, o2, usize::MAX), s2)).or_insert(0.0) += w * pt * po;
            }
        }
    }
}

fn check_cap(layer: &Layer, cap: usize) -> Result<()> {
    if layer.len() > cap {
        return Err(Error::CapExceeded { needed: layer.len() as u128, cap: cap as u128 });
    }
    Ok(())
}

/// `E[sum_h f(h, history, s_h, a_h)]` with every agent following the policy.
pub fn expected_total(posg: &Posg, policy: &dyn JointPolicy, f: StepValue, cap: usize) -> Result<f64> {
    let mut layer = first_layer(posg);
    let mut total = 0.0;
    let layout = &posg.layout;
    for h in 1..=posg.model.horizon {
        check_cap(&layer, cap)?;
        let mut next = Layer::new();
        for (node, &w) in &layer {
            let law = policy.law(h, &node.0, node.1)?;
            for a in 0..layout.joint_actions() {
                let p = law_prob(&law, &layout.split_action(a));
                if p <= 0.0 {
                    continue;
                }
                total += w * p * f(h, &node.0, node.1, a);
                if h < posg.model.horizon {
                    push_children(posg, h, node, a, w * p, &mut next);
                }
            }
        }
        layer = next;
    }
    Ok(total)
}

/// Exact value of every agent.
pub fn policy_values(posg: &Posg, policy: &dyn JointPolicy, cap: usize) -> Result<Vec<f64>> {
    (0..posg.n)
        .map(|i| expected_total(posg, policy, &|h, _, s, a| posg.reward(i, h, s, a), cap))
        .collect()
}

fn info_key(posg: &Posg, hist: &Memory, agent: usize) -> Result<InfoKey> {
    let info = info_split(&posg.layout, hist)?;
    Ok((info.common, info.private[agent]))
}

/// Parent history and the joint action that led to `hist`.
fn parent(hist: &Memory) -> (Memory, usize) {
    let mut p = hist.clone();
    let a = p.actions.pop().expect("child history has an action");
    p.observations.pop();
    (p, a)
}

/// `max` over history-dependent policies of `agent` of `E[sum_h f]`, with the
/// other agents following `policy` (ignoring the agent's own part of the law).
pub fn best_deviation(posg: &Posg, policy: &dyn JointPolicy, agent: usize, f: StepValue, cap: usize) -> Result<f64> {
    let layout = &posg.layout;
    let hh = posg.model.horizon;
    let a_i = layout.actions[agent];
    let mut layers = vec![first_layer(posg)];
    let mut laws: Vec<BTreeMap<Node, Law>> = Vec::new();
    for h in 1..=hh {
        check_cap(&layers[h - 1], cap)?;
        let mut next = Layer::new();
        let mut lw = BTreeMap::new();
        for (node, &w) in &layers[h - 1] {
            let law = policy.law(h, &node.0, node.1)?;
            if h < hh {
                for a in 0..layout.joint_actions() {
                    let p = others_prob(&law, &layout.split_action(a), agent, false);
                    if p > 0.0 {
                        push_children(posg, h, node, a, w * p, &mut next);
                    }
                }
            }
            lw.insert(node.clone(), law);
        }
        laws.push(lw);
        if h < hh {
            layers.push(next);
        }
    }
    let mut upper: BTreeMap<InfoKey, (f64, Memory)> = BTreeMap::new();
    for h in (1..=hh).rev() {
        let mut scores: BTreeMap<InfoKey, (Vec<f64>, Memory)> = BTreeMap::new();
        for (node, &w) in &layers[h - 1] {
            let key = info_key(posg, &node.0, agent)?;
            let entry = scores.entry(key).or_insert_with(|| (vec![0.0; a_i], node.0.clone()));
            let law = &laws[h - 1][node];
            for a in 0..layout.joint_actions() {
                let parts = layout.split_action(a);
                let p = others_prob(law, &parts, agent, false);
                if p > 0.0 {
                    entry.0[parts[agent]] += w * p * f(h, &node.0, node.1, a);
                }
            }
        }
        for (u, rep) in upper.values() {
            let (ph, a) = parent(rep);
            let key = info_key(posg, &ph, agent)?;
            let own = layout.split_action(a)[agent];
            scores.get_mut(&key).expect("parent infoset exists").0[own] += u;
        }
        upper = scores
            .into_iter()
            .map(|(k, (row, rep))| (k, (row.iter().cloned().fold(f64::NEG_INFINITY, f64::max), rep)))
            .collect();
    }
    Ok(upper.values().map(|(u, _)| u).sum())
}

/// Best strategy modification of `agent`: a map from (information set,
/// recommended action) to a played action. The law must not depend on the state.
fn best_modification(posg: &Posg, policy: &dyn JointPolicy, agent: usize, cap: usize) -> Result<f64> {
    if policy.state_dependent() {
        return Err(Error::Unsupported("correlated-equilibrium gap needs a history-only policy".into()));
    }
    let layout = &posg.layout;
    let hh = posg.model.horizon;
    let a_i = layout.actions[agent];
    let mut layers = vec![first_layer(posg)];
    let mut laws: Vec<BTreeMap<Memory, Law>> = Vec::new();
    for h in 1..=hh {
        check_cap(&layers[h - 1], cap)?;
        let mut next = Layer::new();
        let mut lw = BTreeMap::new();
        for (node, &w) in &layers[h - 1] {
            if !lw.contains_key(&node.0) {
                lw.insert(node.0.clone(), policy.law(h, &node.0, node.1)?);
            }
            if h < hh {
                let law = &lw[&node.0];
                for a in 0..layout.joint_actions() {
                    if others_prob(law, &layout.split_action(a), agent, false) > 0.0 {
                        push_children(posg, h, node, a, w, &mut next);
                    }
                }
            }
        }
        laws.push(lw);
        if h < hh {
            layers.push(next);
        }
    }
    let mut upper: BTreeMap<InfoKey, (f64, Memory)> = BTreeMap::new();
    for h in (1..=hh).rev() {
        // scores[key][rec][played]
        let mut scores: BTreeMap<InfoKey, (Vec<Vec<f64>>, Memory)> = BTreeMap::new();
        for (node, &w) in &layers[h - 1] {
            let key = info_key(posg, &node.0, agent)?;
            let entry = scores.entry(key).or_insert_with(|| (vec![vec![0.0; a_i]; a_i], node.0.clone()));
            let law = &laws[h - 1][&node.0];
            for a in 0..layout.joint_actions() {
                let parts = layout.split_action(a);
                let p = others_prob(law, &parts, agent, true);
                if p <= 0.0 {
                    continue;
                }
                for played in 0..a_i {
                    let mut q = parts.clone();
                    q[agent] = played;
                    entry.0[parts[agent]][played] += w * p * posg.reward(agent, h, node.1, layout.join_action(&q));
                }
            }
        }
        for (u, rep) in upper.values() {
            let (ph, a) = parent(rep);
            let key = info_key(posg, &ph, agent)?;
            let parts = layout.split_action(a);
            let law = &laws[h - 1][&ph];
            let row = &mut scores.get_mut(&key).expect("parent infoset exists").0;
            for (rec, r) in row.iter_mut().enumerate() {
                let mut q = parts.clone();
                q[agent] = rec;
                r[parts[agent]] += others_prob(law, &q, agent, true) * u;
            }
        }
        upper = scores
            .into_iter()
            .map(|(k, (rows, rep))| {
                let v = rows.iter().map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).sum();
                (k, (v, rep))
            })
            .collect();
    }
    Ok(upper.values().map(|(u, _)| u).sum())
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    pub concept: Concept,
    /// `max(0, max_i (best deviation value - value))`.
    pub gap: f64,
    pub values: Vec<f64>,
    pub deviation_values: Vec<f64>,
}

/// NE and CCE gaps use best responses to the others' marginal law; the CE gap
/// uses the best strategy modification.
pub fn equilibrium_gap(posg: &Posg, policy: &dyn JointPolicy, concept: Concept, cap: usize) -> Result<EquilibriumReport> {
    let values = policy_values(posg, policy, cap)?;
    let deviation_values = (0..posg.n)
        .map(|i| match concept {
            Concept::Ce => best_modification(posg, policy, i, cap),
            _ => best_deviation(posg, policy, i, &|h, _, s, a| posg.reward(i, h, s, a), cap),
        })
        .collect::<Result<Vec<f64>>>()?;
    let gap = values.iter().zip(&deviation_values).map(|(v, d)| d - v).fold(0.0, f64::max);
    Ok(EquilibriumReport { concept, gap, values, deviation_values })
}

/// Distinct information sets of `agent` over reachable histories, per step.
pub fn infoset_counts(posg: &Posg, agent: usize, cap: usize) -> Result<Vec<usize>> {
    let layout = &posg.layout;
    let mut layer = first_layer(posg);
    let mut out = Vec::new();
    for h in 1..=posg.model.horizon {
        check_cap(&layer, cap)?;
        let keys: BTreeSet<InfoKey> = layer.keys().map(|n| info_key(posg, &n.0, agent)).collect::<Result<_>>()?;
        out.push(keys.len());
        let mut next = Layer::new();
        if h < posg.model.horizon {
            for (node, &w) in &layer {
                for a in 0..layout.joint_actions() {
                    push_children(posg, h, node, a, w, &mut next);
                }
            }
        }
        layer = next;
    }
    Ok(out)
}

/// Product law with fixed rows, for tests and fixtures.
#[derive(Clone, Debug)]
pub struct FixedLaw(pub Vec<Vec<Vec<f64>>>);

impl JointPolicy for FixedLaw {
    fn law(&self, h: usize, _history: &Memory, _state: usize) -> Result<Law> {
        Ok(vec![(1.0, self.0[h - 1].clone())])
    }
}
