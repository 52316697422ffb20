//! One-shot Bayesian games solved by no-regret dynamics.

use serde::{Deserialize, Serialize};

use super::{join_index, split_index, Law};
use crate::error::{Error, Result};
use crate::util::{argmax, normalize, one_hot, uniform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Concept {
    Ne,
    Cce,
    Ce,
}

/// One joint type profile with its probability and payoffs `[agent][joint action]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeCell {
    pub types: Vec<usize>,
    pub prob: f64,
    pub payoff: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BayesianGame {
    pub actions: Vec<usize>,
    pub types: Vec<usize>,
    pub cells: Vec<TypeCell>,
    /// Payoffs lie in `[0, scale]`.
    pub scale: f64,
}

impl BayesianGame {
    fn joint_actions(&self) -> usize {
        self.actions.iter().product()
    }

    /// `P(t_i = t)` per agent.
    fn type_marginals(&self) -> Vec<Vec<f64>> {
        let mut m: Vec<Vec<f64>> = self.types.iter().map(|&k| vec![0.0; k]).collect();
        for c in &self.cells {
            for (i, &t) in c.types.iter().enumerate() {
                m[i][t] += c.prob;
            }
        }
        m
    }
}

/// Uniform mixture over product prescriptions: `members[m][i][t]` is a distribution over `A_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub members: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Profile {
    pub fn uniform(actions: &[usize], types: &[usize]) -> Self {
        Profile { members: vec![actions.iter().zip(types).map(|(&a, &t)| vec![uniform(a); t]).collect()] }
    }

    /// The step law once every agent's type is known.
    pub fn law(&self, types: &[usize]) -> Law {
        let w = 1.0 / self.members.len() as f64;
        self.members.iter().map(|m| (w, m.iter().zip(types).map(|(rows, &t)| rows[t].clone()).collect())).collect()
    }

    /// Average of each agent's prescriptions, as a single product profile.
    pub fn marginalize(&self) -> Profile {
        let k = self.members.len() as f64;
        let mut avg = self.members[0].clone();
        for m in &self.members[1..] {
            for (ai, mi) in avg.iter_mut().zip(m) {
                for (row, r) in ai.iter_mut().zip(mi) {
                    for (x, y) in row.iter_mut().zip(r) {
                        *x += y;
                    }
                }
            }
        }
        for row in avg.iter_mut().flatten() {
            for x in row.iter_mut() {
                *x /= k;
            }
        }
        Profile { members: vec![avg] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub concept: Concept,
    pub rounds: usize,
    /// Required for `Concept::Ne`.
    pub zero_sum: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { concept: Concept::Cce, rounds: 2000, zero_sum: false }
    }
}

/// Expected payoff of agent `i` for each own action, per own type, against the
/// others' current product strategy: `u[t][a_i]`, conditioned on the type.
fn utilities(game: &BayesianGame, strat: &[Vec<Vec<f64>>], i: usize, type_prob: &[f64]) -> Vec<Vec<f64>> {
    let mut u = vec![vec![0.0; game.actions[i]]; game.types[i]];
    for c in &game.cells {
        if c.prob <= 0.0 {
            continue;
        }
        let t = c.types[i];
        for a in 0..game.joint_actions() {
            let parts = split_index(a, &game.actions);
            let w: f64 = (0..parts.len()).filter(|&j| j != i).map(|j| strat[j][c.types[j]][parts[j]]).product();
            if w > 0.0 {
                u[t][parts[i]] += c.prob * w * c.payoff[i][a] / type_prob[t];
            }
        }
    }
    u
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    normalize(&mut p);
    p
}

/// Stationary distribution `q = q M` of a positive row-stochastic matrix.
fn stationary(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    let mut q = uniform(n);
    for _ in 0..10_000 {
        let mut next = vec![0.0; n];
        for (b, row) in m.iter().enumerate() {
            for (x, p) in next.iter_mut().zip(row) {
                *x += q[b] * p;
            }
        }
        let diff: f64 = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum();
        q = next;
        if diff < 1e-15 {
            break;
        }
    }
    normalize(&mut q);
    q
}

/// Solves the game with Hedge dynamics over `rounds` rounds.
///
/// CCE: independent Hedge per (agent, type); the output mixes the round profiles.
/// CE: swap-regret dynamics per (agent, type), one Hedge learner per recommendation.
/// NE: two-player zero-sum self-play Hedge, returning the averaged marginals.
/// A single agent gets its best prescription directly.
pub fn bayesian_solver(game: &BayesianGame, cfg: &SolverConfig) -> Result<Profile> {
    let n = game.actions.len();
    if cfg.rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be positive".into()));
    }
    if cfg.concept == Concept::Ne && (n != 2 || !cfg.zero_sum) {
        return Err(Error::Unsupported("Nash solving needs a two-player zero-sum game".into()));
    }
    let tp = game.type_marginals();
    if n == 1 {
        let init: Vec<Vec<Vec<f64>>> = vec![vec![uniform(game.actions[0]); game.types[0]]];
        let u = utilities(game, &init, 0, &tp[0]);
        let rows = u.iter().map(|row| one_hot(game.actions[0], argmax(row))).collect();
        return Ok(Profile { members: vec![vec![rows]] });
    }
    if cfg.concept == Concept::Ne && game.types.iter().all(|&t| t == 1) {
        return matrix_game_lp(game);
    }
    let scale = game.scale.max(1e-12);
    let eta: Vec<f64> = game.actions.iter().map(|&a| (8.0 * (a as f64).ln().max(1e-12) / cfg.rounds as f64).sqrt() / scale).collect();
    // logits[i][t][rec][a]; CCE and NE use rec = 0 only
    let recs = |i: usize| if cfg.concept == Concept::Ce { game.actions[i] } else { 1 };
    let mut logits: Vec<Vec<Vec<Vec<f64>>>> =
        (0..n).map(|i| vec![vec![vec![0.0; game.actions[i]]; recs(i)]; game.types[i]]).collect();
    let mut members = Vec::with_capacity(cfg.rounds);
    let mut sum: Vec<Vec<Vec<f64>>> = (0..n).map(|i| vec![vec![0.0; game.actions[i]]; game.types[i]]).collect();
    for _ in 0..cfg.rounds {
        let mut weights_per_rec = Vec::with_capacity(n);
        let strat: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|i| {
                let (rows, per_rec): (Vec<Vec<f64>>, Vec<Vec<f64>>) = logits[i]
                    .iter()
                    .map(|by_rec| {
                        let m: Vec<Vec<f64>> = by_rec.iter().map(|l| softmax(l)).collect();
                        if m.len() == 1 {
                            (m[0].clone(), vec![1.0])
                        } else {
                            let q = stationary(&m);
                            (q.clone(), q)
                        }
                    })
                    .unzip();
                weights_per_rec.push(per_rec);
                rows
            })
            .collect();
        for i in 0..n {
            let u = utilities(game, &strat, i, &tp[i]);
            for (t, ut) in u.iter().enumerate() {
                if tp[i][t] <= 0.0 {
                    continue;
                }
                for (b, l) in logits[i][t].iter_mut().enumerate() {
                    let q = weights_per_rec[i][t][b];
                    for (x, g) in l.iter_mut().zip(ut) {
                        *x += eta[i] * q * g;
                    }
                }
            }
        }
        if cfg.concept == Concept::Ne {
            for (si, st) in sum.iter_mut().zip(&strat) {
                for (row, r) in si.iter_mut().zip(st) {
                    for (x, y) in row.iter_mut().zip(r) {
                        *x += y;
                    }
                }
            }
        } else {
            members.push(strat);
        }
    }
    if cfg.concept == Concept::Ne {
        for row in sum.iter_mut().flatten() {
            normalize(row);
        }
        return Ok(Profile { members: vec![sum] });
    }
    Ok(Profile { members })
}

/// Maximin mixed strategy of the row player for `payoff[row][col]`.
fn maximin(payoff: &[Vec<f64>]) -> Result<Vec<f64>> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let value = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let x: Vec<_> = payoff.iter().map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    for col in 0..payoff[0].len() {
        let mut terms: Vec<_> = x.iter().zip(payoff).map(|(&v, row)| (v, row[col])).collect();
        terms.push((value, -1.0));
        lp.add_constraint(terms.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let ones: Vec<_> = x.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(ones.as_slice(), ComparisonOp::Eq, 1.0);
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    let mut p: Vec<f64> = x.iter().map(|&v| sol[v].max(0.0)).collect();
    normalize(&mut p);
    Ok(p)
}

/// Exact Nash equilibrium of a two-player constant-sum game with one type each,
/// solved on `(r_1 - r_2) / 2`.
fn matrix_game_lp(game: &BayesianGame) -> Result<Profile> {
    let (a0, a1) = (game.actions[0], game.actions[1]);
    let pay = &game.cells[0].payoff;
    let diff = |x: usize, y: usize| (pay[0][x + a0 * y] - pay[1][x + a0 * y]) / 2.0;
    let rows: Vec<Vec<f64>> = (0..a0).map(|x| (0..a1).map(|y| diff(x, y)).collect()).collect();
    let cols: Vec<Vec<f64>> = (0..a1).map(|y| (0..a0).map(|x| -diff(x, y)).collect()).collect();
    Ok(Profile { members: vec![vec![vec![maximin(&rows)?], vec![maximin(&cols)?]]] })
}

/// Expected payoff of each agent under the profile.
pub fn profile_values(game: &BayesianGame, profile: &Profile) -> Vec<f64> {
    let n = game.actions.len();
    let mut v = vec![0.0; n];
    for c in &game.cells {
        let law = profile.law(&c.types);
        for a in 0..game.joint_actions() {
            let p = super::law_prob(&law, &split_index(a, &game.actions));
            for (i, vi) in v.iter_mut().enumerate() {
                *vi += c.prob * p * c.payoff[i][a];
            }
        }
    }
    v
}

/// Largest gain from a unilateral deviation: by type for NE/CCE, by (type,
/// recommendation) for CE.
pub fn bayesian_gap(game: &BayesianGame, profile: &Profile, concept: Concept) -> f64 {
    let n = game.actions.len();
    let values = profile_values(game, profile);
    let mut gap = 0.0f64;
    for i in 0..n {
        let recs = if concept == Concept::Ce { game.actions[i] } else { 1 };
        // dev[t][rec][a']
        let mut dev = vec![vec![vec![0.0; game.actions[i]]; recs]; game.types[i]];
        for c in &game.cells {
            let law = profile.law(&c.types);
            for a in 0..game.joint_actions() {
                let parts = split_index(a, &game.actions);
                for rec in 0..recs {
                    let mut p = parts.clone();
                    p[i] = rec;
                    let w = super::others_prob(&law, &p, i, concept == Concept::Ce);
                    if w <= 0.0 || parts[i] != 0 {
                        continue;
                    }
                    for (alt, d) in dev[c.types[i]][rec].iter_mut().enumerate() {
                        let mut q = parts.clone();
                        q[i] = alt;
                        *d += c.prob * w * c.payoff[i][join_index(&q, &game.actions)];
                    }
                }
            }
        }
        let best: f64 = dev.iter().flatten().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).sum();
        gap = gap.max(best - values[i]);
    }
    gap.max(0.0)
}
