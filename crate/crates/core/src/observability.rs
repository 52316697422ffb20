//! Observability constant of an emission matrix.
//!
//! `gamma = min ||Obs^T z||_1` over zero-sum directions with `||z||_1 = 1`.
//! Fixing the sign of every coordinate of `z` turns the problem into a linear
//! program; the minimum over all sign patterns is exact. Patterns come in
//! mirrored pairs, so only those with `z_0 >= 0` are solved.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ROW_TOL;

/// Largest state count solved exactly (one LP per sign pattern).
pub const EXACT_MAX_STATES: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Observability {
    pub gamma: f64,
    /// `false` when `gamma` is only the pairwise upper bound.
    pub exact: bool,
}

pub fn estimate_observability(emission: &[Vec<f64>]) -> Result<Observability> {
    let s_n = emission.len();
    if s_n == 0 {
        return Err(Error::InvalidArgument("empty emission matrix".into()));
    }
    let o_n = emission[0].len();
    for (s, row) in emission.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if row.len() != o_n || row.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidArgument(format!("emission row {s} is not a distribution")));
        }
    }
    if s_n == 1 {
        return Ok(Observability { gamma: 1.0, exact: true });
    }
    if s_n > EXACT_MAX_STATES {
        return Ok(Observability { gamma: pairwise_bound(emission), exact: false });
    }
    let mut best = pairwise_bound(emission);
    for mask in 1u32..(1u32 << (s_n - 1)) {
        // bit set => coordinate s+1 is nonpositive; coordinate 0 is always nonnegative
        let negative: Vec<bool> = (0..s_n).map(|s| s > 0 && mask & (1 << (s - 1)) != 0).collect();
        best = best.min(solve_pattern(emission, &negative)?);
    }
    Ok(Observability { gamma: best.max(0.0), exact: true })
}

/// `min_{s != s'} 0.5 ||Obs(s) - Obs(s')||_1`, an upper bound on gamma.
pub fn pairwise_bound(emission: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..emission.len() {
        for j in i + 1..emission.len() {
            let d: f64 = emission[i].iter().zip(&emission[j]).map(|(a, b)| (a - b).abs()).sum();
            best = best.min(0.5 * d);
        }
    }
    best
}

fn solve_pattern(emission: &[Vec<f64>], negative: &[bool]) -> Result<f64> {
    let o_n = emission[0].len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let z: Vec<_> = negative
        .iter()
        .map(|&neg| if neg { lp.add_var(0.0, (f64::NEG_INFINITY, 0.0)) } else { lp.add_var(0.0, (0.0, f64::INFINITY)) })
        .collect();
    let t: Vec<_> = (0..o_n).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let pos: Vec<_> = z.iter().zip(negative).filter(|(_, &n)| !n).map(|(&v, _)| (v, 1.0)).collect();
    let neg: Vec<_> = z.iter().zip(negative).filter(|(_, &n)| n).map(|(&v, _)| (v, 1.0)).collect();
    lp.add_constraint(pos.as_slice(), ComparisonOp::Eq, 0.5);
    lp.add_constraint(neg.as_slice(), ComparisonOp::Eq, -0.5);
    for o in 0..o_n {
        let mut upper = vec![(t[o], 1.0)];
        let mut lower = vec![(t[o], 1.0)];
        for (s, &v) in z.iter().enumerate() {
            upper.push((v, -emission[s][o]));
            lower.push((v, emission[s][o]));
        }
        lp.add_constraint(upper.as_slice(), ComparisonOp::Ge, 0.0);
        lp.add_constraint(lower.as_slice(), ComparisonOp::Ge, 0.0);
    }
    let sol = lp.solve().map_err(|e| Error::Lp(e.to_string()))?;
    Ok(sol.objective())
}
