//! Tabular POMDP and MDP models.
//!
//! Steps are 1-based in every accessor (`h` runs over `1..=H`); the stored
//! arrays are 0-based, so `transition[h - 1]` holds the kernel used at step `h`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that rows are distributions.
pub const ROW_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pomdp {
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    #[serde(rename = "O")]
    pub observations: usize,
    pub mu1: Vec<f64>,
    /// `[h][s][a][s']`
    #[serde(rename = "T")]
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[h][s][o]`
    #[serde(rename = "Obs")]
    pub emission: Vec<Vec<Vec<f64>>>,
    /// `[h][s][a]`
    pub r: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mdp {
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "S")]
    pub states: usize,
    #[serde(rename = "A")]
    pub actions: usize,
    pub mu1: Vec<f64>,
    #[serde(rename = "T")]
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    pub r: Vec<Vec<Vec<f64>>>,
}

impl Pomdp {
    /// Model with uniform kernels and zero reward.
    pub fn uniform(horizon: usize, states: usize, actions: usize, observations: usize) -> Self {
        let us = vec![1.0 / states as f64; states];
        let uo = vec![1.0 / observations as f64; observations];
        Pomdp {
            horizon,
            states,
            actions,
            observations,
            mu1: us.clone(),
            transition: vec![vec![vec![us; actions]; states]; horizon],
            emission: vec![vec![uo; states]; horizon],
            r: vec![vec![vec![0.0; actions]; states]; horizon],
        }
    }

    #[inline]
    pub fn trans(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transition[h - 1][s][a]
    }

    #[inline]
    pub fn emit(&self, h: usize, s: usize) -> &[f64] {
        &self.emission[h - 1][s]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.r[h - 1][s][a]
    }

    pub fn mdp(&self) -> Mdp {
        Mdp {
            horizon: self.horizon,
            states: self.states,
            actions: self.actions,
            mu1: self.mu1.clone(),
            transition: self.transition.clone(),
            r: self.r.clone(),
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        let (hh, s_n, a_n, o_n) = (self.horizon, self.states, self.actions, self.observations);
        if hh == 0 || s_n == 0 || a_n == 0 || o_n == 0 {
            report.push(Violation::shape("sizes must be positive"));
            return report;
        }
        check_row(&mut report, "mu1".into(), &self.mu1, s_n);
        if self.transition.len() != hh || self.emission.len() != hh || self.r.len() != hh {
            report.push(Violation::shape("per-step arrays must have H entries"));
            return report;
        }
        for h in 0..hh {
            check_kernel(&mut report, h, &self.transition[h], s_n, a_n);
            check_rewards(&mut report, h, &self.r[h], s_n, a_n);
            if self.emission[h].len() != s_n {
                report.push(Violation::shape(format!("Obs[h={}] has wrong state count", h + 1)));
                continue;
            }
            for (s, row) in self.emission[h].iter().enumerate() {
                check_row(&mut report, format!("Obs[h={}][s={s}]", h + 1), row, o_n);
            }
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        match report.first() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidModel(format!("{} ({} violations)", v, report.len()))),
        }
    }
}

impl Mdp {
    #[inline]
    pub fn trans(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transition[h - 1][s][a]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.r[h - 1][s][a]
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut report = Vec::new();
        if self.horizon == 0 || self.states == 0 || self.actions == 0 {
            report.push(Violation::shape("sizes must be positive"));
            return report;
        }
        check_row(&mut report, "mu1".into(), &self.mu1, self.states);
        if self.transition.len() != self.horizon || self.r.len() != self.horizon {
            report.push(Violation::shape("per-step arrays must have H entries"));
            return report;
        }
        for h in 0..self.horizon {
            check_kernel(&mut report, h, &self.transition[h], self.states, self.actions);
            check_rewards(&mut report, h, &self.r[h], self.states, self.actions);
        }
        report
    }
}

/// One failed invariant: where it failed and by how much.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub location: String,
    pub deviation: f64,
}

impl Violation {
    fn shape(msg: impl Into<String>) -> Self {
        Violation { location: msg.into(), deviation: f64::NAN }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.deviation.is_nan() {
            write!(f, "{}", self.location)
        } else {
            write!(f, "{} off by {:.3e}", self.location, self.deviation)
        }
    }
}

pub(crate) fn check_row(report: &mut Vec<Violation>, location: String, row: &[f64], len: usize) {
    if row.len() != len {
        report.push(Violation::shape(format!("{location} has length {} instead of {len}", row.len())));
        return;
    }
    let most_negative = row.iter().cloned().fold(0.0, f64::min);
    if most_negative < 0.0 || row.iter().any(|x| !x.is_finite()) {
        report.push(Violation { location: location.clone(), deviation: -most_negative });
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL || !sum.is_finite() {
        report.push(Violation { location, deviation: (sum - 1.0).abs() });
    }
}

fn check_kernel(report: &mut Vec<Violation>, h: usize, kernel: &[Vec<Vec<f64>>], s_n: usize, a_n: usize) {
    if kernel.len() != s_n {
        report.push(Violation::shape(format!("T[h={}] has wrong state count", h + 1)));
        return;
    }
    for (s, per_a) in kernel.iter().enumerate() {
        if per_a.len() != a_n {
            report.push(Violation::shape(format!("T[h={}][s={s}] has wrong action count", h + 1)));
            continue;
        }
        for (a, row) in per_a.iter().enumerate() {
            check_row(report, format!("T[h={}][s={s}][a={a}]", h + 1), row, s_n);
        }
    }
}

pub(crate) fn check_rewards(report: &mut Vec<Violation>, h: usize, r: &[Vec<f64>], s_n: usize, a_n: usize) {
    if r.len() != s_n || r.iter().any(|x| x.len() != a_n) {
        report.push(Violation::shape(format!("r[h={}] has wrong shape", h + 1)));
        return;
    }
    for (s, per_a) in r.iter().enumerate() {
        for (a, &x) in per_a.iter().enumerate() {
            let dev = if x < 0.0 { -x } else if x > 1.0 { x - 1.0 } else if x.is_finite() { 0.0 } else { f64::INFINITY };
            if dev > 0.0 {
                report.push(Violation { location: format!("r[h={}][s={s}][a={a}]", h + 1), deviation: dev });
            }
        }
    }
}

/// Privileged trajectory: states run over `1..=H+1`, everything else over `1..=H`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Inverse-CDF draw from a finite distribution.
pub fn sample_categorical<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Model file wrapper tagged by `"kind"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Pomdp(Pomdp),
    Mdp(Mdp),
    Posg(crate::marl::Posg),
}

impl ModelFile {
    pub fn validate(&self) -> Vec<Violation> {
        match self {
            ModelFile::Pomdp(m) => m.validate(),
            ModelFile::Mdp(m) => m.validate(),
            ModelFile::Posg(m) => m.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_model_is_valid() {
        assert!(Pomdp::uniform(3, 2, 2, 2).validate().is_empty());
    }

    #[test]
    fn reports_bad_transition_row() {
        let mut m = Pomdp::uniform(2, 2, 2, 2);
        m.transition[0][1][0] = vec![0.6, 0.5];
        let report = m.validate();
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].location, "T[h=1][s=1][a=0]");
        assert!((report[0].deviation - 0.1).abs() < 1e-12);
    }

    #[test]
    fn reports_negative_reward() {
        let mut m = Pomdp::uniform(1, 2, 2, 2);
        m.r[0][0][1] = -0.2;
        let report = m.validate();
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].location, "r[h=1][s=0][a=1]");
        assert!((report[0].deviation - 0.2).abs() < 1e-12);
    }

    #[test]
    fn mdp_keeps_dynamics() {
        let mut m = Pomdp::uniform(2, 3, 2, 2);
        m.r[1][2][1] = 0.7;
        let mdp = m.mdp();
        assert_eq!(mdp.transition, m.transition);
        assert_eq!(mdp.r, m.r);
        assert!(mdp.validate().is_empty());
    }

    #[test]
    fn json_round_trip_uses_tagged_layout() {
        let m = Pomdp::uniform(1, 2, 2, 3);
        let text = serde_json::to_string(&ModelFile::Pomdp(m.clone())).unwrap();
        assert!(text.starts_with("{\"kind\":\"pomdp\",\"H\":1"));
        match serde_json::from_str::<ModelFile>(&text).unwrap() {
            ModelFile::Pomdp(back) => assert_eq!(back, m),
            _ => panic!("wrong kind"),
        }
    }
}
