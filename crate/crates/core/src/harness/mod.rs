//! Random instances and enumeration oracles, plus the experiment runner with its plots.

pub mod gen;
pub mod oracles;
pub mod plot;
pub mod runner;
