//! Desk-scale laboratory for exploration with variational return-distribution
//! agents: a minimal reverse-mode autodiff core, factorized Gaussian parameter
//! distributions, Gaussian/categorical return heads, chain-MDP and classic
//! control benchmarks, and an experiment harness with CSV/SVG output.

pub mod agents;
pub mod envs;
pub mod harness;
pub mod numerics;
pub mod returns;
pub mod variational;
