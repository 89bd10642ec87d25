//! Instance generators, reference solvers and the benchmark harness.

pub mod baseline;
pub mod generators;
pub mod harness;
pub mod milp;
pub mod oracle;
pub mod hashing;
