//! Penalized low-rank relaxation solver for binary problems `min_{z ∈ {−1,1}ⁿ} f(Az − b)`.
//!
//! The binary vector is lifted to `X = VᵀV` with unit-column `V ∈ ℝ^{m×p}`,
//! the loss is replaced by its Moreau envelope, and the rank-one condition is
//! enforced by the penalty `ρ(‖V‖_F² − σ₁(V)²)` with `ρ` increased between
//! outer iterations. The final iterate is projected to rank one and rounded.
//!
//! ```
//! use dcra_core::{solve, certify, ProblemInstance, SeparableLoss, SolverConfig};
//! use nalgebra::{DMatrix, DVector};
//!
//! let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
//! let inst = ProblemInstance::new(a, DVector::from_vec(vec![0.5, -0.5]),
//!                                 SeparableLoss::l1(2).unwrap(), None).unwrap();
//! let cfg = SolverConfig { m: 2, seed: 1, ..Default::default() };
//! let out = solve(&inst, &cfg).unwrap();
//! let cert = certify(&inst, &out).unwrap();
//! assert_eq!(cert.z, vec![1.0, -1.0]);
//! ```

pub mod error;
pub mod io;
pub mod lifted;
pub mod prox;
pub mod rounding;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use lifted::{
    lifted_residual, spectral_subgradient, true_objective, FactorizedPoint, ProblemInstance,
    SmoothedObjective, SpectralSubgradient,
};
pub use prox::{LossBlock, SeparableLoss};
pub use rounding::{
    certify, descent_certificate, feasibility_gap, optimality_bound, rank_one_project,
    sign_round, Certificate, OptimalityBound,
};
pub use solver::{
    inner_step, project_columns, solve, solve_from, solve_inner, InnerTrace, OuterTrace,
    SolveOutcome, SolverConfig, Termination,
};
