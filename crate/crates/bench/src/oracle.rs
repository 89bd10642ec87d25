//! Exhaustive search over `{−1,1}ⁿ`.

use dcra_core::{true_objective, Error, ProblemInstance, Result};
use nalgebra::DVector;

pub const DEFAULT_CAP: usize = 22;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub z: Vec<f64>,
    pub objective: f64,
}

fn check_cap(inst: &ProblemInstance, n_cap: usize) -> Result<()> {
    if inst.n() > n_cap {
        return Err(Error::InvalidInstance(format!(
            "exhaustive search limited to n <= {n_cap}, instance has n = {}",
            inst.n()
        )));
    }
    Ok(())
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Gray-code enumeration: each step flips one coordinate and updates the
/// residual with one column of `A`. Ties go to the lexicographically
/// smallest sign vector (with `−1 < +1`).
pub fn brute_force_oracle(inst: &ProblemInstance, n_cap: usize) -> Result<OracleResult> {
    check_cap(inst, n_cap)?;
    let n = inst.n();
    let a = inst.a();
    let mut z = vec![-1.0; n];
    let mut res = a * DVector::from_column_slice(&z) - inst.b();
    let loss = inst.loss();

    let mut best_z = z.clone();
    let mut best = loss.value(res.as_slice())?;
    let total: u64 = 1 << n;
    for step in 1..total {
        let j = step.trailing_zeros() as usize;
        z[j] = -z[j];
        // flipping z_j by ±2 moves the residual by ±2·A_j
        res.axpy(2.0 * z[j], &a.column(j), 1.0);
        if step % 65536 == 0 {
            res = a * DVector::from_column_slice(&z) - inst.b();
        }
        let val = loss.value(res.as_slice())?;
        let tol = 1e-12 * best.abs().max(1.0);
        if val < best - tol || (val <= best + tol && lex_less(&z, &best_z)) {
            best = val.min(best);
            best_z.copy_from_slice(&z);
        }
    }
    let objective = true_objective(inst, &best_z)?;
    Ok(OracleResult {
        z: best_z,
        objective,
    })
}

/// Direct enumeration in lexicographic order, each point evaluated from scratch.
pub fn naive_oracle(inst: &ProblemInstance, n_cap: usize) -> Result<OracleResult> {
    check_cap(inst, n_cap)?;
    let n = inst.n();
    let mut best: Option<OracleResult> = None;
    for code in 0u64..(1 << n) {
        let z: Vec<f64> = (0..n)
            .map(|i| if code >> (n - 1 - i) & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        let val = true_objective(inst, &z)?;
        let better = match &best {
            None => true,
            Some(b) => val < b.objective - 1e-12 * b.objective.abs().max(1.0),
        };
        if better {
            best = Some(OracleResult { z, objective: val });
        }
    }
    Ok(best.expect("at least one sign vector"))
}
