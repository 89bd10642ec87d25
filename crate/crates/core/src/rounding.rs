//! Rank-one projection, sign rounding and the a-posteriori certificates.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifted::{true_objective, FactorizedPoint, ProblemInstance};
use crate::solver::{InnerTrace, SolveOutcome};
use crate::spectral::{leading_singular_pair, operator_norm};

/// `x̄ = σ₁(V)·P₁` with `x̄₀ ≥ 0`.
pub fn rank_one_project(point: &FactorizedPoint) -> Result<DVector<f64>> {
    let pair = leading_singular_pair(point.matrix())?;
    Ok(&pair.right * pair.sigma)
}

/// `z_j = sign(x̄_j / x̄₀)` for `j = 1..n`, zeros mapped to `+1`.
pub fn sign_round(x_bar: &[f64]) -> Result<Vec<f64>> {
    let (&head, rest) = x_bar
        .split_first()
        .ok_or_else(|| Error::InvalidPoint("empty rank-one projection".into()))?;
    if head == 0.0 || !head.is_finite() {
        return Err(Error::HomogenizationCollapse);
    }
    Ok(rest
        .iter()
        .map(|&x| if x / head < 0.0 { -1.0 } else { 1.0 })
        .collect())
}

/// `‖x̄∘x̄ − e‖₂`.
pub fn feasibility_gap(x_bar: &[f64]) -> f64 {
    x_bar
        .iter()
        .map(|x| (x * x - 1.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Lipschitz estimate of `X ↦ env(𝒜(X) − b)` in the Frobenius norm on symmetric `X`.
///
/// A symmetric perturbation moves the cross block by at most `‖ΔX‖_F/√2`.
pub fn envelope_lipschitz(inst: &ProblemInstance) -> f64 {
    operator_norm(inst.a()) / std::f64::consts::SQRT_2 * inst.loss().lipschitz()
}

/// Envelope objective at `x̄x̄ᵀ`, whose cross block is `x̄₀·x̄_{1:n}`.
pub fn envelope_at_projection(inst: &ProblemInstance, x_bar: &[f64], delta: f64) -> Result<f64> {
    crate::error::check_len("rank-one projection", inst.p(), x_bar.len())?;
    let cross = DVector::from_iterator(inst.n(), x_bar[1..].iter().map(|x| x * x_bar[0]));
    let res = inst.a() * cross - inst.b();
    inst.loss().envelope(res.as_slice(), delta)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub k_bar: usize,
    pub k_star: usize,
    pub rho_final: f64,
    pub rho_star: f64,
    pub rank_star: usize,
    pub p: usize,
    pub lipschitz: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalityBound {
    /// `ρ_k̄(p − 1) + ρ_{k*}(1 − p/r*) + (L − ρ_k̄)ε`.
    pub closed: f64,
    /// Sharper form using the recorded penalties and `σ₁²` along the run.
    pub telescoped: f64,
    pub inputs: BoundInputs,
}

/// Outer index in `0..k̄` minimizing `f̃(V^k)`.
pub fn best_smooth_index(trace: &crate::solver::OuterTrace) -> Option<usize> {
    (0..trace.final_index())
        .filter_map(|k| trace.summary(k).map(|s| (k, s.smooth)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

/// Upper bounds on `f̂(x̄x̄ᵀ) − f̃(V^{k*})` at the final iterate.
pub fn optimality_bound(
    trace: &crate::solver::OuterTrace,
    k_star: usize,
    lipschitz: f64,
    eps: f64,
) -> Result<OptimalityBound> {
    let k_bar = trace.final_index();
    if k_star >= k_bar {
        return Err(Error::IncompleteTrace(format!(
            "an outer index k* = {k_star} below k̄ = {k_bar}"
        )));
    }
    let missing = |what: String| Error::IncompleteTrace(what);
    let rho = |k: usize| trace.rho(k).ok_or_else(|| missing(format!("penalty ρ_{k}")));
    let sigma1_sq = |k: usize| {
        trace
            .summary(k)
            .map(|s| s.sigma1_sq)
            .ok_or_else(|| missing(format!("iterate summary {k}")))
    };
    let rank_star = trace
        .summary(k_star)
        .ok_or_else(|| missing(format!("iterate summary {k_star}")))?
        .rank;
    if rank_star == 0 {
        return Err(missing("a nonzero rank at k*".into()));
    }
    let p = trace.p as f64;
    let rho_final = rho(k_bar)?;
    let rho_star = rho(k_star)?;
    let ratio = p / rank_star as f64;

    let mut sum = 0.0;
    for j in k_star..k_bar {
        sum += (rho(j)? - rho(j + 1)?) * sigma1_sq(j + 1)?;
    }
    let telescoped = rho_final * sigma1_sq(k_bar)? - rho_star * ratio + sum + lipschitz * eps;
    let closed = rho_final * (p - 1.0) + rho_star * (1.0 - ratio) + (lipschitz - rho_final) * eps;

    Ok(OptimalityBound {
        closed,
        telescoped,
        inputs: BoundInputs {
            k_bar,
            k_star,
            rho_final,
            rho_star,
            rank_star,
            p: trace.p,
            lipschitz,
            eps,
        },
    })
}

/// One maximal run of inner steps taken with the same curvature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub start: usize,
    pub len: usize,
    pub curvature: f64,
    /// Largest local curvature observed in the segment.
    pub curvature_estimate: f64,
    pub sum_step_sq: f64,
    /// `2(Φ_first − Φ_last)/(L − L_est)`, infinite when `L ≤ L_est`.
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub segments: Vec<SegmentReport>,
    pub holds: bool,
    pub min_slack: f64,
}

/// Check `Σ‖Δ‖² ≤ 2(Φ_first − Φ_last)/(L − L_est)` on each fixed-curvature segment.
pub fn descent_certificate(trace: &InnerTrace) -> Result<DescentReport> {
    if !trace.recorded {
        return Err(Error::IncompleteTrace("recorded inner steps".into()));
    }
    let rows = &trace.rows;
    let mut segments = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let curvature = rows[start].curvature;
        let mut end = start;
        while end < rows.len() && rows[end].curvature == curvature {
            end += 1;
        }
        let seg = &rows[start..end];
        let sum_step_sq: f64 = seg.iter().map(|r| r.step_sq).sum();
        let curvature_estimate = seg
            .iter()
            .map(|r| r.local_curvature)
            .fold(f64::NEG_INFINITY, f64::max);
        let drop = seg[0].phi_before - seg[seg.len() - 1].phi_after;
        let margin = curvature - curvature_estimate;
        let bound = if margin > 0.0 {
            2.0 * drop / margin
        } else {
            f64::INFINITY
        };
        let tol = 1e-9 * (1.0 + sum_step_sq);
        let slack = bound - sum_step_sq;
        segments.push(SegmentReport {
            start,
            len: seg.len(),
            curvature,
            curvature_estimate,
            sum_step_sq,
            bound,
            slack,
            holds: slack >= -tol,
        });
        start = end;
    }
    let holds = segments.iter().all(|s| s.holds);
    let min_slack = segments
        .iter()
        .map(|s| s.slack)
        .fold(f64::INFINITY, f64::min);
    let min_slack = if segments.is_empty() { 0.0 } else { min_slack };
    Ok(DescentReport {
        segments,
        holds,
        min_slack,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub x_bar: Vec<f64>,
    pub z: Vec<f64>,
    pub feas_gap: f64,
    pub env_obj_rounded: f64,
    pub true_obj: f64,
    /// `f̃(V^{k*})`, the reference value the bound is measured from.
    pub smooth_at_k_star: Option<f64>,
    pub gap_bound: Option<OptimalityBound>,
}

/// Round the final iterate of a run and evaluate its certificates.
///
/// The optimality bound needs at least one completed outer step before `k̄`;
/// otherwise it is omitted.
pub fn certify(inst: &ProblemInstance, outcome: &SolveOutcome) -> Result<Certificate> {
    let trace = &outcome.trace;
    let x_bar = rank_one_project(&outcome.point)?;
    let z = sign_round(x_bar.as_slice())?;
    let feas_gap = feasibility_gap(x_bar.as_slice());
    let env_obj_rounded = envelope_at_projection(inst, x_bar.as_slice(), trace.delta)?;
    let true_obj = true_objective(inst, &z)?;
    let eps = trace.final_gap();
    let k_star = best_smooth_index(trace);
    let gap_bound = match k_star {
        Some(k) => Some(optimality_bound(trace, k, envelope_lipschitz(inst), eps)?),
        None => None,
    };
    let smooth_at_k_star = k_star
        .and_then(|k| trace.summary(k))
        .map(|s| s.smooth);
    Ok(Certificate {
        x_bar: x_bar.as_slice().to_vec(),
        z,
        feas_gap,
        env_obj_rounded,
        true_obj,
        smooth_at_k_star,
        gap_bound,
    })
}
