//! Outer penalty loop and inner majorization–minimization loop.
//!
//! For a fixed penalty `ρ` the inner loop repeatedly minimizes the model
//!
//! ```text
//! ⟨∇f̃(V) + ρΓ(V), W⟩ + ρ‖W‖_F² + (L/2)‖W − V‖_F²   over unit-column W,
//! ```
//!
//! whose minimizer is the column-normalized `(L·V − ∇f̃(V) − ρΓ(V)) / (2ρ + L)`.
//! The outer loop grows `ρ` geometrically until `‖V‖_F² − σ₁(V)²` drops below
//! the outer tolerance.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};
use crate::lifted::{
    spectral_subgradient_of, FactorizedPoint, ProblemInstance, SmoothEval, SmoothedObjective,
    SpectralSubgradient,
};
use crate::spectral::numerical_rank;

pub const RANK_REL_TOL: f64 = 1e-8;
const CURVATURE_FLOOR: f64 = 1e-8;
const MAX_BACKTRACKS: usize = 80;
const PHI_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Number of rows of the factor `V`.
    pub m: usize,
    pub rho0: f64,
    /// Penalty growth factor, `> 1`.
    pub sigma: f64,
    pub rho_max: f64,
    /// Moreau parameter; `None` picks `0.1·(median|b| + 1)`.
    pub delta: Option<f64>,
    /// Outer stop tolerance on `‖V‖_F² − σ₁²`.
    pub eps_outer: f64,
    /// Inner stop tolerance on `‖V⁺ − V‖_F`.
    pub eps_inner: f64,
    pub k_max: usize,
    pub l_max: usize,
    /// Starting curvature; `None` uses `4‖A‖₁‖A‖_∞/δ`.
    pub l_init: Option<f64>,
    /// Halve the curvature after this many consecutive accepted steps (0 = never).
    pub shrink_every: usize,
    pub seed: u64,
    /// Keep one row per accepted inner step.
    pub record_inner: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            m: 5,
            rho0: 1.0,
            sigma: 1.2,
            rho_max: 1e6,
            delta: None,
            eps_outer: 1e-3,
            eps_inner: 1e-6,
            k_max: 200,
            l_max: 2000,
            l_init: None,
            shrink_every: 10,
            seed: 0,
            record_inner: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        check_positive("rho0", self.rho0)?;
        check_positive("rho_max", self.rho_max)?;
        if !(self.sigma > 1.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must exceed 1, got {}", self.sigma));
        }
        if self.rho0 > self.rho_max {
            return bad(format!(
                "rho0 = {} exceeds rho_max = {}",
                self.rho0, self.rho_max
            ));
        }
        if !(self.eps_outer > 0.0 && self.eps_outer < 1.0) {
            return bad(format!("eps_outer must lie in (0, 1), got {}", self.eps_outer));
        }
        check_positive("eps_inner", self.eps_inner)?;
        if let Some(d) = self.delta {
            check_positive("delta", d)?;
        }
        if let Some(l) = self.l_init {
            check_positive("l_init", l)?;
        }
        Ok(())
    }

    pub fn delta_for(&self, inst: &ProblemInstance) -> f64 {
        self.delta.unwrap_or_else(|| inst.default_delta())
    }

    pub fn initial_curvature(&self, inst: &ProblemInstance, delta: f64) -> f64 {
        self.l_init
            .unwrap_or_else(|| auto_curvature(inst, delta))
            .max(CURVATURE_FLOOR)
    }
}

/// `4‖A‖₁‖A‖_∞/δ`, a cheap overestimate of the smooth part's curvature.
pub fn auto_curvature(inst: &ProblemInstance, delta: f64) -> f64 {
    let a = inst.a();
    let col = a
        .column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let row = a
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    4.0 * col * row / delta
}

/// Normalize each column to unit length.
pub fn project_columns(mut m: DMatrix<f64>) -> Result<FactorizedPoint> {
    for (index, mut col) in m.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::ZeroColumn { index });
        }
        col /= norm;
    }
    FactorizedPoint::new(m)
}

/// Closed-form minimizer of the linearized model.
pub fn closed_form_update(
    v: &DMatrix<f64>,
    gradient: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    rho: f64,
    curvature: f64,
) -> Result<FactorizedPoint> {
    let numer = v * curvature - gradient - gamma * rho;
    project_columns(numer / (2.0 * rho + curvature))
}

pub fn inner_step(
    obj: &SmoothedObjective<'_>,
    point: &FactorizedPoint,
    curvature: f64,
) -> Result<FactorizedPoint> {
    check_positive("L", curvature)?;
    let grad = obj.smoothed_gradient(point)?;
    let sub = spectral_subgradient_of(point.matrix())?;
    closed_form_update(point.matrix(), &grad, &sub.gamma, obj.rho(), curvature)
}

/// `‖∇f̃(V⁺) − ∇f̃(V)‖_F + L‖V⁺ − V‖_F`, a majorant of the stationarity residual at `V⁺`.
pub fn stationarity_surrogate(
    obj: &SmoothedObjective<'_>,
    prev: &FactorizedPoint,
    next: &FactorizedPoint,
    curvature: f64,
) -> Result<f64> {
    let g_prev = obj.smoothed_gradient(prev)?;
    let g_next = obj.smoothed_gradient(next)?;
    Ok(surrogate_from(&g_prev, &g_next, prev.matrix(), next.matrix(), curvature))
}

fn surrogate_from(
    g_prev: &DMatrix<f64>,
    g_next: &DMatrix<f64>,
    v_prev: &DMatrix<f64>,
    v_next: &DMatrix<f64>,
    curvature: f64,
) -> f64 {
    (g_next - g_prev).norm() + curvature * (v_next - v_prev).norm()
}

/// One accepted inner step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerStep {
    pub l: usize,
    /// Curvature `L` used for the accepted step.
    pub curvature: f64,
    pub phi_before: f64,
    pub phi_after: f64,
    pub smooth_before: f64,
    pub smooth_after: f64,
    pub step_sq: f64,
    /// `2(f̃(V⁺) − f̃(V) − ⟨∇f̃(V), Δ⟩)/‖Δ‖²`.
    pub local_curvature: f64,
    pub backtracks: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStatus {
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerTrace {
    pub rows: Vec<InnerStep>,
    /// Whether `rows` was populated.
    pub recorded: bool,
    pub iterations: usize,
    pub status: InnerStatus,
    pub sum_step_sq: f64,
    pub last_step_norm: f64,
    pub phi_initial: f64,
    pub phi_final: f64,
}

/// State of the inner loop after it stops.
#[derive(Clone, Debug)]
pub struct InnerState {
    pub point: FactorizedPoint,
    pub l: usize,
    pub curvature: f64,
    pub last_step_norm: f64,
    pub phi: f64,
    pub smooth: f64,
    pub surrogate: f64,
    pub subgradient: SpectralSubgradient,
}

#[derive(Clone, Debug)]
pub struct InnerOutcome {
    pub state: InnerState,
    pub trace: InnerTrace,
}

impl InnerOutcome {
    /// `l_max` hit while still taking large steps.
    pub fn stalled(&self, eps_inner: f64) -> bool {
        self.trace.status == InnerStatus::MaxIterations
            && self.state.last_step_norm > 10.0 * eps_inner
    }
}

pub fn solve_inner(
    obj: &SmoothedObjective<'_>,
    start: FactorizedPoint,
    cfg: &SolverConfig,
) -> Result<InnerOutcome> {
    let l0 = cfg.initial_curvature(obj.instance(), obj.delta());
    solve_inner_from(obj, start, cfg, l0)
}

/// Inner loop starting from a given curvature estimate.
pub fn solve_inner_from(
    obj: &SmoothedObjective<'_>,
    start: FactorizedPoint,
    cfg: &SolverConfig,
    curvature: f64,
) -> Result<InnerOutcome> {
    check_positive("L", curvature)?;
    let rho = obj.rho();
    let mut point = start;
    let mut eval = obj.smooth_eval_of(point.matrix())?;
    let mut sub = spectral_subgradient_of(point.matrix())?;
    let mut phi = obj.value_with(eval.value, &sub.pair);
    let phi_initial = phi;

    let mut curvature = curvature.max(CURVATURE_FLOOR);
    let mut rows = Vec::new();
    let mut sum_step_sq = 0.0;
    let mut last_step_norm = f64::INFINITY;
    let mut surrogate = 0.0;
    let mut streak = 0usize;
    let mut status = InnerStatus::MaxIterations;
    let mut iterations = 0;

    for l in 0..cfg.l_max.max(1) {
        let mut backtracks = 0;
        let (cand, cand_eval, cand_sub, cand_phi, step_sq, linear) = loop {
            let cand = closed_form_update(point.matrix(), &eval.gradient, &sub.gamma, rho, curvature)?;
            let diff = cand.matrix() - point.matrix();
            let step_sq = diff.norm_squared();
            let linear = eval.gradient.dot(&diff);
            let cand_eval: SmoothEval = obj.smooth_eval_of(cand.matrix())?;
            let cand_sub = spectral_subgradient_of(cand.matrix())?;
            let cand_phi = obj.value_with(cand_eval.value, &cand_sub.pair);

            let f_slack = 1e-12 * eval.value.abs().max(1.0);
            let majorized =
                cand_eval.value <= eval.value + linear + 0.5 * curvature * step_sq + f_slack;
            let descended = cand_phi <= phi + PHI_SLACK;
            if (majorized && descended) || step_sq == 0.0 {
                break (cand, cand_eval, cand_sub, cand_phi, step_sq, linear);
            }
            backtracks += 1;
            streak = 0;
            curvature *= 2.0;
            if backtracks > MAX_BACKTRACKS {
                return Err(Error::InvalidConfig(format!(
                    "curvature backtracking failed to find descent (L = {curvature:e})"
                )));
            }
        };

        let local_curvature = if step_sq > 0.0 {
            2.0 * (cand_eval.value - eval.value - linear) / step_sq
        } else {
            0.0
        };
        if cfg.record_inner {
            rows.push(InnerStep {
                l,
                curvature,
                phi_before: phi,
                phi_after: cand_phi,
                smooth_before: eval.value,
                smooth_after: cand_eval.value,
                step_sq,
                local_curvature,
                backtracks,
            });
        }
        surrogate = surrogate_from(
            &eval.gradient,
            &cand_eval.gradient,
            point.matrix(),
            cand.matrix(),
            curvature,
        );
        sum_step_sq += step_sq;
        last_step_norm = step_sq.sqrt();
        point = cand;
        eval = cand_eval;
        sub = cand_sub;
        phi = cand_phi;
        iterations = l + 1;

        if last_step_norm <= cfg.eps_inner {
            status = InnerStatus::Converged;
            break;
        }
        streak += 1;
        if cfg.shrink_every > 0 && streak % cfg.shrink_every == 0 {
            curvature = (curvature * 0.5).max(CURVATURE_FLOOR);
        }
    }

    Ok(InnerOutcome {
        state: InnerState {
            point,
            l: iterations,
            curvature,
            last_step_norm,
            phi,
            smooth: eval.value,
            surrogate,
            subgradient: sub,
        },
        trace: InnerTrace {
            rows,
            recorded: cfg.record_inner,
            iterations,
            status,
            sum_step_sq,
            last_step_norm,
            phi_initial,
            phi_final: phi,
        },
    })
}

/// Seeded Gaussian start with unit columns and full row rank.
pub fn initial_point(p: usize, m: usize, seed: u64) -> Result<FactorizedPoint> {
    if m < 2 || m > p {
        return Err(Error::InvalidConfig(format!(
            "need 2 <= m <= p, got m = {m}, p = {p}"
        )));
    }
    for stream in 0..16u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let v = DMatrix::from_fn(m, p, |_, _| StandardNormal.sample(&mut rng));
        if numerical_rank(&v, RANK_REL_TOL) < m {
            continue;
        }
        if let Ok(point) = project_columns(v) {
            if numerical_rank(point.matrix(), RANK_REL_TOL) == m {
                return Ok(point);
            }
        }
    }
    Err(Error::InvalidConfig(
        "could not draw a full-rank starting point".into(),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GapReached,
    KMaxExceeded,
    InnerStall,
}

/// Summary statistics of one iterate `V^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    /// `f̃(V)`.
    pub smooth: f64,
    /// `σ₁(V)²`.
    pub sigma1_sq: f64,
    /// `‖V‖_F² − σ₁(V)²`.
    pub gap: f64,
    /// Numerical rank with cutoff `σ_i > 1e-8·σ₁`.
    pub rank: usize,
}

/// Outer iteration `k`, which maps `V^k` to `V^{k+1}` under penalty `ρ_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    pub rho: f64,
    pub inner_iterations: usize,
    /// Cumulative inner iterations through this outer step.
    pub l_total: usize,
    pub inner_status: InnerStatus,
    pub stalled: bool,
    /// Statistics of `V^{k+1}`.
    pub output: PointSummary,
    pub phi: f64,
    pub surrogate: f64,
    pub curvature: f64,
    /// `min_j |P₁,j|` at `V^{k+1}`.
    pub min_abs_direction: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterTrace {
    pub p: usize,
    pub delta: f64,
    pub sigma: f64,
    pub rho_max: f64,
    pub eps_outer: f64,
    /// Statistics of `V⁰`.
    pub initial: PointSummary,
    pub records: Vec<OuterRecord>,
    pub termination: Termination,
    /// Per-outer inner traces, present when `record_inner` was set.
    pub inner: Vec<InnerTrace>,
}

impl OuterTrace {
    /// Index `k̄` of the final iterate `V^{k̄}`.
    pub fn final_index(&self) -> usize {
        self.records.len()
    }

    /// Statistics of `V^k` for `k = 0..=k̄`.
    pub fn summary(&self, k: usize) -> Option<&PointSummary> {
        if k == 0 {
            Some(&self.initial)
        } else {
            self.records.get(k - 1).map(|r| &r.output)
        }
    }

    /// `ρ_k` for `k = 0..=k̄`; `ρ_{k̄}` continues the schedule past the last record.
    pub fn rho(&self, k: usize) -> Option<f64> {
        match self.records.get(k) {
            Some(r) => Some(r.rho),
            None if k == self.records.len() && k > 0 => {
                Some((self.sigma * self.records[k - 1].rho).min(self.rho_max))
            }
            None => None,
        }
    }

    pub fn final_gap(&self) -> f64 {
        self.summary(self.final_index())
            .map(|s| s.gap)
            .unwrap_or(f64::INFINITY)
    }

    pub fn total_inner(&self) -> usize {
        self.records.last().map(|r| r.l_total).unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub point: FactorizedPoint,
    pub trace: OuterTrace,
}

fn summarize(smooth: f64, sub: &SpectralSubgradient, v: &DMatrix<f64>) -> PointSummary {
    PointSummary {
        smooth,
        sigma1_sq: sub.pair.sigma * sub.pair.sigma,
        gap: sub.pair.gap,
        rank: numerical_rank(v, RANK_REL_TOL),
    }
}

/// Run the outer penalty loop to termination.
pub fn solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let p = inst.p();
    let start = initial_point(p, cfg.m, cfg.seed)?;
    solve_from(inst, cfg, start)
}

/// Outer loop from a caller-supplied `V⁰`.
pub fn solve_from(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    start: FactorizedPoint,
) -> Result<SolveOutcome> {
    cfg.validate()?;
    let p = inst.p();
    if start.p() != p {
        return Err(Error::DimensionMismatch {
            context: "starting point columns",
            expected: p,
            got: start.p(),
        });
    }
    let delta = cfg.delta_for(inst);
    let mut curvature = cfg.initial_curvature(inst, delta);

    let probe = SmoothedObjective::new(inst, delta, 0.0)?;
    let initial = summarize(
        probe.smooth_value(&start)?,
        &spectral_subgradient_of(start.matrix())?,
        start.matrix(),
    );

    let mut point = start;
    let mut rho = cfg.rho0;
    let mut records = Vec::new();
    let mut inner_traces = Vec::new();
    let mut l_total = 0;
    let mut termination = Termination::KMaxExceeded;

    for k in 0..=cfg.k_max {
        let clock = Instant::now();
        let obj = SmoothedObjective::new(inst, delta, rho)?;
        let out = solve_inner_from(&obj, point, cfg, curvature)?;
        let stalled = out.stalled(cfg.eps_inner);
        curvature = out.state.curvature;
        l_total += out.trace.iterations;

        // fresh spectral data of the accepted iterate for the stop test
        let sub = spectral_subgradient_of(out.state.point.matrix())?;
        let output = summarize(out.state.smooth, &sub, out.state.point.matrix());
        let min_abs_direction = sub.pair.right.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min);
        if min_abs_direction < 1e-12 {
            log::warn!(
                "outer {k}: leading direction has a (near) zero entry ({min_abs_direction:e}); \
                 feasibility-gap progress is not guaranteed"
            );
        }
        let gap = output.gap;
        records.push(OuterRecord {
            k,
            rho,
            inner_iterations: out.trace.iterations,
            l_total,
            inner_status: out.trace.status,
            stalled,
            output,
            phi: out.state.phi,
            surrogate: out.state.surrogate,
            curvature,
            min_abs_direction,
            seconds: clock.elapsed().as_secs_f64(),
        });
        if cfg.record_inner {
            inner_traces.push(out.trace);
        }
        point = out.state.point;

        if gap <= cfg.eps_outer {
            termination = Termination::GapReached;
            break;
        }
        if k == cfg.k_max {
            termination = if stalled {
                Termination::InnerStall
            } else {
                Termination::KMaxExceeded
            };
            break;
        }
        rho = (cfg.sigma * rho).min(cfg.rho_max);
    }

    if termination != Termination::GapReached && rho >= cfg.rho_max && cfg.rho_max >= 1e4 {
        log::warn!(
            "penalty reached rho_max = {} but the rank-one gap is still above {}",
            cfg.rho_max,
            cfg.eps_outer
        );
    }

    Ok(SolveOutcome {
        point,
        trace: OuterTrace {
            p,
            delta,
            sigma: cfg.sigma,
            rho_max: cfg.rho_max,
            eps_outer: cfg.eps_outer,
            initial,
            records,
            termination,
            inner: inner_traces,
        },
    })
}
