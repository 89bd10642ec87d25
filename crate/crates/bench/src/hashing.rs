//! Supervised hashing by alternating minimization on synthetic data.
//!
//! ```text
//! min_{W, X ∈ {−1,1}^{n×r}}  ‖B − WXᵀ‖₁ + (δ/2)‖W‖_F²
//! ```
//!
//! `W` is updated by gradient descent on the Huber-smoothed fit, `X` column by
//! column of `B` with the binary solver.

use std::fmt::Write as _;

use dcra_core::io::SCHEMA_VERSION;
use dcra_core::prox::huber_value_grad;
use dcra_core::{certify, solve, true_objective, Error, ProblemInstance, Result, SeparableLoss, SolverConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct HashingProblem {
    /// Data matrix, `d × n`.
    pub b: DMatrix<f64>,
    pub r_bits: usize,
    pub delta_reg: f64,
    /// Huber parameter of the W-step.
    pub mu: f64,
    /// Number of alternations.
    pub k: usize,
}

impl HashingProblem {
    pub fn new(b: DMatrix<f64>, r_bits: usize, delta_reg: f64, mu: f64, k: usize) -> Result<Self> {
        if r_bits == 0 {
            return Err(Error::InvalidConfig("r_bits must be at least 1".into()));
        }
        if b.is_empty() {
            return Err(Error::InvalidInstance("empty data matrix".into()));
        }
        if !(delta_reg > 0.0 && delta_reg.is_finite()) {
            return Err(Error::NonPositive { name: "delta_reg", value: delta_reg });
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::NonPositive { name: "mu", value: mu });
        }
        Ok(HashingProblem { b, r_bits, delta_reg, mu, k })
    }

    pub fn d(&self) -> usize {
        self.b.nrows()
    }

    pub fn n(&self) -> usize {
        self.b.ncols()
    }

    /// `‖B − WXᵀ‖₁ + (δ/2)‖W‖_F²`.
    pub fn objective(&self, w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<f64> {
        self.check_shapes(w, x)?;
        let fit = (&self.b - w * x.transpose()).abs().sum();
        Ok(fit + 0.5 * self.delta_reg * w.norm_squared())
    }

    /// Huber-smoothed W-objective and its gradient `−H′(R)X + δW`.
    pub fn smoothed_w(&self, w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        self.check_shapes(w, x)?;
        let r = &self.b - w * x.transpose();
        let (h, dh) = huber_value_grad(&r, self.mu)?;
        let value = h + 0.5 * self.delta_reg * w.norm_squared();
        let grad = -(dh * x) + w * self.delta_reg;
        Ok((value, grad))
    }

    /// Fixed W-step size `1/(n·r/μ + δ)`.
    pub fn w_stepsize(&self) -> f64 {
        1.0 / (self.n() as f64 * self.r_bits as f64 / self.mu + self.delta_reg)
    }

    fn check_shapes(&self, w: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<()> {
        if w.shape() != (self.d(), self.r_bits) {
            return Err(Error::DimensionMismatch {
                context: "projection matrix rows x bits",
                expected: self.d() * self.r_bits,
                got: w.len(),
            });
        }
        if x.shape() != (self.n(), self.r_bits) {
            return Err(Error::DimensionMismatch {
                context: "code matrix rows x bits",
                expected: self.n() * self.r_bits,
                got: x.len(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashingConfig {
    pub w_max_iters: usize,
    /// Stop the W-step once `‖∇‖_F` falls below this.
    pub w_tol: f64,
    /// Binary solver settings for every column of the X-step.
    pub solver: SolverConfig,
}

impl Default for HashingConfig {
    fn default() -> Self {
        HashingConfig {
            w_max_iters: 20_000,
            w_tol: 1e-6,
            solver: SolverConfig { k_max: 50, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WStep {
    pub w: DMatrix<f64>,
    pub iterations: usize,
    /// Smoothed objective before the first and after every iteration.
    pub values: Vec<f64>,
}

pub fn w_step(
    prob: &HashingProblem,
    x: &DMatrix<f64>,
    w0: &DMatrix<f64>,
    cfg: &HashingConfig,
) -> Result<WStep> {
    let step = prob.w_stepsize();
    let mut w = w0.clone();
    let (mut value, mut grad) = prob.smoothed_w(&w, x)?;
    let mut values = vec![value];
    let mut iterations = 0;
    while iterations < cfg.w_max_iters && grad.norm() > cfg.w_tol {
        w -= &grad * step;
        (value, grad) = prob.smoothed_w(&w, x)?;
        values.push(value);
        iterations += 1;
    }
    Ok(WStep { w, iterations, values })
}

#[derive(Clone, Debug, PartialEq)]
pub struct XStep {
    pub x: DMatrix<f64>,
    /// Columns whose previous code was kept because the new one was worse.
    pub kept_previous: Vec<usize>,
    /// Per-column solver failures; the previous code is kept for these.
    pub errors: Vec<(usize, String)>,
}

fn column_instance(w: &DMatrix<f64>, col: DVector<f64>) -> Result<ProblemInstance> {
    ProblemInstance::new(w.clone(), col, SeparableLoss::l1(w.nrows())?, None)
}

/// Moreau parameter shared by every column, from the scale of `B`.
fn shared_delta(b: &DMatrix<f64>) -> f64 {
    let mut mags: Vec<f64> = b.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    0.1 * (mags[mags.len() / 2] + 1.0)
}

fn solve_column(w: &DMatrix<f64>, col: DVector<f64>, cfg: &SolverConfig) -> Result<(Vec<f64>, f64)> {
    let inst = column_instance(w, col)?;
    let cfg = SolverConfig { m: cfg.m.min(inst.p()), ..cfg.clone() };
    let out = solve(&inst, &cfg)?;
    let cert = certify(&inst, &out)?;
    Ok((cert.z, cert.true_obj))
}

/// Solve `min_x ‖W x − B_j‖₁` over sign vectors for every column `j`.
///
/// With `previous` given, a column keeps its previous code whenever the new
/// one is not strictly better.
pub fn x_step(
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
    previous: Option<&DMatrix<f64>>,
    cfg: &HashingConfig,
) -> Result<XStep> {
    let (d, n) = b.shape();
    let r = w.ncols();
    if w.nrows() != d {
        return Err(Error::DimensionMismatch { context: "projection rows", expected: d, got: w.nrows() });
    }
    if let Some(p) = previous {
        if p.shape() != (n, r) {
            return Err(Error::DimensionMismatch { context: "previous code matrix", expected: n * r, got: p.len() });
        }
    }
    let solver = SolverConfig {
        delta: Some(cfg.solver.delta.unwrap_or_else(|| shared_delta(b))),
        ..cfg.solver.clone()
    };
    let results: Vec<Result<(Vec<f64>, f64)>> = (0..n)
        .into_par_iter()
        .map(|j| solve_column(w, b.column(j).into_owned(), &solver))
        .collect();

    let mut x = DMatrix::zeros(n, r);
    let mut kept_previous = Vec::new();
    let mut errors = Vec::new();
    for (j, res) in results.into_iter().enumerate() {
        let prev_row: Option<Vec<f64>> = previous.map(|p| p.row(j).iter().copied().collect());
        let chosen = match (res, prev_row) {
            (Ok((z, obj)), Some(prev)) => {
                let inst = column_instance(w, b.column(j).into_owned())?;
                if true_objective(&inst, &prev)? <= obj {
                    kept_previous.push(j);
                    prev
                } else {
                    z
                }
            }
            (Ok((z, _)), None) => z,
            (Err(e), Some(prev)) => {
                log::warn!("code row {j}: {e}; keeping previous code");
                errors.push((j, e.to_string()));
                prev
            }
            (Err(e), None) => return Err(e),
        };
        for (k, v) in chosen.into_iter().enumerate() {
            x[(j, k)] = v;
        }
    }
    Ok(XStep { x, kept_previous, errors })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfStep {
    Init,
    W,
    X,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub round: usize,
    pub half: HalfStep,
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashingRun {
    pub w: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub trace: Vec<TracePoint>,
}

impl HashingRun {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map(|t| t.objective).unwrap_or(f64::NAN)
    }

    /// Objective after each X-step never exceeds the value just before it.
    pub fn x_steps_monotone(&self) -> bool {
        self.trace
            .windows(2)
            .filter(|w| w[1].half == HalfStep::X)
            .all(|w| w[1].objective <= w[0].objective + 1e-9 * w[0].objective.abs().max(1.0))
    }
}

fn random_signs(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

/// `K` rounds of W-step then X-step from `W⁰ = 0` and seeded random signs `X⁰`.
pub fn alternate(prob: &HashingProblem, cfg: &HashingConfig, seed: u64) -> Result<HashingRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_signs(prob.n(), prob.r_bits, &mut rng);
    let mut w = DMatrix::zeros(prob.d(), prob.r_bits);
    let mut trace = vec![TracePoint { round: 0, half: HalfStep::Init, objective: prob.objective(&w, &x)? }];
    let solver = SolverConfig { seed, ..cfg.solver.clone() };
    let cfg = HashingConfig { solver, ..cfg.clone() };
    for round in 1..=prob.k {
        w = w_step(prob, &x, &w, &cfg)?.w;
        trace.push(TracePoint { round, half: HalfStep::W, objective: prob.objective(&w, &x)? });
        x = x_step(&prob.b, &w, Some(&x), &cfg)?.x;
        trace.push(TracePoint { round, half: HalfStep::X, objective: prob.objective(&w, &x)? });
    }
    Ok(HashingRun { w, x, trace })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedHashing {
    pub b: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

/// `B = W̄X̄ᵀ + S` with Gaussian `W̄`, random signs `X̄`, and `S` Gaussian on a
/// random `noise_rate` fraction of entries.
pub fn planted_hashing(d: usize, n: usize, r_bits: usize, noise_rate: f64, seed: u64) -> Result<PlantedHashing> {
    if d == 0 || n == 0 || r_bits == 0 {
        return Err(Error::InvalidInstance(format!("planted model needs positive sizes, got {d}x{n}x{r_bits}")));
    }
    if !(0.0..=1.0).contains(&noise_rate) {
        return Err(Error::InvalidConfig(format!("noise rate must lie in [0, 1], got {noise_rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(d, r_bits, |_, _| StandardNormal.sample(&mut rng));
    let x = random_signs(n, r_bits, &mut rng);
    let mut b: DMatrix<f64> = &w * x.transpose();
    for v in b.iter_mut() {
        if rng.random::<f64>() < noise_rate {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += e;
        }
    }
    Ok(PlantedHashing { b, w, x })
}

pub const HASHING_CSV_HEADER: &str = "round,half,objective";

pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = format!("# dcra hashing trace, schema {SCHEMA_VERSION}\n{HASHING_CSV_HEADER}\n");
    for t in trace {
        let half = match t.half {
            HalfStep::Init => "init",
            HalfStep::W => "w",
            HalfStep::X => "x",
        };
        writeln!(out, "{},{half},{}", t.round, t.objective).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force_oracle, DEFAULT_CAP};

    fn problem(b: DMatrix<f64>, r: usize, delta: f64, k: usize) -> HashingProblem {
        HashingProblem::new(b, r, delta, 0.1, k).unwrap()
    }

    #[test]
    fn invalid_problems_rejected() {
        let b = DMatrix::zeros(2, 3);
        assert!(HashingProblem::new(b.clone(), 0, 1.0, 0.1, 1).is_err());
        assert!(HashingProblem::new(b.clone(), 2, 0.0, 0.1, 1).is_err());
        assert!(HashingProblem::new(b, 2, 1.0, -1.0, 1).is_err());
    }

    #[test]
    fn w_step_at_global_minimum() {
        let p = problem(DMatrix::zeros(3, 4), 2, 1.0, 1);
        let x = DMatrix::from_element(4, 2, 1.0);
        let r = w_step(&p, &x, &DMatrix::zeros(3, 2), &HashingConfig::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.w, DMatrix::zeros(3, 2));
    }

    #[test]
    fn heavy_ridge_drives_w_to_zero() {
        let planted = planted_hashing(4, 6, 3, 0.0, 2).unwrap();
        let p = problem(planted.b, 3, 1e8, 1);
        let r = w_step(&p, &planted.x, &planted.w, &HashingConfig::default()).unwrap();
        assert!(r.w.norm() < 1e-6, "{}", r.w.norm());
    }

    #[test]
    fn w_gradient_matches_finite_differences() {
        let planted = planted_hashing(4, 5, 3, 0.3, 7).unwrap();
        let p = problem(planted.b, 3, 0.5, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = DMatrix::from_fn(4, 3, |_, _| StandardNormal.sample(&mut rng));
        let (_, g) = p.smoothed_w(&w, &planted.x).unwrap();
        let h = 1e-6;
        let mut fd = DMatrix::zeros(4, 3);
        for i in 0..4 {
            for j in 0..3 {
                let mut wp = w.clone();
                wp[(i, j)] += h;
                let mut wm = w.clone();
                wm[(i, j)] -= h;
                fd[(i, j)] = (p.smoothed_w(&wp, &planted.x).unwrap().0 - p.smoothed_w(&wm, &planted.x).unwrap().0) / (2.0 * h);
            }
        }
        assert!((&fd - &g).norm() / g.norm() < 1e-5);
    }

    #[test]
    fn w_step_descends() {
        let planted = planted_hashing(8, 30, 6, 0.1, 3).unwrap();
        let p = problem(planted.b, 6, 1.0, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_signs(30, 6, &mut rng);
        let cfg = HashingConfig { w_max_iters: 500, ..Default::default() };
        let r = w_step(&p, &x, &DMatrix::zeros(8, 6), &cfg).unwrap();
        for v in r.values.windows(2) {
            assert!(v[1] <= v[0] + 1e-9, "{} -> {}", v[0], v[1]);
        }
    }

    #[test]
    fn identity_projection_gives_signs() {
        let b = DMatrix::from_column_slice(2, 1, &[3.0, -2.0]);
        let s = x_step(&b, &DMatrix::identity(2, 2), None, &HashingConfig::default()).unwrap();
        assert_eq!(s.x, DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
    }

    #[test]
    fn x_step_codes_are_signs_and_duplicates_agree() {
        let planted = planted_hashing(8, 6, 5, 0.2, 4).unwrap();
        let mut b = planted.b.clone();
        let c0 = b.column(0).into_owned();
        b.set_column(3, &c0);
        let s = x_step(&b, &planted.w, None, &HashingConfig::default()).unwrap();
        assert!(s.x.iter().all(|&v| v == 1.0 || v == -1.0));
        assert_eq!(s.x.row(0), s.x.row(3));
    }

    #[test]
    fn column_permutation_permutes_codes() {
        let planted = planted_hashing(6, 5, 4, 0.2, 5).unwrap();
        let perm = [3, 0, 4, 1, 2];
        let permuted = DMatrix::from_fn(6, 5, |i, j| planted.b[(i, perm[j])]);
        let cfg = HashingConfig::default();
        let a = x_step(&planted.b, &planted.w, None, &cfg).unwrap().x;
        let p = x_step(&permuted, &planted.w, None, &cfg).unwrap().x;
        for (j, &src) in perm.iter().enumerate() {
            assert_eq!(p.row(j), a.row(src));
        }
    }

    #[test]
    fn guarded_x_step_matches_oracle_when_started_there() {
        let planted = planted_hashing(8, 4, 6, 0.2, 6).unwrap();
        let mut opt = DMatrix::zeros(4, 6);
        for j in 0..4 {
            let inst = column_instance(&planted.w, planted.b.column(j).into_owned()).unwrap();
            let o = brute_force_oracle(&inst, DEFAULT_CAP).unwrap();
            for k in 0..6 {
                opt[(j, k)] = o.z[k];
            }
        }
        let s = x_step(&planted.b, &planted.w, Some(&opt), &HashingConfig::default()).unwrap();
        let p = problem(planted.b.clone(), 6, 1.0, 1);
        let a = p.objective(&planted.w, &s.x).unwrap();
        let b = p.objective(&planted.w, &opt).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn zero_rounds_return_initialization() {
        let planted = planted_hashing(4, 5, 3, 0.1, 1).unwrap();
        let p = problem(planted.b, 3, 1.0, 0);
        let run = alternate(&p, &HashingConfig::default(), 3).unwrap();
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.w, DMatrix::zeros(4, 3));
        assert_eq!(trace_csv(&run.trace).lines().count(), 3);
    }

    #[test]
    fn alternation_is_monotone_on_x_steps() {
        let planted = planted_hashing(8, 12, 4, 0.1, 2).unwrap();
        let p = problem(planted.b, 4, 1.0, 3);
        let run = alternate(&p, &HashingConfig::default(), 2).unwrap();
        assert_eq!(run.trace.len(), 7);
        assert!(run.x_steps_monotone());
    }
}
