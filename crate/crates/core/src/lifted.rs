//! Problem data and the factorized, smoothed, penalized objective.
//!
//! The lifted variable is `X = VᵀV` with `V ∈ ℝ^{m×p}`, `p = n + 1`, and unit
//! columns. Column 0 is the homogenization coordinate: for a rank-one
//! `X = [1 xᵀ; x xxᵀ]` the cross block `X_{1:n,0}` is `x` itself. The lifted
//! operator only reads that cross block, so nothing here forms `VᵀV`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, check_positive, Error, Result};
use crate::prox::SeparableLoss;
use crate::spectral::{leading_singular_pair, LeadingPair};

pub const UNIT_COLUMN_TOL: f64 = 1e-10;

/// `min_{z ∈ {−1,1}ⁿ} f(Az − b)` with `A ∈ ℝ^{r×n}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProblemInstance {
    a: DMatrix<f64>,
    b: DVector<f64>,
    loss: SeparableLoss,
    label: Option<String>,
}

impl ProblemInstance {
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        loss: SeparableLoss,
        label: Option<String>,
    ) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidInstance("matrix A is empty".into()));
        }
        check_len("instance rows (b)", a.nrows(), b.len())?;
        check_len("instance rows (loss)", a.nrows(), loss.total_rows())?;
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInstance("non-finite entry in A or b".into()));
        }
        Ok(ProblemInstance { a, b, loss, label })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn loss(&self) -> &SeparableLoss {
        &self.loss
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Binary dimension.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Residual dimension.
    pub fn r(&self) -> usize {
        self.a.nrows()
    }

    /// Lifted dimension `p = n + 1`.
    pub fn p(&self) -> usize {
        self.n() + 1
    }

    /// Loss at an arbitrary real point: `f(Ax − b)`.
    pub fn objective_at(&self, x: &[f64]) -> Result<f64> {
        check_len("objective point", self.n(), x.len())?;
        let res = &self.a * DVector::from_column_slice(x) - &self.b;
        self.loss.value(res.as_slice())
    }

    /// Default Moreau parameter `0.1·(median|b| + 1)`.
    pub fn default_delta(&self) -> f64 {
        let mut abs: Vec<f64> = self.b.iter().map(|x| x.abs()).collect();
        abs.sort_by(f64::total_cmp);
        let k = abs.len();
        let median = if k % 2 == 1 {
            abs[k / 2]
        } else {
            0.5 * (abs[k / 2 - 1] + abs[k / 2])
        };
        0.1 * (median + 1.0)
    }
}

/// Unpenalized loss at a sign vector.
pub fn true_objective(inst: &ProblemInstance, z: &[f64]) -> Result<f64> {
    check_len("sign vector", inst.n(), z.len())?;
    for (index, &value) in z.iter().enumerate() {
        if value != 1.0 && value != -1.0 {
            return Err(Error::NonSignEntry { index, value });
        }
    }
    inst.objective_at(z)
}

/// A matrix `V ∈ ℝ^{m×p}` with unit columns and `2 ≤ m ≤ p`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedPoint {
    v: DMatrix<f64>,
}

impl FactorizedPoint {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        let (m, p) = v.shape();
        if m < 2 || m > p {
            return Err(Error::InvalidPoint(format!(
                "need 2 <= m <= p, got m = {m}, p = {p}"
            )));
        }
        for (j, col) in v.column_iter().enumerate() {
            let norm = col.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_COLUMN_TOL {
                return Err(Error::InvalidPoint(format!(
                    "column {j} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(FactorizedPoint { v })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.v
    }

    pub fn m(&self) -> usize {
        self.v.nrows()
    }

    pub fn p(&self) -> usize {
        self.v.ncols()
    }
}

/// Cross block `u_j = ⟨V_j, V_0⟩`, `j = 1..n`, of `VᵀV`.
fn cross_block(v: &DMatrix<f64>) -> DVector<f64> {
    let v0 = v.column(0);
    let rest = v.columns(1, v.ncols() - 1);
    rest.tr_mul(&v0)
}

/// `𝒜(VᵀV) − b` for any `V` with `p = n + 1` columns.
pub fn lifted_residual_of(inst: &ProblemInstance, v: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_len("lifted columns", inst.p(), v.ncols())?;
    Ok(inst.a() * cross_block(v) - inst.b())
}

pub fn lifted_residual(inst: &ProblemInstance, point: &FactorizedPoint) -> Result<DVector<f64>> {
    lifted_residual_of(inst, point.matrix())
}

/// `Φ(V) = env_{δf}(𝒜(VᵀV) − b) + ρ(‖V‖_F² − ‖VᵀV‖)`.
#[derive(Clone, Copy, Debug)]
pub struct SmoothedObjective<'a> {
    instance: &'a ProblemInstance,
    delta: f64,
    rho: f64,
}

/// Value and gradient of the smooth part at one point.
#[derive(Clone, Debug)]
pub struct SmoothEval {
    pub value: f64,
    pub gradient: DMatrix<f64>,
}

impl<'a> SmoothedObjective<'a> {
    /// `rho = 0` switches the penalty off.
    pub fn new(instance: &'a ProblemInstance, delta: f64, rho: f64) -> Result<Self> {
        check_positive("delta", delta)?;
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::NonPositive { name: "rho", value: rho });
        }
        Ok(SmoothedObjective { instance, delta, rho })
    }

    pub fn instance(&self) -> &'a ProblemInstance {
        self.instance
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn with_rho(self, rho: f64) -> Result<Self> {
        Self::new(self.instance, self.delta, rho)
    }

    /// Smooth part `f̃(V)` at an arbitrary matrix.
    pub fn smooth_value_of(&self, v: &DMatrix<f64>) -> Result<f64> {
        let res = lifted_residual_of(self.instance, v)?;
        self.instance.loss().envelope(res.as_slice(), self.delta)
    }

    /// `f̃(V)` and `∇f̃(V) = 2V𝒜*(g)` at an arbitrary matrix.
    pub fn smooth_eval_of(&self, v: &DMatrix<f64>) -> Result<SmoothEval> {
        let res = lifted_residual_of(self.instance, v)?;
        let (value, g) = self
            .instance
            .loss()
            .envelope_and_gradient(res.as_slice(), self.delta)?;
        let w = self.instance.a().tr_mul(&DVector::from_vec(g));
        Ok(SmoothEval {
            value,
            gradient: arrow_gradient(v, &w),
        })
    }

    pub fn smooth_value(&self, point: &FactorizedPoint) -> Result<f64> {
        self.smooth_value_of(point.matrix())
    }

    pub fn smoothed_gradient(&self, point: &FactorizedPoint) -> Result<DMatrix<f64>> {
        Ok(self.smooth_eval_of(point.matrix())?.gradient)
    }

    /// Penalty `‖V‖_F² − σ₁(V)²` from a precomputed leading pair.
    pub fn value_with(&self, smooth: f64, pair: &LeadingPair) -> f64 {
        smooth + self.rho * pair.gap
    }

    /// Full penalized value `Φ(V)`.
    pub fn smoothed_value(&self, point: &FactorizedPoint) -> Result<f64> {
        let smooth = self.smooth_value(point)?;
        if self.rho == 0.0 {
            return Ok(smooth);
        }
        let pair = leading_singular_pair(point.matrix())?;
        Ok(self.value_with(smooth, &pair))
    }
}

/// `2V𝒜*(g)` given `w = Aᵀg`: column 0 is `V_{1..n} w`, column `j` is `w_j V_0`.
fn arrow_gradient(v: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let (m, p) = v.shape();
    let mut grad = DMatrix::zeros(m, p);
    let rest = v.columns(1, p - 1);
    grad.set_column(0, &(rest * w));
    let v0 = v.column(0);
    for j in 1..p {
        grad.column_mut(j).copy_from(&(v0 * w[j - 1]));
    }
    grad
}

/// Spectral subgradient `Γ(V) = −2V P₁P₁ᵀ` of `V ↦ −‖VᵀV‖`.
#[derive(Clone, Debug)]
pub struct SpectralSubgradient {
    pub gamma: DMatrix<f64>,
    pub pair: LeadingPair,
}

impl SpectralSubgradient {
    pub fn direction(&self) -> &DVector<f64> {
        &self.pair.right
    }

    pub fn sigma(&self) -> f64 {
        self.pair.sigma
    }
}

pub fn spectral_subgradient_of(v: &DMatrix<f64>) -> Result<SpectralSubgradient> {
    let pair = leading_singular_pair(v)?;
    // V P₁ = σ₁ q₁
    let gamma = &pair.left * pair.right.transpose() * (-2.0 * pair.sigma);
    Ok(SpectralSubgradient { gamma, pair })
}

pub fn spectral_subgradient(point: &FactorizedPoint) -> Result<SpectralSubgradient> {
    spectral_subgradient_of(point.matrix())
}
