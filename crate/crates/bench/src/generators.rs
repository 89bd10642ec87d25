//! Random test problems and the binary compressed-sensing model transforms.

use dcra_core::{Error, LossBlock, ProblemInstance, Result, SeparableLoss};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

/// `min ‖Az − b‖₁` with standard-normal `A ∈ ℝ^{rows×cols}` and `b`.
pub fn gen_random_l1(rows: usize, cols: usize, seed: u64) -> Result<ProblemInstance> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInstance(format!(
            "random instance needs rows, cols >= 1, got {rows}x{cols}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let b = DVector::from_fn(rows, |_, _| StandardNormal.sample(&mut rng));
    ProblemInstance::new(
        a,
        b,
        SeparableLoss::l1(rows)?,
        Some(format!("random-r{rows}-n{cols}-s{seed}")),
    )
}

fn default_lambda() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BcsSpec {
    /// Signal dimension `N`.
    pub n: usize,
    /// Compression ratio `M/N`.
    pub alpha: f64,
    /// Probability that a signal entry is 1.
    pub sparsity_rho: f64,
    /// Mean shift of the sensing entries, `A_ij ~ N(μ/N, 1/N)`.
    pub mu: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub seed: u64,
}

impl BcsSpec {
    pub fn measurements(&self) -> usize {
        (self.alpha * self.n as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 {
            return bad("BCS signal dimension must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.measurements() == 0 {
            return bad(format!("alpha = {} gives zero measurements", self.alpha));
        }
        if !(0.0..1.0).contains(&self.sparsity_rho) {
            return bad(format!("sparsity rate must lie in [0, 1), got {}", self.sparsity_rho));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad(format!("mu must be nonnegative, got {}", self.mu));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        format!(
            "bcs-N{}-a{}-r{}-mu{}-s{}",
            self.n, self.alpha, self.sparsity_rho, self.mu, self.seed
        )
    }
}

/// `min_{x ∈ {0,1}^N} ‖Ax − y‖₁ + λ‖x‖₁` with its planted signal.
#[derive(Clone, Debug, PartialEq)]
pub struct BcsModel {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub lambda: f64,
    pub x0: Vec<f64>,
    pub label: String,
}

impl BcsModel {
    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.a.ncols() {
            return Err(Error::DimensionMismatch {
                context: "BCS point",
                expected: self.a.ncols(),
                got: x.len(),
            });
        }
        let xv = DVector::from_column_slice(x);
        let fit = (&self.a * &xv - &self.y).abs().sum();
        Ok(fit + self.lambda * x.iter().map(|v| v.abs()).sum::<f64>())
    }
}

pub fn gen_bcs(spec: &BcsSpec) -> Result<BcsModel> {
    spec.validate()?;
    let n = spec.n;
    let m = spec.measurements();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let entry = Normal::new(spec.mu / n as f64, 1.0 / (n as f64).sqrt())
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let a = DMatrix::from_fn(m, n, |_, _| entry.sample(&mut rng));
    let x0: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < spec.sparsity_rho { 1.0 } else { 0.0 })
        .collect();
    let y = &a * DVector::from_column_slice(&x0);
    Ok(BcsModel {
        a,
        y,
        lambda: spec.lambda,
        x0,
        label: spec.label(),
    })
}

/// `{−1,1}` form of a BCS model, `obj₀₁((z + e)/2) = instance(z) + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct SignModel {
    pub instance: ProblemInstance,
    /// `λN/2`, dropped by the change of variables.
    pub offset: f64,
}

impl SignModel {
    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        Ok(dcra_core::true_objective(&self.instance, z)? + self.offset)
    }
}

pub fn to_zero_one(z: &[f64]) -> Vec<f64> {
    z.iter().map(|&v| 0.5 * (v + 1.0)).collect()
}

/// Substitute `x = (z + e)/2`: `Ã = A/2`, `b̃ = y − Ae/2`, `c = (λ/2)e`.
pub fn zero_one_transform(model: &BcsModel) -> Result<SignModel> {
    let n = model.a.ncols();
    let a = &model.a * 0.5;
    let row_sums = DVector::from_iterator(model.a.nrows(), model.a.row_iter().map(|r| r.sum()));
    let b = &model.y - row_sums * 0.5;
    let c = vec![0.5 * model.lambda; n];
    let instance = augment_linear(&a, &b, &c)?.with_label(model.label.clone());
    Ok(SignModel {
        instance,
        offset: 0.5 * model.lambda * n as f64,
    })
}

/// Stack `[A′; I]` over `[b′; 0]` with loss `‖u_{1:M}‖₁ + cᵀu_{M+1:M+N}`.
pub fn augment_linear(a: &DMatrix<f64>, b: &DVector<f64>, c: &[f64]) -> Result<ProblemInstance> {
    let (m, n) = a.shape();
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            context: "linear term length",
            expected: n,
            got: c.len(),
        });
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            context: "augmented right-hand side",
            expected: m,
            got: b.len(),
        });
    }
    let mut stacked = DMatrix::zeros(m + n, n);
    stacked.view_mut((0, 0), (m, n)).copy_from(a);
    stacked.view_mut((m, 0), (n, n)).fill_with_identity();
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(b);
    let loss = SeparableLoss::new(vec![LossBlock::l1(m), LossBlock::linear(c.to_vec())])?;
    ProblemInstance::new(stacked, rhs, loss, None)
}
