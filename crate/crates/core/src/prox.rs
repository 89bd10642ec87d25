//! Proximal maps and Moreau envelopes for block-separable losses.
//!
//! A [`SeparableLoss`] is an ordered list of row blocks. Each block is one of
//! a (weighted) ℓ1 norm, a linear functional `⟨c, u⟩`, or an elementwise Huber
//! function. Value, prox and envelope all decompose over the blocks, so every
//! operation here is a single pass over the rows.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_positive, Error, Result};

/// One row block of a separable loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossBlock {
    /// `weight · ‖u‖₁` over `rows` coordinates.
    L1 {
        rows: usize,
        #[serde(default = "unit_weight")]
        weight: f64,
    },
    /// `⟨coeffs, u⟩`; the block spans `coeffs.len()` rows.
    Linear { coeffs: Vec<f64> },
    /// `Σ H_μ(u_i)` with `H_μ(t) = t²/(2μ)` for `|t| ≤ μ`, `|t| − μ/2` otherwise.
    Huber { rows: usize, mu: f64 },
}

fn unit_weight() -> f64 {
    1.0
}

impl LossBlock {
    pub fn l1(rows: usize) -> Self {
        LossBlock::L1 { rows, weight: 1.0 }
    }

    pub fn weighted_l1(rows: usize, weight: f64) -> Self {
        LossBlock::L1 { rows, weight }
    }

    pub fn linear(coeffs: Vec<f64>) -> Self {
        LossBlock::Linear { coeffs }
    }

    pub fn huber(rows: usize, mu: f64) -> Self {
        LossBlock::Huber { rows, mu }
    }

    pub fn row_count(&self) -> usize {
        match self {
            LossBlock::L1 { rows, .. } | LossBlock::Huber { rows, .. } => *rows,
            LossBlock::Linear { coeffs } => coeffs.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.row_count() == 0 {
            return Err(Error::InvalidLoss("block with zero rows".into()));
        }
        match self {
            LossBlock::L1 { weight, .. } => {
                if !(weight.is_finite() && *weight >= 0.0) {
                    return Err(Error::InvalidLoss(format!(
                        "l1 weight must be finite and nonnegative, got {weight}"
                    )));
                }
            }
            LossBlock::Linear { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidLoss("non-finite linear coefficient".into()));
                }
            }
            LossBlock::Huber { mu, .. } => {
                if !(mu.is_finite() && *mu > 0.0) {
                    return Err(Error::InvalidLoss(format!(
                        "huber mu must be positive, got {mu}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Lipschitz modulus of the block in the Euclidean norm.
    pub fn lipschitz(&self) -> f64 {
        match self {
            LossBlock::L1 { rows, weight } => weight * (*rows as f64).sqrt(),
            LossBlock::Linear { coeffs } => coeffs.iter().map(|c| c * c).sum::<f64>().sqrt(),
            LossBlock::Huber { rows, .. } => (*rows as f64).sqrt(),
        }
    }

    fn value(&self, u: &[f64]) -> f64 {
        match self {
            LossBlock::L1 { weight, .. } => weight * u.iter().map(|x| x.abs()).sum::<f64>(),
            LossBlock::Linear { coeffs } => coeffs.iter().zip(u).map(|(c, x)| c * x).sum(),
            LossBlock::Huber { mu, .. } => u.iter().map(|&x| huber(x, *mu)).sum(),
        }
    }

    /// One element of `∂f(u)`, taking 0 at the ℓ1 kink.
    fn subgradient_into(&self, u: &[f64], out: &mut [f64]) {
        match self {
            LossBlock::L1 { weight, .. } => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = if x > 0.0 {
                        *weight
                    } else if x < 0.0 {
                        -weight
                    } else {
                        0.0
                    };
                }
            }
            LossBlock::Linear { coeffs } => out.copy_from_slice(coeffs),
            LossBlock::Huber { mu, .. } => {
                for (o, &x) in out.iter_mut().zip(u) {
                    *o = huber_derivative(x, *mu);
                }
            }
        }
    }

    fn prox_into(&self, x: &[f64], gamma: f64, out: &mut [f64]) {
        match self {
            LossBlock::L1 { weight, .. } => {
                let t = gamma * weight;
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = soft_threshold(xi, t);
                }
            }
            LossBlock::Linear { coeffs } => {
                for ((o, &xi), c) in out.iter_mut().zip(x).zip(coeffs) {
                    *o = xi - gamma * c;
                }
            }
            LossBlock::Huber { mu, .. } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = huber_prox(xi, *mu, gamma);
                }
            }
        }
    }

    fn envelope(&self, x: &[f64], gamma: f64) -> f64 {
        match self {
            LossBlock::L1 { weight, .. } => {
                let t = gamma * weight;
                x.iter()
                    .map(|&xi| {
                        let a = xi.abs();
                        if a > t {
                            weight * a - 0.5 * gamma * weight * weight
                        } else {
                            xi * xi / (2.0 * gamma)
                        }
                    })
                    .sum()
            }
            LossBlock::Linear { coeffs } => {
                let dot: f64 = coeffs.iter().zip(x).map(|(c, xi)| c * xi).sum();
                let sq: f64 = coeffs.iter().map(|c| c * c).sum();
                dot - 0.5 * gamma * sq
            }
            // The envelope of H_μ is H_{μ+γ}.
            LossBlock::Huber { mu, .. } => x.iter().map(|&xi| huber(xi, mu + gamma)).sum(),
        }
    }
}

/// `sign(x) · max(|x| − t, 0)`.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Scalar Huber function `H_μ`.
pub fn huber(t: f64, mu: f64) -> f64 {
    let a = t.abs();
    if a <= mu {
        t * t / (2.0 * mu)
    } else {
        a - 0.5 * mu
    }
}

/// Derivative of `H_μ`, i.e. `t/μ` clipped to `[-1, 1]`.
pub fn huber_derivative(t: f64, mu: f64) -> f64 {
    (t / mu).clamp(-1.0, 1.0)
}

/// Minimizer of `H_μ(y) + (y − x)²/(2γ)`.
pub fn huber_prox(x: f64, mu: f64, gamma: f64) -> f64 {
    if x.abs() <= mu + gamma {
        x * mu / (mu + gamma)
    } else {
        x - gamma * x.signum()
    }
}

/// Ordered row blocks forming a separable loss on `ℝ^total_rows`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparableLoss {
    blocks: Vec<LossBlock>,
    #[serde(skip)]
    total_rows: usize,
}

impl SeparableLoss {
    pub fn new(blocks: Vec<LossBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidLoss("loss has no blocks".into()));
        }
        for b in &blocks {
            b.validate()?;
        }
        let total_rows = blocks.iter().map(LossBlock::row_count).sum();
        Ok(SeparableLoss { blocks, total_rows })
    }

    /// Single unweighted ℓ1 block.
    pub fn l1(rows: usize) -> Result<Self> {
        Self::new(vec![LossBlock::l1(rows)])
    }

    pub fn blocks(&self) -> &[LossBlock] {
        &self.blocks
    }

    pub fn total_rows(&self) -> usize {
        self.total_rows
    }

    /// Euclidean Lipschitz modulus of the whole loss (and of its envelope).
    pub fn lipschitz(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.lipschitz().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// True when every block is ℓ1 or linear.
    pub fn is_piecewise_linear(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| !matches!(b, LossBlock::Huber { .. }))
    }

    fn segments(&self) -> impl Iterator<Item = (&LossBlock, std::ops::Range<usize>)> {
        let mut start = 0;
        self.blocks.iter().map(move |b| {
            let end = start + b.row_count();
            let range = start..end;
            start = end;
            (b, range)
        })
    }

    pub fn value(&self, u: &[f64]) -> Result<f64> {
        check_len("loss value", self.total_rows, u.len())?;
        Ok(self.segments().map(|(b, r)| b.value(&u[r])).sum())
    }

    pub fn subgradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("loss subgradient", self.total_rows, u.len())?;
        let mut out = vec![0.0; u.len()];
        for (b, r) in self.segments() {
            b.subgradient_into(&u[r.clone()], &mut out[r]);
        }
        Ok(out)
    }

    pub fn prox(&self, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
        self.check_args(x, gamma)?;
        let mut out = vec![0.0; x.len()];
        for (b, r) in self.segments() {
            b.prox_into(&x[r.clone()], gamma, &mut out[r]);
        }
        Ok(out)
    }

    /// Moreau envelope `env_{γf}(x)`.
    pub fn envelope(&self, x: &[f64], gamma: f64) -> Result<f64> {
        self.check_args(x, gamma)?;
        Ok(self.segments().map(|(b, r)| b.envelope(&x[r], gamma)).sum())
    }

    /// `∇env_{γf}(x) = (x − prox_{γf}(x))/γ`.
    pub fn envelope_gradient(&self, x: &[f64], gamma: f64) -> Result<Vec<f64>> {
        Ok(self.envelope_and_gradient(x, gamma)?.1)
    }

    /// Envelope value and gradient from a single prox evaluation.
    pub fn envelope_and_gradient(&self, x: &[f64], gamma: f64) -> Result<(f64, Vec<f64>)> {
        self.check_args(x, gamma)?;
        let mut grad = vec![0.0; x.len()];
        let mut value = 0.0;
        for (b, r) in self.segments() {
            b.prox_into(&x[r.clone()], gamma, &mut grad[r.clone()]);
            value += b.envelope(&x[r.clone()], gamma);
            for (g, &xi) in grad[r.clone()].iter_mut().zip(&x[r]) {
                *g = (xi - *g) / gamma;
            }
        }
        Ok((value, grad))
    }

    fn check_args(&self, x: &[f64], gamma: f64) -> Result<()> {
        check_len("prox argument", self.total_rows, x.len())?;
        check_positive("gamma", gamma)
    }
}

impl<'de> Deserialize<'de> for SeparableLoss {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            blocks: Vec<LossBlock>,
        }
        let raw = Raw::deserialize(d)?;
        SeparableLoss::new(raw.blocks).map_err(serde::de::Error::custom)
    }
}

/// Elementwise Huber value `Σ H_μ(R_ij)` and derivative matrix `H'_μ(R)`.
pub fn huber_value_grad(r: &DMatrix<f64>, mu: f64) -> Result<(f64, DMatrix<f64>)> {
    check_positive("mu", mu)?;
    let value = r.iter().map(|&t| huber(t, mu)).sum();
    Ok((value, r.map(|t| huber_derivative(t, mu))))
}
