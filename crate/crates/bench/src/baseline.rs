//! Projected subgradient descent on the box `[−1,1]ⁿ` with sign rounding.

use dcra_core::spectral::operator_norm;
use dcra_core::{true_objective, Error, ProblemInstance, Result};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub iters: usize,
    /// Start from a uniform point in the box instead of the origin.
    pub random_start: bool,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            iters: 1000,
            random_start: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineResult {
    pub z: Vec<f64>,
    pub objective: f64,
    /// 1-based iteration whose rounding was best.
    pub best_iter: usize,
}

fn round_signs(x: &DVector<f64>) -> Vec<f64> {
    x.iter().map(|&v| if v < 0.0 { -1.0 } else { 1.0 }).collect()
}

/// Steps `x ← clip(x − (a/√t) g)` with `a = 1/‖A‖₂`; every iterate is
/// sign-rounded and the best rounding is returned.
pub fn projected_subgradient_baseline(
    inst: &ProblemInstance,
    cfg: &BaselineConfig,
) -> Result<BaselineResult> {
    if cfg.iters == 0 {
        return Err(Error::InvalidConfig("baseline needs at least one iteration".into()));
    }
    let a = inst.a();
    let norm = operator_norm(a);
    let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    let mut x = if cfg.random_start {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        DVector::from_fn(inst.n(), |_, _| rng.random_range(-1.0..=1.0))
    } else {
        DVector::zeros(inst.n())
    };

    let mut best: Option<BaselineResult> = None;
    for t in 1..=cfg.iters {
        let res = a * &x - inst.b();
        let g = inst.loss().subgradient(res.as_slice())?;
        let step = a.tr_mul(&DVector::from_vec(g));
        x.axpy(-scale / (t as f64).sqrt(), &step, 1.0);
        x.apply(|v| *v = v.clamp(-1.0, 1.0));
        let z = round_signs(&x);
        let obj = true_objective(inst, &z)?;
        if best.as_ref().is_none_or(|b| obj < b.objective) {
            best = Some(BaselineResult {
                z,
                objective: obj,
                best_iter: t,
            });
        }
    }
    Ok(best.expect("iters >= 1"))
}
