//! LP-format export of the mixed-integer reformulation
//!
//! ```text
//! min  Σ wᵢ tᵢ + ⟨c, A_lin(2x − e) − b_lin⟩
//! s.t. tᵢ ≥ ±(A(2x − e) − b)ᵢ,  x ∈ {0,1}ⁿ
//! ```
//!
//! for losses built from ℓ1 and linear blocks.

use std::fmt::Write as _;

use dcra_core::{Error, LossBlock, ProblemInstance, Result};

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_term(line: &mut String, coeff: f64, var: &str) {
    if coeff == 0.0 {
        return;
    }
    let sign = if coeff < 0.0 { '-' } else { '+' };
    write!(line, " {sign} {} {var}", num(coeff.abs())).unwrap();
}

/// Render the model as CPLEX LP text. A nonzero objective constant is carried
/// by a variable `one` fixed to 1 in the bounds section.
pub fn milp_lp(inst: &ProblemInstance) -> Result<String> {
    let a = inst.a();
    let b = inst.b();
    let n = inst.n();

    let mut abs_rows: Vec<(usize, f64)> = Vec::new();
    let mut lin_obj = vec![0.0; n];
    let mut constant = 0.0;
    let mut row = 0;
    for block in inst.loss().blocks() {
        match block {
            LossBlock::L1 { rows, weight } => {
                for i in row..row + rows {
                    abs_rows.push((i, *weight));
                }
            }
            LossBlock::Linear { coeffs } => {
                for (k, c) in coeffs.iter().enumerate() {
                    let i = row + k;
                    // c·(Σ A_ij (2x_j − 1) − b_i)
                    for j in 0..n {
                        lin_obj[j] += 2.0 * c * a[(i, j)];
                    }
                    constant -= c * (a.row(i).sum() + b[i]);
                }
            }
            LossBlock::Huber { .. } => {
                return Err(Error::InvalidLoss(
                    "MILP export supports only l1 and linear blocks".into(),
                ))
            }
        }
        row += block.row_count();
    }

    let mut out = String::new();
    writeln!(out, "\\ mixed-integer reformulation, x_j = (z_j + 1)/2").unwrap();
    if let Some(label) = inst.label() {
        writeln!(out, "\\ instance: {label}").unwrap();
    }
    writeln!(out, "Minimize").unwrap();
    let mut obj = String::from(" obj:");
    for &(i, w) in &abs_rows {
        push_term(&mut obj, w, &format!("t{}", i + 1));
    }
    for (j, &c) in lin_obj.iter().enumerate() {
        push_term(&mut obj, c, &format!("x{}", j + 1));
    }
    push_term(&mut obj, constant, "one");
    if obj == " obj:" {
        obj.push_str(" 0 x1");
    }
    writeln!(out, "{obj}").unwrap();

    writeln!(out, "Subject To").unwrap();
    for &(i, _) in &abs_rows {
        let shift = a.row(i).sum() + b[i];
        for (tag, sign) in [("up", 1.0), ("dn", -1.0)] {
            // t_i − sign·Σ 2A_ij x_j ≥ −sign·(Σ_j A_ij + b_i)
            let mut line = format!(" {tag}{}: t{}", i + 1, i + 1);
            for j in 0..n {
                push_term(&mut line, -sign * 2.0 * a[(i, j)], &format!("x{}", j + 1));
            }
            write!(line, " >= {}", num(-sign * shift)).unwrap();
            writeln!(out, "{line}").unwrap();
        }
    }

    writeln!(out, "Bounds").unwrap();
    for &(i, _) in &abs_rows {
        writeln!(out, " t{} >= 0", i + 1).unwrap();
    }
    if constant != 0.0 {
        writeln!(out, " one = 1").unwrap();
    }
    writeln!(out, "Binaries").unwrap();
    let names: Vec<String> = (1..=n).map(|j| format!("x{j}")).collect();
    for chunk in names.chunks(16) {
        writeln!(out, " {}", chunk.join(" ")).unwrap();
    }
    writeln!(out, "End").unwrap();
    Ok(out)
}

pub fn milp_export(inst: &ProblemInstance, path: &std::path::Path) -> Result<()> {
    let text = milp_lp(inst)?;
    std::fs::write(path, text)
        .map_err(|e| Error::Format(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{augment_linear, gen_random_l1};
    use dcra_core::SeparableLoss;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn tiny_instance_counts() {
        let inst = ProblemInstance::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, 0.5),
            SeparableLoss::l1(1).unwrap(),
            None,
        )
        .unwrap();
        let lp = milp_lp(&inst).unwrap();
        let constraints = lp.lines().filter(|l| l.contains(">=") && l.contains(':')).count();
        assert_eq!(constraints, 2);
        assert!(lp.contains("Binaries\n x1\n"));
        assert!(lp.contains(" t1 >= 0"));
        assert!(!lp.contains("one"));
        // t ≥ 2(2x − 1) − 0.5  ⇔  t − 4x ≥ −2.5
        assert!(lp.contains(" up1: t1 - 4.0000000000000000e0 x1 >= -2.5000000000000000e0"), "{lp}");
    }

    #[test]
    fn export_is_deterministic() {
        let inst = gen_random_l1(5, 4, 2).unwrap();
        assert_eq!(milp_lp(&inst).unwrap(), milp_lp(&inst).unwrap());
    }

    #[test]
    fn linear_block_constant_is_carried() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let inst = augment_linear(&a, &DVector::from_element(1, 0.0), &[0.5, 0.5]).unwrap();
        let lp = milp_lp(&inst).unwrap();
        assert!(lp.contains(" one = 1"));
        assert!(lp.contains("- 1.0000000000000000e0 one"), "{lp}");
    }

    #[test]
    fn huber_rejected() {
        let inst = ProblemInstance::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            SeparableLoss::new(vec![dcra_core::LossBlock::huber(2, 0.1)]).unwrap(),
            None,
        )
        .unwrap();
        assert!(milp_lp(&inst).is_err());
    }
}
