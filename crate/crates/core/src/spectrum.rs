//! Dense generalized eigenvalues of the preconditioned pencil, condition numbers and the
//! two-interval hull.

use std::io::Write;

use faer::{Mat, MatRef, Par, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const DENSE_BUDGET: usize = 6000;

/// Eigenvalues of `N^{-1} A` for symmetric `A` and SPD `N`, sorted by magnitude.
pub fn generalized_eigs(a: MatRef<'_, f64>, n: MatRef<'_, f64>, budget: usize) -> Result<Vec<f64>> {
    let dim = a.nrows();
    if dim > budget {
        return Err(Error::OverBudget { dim, budget });
    }
    if a.ncols() != dim || n.nrows() != dim || n.ncols() != dim {
        return Err(Error::InvalidArgument("pencil matrices must be square and of equal size".into()));
    }
    let llt = n
        .llt(Side::Lower)
        .map_err(|e| Error::Factorization(format!("Riesz map is not positive definite: {e:?}")))?;
    let l = llt.L();
    let mut x = a.to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, x.as_mut(), Par::Seq);
    let mut c = x.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let c = Mat::<f64>::from_fn(dim, dim, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let mut eigs = c
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    eigs.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    Ok(eigs)
}

pub fn generalized_eigs_sparse(a: &CsrMatrix, n: &CsrMatrix) -> Result<Vec<f64>> {
    if a.nrows() > DENSE_BUDGET {
        return Err(Error::OverBudget { dim: a.nrows(), budget: DENSE_BUDGET });
    }
    generalized_eigs(a.to_dense().as_ref(), n.to_dense().as_ref(), DENSE_BUDGET)
}

/// `(kappa, kappa_eff)`: largest magnitude over the smallest, and over the magnitude
/// of entry `drop` (the smallest after discarding `drop` near-kernel values).
pub fn condition_numbers(eigs: &[f64], drop: usize) -> Result<(f64, f64)> {
    if eigs.len() < drop + 1 {
        return Err(Error::InvalidArgument(format!("{} eigenvalues cannot drop {drop}", eigs.len())));
    }
    let max = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eigs.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let mut mags: Vec<f64> = eigs.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    Ok((max / min, max / mags[drop]))
}

/// `(a, b, c, d)` with `a <= b < 0 < c <= d` enclosing all but the `drop` smallest-magnitude
/// eigenvalues; `None` when one sign is missing.
pub fn hull(eigs: &[f64], drop: usize) -> Option<(f64, f64, f64, f64)> {
    let mut sorted = eigs.to_vec();
    sorted.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let rest = sorted.get(drop..)?;
    let neg: Vec<f64> = rest.iter().copied().filter(|&v| v < 0.0).collect();
    let pos: Vec<f64> = rest.iter().copied().filter(|&v| v > 0.0).collect();
    if neg.is_empty() || pos.is_empty() {
        return None;
    }
    let a = neg.iter().copied().fold(f64::INFINITY, f64::min);
    let b = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c = pos.iter().copied().fold(f64::INFINITY, f64::min);
    let d = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((a, b, c, d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// All eigenvalues, sorted by magnitude.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues with the unit values of eliminated dofs removed.
    pub active: Vec<f64>,
    /// How many unit eigenvalues were attributed to eliminated dofs and removed.
    pub removed_units: usize,
    pub kappa: f64,
    /// Uses the second-smallest magnitude.
    pub kappa_eff: f64,
    /// Number of near-kernel values excluded from the hull.
    pub drop: usize,
    pub hull: Option<(f64, f64, f64, f64)>,
}

impl Spectrum {
    /// `eliminated` unit eigenvalues are removed when at least that many eigenvalues are
    /// within `1e-10` of one; otherwise all values are kept.
    pub fn new(eigenvalues: Vec<f64>, eliminated: usize, drop: usize) -> Result<Self> {
        let units = eigenvalues.iter().filter(|v| (*v - 1.0).abs() <= 1e-10).count();
        let (active, removed_units) = if eliminated > 0 && units >= eliminated {
            let mut left = eliminated;
            let active = eigenvalues
                .iter()
                .copied()
                .filter(|v| {
                    if left > 0 && (v - 1.0).abs() <= 1e-10 {
                        left -= 1;
                        false
                    } else {
                        true
                    }
                })
                .collect();
            (active, eliminated)
        } else {
            (eigenvalues.clone(), 0)
        };
        if active.len() < 2 {
            return Err(Error::InvalidArgument("spectrum needs at least two eigenvalues".into()));
        }
        let (kappa, kappa_eff) = condition_numbers(&active, 1)?;
        let hull = hull(&active, drop);
        Ok(Self { eigenvalues, active, removed_units, kappa, kappa_eff, drop, hull })
    }

    pub fn smallest(&self) -> f64 {
        self.active[0]
    }

    /// `kappa_eff` after dropping `drop` near-kernel values.
    pub fn kappa_dropped(&self, drop: usize) -> Result<f64> {
        Ok(condition_numbers(&self.active, drop)?.1)
    }

    /// One eigenvalue per row under the header `index,eigenvalue`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,eigenvalue")?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{i},{v:.16e}")?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.eigenvalues.len(),
            "removed_units": self.removed_units,
            "kappa": self.kappa,
            "kappa_eff": self.kappa_eff,
            "drop": self.drop,
            "smallest": self.smallest(),
            "hull": self.hull.map(|(a, b, c, d)| [a, b, c, d]),
        })
    }
}
