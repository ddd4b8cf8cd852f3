//! Preconditioned MINRES with Lanczos capture, harmonic Ritz values and the
//! stagnation factor `F_k`.

use std::io::Write;
use std::ops::Range;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{dot, LinearOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinresOptions {
    /// Stop once the preconditioned residual norm drops by this factor.
    pub reduction: f64,
    pub maxit: usize,
    /// Absolute floor on the preconditioned residual norm.
    pub atol: f64,
    /// Keep Lanczos vectors, re-orthogonalize, and record harmonic Ritz values.
    pub diagnostic: bool,
}

impl Default for MinresOptions {
    fn default() -> Self {
        Self { reduction: 1e-12, maxit: 2000, atol: 1e-14, diagnostic: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    ZeroRhs,
    MaxIterations,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolveLog {
    /// Preconditioned residual norms; entry 0 is the initial residual.
    pub residuals: Vec<f64>,
    /// Lanczos diagonal `alpha_1..alpha_k`.
    pub alphas: Vec<f64>,
    /// Lanczos off-diagonal: entry `i` couples steps `i+1` and `i+2`, so after `k`
    /// steps the last entry extends the tridiagonal to `(k+1) x k`.
    pub betas: Vec<f64>,
    /// Harmonic Ritz values after each iteration (diagnostic mode).
    pub harmonic_ritz: Vec<Vec<f64>>,
    /// Set when a harmonic shift was singular and its value dropped.
    pub ritz_flagged: Vec<bool>,
    /// `F_k` per iteration once a spectrum has been supplied.
    pub f_factor: Vec<Option<f64>>,
    pub termination: Option<Termination>,
    /// Largest `|(v_i, v_j)_B|` over distinct stored Lanczos vectors (diagnostic mode).
    pub orthogonality: Option<f64>,
}

impl SolveLog {
    pub fn iterations(&self) -> usize {
        self.residuals.len().saturating_sub(1)
    }

    pub fn converged(&self) -> bool {
        matches!(self.termination, Some(Termination::Converged | Termination::ZeroRhs))
    }

    /// Harmonic Ritz value of smallest magnitude at iteration `k >= 1`.
    pub fn theta_min(&self, k: usize) -> Option<f64> {
        self.harmonic_ritz
            .get(k.checked_sub(1)?)?
            .iter()
            .copied()
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
    }

    /// Fills `f_factor` from the true spectrum (sorted by magnitude).
    pub fn annotate_f_factor(&mut self, spectrum: &[f64]) {
        self.f_factor = self
            .harmonic_ritz
            .iter()
            .map(|t| (!t.is_empty() && spectrum.len() >= 2).then(|| compute_f_factor(t, spectrum)))
            .collect();
    }

    pub fn plateaus(&self, min_len: usize, ratio: f64) -> Vec<Range<usize>> {
        detect_plateaus(&self.residuals, min_len, ratio)
    }

    /// CSV with header `iteration,residual,theta_min,F_k`; unavailable values are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,residual,theta_min,F_k")?;
        for (k, r) in self.residuals.iter().enumerate() {
            let theta = self.theta_min(k).map(|t| format!("{t:.16e}")).unwrap_or_default();
            let f = k
                .checked_sub(1)
                .and_then(|i| self.f_factor.get(i).copied().flatten())
                .map(|f| format!("{f:.16e}"))
                .unwrap_or_default();
            writeln!(w, "{k},{r:.16e},{theta},{f}")?;
        }
        Ok(())
    }
}

/// Solves `A x = b` by MINRES preconditioned with the SPD operator `m`, starting from `x0`
/// (zero when `None`). Follows the Paige–Saunders recurrence; residual norms are measured
/// in the `m` inner product.
pub fn minres_solve(
    a: &dyn LinearOperator,
    m: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &MinresOptions,
) -> Result<(Vec<f64>, SolveLog)> {
    let n = a.dim();
    if b.len() != n || m.dim() != n {
        return Err(Error::InvalidArgument("operator, preconditioner and rhs sizes differ".into()));
    }
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let mut log = SolveLog::default();

    let ax = a.apply_vec(&x);
    let mut r1: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut y = m.apply_vec(&r1);
    let beta1sq = dot(&r1, &y);
    if beta1sq < 0.0 {
        return Err(Error::IndefinitePreconditioner { value: beta1sq, iteration: 0 });
    }
    let beta1 = beta1sq.sqrt();
    log.residuals.push(beta1);
    if beta1 == 0.0 {
        log.termination = Some(Termination::ZeroRhs);
        return Ok((x, log));
    }

    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (0.0, beta1);
    let (mut dbar, mut epsln, mut phibar) = (0.0, 0.0, beta1);
    let (mut cs, mut sn) = (-1.0f64, 0.0f64);
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];

    // dual pairs (q_j, v_j) with v_j = M q_j and (v_i, q_j) = delta_ij
    let mut qs: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = Vec::new();
    if opts.diagnostic {
        qs.push(r1.iter().map(|t| t / beta1).collect());
        vs.push(y.iter().map(|t| t / beta1).collect());
    }

    log.termination = Some(Termination::MaxIterations);
    for itn in 1..=opts.maxit {
        let s = 1.0 / beta;
        v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = s * yi);
        a.apply(&v, &mut y);
        if itn >= 2 {
            let c = beta / oldb;
            y.iter_mut().zip(&r1).for_each(|(yi, ri)| *yi -= c * ri);
        }
        let alfa = dot(&v, &y);
        let c = alfa / beta;
        y.iter_mut().zip(&r2).for_each(|(yi, ri)| *yi -= c * ri);
        std::mem::swap(&mut r1, &mut r2);
        std::mem::swap(&mut r2, &mut y);
        if opts.diagnostic {
            for (qj, vj) in qs.iter().zip(&vs) {
                let c = dot(vj, &r2);
                r2.iter_mut().zip(qj).for_each(|(ri, qi)| *ri -= c * qi);
            }
        }
        m.apply(&r2, &mut y);
        oldb = beta;
        let betasq = dot(&r2, &y);
        if betasq < 0.0 {
            return Err(Error::IndefinitePreconditioner { value: betasq, iteration: itn });
        }
        beta = betasq.sqrt();
        log.alphas.push(alfa);
        log.betas.push(beta);
        if opts.diagnostic && beta > 0.0 {
            qs.push(r2.iter().map(|t| t / beta).collect());
            vs.push(y.iter().map(|t| t / beta).collect());
        }

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        log.residuals.push(phibar);

        if opts.diagnostic {
            let (theta, flagged) = harmonic_ritz(&log.alphas, &log.betas)?;
            log.harmonic_ritz.push(theta);
            log.ritz_flagged.push(flagged);
        }
        if phibar <= opts.reduction * beta1 || phibar <= opts.atol || beta == 0.0 {
            log.termination = Some(Termination::Converged);
            break;
        }
    }

    if opts.diagnostic {
        let mut worst: f64 = 0.0;
        for i in 0..vs.len() {
            for j in 0..i {
                worst = worst.max(dot(&vs[i], &qs[j]).abs());
            }
        }
        log.orthogonality = Some(worst);
    }
    Ok((x, log))
}

/// Harmonic Ritz values from `k` Lanczos steps: the eigenvalues `theta` of the pencil
/// `(T_ext^T T_ext, T)`. Computed as reciprocals of the eigenvalues of `L^{-1} T L^{-T}`
/// with `T_ext^T T_ext = L L^T`; reciprocals of (numerically) zero values are dropped and
/// flagged. Returns the values sorted ascending.
pub fn harmonic_ritz(alphas: &[f64], betas: &[f64]) -> Result<(Vec<f64>, bool)> {
    let k = alphas.len();
    if k == 0 || betas.len() < k {
        return Err(Error::InvalidArgument("harmonic Ritz values need k >= 1 Lanczos steps".into()));
    }
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i == j + 1 {
            betas[j]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let mut g = t.transpose() * &t;
    g[(k - 1, k - 1)] += betas[k - 1] * betas[k - 1];
    let llt = g
        .llt(Side::Lower)
        .map_err(|e| Error::Eigen(format!("harmonic Ritz Gram matrix: {e:?}")))?;
    let l = llt.L();
    let mut x = t.clone();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, x.as_mut(), faer::Par::Seq);
    let mut c = x.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), faer::Par::Seq);
    let c = Mat::<f64>::from_fn(k, k, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let nu = c
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("harmonic Ritz pencil: {e:?}")))?;
    let scale = nu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut flagged = false;
    let mut theta: Vec<f64> = nu
        .iter()
        .filter_map(|&v| {
            if v.abs() <= 1e-14 * scale {
                flagged = true;
                None
            } else {
                Some(1.0 / v)
            }
        })
        .collect();
    theta.sort_by(f64::total_cmp);
    Ok((theta, flagged))
}

/// `max_{k>=2} |theta_1/lambda_1| |lambda_1 - lambda_k| / |theta_1 - lambda_k|`, where
/// `spectrum` is sorted by magnitude and `theta_1` is the harmonic Ritz value closest to
/// `lambda_1`. Returns `+inf` when `theta_1` coincides with another eigenvalue.
pub fn compute_f_factor(theta: &[f64], spectrum: &[f64]) -> f64 {
    assert!(spectrum.len() >= 2 && !theta.is_empty());
    let l1 = spectrum[0];
    let t1 = theta
        .iter()
        .copied()
        .min_by(|a, b| (a - l1).abs().total_cmp(&(b - l1).abs()))
        .unwrap();
    let mut f: f64 = 0.0;
    for &lk in &spectrum[1..] {
        let gap = (t1 - lk).abs();
        if gap <= 1e-14 {
            return f64::INFINITY;
        }
        f = f.max((t1 / l1).abs() * (l1 - lk).abs() / gap);
    }
    f
}

/// Maximal runs of at least `min_len` consecutive iterations whose residual ratio
/// `r_k / r_{k-1}` exceeds `ratio`. Ranges index iterations (`k` in `1..`).
pub fn detect_plateaus(residuals: &[f64], min_len: usize, ratio: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for k in 1..=residuals.len() {
        let slow = k < residuals.len() && residuals[k] > ratio * residuals[k - 1];
        match (slow, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                if k - s >= min_len {
                    out.push(s..k);
                }
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Outcome of checking `r_{m+j} <= 2 F_m rho^{floor(j/2)} r_0` over all logged pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub rho: f64,
    pub pairs: usize,
    pub violations: usize,
    /// Largest `lhs / rhs` over all pairs.
    pub worst_ratio: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Convergence factor of the two-interval Chebyshev bound for `[a,b] U [c,d]`.
pub fn two_interval_rho(hull: (f64, f64, f64, f64)) -> f64 {
    let (a, b, c, d) = hull;
    let ad = (a * d).abs().sqrt();
    let bc = (b * c).abs().sqrt();
    (ad - bc) / (ad + bc)
}

/// Enlarges the shorter interval so both have equal length.
pub fn symmetrize_hull(hull: (f64, f64, f64, f64)) -> (f64, f64, f64, f64) {
    let (a, b, c, d) = hull;
    let (ln, lp) = (b - a, d - c);
    if ln < lp {
        (b - lp, b, c, d)
    } else {
        (a, b, c, c + ln)
    }
}

/// Checks the residual bound on a log whose `f_factor` has been annotated.
pub fn check_residual_bound(log: &SolveLog, hull: (f64, f64, f64, f64)) -> BoundCheck {
    let rho = two_interval_rho(hull);
    let r = &log.residuals;
    let r0 = r[0];
    let (mut pairs, mut violations, mut worst) = (0, 0, 0.0f64);
    for (i, f) in log.f_factor.iter().enumerate() {
        let Some(f) = *f else { continue };
        let m = i + 1;
        for j in 0..r.len() - m {
            let rhs = 2.0 * f * rho.powi((j / 2) as i32);
            let lhs = r[m + j] / r0;
            pairs += 1;
            let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
            worst = worst.max(ratio);
            if ratio > 1.0 {
                violations += 1;
            }
        }
    }
    BoundCheck { rho, pairs, violations, worst_ratio: worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;

    fn diag(d: &[f64]) -> CsrMatrix {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        CsrMatrix::from_triplets(d.len(), d.len(), &t)
    }

    #[test]
    fn perfectly_preconditioned_system_takes_one_step() {
        let a = diag(&[2.0, 4.0, 8.0]);
        let m = diag(&[0.5, 0.25, 0.125]);
        let b = [1.0, 2.0, 3.0];
        let (x, log) = minres_solve(&a, &m, &b, None, &MinresOptions::default()).unwrap();
        assert_eq!(log.iterations(), 1);
        assert!((x[2] - 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_indefinite() {
        let a = diag(&[1.0, -1.0]);
        let m = CsrMatrix::identity(2);
        let (x, log) = minres_solve(&a, &m, &[1.0, 1.0], None, &MinresOptions::default()).unwrap();
        assert_eq!(log.iterations(), 2);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] + 1.0).abs() < 1e-14);
        assert!(*log.residuals.last().unwrap() < 1e-14);
    }

    #[test]
    fn zero_rhs_stops_immediately() {
        let a = diag(&[1.0, 2.0]);
        let m = CsrMatrix::identity(2);
        let (x, log) = minres_solve(&a, &m, &[0.0, 0.0], None, &MinresOptions::default()).unwrap();
        assert_eq!(log.iterations(), 0);
        assert_eq!(log.termination, Some(Termination::ZeroRhs));
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn indefinite_preconditioner_is_an_error() {
        let a = diag(&[1.0, 2.0]);
        let m = diag(&[-1.0, -1.0]);
        let r = minres_solve(&a, &m, &[1.0, 1.0], None, &MinresOptions::default());
        assert!(matches!(r, Err(Error::IndefinitePreconditioner { .. })));
    }

    #[test]
    fn one_step_harmonic_ritz() {
        let (t, flagged) = harmonic_ritz(&[0.7], &[1.3]).unwrap();
        assert!(!flagged);
        assert!((t[0] - (0.7f64.powi(2) + 1.3f64.powi(2)) / 0.7).abs() < 1e-13);
    }

    #[test]
    fn full_dimension_recovers_eigenvalues() {
        let a = diag(&[1.0, 2.0]);
        let m = CsrMatrix::identity(2);
        let opts = MinresOptions { diagnostic: true, ..Default::default() };
        let (_, log) = minres_solve(&a, &m, &[1.0, 1.0], None, &opts).unwrap();
        // after two steps beta_3 = 0 and the pencil reduces to T itself
        let t = &log.harmonic_ritz[1];
        assert!((t[0] - 1.0).abs() < 1e-12 && (t[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn f_factor_examples() {
        assert_eq!(compute_f_factor(&[0.01], &[0.01, 1.0, 2.0]), 1.0);
        let f = compute_f_factor(&[0.02, 5.0], &[0.01, 1.0, 2.0]);
        let expect = f64::max(2.0 * 0.99 / 0.98, 2.0 * 1.99 / 1.98);
        assert!((f - expect).abs() < 1e-12);
        assert!((f - 2.0204).abs() < 1e-3);
        assert_eq!(compute_f_factor(&[1.0], &[0.01, 1.0, 2.0]), f64::INFINITY);
    }

    #[test]
    fn plateau_detection() {
        let mut r = vec![1.0];
        for _ in 0..5 {
            r.push(r.last().unwrap() * 0.5);
        }
        for _ in 0..12 {
            r.push(r.last().unwrap() * 0.995);
        }
        for _ in 0..5 {
            r.push(r.last().unwrap() * 0.1);
        }
        assert_eq!(detect_plateaus(&r, 10, 0.99), vec![6..18]);
        assert!(detect_plateaus(&r[..15], 10, 0.99).is_empty());
    }

    #[test]
    fn csv_header_and_rows() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let m = CsrMatrix::identity(3);
        let opts = MinresOptions { diagnostic: true, ..Default::default() };
        let (_, mut log) = minres_solve(&a, &m, &[1.0, 1.0, 1.0], None, &opts).unwrap();
        log.annotate_f_factor(&[1.0, 2.0, 3.0]);
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "iteration,residual,theta_min,F_k");
        assert_eq!(lines.len(), log.iterations() + 2);
        assert!(lines[1].ends_with(",,"));
        assert_eq!(lines[2].split(',').count(), 4);
    }

    #[test]
    fn rho_and_symmetrization() {
        // symmetric intervals reduce to (kappa - 1) / (kappa + 1) with kappa = 4
        let rho = two_interval_rho((-4.0, -1.0, 1.0, 4.0));
        assert!((rho - 0.6).abs() < 1e-15);
        assert_eq!(symmetrize_hull((-2.0, -1.0, 1.0, 4.0)), (-4.0, -1.0, 1.0, 4.0));
    }
}
