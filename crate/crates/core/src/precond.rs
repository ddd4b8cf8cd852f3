//! Block-diagonal Riesz-map preconditioner and its low-rank deflation update.

use std::ops::Range;

use faer::linalg::solvers::{Llt, Solve};
use faer::sparse::linalg::solvers::Llt as SparseLlt;
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::assembly::{BlockSystem, PhysParams};
use crate::error::{Error, Result};
use crate::frac_interface::InterfaceOperator;
use crate::mesh::{BcConfig, Mesh};
use crate::spaces::{BlockLayout, Field};
use crate::sparse::{dot, CsrMatrix, LinearOperator};

enum BlockSolve {
    Sparse(SparseLlt<usize, f64>),
    Diagonal(Vec<f64>),
    Interface(InterfaceOperator),
}

/// Exact inverse of a block-diagonal SPD matrix, one factorization per block.
pub struct BlockPreconditioner {
    blocks: Vec<(Range<usize>, BlockSolve)>,
    dim: usize,
}

impl std::fmt::Debug for BlockPreconditioner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockPreconditioner")
            .field("blocks", &self.blocks.iter().map(|b| b.0.clone()).collect::<Vec<_>>())
            .field("dim", &self.dim)
            .finish()
    }
}

fn factor_block(n: &CsrMatrix, r: Range<usize>, name: &str) -> Result<BlockSolve> {
    let blk = n.submatrix(r.clone(), r);
    if blk.is_diagonal() {
        let d = blk.diagonal();
        if let Some(v) = d.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::Factorization(format!("{name} block has diagonal entry {v}")));
        }
        return Ok(BlockSolve::Diagonal(d.iter().map(|v| 1.0 / v).collect()));
    }
    let llt = blk
        .to_faer()?
        .sp_cholesky(Side::Lower)
        .map_err(|e| Error::Factorization(format!("{name} block is not positive definite: {e:?}")))?;
    Ok(BlockSolve::Sparse(llt))
}

impl BlockPreconditioner {
    /// Factorizes the four volume blocks of `system.n`; the multiplier block is inverted
    /// through `iface`, which must be the operator that produced it.
    pub fn new(system: &BlockSystem, iface: InterfaceOperator) -> Result<Self> {
        let l = &system.layout;
        if iface.dim() != l.size(Field::Multiplier) {
            return Err(Error::Assembly("interface operator does not match the layout".into()));
        }
        let names = ["Stokes velocity", "Darcy velocity", "Stokes pressure", "Darcy pressure"];
        let mut blocks = Vec::new();
        for (f, name) in Field::ALL[..4].iter().zip(names) {
            let r = l.range(*f);
            if !r.is_empty() {
                blocks.push((r.clone(), factor_block(&system.n, r, name)?));
            }
        }
        blocks.push((l.range(Field::Multiplier), BlockSolve::Interface(iface)));
        Ok(Self { blocks, dim: l.dim() })
    }

    /// Generic variant: factorizes every listed diagonal block of `n`.
    pub fn from_blocks(n: &CsrMatrix, ranges: &[Range<usize>]) -> Result<Self> {
        let blocks = ranges
            .iter()
            .enumerate()
            .map(|(i, r)| Ok((r.clone(), factor_block(n, r.clone(), &format!("#{i}"))?)))
            .collect::<Result<_>>()?;
        Ok(Self { blocks, dim: n.nrows() })
    }
}

impl LinearOperator for BlockPreconditioner {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, solve) in &self.blocks {
            let xr = &x[r.clone()];
            match solve {
                BlockSolve::Diagonal(inv) => {
                    for ((yi, xi), d) in y[r.clone()].iter_mut().zip(xr).zip(inv) {
                        *yi = xi * d;
                    }
                }
                BlockSolve::Sparse(llt) => {
                    let mut m = Mat::<f64>::from_fn(xr.len(), 1, |i, _| xr[i]);
                    llt.solve_in_place(m.as_mut());
                    for (i, yi) in y[r.clone()].iter_mut().enumerate() {
                        *yi = m[(i, 0)];
                    }
                }
                BlockSolve::Interface(op) => op.apply_inverse(xr, &mut y[r.clone()]),
            }
        }
    }
}

/// How the deflation weight scales with the parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaRule {
    /// `gamma = 1 / (mu K)`.
    InverseMuK,
    /// `gamma = mu K`.
    MuK,
}

impl GammaRule {
    pub fn gamma(self, params: &PhysParams, multiplier: f64) -> f64 {
        let mk = params.mu * params.k;
        multiplier
            * match self {
                GammaRule::InverseMuK => 1.0 / mk,
                GammaRule::MuK => mk,
            }
    }
}

/// Near-kernel vectors for a configuration: indicators of the pressure that loses
/// inf-sup stability together with the multiplier. Empty when there is no near kernel.
pub fn deflation_vectors(mesh: &Mesh, layout: &BlockLayout) -> (Vec<Vec<f64>>, Option<GammaRule>) {
    let n = layout.dim();
    let ones = |fields: &[Field]| {
        let mut w = vec![0.0; n];
        for &f in fields {
            layout.range(f).for_each(|i| w[i] = 1.0);
        }
        w
    };
    match mesh.config {
        Some(BcConfig::NE) => (vec![ones(&[Field::DarcyPressure, Field::Multiplier])], Some(GammaRule::InverseMuK)),
        Some(BcConfig::EN) => (vec![ones(&[Field::StokesPressure, Field::Multiplier])], Some(GammaRule::MuK)),
        Some(BcConfig::MultiInclusion) => {
            let vecs = (0..mesh.num_darcy_components())
                .map(|comp| {
                    let mut w = vec![0.0; n];
                    for &c in &layout.darcy_cells {
                        if mesh.cells[c].domain == crate::mesh::Subdomain::Darcy(comp) {
                            w[layout.p_d(c).unwrap()] = 1.0;
                        }
                    }
                    for (i, f) in mesh.interface.iter().enumerate() {
                        if f.component == comp {
                            w[layout.lambda(i)] = 1.0;
                        }
                    }
                    w
                })
                .collect();
            (vecs, Some(GammaRule::InverseMuK))
        }
        _ => (Vec::new(), None),
    }
}

/// Low-rank update `P E^{-1} P^T` with `E = P^T (gamma N) P`.
pub struct Deflation {
    pub p: Vec<Vec<f64>>,
    pub gamma: f64,
    pub e: Mat<f64>,
    llt: Option<Llt<f64>>,
}

impl std::fmt::Debug for Deflation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Deflation").field("rank", &self.p.len()).field("gamma", &self.gamma).field("e", &self.e).finish()
    }
}

impl Deflation {
    pub fn new(p: Vec<Vec<f64>>, gamma: f64, n: &dyn LinearOperator) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("deflation weight must be positive, got {gamma}")));
        }
        let np: Vec<Vec<f64>> = p.iter().map(|w| n.apply_vec(w)).collect();
        let m = p.len();
        let e = Mat::<f64>::from_fn(m, m, |i, j| gamma * 0.5 * (dot(&p[i], &np[j]) + dot(&p[j], &np[i])));
        let llt = if m == 0 {
            None
        } else {
            Some(
                e.llt(Side::Lower)
                    .map_err(|err| Error::Factorization(format!("deflation matrix: {err:?}")))?,
            )
        };
        Ok(Self { p, gamma, e, llt })
    }

    pub fn empty() -> Self {
        Self { p: Vec::new(), gamma: 1.0, e: Mat::zeros(0, 0), llt: None }
    }

    pub fn rank(&self) -> usize {
        self.p.len()
    }

    /// `z += P E^{-1} P^T r`.
    pub fn add_correction(&self, r: &[f64], z: &mut [f64]) {
        let Some(llt) = &self.llt else { return };
        let m = self.rank();
        let mut c = Mat::<f64>::from_fn(m, 1, |i, _| dot(&self.p[i], r));
        llt.solve_in_place(c.as_mut());
        for (i, w) in self.p.iter().enumerate() {
            for (zk, wk) in z.iter_mut().zip(w) {
                *zk += c[(i, 0)] * wk;
            }
        }
    }
}

/// `B r + P E^{-1} P^T r`.
pub fn apply_deflated(bp: &dyn LinearOperator, defl: &Deflation, r: &[f64]) -> Vec<f64> {
    let mut z = bp.apply_vec(r);
    defl.add_correction(r, &mut z);
    z
}

/// The deflated preconditioner as an operator.
pub struct DeflatedPreconditioner<'a> {
    pub base: &'a dyn LinearOperator,
    pub deflation: &'a Deflation,
}

impl LinearOperator for DeflatedPreconditioner<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.apply(x, y);
        self.deflation.add_correction(x, y);
    }
}

/// Dense inverse of the deflated preconditioner by the Woodbury identity:
/// `N - N P ((1 + gamma) P^T N P)^{-1} P^T N`.
pub fn deflated_riesz_dense(n: &CsrMatrix, defl: &Deflation) -> Result<Mat<f64>> {
    let mut out = n.to_dense();
    let m = defl.rank();
    if m == 0 {
        return Ok(out);
    }
    let np: Vec<Vec<f64>> = defl.p.iter().map(|w| n.apply_vec(w)).collect();
    let g = Mat::<f64>::from_fn(m, m, |i, j| (1.0 + defl.gamma) * dot(&defl.p[i], &np[j]));
    let llt = g
        .llt(Side::Lower)
        .map_err(|e| Error::Factorization(format!("Woodbury capacitance matrix: {e:?}")))?;
    let dim = n.nrows();
    let npm = Mat::<f64>::from_fn(dim, m, |i, j| np[j][i]);
    let mut h = npm.transpose().to_owned();
    llt.solve_in_place(h.as_mut());
    out -= &npm * &h;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> CsrMatrix {
        let g = Mat::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = &g * g.transpose() + Mat::<f64>::identity(n, n) * faer::Scale(0.5);
        CsrMatrix::from_dense(a.as_ref())
    }

    #[test]
    fn identity_stub() {
        let n = CsrMatrix::identity(6);
        let b = BlockPreconditioner::from_blocks(&n, &[0..2, 2..6]).unwrap();
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        assert_eq!(b.apply_vec(&x), x);
    }

    #[test]
    fn random_spd_block_is_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = random_spd(10, &mut rng);
        let b = BlockPreconditioner::from_blocks(&n, &[0..10]).unwrap();
        let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = b.apply_vec(&n.apply_vec(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_block_is_rejected() {
        let n = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(BlockPreconditioner::from_blocks(&n, &[0..2]), Err(Error::Factorization(_))));
    }

    #[test]
    fn rank_one_update_by_hand() {
        let n = CsrMatrix::identity(4);
        let b = BlockPreconditioner::from_blocks(&n, &[0..4]).unwrap();
        let w = vec![1.0, 1.0, 1.0, 1.0];
        let d = Deflation::new(vec![w.clone()], 1.0, &n).unwrap();
        assert_eq!(d.e[(0, 0)], 4.0);
        let r = [0.5, -1.0, 2.0, 0.25];
        let z = apply_deflated(&b, &d, &r);
        let s: f64 = r.iter().sum();
        for i in 0..4 {
            assert!((z[i] - (r[i] + s / 4.0)).abs() < 1e-15);
        }
        let empty = Deflation::empty();
        assert_eq!(apply_deflated(&b, &empty, &r), r.to_vec());
    }

    #[test]
    fn deflated_operator_is_symmetric_definite_and_woodbury_inverts_it() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = random_spd(8, &mut rng);
        let b = BlockPreconditioner::from_blocks(&n, &[0..8]).unwrap();
        let p: Vec<Vec<f64>> = (0..2).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let d = Deflation::new(p, 0.3, &n).unwrap();
        let op = DeflatedPreconditioner { base: &b, deflation: &d };
        let r1: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (z1, z2) = (op.apply_vec(&r1), op.apply_vec(&r2));
        assert!((dot(&z1, &r2) - dot(&r1, &z2)).abs() < 1e-12);
        assert!(dot(&z1, &r1) > 0.0);
        let inv = deflated_riesz_dense(&n, &d).unwrap();
        let back: Vec<f64> = (0..8).map(|i| (0..8).map(|j| inv[(i, j)] * z1[j]).sum()).collect();
        for (a, b) in back.iter().zip(&r1) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn near_kernel_vectors() {
        use crate::mesh::{DomainSpec, Rect};
        use crate::spaces::build_layout;
        let spec = DomainSpec {
            stokes_rect: Rect::new(0.0, 0.0, 1.0, 1.0),
            darcy_rects: vec![Rect::new(0.0, 1.0, 1.0, 2.0)],
            base_divisions: 1,
        };
        let m = Mesh::build(&spec, 0, BcConfig::NE).unwrap();
        let l = build_layout(&m);
        let (w, rule) = deflation_vectors(&m, &l);
        assert_eq!(rule, Some(GammaRule::InverseMuK));
        assert_eq!(w.len(), 1);
        let support: Vec<usize> = (0..l.dim()).filter(|&i| w[0][i] != 0.0).collect();
        let expected: Vec<usize> = l.range(Field::DarcyPressure).chain(l.range(Field::Multiplier)).collect();
        assert_eq!(support, expected);
        assert_eq!(support.len(), 3);

        let m = Mesh::build(&spec, 0, BcConfig::EN).unwrap();
        let (w, rule) = deflation_vectors(&m, &l);
        assert_eq!(rule, Some(GammaRule::MuK));
        assert!(l.range(Field::StokesPressure).all(|i| w[0][i] == 1.0));
        assert!(l.range(Field::DarcyPressure).all(|i| w[0][i] == 0.0));

        let m = Mesh::build(&spec, 0, BcConfig::NEstar).unwrap();
        assert!(deflation_vectors(&m, &l).0.is_empty());
    }

    #[test]
    fn one_vector_per_inclusion() {
        let m = Mesh::build(&crate::mesh::DomainSpec::channel(2), 0, BcConfig::MultiInclusion).unwrap();
        let l = crate::spaces::build_layout(&m);
        let (w, _) = deflation_vectors(&m, &l);
        assert_eq!(w.len(), 2);
        assert!((0..l.dim()).all(|i| w[0][i] * w[1][i] == 0.0));
        assert!(w.iter().all(|v| v.iter().any(|&x| x != 0.0)));
    }

    #[test]
    fn gamma_scaling() {
        let p1 = PhysParams::new(1.0, 1.0, 1.0).unwrap();
        let p2 = PhysParams::new(10.0, 10.0, 1.0).unwrap();
        let ratio = GammaRule::InverseMuK.gamma(&p1, 1.0) / GammaRule::InverseMuK.gamma(&p2, 1.0);
        assert!((ratio - 100.0).abs() < 1e-12);
        assert_eq!(GammaRule::MuK.gamma(&p2, 2.0), 200.0);
    }
}
