//! Fractional interface operators on the piecewise-constant multiplier space, realized
//! spectrally through the pencil of a finite-volume `(-Laplace + I)` and the facet mass.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::assembly::PhysParams;
use crate::error::{Error, Result};
use crate::mesh::{BcConfig, Mesh};

/// Condition imposed where the interface meets the outer boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointBc {
    Free,
    /// Extension by zero beyond the endpoints.
    Zero,
}

/// Endpoint conditions of the `mu^{-1}` term and of the `K` term for a configuration.
pub fn endpoint_conditions(config: BcConfig) -> (EndpointBc, EndpointBc) {
    use EndpointBc::*;
    match config {
        BcConfig::NN => (Free, Zero),
        BcConfig::EE => (Zero, Free),
        BcConfig::NE | BcConfig::NEstar | BcConfig::MultiInclusion => (Free, Free),
        BcConfig::EN | BcConfig::ENstar => (Zero, Zero),
    }
}

/// Generalized eigenpairs of `(A_gamma, M)` with `U^T M U = I`.
#[derive(Clone, Debug)]
pub struct InterfaceSpectralBasis {
    /// Diagonal of the mass matrix (facet lengths).
    pub m: Vec<f64>,
    pub a_gamma: Mat<f64>,
    pub u: Mat<f64>,
    /// Ascending eigenvalues.
    pub d: Vec<f64>,
}

impl InterfaceSpectralBasis {
    /// Facets are given in path order; consecutive facets are adjacent, and so are the
    /// last and the first when `closed`.
    pub fn build(lengths: &[f64], midpoints: &[[f64; 2]], closed: bool, endpoint: EndpointBc) -> Result<Self> {
        let n = lengths.len();
        if n == 0 || midpoints.len() != n {
            return Err(Error::Config("interface basis needs matching, non-empty facet data".into()));
        }
        if let Some(l) = lengths.iter().find(|&&l| !(l > 0.0)) {
            return Err(Error::Config(format!("degenerate interface facet of length {l}")));
        }
        let mut a = Mat::<f64>::zeros(n, n);
        let mut link = |i: usize, j: usize| {
            let (p, q) = (midpoints[i], midpoints[j]);
            let w = 1.0 / (p[0] - q[0]).hypot(p[1] - q[1]);
            a[(i, i)] += w;
            a[(j, j)] += w;
            a[(i, j)] -= w;
            a[(j, i)] -= w;
        };
        for i in 0..n.saturating_sub(1) {
            link(i, i + 1);
        }
        if closed && n > 2 {
            link(n - 1, 0);
        }
        if !closed && endpoint == EndpointBc::Zero {
            a[(0, 0)] += 2.0 / lengths[0];
            a[(n - 1, n - 1)] += 2.0 / lengths[n - 1];
        }
        for i in 0..n {
            a[(i, i)] += lengths[i];
        }

        let isq: Vec<f64> = lengths.iter().map(|l| 1.0 / l.sqrt()).collect();
        let c = Mat::<f64>::from_fn(n, n, |i, j| isq[i] * a[(i, j)] * isq[j]);
        let eig = c
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen(format!("interface pencil: {e:?}")))?;
        let d: Vec<f64> = eig.S().column_vector().iter().copied().collect();
        let q = eig.U();
        let u = Mat::<f64>::from_fn(n, n, |i, j| isq[i] * q[(i, j)]);
        Ok(Self { m: lengths.to_vec(), a_gamma: a, u, d })
    }

    /// Basis for one connected interface component of a mesh.
    pub fn for_component(mesh: &Mesh, component: usize, endpoint: EndpointBc) -> Result<Self> {
        let comp = mesh
            .interface_components
            .get(component)
            .ok_or_else(|| Error::Config(format!("no interface component {component}")))?;
        let facets = &mesh.interface[comp.range()];
        let lengths: Vec<f64> = facets.iter().map(|f| f.length).collect();
        let mids: Vec<[f64; 2]> = facets.iter().map(|f| f.midpoint).collect();
        Self::build(&lengths, &mids, comp.closed, endpoint)
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// `M U diag(f(d)) U^T M`.
    pub fn spectral_matrix(&self, f: impl Fn(f64) -> f64) -> Mat<f64> {
        let n = self.dim();
        let mu = Mat::<f64>::from_fn(n, n, |i, j| self.m[i] * self.u[(i, j)]);
        let fd: Vec<f64> = self.d.iter().map(|&d| f(d)).collect();
        // mirrored entrywise so the result is bitwise symmetric
        let mut out = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = (0..n).map(|k| mu[(i, k)] * fd[k] * mu[(j, k)]).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// `U diag(f(d)) U^T r`.
    pub fn spectral_apply(&self, f: impl Fn(f64) -> f64, r: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut c = vec![0.0; n];
        for (j, cj) in c.iter_mut().enumerate() {
            let s: f64 = (0..n).map(|i| self.u[(i, j)] * r[i]).sum();
            *cj = f(self.d[j]) * s;
        }
        (0..n).map(|i| (0..n).map(|j| self.u[(i, j)] * c[j]).sum()).collect()
    }
}

/// Spectral weights `mu^{-1} d^{-1/2} + K d^{1/2}`.
pub fn s_weight(params: &PhysParams, d: f64) -> f64 {
    d.powf(-0.5) / params.mu + params.k * d.sqrt()
}

/// `S = M U diag(s) U^T M` with both terms realized on the same basis.
pub fn multiplier_block_matrix(basis: &InterfaceSpectralBasis, params: &PhysParams) -> Mat<f64> {
    basis.spectral_matrix(|d| s_weight(params, d))
}

/// `U diag(1/s) U^T r`, the exact inverse of [`multiplier_block_matrix`].
pub fn apply_s_inverse(basis: &InterfaceSpectralBasis, params: &PhysParams, r: &[f64]) -> Vec<f64> {
    basis.spectral_apply(|d| 1.0 / s_weight(params, d), r)
}

#[derive(Debug)]
enum ComponentOperator {
    /// Both terms share one basis: closed-form spectral inverse.
    Shared(InterfaceSpectralBasis),
    /// The terms need different endpoint conditions: summed matrix, dense Cholesky.
    Split { s: Mat<f64>, llt: Llt<f64> },
}

/// The multiplier block for a whole mesh: block diagonal over interface components.
#[derive(Debug)]
pub struct InterfaceOperator {
    params: PhysParams,
    components: Vec<(std::ops::Range<usize>, ComponentOperator)>,
    dim: usize,
}

impl InterfaceOperator {
    pub fn new(mesh: &Mesh, params: PhysParams) -> Result<Self> {
        let config = mesh
            .config
            .ok_or_else(|| Error::Config("mesh boundaries are not tagged".into()))?;
        let (e_mu, e_k) = endpoint_conditions(config);
        let mut components = Vec::new();
        for (i, comp) in mesh.interface_components.iter().enumerate() {
            let op = if e_mu == e_k || comp.closed {
                ComponentOperator::Shared(InterfaceSpectralBasis::for_component(mesh, i, e_mu)?)
            } else {
                let b_mu = InterfaceSpectralBasis::for_component(mesh, i, e_mu)?;
                let b_k = InterfaceSpectralBasis::for_component(mesh, i, e_k)?;
                let s = b_mu.spectral_matrix(|d| d.powf(-0.5) / params.mu)
                    + b_k.spectral_matrix(|d| params.k * d.sqrt());
                let llt = s
                    .llt(Side::Lower)
                    .map_err(|e| Error::Factorization(format!("interface operator: {e:?}")))?;
                ComponentOperator::Split { s, llt }
            };
            components.push((comp.range(), op));
        }
        Ok(Self { params, components, dim: mesh.interface.len() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn matrix(&self) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.dim, self.dim);
        for (r, op) in &self.components {
            let s = match op {
                ComponentOperator::Shared(b) => multiplier_block_matrix(b, &self.params),
                ComponentOperator::Split { s, .. } => s.clone(),
            };
            for i in 0..r.len() {
                for j in 0..r.len() {
                    out[(r.start + i, r.start + j)] = s[(i, j)];
                }
            }
        }
        out
    }

    pub fn apply_inverse(&self, r: &[f64], out: &mut [f64]) {
        for (range, op) in &self.components {
            let rr = &r[range.clone()];
            match op {
                ComponentOperator::Shared(b) => {
                    out[range.clone()].copy_from_slice(&apply_s_inverse(b, &self.params, rr));
                }
                ComponentOperator::Split { llt, .. } => {
                    let mut x = Mat::<f64>::from_fn(rr.len(), 1, |i, _| rr[i]);
                    llt.solve_in_place(x.as_mut());
                    for (i, o) in out[range.clone()].iter_mut().enumerate() {
                        *o = x[(i, 0)];
                    }
                }
            }
        }
    }
}
