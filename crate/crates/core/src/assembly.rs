//! Assembly of the coupled saddle-point operator, its Riesz map and right-hand sides.

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::element::{p2_grads, p2_values, rt0_div, rt0_value, Triangle};
use crate::error::{Error, Result};
use crate::frac_interface::InterfaceOperator;
use crate::mesh::{BcConfig, FacetTag, Mesh};
use crate::quadrature::{segment_rule, TriangleRule};
use crate::spaces::{build_layout, essential_dofs, BlockLayout, EssentialDofs, Field};
use crate::sparse::{eliminate_symmetric, lift_rhs, CsrMatrix};

/// Viscosity, hydraulic conductivity and the Beavers–Joseph–Saffman coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub mu: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub alpha_bjs: f64,
}

impl PhysParams {
    pub fn new(mu: f64, k: f64, alpha_bjs: f64) -> Result<Self> {
        for (name, v) in [("mu", mu), ("K", k), ("alpha_bjs", alpha_bjs)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self { mu, k, alpha_bjs })
    }

    /// Slip weight `alpha * sqrt(mu / K)`.
    pub fn beta_tau(&self) -> f64 {
        self.alpha_bjs * (self.mu / self.k).sqrt()
    }
}

/// Source and boundary data. Every term defaults to zero.
///
/// Normals passed to the interface terms are the Stokes-to-Darcy normal; `tau` is the
/// unit tangent used by the slip term. Stokes traction is `sigma n` with `n` outward.
pub trait LoadData {
    fn stokes_force(&self, _x: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }

    fn darcy_source(&self, _x: [f64; 2]) -> f64 {
        0.0
    }

    /// Defect in normal-flux continuity, `u_S.n - u_D.n`.
    fn interface_flux_defect(&self, _x: [f64; 2], _n: [f64; 2]) -> f64 {
        0.0
    }

    fn normal_stress_defect(&self, _x: [f64; 2], _n: [f64; 2]) -> f64 {
        0.0
    }

    fn tangential_stress_defect(&self, _x: [f64; 2], _n: [f64; 2], _tau: [f64; 2]) -> f64 {
        0.0
    }

    fn stokes_traction(&self, _x: [f64; 2], _n: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }

    /// Pressure on natural Darcy boundaries.
    fn darcy_boundary_pressure(&self, _x: [f64; 2]) -> f64 {
        0.0
    }

    /// Whether the essential values below are nonzero.
    fn has_essential_data(&self) -> bool {
        false
    }

    fn stokes_velocity(&self, _x: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }

    fn darcy_velocity(&self, _x: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }
}

/// All-zero data.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroLoad;

impl LoadData for ZeroLoad {}

/// Assembled coupled system with essential dofs eliminated.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub a: CsrMatrix,
    pub n: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: BlockLayout,
    pub essential: EssentialDofs,
    pub params: PhysParams,
    pub config: BcConfig,
}

impl BlockSystem {
    pub fn assemble(mesh: &Mesh, params: PhysParams, data: &dyn LoadData, iface: &InterfaceOperator) -> Result<Self> {
        let config = mesh
            .config
            .ok_or_else(|| Error::Assembly("mesh boundaries are not tagged".into()))?;
        let layout = build_layout(mesh);
        let mut essential = essential_dofs(&layout, mesh);
        if data.has_essential_data() {
            essential.set_values(mesh, &layout, |x| data.stokes_velocity(x), |x| data.darcy_velocity(x));
        }
        let raw = assemble_operator_raw(mesh, &layout, &params);
        let mut rhs = assemble_load(mesh, &layout, data);
        lift_rhs(&raw, &essential.mask, &essential.values, &mut rhs);
        let a = eliminate_symmetric(&raw, &essential.mask);
        let s = iface.matrix();
        let n = assemble_riesz(mesh, &layout, &params, &essential, s.as_ref())?;
        Ok(Self { a, n, rhs, layout, essential, params, config })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Initial guess carrying the essential values, so residuals vanish on those rows.
    pub fn initial_guess(&self) -> Vec<f64> {
        self.essential.values.clone()
    }
}

type Triplets = Vec<(usize, usize, f64)>;

fn stokes_cells(mesh: &Mesh) -> impl Iterator<Item = usize> + '_ {
    (0..mesh.cells.len()).filter(|&c| mesh.cells[c].domain.is_stokes())
}

fn darcy_cells(mesh: &Mesh) -> impl Iterator<Item = usize> + '_ {
    (0..mesh.cells.len()).filter(|&c| !mesh.cells[c].domain.is_stokes())
}

/// `2 mu (eps u, eps v) + beta_tau (u.tau, v.tau)_Gamma` on the u_S block.
fn stokes_velocity_block(mesh: &Mesh, layout: &BlockLayout, params: &PhysParams, t: &mut Triplets) {
    let rule = TriangleRule::new(4);
    let mu = params.mu;
    for c in stokes_cells(mesh) {
        let tri = mesh.triangle(c);
        let dofs = layout.cell_u_s(mesh, c);
        let mut k = [[0.0; 12]; 12];
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let g = p2_grads(&tri, l);
            let wa = w * tri.area * mu;
            for a in 0..6 {
                for b in 0..6 {
                    let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    for ci in 0..2 {
                        for di in 0..2 {
                            let diag = if ci == di { dot } else { 0.0 };
                            k[2 * a + ci][2 * b + di] += wa * (diag + g[a][di] * g[b][ci]);
                        }
                    }
                }
            }
        }
        mirror_upper(&mut k);
        push_local(t, &dofs, &dofs, &k);
    }

    let beta = params.beta_tau();
    let (s, w) = segment_rule(3);
    for f in &mesh.interface {
        let (k, tri) = local_edge(mesh, f.stokes_cell, f.facet);
        let dofs = layout.cell_u_s(mesh, f.stokes_cell);
        let tau = [-f.normal[1], f.normal[0]];
        let len = tri.edge_length(k);
        let mut m = [[0.0; 12]; 12];
        for (s, w) in s.iter().zip(&w) {
            let phi = p2_values(&Triangle::edge_bary(k, *s));
            for a in 0..6 {
                for b in 0..6 {
                    let v = beta * w * len * phi[a] * phi[b];
                    for ci in 0..2 {
                        for di in 0..2 {
                            m[2 * a + ci][2 * b + di] += v * tau[ci] * tau[di];
                        }
                    }
                }
            }
        }
        mirror_upper(&mut m);
        push_local(t, &dofs, &dofs, &m);
    }
}

/// Copies the upper triangle onto the lower one so rounding cannot break symmetry.
fn mirror_upper<const N: usize>(m: &mut [[f64; N]; N]) {
    for i in 0..N {
        for j in 0..i {
            m[i][j] = m[j][i];
        }
    }
}

/// `K^{-1} (u, v)_D`, plus `K^{-1} (div u, div v)_D` when `divdiv`.
fn darcy_velocity_block(mesh: &Mesh, layout: &BlockLayout, params: &PhysParams, divdiv: bool, t: &mut Triplets) {
    let rule = TriangleRule::new(4);
    let kinv = 1.0 / params.k;
    for c in darcy_cells(mesh) {
        let tri = mesh.triangle(c);
        let (dofs, sign) = layout.cell_u_d(mesh, c);
        let mut m = [[0.0; 3]; 3];
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let x = tri.point(l);
            let psi: [[f64; 2]; 3] = std::array::from_fn(|k| rt0_value(&tri, k, sign[k], x));
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += kinv * w * tri.area * (psi[i][0] * psi[j][0] + psi[i][1] * psi[j][1]);
                }
            }
        }
        if divdiv {
            let d: [f64; 3] = std::array::from_fn(|k| rt0_div(&tri, k, sign[k]));
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += kinv * d[i] * d[j] * tri.area;
                }
            }
        }
        mirror_upper(&mut m);
        push_local(t, &dofs, &dofs, &m);
    }
}

fn local_edge(mesh: &Mesh, c: usize, f: usize) -> (usize, Triangle) {
    let k = mesh.cell_facets[c].iter().position(|&g| g == f).expect("facet not on cell");
    (k, mesh.triangle(c))
}

fn push_local<const R: usize, const C: usize>(t: &mut Triplets, rows: &[usize; R], cols: &[usize; C], m: &[[f64; C]; R]) {
    for i in 0..R {
        for j in 0..C {
            t.push((rows[i], cols[j], m[i][j]));
        }
    }
}

/// Pushes a block and its transpose.
fn push_sym<const R: usize, const C: usize>(t: &mut Triplets, rows: &[usize; R], cols: &[usize; C], m: &[[f64; C]; R]) {
    for i in 0..R {
        for j in 0..C {
            t.push((rows[i], cols[j], m[i][j]));
            t.push((cols[j], rows[i], m[i][j]));
        }
    }
}

/// The coupled operator before essential elimination.
pub fn assemble_operator_raw(mesh: &Mesh, layout: &BlockLayout, params: &PhysParams) -> CsrMatrix {
    let mut t = Vec::new();
    stokes_velocity_block(mesh, layout, params, &mut t);
    darcy_velocity_block(mesh, layout, params, false, &mut t);

    // -(div v_S, q_S)
    let rule = TriangleRule::new(4);
    for c in stokes_cells(mesh) {
        let tri = mesh.triangle(c);
        let u = layout.cell_u_s(mesh, c);
        let p = layout.cell_p_s(mesh, c);
        let mut b = [[0.0; 12]; 3];
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            let g = p2_grads(&tri, l);
            for i in 0..3 {
                for a in 0..6 {
                    for ci in 0..2 {
                        b[i][2 * a + ci] -= w * tri.area * l[i] * g[a][ci];
                    }
                }
            }
        }
        push_sym(&mut t, &p, &u, &b);
    }

    // -(div v_D, q_D)
    for c in darcy_cells(mesh) {
        let tri = mesh.triangle(c);
        let (u, sign) = layout.cell_u_d(mesh, c);
        let p = [layout.p_d(c).unwrap()];
        let b = [std::array::from_fn(|k| -rt0_div(&tri, k, sign[k]) * tri.area)];
        push_sym(&mut t, &p, &u, &b);
    }

    // (u_S.n_S - u_D.n_S, mu)_Gamma
    let (s, w) = segment_rule(3);
    for (i, f) in mesh.interface.iter().enumerate() {
        let row = [layout.lambda(i)];
        let (k, tri) = local_edge(mesh, f.stokes_cell, f.facet);
        let len = tri.edge_length(k);
        let u = layout.cell_u_s(mesh, f.stokes_cell);
        let mut c = [[0.0; 12]; 1];
        for (s, w) in s.iter().zip(&w) {
            let phi = p2_values(&Triangle::edge_bary(k, *s));
            for a in 0..6 {
                for ci in 0..2 {
                    c[0][2 * a + ci] += w * len * phi[a] * f.normal[ci];
                }
            }
        }
        push_sym(&mut t, &row, &u, &c);
        // the RT0 dof on an interface facet has unit flux out of the Darcy side
        push_sym(&mut t, &row, &[layout.u_d(f.facet).unwrap()], &[[len]]);
    }
    CsrMatrix::from_triplets(layout.dim(), layout.dim(), &t)
}

/// The coupled operator with essential dofs eliminated symmetrically.
pub fn assemble_operator(mesh: &Mesh, layout: &BlockLayout, params: &PhysParams, essential: &EssentialDofs) -> CsrMatrix {
    eliminate_symmetric(&assemble_operator_raw(mesh, layout, params), &essential.mask)
}

/// Block-diagonal Riesz map with the multiplier block `s_block`.
pub fn assemble_riesz(
    mesh: &Mesh,
    layout: &BlockLayout,
    params: &PhysParams,
    essential: &EssentialDofs,
    s_block: MatRef<'_, f64>,
) -> Result<CsrMatrix> {
    let nl = layout.size(Field::Multiplier);
    if s_block.nrows() != nl || s_block.ncols() != nl {
        return Err(Error::Assembly(format!(
            "multiplier block is {}x{}, expected {nl}x{nl}",
            s_block.nrows(),
            s_block.ncols()
        )));
    }
    let mut t = Vec::new();
    stokes_velocity_block(mesh, layout, params, &mut t);
    darcy_velocity_block(mesh, layout, params, true, &mut t);

    let rule = TriangleRule::new(4);
    let scale = 1.0 / (2.0 * params.mu);
    for c in stokes_cells(mesh) {
        let tri = mesh.triangle(c);
        let p = layout.cell_p_s(mesh, c);
        let mut m = [[0.0; 3]; 3];
        for (l, w) in rule.bary.iter().zip(&rule.weights) {
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += scale * w * tri.area * l[i] * l[j];
                }
            }
        }
        mirror_upper(&mut m);
        push_local(&mut t, &p, &p, &m);
    }
    for c in darcy_cells(mesh) {
        let i = layout.p_d(c).unwrap();
        t.push((i, i, params.k * mesh.triangle(c).area));
    }
    let off = layout.offsets[4];
    for i in 0..nl {
        for j in 0..nl {
            let v = s_block[(i, j)];
            if v != 0.0 {
                t.push((off + i, off + j, v));
            }
        }
    }
    let n = CsrMatrix::from_triplets(layout.dim(), layout.dim(), &t);
    Ok(eliminate_symmetric(&n, &essential.mask))
}

/// Load vector without essential lifting.
pub fn assemble_load(mesh: &Mesh, layout: &BlockLayout, data: &dyn LoadData) -> Vec<f64> {
    let mut b = vec![0.0; layout.dim()];
    let rule = TriangleRule::new(8);
    let (s, w) = segment_rule(5);

    for c in stokes_cells(mesh) {
        let tri = mesh.triangle(c);
        let dofs = layout.cell_u_s(mesh, c);
        for (l, wq) in rule.bary.iter().zip(&rule.weights) {
            let f = data.stokes_force(tri.point(l));
            let phi = p2_values(l);
            for a in 0..6 {
                for ci in 0..2 {
                    b[dofs[2 * a + ci]] += wq * tri.area * f[ci] * phi[a];
                }
            }
        }
    }
    for c in darcy_cells(mesh) {
        let tri = mesh.triangle(c);
        let i = layout.p_d(c).unwrap();
        for (l, wq) in rule.bary.iter().zip(&rule.weights) {
            b[i] -= wq * tri.area * data.darcy_source(tri.point(l));
        }
    }

    for (i, f) in mesh.interface.iter().enumerate() {
        let (k, tri) = local_edge(mesh, f.stokes_cell, f.facet);
        let len = tri.edge_length(k);
        let dofs = layout.cell_u_s(mesh, f.stokes_cell);
        let n = f.normal;
        let tau = [-n[1], n[0]];
        for (s, wq) in s.iter().zip(&w) {
            let l = Triangle::edge_bary(k, *s);
            let x = tri.point(&l);
            let phi = p2_values(&l);
            let tn = data.normal_stress_defect(x, n);
            let tt = data.tangential_stress_defect(x, n, tau);
            for a in 0..6 {
                for ci in 0..2 {
                    b[dofs[2 * a + ci]] += wq * len * phi[a] * (tn * n[ci] + tt * tau[ci]);
                }
            }
            b[layout.lambda(i)] += wq * len * data.interface_flux_defect(x, n);
        }
    }

    for (fi, facet) in mesh.facets.iter().enumerate() {
        match facet.tag {
            FacetTag::StokesNatural => {
                let c = facet.cells[0].unwrap();
                let (k, tri) = local_edge(mesh, c, fi);
                let len = tri.edge_length(k);
                let n = tri.outward_normal(k);
                let dofs = layout.cell_u_s(mesh, c);
                for (s, wq) in s.iter().zip(&w) {
                    let l = Triangle::edge_bary(k, *s);
                    let tr = data.stokes_traction(tri.point(&l), n);
                    let phi = p2_values(&l);
                    for a in 0..6 {
                        for ci in 0..2 {
                            b[dofs[2 * a + ci]] += wq * len * phi[a] * tr[ci];
                        }
                    }
                }
            }
            FacetTag::DarcyNatural => {
                let len = mesh.facet_length(fi);
                let [pa, pb] = facet.vertices.map(|v| mesh.vertices[v]);
                let i = layout.u_d(fi).unwrap();
                for (s, wq) in s.iter().zip(&w) {
                    let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                    b[i] -= wq * len * data.darcy_boundary_pressure(x);
                }
            }
            _ => {}
        }
    }
    b
}

/// Right-hand side with essential values lifted: rows of constrained dofs carry the
/// prescribed value, the others are corrected by the known columns.
pub fn assemble_rhs(
    mesh: &Mesh,
    layout: &BlockLayout,
    params: &PhysParams,
    data: &dyn LoadData,
    essential: &EssentialDofs,
) -> Vec<f64> {
    let mut b = assemble_load(mesh, layout, data);
    if essential.is_homogeneous() {
        essential.indices.iter().for_each(|&i| b[i] = 0.0);
    } else {
        let raw = assemble_operator_raw(mesh, layout, params);
        lift_rhs(&raw, &essential.mask, &essential.values, &mut b);
    }
    b
}
