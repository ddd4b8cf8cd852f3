//! Manufactured solution on the stacked unit squares: exact fields, consistent data,
//! error norms and convergence rates.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_operator_raw, assemble_load, LoadData, PhysParams};
use crate::element::{p2_grads, rt0_div};
use crate::error::Result;
use crate::mesh::{BcConfig, DomainSpec, Mesh};
use crate::quadrature::TriangleRule;
use crate::spaces::{build_layout, essential_dofs, BlockLayout};
use crate::sparse::{eliminate_symmetric, lift_rhs, solve_direct};

/// Closed-form fields: `u_S = curl cos(pi (x + y))`, `p_S = sin(2 pi (x - y))`,
/// `p_D = sin(2 pi (x - 2 y))`, `u_D = -K grad p_D`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactSolution {
    pub params: PhysParams,
}

impl ExactSolution {
    pub fn new(params: PhysParams) -> Self {
        Self { params }
    }

    pub fn u_s(&self, x: [f64; 2]) -> [f64; 2] {
        let s = (PI * (x[0] + x[1])).sin();
        [-PI * s, PI * s]
    }

    /// `grad[i][j] = d u_i / d x_j`.
    pub fn grad_u_s(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let c = PI * PI * (PI * (x[0] + x[1])).cos();
        [[-c, -c], [c, c]]
    }

    pub fn div_u_s(&self, x: [f64; 2]) -> f64 {
        let g = self.grad_u_s(x);
        g[0][0] + g[1][1]
    }

    pub fn p_s(&self, x: [f64; 2]) -> f64 {
        (2.0 * PI * (x[0] - x[1])).sin()
    }

    pub fn p_d(&self, x: [f64; 2]) -> f64 {
        (2.0 * PI * (x[0] - 2.0 * x[1])).sin()
    }

    pub fn u_d(&self, x: [f64; 2]) -> [f64; 2] {
        let c = (2.0 * PI * (x[0] - 2.0 * x[1])).cos();
        let k = self.params.k;
        [-2.0 * PI * k * c, 4.0 * PI * k * c]
    }

    pub fn div_u_d(&self, x: [f64; 2]) -> f64 {
        20.0 * PI * PI * self.params.k * self.p_d(x)
    }

    /// The multiplier is the Darcy pressure trace.
    pub fn lambda(&self, x: [f64; 2]) -> f64 {
        self.p_d(x)
    }

    /// Cauchy stress `2 mu eps(u_S) - p_S I`.
    pub fn stress(&self, x: [f64; 2]) -> [[f64; 2]; 2] {
        let g = self.grad_u_s(x);
        let p = self.p_s(x);
        let mu = self.params.mu;
        let mut s = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] = mu * (g[i][j] + g[j][i]) - if i == j { p } else { 0.0 };
            }
        }
        s
    }

    /// `-div sigma`.
    pub fn stokes_force(&self, x: [f64; 2]) -> [f64; 2] {
        let s = (PI * (x[0] + x[1])).sin();
        let c2 = (2.0 * PI * (x[0] - x[1])).cos();
        let a = 2.0 * self.params.mu * PI.powi(3) * s;
        [-a + 2.0 * PI * c2, a - 2.0 * PI * c2]
    }

    pub fn darcy_source(&self, x: [f64; 2]) -> f64 {
        self.div_u_d(x)
    }
}

fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Data making [`ExactSolution`] satisfy the discrete equations up to discretization error.
#[derive(Clone, Copy, Debug)]
pub struct MmsLoad {
    pub exact: ExactSolution,
}

impl MmsLoad {
    pub fn new(params: PhysParams) -> Self {
        Self { exact: ExactSolution::new(params) }
    }
}

impl LoadData for MmsLoad {
    fn stokes_force(&self, x: [f64; 2]) -> [f64; 2] {
        self.exact.stokes_force(x)
    }

    fn darcy_source(&self, x: [f64; 2]) -> f64 {
        self.exact.darcy_source(x)
    }

    fn interface_flux_defect(&self, x: [f64; 2], n: [f64; 2]) -> f64 {
        dot2(self.exact.u_s(x), n) - dot2(self.exact.u_d(x), n)
    }

    /// `n . sigma n + p_D`: the viscous normal stress minus `p_S`, plus the multiplier.
    fn normal_stress_defect(&self, x: [f64; 2], n: [f64; 2]) -> f64 {
        dot2(n, mat_vec(&self.exact.stress(x), n)) + self.exact.lambda(x)
    }

    fn tangential_stress_defect(&self, x: [f64; 2], n: [f64; 2], tau: [f64; 2]) -> f64 {
        dot2(tau, mat_vec(&self.exact.stress(x), n)) + self.exact.params.beta_tau() * dot2(self.exact.u_s(x), tau)
    }

    fn stokes_traction(&self, x: [f64; 2], n: [f64; 2]) -> [f64; 2] {
        mat_vec(&self.exact.stress(x), n)
    }

    fn darcy_boundary_pressure(&self, x: [f64; 2]) -> f64 {
        self.exact.p_d(x)
    }

    fn has_essential_data(&self) -> bool {
        true
    }

    fn stokes_velocity(&self, x: [f64; 2]) -> [f64; 2] {
        self.exact.u_s(x)
    }

    fn darcy_velocity(&self, x: [f64; 2]) -> [f64; 2] {
        self.exact.u_d(x)
    }
}

/// Convenience: data for `params`.
pub fn mms_sources(params: PhysParams) -> MmsLoad {
    MmsLoad::new(params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsRow {
    pub nref: usize,
    pub h: f64,
    pub dofs: usize,
    /// `|grad(u_S - u_Sh)|`, `|p_S - p_Sh|`, `|div(u_D - u_Dh)|`, `|p_D - p_Dh|` in L2.
    pub errors: [f64; 4],
}

/// Error norms of a discrete solution against the exact fields (degree-8 quadrature).
pub fn compute_errors(x: &[f64], mesh: &Mesh, layout: &BlockLayout, params: &PhysParams) -> [f64; 4] {
    let ex = ExactSolution::new(*params);
    let rule = TriangleRule::new(8);
    let mut e = [0.0; 4];
    for c in 0..mesh.cells.len() {
        let tri = mesh.triangle(c);
        if mesh.cells[c].domain.is_stokes() {
            let u = layout.cell_u_s(mesh, c);
            let p = layout.cell_p_s(mesh, c);
            for (l, w) in rule.bary.iter().zip(&rule.weights) {
                let pt = tri.point(l);
                let g = p2_grads(&tri, l);
                let ge = ex.grad_u_s(pt);
                for i in 0..2 {
                    for j in 0..2 {
                        let gh: f64 = (0..6).map(|a| x[u[2 * a + i]] * g[a][j]).sum();
                        e[0] += w * tri.area * (ge[i][j] - gh).powi(2);
                    }
                }
                let ph: f64 = (0..3).map(|i| x[p[i]] * l[i]).sum();
                e[1] += w * tri.area * (ex.p_s(pt) - ph).powi(2);
            }
        } else {
            let (u, sign) = layout.cell_u_d(mesh, c);
            let divh: f64 = (0..3).map(|k| x[u[k]] * rt0_div(&tri, k, sign[k])).sum();
            let ph = x[layout.p_d(c).unwrap()];
            for (l, w) in rule.bary.iter().zip(&rule.weights) {
                let pt = tri.point(l);
                e[2] += w * tri.area * (ex.div_u_d(pt) - divh).powi(2);
                e[3] += w * tri.area * (ex.p_d(pt) - ph).powi(2);
            }
        }
    }
    e.map(f64::sqrt)
}

/// The manufactured-solution mesh: stacked unit squares with the Stokes sides natural,
/// the Stokes bottom essential, the Darcy sides essential and the Darcy top natural.
pub fn mms_mesh(nref: usize) -> Result<Mesh> {
    Mesh::build(&DomainSpec::stacked(), nref, BcConfig::NEstar)
}

/// Assembles and solves the manufactured problem directly; returns the solution too.
pub fn solve_mms(params: PhysParams, nref: usize) -> Result<(Mesh, BlockLayout, Vec<f64>)> {
    let mesh = mms_mesh(nref)?;
    let layout = build_layout(&mesh);
    let data = MmsLoad::new(params);
    let mut ess = essential_dofs(&layout, &mesh);
    ess.set_values(&mesh, &layout, |p| data.exact.u_s(p), |p| data.exact.u_d(p));
    let raw = assemble_operator_raw(&mesh, &layout, &params);
    let mut b = assemble_load(&mesh, &layout, &data);
    lift_rhs(&raw, &ess.mask, &ess.values, &mut b);
    let a = eliminate_symmetric(&raw, &ess.mask);
    let x = solve_direct(&a, &b)?;
    Ok((mesh, layout, x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmsReport {
    pub params: PhysParams,
    pub rows: Vec<MmsRow>,
}

impl MmsReport {
    /// `log2(e(h) / e(h/2))` for each consecutive pair.
    pub fn rates(&self) -> Vec<[f64; 4]> {
        self.rows
            .windows(2)
            .map(|w| std::array::from_fn(|i| (w[0].errors[i] / w[1].errors[i]).log2() * (w[0].h / w[1].h).log2().recip()))
            .collect()
    }

    /// Finest-pair rates within `tol_stokes` of 2 (first two columns) and `tol_darcy`
    /// of 1 (last two). False with fewer than two rows.
    pub fn check(&self, tol_stokes: f64, tol_darcy: f64) -> bool {
        let Some(r) = self.rates().last().copied() else { return false };
        (r[0] - 2.0).abs() <= tol_stokes
            && (r[1] - 2.0).abs() <= tol_stokes
            && (r[2] - 1.0).abs() <= tol_darcy
            && (r[3] - 1.0).abs() <= tol_darcy
    }

    pub fn to_table(&self) -> String {
        let rates = self.rates();
        let mut s = String::new();
        let names = ["|grad(u_S-u_Sh)|", "|p_S-p_Sh|", "|div(u_D-u_Dh)|", "|p_D-p_Dh|"];
        let _ = write!(s, "{:>10}", "h");
        for n in names {
            let _ = write!(s, " {:>24}", n);
        }
        s.push('\n');
        for (k, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "{:>10.2E}", row.h);
            for i in 0..4 {
                let cell = match k.checked_sub(1) {
                    Some(j) => format!("{:.2E} ({:.2})", row.errors[i], rates[j][i]),
                    None => format!("{:.2E}", row.errors[i]),
                };
                let _ = write!(s, " {:>24}", cell);
            }
            s.push('\n');
        }
        s
    }

    /// Header `nref,h,dofs,e1,e2,e3,e4` plus `rate_e1..rate_e4` when there are at least
    /// two rows (empty on the first).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let with_rates = self.rows.len() >= 2;
        write!(w, "nref,h,dofs,e1,e2,e3,e4")?;
        if with_rates {
            write!(w, ",rate_e1,rate_e2,rate_e3,rate_e4")?;
        }
        writeln!(w)?;
        let rates = self.rates();
        for (k, r) in self.rows.iter().enumerate() {
            write!(w, "{},{:.16e},{}", r.nref, r.h, r.dofs)?;
            for e in r.errors {
                write!(w, ",{e:.16e}")?;
            }
            if with_rates {
                match k.checked_sub(1) {
                    Some(j) => {
                        for v in rates[j] {
                            write!(w, ",{v:.6}")?;
                        }
                    }
                    None => write!(w, ",,,,")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Solves on each refinement level and collects errors.
pub fn run_mms(params: PhysParams, nrefs: &[usize]) -> Result<MmsReport> {
    let mut rows = Vec::new();
    for &nref in nrefs {
        let (mesh, layout, x) = solve_mms(params, nref)?;
        rows.push(MmsRow { nref, h: mesh.h, dofs: layout.dim(), errors: compute_errors(&x, &mesh, &layout, &params) });
    }
    Ok(MmsReport { params, rows })
}
