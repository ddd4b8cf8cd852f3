//! Independent oracles shared by the integration and acceptance tests: element matrices
//! rebuilt from monomial Vandermonde bases with a collapsed tensor Gauss rule, and
//! manufactured data checked by finite differences.

#![allow(dead_code)]

use std::f64::consts::PI;

use sdlab::assembly::{assemble_operator_raw, LoadData, PhysParams};
use sdlab::mesh::{BcConfig, DomainSpec, Mesh};
use sdlab::mms::{ExactSolution, MmsLoad};
use sdlab::spaces::build_layout;

// 5-point Gauss-Legendre on [-1, 1]
const GL_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Points and weights on the physical triangle via the Duffy map of the unit square.
fn triangle_rule(x: [[f64; 2]; 3]) -> Vec<([f64; 2], f64)> {
    let e1 = [x[1][0] - x[0][0], x[1][1] - x[0][1]];
    let e2 = [x[2][0] - x[0][0], x[2][1] - x[0][1]];
    let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
    let mut out = Vec::new();
    for i in 0..5 {
        for j in 0..5 {
            let u = 0.5 * (GL_X[i] + 1.0);
            let v = 0.5 * (GL_X[j] + 1.0);
            let (s, t) = (u, v * (1.0 - u));
            let w = 0.25 * GL_W[i] * GL_W[j] * (1.0 - u) * jac;
            out.push(([x[0][0] + s * e1[0] + t * e2[0], x[0][1] + s * e1[1] + t * e2[1]], w));
        }
    }
    out
}

fn segment_rule(a: [f64; 2], b: [f64; 2]) -> Vec<([f64; 2], f64)> {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    (0..5)
        .map(|i| {
            let t = 0.5 * (GL_X[i] + 1.0);
            ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], 0.5 * GL_W[i] * len)
        })
        .collect()
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, p);
        rhs.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            rhs[r] -= f * rhs[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    x
}

fn monomials(p: [f64; 2]) -> [f64; 6] {
    [1.0, p[0], p[1], p[0] * p[0], p[0] * p[1], p[1] * p[1]]
}

fn monomial_grads(p: [f64; 2]) -> [[f64; 2]; 6] {
    [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0 * p[0], 0.0], [p[1], p[0]], [0.0, 2.0 * p[1]]]
}

/// Coefficients of the Lagrange basis for the given nodes: `coef[k]` multiplies the monomials.
fn lagrange_coefficients<const N: usize>(nodes: &[[f64; 2]], basis: impl Fn([f64; 2]) -> [f64; 6]) -> Vec<Vec<f64>> {
    let v: Vec<Vec<f64>> = nodes.iter().map(|&p| basis(p)[..N].to_vec()).collect();
    (0..N)
        .map(|k| {
            let e: Vec<f64> = (0..N).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
            solve(v.clone(), e)
        })
        .collect()
}

fn eval(c: &[f64], m: &[f64]) -> f64 {
    c.iter().zip(m).map(|(a, b)| a * b).sum()
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Dense reference operator built only from mesh geometry and the dof numbering.
pub fn oracle_operator(mesh: &Mesh, params: &PhysParams) -> Vec<Vec<f64>> {
    let layout = build_layout(mesh);
    let n = layout.dim();
    let mut a = vec![vec![0.0; n]; n];
    let (mu, kinv) = (params.mu, 1.0 / params.k);
    let beta = params.alpha_bjs * (params.mu / params.k).sqrt();
    let add_sym = |a: &mut Vec<Vec<f64>>, i: usize, j: usize, v: f64| {
        a[i][j] += v;
        if i != j {
            a[j][i] += v;
        }
    };

    // local P2 basis and its dofs for a Stokes cell
    let p2 = |c: usize| {
        let vs = mesh.cells[c].vertices;
        let x: [[f64; 2]; 3] = vs.map(|v| mesh.vertices[v]);
        let mut nodes: Vec<[f64; 2]> = x.to_vec();
        let mut ids: Vec<usize> = vs.iter().map(|&v| layout.vertex_node(v).unwrap()).collect();
        for &f in &mesh.cell_facets[c] {
            let [p, q] = mesh.facets[f].vertices;
            nodes.push(midpoint(mesh.vertices[p], mesh.vertices[q]));
            ids.push(layout.edge_node(f).unwrap());
        }
        (x, lagrange_coefficients::<6>(&nodes, monomials), ids, vs)
    };

    for c in 0..mesh.cells.len() {
        if mesh.cells[c].domain.is_stokes() {
            let (x, coef, ids, vs) = p2(c);
            let p1 = lagrange_coefficients::<3>(&x, monomials);
            for (pt, w) in triangle_rule(x) {
                let g = monomial_grads(pt);
                let gx: Vec<[f64; 2]> = coef.iter().map(|cf| [(0..6).map(|m| cf[m] * g[m][0]).sum(), (0..6).map(|m| cf[m] * g[m][1]).sum()]).collect();
                let q: Vec<f64> = p1.iter().map(|cf| eval(cf, &monomials(pt)[..3])).collect();
                for a_ in 0..6 {
                    for ca in 0..2 {
                        let i = layout.u_s(ids[a_], ca);
                        // strain of the test function e_ca phi_a
                        let mut ea = [[0.0; 2]; 2];
                        for d in 0..2 {
                            ea[ca][d] += 0.5 * gx[a_][d];
                            ea[d][ca] += 0.5 * gx[a_][d];
                        }
                        for b_ in 0..6 {
                            for cb in 0..2 {
                                let j = layout.u_s(ids[b_], cb);
                                let mut eb = [[0.0; 2]; 2];
                                for d in 0..2 {
                                    eb[cb][d] += 0.5 * gx[b_][d];
                                    eb[d][cb] += 0.5 * gx[b_][d];
                                }
                                let mut s = 0.0;
                                for r in 0..2 {
                                    for t in 0..2 {
                                        s += ea[r][t] * eb[r][t];
                                    }
                                }
                                a[i][j] += w * 2.0 * mu * s;
                            }
                        }
                        for (k, &v) in vs.iter().enumerate() {
                            add_sym(&mut a, layout.p_s(v).unwrap(), i, -w * gx[a_][ca] * q[k]);
                        }
                    }
                }
            }
        } else {
            let x: [[f64; 2]; 3] = mesh.cells[c].vertices.map(|v| mesh.vertices[v]);
            // RT0 fields (a + c x, b + c y) with unit flux along the global normal
            let facets = mesh.cell_facets[c];
            let rt: Vec<[f64; 3]> = (0..3)
                .map(|k| {
                    let rows: Vec<Vec<f64>> = facets
                        .iter()
                        .map(|&f| {
                            let n = layout.rt0_normal(mesh, f);
                            let m = mesh.facet_midpoint(f);
                            vec![n[0], n[1], n[0] * m[0] + n[1] * m[1]]
                        })
                        .collect();
                    let e: Vec<f64> = (0..3).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
                    let s = solve(rows, e);
                    [s[0], s[1], s[2]]
                })
                .collect();
            let ids: Vec<usize> = facets.iter().map(|&f| layout.u_d(f).unwrap()).collect();
            let pd = layout.p_d(c).unwrap();
            for (pt, w) in triangle_rule(x) {
                let v: Vec<[f64; 2]> = rt.iter().map(|r| [r[0] + r[2] * pt[0], r[1] + r[2] * pt[1]]).collect();
                for i in 0..3 {
                    for j in 0..3 {
                        a[ids[i]][ids[j]] += w * kinv * (v[i][0] * v[j][0] + v[i][1] * v[j][1]);
                    }
                    add_sym(&mut a, pd, ids[i], -w * 2.0 * rt[i][2]);
                }
            }
        }
    }

    for (l, f) in mesh.interface.iter().enumerate() {
        let [p, q] = mesh.facets[f.facet].vertices;
        let (xp, xq) = (mesh.vertices[p], mesh.vertices[q]);
        let (x, coef, ids, _) = p2(f.stokes_cell);
        // outward normal of the Stokes cell from its opposite vertex
        let mut n = [xq[1] - xp[1], xp[0] - xq[0]];
        let nl = (n[0] * n[0] + n[1] * n[1]).sqrt();
        n = [n[0] / nl, n[1] / nl];
        let opp = x.iter().find(|v| **v != xp && **v != xq).unwrap();
        let m = midpoint(xp, xq);
        if (opp[0] - m[0]) * n[0] + (opp[1] - m[1]) * n[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        let tau = [-n[1], n[0]];
        let ud = layout.u_d(f.facet).unwrap();
        let nd = layout.rt0_normal(mesh, f.facet);
        for (pt, w) in segment_rule(xp, xq) {
            let phi: Vec<f64> = coef.iter().map(|cf| eval(cf, &monomials(pt))).collect();
            for a_ in 0..6 {
                for ca in 0..2 {
                    let i = layout.u_s(ids[a_], ca);
                    add_sym(&mut a, layout.lambda(l), i, w * phi[a_] * n[ca]);
                    for b_ in 0..6 {
                        for cb in 0..2 {
                            a[i][layout.u_s(ids[b_], cb)] += w * beta * phi[a_] * tau[ca] * phi[b_] * tau[cb];
                        }
                    }
                }
            }
            // the RT0 trace on the facet is its unit flux along the global normal
            add_sym(&mut a, layout.lambda(l), ud, -w * (nd[0] * n[0] + nd[1] * n[1]));
        }
    }
    a
}

pub fn unit_base_mesh(spec: DomainSpec, nref: usize, config: BcConfig) -> Mesh {
    Mesh::build(&DomainSpec { base_divisions: 1, ..spec }, nref, config).unwrap()
}

// Closed forms written independently of the library.
fn psi(x: f64, y: f64) -> f64 {
    (PI * (x + y)).cos()
}
fn ps(x: f64, y: f64) -> f64 {
    (2.0 * PI * (x - y)).sin()
}
fn pd(x: f64, y: f64) -> f64 {
    (2.0 * PI * (x - 2.0 * y)).sin()
}

const H: f64 = 1e-3;

/// Fourth-order central first derivative.
fn d1(f: impl Fn(f64) -> f64, t: f64) -> f64 {
    (-f(t + 2.0 * H) + 8.0 * f(t + H) - 8.0 * f(t - H) + f(t - 2.0 * H)) / (12.0 * H)
}

fn dx(f: impl Fn(f64, f64) -> f64, x: f64, y: f64) -> f64 {
    d1(|s| f(s, y), x)
}

fn dy(f: impl Fn(f64, f64) -> f64, x: f64, y: f64) -> f64 {
    d1(|s| f(x, s), y)
}

/// Velocity as the curl of the stream function.
fn us(x: f64, y: f64) -> [f64; 2] {
    [dy(psi, x, y), -dx(psi, x, y)]
}

fn sigma(mu: f64, x: f64, y: f64) -> [[f64; 2]; 2] {
    let u0 = |a: f64, b: f64| dy(psi, a, b);
    let u1 = |a: f64, b: f64| -dx(psi, a, b);
    let g = [[dx(u0, x, y), dy(u0, x, y)], [dx(u1, x, y), dy(u1, x, y)]];
    let p = ps(x, y);
    [[2.0 * mu * g[0][0] - p, mu * (g[0][1] + g[1][0])], [mu * (g[0][1] + g[1][0]), 2.0 * mu * g[1][1] - p]]
}

fn sample_points() -> Vec<[f64; 2]> {
    let mut pts = Vec::new();
    for i in 0..5 {
        for j in 0..9 {
            pts.push([0.1 + 0.2 * i as f64, 0.07 + 0.22 * j as f64]);
        }
    }
    pts
}

/// Largest entrywise deviation of the assembled operator from the oracle, relative to the
/// largest oracle entry.
pub fn operator_deviation(mesh: &Mesh, params: PhysParams) -> f64 {
    let layout = build_layout(mesh);
    let a = assemble_operator_raw(mesh, &layout, &params);
    let o = oracle_operator(mesh, &params);
    let scale = o.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..layout.dim() {
        for j in 0..layout.dim() {
            worst = worst.max((a.get(i, j) - o[i][j]).abs());
        }
    }
    worst / scale
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Largest relative deviation of the volume data and fields from finite differences.
pub fn source_deviation(params: PhysParams) -> f64 {
    let (mu, k) = (params.mu, params.k);
    let ex = ExactSolution::new(params);
    let mut worst = 0.0f64;
    for [x, y] in sample_points() {
        let f = ex.stokes_force([x, y]);
        let s = |i: usize, j: usize| move |a: f64, b: f64| sigma(mu, a, b)[i][j];
        let fd = [-(dx(s(0, 0), x, y) + dy(s(0, 1), x, y)), -(dx(s(1, 0), x, y) + dy(s(1, 1), x, y))];
        let ud = |a: f64, b: f64| [-k * dx(pd, a, b), -k * dy(pd, a, b)];
        let gfd = dx(|a, b| ud(a, b)[0], x, y) + dy(|a, b| ud(a, b)[1], x, y);
        worst = worst.max(rel(ex.darcy_source([x, y]), gfd));
        let (u, ufd, udx, udfd) = (ex.u_s([x, y]), us(x, y), ex.u_d([x, y]), ud(x, y));
        for c in 0..2 {
            worst = worst.max(rel(f[c], fd[c])).max(rel(u[c], ufd[c])).max(rel(udx[c], udfd[c]));
        }
        worst = worst.max(ex.div_u_s([x, y]).abs());
    }
    worst
}

/// Largest relative deviation of the interface data on `y = 1` from finite differences.
pub fn interface_deviation(params: PhysParams) -> f64 {
    let load = MmsLoad::new(params);
    let beta = params.alpha_bjs * (params.mu / params.k).sqrt();
    let (n, tau) = ([0.0, 1.0], [-1.0, 0.0]);
    let mut worst = 0.0f64;
    for i in 0..=10 {
        let x = 0.1 * i as f64;
        let s = sigma(params.mu, x, 1.0);
        let sn = [s[0][1], s[1][1]];
        let u = us(x, 1.0);
        let tn = sn[1] + pd(x, 1.0);
        let tt = tau[0] * sn[0] + tau[1] * sn[1] + beta * (u[0] * tau[0] + u[1] * tau[1]);
        let gf = u[1] + params.k * dy(pd, x, 1.0);
        worst = worst
            .max(rel(load.normal_stress_defect([x, 1.0], n), tn))
            .max(rel(load.tangential_stress_defect([x, 1.0], n, tau), tt))
            .max(rel(load.interface_flux_defect([x, 1.0], n), gf));
    }
    worst
}
