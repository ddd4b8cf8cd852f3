//! Reference-free element kernels on straight triangles: P1/P2 Lagrange and lowest-order
//! Raviart–Thomas.

/// Straight triangle with precomputed barycentric gradients.
#[derive(Clone, Copy, Debug)]
pub struct Triangle {
    pub x: [[f64; 2]; 3],
    /// Positive area.
    pub area: f64,
    pub grad_bary: [[f64; 2]; 3],
}

impl Triangle {
    pub fn new(x: [[f64; 2]; 3]) -> Self {
        let signed = 0.5
            * ((x[1][0] - x[0][0]) * (x[2][1] - x[0][1]) - (x[2][0] - x[0][0]) * (x[1][1] - x[0][1]));
        let mut grad_bary = [[0.0; 2]; 3];
        for (i, g) in grad_bary.iter_mut().enumerate() {
            let a = x[(i + 1) % 3];
            let b = x[(i + 2) % 3];
            let e = [b[0] - a[0], b[1] - a[1]];
            *g = [-e[1] / (2.0 * signed), e[0] / (2.0 * signed)];
        }
        Self { x, area: signed.abs(), grad_bary }
    }

    pub fn point(&self, l: &[f64; 3]) -> [f64; 2] {
        [
            l[0] * self.x[0][0] + l[1] * self.x[1][0] + l[2] * self.x[2][0],
            l[0] * self.x[0][1] + l[1] * self.x[1][1] + l[2] * self.x[2][1],
        ]
    }

    /// Local edge `k` joins vertices `(k+1)%3` and `(k+2)%3`.
    pub fn edge_vertices(k: usize) -> (usize, usize) {
        ((k + 1) % 3, (k + 2) % 3)
    }

    pub fn edge_length(&self, k: usize) -> f64 {
        let (a, b) = Self::edge_vertices(k);
        let d = [self.x[b][0] - self.x[a][0], self.x[b][1] - self.x[a][1]];
        d[0].hypot(d[1])
    }

    pub fn outward_normal(&self, k: usize) -> [f64; 2] {
        let g = self.grad_bary[k];
        let n = g[0].hypot(g[1]);
        [-g[0] / n, -g[1] / n]
    }

    /// Barycentric coordinates of the point at parameter `t` along edge `k`
    /// (from vertex `(k+1)%3` towards `(k+2)%3`).
    pub fn edge_bary(k: usize, t: f64) -> [f64; 3] {
        let (a, b) = Self::edge_vertices(k);
        let mut l = [0.0; 3];
        l[a] = 1.0 - t;
        l[b] = t;
        l
    }

    pub fn centroid(&self) -> [f64; 2] {
        self.point(&[1.0 / 3.0; 3])
    }
}

/// P2 shape values; vertex functions first, then edge functions ordered by local edge.
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    let mut v = [0.0; 6];
    for i in 0..3 {
        v[i] = l[i] * (2.0 * l[i] - 1.0);
        let (a, b) = Triangle::edge_vertices(i);
        v[3 + i] = 4.0 * l[a] * l[b];
    }
    v
}

pub fn p2_grads(t: &Triangle, l: &[f64; 3]) -> [[f64; 2]; 6] {
    let g = &t.grad_bary;
    let mut out = [[0.0; 2]; 6];
    for i in 0..3 {
        let s = 4.0 * l[i] - 1.0;
        out[i] = [s * g[i][0], s * g[i][1]];
        let (a, b) = Triangle::edge_vertices(i);
        out[3 + i] = [
            4.0 * (l[a] * g[b][0] + l[b] * g[a][0]),
            4.0 * (l[a] * g[b][1] + l[b] * g[a][1]),
        ];
    }
    out
}

/// Barycentric coordinates of the P2 nodes in local order.
pub const P2_NODES: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
];

/// RT0 basis function for local edge `k` with orientation `sign` (+1 when the global
/// normal is the outward normal of this cell). Its normal component on edge `k` is `sign`.
pub fn rt0_value(t: &Triangle, k: usize, sign: f64, x: [f64; 2]) -> [f64; 2] {
    let c = sign * t.edge_length(k) / (2.0 * t.area);
    [c * (x[0] - t.x[k][0]), c * (x[1] - t.x[k][1])]
}

pub fn rt0_div(t: &Triangle, k: usize, sign: f64) -> f64 {
    sign * t.edge_length(k) / t.area
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> Triangle {
        Triangle::new([[0.2, 0.1], [1.3, 0.4], [0.5, 1.2]])
    }

    #[test]
    fn barycentric_gradients_sum_to_zero_and_match_vertices() {
        let t = tri();
        let s: [f64; 2] = [0, 1].map(|c| t.grad_bary.iter().map(|g| g[c]).sum());
        assert!(s[0].abs() < 1e-14 && s[1].abs() < 1e-14);
        for i in 0..3 {
            for j in 0..3 {
                // lambda_i(x_j) - lambda_i(x_0) = grad . (x_j - x_0)
                let d = [t.x[j][0] - t.x[0][0], t.x[j][1] - t.x[0][1]];
                let diff = t.grad_bary[i][0] * d[0] + t.grad_bary[i][1] * d[1];
                let expect = (i == j) as i32 as f64 - (i == 0) as i32 as f64;
                assert!((diff - expect).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn p2_basis_is_nodal() {
        for (a, node) in P2_NODES.iter().enumerate() {
            let v = p2_values(node);
            for (b, vb) in v.iter().enumerate() {
                assert!((vb - (a == b) as i32 as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn p2_gradients_match_finite_differences() {
        let t = tri();
        let l = [0.2, 0.5, 0.3];
        let x = t.point(&l);
        let g = p2_grads(&t, &l);
        let bary = |p: [f64; 2]| {
            let mut out = [0.0; 3];
            for i in 0..3 {
                let d = [p[0] - t.x[(i + 1) % 3][0], p[1] - t.x[(i + 1) % 3][1]];
                out[i] = t.grad_bary[i][0] * d[0] + t.grad_bary[i][1] * d[1];
            }
            out
        };
        let e = 1e-6;
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += e;
            xm[c] -= e;
            let (vp, vm) = (p2_values(&bary(xp)), p2_values(&bary(xm)));
            for a in 0..6 {
                assert!(((vp[a] - vm[a]) / (2.0 * e) - g[a][c]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn rt0_has_unit_normal_trace_and_consistent_divergence() {
        let t = tri();
        for k in 0..3 {
            let n = t.outward_normal(k);
            for s in [0.1, 0.5, 0.9] {
                let x = t.point(&Triangle::edge_bary(k, s));
                let v = rt0_value(&t, k, 1.0, x);
                assert!((v[0] * n[0] + v[1] * n[1] - 1.0).abs() < 1e-13);
                // zero normal trace on the other two edges
                for j in (0..3).filter(|&j| j != k) {
                    let y = t.point(&Triangle::edge_bary(j, s));
                    let w = rt0_value(&t, k, 1.0, y);
                    let m = t.outward_normal(j);
                    assert!((w[0] * m[0] + w[1] * m[1]).abs() < 1e-13);
                }
            }
            // divergence theorem: div * area = flux through edge k
            assert!((rt0_div(&t, k, 1.0) * t.area - t.edge_length(k)).abs() < 1e-13);
        }
    }
}
