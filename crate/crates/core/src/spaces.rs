//! Degree-of-freedom maps for the five unknowns and the essential-boundary set.

use std::ops::Range;

use serde::Serialize;

use crate::element::{p2_values, rt0_value};
use crate::mesh::{FacetTag, Mesh};
use crate::quadrature::segment_rule;

/// The five unknowns in block order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Field {
    StokesVelocity,
    DarcyVelocity,
    StokesPressure,
    DarcyPressure,
    Multiplier,
}

impl Field {
    pub const ALL: [Field; 5] = [
        Field::StokesVelocity,
        Field::DarcyVelocity,
        Field::StokesPressure,
        Field::DarcyPressure,
        Field::Multiplier,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Global numbering. Stokes P2 nodes are the Stokes vertices (ascending) followed by the
/// Stokes edges (ascending); velocity components are interleaved per node. P1 pressure
/// uses the vertex part of the same node numbering.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockLayout {
    pub sizes: [usize; 5],
    pub offsets: [usize; 6],
    /// Mesh vertex of each Stokes vertex node.
    pub stokes_vertices: Vec<usize>,
    /// Mesh facet of each Stokes edge node.
    pub stokes_edges: Vec<usize>,
    /// Mesh facet of each RT0 dof.
    pub darcy_facets: Vec<usize>,
    /// Mesh cell of each P0 dof.
    pub darcy_cells: Vec<usize>,
    vertex_node: Vec<Option<usize>>,
    edge_node: Vec<Option<usize>>,
    facet_rt0: Vec<Option<usize>>,
    cell_p0: Vec<Option<usize>>,
    /// Orientation of the global RT0 normal relative to each cell's outward normal.
    rt0_sign: Vec<[f64; 3]>,
}

pub fn build_layout(mesh: &Mesh) -> BlockLayout {
    let nv = mesh.vertices.len();
    let nf = mesh.facets.len();
    let nc = mesh.cells.len();
    let mut is_sv = vec![false; nv];
    let mut is_se = vec![false; nf];
    let mut is_df = vec![false; nf];
    for (c, cell) in mesh.cells.iter().enumerate() {
        if cell.domain.is_stokes() {
            cell.vertices.iter().for_each(|&v| is_sv[v] = true);
            mesh.cell_facets[c].iter().for_each(|&f| is_se[f] = true);
        } else {
            mesh.cell_facets[c].iter().for_each(|&f| is_df[f] = true);
        }
    }
    let collect = |mask: &[bool]| -> (Vec<usize>, Vec<Option<usize>>) {
        let list: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let mut inv = vec![None; mask.len()];
        list.iter().enumerate().for_each(|(k, &i)| inv[i] = Some(k));
        (list, inv)
    };
    let (stokes_vertices, vertex_node) = collect(&is_sv);
    let (stokes_edges, mut edge_node) = collect(&is_se);
    for n in edge_node.iter_mut().flatten() {
        *n += stokes_vertices.len();
    }
    let (darcy_facets, facet_rt0) = collect(&is_df);
    let darcy_mask: Vec<bool> = mesh.cells.iter().map(|c| !c.domain.is_stokes()).collect();
    let (darcy_cells, cell_p0) = collect(&darcy_mask);

    let mut rt0_sign = vec![[0.0; 3]; nc];
    for &c in &darcy_cells {
        for k in 0..3 {
            let f = &mesh.facets[mesh.cell_facets[c][k]];
            // interior Darcy facets point from the lower to the higher cell index; all
            // others point out of the Darcy region
            rt0_sign[c][k] = match f.cells {
                [Some(a), Some(b)] if !mesh.cells[a].domain.is_stokes() && !mesh.cells[b].domain.is_stokes() => {
                    if c == a.min(b) {
                        1.0
                    } else {
                        -1.0
                    }
                }
                _ => 1.0,
            };
        }
    }

    let sizes = [
        2 * (stokes_vertices.len() + stokes_edges.len()),
        darcy_facets.len(),
        stokes_vertices.len(),
        darcy_cells.len(),
        mesh.interface.len(),
    ];
    let mut offsets = [0; 6];
    for i in 0..5 {
        offsets[i + 1] = offsets[i] + sizes[i];
    }
    BlockLayout {
        sizes,
        offsets,
        stokes_vertices,
        stokes_edges,
        darcy_facets,
        darcy_cells,
        vertex_node,
        edge_node,
        facet_rt0,
        cell_p0,
        rt0_sign,
    }
}

impl BlockLayout {
    pub fn dim(&self) -> usize {
        self.offsets[5]
    }

    pub fn range(&self, field: Field) -> Range<usize> {
        self.offsets[field.index()]..self.offsets[field.index() + 1]
    }

    pub fn size(&self, field: Field) -> usize {
        self.sizes[field.index()]
    }

    pub fn block<'a>(&self, x: &'a [f64], field: Field) -> &'a [f64] {
        &x[self.range(field)]
    }

    pub fn block_mut<'a>(&self, x: &'a mut [f64], field: Field) -> &'a mut [f64] {
        &mut x[self.range(field)]
    }

    /// Number of scalar P2 nodes.
    pub fn p2_nodes(&self) -> usize {
        self.stokes_vertices.len() + self.stokes_edges.len()
    }

    pub fn u_s(&self, node: usize, comp: usize) -> usize {
        self.offsets[0] + 2 * node + comp
    }

    pub fn vertex_node(&self, v: usize) -> Option<usize> {
        self.vertex_node[v]
    }

    pub fn edge_node(&self, f: usize) -> Option<usize> {
        self.edge_node[f]
    }

    pub fn u_d(&self, f: usize) -> Option<usize> {
        self.facet_rt0[f].map(|k| self.offsets[1] + k)
    }

    pub fn p_s(&self, v: usize) -> Option<usize> {
        self.vertex_node[v].map(|k| self.offsets[2] + k)
    }

    pub fn p_d(&self, c: usize) -> Option<usize> {
        self.cell_p0[c].map(|k| self.offsets[3] + k)
    }

    pub fn lambda(&self, i: usize) -> usize {
        self.offsets[4] + i
    }

    /// Scalar P2 node indices of a Stokes cell in local order (vertices, then edges).
    pub fn cell_p2_nodes(&self, mesh: &Mesh, c: usize) -> [usize; 6] {
        let v = mesh.cells[c].vertices;
        let f = mesh.cell_facets[c];
        [
            self.vertex_node[v[0]].unwrap(),
            self.vertex_node[v[1]].unwrap(),
            self.vertex_node[v[2]].unwrap(),
            self.edge_node[f[0]].unwrap(),
            self.edge_node[f[1]].unwrap(),
            self.edge_node[f[2]].unwrap(),
        ]
    }

    /// Global u_S dofs of a Stokes cell; entry `2a + c` is node `a`, component `c`.
    pub fn cell_u_s(&self, mesh: &Mesh, c: usize) -> [usize; 12] {
        let nodes = self.cell_p2_nodes(mesh, c);
        std::array::from_fn(|i| self.u_s(nodes[i / 2], i % 2))
    }

    pub fn cell_p_s(&self, mesh: &Mesh, c: usize) -> [usize; 3] {
        mesh.cells[c].vertices.map(|v| self.p_s(v).unwrap())
    }

    /// Global RT0 dofs of a Darcy cell with their orientation signs.
    pub fn cell_u_d(&self, mesh: &Mesh, c: usize) -> ([usize; 3], [f64; 3]) {
        (mesh.cell_facets[c].map(|f| self.u_d(f).unwrap()), self.rt0_sign[c])
    }

    /// Evaluates the discrete Stokes velocity at barycentric point `l` of cell `c`.
    pub fn eval_u_s(&self, mesh: &Mesh, x: &[f64], c: usize, l: &[f64; 3]) -> [f64; 2] {
        let phi = p2_values(l);
        let dofs = self.cell_u_s(mesh, c);
        let mut u = [0.0; 2];
        for a in 0..6 {
            u[0] += phi[a] * x[dofs[2 * a]];
            u[1] += phi[a] * x[dofs[2 * a + 1]];
        }
        u
    }

    /// Evaluates the discrete Darcy velocity at point `p` of cell `c`.
    pub fn eval_u_d(&self, mesh: &Mesh, x: &[f64], c: usize, p: [f64; 2]) -> [f64; 2] {
        let t = mesh.triangle(c);
        let (dofs, sign) = self.cell_u_d(mesh, c);
        let mut u = [0.0; 2];
        for k in 0..3 {
            let v = rt0_value(&t, k, sign[k], p);
            u[0] += x[dofs[k]] * v[0];
            u[1] += x[dofs[k]] * v[1];
        }
        u
    }

    /// Global normal of an RT0 dof's facet.
    pub fn rt0_normal(&self, mesh: &Mesh, f: usize) -> [f64; 2] {
        let c = mesh.facets[f]
            .cells
            .iter()
            .flatten()
            .copied()
            .find(|&c| !mesh.cells[c].domain.is_stokes())
            .expect("facet is not on the Darcy mesh");
        let k = mesh.cell_facets[c].iter().position(|&g| g == f).unwrap();
        let n = mesh.triangle(c).outward_normal(k);
        let s = self.rt0_sign[c][k];
        [s * n[0], s * n[1]]
    }
}

/// Constrained dofs with their prescribed values (zero unless data says otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct EssentialDofs {
    pub indices: Vec<usize>,
    pub mask: Vec<bool>,
    pub values: Vec<f64>,
}

impl EssentialDofs {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Fills prescribed values from a Stokes velocity (nodal interpolation) and a Darcy
    /// velocity (facet-averaged normal component).
    pub fn set_values(
        &mut self,
        mesh: &Mesh,
        layout: &BlockLayout,
        u_s: impl Fn([f64; 2]) -> [f64; 2],
        u_d: impl Fn([f64; 2]) -> [f64; 2],
    ) {
        let stokes = interpolate_stokes_velocity(mesh, layout, &u_s);
        let darcy = interpolate_darcy_velocity(mesh, layout, &u_d);
        for &i in &self.indices {
            self.values[i] = if layout.range(Field::StokesVelocity).contains(&i) {
                stokes[i - layout.offsets[0]]
            } else {
                darcy[i - layout.offsets[1]]
            };
        }
    }
}

/// Velocity dofs on essential boundary facets: both components at the P2 nodes of
/// Stokes-essential facets and the RT0 dof of Darcy-essential facets.
pub fn essential_dofs(layout: &BlockLayout, mesh: &Mesh) -> EssentialDofs {
    let mut mask = vec![false; layout.dim()];
    for (f, facet) in mesh.facets.iter().enumerate() {
        match facet.tag {
            FacetTag::StokesEssential => {
                let nodes = [
                    layout.vertex_node(facet.vertices[0]).unwrap(),
                    layout.vertex_node(facet.vertices[1]).unwrap(),
                    layout.edge_node(f).unwrap(),
                ];
                for n in nodes {
                    mask[layout.u_s(n, 0)] = true;
                    mask[layout.u_s(n, 1)] = true;
                }
            }
            FacetTag::DarcyEssential => mask[layout.u_d(f).unwrap()] = true,
            _ => {}
        }
    }
    let indices = (0..mask.len()).filter(|&i| mask[i]).collect();
    EssentialDofs { indices, values: vec![0.0; mask.len()], mask }
}

/// P2 nodal interpolant of a vector field, as the u_S block.
pub fn interpolate_stokes_velocity(
    mesh: &Mesh,
    layout: &BlockLayout,
    u: impl Fn([f64; 2]) -> [f64; 2],
) -> Vec<f64> {
    let mut out = vec![0.0; layout.size(Field::StokesVelocity)];
    for (n, &v) in layout.stokes_vertices.iter().enumerate() {
        let val = u(mesh.vertices[v]);
        out[2 * n] = val[0];
        out[2 * n + 1] = val[1];
    }
    for (k, &f) in layout.stokes_edges.iter().enumerate() {
        let n = layout.stokes_vertices.len() + k;
        let val = u(mesh.facet_midpoint(f));
        out[2 * n] = val[0];
        out[2 * n + 1] = val[1];
    }
    out
}

/// RT0 interpolant (mean normal component per facet), as the u_D block.
pub fn interpolate_darcy_velocity(
    mesh: &Mesh,
    layout: &BlockLayout,
    u: impl Fn([f64; 2]) -> [f64; 2],
) -> Vec<f64> {
    let (t, w) = segment_rule(5);
    layout
        .darcy_facets
        .iter()
        .map(|&f| {
            let n = layout.rt0_normal(mesh, f);
            let [a, b] = mesh.facets[f].vertices.map(|v| mesh.vertices[v]);
            t.iter()
                .zip(&w)
                .map(|(s, w)| {
                    let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                    let v = u(p);
                    w * (v[0] * n[0] + v[1] * n[1])
                })
                .sum()
        })
        .collect()
}

/// Interpolates a scalar at the P1 (vertex) nodes, as the p_S block.
pub fn interpolate_p1(mesh: &Mesh, layout: &BlockLayout, p: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    layout.stokes_vertices.iter().map(|&v| p(mesh.vertices[v])).collect()
}
