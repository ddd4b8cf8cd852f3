//! Structured interface-conforming triangulations of abutting rectangles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::element::Triangle;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Two or more lattice-aligned rectangles: one Stokes rectangle and the Darcy rectangles
/// either glued to one of its edges or embedded as inclusions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub stokes_rect: Rect,
    pub darcy_rects: Vec<Rect>,
    /// Lattice divisions per unit length on the coarsest mesh.
    pub base_divisions: usize,
}

impl DomainSpec {
    /// `(0,1)^2` for Stokes with `(0,1)x(1,2)` for Darcy on top.
    pub fn stacked() -> Self {
        Self {
            stokes_rect: Rect::new(0.0, 0.0, 1.0, 1.0),
            darcy_rects: vec![Rect::new(0.0, 1.0, 1.0, 2.0)],
            base_divisions: 4,
        }
    }

    /// Stokes `(0,1)^2` with Darcy `(1,2)x(0,1)` to the right.
    pub fn side_by_side() -> Self {
        Self {
            stokes_rect: Rect::new(0.0, 0.0, 1.0, 1.0),
            darcy_rects: vec![Rect::new(1.0, 0.0, 2.0, 1.0)],
            base_divisions: 4,
        }
    }

    /// Channel of length `1.5 * count` and height 1 holding `count` square inclusions of
    /// side 1/2 on the channel axis.
    pub fn channel(count: usize) -> Self {
        let length = 1.5 * count as f64;
        let darcy_rects = (0..count)
            .map(|i| {
                let x0 = 0.5 + 1.5 * i as f64;
                Rect::new(x0, 0.25, x0 + 0.5, 0.75)
            })
            .collect();
        Self { stokes_rect: Rect::new(0.0, 0.0, length, 1.0), darcy_rects, base_divisions: 4 }
    }

    fn to_lattice(&self, scale: i64) -> Result<(IRect, Vec<IRect>)> {
        let conv = |v: f64| -> Result<i64> {
            let s = v * self.base_divisions as f64;
            if (s - s.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "coordinate {v} is not on the lattice of spacing 1/{}",
                    self.base_divisions
                )));
            }
            Ok(s.round() as i64 * scale)
        };
        let rect = |r: &Rect| -> Result<IRect> {
            let ir = IRect { x0: conv(r.x0)?, y0: conv(r.y0)?, x1: conv(r.x1)?, y1: conv(r.y1)? };
            if ir.x0 >= ir.x1 || ir.y0 >= ir.y1 {
                return Err(Error::Config(format!("degenerate rectangle {r:?}")));
            }
            Ok(ir)
        };
        if self.base_divisions == 0 {
            return Err(Error::Config("base_divisions must be positive".into()));
        }
        if self.darcy_rects.is_empty() {
            return Err(Error::Config("at least one Darcy rectangle is required".into()));
        }
        Ok((rect(&self.stokes_rect)?, self.darcy_rects.iter().map(rect).collect::<Result<_>>()?))
    }

    /// Classifies the layout: all Darcy rectangles glued to the Stokes rectangle, or all
    /// strictly inside it.
    fn arrangement(&self) -> Result<Arrangement> {
        let (s, ds) = self.to_lattice(1)?;
        for (i, a) in ds.iter().enumerate() {
            for b in &ds[i + 1..] {
                if a.x0 < b.x1 && b.x0 < a.x1 && a.y0 < b.y1 && b.y0 < a.y1 {
                    return Err(Error::Config("Darcy rectangles overlap".into()));
                }
            }
        }
        let interior = |d: &IRect| d.x0 > s.x0 && d.x1 < s.x1 && d.y0 > s.y0 && d.y1 < s.y1;
        if ds.iter().all(interior) {
            return Ok(Arrangement::Inclusions);
        }
        let mut sides = Vec::new();
        for d in &ds {
            let side = if d.y0 == s.y1 && d.x0 == s.x0 && d.x1 == s.x1 {
                Side::Top
            } else if d.y1 == s.y0 && d.x0 == s.x0 && d.x1 == s.x1 {
                Side::Bottom
            } else if d.x0 == s.x1 && d.y0 == s.y0 && d.y1 == s.y1 {
                Side::Right
            } else if d.x1 == s.x0 && d.y0 == s.y0 && d.y1 == s.y1 {
                Side::Left
            } else {
                return Err(Error::Config(format!(
                    "Darcy rectangle {d:?} neither shares a full edge with nor lies inside the Stokes rectangle"
                )));
            };
            sides.push(side);
        }
        Ok(Arrangement::Glued(sides))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct IRect {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl IRect {
    /// Twice-scaled containment test for the centre of lattice square `(i, j)`.
    fn contains_centre(&self, i: i64, j: i64) -> bool {
        let (cx, cy) = (2 * i + 1, 2 * j + 1);
        cx > 2 * self.x0 && cx < 2 * self.x1 && cy > 2 * self.y0 && cy < 2 * self.y1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Clone, Debug, PartialEq)]
enum Arrangement {
    /// Side of the Stokes rectangle each Darcy rectangle is glued to.
    Glued(Vec<Side>),
    Inclusions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subdomain {
    Stokes,
    Darcy(usize),
}

impl Subdomain {
    pub fn is_stokes(self) -> bool {
        self == Subdomain::Stokes
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FacetTag {
    Interior,
    Interface,
    StokesEssential,
    StokesNatural,
    DarcyEssential,
    DarcyNatural,
    /// Outer boundary before `tag_boundaries` has run.
    Untagged,
}

/// Boundary-condition configurations. Letters give the Stokes then the Darcy condition
/// on the edges meeting the interface; the starred variants swap the condition on the
/// edge opposite the interface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BcConfig {
    NN,
    EE,
    NEstar,
    ENstar,
    NE,
    EN,
    MultiInclusion,
}

impl BcConfig {
    pub const GLUED: [BcConfig; 6] =
        [BcConfig::NN, BcConfig::EE, BcConfig::NEstar, BcConfig::ENstar, BcConfig::NE, BcConfig::EN];

    /// Tags of (Stokes side, Stokes far, Darcy side, Darcy far) edges, where "side" edges
    /// touch the interface endpoints and "far" edges lie opposite the interface.
    fn glued_tags(self) -> Option<[FacetTag; 4]> {
        use FacetTag::*;
        Some(match self {
            BcConfig::NN => [StokesNatural, StokesEssential, DarcyNatural, DarcyEssential],
            BcConfig::EE => [StokesEssential, StokesEssential, DarcyEssential, DarcyEssential],
            BcConfig::NEstar => [StokesNatural, StokesEssential, DarcyEssential, DarcyNatural],
            BcConfig::ENstar => [StokesEssential, StokesNatural, DarcyNatural, DarcyEssential],
            BcConfig::NE => [StokesNatural, StokesEssential, DarcyEssential, DarcyEssential],
            BcConfig::EN => [StokesEssential, StokesEssential, DarcyNatural, DarcyEssential],
            BcConfig::MultiInclusion => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            BcConfig::NN => "NN",
            BcConfig::EE => "EE",
            BcConfig::NEstar => "NE*",
            BcConfig::ENstar => "EN*",
            BcConfig::NE => "NE",
            BcConfig::EN => "EN",
            BcConfig::MultiInclusion => "multi-inclusion",
        }
    }
}

impl fmt::Display for BcConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BcConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "nn" => BcConfig::NN,
            "ee" => BcConfig::EE,
            "ne*" | "nestar" | "ne-star" => BcConfig::NEstar,
            "en*" | "enstar" | "en-star" => BcConfig::ENstar,
            "ne" => BcConfig::NE,
            "en" => BcConfig::EN,
            "multi" | "multi-inclusion" | "multiinclusion" => BcConfig::MultiInclusion,
            _ => return Err(Error::InvalidArgument(format!("unknown configuration '{s}'"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub vertices: [usize; 3],
    pub domain: Subdomain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    pub vertices: [usize; 2],
    /// Adjacent cells in increasing index order; the second is `None` on the outer boundary.
    pub cells: [Option<usize>; 2],
    pub tag: FacetTag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceFacet {
    pub facet: usize,
    pub stokes_cell: usize,
    pub darcy_cell: usize,
    /// Vertices in the direction of travel along the interface.
    pub start: usize,
    pub end: usize,
    /// Unit normal pointing from the Stokes cell into the Darcy cell.
    pub normal: [f64; 2],
    pub length: f64,
    pub midpoint: [f64; 2],
    pub component: usize,
}

/// One connected piece of the interface: an open path or a closed loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceComponent {
    /// Positions `first..last` in `Mesh::interface`.
    pub first: usize,
    pub last: usize,
    pub closed: bool,
    pub darcy_component: usize,
}

impl InterfaceComponent {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.first..self.last
    }

    pub fn len(&self) -> usize {
        self.last - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.first == self.last
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mesh {
    pub spec: DomainSpec,
    pub nref: usize,
    /// Lattice divisions per unit length.
    pub divisions: usize,
    pub vertices: Vec<[f64; 2]>,
    pub cells: Vec<Cell>,
    /// Local facet `k` of a cell is opposite its vertex `k`.
    pub cell_facets: Vec<[usize; 3]>,
    pub facets: Vec<Facet>,
    pub interface: Vec<InterfaceFacet>,
    pub interface_components: Vec<InterfaceComponent>,
    pub h: f64,
    pub config: Option<BcConfig>,
}

/// Builds the uniform mesh with `n0 * 2^nref` squares per unit length, each split by the
/// diagonal from its lower-left to its upper-right corner.
pub fn build_coupled_mesh(spec: &DomainSpec, nref: usize) -> Result<Mesh> {
    if nref > 12 {
        return Err(Error::Config(format!("nref = {nref} is unreasonably large")));
    }
    spec.arrangement()?;
    let scale = 1i64 << nref;
    let (s, ds) = spec.to_lattice(scale)?;
    let divisions = spec.base_divisions * scale as usize;
    let spacing = 1.0 / divisions as f64;

    let (mut imin, mut jmin, mut imax, mut jmax) = (s.x0, s.y0, s.x1, s.y1);
    for d in &ds {
        imin = imin.min(d.x0);
        jmin = jmin.min(d.y0);
        imax = imax.max(d.x1);
        jmax = jmax.max(d.y1);
    }

    let owner = |i: i64, j: i64| -> Option<Subdomain> {
        if let Some(c) = ds.iter().position(|d| d.contains_centre(i, j)) {
            return Some(Subdomain::Darcy(c));
        }
        s.contains_centre(i, j).then_some(Subdomain::Stokes)
    };

    let mut squares = Vec::new();
    let mut used = BTreeSet::new();
    for j in jmin..jmax {
        for i in imin..imax {
            if let Some(dom) = owner(i, j) {
                squares.push((i, j, dom));
                for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                    used.insert((b, a));
                }
            }
        }
    }
    let vertex_index: HashMap<(i64, i64), usize> =
        used.iter().enumerate().map(|(k, &(j, i))| ((i, j), k)).collect();
    let vertices: Vec<[f64; 2]> =
        used.iter().map(|&(j, i)| [i as f64 * spacing, j as f64 * spacing]).collect();

    let mut cells = Vec::with_capacity(2 * squares.len());
    for &(i, j, domain) in &squares {
        let v = |a: i64, b: i64| vertex_index[&(a, b)];
        cells.push(Cell { vertices: [v(i, j), v(i + 1, j), v(i + 1, j + 1)], domain });
        cells.push(Cell { vertices: [v(i, j), v(i + 1, j + 1), v(i, j + 1)], domain });
    }

    let mut facet_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut facets: Vec<Facet> = Vec::new();
    let mut cell_facets = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        let mut local = [0usize; 3];
        for (k, slot) in local.iter_mut().enumerate() {
            let (a, b) = Triangle::edge_vertices(k);
            let (va, vb) = (cell.vertices[a], cell.vertices[b]);
            let key = (va.min(vb), va.max(vb));
            let f = *facet_index.entry(key).or_insert_with(|| {
                facets.push(Facet { vertices: [va, vb], cells: [Some(c), None], tag: FacetTag::Untagged });
                facets.len() - 1
            });
            if facets[f].cells[0] != Some(c) {
                facets[f].cells[1] = Some(c);
            }
            *slot = f;
        }
        cell_facets.push(local);
    }

    for f in facets.iter_mut() {
        f.tag = match f.cells {
            [Some(a), Some(b)] => {
                let (da, db) = (cells[a].domain, cells[b].domain);
                if da.is_stokes() != db.is_stokes() {
                    FacetTag::Interface
                } else {
                    FacetTag::Interior
                }
            }
            _ => FacetTag::Untagged,
        };
    }

    let mut mesh = Mesh {
        spec: spec.clone(),
        nref,
        divisions,
        vertices,
        cells,
        cell_facets,
        facets,
        interface: Vec::new(),
        interface_components: Vec::new(),
        h: std::f64::consts::SQRT_2 / divisions as f64,
        config: None,
    };
    order_interface(&mut mesh)?;
    Ok(mesh)
}

fn order_interface(mesh: &mut Mesh) -> Result<()> {
    let mut per_component: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (f, facet) in mesh.facets.iter().enumerate() {
        if facet.tag != FacetTag::Interface {
            continue;
        }
        let [a, b] = facet.cells.map(Option::unwrap);
        let dc = if mesh.cells[a].domain.is_stokes() { b } else { a };
        let Subdomain::Darcy(c) = mesh.cells[dc].domain else { unreachable!() };
        per_component.entry(c).or_default().push(f);
    }
    if per_component.is_empty() {
        return Err(Error::Config("the interface is empty".into()));
    }

    for (component, list) in per_component {
        let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
        for &f in &list {
            for v in mesh.facets[f].vertices {
                incident.entry(v).or_default().push(f);
            }
        }
        let key = |v: usize| mesh.vertices[v];
        let ends: Vec<usize> = incident.iter().filter(|(_, fs)| fs.len() == 1).map(|(&v, _)| v).collect();
        let closed = ends.is_empty();
        let (start, first_facet) = if closed {
            let v = *incident
                .keys()
                .min_by(|&&a, &&b| {
                    let (pa, pb) = (key(a), key(b));
                    (pa[1], pa[0]).partial_cmp(&(pb[1], pb[0])).unwrap()
                })
                .unwrap();
            // leave the lowest-leftmost corner along +x
            let f = *incident[&v]
                .iter()
                .find(|&&f| {
                    let o = other_vertex(&mesh.facets[f], v);
                    key(o)[0] > key(v)[0]
                })
                .ok_or_else(|| Error::Config("malformed interface loop".into()))?;
            (v, f)
        } else {
            if ends.len() != 2 {
                return Err(Error::Config("interface component is not a simple path".into()));
            }
            let v = *ends
                .iter()
                .min_by(|&&a, &&b| key(a).partial_cmp(&key(b)).unwrap())
                .unwrap();
            (v, incident[&v][0])
        };

        let first = mesh.interface.len();
        let mut v = start;
        let mut f = first_facet;
        for step in 0..list.len() {
            let facet = &mesh.facets[f];
            let w = other_vertex(facet, v);
            let [a, b] = facet.cells.map(Option::unwrap);
            let (sc, dc) = if mesh.cells[a].domain.is_stokes() { (a, b) } else { (b, a) };
            let k = mesh.cell_facets[sc].iter().position(|&g| g == f).unwrap();
            let tri = mesh.triangle(sc);
            let (pv, pw) = (mesh.vertices[v], mesh.vertices[w]);
            mesh.interface.push(InterfaceFacet {
                facet: f,
                stokes_cell: sc,
                darcy_cell: dc,
                start: v,
                end: w,
                normal: tri.outward_normal(k),
                length: (pw[0] - pv[0]).hypot(pw[1] - pv[1]),
                midpoint: [0.5 * (pv[0] + pw[0]), 0.5 * (pv[1] + pw[1])],
                component,
            });
            if step + 1 < list.len() {
                f = *incident[&w]
                    .iter()
                    .find(|&&g| g != f)
                    .ok_or_else(|| Error::Config("interface path ends early".into()))?;
                v = w;
            }
        }
        mesh.interface_components.push(InterfaceComponent {
            first,
            last: mesh.interface.len(),
            closed,
            darcy_component: component,
        });
    }
    Ok(())
}

fn other_vertex(f: &Facet, v: usize) -> usize {
    if f.vertices[0] == v {
        f.vertices[1]
    } else {
        f.vertices[0]
    }
}

/// Assigns essential/natural tags to the outer boundary according to `config`.
pub fn tag_boundaries(mut mesh: Mesh, config: BcConfig) -> Result<Mesh> {
    let arrangement = mesh.spec.arrangement()?;
    let scale = 1i64 << mesh.nref;
    let (s, ds) = mesh.spec.to_lattice(scale)?;
    let spacing = 1.0 / mesh.divisions as f64;
    let lattice = |p: [f64; 2]| ((p[0] / spacing).round() as i64, (p[1] / spacing).round() as i64);

    // Which edge of a rectangle a boundary facet lies on.
    let edge_of = |r: &IRect, a: (i64, i64), b: (i64, i64)| -> Option<Side> {
        if a.0 == b.0 && a.0 == r.x0 {
            Some(Side::Left)
        } else if a.0 == b.0 && a.0 == r.x1 {
            Some(Side::Right)
        } else if a.1 == b.1 && a.1 == r.y0 {
            Some(Side::Bottom)
        } else if a.1 == b.1 && a.1 == r.y1 {
            Some(Side::Top)
        } else {
            None
        }
    };

    match (config, arrangement) {
        (BcConfig::MultiInclusion, Arrangement::Inclusions) => {
            for f in 0..mesh.facets.len() {
                if mesh.facets[f].tag != FacetTag::Untagged {
                    continue;
                }
                let [a, b] = mesh.facets[f].vertices.map(|v| lattice(mesh.vertices[v]));
                mesh.facets[f].tag = match edge_of(&s, a, b) {
                    Some(Side::Left | Side::Right) => FacetTag::StokesNatural,
                    Some(Side::Top | Side::Bottom) => FacetTag::StokesEssential,
                    None => return Err(Error::Config("outer facet off the channel boundary".into())),
                };
            }
        }
        (BcConfig::MultiInclusion, _) => {
            return Err(Error::Config("multi-inclusion tagging needs interior Darcy inclusions".into()))
        }
        (_, Arrangement::Glued(sides)) if sides.len() == 1 => {
            let tags = config.glued_tags().unwrap();
            let side = sides[0];
            let opposite = match side {
                Side::Left => Side::Right,
                Side::Right => Side::Left,
                Side::Bottom => Side::Top,
                Side::Top => Side::Bottom,
            };
            for f in 0..mesh.facets.len() {
                if mesh.facets[f].tag != FacetTag::Untagged {
                    continue;
                }
                let cell = mesh.facets[f].cells[0].unwrap();
                let [a, b] = mesh.facets[f].vertices.map(|v| lattice(mesh.vertices[v]));
                let (rect, far, base) = match mesh.cells[cell].domain {
                    Subdomain::Stokes => (s, opposite, 0),
                    Subdomain::Darcy(c) => (ds[c], side, 2),
                };
                let e = edge_of(&rect, a, b)
                    .ok_or_else(|| Error::Config("outer facet off its rectangle boundary".into()))?;
                mesh.facets[f].tag = if e == far { tags[base + 1] } else { tags[base] };
            }
        }
        _ => {
            return Err(Error::Config(format!(
                "configuration {config} needs exactly one Darcy rectangle sharing an edge"
            )))
        }
    }
    mesh.config = Some(config);
    Ok(mesh)
}

/// Ordered interface facets; errors if the interface is empty.
pub fn interface_facets(mesh: &Mesh) -> Result<&[InterfaceFacet]> {
    if mesh.interface.is_empty() {
        return Err(Error::Config("the interface is empty".into()));
    }
    Ok(&mesh.interface)
}

impl Mesh {
    pub fn triangle(&self, c: usize) -> Triangle {
        Triangle::new(self.cells[c].vertices.map(|v| self.vertices[v]))
    }

    pub fn num_darcy_components(&self) -> usize {
        self.spec.darcy_rects.len()
    }

    pub fn facet_length(&self, f: usize) -> f64 {
        let [a, b] = self.facets[f].vertices.map(|v| self.vertices[v]);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    pub fn facet_midpoint(&self, f: usize) -> [f64; 2] {
        let [a, b] = self.facets[f].vertices.map(|v| self.vertices[v]);
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
    }

    pub fn count_tag(&self, tag: FacetTag) -> usize {
        self.facets.iter().filter(|f| f.tag == tag).count()
    }

    /// Outer-boundary facets (those with a single adjacent cell).
    pub fn outer_facets(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.facets.len()).filter(|&f| self.facets[f].cells[1].is_none())
    }

    /// Builds and tags in one step.
    pub fn build(spec: &DomainSpec, nref: usize, config: BcConfig) -> Result<Self> {
        tag_boundaries(build_coupled_mesh(spec, nref)?, config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> DomainSpec {
        DomainSpec {
            stokes_rect: Rect::new(0.0, 0.0, 1.0, 1.0),
            darcy_rects: vec![Rect::new(0.0, 1.0, 1.0, 2.0)],
            base_divisions: 1,
        }
    }

    #[test]
    fn coarsest_h_and_refinement() {
        let m0 = build_coupled_mesh(&DomainSpec::stacked(), 0).unwrap();
        assert!((m0.h - 3.54e-1).abs() < 5e-4);
        let m1 = build_coupled_mesh(&DomainSpec::stacked(), 1).unwrap();
        assert!((m1.h - 1.77e-1).abs() < 5e-4);
        assert_eq!(m1.cells.len(), 4 * m0.cells.len());
        assert_eq!(m1.h, m0.h / 2.0);
    }

    #[test]
    fn minimal_grid_counts() {
        let m = build_coupled_mesh(&unit_square(), 0).unwrap();
        let stokes: Vec<_> = (0..m.cells.len()).filter(|&c| m.cells[c].domain.is_stokes()).collect();
        assert_eq!(stokes.len(), 2);
        let mut verts = BTreeSet::new();
        let mut facets = BTreeSet::new();
        for &c in &stokes {
            verts.extend(m.cells[c].vertices);
            facets.extend(m.cell_facets[c]);
        }
        assert_eq!((verts.len(), facets.len()), (4, 5));
        assert_eq!(m.interface.len(), 1);
    }

    #[test]
    fn side_by_side_nn_tags() {
        let m = Mesh::build(&DomainSpec::side_by_side(), 0, BcConfig::NN).unwrap();
        for f in m.outer_facets() {
            let mid = m.facet_midpoint(f);
            let expected = if mid[0] < 1.0 {
                if mid[0] == 0.0 { FacetTag::StokesEssential } else { FacetTag::StokesNatural }
            } else if mid[0] == 2.0 {
                FacetTag::DarcyEssential
            } else {
                FacetTag::DarcyNatural
            };
            assert_eq!(m.facets[f].tag, expected, "facet at {mid:?}");
        }
    }

    #[test]
    fn en_tag_counts() {
        let m = Mesh::build(&DomainSpec::side_by_side(), 0, BcConfig::EN).unwrap();
        assert_eq!(m.count_tag(FacetTag::DarcyNatural), 8);
        assert_eq!(m.count_tag(FacetTag::DarcyEssential), 4);
        assert_eq!(m.count_tag(FacetTag::StokesEssential), 12);
        assert_eq!(m.count_tag(FacetTag::Untagged), 0);
    }

    #[test]
    fn every_outer_facet_gets_one_tag() {
        for config in BcConfig::GLUED {
            let m = Mesh::build(&DomainSpec::stacked(), 1, config).unwrap();
            let outer = m.outer_facets().count();
            let tagged: usize = [
                FacetTag::StokesEssential,
                FacetTag::StokesNatural,
                FacetTag::DarcyEssential,
                FacetTag::DarcyNatural,
            ]
            .iter()
            .map(|&t| m.count_tag(t))
            .sum();
            assert_eq!(outer, tagged);
            assert!(m.count_tag(FacetTag::StokesEssential) > 0);
        }
    }

    #[test]
    fn interface_ordering_and_normals() {
        let m = build_coupled_mesh(&DomainSpec::stacked(), 0).unwrap();
        assert_eq!(m.interface.len(), 4);
        for (i, f) in m.interface.iter().enumerate() {
            assert_eq!(f.length, 0.25);
            assert_eq!(f.normal, [0.0, 1.0]);
            assert_eq!(f.midpoint, [0.125 + 0.25 * i as f64, 1.0]);
        }
        let m2 = build_coupled_mesh(&DomainSpec::stacked(), 2).unwrap();
        assert_eq!(m2.interface.len(), 16);
        assert!(!m2.interface_components[0].closed);
    }

    #[test]
    fn inclusion_forms_a_closed_loop() {
        let spec = DomainSpec {
            stokes_rect: Rect::new(0.0, 0.0, 3.0, 3.0),
            darcy_rects: vec![Rect::new(1.0, 1.0, 2.0, 2.0)],
            base_divisions: 4,
        };
        let m = Mesh::build(&spec, 0, BcConfig::MultiInclusion).unwrap();
        assert_eq!(m.interface.len(), 16);
        assert!(m.interface_components[0].closed);
        for w in m.interface.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        assert_eq!(m.interface.last().unwrap().end, m.interface[0].start);
        // normals point from the channel into the inclusion
        for f in &m.interface {
            let c = [1.5 - f.midpoint[0], 1.5 - f.midpoint[1]];
            assert!(c[0] * f.normal[0] + c[1] * f.normal[1] > 0.0);
        }
    }

    #[test]
    fn off_lattice_spec_is_rejected() {
        let mut spec = DomainSpec::stacked();
        spec.darcy_rects[0].y1 = 2.1;
        assert!(matches!(build_coupled_mesh(&spec, 0), Err(Error::Config(_))));
    }

    #[test]
    fn json_round_trip() {
        let m = Mesh::build(&DomainSpec::stacked(), 0, BcConfig::NE).unwrap();
        let back = Mesh::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.cells, m.cells);
        assert_eq!(back.facets, m.facets);
        assert_eq!(back.config, Some(BcConfig::NE));
    }
}
