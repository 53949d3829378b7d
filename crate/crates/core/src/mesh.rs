//! Planar triangulations for the disk, the square and the generating
//! half-profiles of rotational bodies.
//!
//! Rotational bodies are described in `(x1, r)` coordinates: the rotation axis
//! is the `x1` axis and `r = x2 >= 0`. Edges on `r = 0` carry
//! [`Marker::SymmetryAxis`] and are not part of the physical surface.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Classification of a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Marker {
    /// Physical boundary carrying the insulating film.
    Outer,
    /// Rotation axis of an axisymmetric profile.
    SymmetryAxis,
}

impl Marker {
    pub fn as_str(self) -> &'static str {
        match self {
            Marker::Outer => "outer",
            Marker::SymmetryAxis => "symmetry_axis",
        }
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Marker {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "outer" => Ok(Marker::Outer),
            "symmetry_axis" | "axis" => Ok(Marker::SymmetryAxis),
            other => Err(format!("unknown boundary marker `{other}`")),
        }
    }
}

/// A boundary edge oriented so that the domain lies on its left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub marker: Marker,
}

/// Analytic outer boundary centred at the origin: the half `x1 <= 0` is an
/// ellipse arc with semi-axes `(neg, radius)`, the half `x1 >= 0` one with
/// semi-axes `(pos, radius)`. The circle of radius one is `neg = pos = radius = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipticBoundary {
    pub neg: f64,
    pub pos: f64,
    pub radius: f64,
}

impl EllipticBoundary {
    pub fn unit_circle() -> Self {
        Self { neg: 1.0, pos: 1.0, radius: 1.0 }
    }

    /// Componentwise-scaled radial projection onto the curve.
    pub fn project(&self, p: Point) -> Point {
        let ax = if p[0] < 0.0 { self.neg } else { self.pos };
        let s = p[0] / ax;
        let t = p[1] / self.radius;
        let n = s.hypot(t);
        [ax * s / n, self.radius * t / n]
    }

    /// Scaled radial distance; equals one on the curve.
    pub fn level(&self, p: Point) -> f64 {
        let ax = if p[0] < 0.0 { self.neg } else { self.pos };
        (p[0] / ax).hypot(p[1] / self.radius)
    }
}

/// Rotational bodies with the volume of the unit ball, described by their
/// generating half-profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RotationalBody {
    Ball,
    /// Ellipsoid with radii `(a, r_a, r_a)`, `r_a = a^{-1/2}`.
    Ellipsoid { a: f64 },
    /// Half-ellipsoid of axis `a` on `x1 <= 0` glued to one of axis `b` on
    /// `x1 >= 0`, sharing the radius `(2 / (a + b))^{1/2}`.
    HalfEllipsoids { a: f64, b: f64 },
}

impl RotationalBody {
    /// Volume shared by every body of the family, `|B_1(0)| = 4π/3`.
    pub const VOLUME: f64 = 4.0 * PI / 3.0;

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            RotationalBody::Ball => true,
            RotationalBody::Ellipsoid { a } => a > 0.0 && a.is_finite(),
            RotationalBody::HalfEllipsoids { a, b } => {
                a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("semi-axes must be positive: {self:?}")))
        }
    }

    /// Radius of the body in the directions orthogonal to the axis.
    pub fn radius(&self) -> f64 {
        self.boundary().radius
    }

    pub fn boundary(&self) -> EllipticBoundary {
        match *self {
            RotationalBody::Ball => EllipticBoundary::unit_circle(),
            RotationalBody::Ellipsoid { a } => EllipticBoundary { neg: a, pos: a, radius: a.powf(-0.5) },
            RotationalBody::HalfEllipsoids { a, b } => {
                EllipticBoundary { neg: a, pos: b, radius: (2.0 / (a + b)).sqrt() }
            }
        }
    }
}

/// Total measure of a mesh: area and perimeter in the plane, volume and
/// surface area of the rotational body for axisymmetric meshes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measures {
    pub volume: f64,
    pub surface: f64,
}

/// A conforming triangulation with counterclockwise triangles.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    axisymmetric: bool,
    curved: Option<EllipticBoundary>,
}

const AXIS_TOL: f64 = 1e-14;

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        axisymmetric: bool,
    ) -> Result<Self> {
        let mesh = Mesh { nodes, triangles, boundary, axisymmetric, curved: None };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.nodes.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidMesh("non-finite node coordinate".into()));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing node")));
            }
            let area = self.signed_area(t);
            if !(area > 0.0) {
                return Err(Error::DegenerateElement { triangle: t, area });
            }
        }
        for e in &self.boundary {
            if e.nodes.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh("boundary edge references a missing node".into()));
            }
        }

        let mut faces: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let entry = faces.entry((a.min(b), a.max(b))).or_insert((0, [a, b]));
                entry.0 += 1;
            }
        }
        let mut expected: HashMap<[usize; 2], ()> = faces
            .values()
            .filter(|(count, _)| *count == 1)
            .map(|(_, dir)| (*dir, ()))
            .collect();
        if let Some(((a, b), _)) = faces.iter().find(|(_, (count, _))| *count > 2) {
            return Err(Error::InvalidMesh(format!("edge ({a}, {b}) shared by more than two triangles")));
        }
        for e in &self.boundary {
            if expected.remove(&e.nodes).is_none() {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {:?} is not a counterclockwise edge of exactly one triangle",
                    e.nodes
                )));
            }
        }
        if let Some((dir, _)) = expected.iter().next() {
            return Err(Error::InvalidMesh(format!("boundary edge {dir:?} is missing")));
        }

        if self.axisymmetric {
            if self.nodes.iter().any(|p| p[1] < -AXIS_TOL) {
                return Err(Error::InvalidMesh("axisymmetric mesh has a node with r < 0".into()));
            }
            for e in self.boundary.iter().filter(|e| e.marker == Marker::SymmetryAxis) {
                if e.nodes.iter().any(|&i| self.nodes[i][1].abs() > AXIS_TOL) {
                    return Err(Error::InvalidMesh("symmetry-axis edge off r = 0".into()));
                }
            }
        } else if self.boundary.iter().any(|e| e.marker == Marker::SymmetryAxis) {
            return Err(Error::InvalidMesh("symmetry-axis edge in a planar mesh".into()));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn is_axisymmetric(&self) -> bool {
        self.axisymmetric
    }

    /// Analytic curve the outer boundary nodes lie on, if any.
    pub fn curved_boundary(&self) -> Option<EllipticBoundary> {
        self.curved
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    /// Sum of the planar triangle areas.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Mesh size: the maximal edge length.
    pub fn h(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |k| (tri[k], tri[(k + 1) % 3])))
            .map(|(a, b)| dist(self.nodes[a], self.nodes[b]))
            .fold(0.0, f64::max)
    }

    /// Area-weighted centroid of the planar region.
    pub fn centroid(&self) -> Point {
        let mut c = [0.0; 2];
        let mut total = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            let a = self.signed_area(t);
            for &i in tri {
                c[0] += a * self.nodes[i][0] / 3.0;
                c[1] += a * self.nodes[i][1] / 3.0;
            }
            total += a;
        }
        [c[0] / total, c[1] / total]
    }

    pub fn measures(&self) -> Measures {
        let mut volume = 0.0;
        for (t, tri) in self.triangles.iter().enumerate() {
            let w = if self.axisymmetric {
                2.0 * PI * tri.iter().map(|&i| self.nodes[i][1]).sum::<f64>() / 3.0
            } else {
                1.0
            };
            volume += w * self.signed_area(t);
        }
        let mut surface = 0.0;
        for e in self.boundary.iter().filter(|e| e.marker == Marker::Outer) {
            let (p, q) = (self.nodes[e.nodes[0]], self.nodes[e.nodes[1]]);
            let w = if self.axisymmetric { PI * (p[1] + q[1]) } else { 1.0 };
            surface += w * dist(p, q);
        }
        Measures { volume, surface }
    }

    /// `true` for nodes touched by an outer boundary edge.
    pub fn outer_node_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.nodes.len()];
        for e in self.boundary.iter().filter(|e| e.marker == Marker::Outer) {
            mask[e.nodes[0]] = true;
            mask[e.nodes[1]] = true;
        }
        mask
    }

    /// Outer boundary nodes in traversal order (domain on the left).
    ///
    /// For closed curves the first node is not repeated; for the open arc of
    /// an axisymmetric profile the chain runs from pole to pole.
    pub fn outer_chain(&self) -> OuterChain {
        let mut next: HashMap<usize, usize> = HashMap::new();
        let mut has_prev: HashMap<usize, bool> = HashMap::new();
        for e in self.boundary.iter().filter(|e| e.marker == Marker::Outer) {
            next.insert(e.nodes[0], e.nodes[1]);
            has_prev.insert(e.nodes[1], true);
            has_prev.entry(e.nodes[0]).or_insert(false);
        }
        let start = has_prev
            .iter()
            .filter(|(_, p)| !**p)
            .map(|(n, _)| *n)
            .min()
            .or_else(|| {
                self.boundary.iter().find(|e| e.marker == Marker::Outer).map(|e| e.nodes[0])
            });
        let Some(start) = start else {
            return OuterChain { nodes: Vec::new(), closed: false };
        };
        let mut nodes = vec![start];
        let mut cur = start;
        let mut closed = false;
        while let Some(&nx) = next.get(&cur) {
            if nx == start {
                closed = true;
                break;
            }
            nodes.push(nx);
            cur = nx;
            if nodes.len() > next.len() + 1 {
                break;
            }
        }
        OuterChain { nodes, closed }
    }

    /// Uniform red refinement; midpoints of outer edges are projected onto the
    /// analytic boundary when the mesh carries one.
    pub fn refine(&self) -> Mesh {
        let mut nodes = self.nodes.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut nodes);
            let bc = midpoint(b, c, &mut nodes);
            let ca = midpoint(c, a, &mut nodes);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        let mut boundary = Vec::with_capacity(2 * self.boundary.len());
        for e in &self.boundary {
            let [a, b] = e.nodes;
            let m = midpoint(a, b, &mut nodes);
            if e.marker == Marker::Outer {
                if let Some(curve) = self.curved {
                    nodes[m] = curve.project(nodes[m]);
                }
            }
            boundary.push(BoundaryEdge { nodes: [a, m], marker: e.marker });
            boundary.push(BoundaryEdge { nodes: [m, b], marker: e.marker });
        }
        Mesh { nodes, triangles, boundary, axisymmetric: self.axisymmetric, curved: self.curved }
    }

    pub fn refined(&self, times: usize) -> Mesh {
        let mut mesh = self.clone();
        for _ in 0..times {
            mesh = mesh.refine();
        }
        mesh
    }

    /// Moves every node by `scale * displacement`. The result no longer
    /// carries an analytic boundary.
    pub fn deform(&self, displacement: &[[f64; 2]], scale: f64) -> Result<Mesh> {
        if displacement.len() != self.nodes.len() {
            return Err(Error::InvalidParameter(format!(
                "displacement has {} entries for {} nodes",
                displacement.len(),
                self.nodes.len()
            )));
        }
        let nodes: Vec<Point> = self
            .nodes
            .iter()
            .zip(displacement)
            .map(|(p, d)| [p[0] + scale * d[0], p[1] + scale * d[1]])
            .collect();
        self.with_nodes(nodes)
    }

    /// Same connectivity, new coordinates.
    pub fn with_nodes(&self, nodes: Vec<Point>) -> Result<Mesh> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::InvalidParameter("node count changed".into()));
        }
        let mesh = Mesh {
            nodes,
            triangles: self.triangles.clone(),
            boundary: self.boundary.clone(),
            axisymmetric: self.axisymmetric,
            curved: None,
        };
        for t in 0..mesh.triangles.len() {
            let area = mesh.signed_area(t);
            if !(area > 0.0) {
                return Err(Error::DegenerateElement { triangle: t, area });
            }
        }
        Ok(mesh)
    }

    /// Uniform scaling about `center`.
    pub fn scaled_about(&self, center: Point, factor: f64) -> Mesh {
        let nodes = self
            .nodes
            .iter()
            .map(|p| [center[0] + factor * (p[0] - center[0]), center[1] + factor * (p[1] - center[1])])
            .collect();
        Mesh {
            nodes,
            triangles: self.triangles.clone(),
            boundary: self.boundary.clone(),
            axisymmetric: self.axisymmetric,
            curved: None,
        }
    }

    /// Applies a node relabeling: old node `i` becomes node `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Mesh> {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter("relabeling is not a permutation".into()));
        }
        let mut nodes = vec![[0.0; 2]; n];
        for (i, p) in self.nodes.iter().enumerate() {
            nodes[perm[i]] = *p;
        }
        let triangles = self.triangles.iter().map(|t| t.map(|i| perm[i])).collect();
        let boundary = self
            .boundary
            .iter()
            .map(|e| BoundaryEdge { nodes: e.nodes.map(|i| perm[i]), marker: e.marker })
            .collect();
        let mut mesh = Mesh::new(nodes, triangles, boundary, self.axisymmetric)?;
        mesh.curved = self.curved;
        Ok(mesh)
    }
}

/// Ordered outer boundary nodes, see [`Mesh::outer_chain`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OuterChain {
    pub nodes: Vec<usize>,
    pub closed: bool,
}

impl OuterChain {
    /// Cumulative arc length at each chain node, starting from zero.
    pub fn arc_lengths(&self, mesh: &Mesh) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.nodes.len());
        let mut acc = 0.0;
        for (k, &i) in self.nodes.iter().enumerate() {
            if k > 0 {
                acc += dist(mesh.nodes[self.nodes[k - 1]], mesh.nodes[i]);
            }
            s.push(acc);
        }
        s
    }
}

/// Unit disk: a fan of four right triangles from the origin, red-refined with
/// radial projection of new boundary nodes. Has `4 * 4^refinements` triangles.
pub fn make_disk(refinements: usize) -> Mesh {
    let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
    let triangles = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]];
    let boundary = [[1, 2], [2, 3], [3, 4], [4, 1]]
        .into_iter()
        .map(|nodes| BoundaryEdge { nodes, marker: Marker::Outer })
        .collect();
    let mut mesh = Mesh::new(nodes, triangles, boundary, false).expect("disk macro mesh is valid");
    mesh.curved = Some(EllipticBoundary::unit_circle());
    mesh.refined(refinements)
}

/// Unit square `(0,1)^2` split along its diagonal, then red-refined.
pub fn make_square(refinements: usize) -> Mesh {
    let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let triangles = vec![[0, 1, 2], [0, 2, 3]];
    let boundary = [[0, 1], [1, 2], [2, 3], [3, 0]]
        .into_iter()
        .map(|nodes| BoundaryEdge { nodes, marker: Marker::Outer })
        .collect();
    Mesh::new(nodes, triangles, boundary, false)
        .expect("square macro mesh is valid")
        .refined(refinements)
}

/// Generating half-profile of a rotational body in `(x1, r)` coordinates.
pub fn make_half_profile(body: RotationalBody, refinements: usize) -> Result<Mesh> {
    body.validate()?;
    let curve = body.boundary();
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let unit = [[0.0, 0.0], [1.0, 0.0], [c, c], [0.0, 1.0], [-c, c], [-1.0, 0.0]];
    let nodes = unit
        .iter()
        .map(|p| {
            let ax = if p[0] < 0.0 { curve.neg } else { curve.pos };
            [ax * p[0], curve.radius * p[1]]
        })
        .collect();
    let triangles = vec![[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5]];
    let mut boundary: Vec<BoundaryEdge> = [[1, 2], [2, 3], [3, 4], [4, 5]]
        .into_iter()
        .map(|nodes| BoundaryEdge { nodes, marker: Marker::Outer })
        .collect();
    boundary.push(BoundaryEdge { nodes: [5, 0], marker: Marker::SymmetryAxis });
    boundary.push(BoundaryEdge { nodes: [0, 1], marker: Marker::SymmetryAxis });
    let mut mesh = Mesh::new(nodes, triangles, boundary, true)?;
    mesh.curved = Some(curve);
    Ok(mesh.refined(refinements))
}
