//! Plain-text mesh files and legacy ASCII VTK output.
//!
//! Mesh format:
//!
//! ```text
//! nodes N
//! x y            (N lines)
//! triangles M
//! i j k          (M lines, zero-based, counterclockwise)
//! boundary B
//! i j marker     (B lines, marker `outer` or `symmetry_axis`)
//! ```
//!
//! A mesh is read back as axisymmetric exactly when it has a
//! `symmetry_axis` edge.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryEdge, Marker, Mesh};

pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "nodes {}", mesh.num_nodes()).unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:e} {:e}", p[0], p[1]).unwrap();
    }
    writeln!(s, "triangles {}", mesh.num_triangles()).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "boundary {}", mesh.boundary_edges().len()).unwrap();
    for e in mesh.boundary_edges() {
        writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.marker).unwrap();
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let fields: Vec<&str> = l.split_whitespace().collect();
            if !fields.is_empty() {
                return Ok(fields);
            }
        }
        Err(self.err("unexpected end of file"))
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, message: message.into() }
    }

    fn header(&mut self, keyword: &str) -> Result<usize> {
        let f = self.next_fields()?;
        match f.as_slice() {
            [k, n] if *k == keyword => n.parse().map_err(|_| self.err(format!("bad count `{n}`"))),
            _ => Err(self.err(format!("expected `{keyword} <count>`"))),
        }
    }

    fn record<const N: usize, T: std::str::FromStr>(&mut self) -> Result<([T; N], Vec<&'a str>)> {
        let f = self.next_fields()?;
        if f.len() < N {
            return Err(self.err(format!("expected {N} values, found {}", f.len())));
        }
        let mut vals = Vec::with_capacity(N);
        for s in &f[..N] {
            vals.push(s.parse::<T>().map_err(|_| self.err(format!("cannot parse `{s}`")))?);
        }
        let arr: [T; N] = vals.try_into().map_err(|_| self.err("internal"))?;
        Ok((arr, f[N..].to_vec()))
    }
}

pub fn mesh_from_str(text: &str) -> Result<Mesh> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let n = lines.header("nodes")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(lines.record::<2, f64>()?.0);
    }
    let m = lines.header("triangles")?;
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        triangles.push(lines.record::<3, usize>()?.0);
    }
    let b = lines.header("boundary")?;
    let mut boundary = Vec::with_capacity(b);
    for _ in 0..b {
        let (ij, rest) = lines.record::<2, usize>()?;
        let marker = match rest.as_slice() {
            [m] => m.parse::<Marker>().map_err(|e| lines.err(e))?,
            _ => return Err(lines.err("expected `i j marker`")),
        };
        boundary.push(BoundaryEdge { nodes: ij, marker });
    }
    let axisymmetric = boundary.iter().any(|e| e.marker == Marker::SymmetryAxis);
    Mesh::new(nodes, triangles, boundary, axisymmetric)
}

pub fn write_mesh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    Ok(fs::write(path, mesh_to_string(mesh))?)
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    mesh_from_str(&fs::read_to_string(path)?)
}

fn check_fields(n: usize, fields: &[(&str, &[f64])]) -> Result<()> {
    for (name, vals) in fields {
        if vals.len() != n {
            return Err(Error::InvalidParameter(format!("point field `{name}` has {} values, expected {n}", vals.len())));
        }
    }
    Ok(())
}

fn point_data(s: &mut String, n: usize, fields: &[(&str, &[f64])]) {
    if fields.is_empty() {
        return;
    }
    writeln!(s, "POINT_DATA {n}").unwrap();
    for (name, vals) in fields {
        writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for v in *vals {
            writeln!(s, "{v:e}").unwrap();
        }
    }
}

/// Legacy ASCII unstructured grid of the triangulation with nodal scalar
/// fields, e.g. `[("u", &u), ("thickness", &ell)]`.
pub fn vtk_unstructured(mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<String> {
    let n = mesh.num_nodes();
    check_fields(n, fields)?;
    let mut s = String::from("# vtk DataFile Version 3.0\ninsulation\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    writeln!(s, "POINTS {n} double").unwrap();
    for p in mesh.nodes() {
        writeln!(s, "{:e} {:e} 0", p[0], p[1]).unwrap();
    }
    let m = mesh.num_triangles();
    writeln!(s, "CELLS {m} {}", 4 * m).unwrap();
    for t in mesh.triangles() {
        writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(s, "CELL_TYPES {m}").unwrap();
    for _ in 0..m {
        s.push_str("5\n");
    }
    point_data(&mut s, n, fields);
    Ok(s)
}

/// Outer boundary as a polyline in chain order; fields are indexed by mesh
/// node and restricted to the chain.
pub fn vtk_boundary(mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<String> {
    check_fields(mesh.num_nodes(), fields)?;
    let chain = mesh.outer_chain();
    let k = chain.nodes.len();
    let mut s = String::from("# vtk DataFile Version 3.0\ninsulation boundary\nASCII\nDATASET POLYDATA\n");
    writeln!(s, "POINTS {k} double").unwrap();
    for &i in &chain.nodes {
        let p = mesh.nodes()[i];
        writeln!(s, "{:e} {:e} 0", p[0], p[1]).unwrap();
    }
    let len = k + usize::from(chain.closed);
    writeln!(s, "LINES 1 {}", len + 1).unwrap();
    let ids: Vec<String> = (0..k).chain(chain.closed.then_some(0)).map(|i| i.to_string()).collect();
    writeln!(s, "{len} {}", ids.join(" ")).unwrap();
    let restricted: Vec<(&str, Vec<f64>)> =
        fields.iter().map(|(name, vals)| (*name, chain.nodes.iter().map(|&i| vals[i]).collect())).collect();
    let views: Vec<(&str, &[f64])> = restricted.iter().map(|(n, v)| (*n, v.as_slice())).collect();
    point_data(&mut s, k, &views);
    Ok(s)
}

pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<()> {
    Ok(fs::write(path, vtk_unstructured(mesh, fields)?)?)
}

pub fn write_boundary_vtk(path: impl AsRef<Path>, mesh: &Mesh, fields: &[(&str, &[f64])]) -> Result<()> {
    Ok(fs::write(path, vtk_boundary(mesh, fields)?)?)
}
