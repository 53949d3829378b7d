//! P1 operators: stiffness, consistent and lumped mass, the nodal boundary
//! weights `β_z` and the discrete (regularized) boundary `L¹` norm.
//!
//! Axisymmetric meshes are integrated with the weight `2πr`, evaluated at the
//! element centroid and at edge midpoints. Because `r` is linear this is exact
//! for the stiffness matrix, the lumped masses and the measures, and
//! second-order accurate for the consistent mass matrix.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::{Marker, Mesh, Point};
use crate::sparse::CsrMatrix;

/// All matrices and weights the eigenvalue solvers need for one mesh.
#[derive(Clone, Debug)]
pub struct DiscreteOperators {
    /// `(∇u, ∇v)`
    pub stiffness: CsrMatrix,
    /// `(u, v)`
    pub mass: CsrMatrix,
    /// Row sums of the mass matrix; the evolution metric of the gradient flow.
    pub lumped_mass: Vec<f64>,
    /// `β_z`, the boundary integral of the hat function at `z`; zero away from
    /// the outer boundary.
    pub beta: Vec<f64>,
    /// `diag(β)`: nodal-quadrature boundary mass for uniform Robin conditions.
    pub robin: CsrMatrix,
    /// Area, or volume of the rotational body.
    pub domain_measure: f64,
    /// Length of the outer boundary, or area of the rotated surface.
    pub boundary_measure: f64,
}

/// Gradients of the barycentric coordinates and the area of a triangle.
pub(crate) fn barycentric_gradients(p: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let area = crate::mesh::signed_area(p[0], p[1], p[2]);
    let mut g = [[0.0; 2]; 3];
    for k in 0..3 {
        let a = p[(k + 1) % 3];
        let b = p[(k + 2) % 3];
        // Rotate the opposite edge by -90 degrees and scale.
        g[k] = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
    }
    (g, area)
}

/// Element stiffness matrix of a P1 triangle (unit weight).
pub fn element_stiffness(p: [Point; 3]) -> [[f64; 3]; 3] {
    let (g, area) = barycentric_gradients(p);
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

/// Assembles every operator of [`DiscreteOperators`].
pub fn assemble(mesh: &Mesh) -> DiscreteOperators {
    let n = mesh.num_nodes();
    let nodes = mesh.nodes();
    let mut ka = Vec::with_capacity(9 * mesh.num_triangles());
    let mut ma = Vec::with_capacity(9 * mesh.num_triangles());
    let mut lumped = vec![0.0; n];
    let mut domain_measure = 0.0;
    for tri in mesh.triangles() {
        let p = tri.map(|i| nodes[i]);
        let weight = if mesh.is_axisymmetric() { 2.0 * PI * (p[0][1] + p[1][1] + p[2][1]) / 3.0 } else { 1.0 };
        let (g, area) = barycentric_gradients(p);
        let wa = weight * area;
        domain_measure += wa;
        for i in 0..3 {
            lumped[tri[i]] += wa / 3.0;
            for j in 0..3 {
                ka.push((tri[i], tri[j], wa * (g[i][0] * g[j][0] + g[i][1] * g[j][1])));
                let m = if i == j { wa / 6.0 } else { wa / 12.0 };
                ma.push((tri[i], tri[j], m));
            }
        }
    }

    let mut beta = vec![0.0; n];
    let mut boundary_measure = 0.0;
    for e in mesh.boundary_edges().iter().filter(|e| e.marker == Marker::Outer) {
        let [a, b] = e.nodes;
        let (p, q) = (nodes[a], nodes[b]);
        let len = (q[0] - p[0]).hypot(q[1] - p[1]);
        let weight = if mesh.is_axisymmetric() { PI * (p[1] + q[1]) } else { 1.0 };
        beta[a] += 0.5 * weight * len;
        beta[b] += 0.5 * weight * len;
        boundary_measure += weight * len;
    }

    DiscreteOperators {
        stiffness: CsrMatrix::from_triplets(n, &ka),
        mass: CsrMatrix::from_triplets(n, &ma),
        lumped_mass: lumped,
        robin: CsrMatrix::from_diagonal(&beta),
        beta,
        domain_measure,
        boundary_measure,
    }
}

/// `|a|_ε = (a² + ε²)^{1/2}`
pub fn regularized_abs(a: f64, eps: f64) -> f64 {
    a.hypot(eps)
}

/// `Σ_z β_z |u_z|_ε`, the nodal-quadrature regularized boundary `L¹` norm.
pub fn discrete_l1eps(beta: &[f64], u: &[f64], eps: f64) -> f64 {
    beta.iter()
        .zip(u)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, v)| b * regularized_abs(*v, eps))
        .sum()
}

/// `J(u) = uᵀAu + (1/m) (Σ_z β_z |u_z|_ε)²`
pub fn energy(ops: &DiscreteOperators, u: &[f64], m: f64, eps: f64) -> f64 {
    let l1 = discrete_l1eps(&ops.beta, u, eps);
    ops.stiffness.bilinear(u, u) + l1 * l1 / m
}

/// Optimal film thickness `ℓ_z = m |u_z| / Σ β_z |u_z|` on outer boundary
/// nodes, zero elsewhere.
pub fn thickness(beta: &[f64], u: &[f64], m: f64) -> Result<Vec<f64>> {
    let total = discrete_l1eps(beta, u, 0.0);
    if !(total > 0.0) {
        return Err(Error::ZeroTrace);
    }
    Ok(beta
        .iter()
        .zip(u)
        .map(|(b, v)| if *b > 0.0 { m * v.abs() / total } else { 0.0 })
        .collect())
}
