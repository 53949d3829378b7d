//! Shape gradient descent for planar domains.
//!
//! The shape derivative of `λ_m` in direction `w` is the boundary integral
//! `∫ j_m(u) w·n ds` with density
//!
//! ```text
//! j_m(u) = |∇u|² − 2 |∂_n u|² − λ_m u² + (2/m) ‖u‖_{L¹(∂Ω)} H u.
//! ```
//!
//! A divergence-free representative `v` is computed from the Stokes problem
//! `(v, w) + (∇v, ∇w) + (p, div w) = δλ_m[w]`, `(q, div v) = 0`, discretized
//! with Crouzeix–Raviart velocities and piecewise constant pressures, then
//! averaged to the vertices. The domain moves along `−v`.

use std::collections::HashMap;

use crate::assembly::{barycentric_gradients, DiscreteOperators};
use crate::error::{Error, Result};
use crate::flow::{resume, solve, EigenResult, SolveParams};
use crate::mesh::{Marker, Mesh, Point};
use crate::sparse::{minres, CgOptions, CsrMatrix, IncompleteCholesky, LinearOperator, Preconditioner};

/// Pointwise ingredients of the shape derivative on the outer boundary.
#[derive(Clone, Debug)]
pub struct BoundaryDensity {
    /// Outer boundary nodes in traversal order.
    pub nodes: Vec<usize>,
    pub j: Vec<f64>,
    /// Discrete curvature (turning angle over mean incident edge length).
    pub curvature: Vec<f64>,
    /// Outward angle-bisector normals.
    pub normals: Vec<[f64; 2]>,
    pub grad_sq: Vec<f64>,
    pub normal_derivative_sq: Vec<f64>,
    pub u_sq: Vec<f64>,
}

impl BoundaryDensity {
    /// Density values scattered to a full nodal vector (zero off the boundary).
    pub fn nodal_j(&self, num_nodes: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_nodes];
        for (&i, &j) in self.nodes.iter().zip(&self.j) {
            out[i] = j;
        }
        out
    }
}

fn closed_chain(mesh: &Mesh) -> Result<Vec<usize>> {
    if mesh.is_axisymmetric() {
        return Err(Error::InvalidMesh("shape gradients are implemented for planar domains only".into()));
    }
    let chain = mesh.outer_chain();
    if !chain.closed || chain.nodes.len() < 3 {
        return Err(Error::InvalidMesh("outer boundary is not a single closed curve".into()));
    }
    Ok(chain.nodes)
}

fn sub(a: Point, b: Point) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn len(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Turning angles, mean incident edge lengths and bisector normals along a
/// closed counterclockwise polygon.
fn polygon_geometry(pts: &[Point]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let n = pts.len();
    let mut curvature = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for k in 0..n {
        let prev = pts[(k + n - 1) % n];
        let next = pts[(k + 1) % n];
        let e1 = sub(pts[k], prev);
        let e2 = sub(next, pts[k]);
        let (l1, l2) = (len(e1), len(e2));
        let t1 = [e1[0] / l1, e1[1] / l1];
        let t2 = [e2[0] / l2, e2[1] / l2];
        let turn = (t1[0] * t2[1] - t1[1] * t2[0]).atan2(t1[0] * t2[0] + t1[1] * t2[1]);
        curvature.push(turn / (0.5 * (l1 + l2)));
        let nb = [t1[1] + t2[1], -(t1[0] + t2[0])];
        let nl = len(nb);
        normals.push([nb[0] / nl, nb[1] / nl]);
    }
    (curvature, normals)
}

/// Evaluates `j_m(u)` at the outer boundary nodes.
pub fn boundary_density(mesh: &Mesh, ops: &DiscreteOperators, eigen: &EigenResult, m: f64) -> Result<BoundaryDensity> {
    let nodes = closed_chain(mesh)?;
    let u = &eigen.u;
    let on_boundary = mesh.outer_node_mask();
    let mut grad = vec![[0.0; 2]; mesh.num_nodes()];
    let mut weight = vec![0.0; mesh.num_nodes()];
    for tri in mesh.triangles() {
        if !tri.iter().any(|&i| on_boundary[i]) {
            continue;
        }
        let (g, area) = barycentric_gradients([mesh.nodes()[tri[0]], mesh.nodes()[tri[1]], mesh.nodes()[tri[2]]]);
        let mut gu = [0.0; 2];
        for k in 0..3 {
            gu[0] += u[tri[k]] * g[k][0];
            gu[1] += u[tri[k]] * g[k][1];
        }
        for &i in tri {
            grad[i][0] += area * gu[0];
            grad[i][1] += area * gu[1];
            weight[i] += area;
        }
    }
    let pts: Vec<Point> = nodes.iter().map(|&i| mesh.nodes()[i]).collect();
    let (curvature, normals) = polygon_geometry(&pts);
    let l1: f64 = ops.beta.iter().zip(u).map(|(b, v)| b * v.abs()).sum();
    let mut density = BoundaryDensity {
        nodes: nodes.clone(),
        j: Vec::with_capacity(nodes.len()),
        curvature,
        normals,
        grad_sq: Vec::with_capacity(nodes.len()),
        normal_derivative_sq: Vec::with_capacity(nodes.len()),
        u_sq: Vec::with_capacity(nodes.len()),
    };
    for (k, &i) in nodes.iter().enumerate() {
        let g = [grad[i][0] / weight[i], grad[i][1] / weight[i]];
        let n = density.normals[k];
        let dn = g[0] * n[0] + g[1] * n[1];
        let gs = g[0] * g[0] + g[1] * g[1];
        let us = u[i] * u[i];
        let j = gs - 2.0 * dn * dn - eigen.lambda * us + 2.0 / m * l1 * density.curvature[k] * u[i];
        density.grad_sq.push(gs);
        density.normal_derivative_sq.push(dn * dn);
        density.u_sq.push(us);
        density.j.push(j);
    }
    Ok(density)
}

/// `∫ j w·n ds` by the trapezoidal rule on each outer edge with the edge normal.
pub fn shape_derivative(mesh: &Mesh, density: &BoundaryDensity, w: &[[f64; 2]]) -> f64 {
    let j = density.nodal_j(mesh.num_nodes());
    let mut total = 0.0;
    for e in mesh.boundary_edges().iter().filter(|e| e.marker == Marker::Outer) {
        let [a, b] = e.nodes;
        let d = sub(mesh.nodes()[b], mesh.nodes()[a]);
        // Outward normal times edge length for a counterclockwise boundary.
        let nl = [d[1], -d[0]];
        let wa = w[a][0] * nl[0] + w[a][1] * nl[1];
        let wb = w[b][0] * nl[0] + w[b][1] * nl[1];
        total += 0.5 * (j[a] * wa + j[b] * wb);
    }
    total
}

/// Crouzeix–Raviart / P0 discretization of the Stokes-type problem on a mesh.
struct CrStokes {
    edges: Vec<[usize; 2]>,
    /// Global edge opposite each local vertex.
    tri_edges: Vec<[usize; 3]>,
    /// `|T| ∇φ_e` for the three local edge basis functions.
    tri_div: Vec<[[f64; 2]; 3]>,
    areas: Vec<f64>,
    /// Scalar CR mass plus stiffness, shared by both velocity components.
    k: CsrMatrix,
}

impl CrStokes {
    fn new(mesh: &Mesh) -> Self {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut tri_edges = Vec::with_capacity(mesh.num_triangles());
        let mut tri_div = Vec::with_capacity(mesh.num_triangles());
        let mut areas = Vec::with_capacity(mesh.num_triangles());
        let mut trip = Vec::with_capacity(9 * mesh.num_triangles());
        for tri in mesh.triangles() {
            let mut local = [0usize; 3];
            for k in 0..3 {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = (a.min(b), a.max(b));
                local[k] = *index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
            }
            let (g, area) = barycentric_gradients([mesh.nodes()[tri[0]], mesh.nodes()[tri[1]], mesh.nodes()[tri[2]]]);
            // φ_k = 1 − 2λ_k is the basis function of the edge opposite vertex k.
            let grad_phi = g.map(|gk| [-2.0 * gk[0], -2.0 * gk[1]]);
            for a in 0..3 {
                trip.push((local[a], local[a], area / 3.0));
                for b in 0..3 {
                    let s = area * (grad_phi[a][0] * grad_phi[b][0] + grad_phi[a][1] * grad_phi[b][1]);
                    trip.push((local[a], local[b], s));
                }
            }
            tri_edges.push(local);
            tri_div.push(grad_phi.map(|gp| [area * gp[0], area * gp[1]]));
            areas.push(area);
        }
        let k = CsrMatrix::from_triplets(edges.len(), &trip);
        Self { edges, tri_edges, tri_div, areas, k }
    }

    fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// `(B v)_T = ∫_T div v`.
    fn div(&self, v: &[[f64; 2]]) -> Vec<f64> {
        self.tri_edges
            .iter()
            .zip(&self.tri_div)
            .map(|(e, d)| (0..3).map(|k| d[k][0] * v[e[k]][0] + d[k][1] * v[e[k]][1]).sum())
            .collect()
    }
}

/// The saddle-point operator `[K 0 Bᵀ_x; 0 K Bᵀ_y; B_x B_y 0]` on
/// `(v_x, v_y, p)`.
impl LinearOperator for CrStokes {
    fn dim(&self) -> usize {
        2 * self.num_edges() + self.areas.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ne = self.num_edges();
        let (vx, rest) = x.split_at(ne);
        let (vy, p) = rest.split_at(ne);
        let (yx, rest) = y.split_at_mut(ne);
        let (yy, yp) = rest.split_at_mut(ne);
        self.k.mul_vec_into(vx, yx);
        self.k.mul_vec_into(vy, yy);
        yp.iter_mut().for_each(|v| *v = 0.0);
        for (t, (e, d)) in self.tri_edges.iter().zip(&self.tri_div).enumerate() {
            let mut div = 0.0;
            for k in 0..3 {
                yx[e[k]] += p[t] * d[k][0];
                yy[e[k]] += p[t] * d[k][1];
                div += d[k][0] * vx[e[k]] + d[k][1] * vy[e[k]];
            }
            yp[t] = div;
        }
    }

    fn preconditioner(&self) -> Preconditioner {
        let ne = self.num_edges();
        let velocity = match IncompleteCholesky::new(&self.k) {
            Some(ic) => Preconditioner::IncompleteCholesky(ic),
            None => Preconditioner::jacobi(Some(self.k.diagonal()), ne),
        };
        let pressure = Preconditioner::Diagonal(self.areas.iter().map(|a| 1.0 / a).collect());
        Preconditioner::Blocks(vec![(ne, velocity.clone()), (ne, velocity), (self.areas.len(), pressure)])
    }
}

/// Edge velocities, pressures and the vertex descent field of a Stokes solve.
#[derive(Clone, Debug)]
pub struct StokesSolution {
    /// Nonconforming velocity at the edge midpoints (the gradient representative).
    pub edge_velocity: Vec<[f64; 2]>,
    /// Endpoints of each edge, matching `edge_velocity`.
    pub edges: Vec<[usize; 2]>,
    pub pressure: Vec<f64>,
    /// Largest `|∫_T div v| / |T|` over all triangles.
    pub max_divergence: f64,
    /// MINRES iterations.
    pub iterations: usize,
    /// Descent direction `−v` averaged to the vertices.
    pub descent: Vec<[f64; 2]>,
}

const STOKES_TOL: f64 = 1e-11;
const STOKES_MAX_ITER: usize = 100_000;

/// Solves the Stokes problem with right-hand side `∫ j w·n ds` (edge-midpoint
/// quadrature) by MINRES on the saddle-point system, preconditioned with incomplete
/// Cholesky on the velocity blocks and the element areas on the pressure.
pub fn stokes_solve(mesh: &Mesh, density: &BoundaryDensity) -> Result<StokesSolution> {
    let stokes = CrStokes::new(mesh);
    let j = density.nodal_j(mesh.num_nodes());
    let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, e) in stokes.edges.iter().enumerate() {
        edge_of.insert((e[0], e[1]), i);
    }
    let mut f = vec![[0.0; 2]; stokes.num_edges()];
    for e in mesh.boundary_edges().iter().filter(|e| e.marker == Marker::Outer) {
        let [a, b] = e.nodes;
        let d = sub(mesh.nodes()[b], mesh.nodes()[a]);
        let jm = 0.5 * (j[a] + j[b]);
        let idx = edge_of[&(a.min(b), a.max(b))];
        f[idx] = [jm * d[1], -jm * d[0]];
    }
    let ne = stokes.num_edges();
    let nt = stokes.areas.len();
    let mut rhs = vec![0.0; 2 * ne + nt];
    for (i, fi) in f.iter().enumerate() {
        rhs[i] = fi[0];
        rhs[ne + i] = fi[1];
    }
    let sol = minres(&stokes, &rhs, CgOptions { tol: STOKES_TOL, max_iter: STOKES_MAX_ITER })?;
    let iterations = sol.iterations;
    let v: Vec<[f64; 2]> = (0..ne).map(|i| [sol.x[i], sol.x[ne + i]]).collect();
    let p = sol.x[2 * ne..].to_vec();
    let max_divergence = stokes
        .div(&v)
        .iter()
        .zip(&stokes.areas)
        .map(|(d, a)| (d / a).abs())
        .fold(0.0, f64::max);

    let mut descent = vec![[0.0; 2]; mesh.num_nodes()];
    let mut count = vec![0usize; mesh.num_nodes()];
    for (e, ve) in stokes.edges.iter().zip(&v) {
        for &i in e {
            descent[i][0] -= ve[0];
            descent[i][1] -= ve[1];
            count[i] += 1;
        }
    }
    for (d, c) in descent.iter_mut().zip(&count) {
        d[0] /= *c as f64;
        d[1] /= *c as f64;
    }
    Ok(StokesSolution { edge_velocity: v, edges: stokes.edges, pressure: p, max_divergence, iterations, descent })
}

/// Vertex descent field `−∇_St λ_m`.
pub fn stokes_gradient(mesh: &Mesh, density: &BoundaryDensity) -> Result<Vec<[f64; 2]>> {
    stokes_solve(mesh, density).map(|s| s.descent)
}

/// Step-size control of [`shape_descent`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeOptions {
    pub tau_max: f64,
    /// Largest accepted relative decrease of `λ` in one step.
    pub theta: f64,
    /// Stop once the step size falls to this value.
    pub eps_stop: f64,
    /// Cap on accepted steps.
    pub max_steps: usize,
}

impl Default for ShapeOptions {
    fn default() -> Self {
        Self { tau_max: 0.5, theta: 0.5, eps_stop: 1e-4, max_steps: 200 }
    }
}

impl ShapeOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        if !(self.tau_max > 0.0 && self.eps_stop > 0.0) {
            return Err(Error::InvalidParameter("tau_max and eps_stop must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted descent step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeRecord {
    pub step: usize,
    pub tau: f64,
    pub lambda: f64,
    pub area: f64,
    /// Trial steps rejected before this one was accepted.
    pub rejected: usize,
}

/// Current iterate of [`shape_descent`].
#[derive(Clone, Debug)]
pub struct ShapeState {
    pub mesh: Mesh,
    pub eigen: EigenResult,
    /// Step size proposed for the next iteration.
    pub tau: f64,
    /// `λ` of the initial domain followed by every accepted step.
    pub lambda_history: Vec<f64>,
    pub records: Vec<ShapeRecord>,
    /// `true` when the step size fell below `eps_stop` before `max_steps`.
    pub converged: bool,
}

/// Gradient descent of `λ_m` over area-preserving deformations of `mesh0`.
///
/// The solver parameters `p` are kept fixed for all shapes, so `ε` and the
/// stopping threshold do not drift with the mesh size. Each eigenproblem is
/// warm-started from the previous eigenfunction, and the first one from
/// `initial` when given. `on_step` sees every accepted iterate.
pub fn shape_descent(
    mesh0: &Mesh,
    p: &SolveParams,
    opts: &ShapeOptions,
    initial: Option<&EigenResult>,
    mut on_step: impl FnMut(&ShapeState),
) -> Result<ShapeState> {
    opts.validate()?;
    let area0 = mesh0.area();
    let eigen = match initial {
        Some(prev) => resume(mesh0, p, prev)?,
        None => solve(mesh0, p, None)?,
    };
    let mut state = ShapeState {
        mesh: mesh0.clone(),
        lambda_history: vec![eigen.lambda],
        eigen,
        tau: opts.tau_max,
        records: Vec::new(),
        converged: false,
    };
    while state.records.len() < opts.max_steps {
        let ops = crate::assembly::assemble(&state.mesh);
        let density = boundary_density(&state.mesh, &ops, &state.eigen, p.m)?;
        let v = stokes_gradient(&state.mesh, &density)?;
        let lambda = state.eigen.lambda;
        let mut tau = state.tau;
        let mut rejected = 0;
        let accepted = loop {
            if tau <= opts.eps_stop {
                break None;
            }
            if let Some(trial) = trial_domain(&state.mesh, &v, tau, area0)? {
                let eig = resume(&trial, p, &state.eigen)?;
                let decrease = (lambda - eig.lambda) / lambda;
                if eig.lambda < lambda && decrease < opts.theta {
                    break Some((trial, eig));
                }
            }
            rejected += 1;
            tau *= 0.5;
        };
        let Some((mesh, eig)) = accepted else {
            state.converged = true;
            state.tau = tau;
            break;
        };
        state.lambda_history.push(eig.lambda);
        state.records.push(ShapeRecord {
            step: state.records.len() + 1,
            tau,
            lambda: eig.lambda,
            area: mesh.area(),
            rejected,
        });
        state.mesh = mesh;
        state.eigen = eig;
        state.tau = opts.tau_max.min(2.0 * tau);
        on_step(&state);
        if state.tau <= opts.eps_stop {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Deformed and area-restored domain, or `None` if an element inverts.
fn trial_domain(mesh: &Mesh, v: &[[f64; 2]], tau: f64, area0: f64) -> Result<Option<Mesh>> {
    match mesh.deform(v, tau) {
        Ok(moved) => Ok(Some(restore_area(&moved, area0))),
        Err(Error::DegenerateElement { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Uniform scaling about the centroid to area `area0`.
pub fn restore_area(mesh: &Mesh, area0: f64) -> Mesh {
    mesh.scaled_about(mesh.centroid(), (area0 / mesh.area()).sqrt())
}
