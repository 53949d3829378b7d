//! Reference linear eigenvalues of the P1 Laplacian: Dirichlet, first
//! nontrivial Neumann, and uniform Robin (film thickness `m / |∂Ω_h|`).

use crate::assembly::DiscreteOperators;
use crate::error::{Error, Result};
use crate::flow::random_initial_guess;
use crate::sparse::{cg_solve_from, dot, CgOptions, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearEigKind {
    Dirichlet,
    /// First nontrivial Neumann eigenvalue (constants deflated).
    Neumann,
    /// Robin condition `ℓ ∂_n u + u = 0` with constant `ℓ = m / |∂Ω_h|`.
    RobinUniform { m: f64 },
}

impl LinearEigKind {
    pub fn name(&self) -> &'static str {
        match self {
            LinearEigKind::Dirichlet => "dirichlet",
            LinearEigKind::Neumann => "neumann",
            LinearEigKind::RobinUniform { .. } => "robin_uniform",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearEigResult {
    pub lambda: f64,
    /// Eigenvector on all nodes, `‖u‖ = 1` (zero on the outer boundary for Dirichlet).
    pub u: Vec<f64>,
    pub iterations: usize,
}

const MAX_POWER_STEPS: usize = 2000;
const BLOCK: usize = 3;

/// Modified Gram-Schmidt in the `M` inner product; drops dependent vectors.
fn m_orthonormalize(m: &CsrMatrix, vs: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    let mut m_out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
    for mut v in vs {
        let before = m.bilinear(&v, &v).sqrt();
        for (q, mq) in out.iter().zip(&m_out) {
            let c = dot(&v, mq);
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
        }
        let norm = m.bilinear(&v, &v).sqrt();
        if norm > 1e-10 * before {
            v.iter_mut().for_each(|x| *x /= norm);
            m_out.push(m.mul_vec(&v));
            out.push(v);
        }
    }
    out
}

/// Eigenvalues (ascending) and column eigenvectors of a small symmetric
/// matrix by cyclic Jacobi rotations.
fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let vals = order.iter().map(|&i| a[i][i]).collect();
    let vecs = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (vals, vecs)
}

/// Smallest (nontrivial, for Neumann) generalized eigenvalue `K u = λ M u`
/// by inverse power iteration, stopped once the Rayleigh quotient changes by
/// less than `tol` relative.
pub fn linear_eig(ops: &DiscreteOperators, kind: LinearEigKind, tol: f64) -> Result<LinearEigResult> {
    let n = ops.beta.len();
    let (k, m, kept): (CsrMatrix, CsrMatrix, Option<Vec<usize>>) = match kind {
        LinearEigKind::Dirichlet => {
            let keep: Vec<bool> = ops.beta.iter().map(|b| *b == 0.0).collect();
            let (k, kept) = ops.stiffness.principal_submatrix(&keep);
            let (m, _) = ops.mass.principal_submatrix(&keep);
            (k, m, Some(kept))
        }
        LinearEigKind::Neumann => (ops.stiffness.clone(), ops.mass.clone(), None),
        LinearEigKind::RobinUniform { m } => {
            if !(m > 0.0) {
                return Err(Error::InvalidParameter(format!("Robin mass must be positive, got {m}")));
            }
            let k = ops.stiffness.add_scaled(1.0, &ops.robin, ops.boundary_measure / m);
            (k, ops.mass.clone(), None)
        }
    };
    let dim = k.dim();
    if dim == 0 {
        return Err(Error::InvalidParameter("no free degrees of freedom".into()));
    }
    let deflate = matches!(kind, LinearEigKind::Neumann);
    // The Neumann operator is singular; iterate with A + M and deflate constants.
    let solve_op = if deflate { k.add_scaled(1.0, &m, 1.0) } else { k.clone() };
    let ones = vec![1.0; dim];
    let m_ones = m.mul_vec(&ones);
    let ones_mass = dot(&ones, &m_ones);
    let project = |x: &mut Vec<f64>| {
        if deflate {
            let c = dot(x, &m_ones) / ones_mass;
            x.iter_mut().for_each(|v| *v -= c);
        }
    };

    // Block inverse iteration with Rayleigh-Ritz: a single vector stalls when
    // the wanted eigenvalue is nearly degenerate, e.g. the two lowest
    // nontrivial Neumann modes of the square on a coarse mesh.
    let p = BLOCK.min(dim - usize::from(deflate)).max(1);
    let mut block: Vec<Vec<f64>> = (0..p)
        .map(|j| if j == 0 && !deflate { ones.clone() } else { random_initial_guess(dim, j as u64) })
        .collect();
    let mut ritz = vec![0.0; p];
    let mut lambda = f64::INFINITY;
    let cg = CgOptions { tol: 1e-12, max_iter: 20_000 };
    let shift = if deflate { 1.0 } else { 0.0 };
    for it in 1..=MAX_POWER_STEPS {
        let mut next = Vec::with_capacity(p);
        for (j, x) in block.iter().enumerate() {
            let b = m.mul_vec(x);
            let guess = (it > 1).then(|| x.iter().map(|v| v / (ritz[j] + shift)).collect::<Vec<_>>());
            let mut y = cg_solve_from(&solve_op, &b, guess.as_deref(), cg)?.x;
            project(&mut y);
            next.push(y);
        }
        let basis = m_orthonormalize(&m, next);
        let q = basis.len();
        let kb: Vec<Vec<f64>> = basis.iter().map(|y| k.mul_vec(y)).collect();
        let h: Vec<Vec<f64>> = (0..q).map(|i| (0..q).map(|j| dot(&basis[i], &kb[j])).collect()).collect();
        let (vals, vecs) = symmetric_eigen(h);
        block = (0..q)
            .map(|c| {
                let mut x = vec![0.0; dim];
                for (r, y) in basis.iter().enumerate() {
                    let w = vecs[r][c];
                    x.iter_mut().zip(y).for_each(|(xi, yi)| *xi += w * yi);
                }
                x
            })
            .collect();
        ritz = vals;
        let change = (ritz[0] - lambda).abs();
        lambda = ritz[0];
        if change <= tol * lambda.abs() {
            let x = block.swap_remove(0);
            let u = match kept {
                Some(kept) => {
                    let mut full = vec![0.0; n];
                    for (v, &i) in x.iter().zip(&kept) {
                        full[i] = *v;
                    }
                    full
                }
                None => x,
            };
            return Ok(LinearEigResult { lambda, u, iterations: it });
        }
    }
    Err(Error::NoConvergence { iterations: MAX_POWER_STEPS, residual: f64::NAN })
}
