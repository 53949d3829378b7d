//! Compressed-row matrices, preconditioned conjugate gradients and MINRES,
//! and the single-constraint bordered solve used by every gradient-flow step.

use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row form with sorted, unique columns.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut fill = counts.clone();
        for &(i, j, v) in triplets {
            cols[fill[i]] = j;
            vals[fill[i]] = v;
            fill[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            row.sort_unstable_by_key(|&(j, _)| j);
            for &(j, v) in &row {
                if col_idx.len() > row_ptr[i] && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n, row_ptr, col_idx, values }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        CsrMatrix {
            n: d.len(),
            row_ptr: (0..=d.len()).collect(),
            col_idx: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entries of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_vec(y))
    }

    pub fn sum_entries(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `true` if the matrix equals its transpose up to `tol` (absolute).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol))
    }

    /// `alpha * self + beta * other`, with the union of both patterns.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix, beta: f64) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            t.extend(self.row(i).map(|(j, v)| (i, j, alpha * v)));
            t.extend(other.row(i).map(|(j, v)| (i, j, beta * v)));
        }
        CsrMatrix::from_triplets(self.n, &t)
    }

    /// Principal submatrix on the rows and columns with `keep[i] == true`.
    /// Returns the matrix and the kept original indices.
    pub fn principal_submatrix(&self, keep: &[bool]) -> (CsrMatrix, Vec<usize>) {
        let kept: Vec<usize> = (0..self.n).filter(|&i| keep[i]).collect();
        let mut new_index = vec![usize::MAX; self.n];
        for (k, &i) in kept.iter().enumerate() {
            new_index[i] = k;
        }
        let mut t = Vec::new();
        for (k, &i) in kept.iter().enumerate() {
            for (j, v) in self.row(i) {
                if keep[j] {
                    t.push((k, new_index[j], v));
                }
            }
        }
        (CsrMatrix::from_triplets(kept.len(), &t), kept)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Anything that can be applied to a vector, for the Krylov solvers.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Diagonal used for Jacobi preconditioning; `None` means unpreconditioned.
    fn jacobi_diagonal(&self) -> Option<Vec<f64>> {
        None
    }

    /// Preconditioner used by the Krylov solvers; Jacobi by default.
    fn preconditioner(&self) -> Preconditioner {
        Preconditioner::jacobi(self.jacobi_diagonal(), self.dim())
    }
}

/// Symmetric positive definite preconditioners `P ≈ A`, applied as `z = P⁻¹ r`.
#[derive(Clone, Debug)]
pub enum Preconditioner {
    /// Stores the inverse diagonal.
    Diagonal(Vec<f64>),
    IncompleteCholesky(IncompleteCholesky),
    /// Independent preconditioners on consecutive index blocks.
    Blocks(Vec<(usize, Preconditioner)>),
}

impl Preconditioner {
    /// Jacobi from a diagonal; nonpositive entries and `None` act as identity.
    pub fn jacobi(diag: Option<Vec<f64>>, n: usize) -> Self {
        match diag {
            Some(d) => Preconditioner::Diagonal(d.into_iter().map(|v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect()),
            None => Preconditioner::Diagonal(vec![1.0; n]),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Preconditioner::Diagonal(d) => d.len(),
            Preconditioner::IncompleteCholesky(ic) => ic.dim(),
            Preconditioner::Blocks(b) => b.iter().map(|(n, _)| n).sum(),
        }
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Preconditioner::Diagonal(d) => {
                for ((zi, ri), di) in z.iter_mut().zip(r).zip(d) {
                    *zi = ri * di;
                }
            }
            Preconditioner::IncompleteCholesky(ic) => ic.solve_into(r, z),
            Preconditioner::Blocks(blocks) => {
                let mut start = 0;
                for (n, p) in blocks {
                    p.apply(&r[start..start + n], &mut z[start..start + n]);
                    start += n;
                }
            }
        }
    }
}

/// Zero-fill incomplete Cholesky factor `L` with `L Lᵀ ≈ A`.
#[derive(Clone, Debug)]
pub struct IncompleteCholesky {
    /// Rows of `L` with sorted columns; the diagonal is the last entry of each row.
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl IncompleteCholesky {
    /// Factor of `A`; `None` if the factorization breaks down even after
    /// diagonal shifting.
    pub fn new(a: &CsrMatrix) -> Option<Self> {
        Self::shifted(a, 1.0, &vec![0.0; a.dim()])
    }

    /// Factor of `scale · A + diag(shift)`.
    pub fn shifted(a: &CsrMatrix, scale: f64, shift: &[f64]) -> Option<Self> {
        let n = a.dim();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut base = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let mut diag = shift[i];
            for (j, v) in a.row(i) {
                if j < i {
                    col_idx.push(j);
                    base.push(scale * v);
                } else if j == i {
                    diag += scale * v;
                }
            }
            col_idx.push(i);
            base.push(diag);
            row_ptr.push(col_idx.len());
        }
        // Manteuffel shifts of the diagonal until the factorization succeeds.
        for alpha in [0.0, 1e-3, 1e-2, 1e-1, 1.0] {
            let mut values = base.clone();
            for i in 0..n {
                values[row_ptr[i + 1] - 1] *= 1.0 + alpha;
            }
            if Self::factor(&row_ptr, &col_idx, &mut values) {
                return Some(IncompleteCholesky { row_ptr, col_idx, values });
            }
        }
        None
    }

    fn factor(row_ptr: &[usize], col_idx: &[usize], values: &mut [f64]) -> bool {
        let n = row_ptr.len() - 1;
        for i in 0..n {
            let (start, diag_pos) = (row_ptr[i], row_ptr[i + 1] - 1);
            for kk in start..diag_pos {
                let k = col_idx[kk];
                // Sparse dot of L[i, <k] and L[k, <k].
                let (mut a, mut b) = (start, row_ptr[k]);
                let b_end = row_ptr[k + 1] - 1;
                let mut s = 0.0;
                while a < kk && b < b_end {
                    match col_idx[a].cmp(&col_idx[b]) {
                        std::cmp::Ordering::Less => a += 1,
                        std::cmp::Ordering::Greater => b += 1,
                        std::cmp::Ordering::Equal => {
                            s += values[a] * values[b];
                            a += 1;
                            b += 1;
                        }
                    }
                }
                values[kk] = (values[kk] - s) / values[b_end];
            }
            let d = values[diag_pos] - values[start..diag_pos].iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return false;
            }
            values[diag_pos] = d.sqrt();
        }
        true
    }

    pub fn dim(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// `z = (L Lᵀ)⁻¹ r`
    pub fn solve_into(&self, r: &[f64], z: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let diag_pos = self.row_ptr[i + 1] - 1;
            let mut s = r[i];
            for k in self.row_ptr[i]..diag_pos {
                s -= self.values[k] * z[self.col_idx[k]];
            }
            z[i] = s / self.values[diag_pos];
        }
        for i in (0..n).rev() {
            let diag_pos = self.row_ptr[i + 1] - 1;
            z[i] /= self.values[diag_pos];
            let zi = z[i];
            for k in self.row_ptr[i]..diag_pos {
                z[self.col_idx[k]] -= self.values[k] * zi;
            }
        }
    }
}

/// `A` with an incomplete Cholesky preconditioner in place of Jacobi.
pub struct IcPreconditioned<'a>(pub &'a CsrMatrix);

impl LinearOperator for IcPreconditioned<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.mul_vec_into(x, y)
    }

    fn jacobi_diagonal(&self) -> Option<Vec<f64>> {
        Some(self.0.diagonal())
    }

    fn preconditioner(&self) -> Preconditioner {
        match IncompleteCholesky::new(self.0) {
            Some(ic) => Preconditioner::IncompleteCholesky(ic),
            None => Preconditioner::jacobi(self.jacobi_diagonal(), self.dim()),
        }
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }

    fn jacobi_diagonal(&self) -> Option<Vec<f64>> {
        Some(self.diagonal())
    }
}

/// `scale · A + diag(shift)` without copying `A`.
pub struct DiagonallyShifted<'a> {
    pub base: &'a CsrMatrix,
    pub scale: f64,
    pub shift: Vec<f64>,
}

impl LinearOperator for DiagonallyShifted<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.base.mul_vec_into(x, y);
        for ((yi, si), xi) in y.iter_mut().zip(&self.shift).zip(x) {
            *yi = self.scale * *yi + si * xi;
        }
    }

    fn jacobi_diagonal(&self) -> Option<Vec<f64>> {
        Some(self.base.diagonal().iter().zip(&self.shift).map(|(a, s)| self.scale * a + s).collect())
    }

    fn preconditioner(&self) -> Preconditioner {
        match IncompleteCholesky::shifted(self.base, self.scale, &self.shift) {
            Some(ic) => Preconditioner::IncompleteCholesky(ic),
            None => Preconditioner::jacobi(self.jacobi_diagonal(), self.dim()),
        }
    }
}

/// Stopping rule for [`cg_solve`]: `‖Ax − b‖₂ ≤ tol · ‖b‖₂` within `max_iter` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000 }
    }
}

/// Solution and iteration count of a CG solve.
#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
}

/// Preconditioned conjugate gradients for SPD operators, started from
/// zero.
pub fn cg_solve(op: &dyn LinearOperator, b: &[f64], opts: CgOptions) -> Result<Vec<f64>> {
    cg_solve_from(op, b, None, opts).map(|s| s.x)
}

/// As [`cg_solve`], with an optional initial guess.
pub fn cg_solve_from(
    op: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: CgOptions,
) -> Result<CgSolution> {
    let run = cg_run(op, b, x0, opts);
    if run.converged {
        Ok(CgSolution { x: run.x, iterations: run.iterations })
    } else {
        Err(Error::NoConvergence { iterations: run.iterations, residual: run.relative_residual })
    }
}

pub(crate) struct CgRun {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub relative_residual: f64,
}

/// CG loop that returns the last iterate whether or not it converged.
pub(crate) fn cg_run(op: &dyn LinearOperator, b: &[f64], x0: Option<&[f64]>, opts: CgOptions) -> CgRun {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return CgRun { x: vec![0.0; n], iterations: 0, converged: true, relative_residual: 0.0 };
    }
    let prec = op.preconditioner();
    let target = opts.tol * bnorm;

    let mut x = match x0 {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    let mut ap = vec![0.0; n];
    if x0.is_some() {
        op.apply(&x, &mut ap);
        for (ri, ai) in r.iter_mut().zip(&ap) {
            *ri -= ai;
        }
    }
    let mut rnorm = norm2(&r);
    if rnorm <= target {
        return CgRun { x, iterations: 0, converged: true, relative_residual: rnorm / bnorm };
    }
    let mut z = vec![0.0; n];
    prec.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for it in 1..=opts.max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return CgRun { x, iterations: it, converged: false, relative_residual: rnorm / bnorm };
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rnorm = norm2(&r);
        if rnorm <= target {
            return CgRun { x, iterations: it, converged: true, relative_residual: rnorm / bnorm };
        }
        prec.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgRun { x, iterations: opts.max_iter, converged: false, relative_residual: rnorm / bnorm }
}

/// Solution of the bordered system `S x + μ g = rhs`, `gᵀx = c`.
#[derive(Clone, Debug)]
pub struct BorderedSolution {
    pub x: Vec<f64>,
    pub mu: f64,
    /// `S⁻¹ g`, reusable as an initial guess for the next solve.
    pub s_inv_g: Vec<f64>,
    pub iterations: usize,
}

/// Schur-complement solve of the single-constraint saddle problem with two CG
/// solves, `S x₁ = rhs` and `S x₂ = g`.
pub fn bordered_solve(
    s: &dyn LinearOperator,
    g: &[f64],
    rhs: &[f64],
    c: f64,
    opts: CgOptions,
) -> Result<(Vec<f64>, f64)> {
    bordered_solve_from(s, g, rhs, c, None, None, opts).map(|b| (b.x, b.mu))
}

/// As [`bordered_solve`], with optional initial guesses for the two inner solves.
pub fn bordered_solve_from(
    s: &dyn LinearOperator,
    g: &[f64],
    rhs: &[f64],
    c: f64,
    x1_guess: Option<&[f64]>,
    x2_guess: Option<&[f64]>,
    opts: CgOptions,
) -> Result<BorderedSolution> {
    let x1 = cg_solve_from(s, rhs, x1_guess, opts)?;
    let x2 = cg_solve_from(s, g, x2_guess, opts)?;
    let gx2 = dot(g, &x2.x);
    if !(gx2 > 0.0) {
        return Err(Error::SingularConstraint { value: gx2 });
    }
    let mu = (dot(g, &x1.x) - c) / gx2;
    let x = x1.x.iter().zip(&x2.x).map(|(a, b)| a - mu * b).collect();
    Ok(BorderedSolution { x, mu, s_inv_g: x2.x, iterations: x1.iterations + x2.iterations })
}

/// MINRES for symmetric, possibly indefinite operators, with the (positive
/// definite) [`LinearOperator::preconditioner`]. Stops once the
/// preconditioned residual norm has dropped by `opts.tol`.
pub fn minres(op: &dyn LinearOperator, b: &[f64], opts: CgOptions) -> Result<CgSolution> {
    let n = op.dim();
    assert_eq!(b.len(), n);
    let prec = op.preconditioner();
    let mut x = vec![0.0; n];
    let mut v_prev = vec![0.0; n];
    let mut v = b.to_vec();
    let mut z = vec![0.0; n];
    prec.apply(&v, &mut z);
    let mut gamma = dot(&z, &v).sqrt();
    if gamma == 0.0 {
        return Ok(CgSolution { x, iterations: 0 });
    }
    let gamma1 = gamma;
    let mut gamma_prev = 1.0;
    let mut eta = gamma;
    let (mut s_prev, mut s, mut c_prev, mut c) = (0.0, 0.0, 1.0, 1.0);
    let mut w_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut az = vec![0.0; n];
    for it in 1..=opts.max_iter {
        z.iter_mut().for_each(|zi| *zi /= gamma);
        op.apply(&z, &mut az);
        let delta = dot(&az, &z);
        let v_next: Vec<f64> = (0..n)
            .map(|i| az[i] - delta / gamma * v[i] - gamma / gamma_prev * v_prev[i])
            .collect();
        let mut z_next = vec![0.0; n];
        prec.apply(&v_next, &mut z_next);
        let gamma_next = dot(&z_next, &v_next).max(0.0).sqrt();
        let a0 = c * delta - c_prev * s * gamma;
        let a1 = a0.hypot(gamma_next);
        let a2 = s * delta + c_prev * c * gamma;
        let a3 = s_prev * gamma;
        c_prev = c;
        s_prev = s;
        c = a0 / a1;
        s = gamma_next / a1;
        let w_next: Vec<f64> = (0..n).map(|i| (z[i] - a3 * w_prev[i] - a2 * w[i]) / a1).collect();
        for i in 0..n {
            x[i] += c * eta * w_next[i];
        }
        eta *= -s;
        if eta.abs() <= opts.tol * gamma1 || gamma_next == 0.0 {
            return Ok(CgSolution { x, iterations: it });
        }
        w_prev = std::mem::replace(&mut w, w_next);
        v_prev = std::mem::replace(&mut v, v_next);
        z = z_next;
        gamma_prev = gamma;
        gamma = gamma_next;
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: eta.abs() / gamma1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64) -> (CsrMatrix, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(n, n) * (n as f64) * 0.1;
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                t.push((i, j, a[(i, j)]));
            }
        }
        (CsrMatrix::from_triplets(n, &t), a)
    }

    fn tight() -> CgOptions {
        CgOptions { tol: 1e-12, max_iter: 1000 }
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, -1.0)]);
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.mul_vec(&[1.0, 1.0]), vec![3.0, 2.0]);
    }

    #[test]
    fn cg_identity_and_diagonal() {
        let b = vec![0.3, -2.0, 7.5];
        assert_eq!(cg_solve(&CsrMatrix::identity(3), &b, tight()).unwrap(), b);
        let x = cg_solve(&CsrMatrix::from_diagonal(&[2.0, 4.0]), &[2.0, 4.0], tight()).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cg_matches_dense_oracle() {
        let (a, dense) = random_spd(10, 7);
        let b: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let x = cg_solve(&a, &b, tight()).unwrap();
        let oracle = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        for i in 0..10 {
            assert_relative_eq!(x[i], oracle[i], max_relative = 1e-9, epsilon = 1e-12);
        }
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| p - q).collect();
        assert!(norm2(&r) <= 1e-12 * norm2(&b));
    }

    #[test]
    fn cg_error_energy_norm_decreases() {
        let (a, dense) = random_spd(12, 3);
        let b: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        let exact = dense.lu().solve(&DVector::from_vec(b.clone())).unwrap();
        let mut last = f64::INFINITY;
        for k in 0..12 {
            let x = cg_run(&a, &b, None, CgOptions { tol: 1e-300, max_iter: k }).x;
            let e: Vec<f64> = x.iter().zip(exact.iter()).map(|(p, q)| p - q).collect();
            let energy = a.bilinear(&e, &e).sqrt();
            assert!(energy <= last * (1.0 + 1e-10), "step {k}: {energy} > {last}");
            last = energy;
        }
    }

    #[test]
    fn cg_reports_no_convergence() {
        let (a, _) = random_spd(30, 1);
        let b = vec![1.0; 30];
        let err = cg_solve(&a, &b, CgOptions { tol: 1e-14, max_iter: 2 }).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 2, .. }));
    }

    #[test]
    fn bordered_identity() {
        let s = CsrMatrix::identity(4);
        let (x, mu) = bordered_solve(&s, &[1.0, 0.0, 0.0, 0.0], &[0.0; 4], 1.0, tight()).unwrap();
        assert_relative_eq!(mu, -1.0, epsilon = 1e-14);
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-14);
        assert!(x[1..].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn bordered_inactive_constraint() {
        let (s, dense) = random_spd(6, 11);
        let rhs: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let g = vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.0];
        let free = dense.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let c = dot(&g, free.as_slice());
        let (x, mu) = bordered_solve(&s, &g, &rhs, c, tight()).unwrap();
        assert!(mu.abs() < 1e-10);
        for i in 0..6 {
            assert_relative_eq!(x[i], free[i], max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn bordered_matches_dense_kkt() {
        let n = 8;
        let (s, dense) = random_spd(n, 5);
        let g: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let c = 0.7;
        let (x, mu) = bordered_solve(&s, &g, &rhs, c, tight()).unwrap();

        let mut kkt = DMatrix::zeros(n + 1, n + 1);
        kkt.view_mut((0, 0), (n, n)).copy_from(&dense);
        for i in 0..n {
            kkt[(i, n)] = g[i];
            kkt[(n, i)] = g[i];
        }
        let mut b = DVector::zeros(n + 1);
        b.rows_mut(0, n).copy_from_slice(&rhs);
        b[n] = c;
        let sol = kkt.lu().solve(&b).unwrap();
        for i in 0..n {
            assert_relative_eq!(x[i], sol[i], max_relative = 1e-8, epsilon = 1e-11);
        }
        assert_relative_eq!(mu, sol[n], max_relative = 1e-8, epsilon = 1e-11);
        let resid = (dot(&g, &x) - c).abs();
        assert!(resid <= 1e-12 * (norm2(&g) * norm2(&x) + c.abs()));
    }

    #[test]
    fn submatrix_and_add() {
        let a = CsrMatrix::from_triplets(3, &[(0, 0, 2.0), (0, 2, 1.0), (2, 0, 1.0), (1, 1, 5.0), (2, 2, 3.0)]);
        let (sub, kept) = a.principal_submatrix(&[true, false, true]);
        assert_eq!(kept, vec![0, 2]);
        assert_eq!(sub.get(0, 1), 1.0);
        assert_eq!(sub.get(1, 1), 3.0);
        let sum = a.add_scaled(1.0, &CsrMatrix::identity(3), 2.0);
        assert_eq!(sum.get(1, 1), 7.0);
        assert!(sum.is_symmetric(0.0));
    }

    #[test]
    fn minres_solves_saddle_point_system() {
        // [K Bᵀ; B 0] with K SPD and B of full row rank.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (nv, np) = (8, 3);
        let g = DMatrix::<f64>::from_fn(nv, nv, |_, _| rng.gen_range(-1.0..1.0));
        let k = &g * g.transpose() + DMatrix::<f64>::identity(nv, nv);
        let bm = DMatrix::<f64>::from_fn(np, nv, |_, _| rng.gen_range(-1.0..1.0));
        let n = nv + np;
        let mut full = DMatrix::<f64>::zeros(n, n);
        full.view_mut((0, 0), (nv, nv)).copy_from(&k);
        full.view_mut((nv, 0), (np, nv)).copy_from(&bm);
        full.view_mut((0, nv), (nv, np)).copy_from(&bm.transpose());
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if full[(i, j)] != 0.0 {
                    trip.push((i, j, full[(i, j)]));
                }
            }
        }
        struct Saddle(CsrMatrix, usize);
        impl LinearOperator for Saddle {
            fn dim(&self) -> usize {
                self.0.dim()
            }
            fn apply(&self, x: &[f64], y: &mut [f64]) {
                self.0.mul_vec_into(x, y)
            }
            fn jacobi_diagonal(&self) -> Option<Vec<f64>> {
                let mut d = self.0.diagonal();
                d[self.1..].iter_mut().for_each(|v| *v = 1.0);
                Some(d)
            }
        }
        let op = Saddle(CsrMatrix::from_triplets(n, &trip), nv);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = minres(&op, &b, CgOptions { tol: 1e-13, max_iter: 200 }).unwrap().x;
        let exact = full.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert_relative_eq!(x[i], exact[i], epsilon = 1e-9);
        }
    }
}
