//! Constrained semi-implicit gradient flow for the nonlinear eigenvalue
//! problem
//!
//! ```text
//! λ_m = min { ‖∇u‖² + (1/m) ‖u‖²_{L¹(∂Ω)} : ‖u‖ = 1 }.
//! ```
//!
//! Each step solves one linear problem: the boundary term is linearized
//! around the previous iterate (`|u|` becomes `u² / |u^{k-1}|_ε`) and the
//! normalization is replaced by the orthogonality `(u^k − u^{k−1}, u^{k−1}) = 0`.
//! The Lagrange multiplier of the eigenvalue problem never enters; the
//! eigenvalue is read off from the final iterate as `J(u^K) / ‖u^K‖²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assembly::{assemble, discrete_l1eps, energy, regularized_abs, thickness, DiscreteOperators};
use crate::error::{Error, Result};
use crate::linear::{linear_eig, LinearEigKind};
use crate::mesh::Mesh;
use crate::sparse::{bordered_solve_from, dot, CgOptions, DiagonallyShifted};

/// Inner product defining the gradient flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Metric {
    /// Lumped `L²` product.
    #[default]
    Lumped,
    /// `H¹` product `(∇u, ∇v) + (u, v)_lumped`.
    H1,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lumped" => Ok(Metric::Lumped),
            "h1" => Ok(Metric::H1),
            other => Err(format!("unknown metric `{other}` (expected lumped or h1)")),
        }
    }
}

/// Parameters of one gradient-flow run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveParams {
    /// Total insulation mass.
    pub m: f64,
    /// Regularization of the modulus.
    pub eps: f64,
    /// Step size.
    pub tau: f64,
    /// Stop once `‖d_t u^k‖_* ≤ eps_stop`.
    pub eps_stop: f64,
    pub max_steps: usize,
    pub cg: CgOptions,
    /// Seed of the random initial guess.
    pub seed: u64,
    pub metric: Metric,
}

impl SolveParams {
    /// Standard choice on a mesh of size `h`: `ε = h/10`, `τ = 1`, `ε_stop = h/10`.
    pub fn new(m: f64, h: f64) -> Self {
        SolveParams {
            m,
            eps: h / 10.0,
            tau: 1.0,
            eps_stop: h / 10.0,
            max_steps: 20_000,
            cg: CgOptions::default(),
            seed: 1,
            metric: Metric::Lumped,
        }
    }

    pub fn for_mesh(m: f64, mesh: &Mesh) -> Self {
        Self::new(m, mesh.h())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) {
            return Err(Error::InvalidParameter(format!("mass m must be positive, got {}", self.m)));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be non-negative, got {}", self.eps)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.eps_stop > 0.0) {
            return Err(Error::InvalidParameter(format!("eps_stop must be positive, got {}", self.eps_stop)));
        }
        if !(self.cg.tol > 0.0) {
            return Err(Error::InvalidParameter("cg tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Optional overrides of [`SolveParams::new`], resolved per mesh because the
/// defaults depend on the mesh size.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveOptions {
    pub eps: Option<f64>,
    pub tau: Option<f64>,
    pub eps_stop: Option<f64>,
    pub max_steps: Option<usize>,
    pub cg_tol: Option<f64>,
    pub cg_max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub metric: Option<Metric>,
}

impl SolveOptions {
    pub fn resolve(&self, m: f64, mesh: &Mesh) -> SolveParams {
        let mut p = SolveParams::for_mesh(m, mesh);
        if let Some(v) = self.eps {
            p.eps = v;
        }
        if let Some(v) = self.tau {
            p.tau = v;
        }
        if let Some(v) = self.eps_stop {
            p.eps_stop = v;
        }
        if let Some(v) = self.max_steps {
            p.max_steps = v;
        }
        if let Some(v) = self.cg_tol {
            p.cg.tol = v;
        }
        if let Some(v) = self.cg_max_iter {
            p.cg.max_iter = v;
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.metric {
            p.metric = v;
        }
        p
    }
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// `J_{m,ε,h}(u^k)` of the unnormalized iterate.
    pub energy: f64,
    /// `‖d_t u^k‖_*`
    pub dtu_norm: f64,
    /// `‖u^k‖²`
    pub norm_sq: f64,
    /// `|(u^k − u^{k−1}, u^{k−1})|`
    pub constraint_residual: f64,
    /// `‖d_t u^k‖²` in the consistent `L²` norm.
    pub dtu_l2_sq: f64,
}

/// Trajectory of the gradient flow.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub u_prev: Vec<f64>,
    pub u_curr: Vec<f64>,
    /// Number of completed steps.
    pub k: usize,
    /// `J(u^0), J(u^1), …`
    pub energy_history: Vec<f64>,
    pub records: Vec<StepRecord>,
    /// `‖d_t u^k‖_*` of the last step (infinite before the first step).
    pub dtu_norm: f64,
    s_inv_g: Option<Vec<f64>>,
}

impl FlowState {
    /// Starts from `u0` rescaled to `‖u0‖ = 1`.
    pub fn new(ops: &DiscreteOperators, u0: &[f64], p: &SolveParams) -> Result<Self> {
        let norm = ops.mass.bilinear(u0, u0).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("initial guess must be a nonzero finite vector".into()));
        }
        let u: Vec<f64> = u0.iter().map(|v| v / norm).collect();
        Self::unnormalized(ops, u, p)
    }

    /// Starts from `u0` as given. Since `|·|_ε` is not homogeneous, the scale
    /// of `u0` matters; this is used to continue a previous run.
    pub fn unnormalized(ops: &DiscreteOperators, u: Vec<f64>, p: &SolveParams) -> Result<Self> {
        let norm = ops.mass.bilinear(&u, &u).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidParameter("initial guess must be a nonzero finite vector".into()));
        }
        let j0 = energy(ops, &u, p.m, p.eps);
        Ok(FlowState {
            u_prev: u.clone(),
            u_curr: u,
            k: 0,
            energy_history: vec![j0],
            records: Vec::new(),
            dtu_norm: f64::INFINITY,
            s_inv_g: None,
        })
    }

    pub fn norm_sq(&self, ops: &DiscreteOperators) -> f64 {
        ops.mass.bilinear(&self.u_curr, &self.u_curr)
    }
}

/// One step of the constrained semi-implicit scheme.
///
/// Solves `S u + μ M u_prev = M_* u_prev / τ` with `(u − u_prev)ᵀ M u_prev = 0`, where
/// `S = M_*/τ + A + (γ/m) diag(β_z / |u_prev,z|_ε)` and `γ = Σ β_z |u_prev,z|_ε`.
pub fn flow_step(ops: &DiscreteOperators, state: &mut FlowState, p: &SolveParams) -> Result<()> {
    let u_prev = std::mem::take(&mut state.u_curr);
    let gamma = discrete_l1eps(&ops.beta, &u_prev, p.eps);
    let boundary: Vec<f64> = ops
        .beta
        .iter()
        .zip(&u_prev)
        .map(|(b, u)| if *b > 0.0 { gamma / p.m * b / regularized_abs(*u, p.eps) } else { 0.0 })
        .collect();

    let inv_tau = 1.0 / p.tau;
    let shift: Vec<f64> = ops.lumped_mass.iter().zip(&boundary).map(|(ml, d)| ml * inv_tau + d).collect();
    let (s, rhs) = match p.metric {
        Metric::Lumped => {
            let rhs = ops.lumped_mass.iter().zip(&u_prev).map(|(ml, u)| ml * u * inv_tau).collect::<Vec<_>>();
            (DiagonallyShifted { base: &ops.stiffness, scale: 1.0, shift }, rhs)
        }
        Metric::H1 => {
            let au = ops.stiffness.mul_vec(&u_prev);
            let rhs = au
                .iter()
                .zip(ops.lumped_mass.iter().zip(&u_prev))
                .map(|(a, (ml, u))| (a + ml * u) * inv_tau)
                .collect::<Vec<_>>();
            (DiagonallyShifted { base: &ops.stiffness, scale: 1.0 + inv_tau, shift }, rhs)
        }
    };

    let g = ops.mass.mul_vec(&u_prev);
    let c = dot(&g, &u_prev);
    let sol = bordered_solve_from(&s, &g, &rhs, c, Some(&u_prev), state.s_inv_g.as_deref(), p.cg)?;
    let u = sol.x;
    state.s_inv_g = Some(sol.s_inv_g);

    let dtu: Vec<f64> = u.iter().zip(&u_prev).map(|(a, b)| (a - b) * inv_tau).collect();
    let lumped_sq: f64 = dtu.iter().zip(&ops.lumped_mass).map(|(d, ml)| ml * d * d).sum();
    let dtu_norm = match p.metric {
        Metric::Lumped => lumped_sq.sqrt(),
        Metric::H1 => (lumped_sq + ops.stiffness.bilinear(&dtu, &dtu)).sqrt(),
    };
    let j = energy(ops, &u, p.m, p.eps);
    let norm_sq = ops.mass.bilinear(&u, &u);
    let constraint_residual = (dot(&g, &u) - c).abs();

    state.k += 1;
    state.dtu_norm = dtu_norm;
    state.energy_history.push(j);
    state.records.push(StepRecord {
        step: state.k,
        energy: j,
        dtu_norm,
        norm_sq,
        constraint_residual,
        dtu_l2_sq: ops.mass.bilinear(&dtu, &dtu),
    });
    state.u_prev = u_prev;
    state.u_curr = u;
    Ok(())
}

/// Output of [`solve`].
#[derive(Clone, Debug)]
pub struct EigenResult {
    /// Eigenfunction with `‖u‖ = 1` and nonnegative mean.
    pub u: Vec<f64>,
    /// `J_{m,ε,h}(u^K) / ‖u^K‖²` for the final iterate `u^K`.
    pub lambda: f64,
    /// `J_{m,h}(u^K) / ‖u^K‖²` without regularization, an upper bound for
    /// the discrete eigenvalue.
    pub lambda_unregularized: f64,
    /// `‖u^K‖`, needed by [`resume`].
    pub final_norm: f64,
    /// Optimal film thickness on the outer boundary nodes.
    pub thickness: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub records: Vec<StepRecord>,
    pub energy_history: Vec<f64>,
    pub params: SolveParams,
}

/// Uniform `(−1, 1)` nodal values from `seed`.
pub fn random_initial_guess(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Runs the flow on `mesh` from `u0` (or a seeded random guess).
pub fn solve(mesh: &Mesh, p: &SolveParams, u0: Option<&[f64]>) -> Result<EigenResult> {
    solve_with_operators(&assemble(mesh), p, u0)
}

/// As [`solve`] with operators assembled by the caller.
pub fn solve_with_operators(ops: &DiscreteOperators, p: &SolveParams, u0: Option<&[f64]>) -> Result<EigenResult> {
    p.validate()?;
    let n = ops.beta.len();
    let random;
    let u0 = match u0 {
        Some(u) => {
            if u.len() != n {
                return Err(Error::InvalidParameter(format!("initial guess has {} entries for {n} nodes", u.len())));
            }
            u
        }
        None => {
            random = random_initial_guess(n, p.seed);
            &random
        }
    };
    let state = FlowState::new(ops, u0, p)?;
    run(ops, p, state)
}

/// Continues the flow from the final iterate of `prev` (same connectivity,
/// possibly moved nodes), keeping its scale so that the effective
/// regularization is unchanged.
pub fn resume(mesh: &Mesh, p: &SolveParams, prev: &EigenResult) -> Result<EigenResult> {
    resume_with_operators(&assemble(mesh), p, prev)
}

/// As [`resume`] with operators assembled by the caller.
pub fn resume_with_operators(ops: &DiscreteOperators, p: &SolveParams, prev: &EigenResult) -> Result<EigenResult> {
    p.validate()?;
    if prev.u.len() != ops.beta.len() {
        return Err(Error::InvalidParameter(format!(
            "previous eigenfunction has {} entries for {} nodes",
            prev.u.len(),
            ops.beta.len()
        )));
    }
    let u = prev.u.iter().map(|v| v * prev.final_norm).collect();
    let state = FlowState::unnormalized(ops, u, p)?;
    run(ops, p, state)
}

fn run(ops: &DiscreteOperators, p: &SolveParams, mut state: FlowState) -> Result<EigenResult> {
    let mut converged = false;
    while state.k < p.max_steps {
        flow_step(ops, &mut state, p)?;
        if state.dtu_norm <= p.eps_stop {
            converged = true;
            break;
        }
    }
    finish(ops, p, state, converged)
}

fn finish(ops: &DiscreteOperators, p: &SolveParams, state: FlowState, converged: bool) -> Result<EigenResult> {
    let norm_sq = state.norm_sq(ops);
    let lambda = energy(ops, &state.u_curr, p.m, p.eps) / norm_sq;
    let lambda_unregularized = energy(ops, &state.u_curr, p.m, 0.0) / norm_sq;
    let norm = norm_sq.sqrt();
    let mean: f64 = state.u_curr.iter().zip(&ops.lumped_mass).map(|(u, ml)| u * ml).sum();
    let sign = if mean < 0.0 { -1.0 } else { 1.0 };
    let u: Vec<f64> = state.u_curr.iter().map(|v| sign * v / norm).collect();
    let thickness = thickness(&ops.beta, &u, p.m)?;
    Ok(EigenResult {
        u,
        lambda,
        lambda_unregularized,
        final_norm: norm,
        thickness,
        iterations: state.k,
        converged,
        records: state.records,
        energy_history: state.energy_history,
        params: *p,
    })
}

/// Ratio `min ℓ / max ℓ` over outer boundary nodes.
pub fn thickness_ratio(ops: &DiscreteOperators, thickness: &[f64]) -> f64 {
    let vals = ops.beta.iter().zip(thickness).filter(|(b, _)| **b > 0.0).map(|(_, l)| *l);
    let (lo, hi) = vals.fold((f64::INFINITY, 0.0f64), |(lo, hi), l| (lo.min(l), hi.max(l)));
    if hi > 0.0 {
        lo / hi
    } else {
        0.0
    }
}

/// Relative threshold below which a boundary node counts as uninsulated.
pub const GAP_THRESHOLD: f64 = 0.01;

/// Outer boundary nodes whose thickness is below `GAP_THRESHOLD · max ℓ`.
pub fn gap_mask(ops: &DiscreteOperators, thickness: &[f64]) -> Vec<bool> {
    let max = thickness.iter().copied().fold(0.0, f64::max);
    ops.beta
        .iter()
        .zip(thickness)
        .map(|(b, l)| *b > 0.0 && *l < GAP_THRESHOLD * max)
        .collect()
}

/// Number of maximal runs of gap nodes along an ordered boundary chain.
pub fn gap_components(chain: &[usize], closed: bool, gap: &[bool]) -> usize {
    let n = chain.len();
    if n == 0 {
        return 0;
    }
    let flags: Vec<bool> = chain.iter().map(|&i| gap[i]).collect();
    if closed && flags.iter().all(|&f| f) {
        return 1;
    }
    let mut runs = 0;
    for k in 0..n {
        let prev = if k == 0 {
            if closed {
                flags[n - 1]
            } else {
                false
            }
        } else {
            flags[k - 1]
        };
        if flags[k] && !prev {
            runs += 1;
        }
    }
    runs
}

/// Critical mass with `λ_{m₀} = λ_N`.
#[derive(Clone, Debug)]
pub struct CriticalMass {
    pub m0: f64,
    pub lambda_m0: f64,
    pub lambda_neumann: f64,
    /// `(m, λ_m)` for every evaluation, in order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Bracket searched by [`find_m0`].
pub const M0_BRACKET: (f64, f64) = (0.01, 10.0);

/// Bisection on `m ↦ λ_m − λ_N` over [`M0_BRACKET`] to a tolerance of `1e-3` in `m`.
///
/// Each evaluation is warm-started from the previous eigenfunction.
pub fn find_m0(mesh: &Mesh, opts: &SolveOptions) -> Result<CriticalMass> {
    let ops = assemble(mesh);
    let lambda_n = linear_eig(&ops, LinearEigKind::Neumann, 1e-12)?.lambda;
    let mut evaluations = Vec::new();
    let mut warm: Option<EigenResult> = None;
    let mut eval = |m: f64, warm: &mut Option<EigenResult>| -> Result<f64> {
        let p = opts.resolve(m, mesh);
        let res = match warm {
            Some(prev) => resume_with_operators(&ops, &p, prev)?,
            None => solve_with_operators(&ops, &p, None)?,
        };
        let lambda = res.lambda;
        *warm = Some(res);
        evaluations.push((m, lambda));
        Ok(lambda)
    };
    let (mut lo, mut hi) = M0_BRACKET;
    let f_lo = eval(lo, &mut warm)? - lambda_n;
    let f_hi = eval(hi, &mut warm)? - lambda_n;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::BracketFailure { lo, hi });
    }
    let mut lambda_mid = f64::NAN;
    let mut mid = 0.5 * (lo + hi);
    while hi - lo > 1e-3 {
        mid = 0.5 * (lo + hi);
        lambda_mid = eval(mid, &mut warm)?;
        if lambda_mid > lambda_n {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalMass { m0: mid, lambda_m0: lambda_mid, lambda_neumann: lambda_n, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{make_disk, make_square};
    use approx::assert_relative_eq;

    fn params(mesh: &Mesh, m: f64) -> SolveParams {
        SolveParams::for_mesh(m, mesh)
    }

    #[test]
    fn defaults_follow_mesh_size() {
        let mesh = make_square(3);
        let p = params(&mesh, 0.1);
        let h = mesh.h();
        assert_eq!(p.eps, h / 10.0);
        assert_eq!(p.eps_stop, h / 10.0);
        assert_eq!(p.tau, 1.0);
        assert!(SolveParams { m: 0.0, ..p }.validate().is_err());
        assert!(SolveParams { tau: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn step_keeps_orthogonality_and_norm_identity() {
        let mesh = make_disk(3);
        let ops = assemble(&mesh);
        let p = params(&mesh, 0.4);
        let u0 = random_initial_guess(mesh.num_nodes(), 3);
        let mut state = FlowState::new(&ops, &u0, &p).unwrap();
        let mut expected_norm = 1.0;
        for _ in 0..20 {
            flow_step(&ops, &mut state, &p).unwrap();
            let d: Vec<f64> = state.u_curr.iter().zip(&state.u_prev).map(|(a, b)| a - b).collect();
            let g = ops.mass.mul_vec(&state.u_prev);
            let scale = dot(&g, &state.u_prev);
            assert!(dot(&d, &g).abs() <= 10.0 * p.cg.tol * scale);
            expected_norm += p.tau * p.tau * state.records.last().unwrap().dtu_l2_sq;
            assert_relative_eq!(state.norm_sq(&ops), expected_norm, max_relative = 1e-8);
        }
    }

    #[test]
    fn one_step_from_dirichlet_mode_lowers_energy() {
        let mesh = make_disk(3);
        let ops = assemble(&mesh);
        let p = params(&mesh, 0.4);
        // P1 interpolant of the first Dirichlet mode J0(j01 r) ≈ cos(πr/2).
        let u0: Vec<f64> = mesh
            .nodes()
            .iter()
            .map(|q| crate::reference::bessel_j0(crate::reference::J0_FIRST_ZERO * q[0].hypot(q[1])))
            .collect();
        let mut state = FlowState::new(&ops, &u0, &p).unwrap();
        flow_step(&ops, &mut state, &p).unwrap();
        assert!(state.energy_history[1] < state.energy_history[0]);
    }

    #[test]
    fn solve_is_odd_in_the_initial_guess() {
        let mesh = make_square(2);
        let p = params(&mesh, 0.1);
        let u0 = random_initial_guess(mesh.num_nodes(), 5);
        let neg: Vec<f64> = u0.iter().map(|v| -v).collect();
        let a = solve(&mesh, &p, Some(&u0)).unwrap();
        let b = solve(&mesh, &p, Some(&neg)).unwrap();
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn solve_reports_non_convergence() {
        let mesh = make_square(2);
        let mut p = params(&mesh, 0.1);
        p.max_steps = 2;
        let res = solve(&mesh, &p, None).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
        assert!(solve(&mesh, &p, Some(&vec![0.0; mesh.num_nodes()])).is_err());
    }

    #[test]
    fn normalized_result() {
        let mesh = make_disk(3);
        let ops = assemble(&mesh);
        let res = solve_with_operators(&ops, &params(&mesh, 0.4), None).unwrap();
        assert!(res.converged);
        assert!(res.lambda > 0.0);
        assert_relative_eq!(ops.mass.bilinear(&res.u, &res.u), 1.0, max_relative = 1e-12);
        let mean: f64 = res.u.iter().zip(&ops.lumped_mass).map(|(u, m)| u * m).sum();
        assert!(mean >= 0.0);
        let mass: f64 = ops.beta.iter().zip(&res.thickness).map(|(b, l)| b * l).sum();
        assert_relative_eq!(mass, 0.4, max_relative = 1e-12);
    }

    #[test]
    fn gap_runs() {
        let gap = vec![true, true, false, false, true, false];
        let chain = vec![0, 1, 2, 3, 4, 5];
        assert_eq!(gap_components(&chain, true, &gap), 2);
        let wrap = vec![true, false, false, true];
        assert_eq!(gap_components(&[0, 1, 2, 3], true, &wrap), 1);
        assert_eq!(gap_components(&[0, 1, 2, 3], false, &wrap), 2);
        assert_eq!(gap_components(&[0, 1], true, &[false, false]), 0);
    }
}
