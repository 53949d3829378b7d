//! Rotationally symmetric bodies of volume `4π/3`: the ball, ellipsoids with
//! radii `(a, r_a, r_a)` and two half-ellipsoids glued along their common
//! equator. Computations run on the meridian half-profile with `2πr`-weighted
//! operators.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{solve, EigenResult, SolveOptions, SolveParams};
use crate::mesh::{make_half_profile, Mesh, RotationalBody};

/// Solver parameters shared by every body at the given refinement level,
/// resolved on the ball profile so that `ε` and the stopping threshold do
/// not vary with the shape.
pub fn shared_params(m: f64, refinements: usize, opts: &SolveOptions) -> Result<SolveParams> {
    let ball = make_half_profile(RotationalBody::Ball, refinements)?;
    let p = opts.resolve(m, &ball);
    p.validate()?;
    Ok(p)
}

/// Eigenvalue problem of a rotational body. `u0` defaults to the seeded
/// random guess of [`solve`], which has the same nodal values on every body
/// at a given refinement level since all profiles share one connectivity.
pub fn axisym_eig(body: RotationalBody, p: &SolveParams, refinements: usize, u0: Option<&[f64]>) -> Result<(Mesh, EigenResult)> {
    let mesh = make_half_profile(body, refinements)?;
    let eig = solve(&mesh, p, u0)?;
    Ok((mesh, eig))
}

/// Result of [`ellipsoid_sweep`].
#[derive(Clone, Debug)]
pub struct EllipsoidSweep {
    /// Successful evaluations `(a, λ)` in grid order.
    pub points: Vec<(f64, f64)>,
    /// Grid values whose solve failed, with the error message.
    pub failures: Vec<(f64, String)>,
    /// Grid point with the smallest `λ`.
    pub argmin: f64,
    pub min_lambda: f64,
    /// Vertex of the parabola through the grid minimum and its neighbours.
    pub refined_argmin: f64,
}

/// `λ_m` of the ellipsoids `(a, r_a, r_a)` over `a_grid`. Points are
/// independent and evaluated in parallel; failures are collected.
pub fn ellipsoid_sweep(a_grid: &[f64], p: &SolveParams, refinements: usize) -> Result<EllipsoidSweep> {
    let results: Vec<(f64, Result<f64>)> = a_grid
        .par_iter()
        .map(|&a| (a, axisym_eig(RotationalBody::Ellipsoid { a }, p, refinements, None).map(|(_, e)| e.lambda)))
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (a, r) in results {
        match r {
            Ok(l) => points.push((a, l)),
            Err(e) => failures.push((a, e.to_string())),
        }
    }
    let (imin, &(argmin, min_lambda)) = points
        .iter()
        .enumerate()
        .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
        .ok_or_else(|| Error::InvalidParameter("ellipsoid sweep produced no values".into()))?;
    let refined_argmin = if imin > 0 && imin + 1 < points.len() {
        parabola_vertex(points[imin - 1], points[imin], points[imin + 1]).unwrap_or(argmin)
    } else {
        argmin
    };
    Ok(EllipsoidSweep { points, failures, argmin, min_lambda, refined_argmin })
}

fn parabola_vertex((x0, y0): (f64, f64), (x1, y1): (f64, f64), (x2, y2): (f64, f64)) -> Option<f64> {
    let d = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / d;
    (a > 0.0).then(|| -b / (2.0 * a))
}

/// Settings of [`half_ellipsoid_opt`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordinateSearch {
    /// Search interval for both semi-axes.
    pub bounds: (f64, f64),
    /// Final bracket width of each golden-section search.
    pub line_tol: f64,
    /// Stop once a full round moves `(a, b)` by less than this (max norm).
    pub tol: f64,
    pub max_rounds: usize,
}

impl Default for CoordinateSearch {
    fn default() -> Self {
        Self { bounds: (0.4, 2.4), line_tol: 2e-3, tol: 1e-2, max_rounds: 20 }
    }
}

/// Result of [`half_ellipsoid_opt`].
#[derive(Clone, Debug)]
pub struct HalfEllipsoidOptimum {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    /// Every distinct evaluation `(a, b, λ)` in order.
    pub evaluations: Vec<(f64, f64, f64)>,
    /// `(a, b)` after each round.
    pub rounds: Vec<(f64, f64)>,
}

/// Coordinate descent over the semi-axes `(a, b)` of glued half-ellipsoids,
/// with golden-section line searches over `a` then `b`.
///
/// The bodies `(a, b)` and `(b, a)` are mirror images with the same
/// eigenvalue, so the optimum is reported with `a ≥ b`.
pub fn half_ellipsoid_opt(
    p: &SolveParams,
    refinements: usize,
    a0: f64,
    b0: f64,
    search: &CoordinateSearch,
) -> Result<HalfEllipsoidOptimum> {
    RotationalBody::HalfEllipsoids { a: a0, b: b0 }.validate()?;
    let mut cache: HashMap<(u64, u64), f64> = HashMap::new();
    let mut evaluations = Vec::new();
    let mut eval = |a: f64, b: f64| -> Result<f64> {
        if let Some(&l) = cache.get(&(a.to_bits(), b.to_bits())) {
            return Ok(l);
        }
        let (_, e) = axisym_eig(RotationalBody::HalfEllipsoids { a, b }, p, refinements, None)?;
        cache.insert((a.to_bits(), b.to_bits()), e.lambda);
        evaluations.push((a, b, e.lambda));
        Ok(e.lambda)
    };
    let (mut a, mut b) = (a0, b0);
    let mut rounds = Vec::new();
    for _ in 0..search.max_rounds {
        let (a_old, b_old) = (a, b);
        a = golden_section(|x| eval(x, b), search.bounds, search.line_tol)?;
        b = golden_section(|y| eval(a, y), search.bounds, search.line_tol)?;
        rounds.push((a, b));
        if (a - a_old).abs().max((b - b_old).abs()) < search.tol {
            let lambda = eval(a, b)?;
            let (a, b) = (a.max(b), a.min(b));
            return Ok(HalfEllipsoidOptimum { a, b, lambda, evaluations, rounds });
        }
    }
    Err(Error::NotConverged { steps: search.max_rounds })
}

/// Minimizer of a unimodal function on `[lo, hi]` to a bracket of width `tol`.
pub fn golden_section(mut f: impl FnMut(f64) -> Result<f64>, (mut lo, mut hi): (f64, f64), tol: f64) -> Result<f64> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 <= f2 { x1 } else { x2 })
}
