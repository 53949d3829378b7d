//! Continuum eigenvalues of the Laplacian on the unit square, disk and ball,
//! from closed forms and Bessel-function roots. Used as independent checks of
//! the discrete solvers.

use std::f64::consts::PI;

pub const SQUARE_DIRICHLET: f64 = 2.0 * PI * PI;
pub const SQUARE_NEUMANN: f64 = PI * PI;

/// First positive zero of `J0`.
pub const J0_FIRST_ZERO: f64 = 2.404_825_557_695_773;

/// `J_n(x)` from its power series; accurate to ~1e-13 for `|x| ≤ 8`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = half.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
    let mut sum = term;
    let q = -half * half;
    for k in 1..200u32 {
        term *= q / (f64::from(k) * f64::from(k + n));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j(1, x)
}

/// Root of `f` in `[a, b]` by bisection; `f(a)` and `f(b)` must differ in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    assert!(fa * f(b) <= 0.0, "no sign change on [{a}, {b}]");
    for _ in 0..200 {
        let c = 0.5 * (a + b);
        let fc = f(c);
        if fc == 0.0 || (b - a) < 1e-15 * c.abs().max(1.0) {
            return c;
        }
        if fa * fc < 0.0 {
            b = c;
        } else {
            a = c;
            fa = fc;
        }
    }
    0.5 * (a + b)
}

/// `j_{0,1}²` ≈ 5.7832.
pub fn disk_dirichlet() -> f64 {
    let k = bisect(bessel_j0, 2.0, 3.0);
    k * k
}

/// `(j'_{1,1})²` ≈ 3.3900.
pub fn disk_neumann() -> f64 {
    let k = bisect(|x| bessel_j0(x) - bessel_j1(x) / x, 1.0, 3.0);
    k * k
}

/// Unit disk with uniform film `ℓ = m / 2π`: `J0(k) = ℓ k J1(k)`.
pub fn disk_robin_uniform(m: f64) -> f64 {
    let ell = m / (2.0 * PI);
    let k = bisect(|k| bessel_j0(k) - ell * k * bessel_j1(k), 1e-9, J0_FIRST_ZERO);
    k * k
}

/// `π²`
pub fn ball_dirichlet() -> f64 {
    PI * PI
}

/// First nontrivial Neumann eigenvalue of the unit ball, `j_1'(x) = 0` ≈ 4.3330.
pub fn ball_neumann() -> f64 {
    let djl = |x: f64| 2.0 * x.cos() / (x * x) - 2.0 * x.sin() / (x * x * x) + x.sin() / x;
    let k = bisect(djl, 1.5, 3.0);
    k * k
}

/// Unit ball with uniform film `ℓ = m / 4π`: `u = sin(kr)/r`,
/// `ℓ (k cos k − sin k) + sin k = 0`.
pub fn ball_robin_uniform(m: f64) -> f64 {
    let ell = m / (4.0 * PI);
    let k = bisect(|k| ell * (k * k.cos() - k.sin()) + k.sin(), 1e-6, PI);
    k * k
}
