//! Optimal insulating films via a nonlinear eigenvalue problem.
//!
//! The principal eigenvalue of a conducting body surrounded by a thin film of
//! total mass `m` is minimized over film distributions. Eliminating the film
//! leaves the nonlocal, nondifferentiable eigenvalue problem
//!
//! ```text
//! λ_m = min { ‖∇u‖² + (1/m) (∫_∂Ω |u| ds)² : ‖u‖_{L²} = 1 },
//! ```
//!
//! and the optimal thickness is `ℓ = m |u| / ∫_∂Ω |u| ds`.
//!
//! The crate provides
//!
//! * [`mesh`]: disk, square and rotational-body profile triangulations,
//! * [`assembly`]: P1 operators and the discrete boundary `L¹` norm,
//! * [`flow`]: the constrained semi-implicit gradient flow and [`flow::solve`],
//! * [`linear`]: Dirichlet, Neumann and uniform-Robin reference eigenvalues,
//! * [`shape`]: shape derivative, Stokes-projected descent direction and
//!   shape gradient descent in the plane,
//! * [`axisym`]: rotational bodies (ball, ellipsoids, assembled half-ellipsoids),
//! * [`io`]: plain-text meshes and legacy VTK output.
//!
//! ```
//! use insulation::{flow, mesh};
//!
//! let disk = mesh::make_disk(3);
//! let params = flow::SolveParams::for_mesh(0.4, &disk);
//! let result = flow::solve(&disk, &params, None).unwrap();
//! assert!(result.converged);
//! assert!(result.lambda > 4.5 && result.lambda < 5.8);
//! ```

pub mod assembly;
pub mod axisym;
pub mod error;
pub mod flow;
pub mod io;
pub mod linear;
pub mod mesh;
pub mod reference;
pub mod shape;
pub mod sparse;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/meshes.md")]
    mod meshes {}
    #[doc = include_str!("../../../book/src/gradient-flow.md")]
    mod gradient_flow {}
    #[doc = include_str!("../../../book/src/reference-eigenvalues.md")]
    mod reference_eigenvalues {}
    #[doc = include_str!("../../../book/src/shape-descent.md")]
    mod shape_descent {}
    #[doc = include_str!("../../../book/src/rotational-bodies.md")]
    mod rotational_bodies {}
}
