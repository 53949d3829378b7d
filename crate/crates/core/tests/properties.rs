use std::f64::consts::PI;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use insulation::assembly::assemble;
use insulation::flow::{random_initial_guess, solve, SolveParams};
use insulation::io::{mesh_from_str, mesh_to_string};
use insulation::linear::{linear_eig, LinearEigKind};
use insulation::mesh::{make_disk, make_half_profile, make_square, RotationalBody};
use insulation::shape::restore_area;

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn eigenvalue_ignores_node_numbering(seed in 0u64..1000) {
        let mesh = make_square(3);
        let perm = permutation(mesh.num_nodes(), seed);
        let relabeled = mesh.relabeled(&perm).unwrap();
        let p = SolveParams::for_mesh(0.1, &mesh);
        let u0 = random_initial_guess(mesh.num_nodes(), seed);
        let mut v0 = vec![0.0; u0.len()];
        for (i, &j) in perm.iter().enumerate() {
            v0[j] = u0[i];
        }
        let a = solve(&mesh, &p, Some(&u0)).unwrap();
        let b = solve(&relabeled, &p, Some(&v0)).unwrap();
        prop_assert!((a.lambda - b.lambda).abs() <= 1e-7 * a.lambda, "{} vs {}", a.lambda, b.lambda);
        prop_assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn eigenvalue_decreases_with_mass(m in 0.1f64..3.0, factor in 1.5f64..3.0) {
        let mesh = make_disk(3);
        let lo = solve(&mesh, &SolveParams::for_mesh(m, &mesh), None).unwrap().lambda;
        let hi = solve(&mesh, &SolveParams::for_mesh(m * factor, &mesh), None).unwrap().lambda;
        prop_assert!(hi < lo, "lambda({}) = {hi} >= lambda({m}) = {lo}", m * factor);
    }

    #[test]
    fn optimal_film_beats_uniform_film(m in 0.1f64..5.0) {
        let mesh = make_disk(3);
        let ops = assemble(&mesh);
        let p = SolveParams::for_mesh(m, &mesh);
        let lambda = solve(&mesh, &p, None).unwrap().lambda;
        let robin = linear_eig(&ops, LinearEigKind::RobinUniform { m }, 1e-12).unwrap().lambda;
        let slack = (p.eps + p.eps * p.eps) * ops.boundary_measure.powi(2) / m;
        prop_assert!(lambda <= robin + slack, "{lambda} > {robin} + {slack}");
    }

    #[test]
    fn thin_films_lie_between_neumann_and_dirichlet(m in 0.05f64..1.5) {
        let mesh = make_disk(3);
        let ops = assemble(&mesh);
        let lambda = solve(&mesh, &SolveParams::for_mesh(m, &mesh), None).unwrap().lambda;
        let d = linear_eig(&ops, LinearEigKind::Dirichlet, 1e-12).unwrap().lambda;
        let n = linear_eig(&ops, LinearEigKind::Neumann, 1e-12).unwrap().lambda;
        prop_assert!(n < lambda && lambda < d, "{n} < {lambda} < {d}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rotational_bodies_have_unit_ball_volume(a in 0.5f64..2.2, b in 0.5f64..2.2, half in any::<bool>()) {
        let body = if half { RotationalBody::HalfEllipsoids { a, b } } else { RotationalBody::Ellipsoid { a } };
        let mut errors = Vec::new();
        for level in [3, 4] {
            let mesh = make_half_profile(body, level).unwrap();
            let v = mesh.measures().volume;
            let ops = assemble(&mesh);
            prop_assert!((ops.domain_measure - v).abs() <= 1e-12 * v);
            errors.push((v - RotationalBody::VOLUME).abs() / RotationalBody::VOLUME);
        }
        prop_assert!(errors[1] < 0.01);
        // Second order: one refinement cuts the error by about four.
        prop_assert!(errors[1] <= 0.3 * errors[0] + 1e-12, "{errors:?}");
    }

    #[test]
    fn mesh_text_roundtrip(seed in 0u64..10_000, level in 0usize..3) {
        let mesh = make_disk(level);
        let relabeled = mesh.relabeled(&permutation(mesh.num_nodes(), seed)).unwrap();
        let back = mesh_from_str(&mesh_to_string(&relabeled)).unwrap();
        prop_assert_eq!(back.nodes(), relabeled.nodes());
        prop_assert_eq!(back.triangles(), relabeled.triangles());
        prop_assert_eq!(back.boundary_edges(), relabeled.boundary_edges());
    }

    #[test]
    fn area_restoration_is_exact(k in 1.0f64..4.0, amp in 0.0f64..0.05, phase in 0.0f64..6.3) {
        let mesh = make_disk(3);
        let area0 = mesh.area();
        let w: Vec<[f64; 2]> = mesh
            .nodes()
            .iter()
            .map(|q| {
                let t = q[1].atan2(q[0]);
                let r = (k * t + phase).cos();
                [q[0] * r, q[1] * r]
            })
            .collect();
        let moved = mesh.deform(&w, amp).unwrap();
        let restored = restore_area(&moved, area0);
        prop_assert!((restored.area() - area0).abs() <= 1e-12 * area0);
        prop_assert!((restored.centroid()[0] - moved.centroid()[0]).abs() < 1e-12);
    }
}

#[test]
fn ball_profile_measures() {
    let mesh = make_half_profile(RotationalBody::Ball, 5).unwrap();
    let m = mesh.measures();
    assert!((m.volume - 4.0 * PI / 3.0).abs() / (4.0 * PI / 3.0) < 2e-3);
    assert!((m.surface - 4.0 * PI).abs() / (4.0 * PI) < 2e-3);
}
