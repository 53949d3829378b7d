//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! non-zero status if any criterion fails.
//!
//! Run with `cargo test --release -p insulation --test acceptance`.

use std::time::Instant;

use insulation::assembly::{assemble, DiscreteOperators};
use insulation::axisym::{self, CoordinateSearch};
use insulation::flow::{self, gap_components, gap_mask, resume, solve, thickness_ratio, EigenResult, SolveOptions, SolveParams};
use insulation::linear::{linear_eig, LinearEigKind};
use insulation::mesh::{make_disk, make_square, Mesh, RotationalBody};
use insulation::reference;
use insulation::shape::{boundary_density, shape_derivative, shape_descent, stokes_gradient, ShapeOptions};

const TABLE_LEVEL: usize = 6;
/// Accepted shape steps per mass; the λ(Ω*) bounds are met long before the
/// step-size rule would stop the descent.
const SHAPE_STEPS: usize = 4;
const AXISYM_LEVEL: usize = 5;
const LINEAR_TOL: f64 = 1e-12;

/// `(m, λ_R uniform, λ_m(disk), λ_m(optimized))`
const DISK_TABLE: [(f64, f64, f64, f64); 4] = [
    (0.4, 5.0951, 5.0714, 5.0664),
    (0.9, 4.3803, 4.3383, 4.3296),
    (1.4, 3.8085, 3.7819, 3.7718),
    (1.9, 3.3519, 3.3503, 3.3378),
];

struct Report {
    failed: Vec<&'static str>,
}

impl Report {
    fn record(&mut self, name: &'static str, pass: bool, detail: &str) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name);
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn info(line: String) {
    println!("     {line}");
}

struct DiskRun {
    ops: DiscreteOperators,
    mesh: Mesh,
    robin: f64,
    eig: EigenResult,
}

fn disk_runs() -> Vec<DiskRun> {
    let mesh = make_disk(TABLE_LEVEL);
    let ops = assemble(&mesh);
    DISK_TABLE
        .iter()
        .map(|&(m, ..)| {
            let p = SolveParams::for_mesh(m, &mesh);
            let robin = linear_eig(&ops, LinearEigKind::RobinUniform { m }, LINEAR_TOL).unwrap().lambda;
            let eig = solve(&mesh, &p, None).unwrap();
            DiskRun { ops: ops.clone(), mesh: mesh.clone(), robin, eig }
        })
        .collect()
}

fn disk_table(r: &mut Report, runs: &[DiskRun]) {
    let mut pass = true;
    for (run, &(m, robin_ref, disk_ref, opt_ref)) in runs.iter().zip(&DISK_TABLE) {
        let p = SolveParams::for_mesh(m, &run.mesh);
        let opts = ShapeOptions { max_steps: SHAPE_STEPS, ..ShapeOptions::default() };
        let t = Instant::now();
        let st = shape_descent(&run.mesh, &p, &opts, Some(&run.eig), |_| {}).unwrap();
        let opt = *st.lambda_history.last().unwrap();
        let ok = rel(run.robin, robin_ref) <= 0.005
            && rel(run.eig.lambda, disk_ref) <= 0.005
            && opt < run.eig.lambda
            && rel(opt, opt_ref) <= 0.01;
        pass &= ok;
        info(format!(
            "m = {m}: lambda_R {:.4} ({:+.3}%), lambda {:.4} ({:+.3}%), optimized {:.4} ({:+.3}%) after {} steps [{:.0?}]",
            run.robin,
            100.0 * (run.robin - robin_ref) / robin_ref,
            run.eig.lambda,
            100.0 * (run.eig.lambda - disk_ref) / disk_ref,
            opt,
            100.0 * (opt - opt_ref) / opt_ref,
            st.records.len(),
            t.elapsed()
        ));
    }
    r.record(
        "disk film and shape optimization (level 6)",
        pass,
        "uniform Robin and optimal-film eigenvalues within 0.5%, optimized shape below the disk and within 1%",
    );
}

fn gains(r: &mut Report, runs: &[DiskRun]) {
    let disk = &runs[0];
    let disk_gain = (disk.robin - disk.eig.lambda) / disk.robin;
    let p = axisym::shared_params(5.0, AXISYM_LEVEL, &SolveOptions::default()).unwrap();
    let (ball_mesh, ball) = axisym::axisym_eig(RotationalBody::Ball, &p, AXISYM_LEVEL, None).unwrap();
    let ball_robin = linear_eig(&assemble(&ball_mesh), LinearEigKind::RobinUniform { m: 5.0 }, LINEAR_TOL).unwrap().lambda;
    let ball_gain = (ball_robin - ball.lambda) / ball_robin;
    let pass = (0.002..=0.008).contains(&disk_gain)
        && (0.005..=0.015).contains(&ball_gain)
        && rel(ball_robin, 4.7424) <= 0.01;
    r.record(
        "optimal film versus uniform film",
        pass,
        &format!(
            "disk m=0.4 gain {:.3}%, ball m=5 gain {:.3}% (lambda {:.4} vs uniform {:.4}; uniform {:+.3}% from 4.7424)",
            100.0 * disk_gain,
            100.0 * ball_gain,
            ball.lambda,
            ball_robin,
            100.0 * (ball_robin - 4.7424) / 4.7424
        ),
    );
}

fn linear_convergence(r: &mut Report) {
    let mut d = Vec::new();
    let mut n = Vec::new();
    for level in 3..=5 {
        let ops = assemble(&make_square(level));
        d.push(linear_eig(&ops, LinearEigKind::Dirichlet, LINEAR_TOL).unwrap().lambda);
        n.push(linear_eig(&ops, LinearEigKind::Neumann, LINEAR_TOL).unwrap().lambda);
    }
    let err_d: Vec<f64> = d.iter().map(|l| l - reference::SQUARE_DIRICHLET).collect();
    let err_n: Vec<f64> = n.iter().map(|l| l - reference::SQUARE_NEUMANN).collect();
    let ratios: Vec<f64> = [&err_d, &err_n].iter().flat_map(|e| [e[0] / e[1], e[1] / e[2]]).collect();
    let disk_ops = assemble(&make_disk(5));
    let disk_d = linear_eig(&disk_ops, LinearEigKind::Dirichlet, LINEAR_TOL).unwrap().lambda;
    let disk_n = linear_eig(&disk_ops, LinearEigKind::Neumann, LINEAR_TOL).unwrap().lambda;
    let pass = rel(d[2], reference::SQUARE_DIRICHLET) <= 0.01
        && rel(n[2], reference::SQUARE_NEUMANN) <= 0.01
        && ratios.iter().all(|q| (3.0..=5.0).contains(q))
        && rel(disk_d, reference::disk_dirichlet()) <= 0.01;
    r.record(
        "linear eigenvalue convergence",
        pass,
        &format!(
            "square level 5: D {:.4} ({:+.3}%), N {:.4} ({:+.3}%); error ratios {:.2?}; disk D {:.4} ({:+.3}% from Bessel)",
            d[2],
            100.0 * err_d[2] / reference::SQUARE_DIRICHLET,
            n[2],
            100.0 * err_n[2] / reference::SQUARE_NEUMANN,
            ratios,
            disk_d,
            100.0 * rel(disk_d, reference::disk_dirichlet())
        ),
    );
    info(format!(
        "disk level 5: D - 5.8503 = {:+.4}, N {:.4} (Bessel {:.4}), N - 3.3979 = {:+.4}",
        disk_d - 5.8503,
        disk_n,
        reference::disk_neumann(),
        disk_n - 3.3979
    ));
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(0.0, f64::max);
    (hi - lo) / lo
}

fn flow_properties(r: &mut Report) {
    let mut worst_energy: f64 = f64::NEG_INFINITY;
    let mut worst_norm: f64 = 0.0;
    let mut worst_constraint: f64 = 0.0;
    let mut square_lambdas = Vec::new();
    let mut runs = 0;
    for (mesh, m) in [(make_disk(4), 0.4), (make_square(4), 0.1)] {
        let ops = assemble(&mesh);
        for tau in [0.5, 1.0, 2.0] {
            for seed in 0..20 {
                let p = SolveParams { tau, seed, ..SolveParams::for_mesh(m, &mesh) };
                let res = solve(&mesh, &p, None).unwrap();
                runs += 1;
                let slack = tau / m * (p.eps + p.eps * p.eps) * ops.boundary_measure.powi(2);
                let mut prev_norm = 1.0;
                for (k, rec) in res.records.iter().enumerate() {
                    let e = &res.energy_history;
                    worst_energy = worst_energy.max(e[k + 1] - e[k] - slack);
                    let expected = prev_norm + tau * tau * rec.dtu_l2_sq;
                    worst_norm = worst_norm.max(rel(rec.norm_sq, expected));
                    worst_constraint = worst_constraint.max(rec.constraint_residual / prev_norm / p.cg.tol);
                    prev_norm = rec.norm_sq;
                }
                if m == 0.1 && tau == 1.0 {
                    square_lambdas.push(res.lambda);
                }
            }
        }
    }
    let default_spread = spread(&square_lambdas);
    // Seed invariance concerns the minimizer, so those flows run to a tight
    // stopping threshold.
    let square = make_square(4);
    let converged: Vec<f64> = (0..20)
        .map(|seed| {
            let p = SolveParams { seed, eps_stop: 1e-4, max_steps: 100_000, ..SolveParams::for_mesh(0.1, &square) };
            solve(&square, &p, None).unwrap().lambda
        })
        .collect();
    let spread = spread(&converged);
    let pass = worst_energy <= 0.0 && worst_norm <= 1e-8 && worst_constraint <= 10.0 && spread <= 1e-3;
    r.record(
        "gradient-flow properties over seeds and step sizes",
        pass,
        &format!(
            "{runs} runs: max energy increase beyond slack {worst_energy:.2e}, norm identity {worst_norm:.2e}, constraint residual {worst_constraint:.2} x cg_tol, square m=0.1 seed spread {:.4}% (eps_stop 1e-4)",
            100.0 * spread
        ),
    );
    info(format!("square m=0.1 seed spread with the default eps_stop = h/10: {:.4}%", 100.0 * default_spread));
}

fn symmetry_breaking(r: &mut Report, runs: &[DiskRun]) {
    let low = &runs[0];
    let ratio_low = thickness_ratio(&low.ops, &low.eig.thickness);
    let chain = low.mesh.outer_chain();
    let components = gap_components(&chain.nodes, chain.closed, &gap_mask(&low.ops, &low.eig.thickness));
    let high = solve(&low.mesh, &SolveParams::for_mesh(3.0, &low.mesh), None).unwrap();
    let ratio_high = thickness_ratio(&low.ops, &high.thickness);
    let m0 = flow::find_m0(&make_disk(5), &SolveOptions::default()).unwrap();
    let pass = ratio_low < 0.01 && components == 1 && ratio_high > 0.9 && (m0.lambda_m0 - m0.lambda_neumann).abs() <= 1e-2;
    r.record(
        "symmetry breaking and critical mass",
        pass,
        &format!(
            "m=0.4 min/max thickness {ratio_low:.4} with {components} gap arc(s); m=3 ratio {ratio_high:.4}; m0 = {:.4} with |lambda - lambda_N| = {:.1e}",
            m0.m0,
            (m0.lambda_m0 - m0.lambda_neumann).abs()
        ),
    );
}

fn gap_angle(mesh: &Mesh, e: &EigenResult) -> f64 {
    let ops = assemble(mesh);
    let (i, _) = e
        .thickness
        .iter()
        .enumerate()
        .filter(|(i, _)| ops.beta[*i] > 0.0)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let q = mesh.nodes()[i];
    q[1].atan2(q[0])
}

fn shape_derivative_check(r: &mut Report) {
    let mesh = make_disk(4);
    let ops = assemble(&mesh);
    let m = 0.4;
    let p = SolveParams::for_mesh(m, &mesh);
    let tight = SolveParams { eps_stop: 1e-5, max_steps: 100_000, ..p };
    let base = resume(&mesh, &tight, &solve(&mesh, &p, None).unwrap()).unwrap();
    let density = boundary_density(&mesh, &ops, &base, m).unwrap();
    // Traceless linear field symmetric about the gap axis.
    let phi = gap_angle(&mesh, &base);
    let (c, s) = ((2.0 * phi).cos(), (2.0 * phi).sin());
    let w: Vec<[f64; 2]> = mesh.nodes().iter().map(|q| [c * q[0] + s * q[1], s * q[0] - c * q[1]]).collect();
    let exact = shape_derivative(&mesh, &density, &w);
    let step = 1e-3;
    let plus = resume(&mesh.deform(&w, step).unwrap(), &tight, &base).unwrap();
    let minus = resume(&mesh.deform(&w, -step).unwrap(), &tight, &base).unwrap();
    let fd = (plus.lambda - minus.lambda) / (2.0 * step);
    r.record(
        "shape derivative against finite differences (disk level 4)",
        rel(fd, exact) <= 0.1,
        &format!("boundary integral {exact:.5}, central difference {fd:.5}, relative difference {:.2}%", 100.0 * rel(fd, exact)),
    );

    // Diagnostic only: the Stokes representative is not tangentially free.
    let v = stokes_gradient(&mesh, &density).unwrap();
    let vmax = density.nodes.iter().map(|&i| v[i][0].hypot(v[i][1])).fold(0.0, f64::max);
    let tmax = density
        .nodes
        .iter()
        .zip(&density.normals)
        .map(|(&i, n)| (-v[i][0] * n[1] + v[i][1] * n[0]).abs())
        .fold(0.0, f64::max);
    info(format!("descent field: max |v.t| / max |v| on the boundary = {:.3}", tmax / vmax));
}

fn axisym_sweeps(r: &mut Report) {
    let p = axisym::shared_params(5.0, AXISYM_LEVEL, &SolveOptions::default()).unwrap();
    let grid: Vec<f64> = (0..=10).map(|i| 1.0 + 0.05 * f64::from(i)).collect();
    let sweep = axisym::ellipsoid_sweep(&grid, &p, AXISYM_LEVEL).unwrap();
    let ball = sweep.points[0].1;
    let opt = axisym::half_ellipsoid_opt(&p, AXISYM_LEVEL, 1.0, 1.0, &CoordinateSearch::default()).unwrap();
    let first = opt.rounds[0];
    let pass = (1.15..=1.30).contains(&sweep.argmin)
        && sweep.failures.is_empty()
        && opt.a > 1.4
        && opt.b < 0.8
        && (opt.a - 1.607).abs() <= 0.15
        && (opt.b - 0.657).abs() <= 0.15
        && opt.lambda < sweep.min_lambda
        && sweep.min_lambda < ball;
    r.record(
        "rotational bodies (level 5, m = 5)",
        pass,
        &format!(
            "ellipsoid argmin a = {} (vertex {:.3}), half-ellipsoids (a, b) = ({:.3}, {:.3}); lambda {:.4} < {:.4} < {:.4} (ball)",
            sweep.argmin, sweep.refined_argmin, opt.a, opt.b, opt.lambda, sweep.min_lambda, ball
        ),
    );
    info(format!(
        "search from a = b = 1: first round ({:.3}, {:.3}), {} rounds, {} evaluations",
        first.0,
        first.1,
        opt.rounds.len(),
        opt.evaluations.len()
    ));
}

fn main() {
    // Invoked by `cargo test -- --list` or with filters: nothing to enumerate.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut report = Report { failed: Vec::new() };
    let t = Instant::now();
    linear_convergence(&mut report);
    flow_properties(&mut report);
    shape_derivative_check(&mut report);
    let runs = disk_runs();
    symmetry_breaking(&mut report, &runs);
    gains(&mut report, &runs);
    disk_table(&mut report, &runs);
    axisym_sweeps(&mut report);
    println!("acceptance finished in {:.0?}", t.elapsed());
    if !report.failed.is_empty() {
        println!("{} criteria failed: {:?}", report.failed.len(), report.failed);
        std::process::exit(1);
    }
}
