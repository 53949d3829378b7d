mod config;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use insulation::assembly::assemble;
use insulation::axisym::{self, CoordinateSearch};
use insulation::flow::{self, Metric, SolveOptions};
use insulation::io;
use insulation::linear::{linear_eig, LinearEigKind};
use insulation::mesh::{make_disk, make_half_profile, make_square, Mesh, RotationalBody};
use insulation::reference;
use insulation::shape::{self, ShapeOptions};

use config::ConfigFile;

const LINEAR_TOL: f64 = 1e-12;

#[derive(Parser, Debug)]
#[command(name = "insulation", version, about = "Optimal insulating films: eigenvalues, film thickness and shape optimization")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Total insulation mass (default depends on the domain).
    #[arg(long, global = true)]
    m: Option<f64>,
    /// Number of uniform refinements of the macro mesh.
    #[arg(long = "ref", global = true)]
    refinements: Option<usize>,
    /// Regularization of |u| (default h/10).
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Gradient-flow step size (default 1).
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Gradient-flow stopping threshold (default h/10).
    #[arg(long, global = true)]
    eps_stop: Option<f64>,
    /// Seed of the random initial guess.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Evolution metric: lumped or h1.
    #[arg(long, global = true)]
    metric: Option<Metric>,
    /// Cap on gradient-flow steps.
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output formats (comma separated); both by default.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Vec<Format>,
    /// `key = value` file with defaults for the options above.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Vtk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Domain {
    Disk,
    Square,
    Ball,
    Ellipsoid,
    HalfEllipsoids,
}

#[derive(Args, Debug, Clone, Copy)]
struct DomainArgs {
    domain: Domain,
    /// Semi-axis `a` of an ellipsoid or of the half-ellipsoid on x1 < 0.
    #[arg(long)]
    a: Option<f64>,
    /// Semi-axis `b` of the half-ellipsoid on x1 > 0.
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AxisymTask {
    Ball,
    Sweep,
    Optab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LinearKind {
    Dirichlet,
    Neumann,
    Robin,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the nonlinear eigenvalue problem once.
    Eig(DomainArgs),
    /// Eigenvalue as a function of the mass, with Dirichlet and Neumann levels.
    SweepMass {
        #[command(flatten)]
        domain: DomainArgs,
        /// Masses to evaluate, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        masses: Vec<f64>,
    },
    /// Critical mass at which the eigenvalue reaches the Neumann eigenvalue.
    M0(DomainArgs),
    /// Shape optimization of the unit disk.
    Shape2d {
        /// Largest shape step size (default 0.5).
        #[arg(long)]
        tau_max: Option<f64>,
        /// Largest accepted relative decrease per step (default 0.5).
        #[arg(long)]
        theta: Option<f64>,
        /// Stop once the shape step size falls to this value (default 1e-4).
        #[arg(long)]
        eps_stop_shape: Option<f64>,
        /// Cap on accepted shape steps (default 200).
        #[arg(long)]
        max_shape_steps: Option<usize>,
    },
    /// Rotational bodies: the ball, the ellipsoid sweep and glued half-ellipsoids.
    Axisym {
        task: AxisymTask,
        #[arg(long, default_value_t = 1.0)]
        a_min: f64,
        #[arg(long, default_value_t = 1.5)]
        a_max: f64,
        #[arg(long, default_value_t = 0.05)]
        a_step: f64,
        /// Start of the half-ellipsoid search.
        #[arg(long, default_value_t = 1.0)]
        a0: f64,
        #[arg(long, default_value_t = 1.0)]
        b0: f64,
    },
    /// Linear reference eigenvalues.
    Linear {
        #[command(flatten)]
        domain: DomainArgs,
        /// Problems to solve (comma separated); all three by default.
        #[arg(long, value_delimiter = ',')]
        kind: Vec<LinearKind>,
    },
}

/// Options after merging flags, the config file and defaults.
struct Settings {
    m: Option<f64>,
    refinements: usize,
    opts: SolveOptions,
    out: PathBuf,
    csv: bool,
    vtk: bool,
    file: ConfigFile,
}

impl Settings {
    fn resolve(c: Common) -> Result<Self> {
        let file = match &c.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let formats: Vec<Format> = if !c.format.is_empty() {
            c.format
        } else if let Some(list) = file.get::<String>("format")? {
            list.split(',')
                .map(|s| Format::from_str(s.trim(), true).map_err(|e| anyhow!("config key `format`: {e}")))
                .collect::<Result<_>>()?
        } else {
            vec![Format::Csv, Format::Vtk]
        };
        let opts = SolveOptions {
            eps: file.merge(c.eps, "eps")?,
            tau: file.merge(c.tau, "tau")?,
            eps_stop: file.merge(c.eps_stop, "eps_stop")?,
            max_steps: file.merge(c.max_steps, "max_steps")?,
            seed: file.merge(c.seed, "seed")?,
            metric: file.merge(c.metric, "metric")?,
            ..SolveOptions::default()
        };
        Ok(Settings {
            m: file.merge(c.m, "m")?,
            refinements: file.merge(c.refinements, "ref")?.unwrap_or(5),
            opts,
            out: file.merge(c.out, "out")?.unwrap_or_else(|| PathBuf::from("out")),
            csv: formats.contains(&Format::Csv),
            vtk: formats.contains(&Format::Vtk),
            file,
        })
    }

    fn mass(&self, default: f64) -> f64 {
        self.m.unwrap_or(default)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

impl DomainArgs {
    fn body(&self) -> Result<Option<RotationalBody>> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| anyhow!("--{name} is required for {:?}", self.domain));
        Ok(match self.domain {
            Domain::Disk | Domain::Square => None,
            Domain::Ball => Some(RotationalBody::Ball),
            Domain::Ellipsoid => Some(RotationalBody::Ellipsoid { a: need(self.a, "a")? }),
            Domain::HalfEllipsoids => Some(RotationalBody::HalfEllipsoids { a: need(self.a, "a")?, b: need(self.b, "b")? }),
        })
    }

    fn mesh(&self, refinements: usize) -> Result<Mesh> {
        Ok(match self.domain {
            Domain::Disk => make_disk(refinements),
            Domain::Square => make_square(refinements),
            _ => make_half_profile(self.body()?.expect("rotational domain"), refinements)?,
        })
    }

    /// Mass of the preset experiment for this domain.
    fn default_mass(&self) -> f64 {
        match self.domain {
            Domain::Disk => 0.4,
            Domain::Square => 0.1,
            _ => 5.0,
        }
    }
}

/// Writes a CSV table, refusing non-finite values.
fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            bail!("non-finite value {v} in {}", path.display());
        }
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn flag(b: bool) -> f64 {
    f64::from(u8::from(b))
}

fn write_fields(s: &Settings, stem: &str, mesh: &Mesh, u: &[f64], thickness: &[f64]) -> Result<()> {
    if s.vtk {
        let fields: [(&str, &[f64]); 2] = [("u", u), ("thickness", thickness)];
        io::write_vtk(s.path(&format!("{stem}.vtk")), mesh, &fields)?;
        io::write_boundary_vtk(s.path(&format!("{stem}_boundary.vtk")), mesh, &fields)?;
    }
    if s.csv {
        let chain = mesh.outer_chain();
        let arc = chain.arc_lengths(mesh);
        let rows: Vec<Vec<f64>> = chain
            .nodes
            .iter()
            .zip(&arc)
            .map(|(&i, &sl)| {
                let p = mesh.nodes()[i];
                vec![i as f64, sl, p[0], p[1], u[i], thickness[i]]
            })
            .collect();
        write_csv(&s.path(&format!("{stem}_thickness.csv")), &["node", "arc_length", "x", "y", "u", "thickness"], &rows)?;
    }
    Ok(())
}

fn cmd_eig(s: &Settings, d: DomainArgs) -> Result<()> {
    let mesh = d.mesh(s.refinements)?;
    let p = s.opts.resolve(s.mass(d.default_mass()), &mesh);
    let res = flow::solve(&mesh, &p, None)?;
    let ops = assemble(&mesh);
    println!(
        "h = {:.5}  nodes = {}  K = {}  lambda = {:.6}  min/max thickness = {:.4}",
        mesh.h(),
        mesh.num_nodes(),
        res.iterations,
        res.lambda,
        flow::thickness_ratio(&ops, &res.thickness)
    );
    if s.csv {
        write_csv(
            &s.path("eig_table.csv"),
            &["h", "nodes", "triangles", "iterations", "lambda", "m", "lambda_unregularized", "converged"],
            &[vec![
                mesh.h(),
                mesh.num_nodes() as f64,
                mesh.num_triangles() as f64,
                res.iterations as f64,
                res.lambda,
                p.m,
                res.lambda_unregularized,
                flag(res.converged),
            ]],
        )?;
        let rows: Vec<Vec<f64>> =
            res.records.iter().map(|r| vec![r.step as f64, r.energy, r.dtu_norm, r.norm_sq]).collect();
        write_csv(&s.path("eig_history.csv"), &["step", "energy", "dtu_norm", "norm_sq"], &rows)?;
    }
    write_fields(s, "eig", &mesh, &res.u, &res.thickness)?;
    if !res.converged {
        bail!("gradient flow did not converge within {} steps", p.max_steps);
    }
    Ok(())
}

fn cmd_sweep_mass(s: &Settings, d: DomainArgs, masses: &[f64]) -> Result<()> {
    let mesh = d.mesh(s.refinements)?;
    let ops = assemble(&mesh);
    let ld = linear_eig(&ops, LinearEigKind::Dirichlet, LINEAR_TOL)?.lambda;
    let ln = linear_eig(&ops, LinearEigKind::Neumann, LINEAR_TOL)?.lambda;
    let results: Vec<_> = masses
        .par_iter()
        .map(|&m| flow::solve_with_operators(&ops, &s.opts.resolve(m, &mesh), None))
        .collect::<insulation::Result<_>>()?;
    let mut rows = Vec::new();
    for (&m, r) in masses.iter().zip(&results) {
        println!("m = {m:<8} lambda = {:.6}", r.lambda);
        rows.push(vec![m, r.lambda, ld, ln, r.iterations as f64, flag(r.converged)]);
    }
    write_csv(
        &s.path("mass_sweep.csv"),
        &["m", "lambda", "lambda_dirichlet", "lambda_neumann", "iterations", "converged"],
        &rows,
    )?;
    if results.iter().any(|r| !r.converged) {
        bail!("gradient flow did not converge for every mass");
    }
    Ok(())
}

fn cmd_m0(s: &Settings, d: DomainArgs) -> Result<()> {
    let mesh = d.mesh(s.refinements)?;
    let c = flow::find_m0(&mesh, &s.opts)?;
    println!("m0 = {:.4}  lambda = {:.6}  lambda_N = {:.6}", c.m0, c.lambda_m0, c.lambda_neumann);
    write_csv(&s.path("m0.csv"), &["m0", "lambda_m0", "lambda_neumann"], &[vec![c.m0, c.lambda_m0, c.lambda_neumann]])?;
    let rows: Vec<Vec<f64>> = c.evaluations.iter().map(|&(m, l)| vec![m, l]).collect();
    write_csv(&s.path("m0_evaluations.csv"), &["m", "lambda"], &rows)
}

fn cmd_shape2d(
    s: &Settings,
    tau_max: Option<f64>,
    theta: Option<f64>,
    eps_stop: Option<f64>,
    max_steps: Option<usize>,
) -> Result<()> {
    let file = &s.file;
    let defaults = ShapeOptions::default();
    let opts = ShapeOptions {
        tau_max: file.merge(tau_max, "tau_max")?.unwrap_or(defaults.tau_max),
        theta: file.merge(theta, "theta")?.unwrap_or(defaults.theta),
        eps_stop: file.merge(eps_stop, "eps_stop_shape")?.unwrap_or(defaults.eps_stop),
        max_steps: file.merge(max_steps, "max_shape_steps")?.unwrap_or(defaults.max_steps),
    };
    let mesh = make_disk(s.refinements);
    let p = s.opts.resolve(s.mass(0.4), &mesh);
    let ops = assemble(&mesh);
    let robin = linear_eig(&ops, LinearEigKind::RobinUniform { m: p.m }, LINEAR_TOL)?.lambda;
    let initial = flow::solve(&mesh, &p, None)?;
    println!("lambda_R = {robin:.6}  lambda(disk) = {:.6}", initial.lambda);

    let snapshots = s.path("shape_steps");
    fs::create_dir_all(&snapshots)?;
    let mut write_err = None;
    let state = shape::shape_descent(&mesh, &p, &opts, Some(&initial), |st| {
        let r = st.records.last().expect("called after an accepted step");
        println!("step {:>3}  tau = {:.4e}  lambda = {:.6}", r.step, r.tau, r.lambda);
        let stem = snapshots.join(format!("step_{:04}", r.step));
        let go = || -> Result<()> {
            io::write_mesh(stem.with_extension("mesh"), &st.mesh)?;
            if s.vtk {
                io::write_vtk(stem.with_extension("vtk"), &st.mesh, &[("u", &st.eigen.u), ("thickness", &st.eigen.thickness)])?;
            }
            Ok(())
        };
        if let Err(e) = go() {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let last = *state.lambda_history.last().expect("history is never empty");
    if s.csv {
        write_csv(
            &s.path("shape_table.csv"),
            &["m", "lambda_robin_uniform", "lambda_initial", "lambda_optimized", "steps", "converged"],
            &[vec![p.m, robin, initial.lambda, last, state.records.len() as f64, flag(state.converged)]],
        )?;
        let rows: Vec<Vec<f64>> =
            state.records.iter().map(|r| vec![r.step as f64, r.tau, r.lambda, r.area, r.rejected as f64]).collect();
        write_csv(&s.path("shape_log.csv"), &["step", "tau", "lambda", "area", "rejected"], &rows)?;
    }
    io::write_mesh(s.path("shape_final.mesh"), &state.mesh)?;
    write_fields(s, "shape_final", &state.mesh, &state.eigen.u, &state.eigen.thickness)?;
    println!("lambda(optimized) = {last:.6} after {} steps", state.records.len());
    if !state.converged {
        eprintln!("warning: step cap of {} reached before the step size fell below {}", opts.max_steps, opts.eps_stop);
    }
    Ok(())
}

fn cmd_axisym(s: &Settings, task: AxisymTask, grid: (f64, f64, f64), start: (f64, f64)) -> Result<()> {
    let m = s.mass(5.0);
    let p = axisym::shared_params(m, s.refinements, &s.opts)?;
    match task {
        AxisymTask::Ball => {
            let (mesh, res) = axisym::axisym_eig(RotationalBody::Ball, &p, s.refinements, None)?;
            let robin = linear_eig(&assemble(&mesh), LinearEigKind::RobinUniform { m }, LINEAR_TOL)?.lambda;
            let gain = 100.0 * (robin - res.lambda) / robin;
            println!("lambda_R = {robin:.6}  lambda = {:.6}  gain = {gain:.3}%", res.lambda);
            if s.csv {
                write_csv(
                    &s.path("axisym_ball.csv"),
                    &["m", "h", "nodes", "triangles", "iterations", "lambda", "lambda_robin_uniform", "lambda_robin_continuum", "gain_percent"],
                    &[vec![
                        m,
                        mesh.h(),
                        mesh.num_nodes() as f64,
                        mesh.num_triangles() as f64,
                        res.iterations as f64,
                        res.lambda,
                        robin,
                        reference::ball_robin_uniform(m),
                        gain,
                    ]],
                )?;
            }
            write_fields(s, "axisym_ball", &mesh, &res.u, &res.thickness)?;
            if !res.converged {
                bail!("gradient flow did not converge within {} steps", p.max_steps);
            }
        }
        AxisymTask::Sweep => {
            let (lo, hi, step) = grid;
            if !(step > 0.0 && hi >= lo) {
                bail!("invalid sweep grid [{lo}, {hi}] with step {step}");
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            let a_grid: Vec<f64> = (0..=n).map(|i| lo + step * i as f64).collect();
            let sweep = axisym::ellipsoid_sweep(&a_grid, &p, s.refinements)?;
            for (a, e) in &sweep.failures {
                eprintln!("a = {a}: {e}");
            }
            for (a, l) in &sweep.points {
                println!("a = {a:<6.3} lambda = {l:.6}");
            }
            println!("argmin a = {}  (parabolic vertex {:.4})", sweep.argmin, sweep.refined_argmin);
            let rows: Vec<Vec<f64>> = sweep.points.iter().map(|&(a, l)| vec![a, l]).collect();
            write_csv(&s.path("ellipsoid_sweep.csv"), &["a", "lambda"], &rows)?;
            write_csv(
                &s.path("ellipsoid_sweep_summary.csv"),
                &["argmin", "refined_argmin", "min_lambda", "failures"],
                &[vec![sweep.argmin, sweep.refined_argmin, sweep.min_lambda, sweep.failures.len() as f64]],
            )?;
        }
        AxisymTask::Optab => {
            let opt = axisym::half_ellipsoid_opt(&p, s.refinements, start.0, start.1, &CoordinateSearch::default())?;
            println!("a = {:.4}  b = {:.4}  lambda = {:.6}  ({} evaluations)", opt.a, opt.b, opt.lambda, opt.evaluations.len());
            let rows: Vec<Vec<f64>> = opt.evaluations.iter().map(|&(a, b, l)| vec![a, b, l]).collect();
            write_csv(&s.path("half_ellipsoids.csv"), &["a", "b", "lambda"], &rows)?;
            write_csv(
                &s.path("half_ellipsoid_optimum.csv"),
                &["a", "b", "lambda", "rounds", "evaluations"],
                &[vec![opt.a, opt.b, opt.lambda, opt.rounds.len() as f64, opt.evaluations.len() as f64]],
            )?;
            if s.vtk {
                let body = RotationalBody::HalfEllipsoids { a: opt.a, b: opt.b };
                let (mesh, res) = axisym::axisym_eig(body, &p, s.refinements, None)?;
                write_fields(s, "half_ellipsoid_optimum", &mesh, &res.u, &res.thickness)?;
            }
        }
    }
    Ok(())
}

fn cmd_linear(s: &Settings, d: DomainArgs, kinds: &[LinearKind]) -> Result<()> {
    let mesh = d.mesh(s.refinements)?;
    let ops = assemble(&mesh);
    let m = s.mass(d.default_mass());
    let kinds = if kinds.is_empty() { &[LinearKind::Dirichlet, LinearKind::Neumann, LinearKind::Robin][..] } else { kinds };
    let mut w = csv::Writer::from_path(s.path("linear.csv"))?;
    w.write_record(["kind", "h", "lambda"])?;
    for k in kinds {
        let kind = match k {
            LinearKind::Dirichlet => LinearEigKind::Dirichlet,
            LinearKind::Neumann => LinearEigKind::Neumann,
            LinearKind::Robin => LinearEigKind::RobinUniform { m },
        };
        let r = linear_eig(&ops, kind, LINEAR_TOL)?;
        println!("{:<14} lambda = {:.6}", kind.name(), r.lambda);
        w.write_record([kind.name().to_string(), mesh.h().to_string(), r.lambda.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let s = Settings::resolve(cli.common)?;
    fs::create_dir_all(&s.out).with_context(|| format!("creating output directory {}", s.out.display()))?;
    match cli.command {
        Command::Eig(d) => cmd_eig(&s, d),
        Command::SweepMass { domain, masses } => cmd_sweep_mass(&s, domain, &masses),
        Command::M0(d) => cmd_m0(&s, d),
        Command::Shape2d { tau_max, theta, eps_stop_shape, max_shape_steps } => {
            cmd_shape2d(&s, tau_max, theta, eps_stop_shape, max_shape_steps)
        }
        Command::Axisym { task, a_min, a_max, a_step, a0, b0 } => cmd_axisym(&s, task, (a_min, a_max, a_step), (a0, b0)),
        Command::Linear { domain, kind } => cmd_linear(&s, domain, &kind),
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
