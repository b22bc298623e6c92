//! Command-line front end: `run`, `estimate`, `refine-demo`, `check`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver/geometry failure,
//! 3 completed with a driver warning (a refinement or iteration cap was hit).

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use limitfrac::adapt::DriverCtx;
use limitfrac::config::{load_config, Config};
use limitfrac::estimator::assemble_indicators;
use limitfrac::fespace::ScalarField;
use limitfrac::mesh::Mesh;
use limitfrac::sim::{dirichlet_for, run_quasi_static};
use limitfrac::solver::alternate_minimize;
use limitfrac::{dorfler_mark, par, Error};

#[derive(Parser)]
#[command(name = "limitfrac", version, about = "Adaptive FEM for quasi-static fracture in strain-limiting solids")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full quasi-static simulation described by a config file.
    Run { config: PathBuf },
    /// One minimize+estimate pass at the first loading step; prints the
    /// per-element and global indicators.
    Estimate { config: PathBuf },
    /// Random marking/bisection stress test with ASCII mesh dumps.
    RefineDemo { config: PathBuf },
    /// Run the built-in invariant suite.
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config } => with_config(&config, cmd_run),
        Cmd::Estimate { config } => with_config(&config, cmd_estimate),
        Cmd::RefineDemo { config } => with_config(&config, cmd_refine_demo),
        Cmd::Check => cmd_check(),
    }
}

fn with_config(path: &PathBuf, f: impl FnOnce(Config) -> ExitCode) -> ExitCode {
    let cfg = match load_config(path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    init_threads(&cfg);
    f(cfg)
}

fn init_threads(cfg: &Config) {
    par::set_parallel(cfg.threads > 1);
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn cmd_run(cfg: Config) -> ExitCode {
    match run_quasi_static(&cfg, None) {
        Ok(state) => {
            println!(
                "completed {} steps: {} elements, {} dofs, {} crack nodes",
                state.step,
                state.mesh.n_elements(),
                state.mesh.n_vertices(),
                state.cr_nodes.len()
            );
            println!("outputs in {}", cfg.output_dir.display());
            if state.warning {
                println!("warning: a refinement or iteration cap was reached");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(e),
    }
}

fn cmd_estimate(cfg: Config) -> ExitCode {
    let run = || -> Result<bool, Error> {
        let p = cfg.model_params()?;
        let mesh = cfg.build_mesh()?;
        let t = cfg.load.dt;
        let bc = dirichlet_for(&mesh, t, &cfg.load);
        let u0 = ScalarField::constant(&mesh, 0.0);
        let v0 = ScalarField::constant(&mesh, 1.0);
        let res = alternate_minimize(
            &mesh,
            &u0,
            &v0,
            &bc,
            &limitfrac::ConstraintSet::default(),
            &p,
            &cfg.solver,
        )?;
        let ind = assemble_indicators(&res.u, &res.v, &mesh, &p)?;
        println!("element eta_u eta_v eta");
        for t in 0..mesh.n_elements() {
            println!("{t} {:e} {:e} {:e}", ind.eta_u[t], ind.eta_v[t], ind.eta[t]);
        }
        println!("global {:e}", ind.global);
        println!("altmin iterations {}", res.iterations);
        Ok(ind.global > cfg.adapt.xi_rf)
    };
    match run() {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn cmd_refine_demo(cfg: Config) -> ExitCode {
    let run = || -> Result<(), Error> {
        std::fs::create_dir_all(&cfg.output_dir)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut mesh = cfg.build_mesh()?;
        std::fs::write(cfg.output_dir.join("mesh_round_00.txt"), mesh.debug_dump())?;
        for round in 1..=10 {
            let marked: Vec<usize> =
                (0..mesh.n_elements()).filter(|_| rng.gen_bool(0.25)).collect();
            let fine = mesh.bisect(&marked)?;
            fine.check_conformity()?;
            println!(
                "round {round}: marked {} of {}, now {} elements, {} vertices, shape ratio {:.3}",
                marked.len(),
                mesh.n_elements(),
                fine.n_elements(),
                fine.n_vertices(),
                fine.max_shape_ratio()
            );
            std::fs::write(
                cfg.output_dir.join(format!("mesh_round_{round:02}.txt")),
                fine.debug_dump(),
            )?;
            mesh = fine;
        }
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn cmd_check() -> ExitCode {
    let checks: Vec<(&str, fn() -> Result<(), String>)> = vec![
        ("mesh conformity under random bisection", check_mesh_conformity),
        ("lumped quadrature partition of unity", check_partition_of_unity),
        ("energy hand values", check_energy_values),
        ("gradient oracle smoke test", check_gradient_oracle),
        ("dorfler marking", check_dorfler),
        ("constant state has zero estimator", check_zero_estimator),
        ("zero-load driver is a fixed point", check_zero_load_driver),
    ];
    let mut failed = 0;
    for (name, f) in checks {
        match f() {
            Ok(()) => println!("CHECK {name}: PASS"),
            Err(msg) => {
                failed += 1;
                println!("CHECK {name}: FAIL ({msg})");
            }
        }
    }
    if failed == 0 {
        println!("all checks passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} check(s) failed");
        ExitCode::from(2)
    }
}

fn check_mesh_conformity() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mesh = Mesh::build_slit_square(4, Some(limitfrac::Slit { x: 0.5, depth: 0.5 }))
        .map_err(|e| e.to_string())?;
    for _ in 0..6 {
        let marked: Vec<usize> = (0..mesh.n_elements()).filter(|_| rng.gen_bool(0.3)).collect();
        mesh = mesh.bisect(&marked).map_err(|e| e.to_string())?;
        mesh.check_conformity().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn check_partition_of_unity() -> Result<(), String> {
    let mesh = Mesh::build_slit_square(8, Some(limitfrac::Slit { x: 0.5, depth: 0.5 }))
        .map_err(|e| e.to_string())?;
    let ones = ScalarField::constant(&mesh, 1.0);
    let total = limitfrac::lumped_integral(&ones, &mesh).map_err(|e| e.to_string())?;
    if (total - 1.0).abs() > 1e-13 {
        return Err(format!("lumped integral of 1 is {total}"));
    }
    Ok(())
}

fn check_energy_values() -> Result<(), String> {
    let mesh = Mesh::build_slit_square(2, None).map_err(|e| e.to_string())?;
    let p = limitfrac::ModelParams::new(1.0, 1.0, 1e-6, 0.02, 1.0).map_err(|e| e.to_string())?;
    let u = ScalarField::interpolate(&mesh, |x| x[0]);
    let v = ScalarField::constant(&mesh, 1.0);
    let e = limitfrac::energy(&u, &v, &mesh, &p).map_err(|e| e.to_string())?;
    if (e.bulk - 0.25).abs() > 1e-13 {
        return Err(format!("bulk {} != 0.25", e.bulk));
    }
    Ok(())
}

fn check_gradient_oracle() -> Result<(), String> {
    let mesh = Mesh::build_slit_square(2, None).map_err(|e| e.to_string())?;
    let p = limitfrac::ModelParams::new(1.0, 1.0, 1e-4, 0.02, 1.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rand_field = |lo: f64, hi: f64| ScalarField {
        mesh_generation: mesh.generation,
        values: (0..mesh.n_vertices()).map(|_| rng.gen_range(lo..hi)).collect(),
    };
    let u = rand_field(-0.5, 0.5);
    let v = rand_field(0.2, 0.8);
    let psi = rand_field(-0.5, 0.5);
    let phi = rand_field(-0.1, 0.1);
    let d = limitfrac::model::directional_derivative(&u, &v, &psi, &phi, &mesh, &p)
        .map_err(|e| e.to_string())?;
    let h = 1e-5;
    let shift = |base: &ScalarField, dir: &ScalarField, s: f64| ScalarField {
        mesh_generation: base.mesh_generation,
        values: base.values.iter().zip(&dir.values).map(|(b, d)| b + s * d).collect(),
    };
    let ep = limitfrac::model::energy_continuous(&shift(&u, &psi, h), &shift(&v, &phi, h), &mesh, &p)
        .map_err(|e| e.to_string())?;
    let em = limitfrac::model::energy_continuous(&shift(&u, &psi, -h), &shift(&v, &phi, -h), &mesh, &p)
        .map_err(|e| e.to_string())?;
    let fd = (ep - em) / (2.0 * h);
    if (fd - d).abs() > 1e-4 * d.abs().max(1e-3) {
        return Err(format!("finite difference {fd} vs derivative {d}"));
    }
    Ok(())
}

fn check_dorfler() -> Result<(), String> {
    let marked = dorfler_mark_wrap(&[4.0, 3.0, 2.0, 1.0], 0.5);
    if marked != vec![0, 1] {
        return Err(format!("marked {marked:?}"));
    }
    Ok(())
}

fn dorfler_mark_wrap(eta_sq: &[f64], theta: f64) -> Vec<usize> {
    limitfrac::dorfler_mark_sq(eta_sq, theta)
}

fn check_zero_estimator() -> Result<(), String> {
    let mesh = Mesh::build_slit_square(4, Some(limitfrac::Slit { x: 0.5, depth: 0.5 }))
        .map_err(|e| e.to_string())?;
    let p = limitfrac::ModelParams::new(1.0, 1.0, 1e-6, 0.02, 1.0).map_err(|e| e.to_string())?;
    let u = ScalarField::constant(&mesh, 0.0);
    let v = ScalarField::constant(&mesh, 1.0);
    let ind = assemble_indicators(&u, &v, &mesh, &p).map_err(|e| e.to_string())?;
    if ind.global != 0.0 {
        return Err(format!("global {} != 0", ind.global));
    }
    Ok(())
}

fn check_zero_load_driver() -> Result<(), String> {
    let cfg = Config::default();
    let p = cfg.model_params().map_err(|e| e.to_string())?;
    let mesh = Mesh::build_slit_square(4, Some(limitfrac::Slit { x: 0.5, depth: 0.5 }))
        .map_err(|e| e.to_string())?;
    let u0 = ScalarField::constant(&mesh, 0.0);
    let v0 = ScalarField::constant(&mesh, 1.0);
    let bc = |_: &Mesh| limitfrac::ConstraintSet::default();
    let ctx = DriverCtx { p: &p, solver: &cfg.solver, adapt: &cfg.adapt, bc: &bc };
    let sol = limitfrac::adapt::algorithm_i_step(&mesh, &u0, &v0, &BTreeSet::new(), &ctx)
        .map_err(|e| e.to_string())?;
    if sol.mesh.n_elements() != mesh.n_elements() || sol.indicators.global != 0.0 {
        return Err("zero load refined or left a residual".into());
    }
    let _ = dorfler_mark(&sol.indicators, 0.5);
    Ok(())
}
