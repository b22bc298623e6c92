//! Quasi-static outer time loop: incremental boundary loading, crack-set
//! bookkeeping with irreversibility, the energy ledger, and per-step
//! orchestration of the chosen adaptive driver.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;

use crate::adapt::{algorithm_i_step, algorithm_ii_step, algorithm_iii_step, Driver, DriverCtx};
use crate::config::Config;
use crate::estimator::assemble_indicators;
use crate::fespace::{apply_constraints, ConstraintSet, ScalarField};
use crate::io::{write_energy_csv, write_vtk};
use crate::mesh::{EdgeClass, Mesh, SlitSide};
use crate::model;
use crate::Error;

/// Incremental anti-plane boundary loading.
#[derive(Clone, Copy, Debug)]
pub struct LoadSpec {
    /// Loading rate: the top boundary is driven to -c*t left of the split
    /// and +c*t right of it.
    pub c: f64,
    pub dt: f64,
    pub n_steps: usize,
    /// x-coordinate separating the two top Dirichlet groups.
    pub split_x: f64,
}

impl Default for LoadSpec {
    fn default() -> Self {
        LoadSpec { c: 1.0, dt: 0.01, n_steps: 240, split_x: 0.5 }
    }
}

/// Prescribed boundary value at time `t` for a node at `pos`, or `None` for
/// naturally loaded (Neumann) nodes. The slit-mouth duplicates sit exactly on
/// the split line and take the value of their own side.
pub fn load_f(t: f64, pos: [f64; 2], side: Option<SlitSide>, spec: &LoadSpec) -> Option<f64> {
    if pos[1] != 1.0 {
        return None;
    }
    if pos[0] < spec.split_x {
        Some(-spec.c * t)
    } else if pos[0] > spec.split_x {
        Some(spec.c * t)
    } else {
        match side {
            Some(SlitSide::Left) => Some(-spec.c * t),
            Some(SlitSide::Right) => Some(spec.c * t),
            None => None,
        }
    }
}

/// Dirichlet data at time `t`: endpoints of every Dirichlet-tagged edge.
pub fn dirichlet_for(mesh: &Mesh, t: f64, spec: &LoadSpec) -> ConstraintSet {
    let mut dirichlet = BTreeMap::new();
    for e in &mesh.edges {
        if e.class == EdgeClass::Dirichlet {
            for i in [e.v.0, e.v.1] {
                if let Some(value) = load_f(t, mesh.vertices[i], mesh.slit_side[i], spec) {
                    dirichlet.insert(i, value);
                }
            }
        }
    }
    ConstraintSet::from_dirichlet(dirichlet)
}

/// Nodes of edges whose endpoint values both lie at or below `xi_cr`; for P1
/// that is exactly the "v small on the whole closed edge" criterion.
pub fn update_cr(v: &ScalarField, mesh: &Mesh, xi_cr: f64) -> BTreeSet<usize> {
    let mut set = BTreeSet::new();
    for e in &mesh.edges {
        if v.values[e.v.0] <= xi_cr && v.values[e.v.1] <= xi_cr {
            set.insert(e.v.0);
            set.insert(e.v.1);
        }
    }
    set
}

/// One row of the energy ledger.
#[derive(Clone, Copy, Debug)]
pub struct EnergyRecord {
    pub step: usize,
    pub time: f64,
    pub bulk: f64,
    pub surface: f64,
    pub total: f64,
    pub dofs: usize,
    pub elements: usize,
    pub estimator: f64,
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub step: usize,
    pub time: f64,
    pub mesh: Mesh,
    pub u: ScalarField,
    pub v: ScalarField,
    pub cr_nodes: BTreeSet<usize>,
    pub energy_log: Vec<EnergyRecord>,
    pub warning: bool,
}

/// Per-step view handed to an observer after each completed time step.
pub struct StepObservation<'a> {
    pub step: usize,
    pub time: f64,
    pub mesh: &'a Mesh,
    pub u: &'a ScalarField,
    pub v: &'a ScalarField,
    pub cr_nodes: &'a BTreeSet<usize>,
    pub warning: bool,
    pub record: EnergyRecord,
    pub energy_sequences: &'a [Vec<f64>],
    pub marked_total: usize,
    pub marked_in_zone: usize,
}

fn snapshot(state_dir: &std::path::Path, name: &str, mesh: &Mesh, u: &ScalarField, v: &ScalarField, p: &model::ModelParams) -> Result<(), Error> {
    let ind = assemble_indicators(u, v, mesh, p)?;
    write_vtk(
        mesh,
        &[("u", &u.values), ("v", &v.values)],
        &[("eta", &ind.eta), ("eta_u", &ind.eta_u), ("eta_v", &ind.eta_v)],
        &state_dir.join(name),
    )?;
    Ok(())
}

/// Runs the configured quasi-static experiment, writing the run log, energy
/// CSV and VTK snapshots into the configured output directory. On a driver
/// error the partial energy log is flushed before the error is returned.
pub fn run_quasi_static(
    cfg: &Config,
    mut observer: Option<&mut dyn FnMut(&StepObservation)>,
) -> Result<SimState, Error> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let mut log = File::create(cfg.output_dir.join("run.log"))?;
    write!(log, "{}", cfg.echo())?;

    let p = cfg.model_params()?;
    let mesh0 = cfg.build_mesh()?;
    let mut state = SimState {
        step: 0,
        time: 0.0,
        u: ScalarField::constant(&mesh0, 0.0),
        v: ScalarField::constant(&mesh0, 1.0),
        mesh: mesh0,
        cr_nodes: BTreeSet::new(),
        energy_log: Vec::new(),
        warning: false,
    };

    let e0 = model::energy(&state.u, &state.v, &state.mesh, &p)?;
    let ind0 = assemble_indicators(&state.u, &state.v, &state.mesh, &p)?;
    state.energy_log.push(EnergyRecord {
        step: 0,
        time: 0.0,
        bulk: e0.bulk,
        surface: e0.surface,
        total: e0.total,
        dofs: state.mesh.n_vertices(),
        elements: state.mesh.n_elements(),
        estimator: ind0.global,
    });
    writeln!(log, "step 0 time 0 dofs {} elements {} estimator {:e}", state.mesh.n_vertices(), state.mesh.n_elements(), ind0.global)?;

    let flush_partial = |state: &SimState| {
        let _ = write_energy_csv(&state.energy_log, &cfg.output_dir.join("energy.csv"));
    };

    for j in 1..=cfg.load.n_steps {
        let t = j as f64 * cfg.load.dt;
        let bc = |m: &Mesh| dirichlet_for(m, t, &cfg.load);
        let ctx = DriverCtx { p: &p, solver: &cfg.solver, adapt: &cfg.adapt, bc: &bc };
        let sol = match cfg.driver {
            Driver::I => algorithm_i_step(&state.mesh, &state.u, &state.v, &state.cr_nodes, &ctx),
            Driver::II => algorithm_ii_step(&state.mesh, &state.u, &state.v, &state.cr_nodes, &ctx),
            Driver::III => {
                algorithm_iii_step(&state.mesh, &state.u, &state.v, &state.cr_nodes, &ctx, j - 1)
            }
        };
        let sol = match sol {
            Ok(s) => s,
            Err(e) => {
                writeln!(log, "step {j}: driver failed: {e}")?;
                flush_partial(&state);
                return Err(e);
            }
        };

        state.mesh = sol.mesh;
        state.u = sol.u;
        state.warning |= sol.warning;

        // Crack irreversibility: grow the CR set and pin v to zero on it.
        let mut cr = sol.cr;
        cr.extend(update_cr(&sol.v, &state.mesh, cfg.xi_cr));
        state.v = apply_constraints(&sol.v, &ConstraintSet::from_crack(cr.clone()))?;
        state.cr_nodes = cr;
        state.step = j;
        state.time = t;

        let e = model::energy(&state.u, &state.v, &state.mesh, &p)?;
        let ind = assemble_indicators(&state.u, &state.v, &state.mesh, &p)?;
        let record = EnergyRecord {
            step: j,
            time: t,
            bulk: e.bulk,
            surface: e.surface,
            total: e.total,
            dofs: state.mesh.n_vertices(),
            elements: state.mesh.n_elements(),
            estimator: ind.global,
        };
        state.energy_log.push(record);
        for r in &sol.rounds {
            writeln!(
                log,
                "step {j} round {} elements {} dofs {} estimator {:e} energy {:e}",
                r.round, r.elements, r.dofs, r.global, r.total
            )?;
        }
        writeln!(
            log,
            "step {j} time {t} dofs {} elements {} estimator {:e} altmin {} cr {}{}",
            state.mesh.n_vertices(),
            state.mesh.n_elements(),
            ind.global,
            sol.altmin_iterations,
            state.cr_nodes.len(),
            if sol.warning { " WARNING" } else { "" }
        )?;

        if cfg.snapshot_every > 0 && j % cfg.snapshot_every == 0 {
            snapshot(&cfg.output_dir, &format!("snap_{j:04}.vtk"), &state.mesh, &state.u, &state.v, &p)?;
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(&StepObservation {
                step: j,
                time: t,
                mesh: &state.mesh,
                u: &state.u,
                v: &state.v,
                cr_nodes: &state.cr_nodes,
                warning: sol.warning,
                record,
                energy_sequences: &sol.energy_sequences,
                marked_total: sol.marked_total,
                marked_in_zone: sol.marked_in_zone,
            });
        }
    }

    write_energy_csv(&state.energy_log, &cfg.output_dir.join("energy.csv"))?;
    snapshot(&cfg.output_dir, "final.vtk", &state.mesh, &state.u, &state.v, &p)?;
    Ok(state)
}
