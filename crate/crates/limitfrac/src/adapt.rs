//! Dörfler marking and the three adaptive driver loops.
//!
//! Algorithm I refines after a full alternating minimization; Algorithm II
//! gates refinement after each u-solve and each v-solve at `xi_rf / sqrt(2)`;
//! Algorithm III is II with a step-dependent vanishing tolerance and no
//! v-termination test.

use std::collections::BTreeSet;

use crate::estimator::{assemble_indicators, IndicatorSet};
use crate::fespace::{apply_constraints, transfer, transfer_node_set, ConstraintSet, ScalarField};
use crate::mesh::Mesh;
use crate::model::{self, ModelParams};
use crate::solver::{alternate_minimize, solve_u, solve_v, SolverConfig, SolverError};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Driver {
    I,
    II,
    III,
}

impl std::fmt::Display for Driver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Driver::I => write!(f, "I"),
            Driver::II => write!(f, "II"),
            Driver::III => write!(f, "III"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptConfig {
    /// Dörfler marking parameter, in (0, 1].
    pub theta: f64,
    /// Refinement tolerance on the global estimator.
    pub xi_rf: f64,
    /// Cap on refinement rounds within one time step.
    pub max_refine_rounds: usize,
    /// Geometric decay of the Algorithm-III tolerance schedule.
    pub xi_rf_decay: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig { theta: 0.5, xi_rf: 0.01, max_refine_rounds: 10, xi_rf_decay: 0.5 }
    }
}

impl AdaptConfig {
    /// Algorithm-III tolerance at outer step `k`.
    pub fn schedule(&self, k: usize) -> f64 {
        self.xi_rf * self.xi_rf_decay.powi(k as i32)
    }
}

/// Greedy Dörfler marking on squared indicator values: elements sorted by
/// descending value (ties by ascending index) are taken until the cumulative
/// sum reaches `theta` times the total. Returned in greedy order.
pub fn dorfler_mark_sq(eta_sq: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..eta_sq.len()).collect();
    order.sort_by(|&a, &b| eta_sq[b].total_cmp(&eta_sq[a]).then(a.cmp(&b)));
    // Total in the same summation order as the cumulative sum, so the
    // theta = 1 case terminates exactly at the last positive entry.
    let total: f64 = order.iter().map(|&i| eta_sq[i]).sum();
    let target = theta * total;
    let mut marked = Vec::new();
    let mut cum = 0.0;
    for &i in &order {
        if cum >= target {
            break;
        }
        cum += eta_sq[i];
        marked.push(i);
    }
    marked
}

/// Dörfler marking on an indicator set.
pub fn dorfler_mark(indicators: &IndicatorSet, theta: f64) -> Vec<usize> {
    let eta_sq: Vec<f64> = indicators.eta.iter().map(|&e| e * e).collect();
    dorfler_mark_sq(&eta_sq, theta)
}

/// Per-round log line of a driver.
#[derive(Clone, Copy, Debug)]
pub struct RoundLog {
    pub round: usize,
    pub elements: usize,
    pub dofs: usize,
    pub global: f64,
    pub bulk: f64,
    pub surface: f64,
    pub total: f64,
}

/// Converged state of one time step.
#[derive(Clone, Debug)]
pub struct StepSolution {
    pub mesh: Mesh,
    pub u: ScalarField,
    pub v: ScalarField,
    pub cr: BTreeSet<usize>,
    pub indicators: IndicatorSet,
    pub rounds: Vec<RoundLog>,
    /// Set when a cap (refinement rounds or alternating iterations) was hit
    /// before the configured tolerance was met.
    pub warning: bool,
    pub altmin_iterations: usize,
    /// Energy ledger of each alternating-minimization sequence run this step.
    pub energy_sequences: Vec<Vec<f64>>,
    /// Elements marked this step, and those among them touching `{v < 0.9}`.
    pub marked_total: usize,
    pub marked_in_zone: usize,
}

/// Per-time-step inputs shared by the drivers.
pub struct DriverCtx<'a> {
    pub p: &'a ModelParams,
    pub solver: &'a SolverConfig,
    pub adapt: &'a AdaptConfig,
    /// Builds the u Dirichlet data on a mesh at the current load time.
    pub bc: &'a dyn Fn(&Mesh) -> ConstraintSet,
}

struct StepState {
    mesh: Mesh,
    u: ScalarField,
    v: ScalarField,
    cr: BTreeSet<usize>,
    bc: ConstraintSet,
    marked_total: usize,
    marked_in_zone: usize,
}

impl StepState {
    fn new(mesh: &Mesh, u0: &ScalarField, v0: &ScalarField, cr0: &BTreeSet<usize>, ctx: &DriverCtx) -> Result<Self, Error> {
        let bc = (ctx.bc)(mesh);
        let v = apply_constraints(v0, &ConstraintSet::from_crack(cr0.clone()))?;
        Ok(StepState {
            mesh: mesh.clone(),
            u: u0.clone(),
            v,
            cr: cr0.clone(),
            bc,
            marked_total: 0,
            marked_in_zone: 0,
        })
    }

    fn crack_cs(&self) -> ConstraintSet {
        ConstraintSet::from_crack(self.cr.clone())
    }

    /// Dörfler-marks, bisects, transfers fields and bookkeeping.
    fn refine(&mut self, indicators: &IndicatorSet, ctx: &DriverCtx) -> Result<(), Error> {
        let marked = dorfler_mark(indicators, ctx.adapt.theta);
        if marked.is_empty() {
            return Ok(());
        }
        self.marked_total += marked.len();
        for &t in &marked {
            let tri = &self.mesh.triangles[t].v;
            let vmin = tri.iter().map(|&i| self.v.values[i]).fold(f64::INFINITY, f64::min);
            if vmin < 0.9 {
                self.marked_in_zone += 1;
            }
        }
        let fine = self.mesh.bisect(&marked)?;
        self.u = transfer(&self.u, &self.mesh, &fine)?;
        self.v = transfer(&self.v, &self.mesh, &fine)?;
        self.cr = transfer_node_set(&self.cr, &self.mesh, &fine);
        self.mesh = fine;
        self.bc = (ctx.bc)(&self.mesh);
        self.u = apply_constraints(&self.u, &self.bc)?;
        self.v = apply_constraints(&self.v, &self.crack_cs())?;
        Ok(())
    }

    fn round_log(&self, round: usize, global: f64, ctx: &DriverCtx) -> Result<RoundLog, Error> {
        let e = model::energy(&self.u, &self.v, &self.mesh, ctx.p)?;
        Ok(RoundLog {
            round,
            elements: self.mesh.n_elements(),
            dofs: self.mesh.n_vertices(),
            global,
            bulk: e.bulk,
            surface: e.surface,
            total: e.total,
        })
    }

    fn into_solution(
        self,
        indicators: IndicatorSet,
        rounds: Vec<RoundLog>,
        warning: bool,
        altmin_iterations: usize,
        energy_sequences: Vec<Vec<f64>>,
    ) -> StepSolution {
        StepSolution {
            mesh: self.mesh,
            u: self.u,
            v: self.v,
            cr: self.cr,
            indicators,
            rounds,
            warning,
            altmin_iterations,
            energy_sequences,
            marked_total: self.marked_total,
            marked_in_zone: self.marked_in_zone,
        }
    }
}

/// Algorithm I: full alternating minimization, then estimate; refine and
/// repeat the whole cycle while the global estimator exceeds `xi_rf`.
pub fn algorithm_i_step(
    mesh: &Mesh,
    u0: &ScalarField,
    v0: &ScalarField,
    cr0: &BTreeSet<usize>,
    ctx: &DriverCtx,
) -> Result<StepSolution, Error> {
    let mut st = StepState::new(mesh, u0, v0, cr0, ctx)?;
    let mut rounds = Vec::new();
    let mut sequences = Vec::new();
    let mut altmin_total = 0;
    let mut warning = false;
    let mut refines = 0;
    loop {
        let res = alternate_minimize(&st.mesh, &st.u, &st.v, &st.bc, &st.crack_cs(), ctx.p, ctx.solver);
        let res = match res {
            Ok(r) => r,
            Err(Error::Solver(SolverError::AltMinCap { last, .. })) if ctx.solver.accept_altmin_cap => {
                warning = true;
                *last
            }
            Err(e) => return Err(e),
        };
        st.u = res.u;
        st.v = res.v;
        altmin_total += res.iterations;
        sequences.push(res.energies);
        let ind = assemble_indicators(&st.u, &st.v, &st.mesh, ctx.p)?;
        rounds.push(st.round_log(rounds.len(), ind.global, ctx)?);
        if ind.global <= ctx.adapt.xi_rf {
            return Ok(st.into_solution(ind, rounds, warning, altmin_total, sequences));
        }
        if refines >= ctx.adapt.max_refine_rounds {
            return Ok(st.into_solution(ind, rounds, true, altmin_total, sequences));
        }
        st.refine(&ind, ctx)?;
        refines += 1;
    }
}

fn algorithm_ii_core(
    mesh: &Mesh,
    u0: &ScalarField,
    v0: &ScalarField,
    cr0: &BTreeSet<usize>,
    ctx: &DriverCtx,
    tolerance: f64,
    with_termination: bool,
) -> Result<StepSolution, Error> {
    let gate = tolerance / 2f64.sqrt();
    let mut st = StepState::new(mesh, u0, v0, cr0, ctx)?;
    let mut rounds = Vec::new();
    let mut energies = Vec::new();
    let mut warning = false;
    let mut refines = 0;
    let mut iterations = 0;
    let mut converged = false;
    for n in 1..=ctx.solver.altmin_max {
        iterations = n;
        let v_prev = st.v.clone();
        st.u = solve_u(&st.mesh, &st.v, &st.u, &st.bc, ctx.p, ctx.solver)?;
        let mut refined_this_iter = false;

        // Gate after the u-solve, with the estimate at (u_new, v_old).
        let ind = assemble_indicators(&st.u, &st.v, &st.mesh, ctx.p)?;
        if ind.global > gate {
            if refines < ctx.adapt.max_refine_rounds {
                st.refine(&ind, ctx)?;
                refines += 1;
                refined_this_iter = true;
            } else {
                warning = true;
            }
        }

        st.v = solve_v(&st.mesh, &st.u, &st.v, &st.crack_cs(), ctx.p, ctx.solver)?;

        // Gate after the v-solve, with the estimate at (u_new, v_new).
        let ind = assemble_indicators(&st.u, &st.v, &st.mesh, ctx.p)?;
        if ind.global > gate {
            if refines < ctx.adapt.max_refine_rounds {
                st.refine(&ind, ctx)?;
                refines += 1;
                refined_this_iter = true;
            } else {
                warning = true;
            }
        }

        energies.push(model::energy(&st.u, &st.v, &st.mesh, ctx.p)?.total);
        rounds.push(st.round_log(n - 1, ind.global, ctx)?);

        if with_termination && !refined_this_iter {
            // Both fields live on one unrefined mesh this iteration, so the
            // sup-norm test is well defined.
            let delta = st.v.sup_distance(&v_prev);
            if delta < ctx.solver.xi_vn {
                converged = true;
                break;
            }
        }
    }
    if with_termination && !converged {
        warning = true;
    }
    let ind = assemble_indicators(&st.u, &st.v, &st.mesh, ctx.p)?;
    Ok(st.into_solution(ind, rounds, warning, iterations, vec![energies]))
}

/// Algorithm II: refinement gates at `xi_rf / sqrt(2)` inside the
/// alternating loop, after each half-solve.
pub fn algorithm_ii_step(
    mesh: &Mesh,
    u0: &ScalarField,
    v0: &ScalarField,
    cr0: &BTreeSet<usize>,
    ctx: &DriverCtx,
) -> Result<StepSolution, Error> {
    algorithm_ii_core(mesh, u0, v0, cr0, ctx, ctx.adapt.xi_rf, true)
}

/// Algorithm III: Algorithm II with the step-dependent tolerance
/// `schedule(k)` and no v-termination test; the alternating count is
/// governed by `altmin_max`.
pub fn algorithm_iii_step(
    mesh: &Mesh,
    u0: &ScalarField,
    v0: &ScalarField,
    cr0: &BTreeSet<usize>,
    ctx: &DriverCtx,
    k: usize,
) -> Result<StepSolution, Error> {
    algorithm_ii_core(mesh, u0, v0, cr0, ctx, ctx.adapt.schedule(k), false)
}
