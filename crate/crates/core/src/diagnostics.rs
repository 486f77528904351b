//! Energy, limit-relation residual and eps-ladder convergence measurements.

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::hypersolver::{self, SolverOptions, Stepper, Trajectory};
use crate::io::fmt_num;
use crate::parasolver::{run_reference, ReferenceOptions};
use crate::spectral::Spectral;
use crate::system::{FieldState, ParabolicTarget, RelaxationSystem};

/// Multiplicative slack on energy comparisons.
pub const ENERGY_TOL: f64 = 1e-9;

/// `sum (eps^2 |U^II|^2 + |U^I|^2) * cell volume`.
pub fn energy(state: &FieldState, grid: &SpatialGrid) -> f64 {
    hypersolver::discrete_energy(state, grid.cell_volume())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyCheck {
    pub passed: bool,
    /// Smallest `c >= 0` with `E(t) <= E(0) e^{ct} (1 + 1e-9)` along the trajectory.
    pub fitted_c: f64,
    /// Largest `(lambda_0 / 4) int_0^t ||U^II||^2` minus its bound `E(0)(e^{ct} + 2)` over `t`.
    pub integrated_margin: f64,
    pub integrated_lhs: f64,
    pub integrated_rhs: f64,
    /// Largest `E(t_{n+1}) / E(t_n)` over steps.
    pub worst_step_ratio: f64,
}

/// Gronwall-type energy check. With `source_free` the fitted rate must vanish.
pub fn energy_inequality_check(traj: &Trajectory, lambda0: f64, source_free: bool) -> EnergyCheck {
    let steps = &traj.steps;
    let e0 = steps.first().map(|r| r.energy).unwrap_or(0.0);
    let t0 = steps.first().map(|r| r.t).unwrap_or(0.0);
    let mut c: f64 = 0.0;
    if e0 > 0.0 {
        for r in steps.iter().skip(1) {
            let t = r.t - t0;
            if t > 0.0 {
                c = c.max((r.energy / (e0 * (1.0 + ENERGY_TOL))).ln() / t);
            }
        }
    } else if steps.iter().any(|r| r.energy > 0.0) {
        c = f64::INFINITY;
    }
    let mut integral = 0.0;
    let mut margin = f64::NEG_INFINITY;
    let (mut lhs, mut rhs) = (0.0, 2.0 * e0);
    for r in steps.iter().skip(1) {
        integral += r.dt * r.relaxing_norm_sq;
        lhs = 0.25 * lambda0 * integral;
        rhs = e0 * ((c * (r.t - t0)).exp() + 2.0);
        margin = margin.max(lhs - rhs);
    }
    let worst_step_ratio = steps
        .windows(2)
        .map(|w| {
            if w[0].energy == 0.0 {
                if w[1].energy == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                w[1].energy / w[0].energy
            }
        })
        .fold(1.0, f64::max);
    let integrated_ok = margin <= 0.0 || steps.len() < 2;
    let rate_ok = if source_free {
        c == 0.0 && worst_step_ratio <= 1.0 + 1e-10
    } else {
        c.is_finite()
    };
    EnergyCheck {
        passed: integrated_ok && rate_ok,
        fitted_c: c,
        integrated_margin: if steps.len() < 2 { 0.0 } else { margin },
        integrated_lhs: lhs,
        integrated_rhs: rhs,
        worst_step_ratio,
    }
}

/// Discrete `H^{-1}` norm `(prod h / N) sum |r^(kappa)|^2 / (1 + |kappa|^2)` summed over components.
pub fn h_minus_one_norm(fields: &[Vec<f64>], grid: &SpatialGrid) -> f64 {
    let spectral = Spectral::new(grid);
    let weight = grid.cell_volume() / grid.len() as f64;
    let mut total = 0.0;
    for f in fields {
        let spec = spectral.forward(f);
        for (idx, c) in spec.iter().enumerate() {
            let k2: f64 = grid.wavevector(idx, true).iter().map(|v| v * v).sum();
            total += c.norm_sqr() / (1.0 + k2);
        }
    }
    (total * weight).sqrt()
}

/// `H^{-1}` norm of `M21(x, D) U^I - Q_nu(x, U^I, 0) U^II - D^II(x, U^I, 0)`.
pub fn limit_residual(state: &FieldState, sys: &RelaxationSystem, grid: &SpatialGrid) -> Result<f64> {
    state.check_sizes(sys)?;
    state.validate(grid)?;
    let m = sys.m();
    let mut r = hypersolver::apply_m21(sys, grid, &state.u_i)?;
    let zero = DVector::zeros(m);
    for cell in 0..grid.len() {
        let x = grid.point(cell);
        let u = state.conserved_at(cell);
        let v = state.relaxing_at(cell);
        let mut sub = sys.stiff_jacobian(&x, &u, &zero)? * v;
        if let Some(d2) = sys.lower_ii() {
            sub += d2(&x, &u, &zero);
        }
        for (comp, val) in r.iter_mut().zip(sub.iter()) {
            comp[cell] -= val;
        }
    }
    Ok(h_minus_one_norm(&r, grid))
}

fn l2_norm(fields: &[Vec<f64>], grid: &SpatialGrid) -> f64 {
    (fields.iter().flatten().map(|v| v * v).sum::<f64>() * grid.cell_volume()).sqrt()
}

/// Everything a ladder run needs besides `eps`.
#[derive(Clone)]
pub struct StudySetup {
    pub system: RelaxationSystem,
    /// Parabolic limit; `None` compares against the zero solution.
    pub target: Option<ParabolicTarget>,
    pub grid: SpatialGrid,
    pub initial: Vec<Vec<f64>>,
    pub t_final: f64,
    pub solver: SolverOptions,
    pub well_prepared: bool,
    /// Reference step; defaults to a quarter of the smallest hyperbolic step.
    pub reference_dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub err_i: f64,
    pub err_ii_weak: f64,
    pub sup_eps_u_ii: f64,
    pub sup_u_i: f64,
    pub final_u_i_norm: f64,
    pub observed_order: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Norm of the initial conserved fields.
    pub initial_u_i_norm: f64,
}

impl ConvergenceTable {
    pub fn err_i_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].err_i < w[0].err_i)
    }

    pub fn residual_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].err_ii_weak < w[0].err_ii_weak)
    }

    pub fn final_norm_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].final_u_i_norm < w[0].final_u_i_norm)
    }

    /// `epsilon,errI,errII_weak,sup_eps_uII,observed_order`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,errI,errII_weak,sup_eps_uII,observed_order\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_num(r.epsilon),
                fmt_num(r.err_i),
                fmt_num(r.err_ii_weak),
                fmt_num(r.sup_eps_u_ii),
                r.observed_order.map(fmt_num).unwrap_or_default()
            );
        }
        out
    }
}

pub fn observed_order(err: (f64, f64), eps: (f64, f64)) -> f64 {
    (err.0 / err.1).ln() / (eps.0 / eps.1).ln()
}

/// Space-time `L^2` distance by the trapezoid rule over shared snapshot times.
pub fn space_time_error(times: &[f64], a: &[&[Vec<f64>]], b: &[&[Vec<f64>]], grid: &SpatialGrid) -> f64 {
    let sq: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(fa, fb)| {
            let diff: Vec<Vec<f64>> = fa
                .iter()
                .zip(fb.iter())
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
                .collect();
            l2_norm(&diff, grid).powi(2)
        })
        .collect();
    let mut total = 0.0;
    for i in 1..times.len() {
        total += 0.5 * (times[i] - times[i - 1]) * (sq[i] + sq[i - 1]);
    }
    total.sqrt()
}

fn initial_state(setup: &StudySetup, eps: f64) -> Result<FieldState> {
    if setup.well_prepared {
        hypersolver::well_prepared(&setup.system, &setup.grid, setup.initial.clone(), eps)
    } else {
        let m = setup.system.m();
        FieldState::new(
            setup.initial.clone(),
            vec![vec![0.0; setup.grid.len()]; m],
            0.0,
            eps,
            &setup.grid,
        )
    }
}

/// Runs the relaxation for every `eps` and compares with the parabolic reference.
pub fn convergence_study(setup: &StudySetup, epsilons: &[f64]) -> Result<ConvergenceTable> {
    if epsilons.len() < 3 {
        return Err(Error::Precondition(format!(
            "an eps ladder needs at least 3 values, got {}",
            epsilons.len()
        )));
    }
    if epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::Precondition("every eps must be positive".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Precondition(format!(
            "eps ladder must be strictly decreasing, got {epsilons:?}"
        )));
    }
    let runs: Vec<Result<Trajectory>> = epsilons
        .par_iter()
        .map(|&eps| {
            let init = initial_state(setup, eps)?;
            hypersolver::run(&setup.system, &setup.grid, &init, setup.t_final, &setup.solver)
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;

    let times = runs[0].times();
    let reference: Vec<Vec<Vec<f64>>> = match &setup.target {
        Some(target) => {
            let dt = match setup.reference_dt {
                Some(dt) => dt,
                None => {
                    let smallest = *epsilons.last().expect("nonempty ladder");
                    let stepper = Stepper::new(&setup.system, &setup.grid, smallest, &setup.solver)?;
                    let dt = stepper.max_dt().min(setup.t_final.max(f64::MIN_POSITIVE));
                    dt / 4.0
                }
            };
            let opts = ReferenceOptions::new(dt).with_snapshot_interval(setup.solver.snapshot_interval);
            let traj = run_reference(target, &setup.initial, &setup.grid, setup.t_final, &opts)?;
            traj.snapshots.into_iter().map(|s| s.fields).collect()
        }
        None => vec![vec![vec![0.0; setup.grid.len()]; setup.system.k()]; times.len()],
    };
    if reference.len() != times.len() {
        return Err(Error::Precondition(
            "reference and relaxation snapshots disagree".into(),
        ));
    }

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(runs.len());
    for (traj, &eps) in runs.iter().zip(epsilons) {
        let a: Vec<&[Vec<f64>]> = traj.snapshots.iter().map(|s| s.u_i.as_slice()).collect();
        let b: Vec<&[Vec<f64>]> = reference.iter().map(Vec::as_slice).collect();
        let err_i = space_time_error(&times, &a, &b, &setup.grid);
        let err_ii_weak = limit_residual(traj.final_state(), &setup.system, &setup.grid)?;
        let sup_eps_u_ii = traj
            .steps
            .iter()
            .map(|r| eps * r.relaxing_norm_sq.sqrt())
            .fold(0.0, f64::max);
        let sup_u_i = traj
            .steps
            .iter()
            .map(|r| (r.energy - eps * eps * r.relaxing_norm_sq).max(0.0).sqrt())
            .fold(0.0, f64::max);
        let observed = rows
            .last()
            .map(|prev: &ConvergenceRow| observed_order((prev.err_i, err_i), (prev.epsilon, eps)));
        rows.push(ConvergenceRow {
            epsilon: eps,
            err_i,
            err_ii_weak,
            sup_eps_u_ii,
            sup_u_i,
            final_u_i_norm: l2_norm(&traj.final_state().u_i, &setup.grid),
            observed_order: observed,
        });
    }
    Ok(ConvergenceTable {
        rows,
        initial_u_i_norm: l2_norm(&setup.initial, &setup.grid),
    })
}
