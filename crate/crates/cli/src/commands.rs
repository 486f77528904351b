//! `validate`, `run` and `converge`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use relaxbench::builder::{decouple, demo, DecouplingTransform, InitialProfile, RawSystem};
use relaxbench::diagnostics::{convergence_study, StudySetup};
use relaxbench::hypersolver::{self, FluxScheme, SolverOptions, SourceSolve, Stepper};
use relaxbench::io::{field_csv, fmt_num, snapshot_csv};
use relaxbench::parasolver::{run_reference, ReferenceOptions};
use relaxbench::validator::{validate_all, SampleSet, StateBox, ValidationReport};
use relaxbench::{Coefficient, FieldState, ParabolicTarget, RelaxationSystem, SpatialGrid};

use crate::config::{Config, FluxName, SourceSolveName, SystemKind};

/// Why a command did not succeed, mapped onto the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    /// A check failed or the ladder did not converge monotonically.
    Check(String),
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Check(m) => write!(f, "check failed: {m}"),
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

fn runtime(e: relaxbench::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn config_err(e: relaxbench::Error) -> Failure {
    Failure::Config(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

pub struct CommandOptions {
    pub out: PathBuf,
    pub allow_invalid: bool,
}

/// Everything resolved from a config before any command runs.
pub struct Setup {
    pub system: RelaxationSystem,
    pub target: Option<ParabolicTarget>,
    pub state_box: StateBox,
    pub grid: SpatialGrid,
    pub initial: Vec<Vec<f64>>,
    pub solver: SolverOptions,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, Failure> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Failure::Config(format!(
            "system.{what} must be a nonempty square matrix"
        )));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

fn demo_dim(name: &str) -> usize {
    if name.ends_with("2d") {
        2
    } else {
        1
    }
}

pub fn build(config: &Config) -> Result<Setup, Failure> {
    let sys_cfg = &config.system;
    let inferred = match sys_cfg.kind {
        SystemKind::Demo => sys_cfg.name.as_deref().map(demo_dim).unwrap_or(1),
        SystemKind::Linear => sys_cfg.a.as_ref().map(Vec::len).unwrap_or(1),
    };
    let dim = config.grid.dim.unwrap_or(inferred);
    let grid = SpatialGrid::new(&vec![config.grid.n; dim], &vec![config.grid.period; dim]).map_err(config_err)?;

    let (system, target, state_box, profile) = match sys_cfg.kind {
        SystemKind::Demo => {
            let name = sys_cfg
                .name
                .as_deref()
                .ok_or_else(|| Failure::Config("missing field `system.name` for a demo system".into()))?;
            if sys_cfg.conserved.is_some()
                || sys_cfg.a.is_some()
                || sys_cfg.source.is_some()
                || sys_cfg.transform.is_some()
            {
                return Err(Failure::Config("demo systems take only `system.name`".into()));
            }
            let d = demo(name, &grid).map_err(config_err)?;
            (d.system, d.target, d.state_box, d.initial)
        }
        SystemKind::Linear => {
            let k = sys_cfg
                .conserved
                .ok_or_else(|| Failure::Config("missing field `system.conserved`".into()))?;
            let a = sys_cfg
                .a
                .as_ref()
                .ok_or_else(|| Failure::Config("missing field `system.a`".into()))?;
            let c = matrix(
                sys_cfg
                    .source
                    .as_ref()
                    .ok_or_else(|| Failure::Config("missing field `system.source`".into()))?,
                "source",
            )?;
            let coeffs = a
                .iter()
                .map(|m| matrix(m, "a").map(Coefficient::Constant))
                .collect::<Result<Vec<_>, _>>()?;
            let raw = RawSystem::linear(coeffs, c).map_err(config_err)?;
            let transform = match &sys_cfg.transform {
                Some(p) => DecouplingTransform::new(matrix(p, "transform")?, k),
                None => DecouplingTransform::identity(raw.n, k),
            }
            .map_err(config_err)?;
            let sys = decouple(&raw, &transform, &grid.subsample(8))
                .map_err(config_err)?
                .with_name(sys_cfg.name.clone().unwrap_or_else(|| "linear".into()));
            let profile = InitialProfile {
                mean: vec![0.0; k],
                amplitude: vec![1.0; k],
                modes: vec![1.0; dim],
            };
            (sys, None, StateBox::symmetric(k, 1.0).map_err(config_err)?, profile)
        }
    };
    let profile = match &config.experiment.initial {
        Some(init) => InitialProfile {
            mean: init.mean.clone(),
            amplitude: init.amplitude.clone(),
            modes: init.modes.clone(),
        },
        None => profile,
    };
    if profile.mean.len() != system.k() {
        return Err(Failure::Config(format!(
            "experiment.initial has {} components, the system has {}",
            profile.mean.len(),
            system.k()
        )));
    }
    let initial = profile.sample(&grid).map_err(config_err)?;
    let solver = solver_options(config, &system)?;
    Ok(Setup {
        system,
        target,
        state_box,
        grid,
        initial,
        solver,
    })
}

fn solver_options(config: &Config, sys: &RelaxationSystem) -> Result<SolverOptions, Failure> {
    let s = &config.solver;
    let defaults = SolverOptions::default();
    let flux = match s.flux {
        Some(FluxName::Rusanov) => FluxScheme::Rusanov,
        Some(FluxName::Upwind) => FluxScheme::Upwind,
        Some(FluxName::Spectral) => FluxScheme::Spectral,
        None if sys.is_multiplier() => FluxScheme::Spectral,
        None => FluxScheme::Rusanov,
    };
    let source_solve = match s.source_solve {
        Some(SourceSolveName::LinearExact) => SourceSolve::LinearExact,
        Some(SourceSolveName::Newton) => SourceSolve::Newton,
        None if sys.source().linear => SourceSolve::LinearExact,
        None => SourceSolve::Newton,
    };
    let opts = SolverOptions {
        cfl: s.cfl.unwrap_or(defaults.cfl),
        flux,
        source_solve,
        newton_tol: s.newton_tol.unwrap_or(defaults.newton_tol),
        newton_max_iter: s.newton_max_iter.unwrap_or(defaults.newton_max_iter),
        snapshot_interval: s.snapshot_interval,
        positivity_floor: s.positivity_floor.unwrap_or(defaults.positivity_floor),
    };
    opts.validate().map_err(config_err)?;
    Ok(opts)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn report(setup: &Setup) -> Result<ValidationReport, Failure> {
    let samples = SampleSet::for_grid(&setup.grid, setup.state_box.clone()).map_err(runtime)?;
    validate_all(&setup.system, setup.target.as_ref(), None, &samples).map_err(runtime)
}

/// Writes `report.csv` and fails on a failing check unless `allow_invalid`.
fn validated(setup: &Setup, opts: &CommandOptions, allow_invalid: bool) -> Result<(), Failure> {
    let rep = report(setup)?;
    write(&opts.out.join("report.csv"), &rep.to_csv())?;
    if rep.passed() || allow_invalid {
        Ok(())
    } else {
        let names: Vec<&str> = rep.failing().iter().map(|k| k.name()).collect();
        Err(Failure::Check(format!(
            "failing checks: {} (pass --allow-invalid to run anyway)",
            names.join(", ")
        )))
    }
}

pub fn validate(config: &Config, opts: &CommandOptions) -> Result<String, Failure> {
    let setup = build(config)?;
    validated(&setup, opts, false)?;
    Ok(format!("all checks passed for `{}`", setup.system.name()))
}

fn check_positivity(setup: &Setup) -> Result<(), Failure> {
    if !setup.system.positive_conserved() {
        return Ok(());
    }
    for (c, comp) in setup.initial.iter().enumerate() {
        if let Some(cell) = comp.iter().position(|&v| !(v > 0.0)) {
            return Err(Failure::Config(format!(
                "`{}` needs a positive conserved density, component {} is {} at x={:?}",
                setup.system.name(),
                c + 1,
                comp[cell],
                setup.grid.point(cell)
            )));
        }
    }
    Ok(())
}

fn initial_state(setup: &Setup, eps: f64, well_prepared: bool) -> Result<FieldState, Failure> {
    if well_prepared {
        hypersolver::well_prepared(&setup.system, &setup.grid, setup.initial.clone(), eps).map_err(runtime)
    } else {
        FieldState::new(
            setup.initial.clone(),
            vec![vec![0.0; setup.grid.len()]; setup.system.m()],
            0.0,
            eps,
            &setup.grid,
        )
        .map_err(runtime)
    }
}

fn snapshot_index(times: &[f64]) -> String {
    let mut out = String::from("index,t\n");
    for (i, t) in times.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", fmt_num(*t)));
    }
    out
}

pub fn run(config: &Config, opts: &CommandOptions) -> Result<String, Failure> {
    let setup = build(config)?;
    check_positivity(&setup)?;
    validated(&setup, opts, opts.allow_invalid)?;
    let exp = &config.experiment;
    let init = initial_state(&setup, exp.epsilon, exp.well_prepared)?;
    let traj = hypersolver::run(&setup.system, &setup.grid, &init, exp.t_final, &setup.solver).map_err(runtime)?;
    for (i, snap) in traj.snapshots.iter().enumerate() {
        write(
            &opts.out.join("snapshots").join(format!("snapshot_{i:04}.csv")),
            &snapshot_csv(&setup.grid, snap),
        )?;
    }
    write(
        &opts.out.join("snapshots").join("index.csv"),
        &snapshot_index(&traj.times()),
    )?;
    write(&opts.out.join("steps.csv"), &traj.steps_csv())?;
    let mut summary = format!(
        "`{}` integrated to t={} in {} steps ({} snapshots)",
        setup.system.name(),
        traj.final_state().t,
        traj.steps.len() - 1,
        traj.snapshots.len()
    );
    if traj.clamp_events > 0 {
        summary.push_str(&format!(", {} positivity clamps", traj.clamp_events));
    }
    if exp.reference {
        let target = setup
            .target
            .as_ref()
            .ok_or_else(|| Failure::Config("experiment.reference needs a system with a parabolic limit".into()))?;
        let dt = match exp.reference_dt {
            Some(dt) => dt,
            None => {
                let stepper = Stepper::new(&setup.system, &setup.grid, exp.epsilon, &setup.solver).map_err(runtime)?;
                stepper.max_dt().min(exp.t_final.max(f64::MIN_POSITIVE)) / 4.0
            }
        };
        let ropts = ReferenceOptions::new(dt).with_snapshot_interval(setup.solver.snapshot_interval);
        let reference = run_reference(target, &setup.initial, &setup.grid, exp.t_final, &ropts).map_err(runtime)?;
        for (i, snap) in reference.snapshots.iter().enumerate() {
            write(
                &opts.out.join("reference").join(format!("snapshot_{i:04}.csv")),
                &field_csv(&setup.grid, &snap.fields),
            )?;
        }
        let times: Vec<f64> = reference.snapshots.iter().map(|s| s.t).collect();
        write(&opts.out.join("reference").join("index.csv"), &snapshot_index(&times))?;
        summary.push_str(", reference written");
    }
    Ok(summary)
}

pub fn converge(config: &Config, opts: &CommandOptions) -> Result<String, Failure> {
    let setup = build(config)?;
    let exp = &config.experiment;
    let epsilons = exp
        .epsilons
        .clone()
        .ok_or_else(|| Failure::Config("missing field `experiment.epsilons`".into()))?;
    if epsilons.len() < 3 || epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Failure::Config(format!(
            "experiment.epsilons must hold at least 3 strictly decreasing positive values, got {epsilons:?}"
        )));
    }
    check_positivity(&setup)?;
    validated(&setup, opts, opts.allow_invalid)?;
    let study = StudySetup {
        system: setup.system.clone(),
        target: setup.target.clone(),
        grid: setup.grid.clone(),
        initial: setup.initial.clone(),
        t_final: exp.t_final,
        solver: setup.solver.clone(),
        well_prepared: exp.well_prepared,
        reference_dt: exp.reference_dt,
    };
    let table = convergence_study(&study, &epsilons).map_err(runtime)?;
    write(&opts.out.join("convergence.csv"), &table.to_csv())?;
    if table.err_i_decreasing() {
        Ok(format!("errI decreases over {} values of epsilon", table.rows.len()))
    } else {
        Err(Failure::Check("errI is not strictly decreasing down the ladder".into()))
    }
}
