//! Acceptance suite: one PASS/FAIL line per criterion, then a single assertion.
//!
//! Run with `cargo test -p relaxbench-cli --test acceptance -- --nocapture`.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use relaxbench::builder::{carleman_limit, demo, triangular_target, InitialProfile};
use relaxbench::diagnostics::{
    convergence_study, energy, energy_inequality_check, space_time_error, ConvergenceTable, StudySetup,
};
use relaxbench::hypersolver::{run, well_prepared, FluxScheme, SolverOptions};
use relaxbench::parasolver::{exact_mode_oracle, run_reference, ReferenceOptions};
use relaxbench::validator::{
    check_petrowski, validate_all, CheckKind, ParabolicSource, ParabolicityMode, SampleSet, StateBox,
};
use relaxbench::{ParabolicTarget, SpatialGrid};

const LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
const LADDER_T: f64 = 0.1;
const LADDER_N: usize = 256;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn spectral(snapshot_interval: Option<f64>) -> SolverOptions {
    SolverOptions {
        flux: FluxScheme::Spectral,
        snapshot_interval,
        ..Default::default()
    }
}

fn ladder_setup(name: &str, well_prepared: bool) -> StudySetup {
    let grid = SpatialGrid::unit(1, LADDER_N).unwrap();
    let d = demo(name, &grid).unwrap();
    StudySetup {
        system: d.system,
        target: d.target,
        initial: d.initial.sample(&grid).unwrap(),
        grid,
        t_final: LADDER_T,
        solver: spectral(Some(0.01)),
        well_prepared,
        reference_dt: None,
    }
}

fn sine_amplitude(u: &[f64], grid: &SpatialGrid) -> f64 {
    let n = grid.len() as f64;
    2.0 * u
        .iter()
        .enumerate()
        .map(|(i, v)| v * (2.0 * PI * grid.point(i)[0]).sin())
        .sum::<f64>()
        / n
}

fn builder_fidelity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for (name, dim) in [("heat1d", 1), ("heat2d", 2), ("aniso2d", 2), ("quasilinear-bu2", 1)] {
        let grid = SpatialGrid::unit(dim, 64).unwrap();
        let d = demo(name, &grid).unwrap();
        let target = d.target.as_ref().unwrap();
        let states = d.state_box.states();
        let points = grid.subsample(8);
        for s in 0..64 {
            let x = &points[s % points.len()];
            let angle = PI * s as f64 / 64.0;
            let radius = 1.0 + (s % 7) as f64;
            let xi: Vec<f64> = if dim == 1 {
                vec![radius * if s % 2 == 0 { 1.0 } else { -1.0 }]
            } else {
                vec![radius * angle.cos(), radius * angle.sin()]
            };
            let u = &states[s % states.len()];
            let g = d.system.limit_generator(x, u, &xi).unwrap();
            let t = target.symbol(x, u, &xi);
            worst = worst.max((g - &t).norm() / t.norm());
            samples += 1;
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{samples} samples, worst relative gap {worst:.2e}"),
    )
}

fn validator_fixtures() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, dim) in [("carleman", 1), ("heat1d", 1), ("heat2d", 2)] {
        let grid = SpatialGrid::unit(dim, 64).unwrap();
        let d = demo(name, &grid).unwrap();
        let samples = SampleSet::for_grid(&grid, d.state_box.clone()).unwrap();
        let passed = validate_all(&d.system, d.target.as_ref(), None, &samples)
            .unwrap()
            .passed();
        ok &= passed;
        notes.push(format!("{name} {}", if passed { "clean" } else { "FAILS" }));
    }
    let grid = SpatialGrid::unit(1, 64).unwrap();
    let d = demo("null-limit", &grid).unwrap();
    let samples = SampleSet::for_grid(&grid, d.state_box.clone()).unwrap();
    let failing = validate_all(&d.system, None, None, &samples).unwrap().failing();
    ok &= failing == vec![CheckKind::ConservedBlock];
    notes.push(format!(
        "null-limit fails {:?}",
        failing.iter().map(|k| k.name()).collect::<Vec<_>>()
    ));

    let target = triangular_target();
    let samples = SampleSet::for_grid(&grid, StateBox::symmetric(2, 1.0).unwrap()).unwrap();
    let p = check_petrowski(ParabolicSource::Target(&target), &samples, ParabolicityMode::Petrowski);
    let s = check_petrowski(ParabolicSource::Target(&target), &samples, ParabolicityMode::Strong);
    ok &= p.passed && (p.margin - 1.0).abs() <= 1e-9 && !s.passed;
    notes.push(format!(
        "triangular alpha0 = {:.12}, strong passed = {}",
        p.margin, s.passed
    ));
    outcome(ok, notes.join("; "))
}

fn mode_oracle() -> Outcome {
    let grid = SpatialGrid::unit(1, 256).unwrap();
    let eps = 0.05;
    let d = demo("heat1d", &grid).unwrap();
    let init = well_prepared(&d.system, &grid, d.initial.sample(&grid).unwrap(), eps).unwrap();
    let oracle = exact_mode_oracle(&DMatrix::identity(1, 1), &[2.0 * PI], 0.1, Some(eps)).unwrap();
    let mode = oracle.relaxation.unwrap();
    let exact = mode.well_prepared_amplitude(1.0);
    let gap = |cfl: f64| {
        let opts = SolverOptions { cfl, ..spectral(None) };
        let traj = run(&d.system, &grid, &init, 0.1, &opts).unwrap();
        (sine_amplitude(&traj.final_state().u_i[0], &grid) - exact).abs()
    };
    let (g0, g1) = (gap(0.45), gap(0.225));
    let order = (g0 / g1).log2();
    let roots_ok = (mode.slow.re + 44.409).abs() < 1e-3 && (mode.fast.re + 355.59).abs() < 1e-2;
    outcome(
        g0 <= 2e-3 && order >= 0.9 && roots_ok,
        format!(
            "slow root {:.5}, oracle amplitude {exact:.6}, gap {g0:.2e}, halved-dt gap {g1:.2e}, order {order:.2}",
            mode.slow.re
        ),
    )
}

/// errI of the exact relaxation mode against the exact heat mode, sampled like the solver.
fn oracle_heat_errors(grid: &SpatialGrid, times: &[f64]) -> Vec<f64> {
    let weights = DMatrix::identity(1, 1);
    let profile = grid.sample(|x| (2.0 * PI * x[0]).sin());
    LADDER
        .iter()
        .map(|&eps| {
            let mut relax = Vec::new();
            let mut heat = Vec::new();
            for &t in times {
                let o = exact_mode_oracle(&weights, &[2.0 * PI], t, Some(eps)).unwrap();
                let a = o.relaxation.unwrap().well_prepared_amplitude(1.0);
                relax.push(vec![profile.iter().map(|p| a * p).collect::<Vec<f64>>()]);
                heat.push(vec![profile
                    .iter()
                    .map(|p| o.parabolic_factor * p)
                    .collect::<Vec<f64>>()]);
            }
            let a: Vec<&[Vec<f64>]> = relax.iter().map(Vec::as_slice).collect();
            let b: Vec<&[Vec<f64>]> = heat.iter().map(Vec::as_slice).collect();
            space_time_error(times, &a, &b, grid)
        })
        .collect()
}

fn orders(errors: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(LADDER.windows(2))
        .map(|(e, l)| (e[0] / e[1]).ln() / (l[0] / l[1]).ln())
        .collect()
}

fn ladder_convergence(heat: &ConvergenceTable, carleman: &ConvergenceTable) -> Outcome {
    let grid = SpatialGrid::unit(1, LADDER_N).unwrap();
    let times: Vec<f64> = (0..=10).map(|i| i as f64 * 0.01).collect();
    let predicted = orders(&oracle_heat_errors(&grid, &times));
    let observed: Vec<f64> = heat.rows.iter().filter_map(|r| r.observed_order).collect();
    let orders_ok =
        observed.len() == predicted.len() && observed.iter().zip(&predicted).all(|(o, p)| (o - p).abs() <= 0.25);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    let errs = |t: &ConvergenceTable| {
        t.rows
            .iter()
            .map(|r| format!("{:.2e}", r.err_i))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        heat.err_i_decreasing() && carleman.err_i_decreasing() && orders_ok,
        format!(
            "heat errI {} (orders {} vs oracle {}); carleman errI {}",
            errs(heat),
            fmt(&observed),
            fmt(&predicted),
            errs(carleman)
        ),
    )
}

fn initial_energy_bound(setup: &StudySetup) -> f64 {
    LADDER
        .iter()
        .map(|&eps| {
            let s = well_prepared(&setup.system, &setup.grid, setup.initial.clone(), eps).unwrap();
            energy(&s, &setup.grid).sqrt()
        })
        .fold(0.0, f64::max)
}

fn uniform_bounds(tables: &[(&str, &ConvergenceTable, f64)]) -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, table, root_e0) in tables {
        // energy law: every norm stays below the largest initial energy, with 5% slack
        let m = 1.05 * root_e0;
        let bounded = table.rows.iter().all(|r| r.sup_eps_u_ii <= m && r.sup_u_i <= m);
        let c: Vec<f64> = table.rows.iter().map(|r| r.sup_eps_u_ii / r.epsilon).collect();
        let (lo, hi) = c
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let stable = hi <= 1.2 * lo;
        ok &= bounded && stable;
        notes.push(format!(
            "{name}: M = {m:.3}, bounded = {bounded}, C in [{lo:.4}, {hi:.4}]"
        ));
    }
    outcome(ok, notes.join("; "))
}

fn energy_law() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, source_free) in [("heat1d", true), ("carleman", true), ("logistic1d", false)] {
        let grid = SpatialGrid::unit(1, 256).unwrap();
        let d = demo(name, &grid).unwrap();
        let samples = SampleSet::for_grid(&grid, d.state_box.clone()).unwrap();
        let report = validate_all(&d.system, d.target.as_ref(), None, &samples).unwrap();
        let lambda0 = report.entry(CheckKind::Dissipativity).unwrap().margin;
        let init = well_prepared(&d.system, &grid, d.initial.sample(&grid).unwrap(), 0.05).unwrap();
        let opts = SolverOptions {
            flux: FluxScheme::Rusanov,
            ..Default::default()
        };
        let traj = run(&d.system, &grid, &init, 0.1, &opts).unwrap();
        let check = energy_inequality_check(&traj, lambda0, source_free);
        let passed = if source_free {
            check.passed && check.fitted_c == 0.0 && check.worst_step_ratio <= 1.0 + 1e-10
        } else {
            check.passed && check.fitted_c <= 2.0
        };
        ok &= passed;
        notes.push(format!(
            "{name}: c = {:.3}, worst step ratio {:.12}, integrated {:.3e} <= {:.3e}",
            check.fitted_c, check.worst_step_ratio, check.integrated_lhs, check.integrated_rhs
        ));
    }
    outcome(ok, notes.join("; "))
}

fn limit_relation(heat: &ConvergenceTable, carleman: &ConvergenceTable) -> Outcome {
    let res = |t: &ConvergenceTable| {
        t.rows
            .iter()
            .map(|r| format!("{:.2e}", r.err_ii_weak))
            .collect::<Vec<_>>()
            .join(" ")
    };
    outcome(
        heat.residual_decreasing() && carleman.residual_decreasing(),
        format!("heat residual {}; carleman residual {}", res(heat), res(carleman)),
    )
}

fn null_relaxation() -> Outcome {
    let table = convergence_study(&ladder_setup("null-limit", false), &LADDER).unwrap();
    let last = table.rows.last().unwrap().final_u_i_norm;
    let ratio = last / table.initial_u_i_norm;
    let norms = table
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.final_u_i_norm))
        .collect::<Vec<_>>()
        .join(" ");
    outcome(
        table.final_norm_decreasing() && table.err_i_decreasing() && ratio < 0.1,
        format!("final |U^I| {norms}, last/initial = {ratio:.4}"),
    )
}

fn mass(fields: &[Vec<f64>], grid: &SpatialGrid) -> f64 {
    fields[0].iter().sum::<f64>() * grid.cell_volume()
}

fn conservation() -> Outcome {
    let grid = SpatialGrid::unit(1, 256).unwrap();
    let profile = InitialProfile::sine(1.0, 0.5, vec![1.0]);
    let mut worst: f64 = 0.0;
    for (name, flux) in [
        ("heat1d", FluxScheme::Rusanov),
        ("heat1d", FluxScheme::Spectral),
        ("sqrt-heat", FluxScheme::Spectral),
    ] {
        let d = demo(name, &grid).unwrap();
        let init = well_prepared(&d.system, &grid, profile.sample(&grid).unwrap(), 0.05).unwrap();
        let opts = SolverOptions {
            flux,
            ..Default::default()
        };
        let traj = run(&d.system, &grid, &init, 0.1, &opts).unwrap();
        let m0 = mass(&init.u_i, &grid);
        for snap in &traj.snapshots {
            worst = worst.max((mass(&snap.u_i, &grid) - m0).abs() / m0.abs());
        }
    }
    let mut worst_ref: f64 = 0.0;
    let quasi = demo("quasilinear-bu2", &grid).unwrap().target.unwrap();
    for target in [ParabolicTarget::QuasilinearDivergence(carleman_limit()), quasi] {
        let init = profile.sample(&grid).unwrap();
        let traj = run_reference(&target, &init, &grid, 0.1, &ReferenceOptions::new(1e-3)).unwrap();
        let m0 = mass(&init, &grid);
        worst_ref = worst_ref.max((mass(traj.final_fields(), &grid) - m0).abs() / m0);
    }
    outcome(
        worst <= 1e-12 && worst_ref <= 1e-12,
        format!("relaxation drift {worst:.2e}, reference drift {worst_ref:.2e}"),
    )
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let scratch = tempfile::TempDir::new().unwrap();
    let mut ok = true;
    let mut files = 0;
    for (command, config, extra) in [
        ("validate", "carleman_ladder.toml", &[][..]),
        ("run", "heat1d_run.toml", &[][..]),
        ("converge", "heat1d_ladder.toml", &[][..]),
        ("converge", "null_limit_ladder.toml", &["--allow-invalid"][..]),
    ] {
        let mut trees = Vec::new();
        for (i, threads) in [None, None, Some("4")].into_iter().enumerate() {
            let out = scratch.path().join(format!("{command}-{config}-{i}"));
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_relaxbench"));
            cmd.env_remove("RELAXBENCH_THREADS")
                .arg(command)
                .arg(configs.join(config))
                .arg("--out")
                .arg(&out)
                .args(extra);
            if let Some(n) = threads {
                cmd.args(["--threads", n]);
            }
            let status = cmd.output().unwrap().status;
            ok &= status.success();
            trees.push(tree(&out));
        }
        files += trees[0].len();
        ok &= trees[0] == trees[1] && trees[0] == trees[2];
    }
    outcome(ok, format!("{files} files compared across 3 invocations each"))
}

fn report(number: usize, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let passed = o.passed && elapsed <= limit;
    println!(
        "criterion {number:>2} [{}] {title}: {} ({:.2} s, limit {} s)",
        if passed { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    passed
}

#[test]
fn acceptance_criteria() {
    let secs = Duration::from_secs;
    let mut results = Vec::new();
    results.push(report(1, "builder fidelity", secs(1), builder_fidelity));
    results.push(report(2, "validator fixtures", secs(1), validator_fixtures));
    results.push(report(3, "mode-oracle equivalence", secs(10), mode_oracle));

    let start = Instant::now();
    let heat_setup = ladder_setup("heat1d", true);
    let carleman_setup = ladder_setup("carleman", true);
    let heat = convergence_study(&heat_setup, &LADDER).unwrap();
    let carleman = convergence_study(&carleman_setup, &LADDER).unwrap();
    let ladder_time = start.elapsed();
    results.push(report(4, "eps-ladder convergence", secs(120), || {
        let mut o = ladder_convergence(&heat, &carleman);
        o.passed &= ladder_time <= secs(120);
        o.detail
            .push_str(&format!(", ladders took {:.1} s", ladder_time.as_secs_f64()));
        o
    }));
    let bounds = [
        ("heat", &heat, initial_energy_bound(&heat_setup)),
        ("carleman", &carleman, initial_energy_bound(&carleman_setup)),
    ];
    results.push(report(5, "uniform bounds", secs(120), || uniform_bounds(&bounds)));
    results.push(report(6, "energy law", secs(30), energy_law));
    results.push(report(7, "limit relation", secs(120), || {
        limit_relation(&heat, &carleman)
    }));
    results.push(report(8, "null relaxation", secs(60), null_relaxation));
    results.push(report(9, "conservation", secs(10), conservation));
    results.push(report(10, "determinism", secs(120), determinism));

    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
