//! IMEX integration of the scaled relaxation system on a periodic grid.
//!
//! Each step performs an explicit transport update followed by an implicit solve of
//! the stiff relaxation source, so the step size is limited by the `O(1/eps)` wave
//! speeds only. Finite-difference fluxes (Rusanov, characteristic upwind) advance the
//! unscaled variables `Z = (U^I, eps U^II)` jointly. The spectral scheme advances the
//! conserved block first and feeds the updated `U^I` into the relaxing update, which
//! keeps the slow (parabolic) mode accurate for every `eps`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::io::fmt_num;
use crate::linalg;
use crate::spectral::Spectral;
use crate::system::{FieldState, RelaxationSystem, Transport};
use crate::validator::unit_directions;

/// Stability constant of the partitioned spectral update, `dt * omega_max <= 2`.
const SPECTRAL_STABILITY: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluxScheme {
    Rusanov,
    Upwind,
    Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceSolve {
    LinearExact,
    Newton,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub cfl: f64,
    pub flux: FluxScheme,
    pub source_solve: SourceSolve,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Time between stored snapshots; `None` keeps only the initial and final states.
    pub snapshot_interval: Option<f64>,
    pub positivity_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            cfl: 0.45,
            flux: FluxScheme::Rusanov,
            source_solve: SourceSolve::LinearExact,
            newton_tol: 1e-12,
            newton_max_iter: 25,
            snapshot_interval: None,
            positivity_floor: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Options(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::Options(
                "newton tolerance and iteration cap must be positive".into(),
            ));
        }
        if let Some(dt) = self.snapshot_interval {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::Options(format!("snapshot interval must be positive, got {dt}")));
            }
        }
        if !(self.positivity_floor > 0.0) {
            return Err(Error::Options("positivity floor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub dt: f64,
    pub energy: f64,
    /// Characteristic speed `s / eps` of the scaled system.
    pub max_speed: f64,
    /// Discrete `||U^II||^2` after the step.
    pub relaxing_norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub eps: f64,
    pub snapshots: Vec<FieldState>,
    /// One record per step, preceded by a `dt = 0` record for the initial state.
    pub steps: Vec<StepRecord>,
    /// Cells clamped to the positivity floor over the whole run.
    pub clamp_events: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &FieldState {
        self.snapshots.last().expect("trajectory has an initial snapshot")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// `t,dt,energy,max_speed` rows.
    pub fn steps_csv(&self) -> String {
        let mut out = String::from("t,dt,energy,max_speed\n");
        for r in &self.steps {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_num(r.t),
                fmt_num(r.dt),
                fmt_num(r.energy),
                fmt_num(r.max_speed)
            );
        }
        out
    }
}

/// Largest spectral radius of `i * sigma(x, xi)` over grid samples and unit directions.
pub fn max_wave_speed(sys: &RelaxationSystem, grid: &SpatialGrid) -> Result<f64> {
    if grid.dim() != sys.d() {
        return Err(Error::Dimension(format!(
            "grid has d={}, system has d={}",
            grid.dim(),
            sys.d()
        )));
    }
    let mut directions = unit_directions(sys.d(), 64);
    if sys.d() == 2 {
        directions.extend([vec![1.0, 0.0], vec![0.0, 1.0]]);
    }
    let points = if sys.constant_coefficients() {
        vec![vec![0.0; sys.d()]]
    } else {
        grid.points()
    };
    let mut speed: f64 = 0.0;
    for x in &points {
        for xi in &directions {
            let sigma = sys.principal_symbol(x, xi)?;
            let isigma = sigma.map(|c| c * Complex64::i());
            let vals = linalg::eigenvalues_complex(&isigma)
                .ok_or_else(|| Error::LinearSolve("eigenvalues of the transport symbol".into()))?;
            speed = speed.max(linalg::spectral_radius(&vals));
        }
    }
    Ok(speed)
}

/// Applies `M21(x, D)` to conserved fields: `sum_j M21_j(x) d_j U` or the multiplier `B(D) U`.
pub fn apply_m21(sys: &RelaxationSystem, grid: &SpatialGrid, u_i: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (k, m) = (sys.k(), sys.m());
    if u_i.len() != k || u_i.iter().any(|c| c.len() != grid.len()) {
        return Err(Error::Dimension(
            "conserved fields do not match the system and grid".into(),
        ));
    }
    let spectral = Spectral::new(grid);
    match sys.transport() {
        Transport::Differential(t) => {
            let derivs: Vec<Vec<Vec<f64>>> = (0..sys.d())
                .map(|j| u_i.iter().map(|c| spectral.derivative(c, j)).collect())
                .collect();
            let mut out = vec![vec![0.0; grid.len()]; m];
            let constant: Vec<Option<DMatrix<f64>>> = t
                .m21
                .iter()
                .map(|c| c.is_constant().then(|| c.eval(&vec![0.0; sys.d()])))
                .collect();
            for cell in 0..grid.len() {
                let x = grid.point(cell);
                for j in 0..sys.d() {
                    let a = constant[j].clone().unwrap_or_else(|| t.m21[j].eval(&x));
                    for r in 0..m {
                        for c in 0..k {
                            out[r][cell] += a[(r, c)] * derivs[j][c][cell];
                        }
                    }
                }
            }
            Ok(out)
        }
        Transport::Multiplier(_) => {
            let table = multiplier_table(sys, grid)?;
            let spec: Vec<Vec<Complex64>> = u_i.iter().map(|c| spectral.forward(c)).collect();
            let mut out = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; m];
            for (idx, b) in table.iter().enumerate() {
                for r in 0..m {
                    for c in 0..k {
                        out[r][idx] += spec[c][idx] * b[(r, c)];
                    }
                }
            }
            Ok(out.into_iter().map(|s| spectral.inverse(s)).collect())
        }
    }
}

/// `B` on the Fourier modes of `grid`, from the stored table when it matches.
fn multiplier_table(sys: &RelaxationSystem, grid: &SpatialGrid) -> Result<Vec<DMatrix<f64>>> {
    let Transport::Multiplier(mult) = sys.transport() else {
        return Err(Error::Unsupported("not a multiplier system".into()));
    };
    if let Some((g, table)) = &mult.table {
        if g == grid {
            return Ok(table.as_ref().clone());
        }
    }
    Ok((0..grid.len())
        .map(|idx| (mult.symbol)(&grid.wavevector(idx, true)))
        .collect())
}

/// Relaxing fields on the equilibrium manifold, `U^II = Q_nu(x, U^I, 0)^{-1} (M21 U^I - D^II(U^I, 0))`.
pub fn well_prepared(sys: &RelaxationSystem, grid: &SpatialGrid, u_i: Vec<Vec<f64>>, eps: f64) -> Result<FieldState> {
    let rhs = apply_m21(sys, grid, &u_i)?;
    let m = sys.m();
    let zero = DVector::zeros(m);
    let mut u_ii = vec![vec![0.0; grid.len()]; m];
    for cell in 0..grid.len() {
        let x = grid.point(cell);
        let u = DVector::from_iterator(sys.k(), u_i.iter().map(|c| c[cell]));
        let mut r = DVector::from_iterator(m, rhs.iter().map(|c| c[cell]));
        if let Some(d2) = sys.lower_ii() {
            r -= d2(&x, &u, &zero);
        }
        let v = sys.equilibrium_inverse(&x, &u)? * r;
        for (comp, val) in u_ii.iter_mut().zip(v.iter()) {
            comp[cell] = *val;
        }
    }
    FieldState::new(u_i, u_ii, 0.0, eps, grid)
}

/// Discrete `sum (eps^2 |U^II|^2 + |U^I|^2) * cell volume`.
pub fn discrete_energy(state: &FieldState, cell_volume: f64) -> f64 {
    let eps2 = state.eps * state.eps;
    let sq = |comps: &[Vec<f64>]| comps.iter().flatten().map(|v| v * v).sum::<f64>();
    (sq(&state.u_i) + eps2 * sq(&state.u_ii)) * cell_volume
}

fn relaxing_norm_sq(state: &FieldState, cell_volume: f64) -> f64 {
    state.u_ii.iter().flatten().map(|v| v * v).sum::<f64>() * cell_volume
}

enum Scheme {
    /// Per-axis coefficient (one entry if constant, else one per cell) and dissipation matrix.
    Finite {
        axes: Vec<Vec<DMatrix<f64>>>,
        dissipation: Vec<DMatrix<f64>>,
    },
    SpectralConstant {
        spectral: Spectral,
        s12: Vec<DMatrix<Complex64>>,
        s21: Vec<DMatrix<Complex64>>,
        /// Full per-mode generator, set when the diagonal blocks are nonzero.
        generator: Option<Vec<DMatrix<Complex64>>>,
        exp_cache: Option<(f64, Vec<DMatrix<Complex64>>)>,
    },
    SpectralVariable {
        spectral: Spectral,
        m12: Vec<Vec<DMatrix<f64>>>,
        m21: Vec<Vec<DMatrix<f64>>>,
    },
}

/// Precomputed single-step integrator for one `(system, grid, eps)`.
pub struct Stepper {
    sys: RelaxationSystem,
    grid: SpatialGrid,
    eps: f64,
    opts: SolverOptions,
    speed: f64,
    /// Largest transport frequency times `eps` for the spectral stability bound.
    omega: f64,
    points: Vec<Vec<f64>>,
    scheme: Scheme,
    clamp_events: usize,
}

fn per_cell_or_constant(
    constant: bool,
    grid: &SpatialGrid,
    f: impl Fn(&[f64]) -> Result<DMatrix<f64>>,
) -> Result<Vec<DMatrix<f64>>> {
    if constant {
        Ok(vec![f(&vec![0.0; grid.dim()])?])
    } else {
        grid.points().iter().map(|x| f(x)).collect()
    }
}

fn any_nonzero(blocks: &[DMatrix<Complex64>]) -> bool {
    blocks.iter().any(|b| b.iter().any(|c| c.norm_sqr() != 0.0))
}

/// Relaxation matrix `C` of a source `Q = C z` that is the same at every point and state.
fn constant_relaxation(sys: &RelaxationSystem, grid: &SpatialGrid) -> Result<DMatrix<f64>> {
    let unsupported =
        |what: &str| Error::Unsupported(format!("spectral scheme with diagonal transport blocks needs {what}"));
    if !sys.source().linear {
        return Err(unsupported("a linear relaxation source"));
    }
    if sys.lower_i().is_some() || sys.lower_ii().is_some() || sys.reaction().is_some() {
        return Err(unsupported("no lower-order terms"));
    }
    let (k, m) = (sys.k(), sys.m());
    let points = grid.points();
    let c0 = sys.stiff_jacobian(&points[0], &DVector::zeros(k), &DVector::zeros(m))?;
    let stride = (points.len() / 8).max(1);
    for x in points.iter().step_by(stride) {
        for level in [0.0, 1.0] {
            let c = sys.stiff_jacobian(x, &DVector::from_element(k, level), &DVector::zeros(m))?;
            if (&c - &c0).norm() > 1e-12 * c0.norm().max(1.0) {
                return Err(unsupported("a relaxation matrix independent of position and state"));
            }
        }
    }
    Ok(c0)
}

impl Stepper {
    pub fn new(sys: &RelaxationSystem, grid: &SpatialGrid, eps: f64, opts: &SolverOptions) -> Result<Self> {
        opts.validate()?;
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Precondition(format!("epsilon must be positive, got {eps}")));
        }
        if opts.source_solve == SourceSolve::LinearExact && !sys.source().linear {
            return Err(Error::Options(
                "linear-exact source solve needs a source linear in the relaxing variable".into(),
            ));
        }
        let speed = max_wave_speed(sys, grid)?;
        let (k, m) = (sys.k(), sys.m());
        let constant = sys.constant_coefficients();
        let scheme = match (opts.flux, sys.transport()) {
            (FluxScheme::Rusanov | FluxScheme::Upwind, Transport::Multiplier(_)) => {
                return Err(Error::Options(
                    "multiplier transport requires the spectral scheme".into(),
                ))
            }
            (FluxScheme::Rusanov | FluxScheme::Upwind, Transport::Differential(_)) => {
                let mut axes = Vec::with_capacity(sys.d());
                let mut dissipation = Vec::with_capacity(sys.d());
                for j in 0..sys.d() {
                    let a = per_cell_or_constant(constant, grid, |x| sys.axis_matrix(x, j))?;
                    let diss = if opts.flux == FluxScheme::Rusanov {
                        DMatrix::identity(sys.n(), sys.n()) * speed
                    } else {
                        if !constant {
                            return Err(Error::Unsupported(
                                "characteristic upwinding needs constant coefficients".into(),
                            ));
                        }
                        let a0 = &a[0];
                        if (a0 - a0.transpose()).norm() > 1e-12 * a0.norm().max(1.0) {
                            return Err(Error::Unsupported(
                                "characteristic upwinding needs symmetric coefficients".into(),
                            ));
                        }
                        let eig = nalgebra::SymmetricEigen::new(a0.clone());
                        let abs = eig.eigenvalues.map(f64::abs);
                        &eig.eigenvectors * DMatrix::from_diagonal(&abs) * eig.eigenvectors.transpose()
                    };
                    axes.push(a);
                    dissipation.push(diss);
                }
                Scheme::Finite { axes, dissipation }
            }
            (FluxScheme::Spectral, Transport::Multiplier(_)) => {
                let table = multiplier_table(sys, grid)?;
                let c = |b: &DMatrix<f64>| linalg::to_complex(b);
                Scheme::SpectralConstant {
                    spectral: Spectral::new(grid),
                    s12: table.iter().map(c).collect(),
                    s21: table.iter().map(|b| c(&-b)).collect(),
                    generator: None,
                    exp_cache: None,
                }
            }
            (FluxScheme::Spectral, Transport::Differential(_)) if constant => {
                let x0 = vec![0.0; sys.d()];
                let sym: Vec<DMatrix<Complex64>> = (0..grid.len())
                    .map(|idx| sys.principal_symbol(&x0, &grid.wavevector(idx, false)))
                    .collect::<Result<_>>()?;
                let block = |r0, nr, c0, nc| -> Vec<DMatrix<Complex64>> {
                    sym.iter().map(|s| s.view((r0, c0), (nr, nc)).clone_owned()).collect()
                };
                let diagonal = any_nonzero(&block(0, k, 0, k)) || any_nonzero(&block(k, m, k, m));
                let generator = if diagonal {
                    let c = constant_relaxation(sys, grid)?;
                    let src = linalg::to_complex(&c) / Complex64::new(eps * eps, 0.0);
                    let scale = |r0: usize, c0: usize| -> f64 {
                        match (r0 < k, c0 < k) {
                            (true, true) => 1.0 / eps,
                            (true, false) => 1.0,
                            (false, true) => 1.0 / (eps * eps),
                            (false, false) => 1.0 / eps,
                        }
                    };
                    // U-variable generator [[s11/eps, s12], [s21/eps^2, s22/eps + C/eps^2]]
                    Some(
                        sym.iter()
                            .map(|s| {
                                let mut g = DMatrix::from_fn(k + m, k + m, |r, c| s[(r, c)] * scale(r, c));
                                let mut br = g.view_mut((k, k), (m, m));
                                br += &src;
                                g
                            })
                            .collect(),
                    )
                } else {
                    None
                };
                Scheme::SpectralConstant {
                    spectral: Spectral::new(grid),
                    s12: block(0, k, k, m),
                    s21: block(k, m, 0, k),
                    generator,
                    exp_cache: None,
                }
            }
            (FluxScheme::Spectral, Transport::Differential(t)) => {
                if !t.m11.iter().chain(&t.m22).all(|c| c.is_zero()) {
                    return Err(Error::Unsupported(
                        "spectral scheme with variable diagonal transport blocks".into(),
                    ));
                }
                let eval = |blocks: &[crate::system::Coefficient]| -> Vec<Vec<DMatrix<f64>>> {
                    blocks
                        .iter()
                        .map(|c| grid.points().iter().map(|x| c.eval(x)).collect())
                        .collect()
                };
                Scheme::SpectralVariable {
                    spectral: Spectral::new(grid),
                    m12: eval(&t.m12),
                    m21: eval(&t.m21),
                }
            }
        };
        let omega = match &scheme {
            Scheme::SpectralConstant { s12, s21, .. } => s12
                .iter()
                .zip(s21)
                .map(|(a, b)| {
                    let prod = a * b;
                    linalg::eigenvalues_complex(&prod)
                        .map(|v| linalg::spectral_radius(&v).sqrt())
                        .unwrap_or(f64::INFINITY)
                })
                .fold(0.0, f64::max),
            Scheme::SpectralVariable { .. } => speed * grid.max_wavenumber(),
            Scheme::Finite { .. } => 0.0,
        };
        Ok(Self {
            sys: sys.clone(),
            grid: grid.clone(),
            eps,
            opts: opts.clone(),
            speed,
            omega,
            points: grid.points(),
            scheme,
            clamp_events: 0,
        })
    }

    pub fn wave_speed(&self) -> f64 {
        self.speed
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    /// Stability bound on `dt` for the configured scheme.
    pub fn stability_bound(&self) -> f64 {
        match self.scheme {
            Scheme::Finite { .. } => {
                if self.speed == 0.0 {
                    f64::INFINITY
                } else {
                    self.eps * self.grid.min_spacing() / (self.speed * self.grid.dim() as f64)
                }
            }
            _ => {
                if self.omega == 0.0 {
                    f64::INFINITY
                } else {
                    SPECTRAL_STABILITY * self.eps / self.omega
                }
            }
        }
    }

    /// `cfl * eps * h / s`, halved in two dimensions.
    pub fn max_dt(&self) -> f64 {
        if self.speed == 0.0 {
            return f64::INFINITY;
        }
        self.opts.cfl * self.eps * self.grid.min_spacing() / (self.speed * self.grid.dim() as f64)
    }

    pub fn step(&mut self, state: &FieldState, dt: f64) -> Result<FieldState> {
        state.check_sizes(&self.sys)?;
        if (state.eps - self.eps).abs() > 0.0 {
            return Err(Error::Precondition(format!(
                "state carries eps={}, stepper was built for eps={}",
                state.eps, self.eps
            )));
        }
        let bound = self.stability_bound();
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, bound });
        }
        let (mut u, v_star) = self.transport(state, dt);
        if self.sys.positive_conserved() {
            for comp in u.iter_mut() {
                for val in comp.iter_mut() {
                    if *val < self.opts.positivity_floor {
                        *val = self.opts.positivity_floor;
                        self.clamp_events += 1;
                    }
                }
            }
        }
        let (u, v) = if self.exact_linear() {
            (u, v_star)
        } else {
            self.source_update(&u, &v_star, dt)?
        };
        let t = state.t + dt;
        let next = FieldState {
            u_i: u,
            u_ii: v,
            t,
            eps: self.eps,
        };
        for comps in [&next.u_i, &next.u_ii] {
            for c in comps.iter() {
                if let Some(cell) = c.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Blowup { t, cell });
                }
            }
        }
        Ok(next)
    }

    fn transport(&mut self, state: &FieldState, dt: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let (k, m, eps) = (self.sys.k(), self.sys.m(), self.eps);
        let len = self.grid.len();
        match &mut self.scheme {
            Scheme::Finite { axes, dissipation } => {
                let n = k + m;
                // unscaled Z = (U^I, eps U^II), cell-major
                let mut z = vec![0.0; n * len];
                for cell in 0..len {
                    for c in 0..k {
                        z[cell * n + c] = state.u_i[c][cell];
                    }
                    for c in 0..m {
                        z[cell * n + k + c] = eps * state.u_ii[c][cell];
                    }
                }
                let grid = &self.grid;
                let (axes, dissipation) = (&*axes, &*dissipation);
                let znew: Vec<Vec<f64>> = (0..len)
                    .into_par_iter()
                    .map(|cell| {
                        let mut out: Vec<f64> = z[cell * n..(cell + 1) * n].to_vec();
                        for j in 0..grid.dim() {
                            let h = grid.spacing(j);
                            let (ip, im) = (grid.shift(cell, j, 1), grid.shift(cell, j, -1));
                            let a = if axes[j].len() == 1 {
                                &axes[j][0]
                            } else {
                                &axes[j][cell]
                            };
                            let diss = &dissipation[j];
                            let coef = dt / (eps * 2.0 * h);
                            for r in 0..n {
                                let mut acc = 0.0;
                                for c in 0..n {
                                    let (zp, z0, zm) = (z[ip * n + c], z[cell * n + c], z[im * n + c]);
                                    acc += a[(r, c)] * (zp - zm) - diss[(r, c)] * (zp - 2.0 * z0 + zm);
                                }
                                out[r] -= coef * acc;
                            }
                        }
                        out
                    })
                    .collect();
                let mut u = vec![vec![0.0; len]; k];
                let mut v = vec![vec![0.0; len]; m];
                for (cell, zc) in znew.iter().enumerate() {
                    for c in 0..k {
                        u[c][cell] = zc[c];
                    }
                    for c in 0..m {
                        v[c][cell] = zc[k + c] / eps;
                    }
                }
                (u, v)
            }
            Scheme::SpectralConstant {
                spectral,
                s12,
                s21,
                generator,
                exp_cache,
            } => {
                let mut uh: Vec<Vec<Complex64>> = state.u_i.iter().map(|c| spectral.forward(c)).collect();
                let mut vh: Vec<Vec<Complex64>> = state.u_ii.iter().map(|c| spectral.forward(c)).collect();
                if let Some(generator) = generator {
                    if exp_cache.as_ref().is_none_or(|(h, _)| *h != dt) {
                        let scale = Complex64::new(dt, 0.0);
                        *exp_cache = Some((dt, generator.par_iter().map(|g| linalg::expm_c(&(g * scale))).collect()));
                    }
                    let props = &exp_cache.as_ref().expect("propagators cached").1;
                    for idx in 0..len {
                        let z = DVector::from_iterator(k + m, uh.iter().chain(vh.iter()).map(|c| c[idx]));
                        let z = &props[idx] * z;
                        for c in 0..k {
                            uh[c][idx] = z[c];
                        }
                        for c in 0..m {
                            vh[c][idx] = z[k + c];
                        }
                    }
                } else {
                    let coupling = Complex64::new(dt / (eps * eps), 0.0);
                    let dtc = Complex64::new(dt, 0.0);
                    for idx in 0..len {
                        let mut a = DVector::from_iterator(k, uh.iter().map(|c| c[idx]));
                        let mut b = DVector::from_iterator(m, vh.iter().map(|c| c[idx]));
                        a += &s12[idx] * &b * dtc;
                        b += &s21[idx] * &a * coupling;
                        for c in 0..k {
                            uh[c][idx] = a[c];
                        }
                        for c in 0..m {
                            vh[c][idx] = b[c];
                        }
                    }
                }
                (
                    uh.into_iter().map(|s| spectral.inverse(s)).collect(),
                    vh.into_iter().map(|s| spectral.inverse(s)).collect(),
                )
            }
            Scheme::SpectralVariable { spectral, m12, m21 } => {
                let d = self.grid.dim();
                // u+ = u - dt sum_j M12_j d_j v, then v* = v - dt/eps^2 sum_j M21_j d_j u+
                let dv: Vec<Vec<Vec<f64>>> = (0..d)
                    .map(|j| state.u_ii.iter().map(|c| spectral.derivative(c, j)).collect())
                    .collect();
                let mut u = state.u_i.clone();
                for j in 0..d {
                    for cell in 0..len {
                        let a = &m12[j][cell];
                        for r in 0..k {
                            for c in 0..m {
                                u[r][cell] -= dt * a[(r, c)] * dv[j][c][cell];
                            }
                        }
                    }
                }
                let du: Vec<Vec<Vec<f64>>> = (0..d)
                    .map(|j| u.iter().map(|c| spectral.derivative(c, j)).collect())
                    .collect();
                let mut v = state.u_ii.clone();
                let coupling = dt / (eps * eps);
                for j in 0..d {
                    for cell in 0..len {
                        let a = &m21[j][cell];
                        for r in 0..m {
                            for c in 0..k {
                                v[r][cell] -= coupling * a[(r, c)] * du[j][c][cell];
                            }
                        }
                    }
                }
                (u, v)
            }
        }
    }

    fn exact_linear(&self) -> bool {
        matches!(self.scheme, Scheme::SpectralConstant { generator: Some(_), .. })
    }

    fn source_update(&self, u: &[Vec<f64>], v_star: &[Vec<f64>], dt: f64) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let (k, m) = (self.sys.k(), self.sys.m());
        let results: Vec<Result<(DVector<f64>, DVector<f64>)>> = (0..self.grid.len())
            .into_par_iter()
            .map(|cell| {
                let x = &self.points[cell];
                let uc = DVector::from_iterator(k, u.iter().map(|c| c[cell]));
                let vs = DVector::from_iterator(m, v_star.iter().map(|c| c[cell]));
                self.cell_source(cell, x, uc, vs, dt)
            })
            .collect();
        let mut u_new = vec![vec![0.0; self.grid.len()]; k];
        let mut v_new = vec![vec![0.0; self.grid.len()]; m];
        for (cell, r) in results.into_iter().enumerate() {
            let (uc, vc) = r?;
            for c in 0..k {
                u_new[c][cell] = uc[c];
            }
            for c in 0..m {
                v_new[c][cell] = vc[c];
            }
        }
        Ok((u_new, v_new))
    }

    fn cell_source(
        &self,
        cell: usize,
        x: &[f64],
        u: DVector<f64>,
        v_star: DVector<f64>,
        dt: f64,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let (m, eps) = (self.sys.m(), self.eps);
        let eps2 = eps * eps;
        let d2 = match self.sys.lower_ii() {
            Some(f) => f(x, &u, &(&v_star * eps)),
            None => DVector::zeros(m),
        };
        let v = match self.opts.source_solve {
            SourceSolve::LinearExact => {
                let c = self.sys.stiff_jacobian(x, &u, &DVector::zeros(m))?;
                let lhs = DMatrix::identity(m, m) * eps2 - c * dt;
                let rhs = &v_star * eps2 + &d2 * dt;
                lhs.lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::LinearSolve(format!("implicit source at cell {cell}")))?
            }
            SourceSolve::Newton => {
                let mut v = v_star.clone();
                let mut converged = false;
                let mut residual = f64::INFINITY;
                for _ in 0..self.opts.newton_max_iter {
                    let z = &v * eps;
                    let q = self.sys.stiff_source(x, &u, &z);
                    let f = (&v - &v_star) * eps2 - (q / eps + &d2) * dt;
                    let jac = DMatrix::identity(m, m) * eps2 - self.sys.stiff_jacobian(x, &u, &z)? * dt;
                    let delta = jac
                        .lu()
                        .solve(&f)
                        .ok_or_else(|| Error::LinearSolve(format!("newton jacobian at cell {cell}")))?;
                    v -= &delta;
                    residual = delta.norm();
                    if residual <= self.opts.newton_tol * (1.0 + v.norm()) {
                        converged = true;
                        break;
                    }
                }
                if !converged {
                    return Err(Error::Newton {
                        iterations: self.opts.newton_max_iter,
                        residual,
                        cell,
                    });
                }
                v
            }
        };
        let mut u_new = u.clone();
        if let Some(d1) = self.sys.lower_i() {
            u_new += d1(x, &u, &v_star, eps) * dt;
        }
        if let Some(f) = self.sys.reaction() {
            u_new += f(x, &u) * dt;
        }
        Ok((u_new, v))
    }

    fn record(&self, state: &FieldState, dt: f64) -> StepRecord {
        let vol = self.grid.cell_volume();
        StepRecord {
            t: state.t,
            dt,
            energy: discrete_energy(state, vol),
            max_speed: self.speed / self.eps,
            relaxing_norm_sq: relaxing_norm_sq(state, vol),
        }
    }
}

/// Snapshot targets in `(0, t_final]`.
pub fn snapshot_times(t_final: f64, interval: Option<f64>) -> Vec<f64> {
    let mut times = Vec::new();
    if let Some(dt) = interval {
        let mut j = 1usize;
        while (j as f64) * dt < t_final * (1.0 - 1e-12) {
            times.push(j as f64 * dt);
            j += 1;
        }
    }
    if t_final > 0.0 {
        times.push(t_final);
    }
    times
}

/// Integrates from `init` to `t_final`, landing exactly on every snapshot time.
pub fn run(
    sys: &RelaxationSystem,
    grid: &SpatialGrid,
    init: &FieldState,
    t_final: f64,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Precondition(format!(
            "final time must be nonnegative, got {t_final}"
        )));
    }
    init.validate(grid)?;
    init.check_sizes(sys)?;
    let mut stepper = Stepper::new(sys, grid, init.eps, opts)?;
    let dt_max = stepper.max_dt();
    let mut state = init.clone();
    let mut snapshots = vec![state.clone()];
    let mut steps = vec![stepper.record(&state, 0.0)];
    let mut t_start = init.t;
    for target in snapshot_times(t_final, opts.snapshot_interval) {
        let span = target - (t_start - init.t);
        let count = if dt_max.is_finite() {
            ((span / dt_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
        } else {
            1
        };
        let dt = span / count as f64;
        for i in 1..=count {
            state = stepper.step(&state, dt)?;
            state.t = if i == count {
                init.t + target
            } else {
                t_start + i as f64 * dt
            };
            steps.push(stepper.record(&state, dt));
        }
        t_start = state.t;
        snapshots.push(state.clone());
    }
    Ok(Trajectory {
        eps: init.eps,
        snapshots,
        steps,
        clamp_events: stepper.clamp_events(),
    })
}
