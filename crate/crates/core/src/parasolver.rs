//! Reference solutions of the parabolic limit systems and single-mode oracles.
//!
//! Constant-coefficient reaction–diffusion targets are advanced with a spectral
//! integrating factor, `u^+ = exp(-S(kappa) dt) (u + dt f(u))^`, which is exact when
//! `f = 0`. Everything else uses conservative central differences with implicit
//! Euler in time; the diffusion coefficient is lagged and iterated to a fixed point.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::hypersolver::snapshot_times;
use crate::linalg;
use crate::spectral::Spectral;
use crate::system::{ParabolicTarget, QuasilinearDivergence, ReactionDiffusion};

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceOptions {
    pub dt: f64,
    pub snapshot_interval: Option<f64>,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// Relative residual target of the iterative solver used in two dimensions.
    pub linear_tol: f64,
}

impl ReferenceOptions {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            snapshot_interval: None,
            picard_tol: 1e-11,
            picard_max_iter: 50,
            linear_tol: 1e-14,
        }
    }

    pub fn with_snapshot_interval(mut self, interval: Option<f64>) -> Self {
        self.snapshot_interval = interval;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSnapshot {
    pub t: f64,
    pub fields: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrajectory {
    pub snapshots: Vec<ReferenceSnapshot>,
    /// Largest number of fixed-point sweeps used by any step.
    pub max_picard_iterations: usize,
}

impl ReferenceTrajectory {
    pub fn final_fields(&self) -> &[Vec<f64>] {
        &self.snapshots.last().expect("initial snapshot").fields
    }
}

/// Integrates `target` from `init` over `[0, t_final]` with steps no larger than `opts.dt`.
pub fn run_reference(
    target: &ParabolicTarget,
    init: &[Vec<f64>],
    grid: &SpatialGrid,
    t_final: f64,
    opts: &ReferenceOptions,
) -> Result<ReferenceTrajectory> {
    if target.d() != grid.dim() {
        return Err(Error::Dimension(format!(
            "target has d={}, grid has d={}",
            target.d(),
            grid.dim()
        )));
    }
    if init.len() != target.k() || init.iter().any(|c| c.len() != grid.len()) {
        return Err(Error::Dimension("initial fields do not match target and grid".into()));
    }
    if let Some(cell) = init
        .iter()
        .flat_map(|c| c.iter().enumerate())
        .find(|(_, v)| !v.is_finite())
        .map(|(i, _)| i)
    {
        return Err(Error::NonFinite {
            what: "initial field".into(),
            x: grid.point(cell),
        });
    }
    if !(opts.dt > 0.0) || !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Precondition(format!(
            "need dt > 0 and t_final >= 0, got dt={} and t_final={t_final}",
            opts.dt
        )));
    }
    let mut integrator = Integrator::new(target, grid, opts)?;
    let mut fields = init.to_vec();
    let mut snapshots = vec![ReferenceSnapshot {
        t: 0.0,
        fields: fields.clone(),
    }];
    let mut t_start = 0.0;
    for target_t in snapshot_times(t_final, opts.snapshot_interval) {
        let span = target_t - t_start;
        let count = ((span / opts.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = span / count as f64;
        for _ in 0..count {
            fields = integrator.step(&fields, dt)?;
        }
        if let Some(cell) = fields
            .iter()
            .flat_map(|c| c.iter().enumerate())
            .find(|(_, v)| !v.is_finite())
            .map(|(i, _)| i)
        {
            return Err(Error::Blowup { t: target_t, cell });
        }
        t_start = target_t;
        snapshots.push(ReferenceSnapshot {
            t: target_t,
            fields: fields.clone(),
        });
    }
    Ok(ReferenceTrajectory {
        snapshots,
        max_picard_iterations: integrator.max_iterations,
    })
}

enum Method {
    Spectral {
        spectral: Spectral,
        symbols: Vec<DMatrix<f64>>,
        cache: Option<(f64, Vec<DMatrix<f64>>)>,
    },
    Finite,
}

struct Integrator<'a> {
    target: &'a ParabolicTarget,
    grid: &'a SpatialGrid,
    opts: &'a ReferenceOptions,
    method: Method,
    max_iterations: usize,
}

impl<'a> Integrator<'a> {
    fn new(target: &'a ParabolicTarget, grid: &'a SpatialGrid, opts: &'a ReferenceOptions) -> Result<Self> {
        let method = match target {
            ParabolicTarget::ReactionDiffusion(rd) if rd.constant() => {
                let x0 = vec![0.0; rd.d];
                Method::Spectral {
                    spectral: Spectral::new(grid),
                    symbols: (0..grid.len())
                        .map(|idx| rd.second_order(&x0, &grid.wavevector(idx, true)))
                        .collect(),
                    cache: None,
                }
            }
            _ => Method::Finite,
        };
        Ok(Self {
            target,
            grid,
            opts,
            method,
            max_iterations: 0,
        })
    }

    fn step(&mut self, fields: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
        match (&mut self.method, self.target) {
            (
                Method::Spectral {
                    spectral,
                    symbols,
                    cache,
                },
                ParabolicTarget::ReactionDiffusion(rd),
            ) => {
                if cache.as_ref().is_none_or(|(h, _)| *h != dt) {
                    let factors = symbols.iter().map(|s| (-(s * dt)).exp()).collect();
                    *cache = Some((dt, factors));
                }
                let factors = &cache.as_ref().expect("cache filled").1;
                let k = rd.k;
                let mut rhs = fields.to_vec();
                if let Some(f) = &rd.reaction {
                    for cell in 0..self.grid.len() {
                        let u = DVector::from_iterator(k, fields.iter().map(|c| c[cell]));
                        let fu = f(&u);
                        for c in 0..k {
                            rhs[c][cell] += dt * fu[c];
                        }
                    }
                }
                let mut spec: Vec<Vec<Complex64>> = rhs.iter().map(|c| spectral.forward(c)).collect();
                for (idx, e) in factors.iter().enumerate() {
                    let a = DVector::from_iterator(k, spec.iter().map(|c| c[idx]));
                    let b = linalg::to_complex(e) * a;
                    for c in 0..k {
                        spec[c][idx] = b[c];
                    }
                }
                Ok(spec.into_iter().map(|s| spectral.inverse(s)).collect())
            }
            _ => self.finite_step(fields, dt),
        }
    }

    fn finite_step(&mut self, fields: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
        let k = self.target.k();
        let len = self.grid.len();
        let flat = |f: &[Vec<f64>]| -> Vec<f64> {
            let mut out = vec![0.0; len * k];
            for cell in 0..len {
                for c in 0..k {
                    out[cell * k + c] = f[c][cell];
                }
            }
            out
        };
        let current = flat(fields);
        let (rhs, linear) = match self.target {
            ParabolicTarget::ReactionDiffusion(rd) => (reaction_rhs(rd, self.grid, &current, dt), true),
            ParabolicTarget::QuasilinearDivergence(q) => (quasilinear_rhs(q, self.grid, &current, dt), false),
        };
        let mut iterate = current.clone();
        let mut update = f64::INFINITY;
        let mut iterations = 0;
        while iterations < self.opts.picard_max_iter {
            iterations += 1;
            let op = match self.target {
                ParabolicTarget::ReactionDiffusion(rd) => reaction_operator(rd, self.grid, dt),
                ParabolicTarget::QuasilinearDivergence(q) => quasilinear_operator(q, self.grid, &iterate, dt),
            };
            let next = op.solve(&rhs, self.grid, self.opts.linear_tol)?;
            let scale = next.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            update = next
                .iter()
                .zip(&iterate)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            iterate = next;
            if linear || update <= self.opts.picard_tol * (1.0 + scale) {
                break;
            }
            if iterations == self.opts.picard_max_iter {
                return Err(Error::FixedPoint { iterations, update });
            }
        }
        self.max_iterations = self.max_iterations.max(iterations);
        if !linear && !(update.is_finite()) {
            return Err(Error::FixedPoint { iterations, update });
        }
        let mut out = vec![vec![0.0; len]; k];
        for cell in 0..len {
            for c in 0..k {
                out[c][cell] = iterate[cell * k + c];
            }
        }
        Ok(out)
    }
}

fn cell_state(flat: &[f64], cell: usize, k: usize) -> DVector<f64> {
    DVector::from_column_slice(&flat[cell * k..(cell + 1) * k])
}

fn reaction_rhs(rd: &ReactionDiffusion, grid: &SpatialGrid, current: &[f64], dt: f64) -> Vec<f64> {
    let k = rd.k;
    let mut rhs = current.to_vec();
    if let Some(f) = &rd.reaction {
        for cell in 0..grid.len() {
            let fu = f(&cell_state(current, cell, k));
            for c in 0..k {
                rhs[cell * k + c] += dt * fu[c];
            }
        }
    }
    rhs
}

/// `I - dt sum A_jl(x) D_j D_l` with central second differences.
fn reaction_operator(rd: &ReactionDiffusion, grid: &SpatialGrid, dt: f64) -> BlockOperator {
    let (k, d) = (rd.k, rd.d);
    let mut op = BlockOperator::identity(k, grid.len());
    for cell in 0..grid.len() {
        let x = grid.point(cell);
        for j in 0..d {
            for l in 0..d {
                let a = rd.a[j * d + l].eval(&x) * dt;
                let (hj, hl) = (grid.spacing(j), grid.spacing(l));
                if j == l {
                    let w = &a / (hj * hj);
                    op.add(cell, grid.shift(cell, j, 1), -&w);
                    op.add(cell, grid.shift(cell, j, -1), -&w);
                    op.add(cell, cell, &w * 2.0);
                } else {
                    let w = &a / (4.0 * hj * hl);
                    for (sj, sl, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                        let target = grid.shift(grid.shift(cell, j, sj), l, sl);
                        op.add(cell, target, &w * -sign);
                    }
                }
            }
        }
    }
    op
}

fn quasilinear_rhs(q: &QuasilinearDivergence, grid: &SpatialGrid, current: &[f64], dt: f64) -> Vec<f64> {
    let (k, d) = (q.k, q.d);
    let mut rhs = current.to_vec();
    if let Some(flux) = &q.flux {
        let fluxes: Vec<DMatrix<f64>> = (0..grid.len()).map(|c| flux(&cell_state(current, c, k))).collect();
        for cell in 0..grid.len() {
            for a in 0..d {
                let h = grid.spacing(a);
                let (ip, im) = (grid.shift(cell, a, 1), grid.shift(cell, a, -1));
                // averaged face fluxes: (F_{i+1} - F_{i-1}) / 2h after cancellation
                for c in 0..k {
                    let right = 0.5 * (fluxes[cell][(c, a)] + fluxes[ip][(c, a)]);
                    let left = 0.5 * (fluxes[im][(c, a)] + fluxes[cell][(c, a)]);
                    rhs[cell * k + c] -= dt * (right - left) / h;
                }
            }
        }
    }
    if let Some(g) = &q.source {
        for cell in 0..grid.len() {
            let gu = g(&cell_state(current, cell, k));
            for c in 0..k {
                rhs[cell * k + c] += dt * gu[c];
            }
        }
    }
    rhs
}

/// `I + dt div(-B(U_face) grad)` in flux form, with `B` frozen at `lagged`.
fn quasilinear_operator(q: &QuasilinearDivergence, grid: &SpatialGrid, lagged: &[f64], dt: f64) -> BlockOperator {
    let (k, d) = (q.k, q.d);
    let mut op = BlockOperator::identity(k, grid.len());
    for cell in 0..grid.len() {
        for a in 0..d {
            let ha = grid.spacing(a);
            let ip = grid.shift(cell, a, 1);
            let face = (cell_state(lagged, cell, k) + cell_state(lagged, ip, k)) * 0.5;
            let b = (q.diffusion)(&face);
            // flux through the face between `cell` and `ip`: Phi = -sum_b B_ab G_b
            // contributes +dt/h Phi to `cell` and -dt/h Phi to `ip`
            let mut contributions: Vec<(usize, DMatrix<f64>)> = Vec::new();
            for bx in 0..d {
                let blk = b.view((a * k, bx * k), (k, k)).clone_owned();
                if bx == a {
                    contributions.push((ip, -&blk / ha));
                    contributions.push((cell, &blk / ha));
                } else {
                    let hb = grid.spacing(bx);
                    let w = &blk / (4.0 * hb);
                    for (base, s) in [(cell, 1.0), (ip, 1.0)] {
                        contributions.push((grid.shift(base, bx, 1), &w * -s));
                        contributions.push((grid.shift(base, bx, -1), &w * s));
                    }
                }
            }
            for (col, blk) in contributions {
                op.add(cell, col, &blk * (dt / ha));
                op.add(ip, col, &blk * (-dt / ha));
            }
        }
    }
    op
}

/// Sparse block matrix with `k x k` blocks, one row of blocks per cell.
struct BlockOperator {
    k: usize,
    rows: Vec<Vec<(usize, DMatrix<f64>)>>,
}

impl BlockOperator {
    fn identity(k: usize, len: usize) -> Self {
        Self {
            k,
            rows: (0..len).map(|c| vec![(c, DMatrix::identity(k, k))]).collect(),
        }
    }

    fn add(&mut self, row: usize, col: usize, block: DMatrix<f64>) {
        let entries = &mut self.rows[row];
        match entries.iter_mut().find(|(c, _)| *c == col) {
            Some((_, b)) => *b += block,
            None => entries.push((col, block)),
        }
    }

    fn block(&self, row: usize, col: usize) -> DMatrix<f64> {
        self.rows[row]
            .iter()
            .find(|(c, _)| *c == col)
            .map(|(_, b)| b.clone())
            .unwrap_or_else(|| DMatrix::zeros(self.k, self.k))
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut y = vec![0.0; x.len()];
        for (row, entries) in self.rows.iter().enumerate() {
            for (col, b) in entries {
                for r in 0..k {
                    let mut acc = 0.0;
                    for c in 0..k {
                        acc += b[(r, c)] * x[col * k + c];
                    }
                    y[row * k + r] += acc;
                }
            }
        }
        y
    }

    fn solve(&self, rhs: &[f64], grid: &SpatialGrid, tol: f64) -> Result<Vec<f64>> {
        if grid.dim() == 1 {
            self.solve_cyclic(rhs, grid)
        } else {
            self.solve_bicgstab(rhs, tol)
        }
    }

    /// Direct solve of a periodic block-tridiagonal system: block Thomas on the open
    /// chain plus a rank-`2k` Woodbury correction for the two corner blocks.
    fn solve_cyclic(&self, rhs: &[f64], grid: &SpatialGrid) -> Result<Vec<f64>> {
        let (k, n) = (self.k, self.rows.len());
        let lower: Vec<DMatrix<f64>> = (0..n).map(|i| self.block(i, grid.shift(i, 0, -1))).collect();
        let upper: Vec<DMatrix<f64>> = (0..n).map(|i| self.block(i, grid.shift(i, 0, 1))).collect();
        let diag: Vec<DMatrix<f64>> = (0..n).map(|i| self.block(i, i)).collect();
        let chain = BlockThomas::factor(&lower, &diag, &upper)?;

        let y = chain.solve(&DMatrix::from_column_slice(n * k, 1, rhs));
        // corner coupling A[0, n-1] = lower[0], A[n-1, 0] = upper[n-1]
        let mut p = DMatrix::zeros(n * k, 2 * k);
        p.view_mut((0, 0), (k, k)).fill_with_identity();
        p.view_mut(((n - 1) * k, k), (k, k)).fill_with_identity();
        let mut qt = DMatrix::zeros(2 * k, n * k);
        qt.view_mut((0, (n - 1) * k), (k, k)).copy_from(&lower[0]);
        qt.view_mut((k, 0), (k, k)).copy_from(&upper[n - 1]);
        let z = chain.solve(&p);
        let cap = DMatrix::identity(2 * k, 2 * k) + &qt * &z;
        let corr = cap
            .lu()
            .solve(&(&qt * &y))
            .ok_or_else(|| Error::LinearSolve("singular periodic correction".into()))?;
        let x = y - z * corr;
        Ok(x.column(0).iter().copied().collect())
    }

    fn solve_bicgstab(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        let k = self.k;
        let inv_diag: Vec<DMatrix<f64>> = (0..self.rows.len())
            .map(|i| {
                self.block(i, i)
                    .try_inverse()
                    .ok_or_else(|| Error::LinearSolve(format!("singular diagonal block at cell {i}")))
            })
            .collect::<Result<_>>()?;
        let precond = |v: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; v.len()];
            for (i, inv) in inv_diag.iter().enumerate() {
                for r in 0..k {
                    out[i * k + r] = (0..k).map(|c| inv[(r, c)] * v[i * k + c]).sum();
                }
            }
            out
        };
        bicgstab(|v| self.apply(v), precond, rhs, tol, 2000)
    }
}

struct BlockThomas {
    k: usize,
    lower: Vec<DMatrix<f64>>,
    pivots: Vec<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    c_prime: Vec<DMatrix<f64>>,
}

impl BlockThomas {
    fn factor(lower: &[DMatrix<f64>], diag: &[DMatrix<f64>], upper: &[DMatrix<f64>]) -> Result<Self> {
        let n = diag.len();
        let k = diag[0].nrows();
        let mut pivots = Vec::with_capacity(n);
        let mut c_prime: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let m = if i == 0 {
                diag[0].clone()
            } else {
                &diag[i] - &lower[i] * &c_prime[i - 1]
            };
            let lu = m.lu();
            let c = if i + 1 < n {
                lu.solve(&upper[i])
                    .ok_or_else(|| Error::LinearSolve(format!("singular pivot block at cell {i}")))?
            } else {
                if lu.solve(&DMatrix::identity(k, k)).is_none() {
                    return Err(Error::LinearSolve(format!("singular pivot block at cell {i}")));
                }
                DMatrix::zeros(k, k)
            };
            pivots.push(lu);
            c_prime.push(c);
        }
        Ok(Self {
            k,
            lower: lower.to_vec(),
            pivots,
            c_prime,
        })
    }

    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let (k, n, cols) = (self.k, self.pivots.len(), rhs.ncols());
        let mut y: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut r = rhs.rows(i * k, k).clone_owned();
            if i > 0 {
                r -= &self.lower[i] * &y[i - 1];
            }
            y.push(self.pivots[i].solve(&r).expect("factored pivot"));
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let next = y[i + 1].clone();
            y[i] -= &self.c_prime[i] * next;
        }
        let mut out = DMatrix::zeros(n * k, cols);
        for (i, blk) in y.iter().enumerate() {
            out.rows_mut(i * k, k).copy_from(blk);
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned BiCGSTAB.
fn bicgstab(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = precond(b);
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let phat = precond(&p);
        v = apply(&phat);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if dot(&s, &s).sqrt() <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(x);
        }
        let shat = precond(&s);
        let t = apply(&shat);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    let res = dot(&r, &r).sqrt() / bnorm;
    // accept stagnation at roundoff level
    if res <= tol.max(1e-12) {
        Ok(x)
    } else {
        Err(Error::LinearSolve(format!(
            "BiCGSTAB stalled at relative residual {res:e}"
        )))
    }
}

/// One Fourier mode of a constant-coefficient scalar problem with `S = xi^T A xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeOracle {
    pub symbol: f64,
    pub t: f64,
    /// `exp(-S t)`.
    pub parabolic_factor: f64,
    pub relaxation: Option<RelaxationMode>,
}

/// Exact solution of `u' = -b w`, `eps^2 w' = b u - w` with `b = sqrt(S)`.
///
/// For the heat relaxation a mode `u e^{i kappa x}` carries `U^II = -i w e^{i kappa x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationMode {
    pub eps: f64,
    pub b: f64,
    /// Root of `eps^2 l^2 + l + S = 0` that tends to `-S` as `eps -> 0`.
    pub slow: Complex64,
    pub fast: Complex64,
    /// `exp(M t)` acting on `(u, w)`.
    pub propagator: DMatrix<f64>,
}

impl RelaxationMode {
    pub fn evolve(&self, u0: f64, w0: f64) -> (f64, f64) {
        let out = &self.propagator * DVector::from_vec(vec![u0, w0]);
        (out[0], out[1])
    }

    /// Mode amplitude of `u` at time `t` from well-prepared data `w0 = b u0`.
    pub fn well_prepared_amplitude(&self, u0: f64) -> f64 {
        self.evolve(u0, self.b * u0).0
    }
}

pub fn relaxation_roots(symbol: f64, eps: f64) -> (Complex64, Complex64) {
    let e2 = eps * eps;
    let disc = Complex64::new(1.0 - 4.0 * e2 * symbol, 0.0).sqrt();
    let q = -(disc + 1.0) * 0.5;
    (Complex64::new(symbol, 0.0) / q, q / e2)
}

/// Mode oracle for scalar weights `A` (`d x d`) and wave-vector `xi`.
pub fn exact_mode_oracle(weights: &DMatrix<f64>, xi: &[f64], t: f64, eps: Option<f64>) -> Result<ModeOracle> {
    let d = weights.nrows();
    if weights.ncols() != d || xi.len() != d {
        return Err(Error::Dimension(format!(
            "weights are {:?}, wave-vector has length {}",
            weights.shape(),
            xi.len()
        )));
    }
    let xv = DVector::from_column_slice(xi);
    let symbol = (xv.transpose() * weights * &xv)[(0, 0)];
    let relaxation = match eps {
        None => None,
        Some(eps) if !(eps > 0.0) => return Err(Error::Precondition(format!("epsilon must be positive, got {eps}"))),
        Some(eps) => {
            if symbol < 0.0 {
                return Err(Error::Precondition(format!("symbol {symbol} is negative")));
            }
            let b = symbol.sqrt();
            let e2 = eps * eps;
            let m = DMatrix::from_row_slice(2, 2, &[0.0, -b, b / e2, -1.0 / e2]);
            let (slow, fast) = relaxation_roots(symbol, eps);
            Some(RelaxationMode {
                eps,
                b,
                slow,
                fast,
                propagator: (m * t).exp(),
            })
        }
    };
    Ok(ModeOracle {
        symbol,
        t,
        parabolic_factor: (-symbol * t).exp(),
        relaxation,
    })
}
