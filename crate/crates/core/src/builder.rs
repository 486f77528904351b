//! Relaxation systems built from parabolic targets, decoupling of raw systems and demo fixtures.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::linalg;
use crate::system::{
    Coefficient, ParabolicTarget, QuasilinearDivergence, ReactionDiffusion, RelaxationSystem, SpectralMultiplier,
    StateFn, StiffSource,
};
use crate::validator::StateBox;

pub type RawSourceFn = Arc<dyn Fn(&[f64], &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type RawJacobianFn = Arc<dyn Fn(&[f64], &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Undecoupled system `W_t + sum_j A_j(x) d_j W = B(x, W) + D(W)`.
#[derive(Clone)]
pub struct RawSystem {
    pub n: usize,
    pub d: usize,
    pub a: Vec<Coefficient>,
    pub source: RawSourceFn,
    pub source_jacobian: RawJacobianFn,
    pub lower: Option<StateFn>,
    /// The decoupled source is linear in the relaxing block for fixed conserved block.
    pub relaxing_linear: bool,
}

impl RawSystem {
    pub fn new(a: Vec<Coefficient>, source: RawSourceFn, source_jacobian: RawJacobianFn) -> Result<Self> {
        let d = a.len();
        if d == 0 || d > 2 {
            return Err(Error::Dimension(format!("spatial dimension {d} not in 1..=2")));
        }
        let n = a[0].shape().0;
        if n == 0 || a.iter().any(|c| c.shape() != (n, n)) {
            return Err(Error::Dimension("raw coefficients must share one square shape".into()));
        }
        Ok(Self {
            n,
            d,
            a,
            source,
            source_jacobian,
            lower: None,
            relaxing_linear: false,
        })
    }

    /// `B(x, W) = C W` with a constant matrix.
    pub fn linear(a: Vec<Coefficient>, c: DMatrix<f64>) -> Result<Self> {
        let c1 = c.clone();
        let mut raw = Self::new(a, Arc::new(move |_, w| &c1 * w), Arc::new(move |_, _| c.clone()))?;
        raw.relaxing_linear = true;
        Ok(raw)
    }

    pub fn with_lower(mut self, d: StateFn) -> Self {
        self.lower = Some(d);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecouplingTransform {
    p: DMatrix<f64>,
    p_inv: DMatrix<f64>,
    k: usize,
}

impl DecouplingTransform {
    pub fn new(p: DMatrix<f64>, k: usize) -> Result<Self> {
        if !p.is_square() || k == 0 || k >= p.nrows() {
            return Err(Error::Dimension(format!(
                "transform is {:?} with split k={k}",
                p.shape()
            )));
        }
        let det = p.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::SingularTransform(det.abs()));
        }
        let p_inv = p.clone().try_inverse().ok_or(Error::SingularTransform(det.abs()))?;
        Ok(Self { p, p_inv, k })
    }

    pub fn identity(n: usize, k: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n), k)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.p_inv
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// `Z = P W`.
    pub fn to_decoupled(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.p * w
    }

    /// `W = P^{-1} [u; z]`.
    pub fn to_raw(&self, u: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let k = self.k;
        let mut stacked = DVector::zeros(self.n());
        stacked.rows_mut(0, k).copy_from(u);
        stacked.rows_mut(k, self.n() - k).copy_from(z);
        &self.p_inv * stacked
    }

    fn upper(&self) -> DMatrix<f64> {
        self.p.rows(0, self.k).clone_owned()
    }

    fn lower(&self) -> DMatrix<f64> {
        self.p.rows(self.k, self.n() - self.k).clone_owned()
    }
}

/// Block `(r0..r0+nr, c0..c0+nc)` of `P A(x) P^{-1}`.
fn conjugated_block(
    a: &Coefficient,
    t: &DecouplingTransform,
    r0: usize,
    nr: usize,
    c0: usize,
    nc: usize,
) -> Coefficient {
    match a {
        Coefficient::Constant(m) => {
            let full = t.matrix() * m * t.inverse();
            Coefficient::Constant(full.view((r0, c0), (nr, nc)).clone_owned())
        }
        Coefficient::Variable { eval, .. } => {
            let (p, pi, eval) = (t.matrix().clone(), t.inverse().clone(), eval.clone());
            Coefficient::variable(nr, nc, move |x| {
                (&p * eval(x) * &pi).view((r0, c0), (nr, nc)).clone_owned()
            })
        }
    }
}

/// Splits `P A_j P^{-1}` into blocks and maps sources through `P`.
///
/// `points` are the sample locations for the conserved-quantity probe `P^I B(x, W) = 0`,
/// taken over `W` in `[-1, 1]^N`.
pub fn decouple(raw: &RawSystem, transform: &DecouplingTransform, points: &[Vec<f64>]) -> Result<RelaxationSystem> {
    let (n, k) = (raw.n, transform.k);
    if transform.n() != n {
        return Err(Error::Dimension(format!(
            "transform is {0}x{0}, raw system has N={n}",
            transform.n()
        )));
    }
    let m = n - k;
    let p_upper = transform.upper();
    let probes = StateBox::symmetric(n, 1.0)?.states();
    let mut worst: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for x in points {
        for w in &probes {
            let b = (raw.source)(x, w);
            let residual = (&p_upper * &b).norm();
            let tol = 1e-10 * (1.0 + b.norm());
            if !(residual <= tol) && worst.as_ref().is_none_or(|(r, _, _)| residual > *r) {
                worst = Some((residual, x.clone(), w.iter().copied().collect()));
            }
        }
    }
    if let Some((residual, x, w)) = worst {
        return Err(Error::NotConserved { residual, x, w });
    }

    let block = |r0, nr, c0, nc| -> Vec<Coefficient> {
        raw.a
            .iter()
            .map(|a| conjugated_block(a, transform, r0, nr, c0, nc))
            .collect()
    };
    let (m11, m12, m21, m22) = (
        block(0, k, 0, k),
        block(0, k, k, m),
        block(k, m, 0, k),
        block(k, m, k, m),
    );

    let p_lower = transform.lower();
    let relaxing_cols = transform.inverse().columns(k, m).clone_owned();
    let value = {
        let (t, src, pl) = (transform.clone(), raw.source.clone(), p_lower.clone());
        Arc::new(move |x: &[f64], u: &DVector<f64>, z: &DVector<f64>| &pl * src(x, &t.to_raw(u, z)))
    };
    let jacobian = {
        let (t, jac, pl) = (transform.clone(), raw.source_jacobian.clone(), p_lower.clone());
        Arc::new(move |x: &[f64], u: &DVector<f64>, z: &DVector<f64>| &pl * jac(x, &t.to_raw(u, z)) * &relaxing_cols)
    };
    let source = StiffSource {
        value,
        jacobian,
        linear: raw.relaxing_linear,
    };
    let mut sys = RelaxationSystem::differential("decoupled", k, m, m12, m21, m22, source)?.with_m11(m11)?;
    if let Some(lower) = &raw.lower {
        let (t, d, pu) = (transform.clone(), lower.clone(), p_upper.clone());
        sys = sys.with_lower_i(Arc::new(move |_x, u, v, eps| (&pu * d(&t.to_raw(u, &(v * eps)))) / eps));
        let (t, d, pl) = (transform.clone(), lower.clone(), p_lower);
        sys = sys.with_lower_ii(Arc::new(move |_x, u, z| &pl * d(&t.to_raw(u, z))));
    }
    Ok(sys)
}

fn constant_or_variable(
    rows: usize,
    cols: usize,
    constant: bool,
    x0: &[f64],
    f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
) -> Coefficient {
    if constant {
        Coefficient::Constant(f(x0))
    } else {
        Coefficient::variable(rows, cols, f)
    }
}

/// Relaxation with `m = kd` fluxes weighted by the block matrix `[A_jl(x)]`.
///
/// The block matrix must be symmetric positive definite at every probe point.
pub fn from_reaction_diffusion(target: &ReactionDiffusion, points: &[Vec<f64>]) -> Result<RelaxationSystem> {
    let (k, d) = (target.k, target.d);
    let kd = k * d;
    let origin = vec![0.0; d];
    let probe: Vec<&[f64]> = if target.constant() {
        vec![&origin]
    } else {
        points.iter().map(Vec::as_slice).collect()
    };
    for x in probe {
        let big = target.block_matrix(x);
        let asym = (&big - big.transpose()).norm();
        let min = linalg::min_sym_eigenvalue(&big).unwrap_or(f64::NEG_INFINITY);
        if asym > 1e-12 * big.norm().max(1.0) || !(min > 0.0) {
            return Err(Error::NotPositiveDefinite {
                what: "diffusion block matrix".into(),
                min_eigenvalue: if asym > 1e-12 * big.norm().max(1.0) {
                    f64::NAN
                } else {
                    min
                },
                location: format!("x={x:?}"),
            });
        }
    }
    let constant = target.constant();
    let mut m12 = Vec::with_capacity(d);
    let mut m21 = Vec::with_capacity(d);
    for j in 0..d {
        let t = target.clone();
        m12.push(constant_or_variable(k, kd, constant, &origin, move |x| {
            t.block_matrix(x).rows(j * k, k).clone_owned()
        }));
        let t = target.clone();
        m21.push(constant_or_variable(kd, k, constant, &origin, move |x| {
            t.block_matrix(x).rows(j * k, k).transpose()
        }));
    }
    let t = target.clone();
    let q = constant_or_variable(kd, kd, constant, &origin, move |x| -t.block_matrix(x));
    let mut sys = RelaxationSystem::differential(
        "reaction-diffusion",
        k,
        kd,
        m12,
        m21,
        vec![Coefficient::zeros(kd, kd); d],
        StiffSource::linear(q),
    )?;
    if let Some(f) = &target.reaction {
        let f = f.clone();
        sys = sys.with_reaction(Arc::new(move |_x, u| f(u)));
    }
    Ok(sys)
}

fn selector(k: usize, d: usize, j: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(k, k * d);
    s.view_mut((0, j * k), (k, k)).fill_with_identity();
    s
}

/// Relaxation `Z^I_t + div Z^II / eps = G`, `eps^2 Z^II_t + D Z^I = -B^{-1}(u) Z^II / eps + B^{-1} F`.
///
/// `B(u)` is checked for invertibility at every state of `state_box`.
pub fn from_quasilinear(target: &QuasilinearDivergence, state_box: &StateBox) -> Result<RelaxationSystem> {
    let (k, d) = (target.k, target.d);
    let kd = k * d;
    if state_box.dim() != k {
        return Err(Error::Dimension(format!(
            "state box has {} components, target has k={k}",
            state_box.dim()
        )));
    }
    for u in state_box.states() {
        let b = (target.diffusion)(&u);
        if b.shape() != (kd, kd) {
            return Err(Error::Dimension(format!("B(u) is {:?}, expected {kd}x{kd}", b.shape())));
        }
        if linalg::checked_inverse(&b).is_none() {
            return Err(Error::SingularJacobian {
                x: Vec::new(),
                u: u.iter().copied().collect(),
                sigma_min: linalg::smallest_singular_value(&b),
            });
        }
    }
    let m12 = (0..d).map(|j| Coefficient::Constant(selector(k, d, j))).collect();
    let m21 = (0..d)
        .map(|j| Coefficient::Constant(selector(k, d, j).transpose()))
        .collect();
    let inverse = {
        let diff = target.diffusion.clone();
        move |u: &DVector<f64>| {
            let b = diff(u);
            linalg::checked_inverse(&b).unwrap_or_else(|| DMatrix::from_element(b.nrows(), b.ncols(), f64::NAN))
        }
    };
    let inverse = Arc::new(inverse);
    let source = {
        let (iv, ij) = (inverse.clone(), inverse.clone());
        StiffSource {
            value: Arc::new(move |_x, u, z| -(iv(u) * z)),
            jacobian: Arc::new(move |_x, u, _z| -ij(u)),
            linear: true,
        }
    };
    let mut sys = RelaxationSystem::differential(
        "quasilinear",
        k,
        kd,
        m12,
        m21,
        vec![Coefficient::zeros(kd, kd); d],
        source,
    )?;
    if target.flux.is_some() {
        let (t, iv) = (target.clone(), inverse);
        sys = sys.with_lower_ii(Arc::new(move |_x, u, _z| iv(u) * t.stacked_flux(u)));
    }
    if let Some(g) = &target.source {
        let g = g.clone();
        sys = sys.with_reaction(Arc::new(move |_x, u| g(u)));
    }
    Ok(sys)
}

/// Relaxation with `m = k` whose transport is the Fourier multiplier `B = S(xi)^{1/2}`,
/// `S(xi) = sum A_jl xi_j xi_l`, tabulated on the modes of `grid`.
pub fn from_sqrt_symbol(target: &ReactionDiffusion, grid: &SpatialGrid) -> Result<RelaxationSystem> {
    if !target.constant() {
        return Err(Error::Unsupported(
            "square-root symbols need constant coefficients".into(),
        ));
    }
    if grid.dim() != target.d {
        return Err(Error::Dimension(format!(
            "grid has d={}, target has d={}",
            grid.dim(),
            target.d
        )));
    }
    let k = target.k;
    let origin = vec![0.0; target.d];
    let second = {
        let t = target.clone();
        let x0 = origin.clone();
        move |xi: &[f64]| t.second_order(&x0, xi)
    };
    let table: Vec<Result<DMatrix<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let xi = grid.wavevector(idx, true);
            if xi.iter().all(|&v| v == 0.0) {
                return Ok(DMatrix::zeros(k, k));
            }
            let s = second(&xi);
            let min = linalg::min_sym_eigenvalue(&s).unwrap_or(f64::NEG_INFINITY);
            let asym = (&s - s.transpose()).norm();
            if !(min > 1e-14 * s.norm()) || asym > 1e-12 * s.norm() {
                return Err(Error::NotPositiveDefinite {
                    what: format!("second-order symbol at Fourier mode {idx}"),
                    min_eigenvalue: min,
                    location: format!("xi={xi:?}"),
                });
            }
            linalg::sqrt_spd(&s).ok_or_else(|| Error::LinearSolve(format!("square root failed at mode {idx}")))
        })
        .collect();
    let table = table.into_iter().collect::<Result<Vec<_>>>()?;
    let symbol = Arc::new(move |xi: &[f64]| {
        let s = second(xi);
        linalg::sqrt_spd(&s).unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN))
    });
    let mult = SpectralMultiplier {
        symbol,
        table: Some((grid.clone(), Arc::new(table))),
    };
    let mut sys = RelaxationSystem::multiplier(
        "sqrt-symbol",
        k,
        target.d,
        mult,
        StiffSource::linear(Coefficient::Constant(-DMatrix::identity(k, k))),
    )?;
    if let Some(f) = &target.reaction {
        let f = f.clone();
        sys = sys.with_reaction(Arc::new(move |_x, u| f(u)));
    }
    Ok(sys)
}

/// Two-velocity kinetic model: raw system, its decoupling and the decoupled system.
pub fn carleman() -> (RawSystem, DecouplingTransform, RelaxationSystem) {
    let a = vec![Coefficient::Constant(DMatrix::from_row_slice(
        2,
        2,
        &[1.0, 0.0, 0.0, -1.0],
    ))];
    let source: RawSourceFn = Arc::new(|_x, w| {
        let (f1, f2) = (w[0], w[1]);
        DVector::from_vec(vec![(f2 + f1) * (f2 - f1), (f2 + f1) * (f1 - f2)])
    });
    let jacobian: RawJacobianFn = Arc::new(|_x, w| {
        let (f1, f2) = (w[0], w[1]);
        DMatrix::from_row_slice(2, 2, &[-2.0 * f1, 2.0 * f2, 2.0 * f1, -2.0 * f2])
    });
    let mut raw = RawSystem::new(a, source, jacobian).expect("carleman raw system");
    raw.relaxing_linear = true;
    let p =
        DecouplingTransform::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]), 1).expect("carleman transform");
    let sys = decouple(&raw, &p, &[vec![0.0]])
        .expect("carleman decoupling")
        .with_name("carleman")
        .with_positive_conserved();
    (raw, p, sys)
}

/// Diffusion limit of the two-velocity model, `rho_t = (log rho)_xx / 2`.
pub fn carleman_limit() -> QuasilinearDivergence {
    QuasilinearDivergence::new(1, 1, Arc::new(|u| DMatrix::from_element(1, 1, 0.5 / u[0])))
}

/// Non-symmetric diffusion `A = [[1, 2], [0, 1]]` with `k = 2`, `d = 1`.
pub fn triangular_target() -> ParabolicTarget {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
    ParabolicTarget::ReactionDiffusion(
        ReactionDiffusion::new(2, 1, vec![Coefficient::Constant(a)]).expect("triangular target"),
    )
}

/// Initial conserved profile `mean_c + amplitude_c * sin(2 pi sum_j m_j x_j / L_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialProfile {
    pub mean: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub modes: Vec<f64>,
}

impl InitialProfile {
    pub fn sine(mean: f64, amplitude: f64, modes: Vec<f64>) -> Self {
        Self {
            mean: vec![mean],
            amplitude: vec![amplitude],
            modes,
        }
    }

    pub fn sample(&self, grid: &SpatialGrid) -> Result<Vec<Vec<f64>>> {
        if self.modes.len() != grid.dim() || self.mean.len() != self.amplitude.len() {
            return Err(Error::Dimension(format!(
                "profile has {} modes for a {}-d grid",
                self.modes.len(),
                grid.dim()
            )));
        }
        let phase = |x: &[f64]| {
            2.0 * PI
                * (0..grid.dim())
                    .map(|j| self.modes[j] * x[j] / grid.period(j))
                    .sum::<f64>()
        };
        Ok(self
            .mean
            .iter()
            .zip(&self.amplitude)
            .map(|(&m, &a)| grid.sample(|x| m + a * phase(x).sin()))
            .collect())
    }
}

pub const DEMO_NAMES: [&str; 8] = [
    "carleman",
    "heat1d",
    "heat2d",
    "aniso2d",
    "quasilinear-bu2",
    "sqrt-heat",
    "null-limit",
    "logistic1d",
];

/// A ready-to-run fixture.
#[derive(Clone)]
pub struct Demo {
    pub name: String,
    pub system: RelaxationSystem,
    /// Parabolic limit; `None` when the limit is the zero solution.
    pub target: Option<ParabolicTarget>,
    pub state_box: StateBox,
    pub initial: InitialProfile,
}

fn anisotropic_weights() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])
}

fn logistic() -> StateFn {
    Arc::new(|u| u.map(|v| v * (1.0 - v)))
}

pub fn demo(name: &str, grid: &SpatialGrid) -> Result<Demo> {
    let needs = |d: usize| -> Result<()> {
        if grid.dim() == d {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "demo `{name}` needs a {d}-d grid, got {}",
                grid.dim()
            )))
        }
    };
    let points = grid.subsample(8);
    let scalar_heat = |weights: DMatrix<f64>| -> Result<(ReactionDiffusion, RelaxationSystem)> {
        let target = ReactionDiffusion::scalar(&weights)?;
        let sys = from_reaction_diffusion(&target, &points)?;
        Ok((target, sys))
    };
    let sym_box = StateBox::symmetric(1, 1.0)?;
    let demo = match name {
        "carleman" => {
            needs(1)?;
            let (_, _, sys) = carleman();
            Demo {
                name: name.into(),
                system: sys,
                target: Some(ParabolicTarget::QuasilinearDivergence(carleman_limit())),
                state_box: StateBox::new(vec![0.5], vec![1.5])?,
                initial: InitialProfile::sine(1.0, 0.5, vec![1.0]),
            }
        }
        "heat1d" | "null-limit" => {
            needs(1)?;
            let (target, sys) = scalar_heat(DMatrix::identity(1, 1))?;
            let (sys, target) = if name == "null-limit" {
                let m11 = vec![Coefficient::Constant(DMatrix::from_element(1, 1, 1.0))];
                (sys.with_m11(m11)?.with_name(name), None)
            } else {
                (sys.with_name(name), Some(ParabolicTarget::ReactionDiffusion(target)))
            };
            Demo {
                name: name.into(),
                system: sys,
                target,
                state_box: sym_box,
                initial: InitialProfile::sine(0.0, 1.0, vec![1.0]),
            }
        }
        "logistic1d" => {
            needs(1)?;
            let target = ReactionDiffusion::scalar(&DMatrix::identity(1, 1))?.with_reaction(logistic());
            let sys = from_reaction_diffusion(&target, &points)?.with_name(name);
            Demo {
                name: name.into(),
                system: sys,
                target: Some(ParabolicTarget::ReactionDiffusion(target)),
                state_box: StateBox::new(vec![0.0], vec![1.0])?,
                initial: InitialProfile::sine(0.5, 0.4, vec![1.0]),
            }
        }
        "heat2d" | "aniso2d" => {
            needs(2)?;
            let weights = if name == "heat2d" {
                DMatrix::identity(2, 2)
            } else {
                anisotropic_weights()
            };
            let (target, sys) = scalar_heat(weights)?;
            Demo {
                name: name.into(),
                system: sys.with_name(name),
                target: Some(ParabolicTarget::ReactionDiffusion(target)),
                state_box: sym_box,
                initial: InitialProfile::sine(0.0, 1.0, vec![1.0, 1.0]),
            }
        }
        "quasilinear-bu2" => {
            needs(1)?;
            let target = QuasilinearDivergence::new(1, 1, Arc::new(|u| DMatrix::from_element(1, 1, 1.0 + u[0] * u[0])))
                .with_flux(Arc::new(|u| DMatrix::from_element(1, 1, 0.5 * u[0] * u[0])));
            let sys = from_quasilinear(&target, &sym_box)?.with_name(name);
            Demo {
                name: name.into(),
                system: sys,
                target: Some(ParabolicTarget::QuasilinearDivergence(target)),
                state_box: sym_box,
                initial: InitialProfile::sine(0.0, 0.5, vec![1.0]),
            }
        }
        "sqrt-heat" => {
            needs(1)?;
            let target = ReactionDiffusion::scalar(&DMatrix::identity(1, 1))?;
            let sys = from_sqrt_symbol(&target, grid)?.with_name(name);
            Demo {
                name: name.into(),
                system: sys,
                target: Some(ParabolicTarget::ReactionDiffusion(target)),
                state_box: sym_box,
                initial: InitialProfile::sine(0.0, 1.0, vec![1.0]),
            }
        }
        other => {
            return Err(Error::Unsupported(format!(
                "unknown demo `{other}` (known: {})",
                DEMO_NAMES.join(", ")
            )))
        }
    };
    Ok(demo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carleman_blocks_are_the_telegraph_coupling() {
        let (_, _, sys) = carleman();
        let a = sys.axis_matrix(&[0.0], 0).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let u = DVector::from_element(1, 0.75);
        let z = DVector::from_element(1, 0.2);
        assert!((sys.stiff_source(&[0.0], &u, &z)[0] + 2.0 * 0.75 * 0.2).abs() < 1e-15);
        assert_eq!(sys.stiff_jacobian(&[0.0], &u, &z).unwrap()[(0, 0)], -1.5);
    }

    #[test]
    fn non_conserving_transform_is_rejected_with_witness() {
        let (raw, _, _) = carleman();
        let t = DecouplingTransform::identity(2, 1).unwrap();
        match decouple(&raw, &t, &[vec![0.0]]) {
            Err(Error::NotConserved { residual, w, .. }) => {
                assert!(residual > 0.0);
                assert_eq!(w.len(), 2);
            }
            other => panic!("expected NotConserved, got {:?}", other.map(|s| s.name().to_string())),
        }
    }

    #[test]
    fn singular_transform_is_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            DecouplingTransform::new(p, 1),
            Err(Error::SingularTransform(_))
        ));
    }

    #[test]
    fn indefinite_block_matrix_is_rejected() {
        let w = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let target = ReactionDiffusion::scalar(&w).unwrap();
        match from_reaction_diffusion(&target, &[vec![0.0, 0.0]]) {
            Err(Error::NotPositiveDefinite { min_eigenvalue, .. }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            _ => panic!("expected rejection"),
        }
    }

    #[test]
    fn sqrt_table_is_absolute_wavenumber() {
        let grid = SpatialGrid::unit(1, 16).unwrap();
        let target = ReactionDiffusion::scalar(&DMatrix::identity(1, 1)).unwrap();
        let sys = from_sqrt_symbol(&target, &grid).unwrap();
        let crate::system::Transport::Multiplier(mult) = sys.transport() else {
            panic!("multiplier expected")
        };
        let (_, table) = mult.table.as_ref().unwrap();
        assert_eq!(table[0][(0, 0)], 0.0);
        for idx in 1..16 {
            let kappa = grid.wavevector(idx, true)[0];
            assert!((table[idx][(0, 0)] - kappa.abs()).abs() < 1e-12 * kappa.abs());
        }
    }

    #[test]
    fn quasilinear_source_and_flux_terms() {
        let grid = SpatialGrid::unit(1, 16).unwrap();
        let demo = demo("quasilinear-bu2", &grid).unwrap();
        let u = DVector::from_element(1, 0.5);
        let q = demo.system.stiff_jacobian(&[0.0], &u, &DVector::zeros(1)).unwrap();
        assert!((q[(0, 0)] + 1.0 / 1.25).abs() < 1e-15);
        let d2 = demo.system.lower_ii().unwrap()(&[0.0], &u, &DVector::zeros(1));
        assert!((d2[0] - 0.25 / 2.5).abs() < 1e-15);
    }

    #[test]
    fn demo_requires_matching_dimension() {
        let grid = SpatialGrid::unit(1, 16).unwrap();
        assert!(matches!(demo("heat2d", &grid), Err(Error::Dimension(_))));
        assert!(matches!(demo("nope", &grid), Err(Error::Unsupported(_))));
    }
}
