//! Relaxation systems, parabolic targets and their symbols.
//!
//! A [`RelaxationSystem`] is stored in decoupled, rescaled form: `k` conserved
//! components `U^I` and `m` relaxing components `U^II`, evolving as
//!
//! ```text
//! U^I_t      + M11(x,D) U^I / eps + M12(x,D) U^II      = D~^I(x, U^I, U^II, eps) + f(x, U^I)
//! eps^2 U^II_t + M21(x,D) U^I + eps M22(x,D) U^II = Q(x, U^I, eps U^II) / eps + D^II(x, U^I, eps U^II)
//! ```
//!
//! with `M11 = 0` for every well-posed relaxation (it is kept so that degenerate
//! systems can be represented and diagnosed). The stiff source `Q(x, u, z)` and its
//! jacobian `Q_nu = dQ/dz` take the unscaled relaxing variable `z = eps U^II`.
//!
//! Principal symbols follow one convention throughout: the symbol of `A(x, D)` with
//! `D = d/dx` is `i * sum_j xi_j A_j(x)`, and [`RelaxationSystem::principal_symbol`]
//! returns its negative, so the transport part reads `Z_t = sigma(x, xi) Z / eps` per mode.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::linalg;

pub type MatrixFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
pub type SourceFn = Arc<dyn Fn(&[f64], &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type SourceJacobianFn = Arc<dyn Fn(&[f64], &DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ScaledSourceFn = Arc<dyn Fn(&[f64], &DVector<f64>, &DVector<f64>, f64) -> DVector<f64> + Send + Sync>;
pub type ReactionFn = Arc<dyn Fn(&[f64], &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type StateFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type StateMatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type SymbolBlockFn = Arc<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync>;

/// A matrix-valued coefficient over space.
#[derive(Clone)]
pub enum Coefficient {
    Constant(DMatrix<f64>),
    Variable { rows: usize, cols: usize, eval: MatrixFn },
}

impl Coefficient {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Coefficient::Constant(DMatrix::zeros(rows, cols))
    }

    pub fn variable<F>(rows: usize, cols: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Coefficient::Variable {
            rows,
            cols,
            eval: Arc::new(f),
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            Coefficient::Constant(m) => m.clone(),
            Coefficient::Variable { eval, .. } => eval(x),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Coefficient::Constant(m) => m.shape(),
            Coefficient::Variable { rows, cols, .. } => (*rows, *cols),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Constant(m) => m.iter().all(|&v| v == 0.0),
            Coefficient::Variable { .. } => false,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(m) => write!(f, "Constant({m:?})"),
            Coefficient::Variable { rows, cols, .. } => write!(f, "Variable({rows}x{cols})"),
        }
    }
}

/// Differential transport: per-axis blocks of `sum_j A_j(x) d_j`.
#[derive(Clone, Debug)]
pub struct DifferentialTransport {
    pub m11: Vec<Coefficient>,
    pub m12: Vec<Coefficient>,
    pub m21: Vec<Coefficient>,
    pub m22: Vec<Coefficient>,
}

/// Constant-coefficient Fourier multiplier transport with symbol `[[0, B], [-B, 0]]`.
#[derive(Clone)]
pub struct SpectralMultiplier {
    /// `B(xi)`, a `k x k` matrix for every wave-vector.
    pub symbol: Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>,
    /// `B` tabulated on the Fourier modes of the grid it was built for.
    pub table: Option<(SpatialGrid, Arc<Vec<DMatrix<f64>>>)>,
}

impl fmt::Debug for SpectralMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralMultiplier")
            .field("tabulated", &self.table.is_some())
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum Transport {
    Differential(DifferentialTransport),
    Multiplier(SpectralMultiplier),
}

/// Stiff source `Q(x, u, z)` with `Q(x, u, 0) = 0`, and its jacobian in `z`.
#[derive(Clone)]
pub struct StiffSource {
    pub value: SourceFn,
    pub jacobian: SourceJacobianFn,
    /// `Q` is linear in `z` for fixed `(x, u)`.
    pub linear: bool,
}

impl StiffSource {
    /// `Q(x, u, z) = C(x) z`.
    pub fn linear(c: Coefficient) -> Self {
        let c1 = c.clone();
        Self {
            value: Arc::new(move |x, _u, z| c1.eval(x) * z),
            jacobian: Arc::new(move |x, _u, _z| c.eval(x)),
            linear: true,
        }
    }
}

impl fmt::Debug for StiffSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StiffSource").field("linear", &self.linear).finish()
    }
}

/// Decoupled hyperbolic relaxation system in rescaled variables.
#[derive(Clone)]
pub struct RelaxationSystem {
    name: String,
    k: usize,
    m: usize,
    d: usize,
    transport: Transport,
    source: StiffSource,
    lower_i: Option<ScaledSourceFn>,
    lower_ii: Option<SourceFn>,
    reaction: Option<ReactionFn>,
    positive_conserved: bool,
}

impl fmt::Debug for RelaxationSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RelaxationSystem")
            .field("name", &self.name)
            .field("k", &self.k)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("transport", &self.transport)
            .field("source", &self.source)
            .finish()
    }
}

fn check_blocks(what: &str, blocks: &[Coefficient], d: usize, shape: (usize, usize)) -> Result<()> {
    if blocks.len() != d {
        return Err(Error::Dimension(format!(
            "{what}: expected {d} axis blocks, got {}",
            blocks.len()
        )));
    }
    for (j, b) in blocks.iter().enumerate() {
        if b.shape() != shape {
            return Err(Error::Dimension(format!(
                "{what}[{j}] is {:?}, expected {:?}",
                b.shape(),
                shape
            )));
        }
    }
    Ok(())
}

impl RelaxationSystem {
    /// Differential system with `M11 = 0`.
    pub fn differential(
        name: impl Into<String>,
        k: usize,
        m: usize,
        m12: Vec<Coefficient>,
        m21: Vec<Coefficient>,
        m22: Vec<Coefficient>,
        source: StiffSource,
    ) -> Result<Self> {
        let d = m12.len();
        if d == 0 || d > 2 {
            return Err(Error::Dimension(format!("spatial dimension {d} not in 1..=2")));
        }
        if k == 0 || m == 0 {
            return Err(Error::Dimension("k and m must be positive".into()));
        }
        check_blocks("M12", &m12, d, (k, m))?;
        check_blocks("M21", &m21, d, (m, k))?;
        check_blocks("M22", &m22, d, (m, m))?;
        Ok(Self {
            name: name.into(),
            k,
            m,
            d,
            transport: Transport::Differential(DifferentialTransport {
                m11: vec![Coefficient::zeros(k, k); d],
                m12,
                m21,
                m22,
            }),
            source,
            lower_i: None,
            lower_ii: None,
            reaction: None,
            positive_conserved: false,
        })
    }

    /// Fourier-multiplier system `[[0, B(xi)], [-B(xi), 0]]` with `m = k`.
    pub fn multiplier(
        name: impl Into<String>,
        k: usize,
        d: usize,
        multiplier: SpectralMultiplier,
        source: StiffSource,
    ) -> Result<Self> {
        if d == 0 || d > 2 || k == 0 {
            return Err(Error::Dimension(format!("invalid sizes k={k}, d={d}")));
        }
        Ok(Self {
            name: name.into(),
            k,
            m: k,
            d,
            transport: Transport::Multiplier(multiplier),
            source,
            lower_i: None,
            lower_ii: None,
            reaction: None,
            positive_conserved: false,
        })
    }

    /// Adds a conserved-block transport `M11`, which violates the structure condition.
    pub fn with_m11(mut self, m11: Vec<Coefficient>) -> Result<Self> {
        check_blocks("M11", &m11, self.d, (self.k, self.k))?;
        match &mut self.transport {
            Transport::Differential(t) => {
                t.m11 = m11;
                Ok(self)
            }
            Transport::Multiplier(_) => Err(Error::Unsupported("M11 blocks on a multiplier system".into())),
        }
    }

    /// `D~^I(x, u, v, eps) = D^I(u, eps v) / eps`, supplied already divided.
    pub fn with_lower_i(mut self, f: ScaledSourceFn) -> Self {
        self.lower_i = Some(f);
        self
    }

    /// `D^II(x, u, z)`.
    pub fn with_lower_ii(mut self, f: SourceFn) -> Self {
        self.lower_ii = Some(f);
        self
    }

    /// O(1) source of the conserved equation (`f` or `G` of the target).
    pub fn with_reaction(mut self, f: ReactionFn) -> Self {
        self.reaction = Some(f);
        self
    }

    /// Conserved components must stay positive (kinetic densities).
    pub fn with_positive_conserved(mut self) -> Self {
        self.positive_conserved = true;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.k + self.m
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn transport(&self) -> &Transport {
        &self.transport
    }
    pub fn source(&self) -> &StiffSource {
        &self.source
    }
    pub fn lower_i(&self) -> Option<&ScaledSourceFn> {
        self.lower_i.as_ref()
    }
    pub fn lower_ii(&self) -> Option<&SourceFn> {
        self.lower_ii.as_ref()
    }
    pub fn reaction(&self) -> Option<&ReactionFn> {
        self.reaction.as_ref()
    }
    pub fn positive_conserved(&self) -> bool {
        self.positive_conserved
    }

    pub fn is_multiplier(&self) -> bool {
        matches!(self.transport, Transport::Multiplier(_))
    }

    /// Transport coefficients do not depend on `x`.
    pub fn constant_coefficients(&self) -> bool {
        match &self.transport {
            Transport::Differential(t) => t
                .m11
                .iter()
                .chain(&t.m12)
                .chain(&t.m21)
                .chain(&t.m22)
                .all(Coefficient::is_constant),
            Transport::Multiplier(_) => true,
        }
    }

    /// Lower-order terms vanish: no `D~^I`, `D^II` or reaction.
    pub fn source_free(&self) -> bool {
        self.lower_i.is_none() && self.lower_ii.is_none() && self.reaction.is_none()
    }

    /// Full `N x N` coefficient `A_j(x)` of a differential system.
    pub fn axis_matrix(&self, x: &[f64], axis: usize) -> Result<DMatrix<f64>> {
        let Transport::Differential(t) = &self.transport else {
            return Err(Error::Unsupported("axis coefficients of a multiplier system".into()));
        };
        let (k, n) = (self.k, self.n());
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (k, k)).copy_from(&t.m11[axis].eval(x));
        a.view_mut((0, k), (k, self.m)).copy_from(&t.m12[axis].eval(x));
        a.view_mut((k, 0), (self.m, k)).copy_from(&t.m21[axis].eval(x));
        a.view_mut((k, k), (self.m, self.m)).copy_from(&t.m22[axis].eval(x));
        Ok(a)
    }

    fn check_point(&self, x: &[f64], xi: &[f64]) -> Result<()> {
        if x.len() != self.d || xi.len() != self.d {
            return Err(Error::Dimension(format!(
                "system has d={}, got x of length {} and xi of length {}",
                self.d,
                x.len(),
                xi.len()
            )));
        }
        Ok(())
    }

    /// Principal symbol `sigma(x, xi)` (complex `N x N`).
    ///
    /// Differential systems give `-i * sum_j xi_j A_j(x)`; multiplier systems give
    /// `[[0, B(xi)], [-B(xi), 0]]`.
    pub fn principal_symbol(&self, x: &[f64], xi: &[f64]) -> Result<DMatrix<Complex64>> {
        self.check_point(x, xi)?;
        let n = self.n();
        match &self.transport {
            Transport::Differential(_) => {
                let mut t = DMatrix::<f64>::zeros(n, n);
                for (j, &xj) in xi.iter().enumerate() {
                    if xj != 0.0 {
                        t += self.axis_matrix(x, j)? * xj;
                    }
                }
                Ok(t.map(|v| Complex64::new(0.0, -v)))
            }
            Transport::Multiplier(mult) => {
                let b = (mult.symbol)(xi);
                if b.shape() != (self.k, self.k) {
                    return Err(Error::Dimension(format!(
                        "multiplier symbol is {:?}, expected {k}x{k}",
                        b.shape(),
                        k = self.k
                    )));
                }
                let mut s = DMatrix::<f64>::zeros(n, n);
                s.view_mut((0, self.k), (self.k, self.k)).copy_from(&b);
                s.view_mut((self.k, 0), (self.k, self.k)).copy_from(&(-&b));
                Ok(linalg::to_complex(&s))
            }
        }
    }

    /// Stiff-source jacobian `Q_nu(x, u, z)`.
    pub fn stiff_jacobian(&self, x: &[f64], u: &DVector<f64>, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        if u.len() != self.k || z.len() != self.m {
            return Err(Error::Dimension(format!(
                "state sizes ({}, {}) do not match (k, m) = ({}, {})",
                u.len(),
                z.len(),
                self.k,
                self.m
            )));
        }
        let q = (self.source.jacobian)(x, u, z);
        if q.shape() != (self.m, self.m) {
            return Err(Error::Dimension(format!(
                "Q_nu is {:?}, expected {m}x{m}",
                q.shape(),
                m = self.m
            )));
        }
        if !linalg::all_finite(&q) {
            return Err(Error::NonFinite {
                what: "Q_nu".into(),
                x: x.to_vec(),
            });
        }
        Ok(q)
    }

    /// Stiff source `Q(x, u, z)`.
    pub fn stiff_source(&self, x: &[f64], u: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        (self.source.value)(x, u, z)
    }

    /// `Q_nu(x, u, 0)^{-1}`, or the singular-jacobian error.
    pub fn equilibrium_inverse(&self, x: &[f64], u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let q = self.stiff_jacobian(x, u, &DVector::zeros(self.m))?;
        linalg::checked_inverse(&q).ok_or_else(|| Error::SingularJacobian {
            x: x.to_vec(),
            u: u.iter().copied().collect(),
            sigma_min: linalg::smallest_singular_value(&q),
        })
    }

    /// Second-order generator `G(x, u, xi)` of the relaxed equation, `U_t = G U` per mode.
    ///
    /// With `sigma12`, `sigma21` the off-diagonal blocks of the principal symbol,
    /// `G = -sigma12 Q_nu(x, u, 0)^{-1} sigma21`; for differential systems this is
    /// `(sum xi_j M12_j) Q_nu^{-1} (sum xi_j M21_j)`.
    pub fn limit_generator(&self, x: &[f64], u: &DVector<f64>, xi: &[f64]) -> Result<DMatrix<f64>> {
        let sigma = self.principal_symbol(x, xi)?;
        let qinv = linalg::to_complex(&self.equilibrium_inverse(x, u)?);
        let (k, m) = (self.k, self.m);
        let s12 = sigma.view((0, k), (k, m)).clone_owned();
        let s21 = sigma.view((k, 0), (m, k)).clone_owned();
        let g = -(s12 * qinv * s21);
        Ok(g.map(|c| c.re))
    }
}

/// Scalar-free description of a parabolic system to approximate.
#[derive(Clone)]
pub enum ParabolicTarget {
    ReactionDiffusion(ReactionDiffusion),
    QuasilinearDivergence(QuasilinearDivergence),
}

/// `U_t = sum_{j,l} A_{jl}(x) d_j d_l U + f(U)`.
#[derive(Clone)]
pub struct ReactionDiffusion {
    pub k: usize,
    pub d: usize,
    /// Row-major `d x d` array of `k x k` blocks: `a[j * d + l] = A_{jl}`.
    pub a: Vec<Coefficient>,
    pub reaction: Option<StateFn>,
}

/// `U_t + sum_i d_i (F_i(U) - sum_j B_ij(U) d_j U) = G(U)`.
#[derive(Clone)]
pub struct QuasilinearDivergence {
    pub k: usize,
    pub d: usize,
    /// `k x d` matrix whose column `i` is `F_i(U)`.
    pub flux: Option<StateMatrixFn>,
    /// `kd x kd` block matrix with blocks `B_ij(U)`.
    pub diffusion: StateMatrixFn,
    pub source: Option<StateFn>,
}

impl ReactionDiffusion {
    pub fn new(k: usize, d: usize, a: Vec<Coefficient>) -> Result<Self> {
        if a.len() != d * d {
            return Err(Error::Dimension(format!(
                "expected {} diffusion blocks, got {}",
                d * d,
                a.len()
            )));
        }
        if let Some(b) = a.iter().find(|b| b.shape() != (k, k)) {
            return Err(Error::Dimension(format!(
                "diffusion block is {:?}, expected {k}x{k}",
                b.shape()
            )));
        }
        Ok(Self {
            k,
            d,
            a,
            reaction: None,
        })
    }

    /// Scalar (`k = 1`) target with a constant `d x d` weight matrix.
    pub fn scalar(weights: &DMatrix<f64>) -> Result<Self> {
        let d = weights.nrows();
        if weights.ncols() != d {
            return Err(Error::Dimension("weight matrix must be square".into()));
        }
        let a = (0..d * d)
            .map(|idx| Coefficient::Constant(DMatrix::from_element(1, 1, weights[(idx / d, idx % d)])))
            .collect();
        Self::new(1, d, a)
    }

    pub fn with_reaction(mut self, f: StateFn) -> Self {
        self.reaction = Some(f);
        self
    }

    pub fn constant(&self) -> bool {
        self.a.iter().all(Coefficient::is_constant)
    }

    /// The `kd x kd` block matrix `[A_{jl}(x)]`.
    pub fn block_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let (k, d) = (self.k, self.d);
        let mut big = DMatrix::zeros(k * d, k * d);
        for j in 0..d {
            for l in 0..d {
                big.view_mut((j * k, l * k), (k, k))
                    .copy_from(&self.a[j * d + l].eval(x));
            }
        }
        big
    }

    /// `sum_{j,l} A_{jl}(x) xi_j xi_l`.
    pub fn second_order(&self, x: &[f64], xi: &[f64]) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.k, self.k);
        for j in 0..self.d {
            for l in 0..self.d {
                s += self.a[j * self.d + l].eval(x) * (xi[j] * xi[l]);
            }
        }
        s
    }
}

impl QuasilinearDivergence {
    pub fn new(k: usize, d: usize, diffusion: StateMatrixFn) -> Self {
        Self {
            k,
            d,
            flux: None,
            diffusion,
            source: None,
        }
    }

    pub fn with_flux(mut self, flux: StateMatrixFn) -> Self {
        self.flux = Some(flux);
        self
    }

    pub fn with_source(mut self, g: StateFn) -> Self {
        self.source = Some(g);
        self
    }

    /// Flux columns stacked into a `kd` vector `[F_1; ...; F_d]`.
    pub fn stacked_flux(&self, u: &DVector<f64>) -> DVector<f64> {
        let (k, d) = (self.k, self.d);
        match &self.flux {
            Some(f) => {
                let fm = f(u);
                DVector::from_iterator(
                    k * d,
                    (0..d)
                        .flat_map(|i| (0..k).map(move |r| (r, i)))
                        .map(|(r, i)| fm[(r, i)]),
                )
            }
            None => DVector::zeros(k * d),
        }
    }

    /// `sum_{i,j} B_ij(u) xi_i xi_j`.
    pub fn second_order(&self, u: &DVector<f64>, xi: &[f64]) -> DMatrix<f64> {
        let (k, d) = (self.k, self.d);
        let b = (self.diffusion)(u);
        let mut s = DMatrix::zeros(k, k);
        for i in 0..d {
            for j in 0..d {
                s += b.view((i * k, j * k), (k, k)) * (xi[i] * xi[j]);
            }
        }
        s
    }
}

impl ParabolicTarget {
    pub fn k(&self) -> usize {
        match self {
            ParabolicTarget::ReactionDiffusion(t) => t.k,
            ParabolicTarget::QuasilinearDivergence(t) => t.k,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            ParabolicTarget::ReactionDiffusion(t) => t.d,
            ParabolicTarget::QuasilinearDivergence(t) => t.d,
        }
    }

    /// Second-order symbol of the target, `-sum A_{jl} xi_j xi_l` (or `-sum B_ij(u) xi_i xi_j`).
    pub fn symbol(&self, x: &[f64], u: &DVector<f64>, xi: &[f64]) -> DMatrix<f64> {
        match self {
            ParabolicTarget::ReactionDiffusion(t) => -t.second_order(x, xi),
            ParabolicTarget::QuasilinearDivergence(t) => -t.second_order(u, xi),
        }
    }
}

/// Block-diagonal symmetrizer `diag(R11(x, xi), R22(x, xi))`, degree zero in `xi`.
#[derive(Clone)]
pub struct Symmetrizer {
    pub k: usize,
    pub m: usize,
    pub r11: SymbolBlockFn,
    pub r22: SymbolBlockFn,
    pub eta: f64,
}

impl fmt::Debug for Symmetrizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symmetrizer")
            .field("k", &self.k)
            .field("m", &self.m)
            .field("eta", &self.eta)
            .finish()
    }
}

impl Symmetrizer {
    pub fn constant(r11: DMatrix<f64>, r22: DMatrix<f64>, eta: f64) -> Self {
        let (k, m) = (r11.nrows(), r22.nrows());
        Self {
            k,
            m,
            r11: Arc::new(move |_, _| r11.clone()),
            r22: Arc::new(move |_, _| r22.clone()),
            eta,
        }
    }

    pub fn identity(k: usize, m: usize) -> Self {
        Self::constant(DMatrix::identity(k, k), DMatrix::identity(m, m), 0.5)
    }

    pub fn assemble(&self, x: &[f64], xi: &[f64]) -> DMatrix<f64> {
        let n = self.k + self.m;
        let mut r = DMatrix::zeros(n, n);
        r.view_mut((0, 0), (self.k, self.k)).copy_from(&(self.r11)(x, xi));
        r.view_mut((self.k, self.k), (self.m, self.m))
            .copy_from(&(self.r22)(x, xi));
        r
    }
}

/// Discrete `(U^I, U^II)` on a grid at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub u_i: Vec<Vec<f64>>,
    pub u_ii: Vec<Vec<f64>>,
    pub t: f64,
    pub eps: f64,
}

impl FieldState {
    pub fn new(u_i: Vec<Vec<f64>>, u_ii: Vec<Vec<f64>>, t: f64, eps: f64, grid: &SpatialGrid) -> Result<Self> {
        let state = Self { u_i, u_ii, t, eps };
        state.validate(grid)?;
        Ok(state)
    }

    pub fn zeros(k: usize, m: usize, grid: &SpatialGrid, eps: f64) -> Self {
        Self {
            u_i: vec![vec![0.0; grid.len()]; k],
            u_ii: vec![vec![0.0; grid.len()]; m],
            t: 0.0,
            eps,
        }
    }

    pub fn validate(&self, grid: &SpatialGrid) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::Precondition(format!(
                "epsilon must be positive, got {}",
                self.eps
            )));
        }
        for (what, comps) in [("U^I", &self.u_i), ("U^II", &self.u_ii)] {
            for c in comps.iter() {
                if c.len() != grid.len() {
                    return Err(Error::Dimension(format!(
                        "{what} component has {} values on a grid of {}",
                        c.len(),
                        grid.len()
                    )));
                }
                if let Some(cell) = c.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        what: what.into(),
                        x: grid.point(cell),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn check_sizes(&self, sys: &RelaxationSystem) -> Result<()> {
        if self.u_i.len() != sys.k() || self.u_ii.len() != sys.m() {
            return Err(Error::Dimension(format!(
                "state has ({}, {}) components, system expects ({}, {})",
                self.u_i.len(),
                self.u_ii.len(),
                sys.k(),
                sys.m()
            )));
        }
        Ok(())
    }

    pub fn conserved_at(&self, cell: usize) -> DVector<f64> {
        DVector::from_iterator(self.u_i.len(), self.u_i.iter().map(|c| c[cell]))
    }

    pub fn relaxing_at(&self, cell: usize) -> DVector<f64> {
        DVector::from_iterator(self.u_ii.len(), self.u_ii.iter().map(|c| c[cell]))
    }
}
