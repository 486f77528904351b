//! Sampled verification of the structural hypotheses of a relaxation system.
//!
//! Every check reduces to a scalar *slack* evaluated at one sample `(x, xi, u)`.
//! The entry's margin is the smallest slack over the [`SampleSet`] and its witness is
//! the first sample attaining it, so re-evaluating the slack at the witness (see
//! [`recheck`]) reproduces the verdict.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::io::fmt_num;
use crate::linalg;
use crate::system::{ParabolicTarget, RelaxationSystem, Symmetrizer};

/// Relative bound on imaginary eigenvalue parts and on skew-adjointness defects.
pub const EIGEN_TOL: f64 = 1e-9;
/// Floor for `det[(M21)^T M21]` on unit wave-vectors.
pub const DET_FLOOR: f64 = 1e-10;
/// Relative tolerance on a vanishing conserved block.
pub const ZERO_BLOCK_TOL: f64 = 1e-12;
/// Finite-difference step and relative tolerance for the stiff jacobian.
pub const JACOBIAN_STEP: f64 = 1e-5;
pub const JACOBIAN_TOL: f64 = 1e-6;
/// Largest sampled Lipschitz constant accepted for lower-order terms.
pub const LIPSCHITZ_CAP: f64 = 1e8;
/// Default angular sweep in two dimensions.
pub const DEFAULT_DIRECTIONS_2D: usize = 64;

const NULL_LIMIT_NOTE: &str =
    "null-limit: conserved-block transport is nonzero so the relaxation limit is the zero solution";

#[derive(Clone, Debug, PartialEq)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub per_axis: usize,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension(
                "state box bounds must have equal, positive length".into(),
            ));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
        {
            return Err(Error::Precondition("state box needs finite lower <= upper".into()));
        }
        Ok(Self {
            lower,
            upper,
            per_axis: 5,
        })
    }

    pub fn symmetric(k: usize, radius: f64) -> Result<Self> {
        Self::new(vec![-radius; k], vec![radius; k])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn axis_values(&self, j: usize) -> Vec<f64> {
        let (a, b) = (self.lower[j], self.upper[j]);
        if a == b || self.per_axis < 2 {
            return vec![a];
        }
        (0..self.per_axis)
            .map(|i| a + (b - a) * i as f64 / (self.per_axis - 1) as f64)
            .collect()
    }

    /// Tensor-product states, first component fastest.
    pub fn states(&self) -> Vec<DVector<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|j| self.axis_values(j)).collect();
        let total: usize = axes.iter().map(Vec::len).product();
        (0..total)
            .map(|mut flat| {
                DVector::from_iterator(
                    self.dim(),
                    axes.iter().map(|vals| {
                        let v = vals[flat % vals.len()];
                        flat /= vals.len();
                        v
                    }),
                )
            })
            .collect()
    }

    /// Pairs of states adjacent along one axis of the tensor grid.
    pub fn neighbour_pairs(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        let states = self.states();
        let sizes: Vec<usize> = (0..self.dim()).map(|j| self.axis_values(j).len()).collect();
        let mut pairs = Vec::new();
        for (flat, s) in states.iter().enumerate() {
            let mut stride = 1;
            for &n in &sizes {
                if (flat / stride) % n + 1 < n {
                    pairs.push((s.clone(), states[flat + stride].clone()));
                }
                stride *= n;
            }
        }
        pairs
    }
}

/// Discretization of "for all (x, xi, u)".
#[derive(Clone, Debug)]
pub struct SampleSet {
    points: Vec<Vec<f64>>,
    directions: Vec<Vec<f64>>,
    state_box: StateBox,
    states: Vec<DVector<f64>>,
}

/// Unit wave-vectors: `{+1, -1}` in 1D, a uniform angular sweep in 2D.
pub fn unit_directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        _ => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
    }
}

impl SampleSet {
    pub fn new(points: Vec<Vec<f64>>, directions: Vec<Vec<f64>>, state_box: StateBox) -> Result<Self> {
        if points.is_empty() || directions.is_empty() {
            return Err(Error::Precondition("sample set must be nonempty".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) || directions.iter().any(|xi| xi.len() != d) {
            return Err(Error::Dimension("sample points and directions disagree on d".into()));
        }
        if let Some(xi) = directions
            .iter()
            .find(|xi| (xi.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs() > 1e-12)
        {
            return Err(Error::Precondition(format!("direction {xi:?} is not a unit vector")));
        }
        let states = state_box.states();
        Ok(Self {
            points,
            directions,
            state_box,
            states,
        })
    }

    /// Grid subsample (8 nodes per axis) with the default direction sweep.
    pub fn for_grid(grid: &SpatialGrid, state_box: StateBox) -> Result<Self> {
        Self::new(
            grid.subsample(8),
            unit_directions(grid.dim(), DEFAULT_DIRECTIONS_2D),
            state_box,
        )
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }
    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }
    pub fn state_box(&self) -> &StateBox {
        &self.state_box
    }
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CheckKind {
    Hyperbolicity,
    ConservedBlock,
    RankCondition,
    Dissipativity,
    Symmetrizer,
    SourceEquilibrium,
    SourceJacobian,
    Lipschitz,
    Petrowski,
    StrongParabolicity,
}

impl CheckKind {
    pub fn name(self) -> &'static str {
        match self {
            CheckKind::Hyperbolicity => "hyperbolicity",
            CheckKind::ConservedBlock => "conserved_block",
            CheckKind::RankCondition => "rank_condition",
            CheckKind::Dissipativity => "dissipativity",
            CheckKind::Symmetrizer => "symmetrizer",
            CheckKind::SourceEquilibrium => "source_equilibrium",
            CheckKind::SourceJacobian => "source_jacobian",
            CheckKind::Lipschitz => "lipschitz",
            CheckKind::Petrowski => "petrowski",
            CheckKind::StrongParabolicity => "strong_parabolicity",
        }
    }

    /// Strict checks need a positive slack, the others a nonnegative one.
    pub fn passes(self, slack: f64) -> bool {
        match self {
            CheckKind::RankCondition
            | CheckKind::Dissipativity
            | CheckKind::Petrowski
            | CheckKind::StrongParabolicity => slack > 0.0,
            _ => slack >= 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Witness {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub u: Vec<f64>,
    /// The natural offending quantity (eigenvalue, determinant, defect norm, ...).
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckEntry {
    pub kind: CheckKind,
    pub passed: bool,
    /// Smallest slack over the samples; `lambda_0`, `alpha_0` or `c_0` for the spectral bounds.
    pub margin: f64,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    pub fn entry(&self, kind: CheckKind) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.kind == kind)
    }

    pub fn failing(&self) -> Vec<CheckKind> {
        self.entries.iter().filter(|e| !e.passed).map(|e| e.kind).collect()
    }

    /// `check,pass,margin,witness` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,pass,margin,witness\n");
        for e in &self.entries {
            let mut w = String::new();
            if let Some(wit) = &e.witness {
                let join = |v: &[f64]| v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(" ");
                let _ = write!(
                    w,
                    "x=[{}];xi=[{}];u=[{}];value={}",
                    join(&wit.x),
                    join(&wit.xi),
                    join(&wit.u),
                    fmt_num(wit.value)
                );
            }
            if let Some(note) = &e.note {
                if !w.is_empty() {
                    w.push(';');
                }
                let _ = write!(w, "note={}", note.replace(',', ";"));
            }
            let _ = writeln!(out, "{},{},{},{}", e.kind.name(), e.passed, fmt_num(e.margin), w);
        }
        out
    }
}

/// A sample evaluation: slack and the reported value.
#[derive(Clone, Copy, Debug)]
struct Eval {
    slack: f64,
    value: f64,
}

impl Eval {
    fn failed() -> Self {
        Eval {
            slack: f64::NEG_INFINITY,
            value: f64::NAN,
        }
    }
}

struct Sample<'a> {
    x: &'a [f64],
    xi: &'a [f64],
    u: Option<&'a DVector<f64>>,
}

fn reduce(kind: CheckKind, samples: Vec<Sample<'_>>, eval: impl Fn(&Sample<'_>) -> Eval + Sync) -> CheckEntry {
    let evals: Vec<Eval> = samples.par_iter().map(&eval).collect();
    let mut worst = 0;
    for (i, e) in evals.iter().enumerate() {
        // NaN slack counts as the worst possible outcome
        let slack = if e.slack.is_nan() { f64::NEG_INFINITY } else { e.slack };
        let best = if evals[worst].slack.is_nan() {
            f64::NEG_INFINITY
        } else {
            evals[worst].slack
        };
        if slack < best {
            worst = i;
        }
    }
    let e = evals[worst];
    let margin = if e.slack.is_nan() { f64::NEG_INFINITY } else { e.slack };
    let s = &samples[worst];
    CheckEntry {
        kind,
        passed: kind.passes(margin),
        margin,
        witness: Some(Witness {
            x: s.x.to_vec(),
            xi: s.xi.to_vec(),
            u: s.u.map(|u| u.iter().copied().collect()).unwrap_or_default(),
            value: e.value,
        }),
        note: None,
    }
}

fn x_xi_samples(samples: &SampleSet) -> Vec<Sample<'_>> {
    samples
        .points
        .iter()
        .flat_map(|x| samples.directions.iter().map(move |xi| Sample { x, xi, u: None }))
        .collect()
}

fn x_u_samples(samples: &SampleSet) -> Vec<Sample<'_>> {
    let xi0: &[f64] = &samples.directions[0];
    samples
        .points
        .iter()
        .flat_map(|x| samples.states.iter().map(move |u| Sample { x, xi: xi0, u: Some(u) }))
        .collect()
}

fn x_u_xi_samples(samples: &SampleSet) -> Vec<Sample<'_>> {
    samples
        .points
        .iter()
        .flat_map(|x| {
            samples
                .states
                .iter()
                .flat_map(move |u| samples.directions.iter().map(move |xi| Sample { x, xi, u: Some(u) }))
        })
        .collect()
}

fn slack_hyperbolicity(sys: &RelaxationSystem, x: &[f64], xi: &[f64]) -> Eval {
    let Ok(sigma) = sys.principal_symbol(x, xi) else {
        return Eval::failed();
    };
    let isigma = sigma.map(|c| c * num_complex::Complex64::i());
    let Some(vals) = linalg::eigenvalues_complex(&isigma) else {
        return Eval::failed();
    };
    let radius = linalg::spectral_radius(&vals);
    let worst_im = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    Eval {
        slack: EIGEN_TOL * radius - worst_im,
        value: worst_im,
    }
}

fn slack_conserved_block(sys: &RelaxationSystem, x: &[f64], xi: &[f64]) -> Eval {
    let Ok(sigma) = sys.principal_symbol(x, xi) else {
        return Eval::failed();
    };
    let k = sys.k();
    let block = sigma.view((0, 0), (k, k)).clone_owned();
    let norm = linalg::frobenius_c(&block);
    Eval {
        slack: ZERO_BLOCK_TOL * linalg::frobenius_c(&sigma).max(1.0) - norm,
        value: norm,
    }
}

fn slack_rank(sys: &RelaxationSystem, x: &[f64], xi: &[f64]) -> Eval {
    let (k, m) = (sys.k(), sys.m());
    if k > m {
        return Eval {
            slack: -((k - m) as f64),
            value: 0.0,
        };
    }
    let Ok(sigma) = sys.principal_symbol(x, xi) else {
        return Eval::failed();
    };
    let s21 = sigma.view((k, 0), (m, k)).clone_owned();
    let gram = s21.adjoint() * s21;
    let det = gram.determinant().re;
    Eval {
        slack: det - DET_FLOOR,
        value: det,
    }
}

fn slack_dissipativity(sys: &RelaxationSystem, x: &[f64], u: &DVector<f64>) -> Eval {
    match sys.stiff_jacobian(x, u, &DVector::zeros(sys.m())) {
        Ok(q) => match linalg::max_sym_eigenvalue(&q) {
            Some(top) => Eval {
                slack: -top,
                value: top,
            },
            None => Eval::failed(),
        },
        Err(_) => Eval::failed(),
    }
}

fn slack_symmetrizer(sys: &RelaxationSystem, r: &Symmetrizer, x: &[f64], xi: &[f64]) -> Eval {
    let Ok(sigma) = sys.principal_symbol(x, xi) else {
        return Eval::failed();
    };
    let r11 = (r.r11)(x, xi);
    let r22 = (r.r22)(x, xi);
    let asym = (&r11 - r11.transpose()).norm() + (&r22 - r22.transpose()).norm();
    let (Some(e11), Some(e22)) = (linalg::min_sym_eigenvalue(&r11), linalg::min_sym_eigenvalue(&r22)) else {
        return Eval::failed();
    };
    let rm = linalg::to_complex(&r.assemble(x, xi)) * sigma;
    let defect = linalg::frobenius_c(&(&rm + rm.adjoint()));
    let scale = linalg::frobenius_c(&rm);
    let slack = (EIGEN_TOL * scale - defect).min(e11.min(e22) - r.eta).min(-asym);
    Eval { slack, value: defect }
}

fn slack_equilibrium(sys: &RelaxationSystem, x: &[f64], u: &DVector<f64>) -> Eval {
    let zero = DVector::zeros(sys.m());
    let mut worst = sys.stiff_source(x, u, &zero).norm();
    if let Some(d1) = sys.lower_i() {
        for eps in [1.0, 0.1, 0.01] {
            worst = worst.max(d1(x, u, &zero, eps).norm());
        }
    }
    let slack = if worst.is_finite() {
        ZERO_BLOCK_TOL * (1.0 + u.norm()) - worst
    } else {
        f64::NEG_INFINITY
    };
    Eval { slack, value: worst }
}

fn jacobian_probes(m: usize) -> Vec<DVector<f64>> {
    vec![
        DVector::zeros(m),
        DVector::from_element(m, 0.1),
        DVector::from_element(m, -0.1),
    ]
}

fn slack_jacobian(sys: &RelaxationSystem, x: &[f64], u: &DVector<f64>) -> Eval {
    let m = sys.m();
    let mut worst_slack = f64::INFINITY;
    let mut worst_err = 0.0;
    for z in jacobian_probes(m) {
        let Ok(q) = sys.stiff_jacobian(x, u, &z) else {
            return Eval::failed();
        };
        let mut fd = DMatrix::zeros(m, m);
        for c in 0..m {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[c] += JACOBIAN_STEP;
            zm[c] -= JACOBIAN_STEP;
            let diff = (sys.stiff_source(x, u, &zp) - sys.stiff_source(x, u, &zm)) / (2.0 * JACOBIAN_STEP);
            fd.set_column(c, &diff);
        }
        let err = (&fd - &q).norm();
        let slack = JACOBIAN_TOL * q.norm().max(1.0) - err;
        let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        if slack < worst_slack {
            worst_slack = slack;
            worst_err = err;
        }
    }
    Eval {
        slack: worst_slack,
        value: worst_err,
    }
}

/// Largest difference quotient of `f` over adjacent pairs of box states.
pub fn sampled_lipschitz<F>(state_box: &StateBox, f: F) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    state_box
        .neighbour_pairs()
        .iter()
        .map(|(a, b)| {
            let q = (f(a) - f(b)).norm() / (a - b).norm();
            if q.is_nan() {
                f64::INFINITY
            } else {
                q
            }
        })
        .fold(0.0, f64::max)
}

fn lipschitz_at(sys: &RelaxationSystem, state_box: &StateBox, x: &[f64]) -> Eval {
    let m = sys.m();
    let mut worst: f64 = 0.0;
    if let Some(d1) = sys.lower_i() {
        for eps in [1.0, 0.1] {
            // D~^I is evaluated at the relaxed equilibrium v = 0 and at a unit offset
            for v in [DVector::zeros(m), DVector::from_element(m, 1.0)] {
                worst = worst.max(sampled_lipschitz(state_box, |u| d1(x, u, &v, eps)));
            }
        }
    }
    if let Some(d2) = sys.lower_ii() {
        worst = worst.max(sampled_lipschitz(state_box, |u| d2(x, u, &DVector::zeros(m))));
    }
    if let Some(f) = sys.reaction() {
        worst = worst.max(sampled_lipschitz(state_box, |u| f(x, u)));
    }
    Eval {
        slack: LIPSCHITZ_CAP - worst,
        value: worst,
    }
}

/// What `check_petrowski` examines.
#[derive(Clone, Copy)]
pub enum ParabolicSource<'a> {
    Target(&'a ParabolicTarget),
    Limit(&'a RelaxationSystem),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParabolicityMode {
    /// `Re eig(G(xi)) <= -alpha_0 |xi|^2`.
    Petrowski,
    /// `sym(-G(xi)) >= c_0 |xi|^2`.
    Strong,
}

fn generator_of(src: ParabolicSource<'_>, x: &[f64], u: &DVector<f64>, xi: &[f64]) -> Option<DMatrix<f64>> {
    match src {
        ParabolicSource::Target(t) => Some(t.symbol(x, u, xi)),
        ParabolicSource::Limit(sys) => sys.limit_generator(x, u, xi).ok(),
    }
}

fn slack_parabolic(src: ParabolicSource<'_>, mode: ParabolicityMode, x: &[f64], u: &DVector<f64>, xi: &[f64]) -> Eval {
    let Some(g) = generator_of(src, x, u, xi) else {
        return Eval::failed();
    };
    if !linalg::all_finite(&g) {
        return Eval::failed();
    }
    match mode {
        ParabolicityMode::Petrowski => match linalg::eigenvalues_real(&g) {
            Some(vals) => {
                let top = vals.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
                Eval {
                    slack: -top,
                    value: top,
                }
            }
            None => Eval::failed(),
        },
        ParabolicityMode::Strong => match linalg::min_sym_eigenvalue(&(-g)) {
            Some(c) => Eval { slack: c, value: c },
            None => Eval::failed(),
        },
    }
}

pub fn check_hyperbolicity(sys: &RelaxationSystem, samples: &SampleSet) -> CheckEntry {
    reduce(CheckKind::Hyperbolicity, x_xi_samples(samples), |s| {
        slack_hyperbolicity(sys, s.x, s.xi)
    })
}

pub fn check_conserved_block(sys: &RelaxationSystem, samples: &SampleSet) -> CheckEntry {
    let mut entry = reduce(CheckKind::ConservedBlock, x_xi_samples(samples), |s| {
        slack_conserved_block(sys, s.x, s.xi)
    });
    if !entry.passed {
        entry.note = Some(NULL_LIMIT_NOTE.into());
    }
    entry
}

pub fn check_rank_condition(sys: &RelaxationSystem, samples: &SampleSet) -> CheckEntry {
    let mut entry = reduce(CheckKind::RankCondition, x_xi_samples(samples), |s| {
        slack_rank(sys, s.x, s.xi)
    });
    if sys.k() > sys.m() {
        entry.note = Some(format!("k = {} exceeds m = {}", sys.k(), sys.m()));
    }
    entry
}

/// Margin is the certified `lambda_0` with `sym(Q_nu) <= -lambda_0 I` on the box.
pub fn check_dissipativity(sys: &RelaxationSystem, samples: &SampleSet) -> CheckEntry {
    reduce(CheckKind::Dissipativity, x_u_samples(samples), |s| {
        slack_dissipativity(sys, s.x, s.u.expect("state sample"))
    })
}

pub fn check_symmetrizer(sys: &RelaxationSystem, r: &Symmetrizer, samples: &SampleSet) -> Result<CheckEntry> {
    if r.k != sys.k() || r.m != sys.m() {
        return Err(Error::Dimension(format!(
            "symmetrizer blocks ({}, {}) do not match (k, m) = ({}, {})",
            r.k,
            r.m,
            sys.k(),
            sys.m()
        )));
    }
    Ok(reduce(CheckKind::Symmetrizer, x_xi_samples(samples), |s| {
        slack_symmetrizer(sys, r, s.x, s.xi)
    }))
}

pub fn check_source_equilibrium(sys: &RelaxationSystem, samples: &SampleSet) -> CheckEntry {
    reduce(CheckKind::SourceEquilibrium, x_u_samples(samples), |s| {
        slack_equilibrium(sys, s.x, s.u.expect("state sample"))
    })
}

pub fn check_source_jacobian(sys: &RelaxationSystem, samples: &SampleSet) -> CheckEntry {
    reduce(CheckKind::SourceJacobian, x_u_samples(samples), |s| {
        slack_jacobian(sys, s.x, s.u.expect("state sample"))
    })
}

pub fn check_lipschitz(sys: &RelaxationSystem, samples: &SampleSet) -> CheckEntry {
    let xi0: &[f64] = &samples.directions[0];
    let list = samples.points.iter().map(|x| Sample { x, xi: xi0, u: None }).collect();
    reduce(CheckKind::Lipschitz, list, |s| {
        lipschitz_at(sys, &samples.state_box, s.x)
    })
}

/// Petrowski mode certifies `alpha_0`, strong mode `c_0`, as the entry margin.
pub fn check_petrowski(src: ParabolicSource<'_>, samples: &SampleSet, mode: ParabolicityMode) -> CheckEntry {
    let kind = match mode {
        ParabolicityMode::Petrowski => CheckKind::Petrowski,
        ParabolicityMode::Strong => CheckKind::StrongParabolicity,
    };
    let mut entry = reduce(kind, x_u_xi_samples(samples), |s| {
        slack_parabolic(src, mode, s.x, s.u.expect("state sample"), s.xi)
    });
    if samples.dim() == 2 && entry.margin.is_finite() {
        refine_angle(&mut entry, samples.directions.len(), |x, u, xi| {
            slack_parabolic(src, mode, x, u, xi)
        });
    }
    entry
}

/// Golden-section search in the angle around a 2-D witness, keeping the better of the two.
fn refine_angle(entry: &mut CheckEntry, directions: usize, eval: impl Fn(&[f64], &DVector<f64>, &[f64]) -> Eval) {
    let Some(w) = entry.witness.clone() else {
        return;
    };
    let u = DVector::from_column_slice(&w.u);
    let at = |theta: f64| {
        let xi = [theta.cos(), theta.sin()];
        let e = eval(&w.x, &u, &xi);
        (if e.slack.is_nan() { f64::NEG_INFINITY } else { e.slack }, e.value, xi)
    };
    let center = w.xi[1].atan2(w.xi[0]);
    let half = 2.0 * std::f64::consts::PI / directions.max(1) as f64;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (center - half, center + half);
    for _ in 0..80 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if at(c).0 < at(d).0 {
            b = d;
        } else {
            a = c;
        }
    }
    let (slack, value, xi) = at(0.5 * (a + b));
    if slack < entry.margin {
        entry.margin = slack;
        entry.passed = entry.kind.passes(slack);
        entry.witness = Some(Witness {
            xi: xi.to_vec(),
            value,
            ..w
        });
    }
}

/// Runs every applicable check. The symmetrizer defaults to the identity.
pub fn validate_all(
    sys: &RelaxationSystem,
    target: Option<&ParabolicTarget>,
    symmetrizer: Option<&Symmetrizer>,
    samples: &SampleSet,
) -> Result<ValidationReport> {
    if samples.dim() != sys.d() {
        return Err(Error::Dimension(format!(
            "samples live in d={}, system in d={}",
            samples.dim(),
            sys.d()
        )));
    }
    if samples.state_box.dim() != sys.k() {
        return Err(Error::Dimension(format!(
            "state box has {} components, system has k={}",
            samples.state_box.dim(),
            sys.k()
        )));
    }
    let identity = Symmetrizer::identity(sys.k(), sys.m());
    let r = symmetrizer.unwrap_or(&identity);
    let mut entries = vec![
        check_hyperbolicity(sys, samples),
        check_conserved_block(sys, samples),
        check_rank_condition(sys, samples),
        check_dissipativity(sys, samples),
        check_symmetrizer(sys, r, samples)?,
        check_source_equilibrium(sys, samples),
        check_source_jacobian(sys, samples),
        check_lipschitz(sys, samples),
        check_petrowski(ParabolicSource::Limit(sys), samples, ParabolicityMode::Petrowski),
    ];
    if let Some(t) = target {
        if t.k() != sys.k() || t.d() != sys.d() {
            return Err(Error::Dimension("target and system sizes differ".into()));
        }
        entries.push(check_petrowski(
            ParabolicSource::Target(t),
            samples,
            ParabolicityMode::Strong,
        ));
    }
    Ok(ValidationReport { entries })
}

/// Re-evaluates the slack of `kind` at a witness.
///
/// `target` is used for the strong-parabolicity entry produced by [`validate_all`];
/// the Lipschitz entry needs the state box the report was built with.
pub fn recheck(
    kind: CheckKind,
    sys: &RelaxationSystem,
    target: Option<&ParabolicTarget>,
    symmetrizer: Option<&Symmetrizer>,
    state_box: &StateBox,
    witness: &Witness,
) -> f64 {
    let u = DVector::from_column_slice(&witness.u);
    let (x, xi) = (&witness.x[..], &witness.xi[..]);
    let identity = Symmetrizer::identity(sys.k(), sys.m());
    let eval = match kind {
        CheckKind::Hyperbolicity => slack_hyperbolicity(sys, x, xi),
        CheckKind::ConservedBlock => slack_conserved_block(sys, x, xi),
        CheckKind::RankCondition => slack_rank(sys, x, xi),
        CheckKind::Dissipativity => slack_dissipativity(sys, x, &u),
        CheckKind::Symmetrizer => slack_symmetrizer(sys, symmetrizer.unwrap_or(&identity), x, xi),
        CheckKind::SourceEquilibrium => slack_equilibrium(sys, x, &u),
        CheckKind::SourceJacobian => slack_jacobian(sys, x, &u),
        CheckKind::Lipschitz => lipschitz_at(sys, state_box, x),
        CheckKind::Petrowski => slack_parabolic(ParabolicSource::Limit(sys), ParabolicityMode::Petrowski, x, &u, xi),
        CheckKind::StrongParabolicity => match target {
            Some(t) => slack_parabolic(ParabolicSource::Target(t), ParabolicityMode::Strong, x, &u, xi),
            None => slack_parabolic(ParabolicSource::Limit(sys), ParabolicityMode::Strong, x, &u, xi),
        },
    };
    if eval.slack.is_nan() {
        f64::NEG_INFINITY
    } else {
        eval.slack
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Coefficient, StiffSource};

    fn scalar(v: f64) -> Coefficient {
        Coefficient::Constant(DMatrix::from_element(1, 1, v))
    }

    fn two_by_two(m12: f64, m21: f64, q: f64) -> RelaxationSystem {
        RelaxationSystem::differential(
            "fixture",
            1,
            1,
            vec![scalar(m12)],
            vec![scalar(m21)],
            vec![scalar(0.0)],
            StiffSource::linear(scalar(q)),
        )
        .unwrap()
    }

    fn samples_1d() -> SampleSet {
        SampleSet::new(
            vec![vec![0.0], vec![0.5]],
            unit_directions(1, 0),
            StateBox::symmetric(1, 1.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rotation_coefficients_are_not_hyperbolic() {
        let sys = two_by_two(1.0, -1.0, -1.0);
        let e = check_hyperbolicity(&sys, &samples_1d());
        assert!(!e.passed);
        let w = e.witness.unwrap();
        assert!((w.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_m21_fails_rank() {
        let sys = two_by_two(1.0, 0.0, -1.0);
        let e = check_rank_condition(&sys, &samples_1d());
        assert!(!e.passed);
        assert_eq!(e.witness.unwrap().value, 0.0);
    }

    #[test]
    fn rank_auto_fails_when_k_exceeds_m() {
        let sys = RelaxationSystem::differential(
            "wide",
            2,
            1,
            vec![Coefficient::Constant(DMatrix::from_element(2, 1, 1.0))],
            vec![Coefficient::Constant(DMatrix::from_element(1, 2, 1.0))],
            vec![scalar(0.0)],
            StiffSource::linear(scalar(-1.0)),
        )
        .unwrap();
        let e = check_rank_condition(
            &sys,
            &SampleSet::new(
                vec![vec![0.0]],
                unit_directions(1, 0),
                StateBox::symmetric(2, 1.0).unwrap(),
            )
            .unwrap(),
        );
        assert!(!e.passed);
        assert!(e.note.is_some());
    }

    #[test]
    fn anti_dissipative_source_fails() {
        let e = check_dissipativity(&two_by_two(1.0, 1.0, 1.0), &samples_1d());
        assert!(!e.passed);
        assert_eq!(e.margin, -1.0);
        let e = check_dissipativity(&two_by_two(1.0, 1.0, -1.0), &samples_1d());
        assert!(e.passed);
        assert_eq!(e.margin, 1.0);
    }

    #[test]
    fn state_box_pairs_cover_each_axis() {
        let b = StateBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(b.states().len(), 25);
        // 5 rows of 4 horizontal pairs plus 5 columns of 4 vertical pairs
        assert_eq!(b.neighbour_pairs().len(), 40);
    }

    #[test]
    fn non_unit_direction_is_rejected() {
        assert!(SampleSet::new(vec![vec![0.0]], vec![vec![2.0]], StateBox::symmetric(1, 1.0).unwrap()).is_err());
    }

    #[test]
    fn csv_has_one_row_per_entry_without_extra_commas() {
        let sys = two_by_two(1.0, 1.0, -1.0);
        let report = validate_all(&sys, None, None, &samples_1d()).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "check,pass,margin,witness");
        assert_eq!(lines.len(), 1 + report.entries.len());
        assert!(lines.iter().all(|l| l.split(',').count() == 4));
    }
}
