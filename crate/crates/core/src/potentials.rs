//! Scalar and vector dissipation potentials, Legendre–Fenchel conjugation
//! (analytic and numeric) and duality certificates.

use crate::error::{check_dim, GflError, Result};
use crate::ext::{ExtReal, Finite, PosInf};
use crate::quad;
use crate::StateVec;
use nalgebra::{DMatrix, SymmetricEigen};
use std::fmt;
use std::sync::Arc;

/// C¹ convex interpolant of a convex function sampled on `[0, r_max]`: a
/// quadratic spline with one extra knot per cell, so that ψ' is piecewise
/// linear and nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Tabulated {
    r: Vec<f64>,
    v: Vec<f64>,
    /// Node slopes.
    d: Vec<f64>,
    /// Per cell: knot offset from `r[i]` and slope at the knot.
    knot: Vec<(f64, f64)>,
}

impl Tabulated {
    /// Builds the interpolant; samples must start at `r = 0` with value 0
    /// and have nondecreasing secant slopes.
    pub fn new(r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if r.len() != v.len() || r.len() < 2 {
            return Err(GflError::InvalidParameter("tabulated potential needs ≥ 2 samples".into()));
        }
        if r[0] != 0.0 || v[0] != 0.0 {
            return Err(GflError::NotConvex("samples must start at ψ(0) = 0".into()));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GflError::InvalidParameter("sample abscissae must increase".into()));
        }
        if v.iter().any(|x| *x < 0.0) {
            return Err(GflError::NotConvex("negative sample".into()));
        }
        let slopes: Vec<f64> = (0..r.len() - 1).map(|i| (v[i + 1] - v[i]) / (r[i + 1] - r[i])).collect();
        for (i, w) in slopes.windows(2).enumerate() {
            if w[1] < w[0] - 1e-12 * (1.0 + w[0].abs()) {
                return Err(GflError::NotConvex(format!("midpoint convexity fails near r = {}", r[i + 1])));
            }
        }
        let n = r.len();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let (s0, s1) = (slopes[i - 1], slopes[i].max(slopes[i - 1]));
            let (h0, h1) = (r[i] - r[i - 1], r[i + 1] - r[i]);
            // Linear interpolation of the neighbouring secants at r[i] lies in [s0, s1].
            d[i] = (s0 * h1 + s1 * h0) / (h0 + h1);
        }
        if n == 2 {
            d[0] = slopes[0];
            d[1] = slopes[0];
        } else {
            d[0] = (2.0 * slopes[0] - d[1]).clamp(0.0, slopes[0]);
            d[n - 1] = (2.0 * slopes[n - 2] - d[n - 2]).max(slopes[n - 2]);
        }
        let knot = (0..n - 1)
            .map(|i| {
                let (h, s, a, b) = (r[i + 1] - r[i], slopes[i], d[i], d[i + 1].max(d[i]));
                if b - a <= 1e-14 * (1.0 + b.abs()) {
                    return (0.5 * h, s);
                }
                // Knot slope ŝ ∈ [a, b] and position x with ∫ψ' = s·h.
                let lo = a.max(2.0 * s - b);
                let hi = b.min(2.0 * s - a);
                let sk = 0.5 * (lo + hi);
                let x = (h * (sk + b - 2.0 * s) / (b - a)).clamp(0.0, h);
                (x, sk)
            })
            .collect();
        Ok(Tabulated { r, v, d, knot })
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    fn locate(&self, x: f64) -> usize {
        match self.r.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.r.len() - 2),
            Err(i) => (i - 1).min(self.r.len() - 2),
        }
    }

    /// Value and derivative on cell `i` at offset `t` from `r[i]`.
    fn piece(&self, i: usize, t: f64) -> (f64, f64) {
        let h = self.r[i + 1] - self.r[i];
        let (x, sk) = self.knot[i];
        let (a, b) = (self.d[i], self.d[i + 1].max(self.d[i]));
        if t <= x {
            let c = if x > 0.0 { (sk - a) / x } else { 0.0 };
            (self.v[i] + a * t + 0.5 * c * t * t, a + c * t)
        } else {
            let y = t - x;
            let c = if h > x { (b - sk) / (h - x) } else { 0.0 };
            (self.v[i] + 0.5 * (a + sk) * x + sk * y + 0.5 * c * y * y, sk + c * y)
        }
    }

    fn eval(&self, x: f64) -> ExtReal {
        if x > self.r_max() {
            return PosInf;
        }
        let i = self.locate(x);
        Finite(self.piece(i, x - self.r[i]).0)
    }

    fn deriv(&self, x: f64) -> f64 {
        let x = x.min(self.r_max());
        let i = self.locate(x);
        self.piece(i, x - self.r[i]).1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// ψ(r) = r²/2
    Quadratic,
    /// ψ(r) = r^p / p
    Power { p: f64 },
    /// ψ(r) = r
    RateIndependent,
    /// ψ(r) = σ r + μ r²/2
    Viscoplastic { sigma: f64, mu: f64 },
    Tabulated(Tabulated),
}

/// A scalar dissipation potential `s · ψ_kind` on `[0, ∞)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPotential {
    pub kind: PotentialKind,
    pub scale: f64,
}

impl ScalarPotential {
    pub fn quadratic() -> Self {
        ScalarPotential { kind: PotentialKind::Quadratic, scale: 1.0 }
    }

    pub fn power(p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(GflError::InvalidParameter(format!("power exponent must exceed 1, got {p}")));
        }
        Ok(ScalarPotential { kind: PotentialKind::Power { p }, scale: 1.0 })
    }

    pub fn rate_independent() -> Self {
        ScalarPotential { kind: PotentialKind::RateIndependent, scale: 1.0 }
    }

    pub fn viscoplastic(sigma: f64, mu: f64) -> Result<Self> {
        if sigma < 0.0 || mu <= 0.0 {
            return Err(GflError::InvalidParameter(format!("viscoplastic needs σ ≥ 0, μ > 0 (σ={sigma}, μ={mu})")));
        }
        Ok(ScalarPotential { kind: PotentialKind::Viscoplastic { sigma, mu }, scale: 1.0 })
    }

    pub fn tabulated(r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Ok(ScalarPotential { kind: PotentialKind::Tabulated(Tabulated::new(r, v)?), scale: 1.0 })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GflError::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    /// ψ(r) for r ≥ 0.
    pub fn eval(&self, r: f64) -> Result<ExtReal> {
        if r < 0.0 || r.is_nan() {
            return Err(GflError::NegativeRate(r));
        }
        Ok(self.scale * self.eval_unscaled(r))
    }

    fn eval_unscaled(&self, r: f64) -> ExtReal {
        match &self.kind {
            PotentialKind::Quadratic => Finite(0.5 * r * r),
            PotentialKind::Power { p } => Finite(r.powf(*p) / p),
            PotentialKind::RateIndependent => Finite(r),
            PotentialKind::Viscoplastic { sigma, mu } => Finite(sigma * r + 0.5 * mu * r * r),
            PotentialKind::Tabulated(t) => t.eval(r),
        }
    }

    /// Right derivative ψ'(r) (at r = 0 this is the right derivative, so
    /// the subdifferential of the even extension is `[−ψ'(0), ψ'(0)]`).
    pub fn derivative(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        self.scale
            * match &self.kind {
                PotentialKind::Quadratic => r,
                PotentialKind::Power { p } => r.powf(p - 1.0),
                PotentialKind::RateIndependent => 1.0,
                PotentialKind::Viscoplastic { sigma, mu } => sigma + mu * r,
                PotentialKind::Tabulated(t) => t.deriv(r),
            }
    }

    /// Second derivative where it exists in closed form.
    pub fn second_derivative(&self, r: f64) -> Option<f64> {
        let s = self.scale;
        match &self.kind {
            PotentialKind::Quadratic => Some(s),
            PotentialKind::Power { p } if *p >= 2.0 || r > 0.0 => Some(s * (p - 1.0) * r.powf(p - 2.0)),
            PotentialKind::Viscoplastic { mu, .. } => Some(s * mu),
            PotentialKind::RateIndependent => Some(0.0),
            _ => None,
        }
    }

    /// Whether the analytic conjugate formula applies.
    pub fn has_analytic_conjugate(&self) -> bool {
        !matches!(self.kind, PotentialKind::Tabulated(_))
    }

    /// True when ψ is strictly convex and C¹ as an even function on ℝ.
    pub fn is_strictly_convex_c1(&self) -> bool {
        match &self.kind {
            PotentialKind::Quadratic | PotentialKind::Power { .. } => true,
            PotentialKind::Viscoplastic { sigma, .. } => *sigma == 0.0,
            _ => false,
        }
    }

    /// True when ψ grows superlinearly, so minimizing movements are well posed.
    pub fn is_superlinear(&self) -> bool {
        !matches!(self.kind, PotentialKind::RateIndependent)
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, PotentialKind::Quadratic)
    }

    /// Analytic ψ*(ζ), `None` for tabulated potentials.
    fn analytic_conjugate(&self, zeta: f64) -> Option<ExtReal> {
        let s = self.scale;
        let z = zeta / s;
        let v = match &self.kind {
            PotentialKind::Quadratic => Finite(0.5 * z * z),
            PotentialKind::Power { p } => {
                let q = p / (p - 1.0);
                Finite(z.powf(q) / q)
            }
            PotentialKind::RateIndependent => {
                if z <= 1.0 {
                    Finite(0.0)
                } else {
                    PosInf
                }
            }
            PotentialKind::Viscoplastic { sigma, mu } => {
                let e = (z - sigma).max(0.0);
                Finite(e * e / (2.0 * mu))
            }
            PotentialKind::Tabulated(_) => return None,
        };
        Some(s * v)
    }

    /// ψ*(ζ) by numeric maximization of `ζ r − ψ(r)`.
    pub fn numeric_conjugate(&self, zeta: f64, opts: &ConjugateOptions) -> Result<ExtReal> {
        if zeta < 0.0 || zeta.is_nan() {
            return Err(GflError::NegativeRate(zeta));
        }
        let (r_max, bounded) = match &self.kind {
            PotentialKind::Tabulated(t) => (t.r_max(), true),
            _ => (opts.r_max, false),
        };
        let mut f = |r: f64| -> ExtReal {
            match self.eval(r) {
                Ok(Finite(v)) => Finite(zeta * r - v),
                _ => Finite(f64::NEG_INFINITY),
            }
        };
        sup_concave(&mut f, r_max, bounded, opts).map_err(|_| GflError::ConjugateDiverged(zeta))
    }
}

impl fmt::Display for ScalarPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PotentialKind::Quadratic => write!(f, "quadratic")?,
            PotentialKind::Power { p } => write!(f, "power(p={p})")?,
            PotentialKind::RateIndependent => write!(f, "rate_independent")?,
            PotentialKind::Viscoplastic { sigma, mu } => write!(f, "viscoplastic(σ={sigma}, μ={mu})")?,
            PotentialKind::Tabulated(t) => write!(f, "tabulated({} samples)", t.r.len())?,
        }
        if self.scale != 1.0 {
            write!(f, "×{}", self.scale)?;
        }
        Ok(())
    }
}

/// Search domain and divergence ceiling for numeric conjugates.
#[derive(Debug, Clone, Copy)]
pub struct ConjugateOptions {
    pub r_max: f64,
    pub ceiling: f64,
    pub scan_points: usize,
    pub xtol: f64,
}

impl Default for ConjugateOptions {
    fn default() -> Self {
        ConjugateOptions { r_max: 1e6, ceiling: 1e12, scan_points: 241, xtol: 1e-15 }
    }
}

/// Supremum over `[0, r_max]` of a concave function (values `Finite(−∞)`
/// mark infeasible points). A maximizer pinned at `r_max` of an unbounded
/// domain signals missing superlinearity and is reported as divergence.
fn sup_concave<F: FnMut(f64) -> ExtReal>(f: &mut F, r_max: f64, bounded: bool, opts: &ConjugateOptions) -> std::result::Result<ExtReal, ()> {
    let mut grid = vec![0.0];
    grid.extend(quad::log_grid(r_max * 1e-14, r_max, opts.scan_points));
    let am = quad::maximize_on_grid(f, &grid, opts.xtol);
    if am.value > opts.ceiling {
        return Err(());
    }
    if !bounded && am.scan_index == grid.len() - 1 {
        return Err(());
    }
    if am.value == f64::NEG_INFINITY {
        return Err(());
    }
    Ok(Finite(am.value))
}

/// Numeric conjugate of an arbitrary even function given on `[0, ∞)`;
/// evaluation failures count as `+∞`.
pub fn numeric_conjugate_fn<F: Fn(f64) -> Result<ExtReal>>(g: F, zeta: f64, opts: &ConjugateOptions) -> Result<ExtReal> {
    let mut f = |r: f64| -> ExtReal {
        match g(r) {
            Ok(Finite(v)) => Finite(zeta * r - v),
            _ => Finite(f64::NEG_INFINITY),
        }
    };
    sup_concave(&mut f, opts.r_max, false, opts).map_err(|_| GflError::ConjugateDiverged(zeta))
}

/// How the dual potential is evaluated.
#[derive(Debug, Clone)]
pub enum DualEval {
    Analytic,
    Numeric(ConjugateOptions),
}

/// A potential together with its conjugate evaluator.
#[derive(Debug, Clone)]
pub struct ConjugatePair {
    pub primal: ScalarPotential,
    pub dual: DualEval,
}

impl ConjugatePair {
    /// Analytic dual when the kind permits it, numeric otherwise.
    pub fn new(primal: ScalarPotential) -> Self {
        let dual = if primal.has_analytic_conjugate() {
            DualEval::Analytic
        } else {
            DualEval::Numeric(ConjugateOptions::default())
        };
        ConjugatePair { primal, dual }
    }

    pub fn numeric(primal: ScalarPotential, opts: ConjugateOptions) -> Self {
        ConjugatePair { primal, dual: DualEval::Numeric(opts) }
    }
}

/// ψ(r); errors on negative `r`.
pub fn eval_potential(psi: &ScalarPotential, r: f64) -> Result<ExtReal> {
    psi.eval(r)
}

/// ψ*(ζ) for ζ ≥ 0.
pub fn eval_conjugate(pair: &ConjugatePair, zeta: f64) -> Result<ExtReal> {
    if zeta < 0.0 || zeta.is_nan() {
        return Err(GflError::NegativeRate(zeta));
    }
    match &pair.dual {
        DualEval::Analytic => pair
            .primal
            .analytic_conjugate(zeta)
            .map(Ok)
            .unwrap_or_else(|| pair.primal.numeric_conjugate(zeta, &ConjugateOptions::default())),
        DualEval::Numeric(o) => pair.primal.numeric_conjugate(zeta, o),
    }
}

/// ψ(|v|) + ψ*(|ξ|) − ξ v; nonnegative by the Fenchel–Young inequality.
pub fn fenchel_young_gap(pair: &ConjugatePair, v: f64, xi: f64) -> ExtReal {
    let p = pair.primal.eval(v.abs()).unwrap_or(PosInf);
    let d = eval_conjugate(pair, xi.abs()).unwrap_or(PosInf);
    p + d + (-xi * v)
}

/// Outcome of the three equivalent optimality tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FenchelEquivalences {
    pub gap_vanishes: bool,
    pub v_minimizes_primal: bool,
    pub xi_maximizes_dual: bool,
}

impl FenchelEquivalences {
    pub fn as_tuple(&self) -> (bool, bool, bool) {
        (self.gap_vanishes, self.v_minimizes_primal, self.xi_maximizes_dual)
    }
}

/// Checks `ξ ∈ ∂ψ(v)` three ways: through the gap, through minimality of `v`
/// for `ψ(·) − ξ·`, and through maximality of `ξ` for `⟨·, v⟩ − ψ*(·)`. The
/// two optimization tests use independent numeric sups.
pub fn check_fenchel_equivalences(pair: &ConjugatePair, v: f64, xi: f64, tol: f64) -> FenchelEquivalences {
    let opts = ConjugateOptions::default();
    let gap = fenchel_young_gap(pair, v, xi);
    let gap_vanishes = gap <= Finite(tol);

    let primal_at_v = pair.primal.eval(v.abs()).unwrap_or(PosInf) + (-xi * v);
    let min_primal = match pair.primal.numeric_conjugate(xi.abs(), &opts) {
        Ok(Finite(s)) => Finite(-s),
        _ => Finite(f64::NEG_INFINITY),
    };
    let v_minimizes_primal = primal_at_v <= min_primal + tol;

    let dual_at_xi = match eval_conjugate(pair, xi.abs()) {
        Ok(Finite(d)) => Finite(xi * v - d),
        _ => Finite(f64::NEG_INFINITY),
    };
    let sup_dual = numeric_conjugate_fn(|z| eval_conjugate(pair, z), v.abs(), &opts).unwrap_or(PosInf);
    let xi_maximizes_dual = dual_at_xi + tol >= sup_dual;

    FenchelEquivalences { gap_vanishes, v_minimizes_primal, xi_maximizes_dual }
}

/// Dissipation function `r ψ'(r)`, defined for kinds differentiable at `r`.
pub fn dissipation_function(psi: &ScalarPotential, r: f64) -> Option<f64> {
    match psi.kind {
        PotentialKind::RateIndependent | PotentialKind::Viscoplastic { .. } if r == 0.0 => None,
        _ => Some(r * psi.derivative(r)),
    }
}

/// State-dependent symmetric matrix field.
pub type MatrixField = Arc<dyn Fn(&StateVec) -> DMatrix<f64> + Send + Sync>;
/// State-dependent positive coefficient field.
pub type CoefficientField = Arc<dyn Fn(&StateVec) -> Vec<f64> + Send + Sync>;

/// Which operator an Onsager-type quadratic form is specified by.
#[derive(Clone)]
pub enum OnsagerForm {
    /// Metric tensor `G(u)`: R = ½ vᵀGv, R* = ½ ξᵀG⁻¹ξ.
    Metric(MatrixField),
    /// Onsager operator `K(u)` (possibly singular): R* = ½ ξᵀKξ and
    /// R = ½ vᵀK⁺v on range K, `+∞` off it.
    Onsager(MatrixField),
}

/// Vector dissipation potential `R(u, ·)`.
#[derive(Clone)]
pub enum DissipationPotential {
    /// R(u, v) = ψ(‖v‖_w) with ‖v‖_w² = Σ wᵢ vᵢ².
    NormComposed { psi: ScalarPotential, weights: Vec<f64> },
    OnsagerQuadratic(OnsagerForm),
    /// R(u, v) = Σ aᵢ(u) ψᵢ(|vᵢ|).
    Separable { potentials: Vec<ScalarPotential>, coeff: CoefficientField },
}

impl fmt::Debug for DissipationPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DissipationPotential::NormComposed { psi, weights } => write!(f, "NormComposed({psi}, {weights:?})"),
            DissipationPotential::OnsagerQuadratic(OnsagerForm::Metric(_)) => write!(f, "OnsagerQuadratic(G)"),
            DissipationPotential::OnsagerQuadratic(OnsagerForm::Onsager(_)) => write!(f, "OnsagerQuadratic(K)"),
            DissipationPotential::Separable { potentials, .. } => write!(f, "Separable({} coordinates)", potentials.len()),
        }
    }
}

/// Tolerance for symmetry and positive-semidefiniteness of operator fields.
pub const OPERATOR_TOL: f64 = 1e-12;

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = 1.0 + m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if (m - m.transpose()).iter().any(|v| v.abs() > OPERATOR_TOL * scale) {
        return Err(GflError::InvalidParameter("operator is not symmetric".into()));
    }
    Ok(())
}

/// Spectral data of a PSD operator: orthonormal range basis and eigenvalues.
pub struct RangeBasis {
    pub basis: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Range of a symmetric PSD matrix, discarding eigenvalues below
/// `1e-12 · max eigenvalue`.
pub fn psd_range(k: &DMatrix<f64>) -> Result<RangeBasis> {
    check_symmetric(k)?;
    let eig = SymmetricEigen::new(k.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(*v));
    if eig.eigenvalues.iter().any(|v| *v < -OPERATOR_TOL * (1.0 + lmax)) {
        return Err(GflError::InvalidParameter("operator is not positive semidefinite".into()));
    }
    let keep: Vec<usize> = (0..k.nrows()).filter(|&i| eig.eigenvalues[i] > 1e-12 * lmax.max(1e-300)).collect();
    let mut basis = DMatrix::zeros(k.nrows(), keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(i));
    }
    Ok(RangeBasis { basis, eigenvalues: keep.iter().map(|&i| eig.eigenvalues[i]).collect() })
}

fn weighted_norm(w: &[f64], v: &StateVec) -> f64 {
    w.iter().zip(v.iter()).map(|(a, b)| a * b * b).sum::<f64>().sqrt()
}

fn dual_weighted_norm(w: &[f64], xi: &StateVec) -> f64 {
    w.iter().zip(xi.iter()).map(|(a, b)| b * b / a).sum::<f64>().sqrt()
}

impl DissipationPotential {
    pub fn quadratic_euclidean(n: usize) -> Self {
        DissipationPotential::NormComposed { psi: ScalarPotential::quadratic(), weights: vec![1.0; n] }
    }

    /// The primal norm ‖v‖ at `u` if R is a function of a norm.
    pub fn norm(&self, u: &StateVec, v: &StateVec) -> Option<ExtReal> {
        match self {
            DissipationPotential::NormComposed { weights, .. } => Some(Finite(weighted_norm(weights, v))),
            DissipationPotential::OnsagerQuadratic(_) => self.eval(u, v).ok().map(|r| match r {
                Finite(x) => Finite((2.0 * x).max(0.0).sqrt()),
                PosInf => PosInf,
            }),
            DissipationPotential::Separable { .. } => None,
        }
    }

    /// The dual norm ‖ξ‖_* at `u` if R is a function of a norm.
    pub fn dual_norm(&self, u: &StateVec, xi: &StateVec) -> Option<f64> {
        match self {
            DissipationPotential::NormComposed { weights, .. } => Some(dual_weighted_norm(weights, xi)),
            DissipationPotential::OnsagerQuadratic(_) => self.eval_dual(u, xi).ok().and_then(|r| r.finite()).map(|x| (2.0 * x).max(0.0).sqrt()),
            DissipationPotential::Separable { .. } => None,
        }
    }

    /// The scalar potential ψ with R(u, v) = ψ(‖v‖), when one exists.
    pub fn scalar_potential(&self) -> Option<ScalarPotential> {
        match self {
            DissipationPotential::NormComposed { psi, .. } => Some(psi.clone()),
            DissipationPotential::OnsagerQuadratic(_) => Some(ScalarPotential::quadratic()),
            DissipationPotential::Separable { .. } => None,
        }
    }

    /// R(u, v).
    pub fn eval(&self, u: &StateVec, v: &StateVec) -> Result<ExtReal> {
        check_dim(u.len(), v.len())?;
        match self {
            DissipationPotential::NormComposed { psi, weights } => {
                check_dim(weights.len(), v.len())?;
                psi.eval(weighted_norm(weights, v))
            }
            DissipationPotential::OnsagerQuadratic(OnsagerForm::Metric(g)) => {
                let g = g(u);
                check_symmetric(&g)?;
                Ok(Finite(0.5 * v.dot(&(&g * v))))
            }
            DissipationPotential::OnsagerQuadratic(OnsagerForm::Onsager(k)) => {
                let rb = psd_range(&k(u))?;
                let y = rb.basis.transpose() * v;
                let resid = (v - &rb.basis * &y).norm();
                if resid > 1e-10 * (1.0 + v.norm()) {
                    return Ok(PosInf);
                }
                Ok(Finite(0.5 * y.iter().zip(&rb.eigenvalues).map(|(a, l)| a * a / l).sum::<f64>()))
            }
            DissipationPotential::Separable { potentials, coeff } => {
                check_dim(potentials.len(), v.len())?;
                let a = coeff(u);
                let mut s = ExtReal::ZERO;
                for i in 0..v.len() {
                    s = s + a[i] * potentials[i].eval(v[i].abs())?;
                }
                Ok(s)
            }
        }
    }

    /// R*(u, ξ).
    pub fn eval_dual(&self, u: &StateVec, xi: &StateVec) -> Result<ExtReal> {
        check_dim(u.len(), xi.len())?;
        match self {
            DissipationPotential::NormComposed { psi, weights } => {
                check_dim(weights.len(), xi.len())?;
                eval_conjugate(&ConjugatePair::new(psi.clone()), dual_weighted_norm(weights, xi))
            }
            DissipationPotential::OnsagerQuadratic(OnsagerForm::Metric(g)) => {
                let g = g(u);
                check_symmetric(&g)?;
                let chol = g.cholesky().ok_or(GflError::SingularOnsager)?;
                let x = chol.solve(xi);
                Ok(Finite(0.5 * xi.dot(&x)))
            }
            DissipationPotential::OnsagerQuadratic(OnsagerForm::Onsager(k)) => {
                let k = k(u);
                check_symmetric(&k)?;
                Ok(Finite(0.5 * xi.dot(&(&k * xi))))
            }
            DissipationPotential::Separable { potentials, coeff } => {
                check_dim(potentials.len(), xi.len())?;
                let a = coeff(u);
                let mut s = ExtReal::ZERO;
                for i in 0..xi.len() {
                    if a[i] <= 0.0 {
                        return Err(GflError::NonpositiveArgument(a[i]));
                    }
                    let pair = ConjugatePair::new(potentials[i].clone());
                    s = s + a[i] * eval_conjugate(&pair, xi[i].abs() / a[i])?;
                }
                Ok(s)
            }
        }
    }
}

/// R(u, v).
pub fn eval_dissipation(r: &DissipationPotential, u: &StateVec, v: &StateVec) -> Result<ExtReal> {
    r.eval(u, v)
}

/// R*(u, ξ).
pub fn eval_dual_dissipation(r: &DissipationPotential, u: &StateVec, xi: &StateVec) -> Result<ExtReal> {
    r.eval_dual(u, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn potential_values() {
        assert_eq!(ScalarPotential::quadratic().eval(2.0).unwrap(), Finite(2.0));
        let p3 = ScalarPotential::power(3.0).unwrap();
        assert!((p3.eval(1.0).unwrap().value() - 1.0 / 3.0).abs() < 1e-15);
        let vp = ScalarPotential::viscoplastic(1.0, 2.0).unwrap();
        assert_eq!(vp.eval(2.0).unwrap(), Finite(6.0));
        assert_eq!(ScalarPotential::rate_independent().with_scale(2.0).unwrap().eval(3.0).unwrap(), Finite(6.0));
        assert!(matches!(ScalarPotential::quadratic().eval(-1.0), Err(GflError::NegativeRate(_))));
    }

    #[test]
    fn conjugate_values() {
        let p3 = ConjugatePair::new(ScalarPotential::power(3.0).unwrap());
        assert!((eval_conjugate(&p3, 1.0).unwrap().value() - 2.0 / 3.0).abs() < 1e-15);
        let ri = ConjugatePair::new(ScalarPotential::rate_independent());
        assert_eq!(eval_conjugate(&ri, 0.5).unwrap(), Finite(0.0));
        assert_eq!(eval_conjugate(&ri, 2.0).unwrap(), PosInf);
        let vp = ConjugatePair::new(ScalarPotential::viscoplastic(1.0, 2.0).unwrap());
        assert_eq!(eval_conjugate(&vp, 3.0).unwrap(), Finite(1.0));
    }

    #[test]
    fn scaled_conjugate() {
        let q = ScalarPotential::quadratic().with_scale(3.0).unwrap();
        let a = eval_conjugate(&ConjugatePair::new(q.clone()), 2.0).unwrap().value();
        let n = q.numeric_conjugate(2.0, &ConjugateOptions::default()).unwrap().value();
        assert!((a - 4.0 / 6.0).abs() < 1e-15);
        assert!((a - n).abs() < 1e-12);
    }

    #[test]
    fn numeric_conjugate_matches_analytic() {
        let opts = ConjugateOptions::default();
        for psi in [
            ScalarPotential::quadratic(),
            ScalarPotential::power(1.5).unwrap(),
            ScalarPotential::power(3.0).unwrap(),
            ScalarPotential::viscoplastic(1.0, 2.0).unwrap(),
        ] {
            let pair = ConjugatePair::new(psi.clone());
            for z in [0.0, 0.3, 1.0, 2.5, 10.0] {
                let a = eval_conjugate(&pair, z).unwrap().value();
                let n = psi.numeric_conjugate(z, &opts).unwrap().value();
                assert!((a - n).abs() <= 1e-10 * (1.0 + a.abs()), "{psi} ζ={z}: {a} vs {n}");
            }
        }
        let ri = ScalarPotential::rate_independent();
        assert!(matches!(ri.numeric_conjugate(2.0, &opts), Err(GflError::ConjugateDiverged(_))));
        assert_eq!(ri.numeric_conjugate(0.5, &opts).unwrap(), Finite(0.0));
    }

    #[test]
    fn fenchel_young_examples() {
        let q = ConjugatePair::new(ScalarPotential::quadratic());
        assert_eq!(fenchel_young_gap(&q, 1.0, 1.0), Finite(0.0));
        assert_eq!(fenchel_young_gap(&q, 1.0, 0.0), Finite(0.5));
        let vp = ConjugatePair::new(ScalarPotential::viscoplastic(1.0, 1.0).unwrap());
        assert_eq!(fenchel_young_gap(&vp, 0.0, 0.5), Finite(0.0));
    }

    #[test]
    fn fenchel_equivalence_examples() {
        let q = ConjugatePair::new(ScalarPotential::quadratic());
        assert_eq!(check_fenchel_equivalences(&q, 2.0, 2.0, 1e-8).as_tuple(), (true, true, true));
        assert_eq!(check_fenchel_equivalences(&q, 2.0, 1.0, 1e-8).as_tuple(), (false, false, false));
        let ri = ConjugatePair::new(ScalarPotential::rate_independent());
        assert_eq!(check_fenchel_equivalences(&ri, 0.0, 0.7, 1e-8).as_tuple(), (true, true, true));
    }

    #[test]
    fn dissipation_examples() {
        let nc = DissipationPotential::quadratic_euclidean(2);
        let u = dvector![0.0, 0.0];
        assert_eq!(nc.eval(&u, &dvector![3.0, 4.0]).unwrap(), Finite(12.5));
        let g = DissipationPotential::OnsagerQuadratic(OnsagerForm::Metric(Arc::new(|_: &StateVec| {
            DMatrix::from_diagonal(&dvector![2.0, 1.0])
        })));
        assert_eq!(g.eval(&u, &dvector![1.0, 1.0]).unwrap(), Finite(1.5));
        assert_eq!(g.eval_dual(&u, &dvector![2.0, 1.0]).unwrap(), Finite(1.5));
        let sep = DissipationPotential::Separable {
            potentials: vec![ScalarPotential::quadratic()],
            coeff: Arc::new(|u: &StateVec| u.iter().map(|x| 2.0 + x.cos()).collect()),
        };
        assert_eq!(sep.eval(&dvector![0.0], &dvector![2.0]).unwrap(), Finite(6.0));
        let ri = DissipationPotential::NormComposed { psi: ScalarPotential::rate_independent(), weights: vec![1.0] };
        assert_eq!(ri.eval_dual(&dvector![0.0], &dvector![0.3]).unwrap(), Finite(0.0));
        assert_eq!(nc.eval_dual(&u, &dvector![0.0, 0.0]).unwrap(), Finite(0.0));
        assert!(matches!(nc.eval(&u, &dvector![1.0]), Err(GflError::DimensionMismatch { .. })));
    }

    #[test]
    fn singular_metric_rejects_dual() {
        let g = DissipationPotential::OnsagerQuadratic(OnsagerForm::Metric(Arc::new(|_: &StateVec| {
            DMatrix::from_diagonal(&dvector![1.0, 0.0])
        })));
        assert_eq!(g.eval_dual(&dvector![0.0, 0.0], &dvector![1.0, 1.0]), Err(GflError::SingularOnsager));
    }

    #[test]
    fn onsager_form_off_range_is_infinite() {
        let k = DissipationPotential::OnsagerQuadratic(OnsagerForm::Onsager(Arc::new(|_: &StateVec| {
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        })));
        let u = dvector![1.0, 1.0];
        assert_eq!(k.eval(&u, &dvector![1.0, 1.0]).unwrap(), PosInf);
        // v = (1, −1) = K (½, −½); R = ½ vᵀK⁺v = ½ · 2/2.
        assert!((k.eval(&u, &dvector![1.0, -1.0]).unwrap().value() - 0.5).abs() < 1e-14);
        assert!((k.eval_dual(&u, &dvector![0.5, -0.5]).unwrap().value() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn tabulated_checks_convexity() {
        assert!(matches!(ScalarPotential::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.5]), Err(GflError::NotConvex(_))));
        let r: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let v: Vec<f64> = r.iter().map(|x| 0.5 * x * x).collect();
        let t = ScalarPotential::tabulated(r, v).unwrap();
        assert!((t.eval(1.234).unwrap().value() - 0.5 * 1.234f64.powi(2)).abs() < 1e-12);
        assert!((t.derivative(1.234) - 1.234).abs() < 1e-12);
        let x = quad::lin_grid(0.0, 10.0, 2001);
        let dv: Vec<f64> = x.iter().map(|r| t.derivative(*r)).collect();
        assert!(dv.windows(2).all(|w| w[1] >= w[0] - 1e-13));
        assert_eq!(t.eval(11.0).unwrap(), PosInf);
        let c = eval_conjugate(&ConjugatePair::new(t), 2.0).unwrap().value();
        assert!((c - 2.0).abs() < 1e-3);
    }
}
