//! Finsler structures on a chart: norm families and derivative providers.
//!
//! A [`FinslerStructure`] bundles a chart, a norm family and a derivative
//! provider. Built-in families (euclidean, riemannian presets, minkowski,
//! randers) carry exact fiber and base derivatives; custom families fall
//! back to central finite differences. Reversal `F.rev(x, y) = F(x, -y)` is
//! handled uniformly by a flag so every family supports the reverse
//! (backward) structure.

use crate::chart::{ManifoldChart, Point, TangentVector};
use crate::error::{FinslerError, Result};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;

const EPS: f64 = f64::EPSILON;

/// Step for first-order central differences.
pub(crate) fn fd_step_first(scale: f64) -> f64 {
    EPS.cbrt() * scale.max(1.0)
}

/// Step for second-order (Hessian) central differences. A cube-root step
/// would push the rounding term `4 eps / h^2` above 1e-5, so second
/// derivatives use the quartic-root balance instead.
pub(crate) fn fd_step_second(scale: f64) -> f64 {
    EPS.powf(0.25) * scale.max(1.0)
}

/// Which derivative source an operation used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeProvider {
    Exact,
    FiniteDifference,
}

impl fmt::Display for DerivativeProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DerivativeProvider::Exact => write!(f, "exact"),
            DerivativeProvider::FiniteDifference => write!(f, "finite-difference"),
        }
    }
}

/// Named symmetric positive-definite matrix fields.
#[derive(Debug, Clone, PartialEq)]
pub enum RiemannianPreset {
    /// Identity metric on all of `R^n`.
    Euclidean,
    /// `a_ij = delta_ij / x_n^2` on the upper half space `{x_n > 0}`.
    HyperbolicHalfSpace,
    /// Conformal perturbation `e^{2 phi} delta_ij`, `phi = amplitude *
    /// sin(x_1) sin(x_2)`. Non-constant curvature; serves as the
    /// non-harmonic control space.
    PerturbedConformal { amplitude: f64 },
    /// A constant SPD matrix.
    Constant(DMatrix<f64>),
}

impl RiemannianPreset {
    pub fn matrix(&self, x: &Point) -> DMatrix<f64> {
        let n = x.len();
        match self {
            RiemannianPreset::Euclidean => DMatrix::identity(n, n),
            RiemannianPreset::HyperbolicHalfSpace => {
                let s = 1.0 / (x[n - 1] * x[n - 1]);
                DMatrix::identity(n, n) * s
            }
            RiemannianPreset::PerturbedConformal { amplitude } => {
                let phi = amplitude * x[0].sin() * x[1].sin();
                DMatrix::identity(n, n) * (2.0 * phi).exp()
            }
            RiemannianPreset::Constant(a) => a.clone(),
        }
    }

    /// Exact `d A / d x_k`.
    pub fn matrix_dx(&self, x: &Point, k: usize) -> DMatrix<f64> {
        let n = x.len();
        match self {
            RiemannianPreset::Euclidean | RiemannianPreset::Constant(_) => DMatrix::zeros(n, n),
            RiemannianPreset::HyperbolicHalfSpace => {
                if k == n - 1 {
                    let s = -2.0 / (x[n - 1] * x[n - 1] * x[n - 1]);
                    DMatrix::identity(n, n) * s
                } else {
                    DMatrix::zeros(n, n)
                }
            }
            RiemannianPreset::PerturbedConformal { amplitude } => {
                let dphi = match k {
                    0 => amplitude * x[0].cos() * x[1].sin(),
                    1 => amplitude * x[0].sin() * x[1].cos(),
                    _ => 0.0,
                };
                self.matrix(x) * (2.0 * dphi)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(
            self,
            RiemannianPreset::Euclidean | RiemannianPreset::Constant(_)
        )
    }

    /// The natural chart for the preset.
    pub fn default_chart(&self, dim: usize) -> ManifoldChart {
        match self {
            RiemannianPreset::HyperbolicHalfSpace => ManifoldChart::upper_half_space(dim),
            _ => ManifoldChart::unbounded(dim),
        }
    }

    fn tag(&self) -> String {
        match self {
            RiemannianPreset::Euclidean => "euclidean".into(),
            RiemannianPreset::HyperbolicHalfSpace => "hyperbolic".into(),
            RiemannianPreset::PerturbedConformal { amplitude } => {
                format!("perturbed:{amplitude:.6e}")
            }
            RiemannianPreset::Constant(a) => {
                let entries: Vec<String> = a.iter().map(|v| format!("{v:.12e}")).collect();
                format!("constant:{}", entries.join(","))
            }
        }
    }
}

/// A user-supplied norm evaluator; derivatives come from finite differences.
#[derive(Clone)]
pub struct CustomNorm {
    pub name: String,
    pub point_independent: bool,
    pub reversible: bool,
    func: Arc<dyn Fn(&Point, &DVector<f64>) -> f64 + Send + Sync>,
}

impl CustomNorm {
    pub fn new(
        name: impl Into<String>,
        point_independent: bool,
        reversible: bool,
        func: impl Fn(&Point, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            point_independent,
            reversible,
            func: Arc::new(func),
        }
    }

    /// `F(y) = (sum y_i^4)^(1/4)`, the standard smooth non-quadratic
    /// Minkowski norm.
    pub fn quartic() -> Self {
        Self::new("quartic", true, true, |_x, y| {
            y.iter().map(|v| v * v * v * v).sum::<f64>().powf(0.25)
        })
    }

    pub fn eval(&self, x: &Point, y: &DVector<f64>) -> f64 {
        (self.func)(x, y)
    }
}

impl fmt::Debug for CustomNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomNorm")
            .field("name", &self.name)
            .field("point_independent", &self.point_independent)
            .field("reversible", &self.reversible)
            .finish()
    }
}

/// Norm family tag with family parameters.
#[derive(Debug, Clone)]
pub enum Family {
    Euclidean,
    Riemannian { preset: RiemannianPreset },
    /// Point-independent norm `sqrt(y' A y) + b . y` with constant SPD `A`
    /// and constant `b`, `|b|_{A^{-1}} < 1`.
    Minkowski { matrix: DMatrix<f64>, beta: DVector<f64> },
    /// `alpha`-norm from a riemannian preset plus a constant one-form.
    Randers { alpha: RiemannianPreset, beta: DVector<f64> },
    Custom { norm: CustomNorm },
}

impl Family {
    fn tag(&self) -> String {
        match self {
            Family::Euclidean => "euclidean".into(),
            Family::Riemannian { preset } => format!("riemannian[{}]", preset.tag()),
            Family::Minkowski { matrix, beta } => {
                let m: Vec<String> = matrix.iter().map(|v| format!("{v:.12e}")).collect();
                let b: Vec<String> = beta.iter().map(|v| format!("{v:.12e}")).collect();
                format!("minkowski[{};{}]", m.join(","), b.join(","))
            }
            Family::Randers { alpha, beta } => {
                let b: Vec<String> = beta.iter().map(|v| format!("{v:.12e}")).collect();
                format!("randers[{};{}]", alpha.tag(), b.join(","))
            }
            Family::Custom { norm } => format!("custom[{}]", norm.name),
        }
    }
}

struct Inner {
    chart: ManifoldChart,
    family: Family,
    reversed: bool,
    reversible: bool,
}

/// A Finsler structure on a single chart. Cheap to clone.
#[derive(Clone)]
pub struct FinslerStructure {
    inner: Arc<Inner>,
}

impl fmt::Debug for FinslerStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FinslerStructure")
            .field("family", &self.inner.family.tag())
            .field("dim", &self.dim())
            .field("reversed", &self.inner.reversed)
            .finish()
    }
}

impl FinslerStructure {
    pub fn new(chart: ManifoldChart, family: Family) -> Result<Self> {
        let reversible = match &family {
            Family::Euclidean => true,
            Family::Riemannian { .. } => true,
            Family::Minkowski { matrix, beta } => {
                validate_randers(matrix, beta)?;
                beta.iter().all(|&b| b == 0.0)
            }
            Family::Randers { alpha, beta } => {
                if beta.len() != chart.dim() {
                    return Err(FinslerError::DimensionMismatch {
                        expected: chart.dim(),
                        got: beta.len(),
                    });
                }
                let _ = alpha;
                beta.iter().all(|&b| b == 0.0)
            }
            Family::Custom { norm } => norm.reversible,
        };
        Ok(Self {
            inner: Arc::new(Inner {
                chart,
                family,
                reversed: false,
                reversible,
            }),
        })
    }

    // ----- convenience constructors for the built-in catalogue -----

    pub fn euclidean(dim: usize) -> Self {
        Self::new(ManifoldChart::unbounded(dim), Family::Euclidean).expect("valid")
    }

    /// Euclidean alpha plus constant one-form beta, `|beta| < 1`.
    pub fn randers(beta: &[f64]) -> Result<Self> {
        let dim = beta.len();
        let chart = ManifoldChart::unbounded(dim);
        Self::new(
            chart,
            Family::Randers {
                alpha: RiemannianPreset::Euclidean,
                beta: DVector::from_row_slice(beta),
            },
        )
    }

    pub fn minkowski(matrix: DMatrix<f64>, beta: &[f64]) -> Result<Self> {
        let dim = beta.len();
        Self::new(
            ManifoldChart::unbounded(dim),
            Family::Minkowski {
                matrix,
                beta: DVector::from_row_slice(beta),
            },
        )
    }

    pub fn hyperbolic_half_plane() -> Self {
        Self::new(
            ManifoldChart::upper_half_space(2),
            Family::Riemannian {
                preset: RiemannianPreset::HyperbolicHalfSpace,
            },
        )
        .expect("valid")
    }

    pub fn perturbed(amplitude: f64) -> Self {
        Self::new(
            ManifoldChart::unbounded(2),
            Family::Riemannian {
                preset: RiemannianPreset::PerturbedConformal { amplitude },
            },
        )
        .expect("valid")
    }

    pub fn quartic(dim: usize) -> Self {
        Self::new(
            ManifoldChart::unbounded(dim),
            Family::Custom {
                norm: CustomNorm::quartic(),
            },
        )
        .expect("valid")
    }

    // ----- accessors -----

    pub fn chart(&self) -> &ManifoldChart {
        &self.inner.chart
    }

    pub fn dim(&self) -> usize {
        self.inner.chart.dim()
    }

    pub fn family(&self) -> &Family {
        &self.inner.family
    }

    pub fn reversible(&self) -> bool {
        self.inner.reversible
    }

    pub fn is_reversed(&self) -> bool {
        self.inner.reversed
    }

    /// Stable textual identity, used for digests and cache keys.
    pub fn describe(&self) -> String {
        format!(
            "dim={};family={};reversed={};domain={:?}/{:?}",
            self.dim(),
            self.inner.family.tag(),
            self.inner.reversed,
            self.inner.chart.lower(),
            self.inner.chart.upper()
        )
    }

    pub fn family_tag(&self) -> String {
        self.inner.family.tag()
    }

    /// True when `F(x, y)` does not depend on `x`.
    pub fn is_point_independent(&self) -> bool {
        match &self.inner.family {
            Family::Euclidean | Family::Minkowski { .. } => true,
            Family::Riemannian { preset } => preset.is_constant(),
            Family::Randers { alpha, .. } => alpha.is_constant(),
            Family::Custom { norm } => norm.point_independent,
        }
    }

    pub fn provider(&self) -> DerivativeProvider {
        match &self.inner.family {
            Family::Custom { .. } => DerivativeProvider::FiniteDifference,
            _ => DerivativeProvider::Exact,
        }
    }

    /// The reverse (backward) structure `F.rev(x, y) = F(x, -y)`.
    pub fn reverse_structure(&self) -> FinslerStructure {
        FinslerStructure {
            inner: Arc::new(Inner {
                chart: self.inner.chart.clone(),
                family: self.inner.family.clone(),
                reversed: !self.inner.reversed,
                reversible: self.inner.reversible,
            }),
        }
    }

    // ----- fiber evaluation -----

    fn oriented(&self, y: &DVector<f64>) -> DVector<f64> {
        if self.inner.reversed {
            -y
        } else {
            y.clone()
        }
    }

    /// `F(x, y)`; 0 exactly at `y = 0`. No domain check.
    pub fn norm(&self, x: &Point, y: &DVector<f64>) -> f64 {
        let y = self.oriented(y);
        self.norm_raw(x, &y)
    }

    fn norm_raw(&self, x: &Point, y: &DVector<f64>) -> f64 {
        if y.iter().all(|&c| c == 0.0) {
            return 0.0;
        }
        match &self.inner.family {
            Family::Euclidean => y.norm(),
            Family::Riemannian { preset } => {
                let a = preset.matrix(x);
                (y.dot(&(&a * y))).sqrt()
            }
            Family::Minkowski { matrix, beta } => randers_norm(matrix, beta, y),
            Family::Randers { alpha, beta } => {
                let a = alpha.matrix(x);
                randers_norm(&a, beta, y)
            }
            Family::Custom { norm } => norm.eval(x, y),
        }
    }

    pub fn norm_sq(&self, x: &Point, y: &DVector<f64>) -> f64 {
        let f = self.norm(x, y);
        f * f
    }

    /// Domain-checked evaluation of `F` on a tangent vector.
    pub fn evaluate_norm(&self, v: &TangentVector) -> Result<f64> {
        self.inner.chart.check_contains(&v.base)?;
        if v.components.len() != self.dim() {
            return Err(FinslerError::DimensionMismatch {
                expected: self.dim(),
                got: v.components.len(),
            });
        }
        Ok(self.norm(&v.base, &v.components))
    }

    /// `d(F^2)/dy`; exact for built-ins, central differences for custom.
    pub fn norm_sq_dy(&self, x: &Point, y: &DVector<f64>) -> DVector<f64> {
        let yo = self.oriented(y);
        let d = self.norm_sq_dy_raw(x, &yo);
        if self.inner.reversed {
            -d
        } else {
            d
        }
    }

    fn norm_sq_dy_raw(&self, x: &Point, y: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        if y.iter().all(|&c| c == 0.0) {
            return DVector::zeros(n);
        }
        match &self.inner.family {
            Family::Euclidean => y * 2.0,
            Family::Riemannian { preset } => {
                let a = preset.matrix(x);
                (&a * y) * 2.0
            }
            Family::Minkowski { matrix, beta } => randers_norm_sq_dy(matrix, beta, y),
            Family::Randers { alpha, beta } => {
                let a = alpha.matrix(x);
                randers_norm_sq_dy(&a, beta, y)
            }
            Family::Custom { norm } => {
                let h = fd_step_first(y.norm());
                let mut d = DVector::zeros(n);
                for i in 0..n {
                    let mut yp = y.clone();
                    let mut ym = y.clone();
                    yp[i] += h;
                    ym[i] -= h;
                    let fp = norm.eval(x, &yp);
                    let fm = norm.eval(x, &ym);
                    d[i] = (fp * fp - fm * fm) / (2.0 * h);
                }
                d
            }
        }
    }

    /// `dF/dy` at a nonzero direction.
    pub fn norm_dy(&self, x: &Point, y: &DVector<f64>) -> Result<DVector<f64>> {
        let f = self.norm(x, y);
        if f == 0.0 {
            return Err(FinslerError::DegenerateDirection);
        }
        Ok(self.norm_sq_dy(x, y) / (2.0 * f))
    }

    /// Fundamental tensor matrix `g_ij(x, y) = 1/2 Hess_y F^2` at a nonzero
    /// direction. Exact for built-ins, finite differences for custom.
    pub fn fundamental_matrix(&self, x: &Point, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        if y.iter().all(|&c| c == 0.0) {
            return Err(FinslerError::DegenerateDirection);
        }
        let yo = self.oriented(y);
        // g is even under y -> -y together with the sign conventions above,
        // so the reversed tensor is just g evaluated at -y.
        Ok(self.fundamental_matrix_raw(x, &yo))
    }

    fn fundamental_matrix_raw(&self, x: &Point, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        match &self.inner.family {
            Family::Euclidean => DMatrix::identity(n, n),
            Family::Riemannian { preset } => preset.matrix(x),
            Family::Minkowski { matrix, beta } => randers_fundamental(matrix, beta, y),
            Family::Randers { alpha, beta } => {
                let a = alpha.matrix(x);
                randers_fundamental(&a, beta, y)
            }
            Family::Custom { norm } => {
                let h = fd_step_second(y.norm());
                let f2 = |yy: &DVector<f64>| {
                    let f = norm.eval(x, yy);
                    f * f
                };
                let mut g = DMatrix::zeros(n, n);
                let f0 = f2(y);
                for i in 0..n {
                    for j in i..n {
                        let v = if i == j {
                            let mut yp = y.clone();
                            let mut ym = y.clone();
                            yp[i] += h;
                            ym[i] -= h;
                            (f2(&yp) - 2.0 * f0 + f2(&ym)) / (h * h)
                        } else {
                            let mut ypp = y.clone();
                            let mut ypm = y.clone();
                            let mut ymp = y.clone();
                            let mut ymm = y.clone();
                            ypp[i] += h;
                            ypp[j] += h;
                            ypm[i] += h;
                            ypm[j] -= h;
                            ymp[i] -= h;
                            ymp[j] += h;
                            ymm[i] -= h;
                            ymm[j] -= h;
                            (f2(&ypp) - f2(&ypm) - f2(&ymp) + f2(&ymm)) / (4.0 * h * h)
                        };
                        g[(i, j)] = 0.5 * v;
                        g[(j, i)] = 0.5 * v;
                    }
                }
                g
            }
        }
    }

    /// `d(F^2)/dx`; identically zero for point-independent families.
    pub fn norm_sq_dx(&self, x: &Point, y: &DVector<f64>) -> DVector<f64> {
        let yo = self.oriented(y);
        self.norm_sq_dx_raw(x, &yo)
    }

    fn norm_sq_dx_raw(&self, x: &Point, y: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        if self.is_point_independent() || y.iter().all(|&c| c == 0.0) {
            return DVector::zeros(n);
        }
        match &self.inner.family {
            Family::Euclidean | Family::Minkowski { .. } => DVector::zeros(n),
            Family::Riemannian { preset } => {
                DVector::from_iterator(n, (0..n).map(|k| y.dot(&(preset.matrix_dx(x, k) * y))))
            }
            Family::Randers { alpha, beta } => {
                let a = alpha.matrix(x);
                let al = y.dot(&(&a * y)).sqrt();
                let by = beta.dot(y);
                DVector::from_iterator(
                    n,
                    (0..n).map(|k| {
                        let q = y.dot(&(alpha.matrix_dx(x, k) * y));
                        q * (1.0 + by / al)
                    }),
                )
            }
            Family::Custom { norm } => {
                let h = fd_step_first(x.norm());
                let mut d = DVector::zeros(n);
                for k in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fp = norm.eval(&xp, y);
                    let fm = norm.eval(&xm, y);
                    d[k] = (fp * fp - fm * fm) / (2.0 * h);
                }
                d
            }
        }
    }

    /// Mixed derivative `d^2(F^2)/(dx_k dy_l)` as matrix `[k][l]`.
    pub fn norm_sq_dxdy(&self, x: &Point, y: &DVector<f64>) -> DMatrix<f64> {
        let yo = self.oriented(y);
        let m = self.norm_sq_dxdy_raw(x, &yo);
        if self.inner.reversed {
            -m
        } else {
            m
        }
    }

    fn norm_sq_dxdy_raw(&self, x: &Point, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        if self.is_point_independent() || y.iter().all(|&c| c == 0.0) {
            return DMatrix::zeros(n, n);
        }
        match &self.inner.family {
            Family::Euclidean | Family::Minkowski { .. } => DMatrix::zeros(n, n),
            Family::Riemannian { preset } => {
                let mut m = DMatrix::zeros(n, n);
                for k in 0..n {
                    let row = (preset.matrix_dx(x, k) * y) * 2.0;
                    for l in 0..n {
                        m[(k, l)] = row[l];
                    }
                }
                m
            }
            Family::Randers { alpha, beta } => {
                let a = alpha.matrix(x);
                let ay = &a * y;
                let al = y.dot(&ay).sqrt();
                let by = beta.dot(y);
                let mut m = DMatrix::zeros(n, n);
                for k in 0..n {
                    let da = alpha.matrix_dx(x, k);
                    let day = &da * y;
                    let q = y.dot(&day);
                    for l in 0..n {
                        m[(k, l)] = 2.0 * day[l] * (1.0 + by / al)
                            + q * (beta[l] / al - by * ay[l] / (al * al * al));
                    }
                }
                m
            }
            Family::Custom { .. } => {
                let h = fd_step_first(x.norm());
                let mut m = DMatrix::zeros(n, n);
                for k in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let dp = self.norm_sq_dy_inner_at(&xp, y);
                    let dm = self.norm_sq_dy_inner_at(&xm, y);
                    for l in 0..n {
                        m[(k, l)] = (dp[l] - dm[l]) / (2.0 * h);
                    }
                }
                m
            }
        }
    }

    fn norm_sq_dy_inner_at(&self, x: &Point, y: &DVector<f64>) -> DVector<f64> {
        self.norm_sq_dy_raw(x, y)
    }

    /// `y / F(x, y)`.
    pub fn normalize(&self, x: &Point, y: &DVector<f64>) -> Result<DVector<f64>> {
        let f = self.norm(x, y);
        if f <= 0.0 || !f.is_finite() {
            return Err(FinslerError::DegenerateDirection);
        }
        Ok(y / f)
    }

    /// `m` deterministic unit directions on the indicatrix at `x`.
    ///
    /// For `n = 2` the angles are uniform; for `n >= 3` a Fibonacci-type
    /// low-discrepancy set is used. The set is reproducible across runs.
    pub fn indicatrix_directions(&self, x: &Point, m: usize) -> Vec<DVector<f64>> {
        let n = self.dim();
        let mut dirs = Vec::with_capacity(m);
        if n == 2 {
            for j in 0..m {
                let th = 2.0 * std::f64::consts::PI * (j as f64) / (m as f64);
                dirs.push(DVector::from_row_slice(&[th.cos(), th.sin()]));
            }
        } else if n == 3 {
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            for j in 0..m {
                let z = 1.0 - 2.0 * (j as f64 + 0.5) / (m as f64);
                let r = (1.0 - z * z).max(0.0).sqrt();
                let th = 2.0 * std::f64::consts::PI * (j as f64) / golden;
                dirs.push(DVector::from_row_slice(&[r * th.cos(), r * th.sin(), z]));
            }
        } else {
            // deterministic LCG-driven directions for higher dimensions
            let mut state: u64 = 0x9e3779b97f4a7c15;
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64) / ((1u64 << 53) as f64)
            };
            for _ in 0..m {
                let mut d = DVector::zeros(n);
                loop {
                    for i in 0..n {
                        // Box-Muller from two uniforms
                        let u1: f64 = next().max(1e-12);
                        let u2: f64 = next();
                        d[i] = (-2.0 * u1.ln()).sqrt()
                            * (2.0 * std::f64::consts::PI * u2).cos();
                    }
                    if d.norm() > 1e-6 {
                        break;
                    }
                }
                dirs.push(d);
            }
        }
        dirs.into_iter()
            .map(|d| {
                let f = self.norm(x, &d);
                d / f
            })
            .collect()
    }
}

fn validate_randers(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<()> {
    let n = b.len();
    if a.nrows() != n || a.ncols() != n {
        return Err(FinslerError::DimensionMismatch {
            expected: n,
            got: a.nrows(),
        });
    }
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| FinslerError::numeric("randers matrix inversion", f64::NAN))?;
    let bb = b.dot(&(&inv * b));
    if bb >= 1.0 {
        return Err(FinslerError::invalid(
            "randers",
            format!("|beta|_alpha = {:.6} must be < 1", bb.sqrt()),
        ));
    }
    Ok(())
}

fn randers_norm(a: &DMatrix<f64>, b: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (y.dot(&(a * y))).sqrt() + b.dot(y)
}

fn randers_norm_sq_dy(a: &DMatrix<f64>, b: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let ay = a * y;
    let al = y.dot(&ay).sqrt();
    let f = al + b.dot(y);
    // dF/dy = Ay/alpha + b;  d(F^2)/dy = 2 F dF/dy
    (ay / al + b) * (2.0 * f)
}

/// `g = (F/alpha)(A - l l^T) + m m^T` with `l = Ay/alpha`, `m = l + b`.
fn randers_fundamental(a: &DMatrix<f64>, b: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let ay = a * y;
    let al = y.dot(&ay).sqrt();
    let l = ay / al;
    let f = al + b.dot(y);
    let m = &l + b;
    let scale = f / al;
    let n = y.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = scale * (a[(i, j)] - l[i] * l[j]) + m[i] * m[j];
        }
    }
    g
}
