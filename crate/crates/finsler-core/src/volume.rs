//! Busemann-Hausdorff and Holmes-Thompson volume forms.
//!
//! Densities are closed-form wherever the unit-ball geometry is available
//! analytically (euclidean, riemannian, randers-type) and quadrature over
//! the indicatrix ball otherwise. The quadrature reduces to a radial
//! closed form plus an angular integral because both `1` and `det g` are
//! 0-homogeneous in the fiber.

use crate::chart::Point;
use crate::error::{FinslerError, Result};
use crate::structure::{fd_step_first, Family, FinslerStructure};
use nalgebra::DVector;
use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    BusemannHausdorff,
    HolmesThompson,
}

impl std::fmt::Display for VolumeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VolumeKind::BusemannHausdorff => write!(f, "busemann-hausdorff"),
            VolumeKind::HolmesThompson => write!(f, "holmes-thompson"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    Quadrature,
}

/// Volume of the euclidean unit ball in `R^n`.
pub fn euclidean_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => {
            // V_n = V_{n-2} * 2 pi / n
            let mut v = if n % 2 == 0 {
                std::f64::consts::PI
            } else {
                4.0 * std::f64::consts::PI / 3.0
            };
            let mut k = if n % 2 == 0 { 2 } else { 3 };
            while k < n {
                k += 2;
                v *= 2.0 * std::f64::consts::PI / (k as f64);
            }
            v
        }
    }
}

/// A positive density evaluator `sigma(x)` for one of the two standard
/// Finsler volume normalizations.
pub struct VolumeForm {
    kind: VolumeKind,
    structure: FinslerStructure,
    /// cached density for point-independent structures
    constant: OnceLock<Result<f64>>,
}

impl std::fmt::Debug for VolumeForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VolumeForm")
            .field("kind", &self.kind)
            .field("structure", &self.structure.family_tag())
            .finish()
    }
}

impl VolumeForm {
    pub fn new(structure: FinslerStructure, kind: VolumeKind) -> Self {
        VolumeForm {
            kind,
            structure,
            constant: OnceLock::new(),
        }
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn structure(&self) -> &FinslerStructure {
        &self.structure
    }

    pub fn provenance(&self) -> Provenance {
        match self.structure.family() {
            Family::Euclidean | Family::Riemannian { .. } => Provenance::ClosedForm,
            Family::Minkowski { .. } | Family::Randers { .. } => match self.kind {
                VolumeKind::BusemannHausdorff => Provenance::ClosedForm,
                VolumeKind::HolmesThompson => Provenance::Quadrature,
            },
            Family::Custom { .. } => Provenance::Quadrature,
        }
    }

    /// `sigma_mu(x) > 0`.
    pub fn density(&self, x: &Point) -> Result<f64> {
        self.structure.chart().check_contains(x)?;
        if self.structure.is_point_independent() {
            return self
                .constant
                .get_or_init(|| self.density_uncached(x))
                .clone();
        }
        self.density_uncached(x)
    }

    fn density_uncached(&self, x: &Point) -> Result<f64> {
        let f = &self.structure;
        match f.family() {
            Family::Euclidean => Ok(1.0),
            Family::Riemannian { preset } => {
                let a = preset.matrix(x);
                Ok(a.determinant().sqrt())
            }
            Family::Minkowski { matrix, beta } => {
                randers_density(f, self.kind, matrix.clone(), beta, x)
            }
            Family::Randers { alpha, beta } => {
                randers_density(f, self.kind, alpha.matrix(x), beta, x)
            }
            Family::Custom { .. } => quadrature_density(f, self.kind, x),
        }
    }

    /// `d/dx log sigma(x)`: exact for closed forms, central differences
    /// otherwise.
    pub fn log_density_grad(&self, x: &Point) -> Result<DVector<f64>> {
        let n = self.structure.dim();
        if self.structure.is_point_independent() {
            return Ok(DVector::zeros(n));
        }
        match self.structure.family() {
            Family::Euclidean | Family::Minkowski { .. } => Ok(DVector::zeros(n)),
            Family::Riemannian { preset } => {
                let a = preset.matrix(x);
                let inv = a
                    .try_inverse()
                    .ok_or_else(|| FinslerError::numeric("volume log grad", f64::NAN))?;
                Ok(DVector::from_iterator(
                    n,
                    (0..n).map(|k| 0.5 * (&inv * preset.matrix_dx(x, k)).trace()),
                ))
            }
            Family::Randers { alpha, beta } => match self.kind {
                VolumeKind::BusemannHausdorff => {
                    // log sigma = 1/2 log det A + (n+1)/2 log(1 - b'A^{-1}b)
                    let a = alpha.matrix(x);
                    let inv = a
                        .try_inverse()
                        .ok_or_else(|| FinslerError::numeric("volume log grad", f64::NAN))?;
                    let ib = &inv * beta;
                    let c = beta.dot(&ib);
                    Ok(DVector::from_iterator(
                        n,
                        (0..n).map(|k| {
                            let da = alpha.matrix_dx(x, k);
                            let dc = -(ib.dot(&(&da * &ib)));
                            0.5 * (&inv * &da).trace() - 0.5 * (n as f64 + 1.0) * dc / (1.0 - c)
                        }),
                    ))
                }
                VolumeKind::HolmesThompson => self.log_density_grad_fd(x),
            },
            Family::Custom { .. } => self.log_density_grad_fd(x),
        }
    }

    fn log_density_grad_fd(&self, x: &Point) -> Result<DVector<f64>> {
        let n = self.structure.dim();
        let h = fd_step_first(x.amax());
        let mut g = DVector::zeros(n);
        for k in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let sp = self.density(&xp)?;
            let sm = self.density(&xm)?;
            g[k] = (sp.ln() - sm.ln()) / (2.0 * h);
        }
        Ok(g)
    }
}

fn randers_density(
    f: &FinslerStructure,
    kind: VolumeKind,
    a: nalgebra::DMatrix<f64>,
    b: &DVector<f64>,
    x: &Point,
) -> Result<f64> {
    let n = b.len() as f64;
    match kind {
        VolumeKind::BusemannHausdorff => {
            let inv = a
                .clone()
                .try_inverse()
                .ok_or_else(|| FinslerError::numeric("randers volume", f64::NAN))?;
            let c = b.dot(&(&inv * b));
            Ok(a.determinant().sqrt() * (1.0 - c).powf((n + 1.0) / 2.0))
        }
        VolumeKind::HolmesThompson => quadrature_density(f, kind, x),
    }
}

/// Angular quadrature of the indicatrix-ball integrals.
///
/// BH: `sigma = vol(B_E) / vol{F(x, .) < 1}`;
/// HT: `sigma = (1 / vol(B_E)) * int_{F < 1} det g dy`.
/// Both integrands are 0-homogeneous, so the radial part integrates to
/// `rho^n / n` with `rho = 1 / F(x, u)` and only the angular integral is
/// numerical (adaptive panel doubling, relative tolerance 1e-6).
fn quadrature_density(f: &FinslerStructure, kind: VolumeKind, x: &Point) -> Result<f64> {
    let n = f.dim();
    let ball = euclidean_ball_volume(n);
    let weight = |u: &DVector<f64>| -> f64 {
        let fu = f.norm(x, u);
        let rho = 1.0 / fu;
        match kind {
            VolumeKind::BusemannHausdorff => rho.powi(n as i32) / n as f64,
            VolumeKind::HolmesThompson => {
                let g = f
                    .fundamental_matrix(x, u)
                    .map(|g| g.determinant())
                    .unwrap_or(f64::NAN);
                g * rho.powi(n as i32) / n as f64
            }
        }
    };
    let integral = match n {
        2 => adaptive_circle_integral(&weight)?,
        3 => adaptive_sphere_integral(&weight)?,
        _ => {
            return Err(FinslerError::unsupported(
                "volume_density",
                "quadrature densities implemented for n <= 3",
            ))
        }
    };
    let v = match kind {
        VolumeKind::BusemannHausdorff => ball / integral,
        VolumeKind::HolmesThompson => integral / ball,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(FinslerError::numeric("volume quadrature", v))
    }
}

fn adaptive_circle_integral(w: &dyn Fn(&DVector<f64>) -> f64) -> Result<f64> {
    let eval = |m: usize| -> f64 {
        let mut s = 0.0;
        for j in 0..m {
            let th = 2.0 * std::f64::consts::PI * (j as f64) / (m as f64);
            let u = DVector::from_row_slice(&[th.cos(), th.sin()]);
            s += w(&u);
        }
        s * 2.0 * std::f64::consts::PI / m as f64
    };
    let mut m = 64;
    let mut prev = eval(m);
    while m <= 4096 {
        m *= 2;
        let cur = eval(m);
        if (cur - prev).abs() <= 0.5e-6 * cur.abs() {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(FinslerError::numeric("circle quadrature", prev))
}

fn adaptive_sphere_integral(w: &dyn Fn(&DVector<f64>) -> f64) -> Result<f64> {
    let eval = |m_th: usize, m_z: usize| -> f64 {
        let (nodes, weights) = gauss_legendre(m_z);
        let mut s = 0.0;
        for (zi, zw) in nodes.iter().zip(weights.iter()) {
            let r = (1.0 - zi * zi).max(0.0).sqrt();
            for j in 0..m_th {
                let th = 2.0 * std::f64::consts::PI * (j as f64) / (m_th as f64);
                let u = DVector::from_row_slice(&[r * th.cos(), r * th.sin(), *zi]);
                s += w(&u) * zw * (2.0 * std::f64::consts::PI / m_th as f64);
            }
        }
        s
    };
    let mut m = 16;
    let mut prev = eval(m, m);
    while m <= 256 {
        m *= 2;
        let cur = eval(m, m);
        if (cur - prev).abs() <= 0.5e-6 * cur.abs() {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(FinslerError::numeric("sphere quadrature", prev))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order.max(1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Chebyshev initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}
