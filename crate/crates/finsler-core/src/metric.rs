//! Fundamental tensor, dual norm, Legendre transforms and the Finsler
//! gradient.
//!
//! The Legendre transform `J(x, y) = g_ij(x, y) y^i dx^j` and its inverse
//! `J*` are closed-form for the built-in families. For custom norms `J*` is
//! a damped Newton iteration on `y -> J(y) - alpha` (the Jacobian of `J` is
//! the fundamental tensor itself), and the dual norm is computed by an
//! independent route: a dense sup over the indicatrix followed by local
//! refinement. Keeping the two routes independent lets the identity
//! `F*(J(y)) = F(y)` act as a genuine cross-check.

use crate::chart::{Covector, Point, TangentVector};
use crate::error::{FinslerError, Result};
use crate::fields::ScalarField;
use crate::structure::{fd_step_first, DerivativeProvider, Family, FinslerStructure};
use nalgebra::{DMatrix, DVector};

/// Threshold below which a differential is treated as zero, making the
/// gradient zero by convention.
pub const ZERO_GRADIENT_THRESHOLD: f64 = 1e-10;

/// The fundamental tensor `g_ij(x, y)` at a point and nonzero direction,
/// together with its inverse.
#[derive(Debug, Clone)]
pub struct FundamentalTensor {
    pub base: Point,
    pub direction: DVector<f64>,
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub provider: DerivativeProvider,
}

impl FinslerStructure {
    /// Fundamental tensor with positive-definiteness check and inverse.
    pub fn fundamental_tensor(&self, v: &TangentVector) -> Result<FundamentalTensor> {
        self.chart().check_contains(&v.base)?;
        if v.is_zero() {
            return Err(FinslerError::DegenerateDirection);
        }
        let g = self.fundamental_matrix(&v.base, &v.components)?;
        let eigs = g.clone().symmetric_eigenvalues();
        let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min_eig > 0.0) {
            return Err(FinslerError::NotPositiveDefinite {
                context: format!("x = {:?}, y = {:?}", v.base.as_slice(), v.components.as_slice()),
                min_eigenvalue: min_eig,
            });
        }
        let inverse = g.clone().try_inverse().ok_or_else(|| {
            FinslerError::numeric("fundamental tensor inversion", min_eig)
        })?;
        Ok(FundamentalTensor {
            base: v.base.clone(),
            direction: v.components.clone(),
            matrix: g,
            inverse,
            min_eigenvalue: min_eig,
            provider: self.provider(),
        })
    }

    /// Dual norm `F*(x, alpha) = sup { alpha(xi) : xi on the indicatrix }`.
    ///
    /// Closed forms for built-in families; for custom norms a dense sup over
    /// indicatrix samples refined locally.
    pub fn dual_norm(&self, a: &Covector) -> Result<f64> {
        self.chart().check_contains(&a.base)?;
        if a.is_zero() {
            return Ok(0.0);
        }
        let alpha = if self.is_reversed() {
            -&a.components
        } else {
            a.components.clone()
        };
        self.dual_norm_raw(&a.base, &alpha)
    }

    fn dual_norm_raw(&self, x: &Point, alpha: &DVector<f64>) -> Result<f64> {
        match self.family() {
            Family::Euclidean => Ok(alpha.norm()),
            Family::Riemannian { preset } => {
                let a = preset.matrix(x);
                let inv = a
                    .try_inverse()
                    .ok_or_else(|| FinslerError::numeric("riemannian dual", f64::NAN))?;
                Ok(alpha.dot(&(&inv * alpha)).sqrt())
            }
            Family::Minkowski { matrix, beta } => randers_dual_norm(matrix, beta, alpha),
            Family::Randers { alpha: ap, beta } => {
                let a = ap.matrix(x);
                randers_dual_norm(&a, beta, alpha)
            }
            Family::Custom { .. } => self.dual_norm_sampled(x, alpha),
        }
    }

    /// Brute sup over indicatrix samples, then local refinement of
    /// `psi(d) = alpha(d) / F(d)` over euclidean-unit directions.
    fn dual_norm_sampled(&self, x: &Point, alpha: &DVector<f64>) -> Result<f64> {
        let n = self.dim();
        let m = if n == 2 { 1024 } else { 4096 };
        let psi = |d: &DVector<f64>| alpha.dot(d) / self.norm_raw_public(x, d);
        let dirs: Vec<DVector<f64>> = if n == 2 {
            (0..m)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * (j as f64) / (m as f64);
                    DVector::from_row_slice(&[th.cos(), th.sin()])
                })
                .collect()
        } else {
            self.indicatrix_directions(x, m)
        };
        let mut best = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for (j, d) in dirs.iter().enumerate() {
            let v = psi(d);
            if v > best_val {
                best_val = v;
                best = j;
            }
        }
        if n == 2 {
            // golden-section on the bracketing angle interval
            let th_of = |j: i64| 2.0 * std::f64::consts::PI * (j as f64) / (m as f64);
            let f = |th: f64| {
                let d = DVector::from_row_slice(&[th.cos(), th.sin()]);
                psi(&d)
            };
            let mut lo = th_of(best as i64 - 1);
            let mut hi = th_of(best as i64 + 1);
            let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
            let mut c = hi - phi * (hi - lo);
            let mut d_ = lo + phi * (hi - lo);
            let mut fc = f(c);
            let mut fd = f(d_);
            for _ in 0..100 {
                if fc > fd {
                    hi = d_;
                    d_ = c;
                    fd = fc;
                    c = hi - phi * (hi - lo);
                    fc = f(c);
                } else {
                    lo = c;
                    c = d_;
                    fc = fd;
                    d_ = lo + phi * (hi - lo);
                    fd = f(d_);
                }
                if hi - lo < 1e-14 {
                    break;
                }
            }
            Ok(fc.max(fd).max(best_val))
        } else {
            // projected gradient ascent on the euclidean sphere
            let mut d = dirs[best].normalize();
            let mut val = psi(&d);
            let mut converged = false;
            for _ in 0..200 {
                let f = self.norm_raw_public(x, &d);
                let df = self.norm_sq_dy(x, &d) / (2.0 * f);
                let grad = (alpha - &df * val) / f;
                let tangential = &grad - &d * grad.dot(&d);
                if tangential.norm() < 1e-12 {
                    converged = true;
                    break;
                }
                let mut tau = 0.5;
                let mut improved = false;
                for _ in 0..40 {
                    let cand = (&d + &tangential * tau).normalize();
                    let cv = psi(&cand);
                    if cv > val {
                        d = cand;
                        val = cv;
                        improved = true;
                        break;
                    }
                    tau *= 0.5;
                }
                if !improved {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(FinslerError::numeric("dual norm refinement", f64::NAN));
            }
            Ok(val)
        }
    }

    #[inline]
    fn norm_raw_public(&self, x: &Point, y: &DVector<f64>) -> f64 {
        // raw (unreversed) norm used by the sampled dual which already
        // handled orientation
        if self.is_reversed() {
            self.norm(x, &(-y))
        } else {
            self.norm(x, y)
        }
    }

    /// Legendre transform `J(x, y) = g_ij(x, y) y^i dx^j`, with `J(0) = 0`.
    pub fn legendre(&self, v: &TangentVector) -> Result<Covector> {
        self.chart().check_contains(&v.base)?;
        if v.is_zero() {
            return Ok(Covector::new(v.base.clone(), DVector::zeros(self.dim())));
        }
        // g_ij y^i = 1/2 d(F^2)/dy_j by homogeneity
        let comp = self.norm_sq_dy(&v.base, &v.components) * 0.5;
        Ok(Covector::new(v.base.clone(), comp))
    }

    /// Inverse Legendre transform: the unique `y` with `J(x, y) = alpha`,
    /// with `J*(0) = 0`. Closed form for built-ins, damped Newton for
    /// custom families.
    pub fn inverse_legendre(&self, a: &Covector) -> Result<TangentVector> {
        self.chart().check_contains(&a.base)?;
        if a.is_zero() {
            return Ok(TangentVector::new(a.base.clone(), DVector::zeros(self.dim())));
        }
        let alpha = if self.is_reversed() {
            -&a.components
        } else {
            a.components.clone()
        };
        let y = self.inverse_legendre_raw(&a.base, &alpha)?;
        let y = if self.is_reversed() { -y } else { y };
        Ok(TangentVector::new(a.base.clone(), y))
    }

    fn inverse_legendre_raw(&self, x: &Point, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        match self.family() {
            Family::Euclidean => Ok(alpha.clone()),
            Family::Riemannian { preset } => {
                let a = preset.matrix(x);
                let inv = a
                    .try_inverse()
                    .ok_or_else(|| FinslerError::numeric("riemannian inverse legendre", f64::NAN))?;
                Ok(&inv * alpha)
            }
            Family::Minkowski { matrix, beta } => randers_inverse_legendre(matrix, beta, alpha),
            Family::Randers { alpha: ap, beta } => {
                let a = ap.matrix(x);
                randers_inverse_legendre(&a, beta, alpha)
            }
            Family::Custom { .. } => self.inverse_legendre_newton(x, alpha),
        }
    }

    /// Damped Newton on `y -> J(y) - alpha`; Jacobian is the fundamental
    /// tensor. Multi-start from the 2n axis directions if the scaled-alpha
    /// seed fails.
    fn inverse_legendre_newton(&self, x: &Point, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        let tol = 1e-10 * (1.0 + alpha.norm());
        let residual = |y: &DVector<f64>| -> DVector<f64> {
            let j = self.norm_sq_dy_oriented_raw(x, y) * 0.5;
            j - alpha
        };

        let mut seeds: Vec<DVector<f64>> = Vec::with_capacity(2 * n + 1);
        let av = alpha.clone();
        let f_av = self.norm_oriented_raw(x, &av);
        if f_av > 0.0 {
            let u = &av / f_av;
            let s = alpha.dot(&u).abs().max(1e-6);
            seeds.push(&u * s);
        }
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut e = DVector::zeros(n);
                e[i] = sign;
                let fe = self.norm_oriented_raw(x, &e);
                if fe > 0.0 {
                    let u = &e / fe;
                    let s = alpha.dot(&u).abs().max(1e-6);
                    seeds.push(&u * s);
                }
            }
        }

        let mut best_residual = f64::INFINITY;
        for seed in seeds {
            let mut y = seed;
            let mut r = residual(&y);
            let mut rn = r.norm();
            let mut ok = true;
            for _ in 0..100 {
                if rn <= tol {
                    return Ok(y);
                }
                let g = self.fundamental_matrix_oriented_raw(x, &y);
                let delta = match g.lu().solve(&(-&r)) {
                    Some(d) => d,
                    None => {
                        ok = false;
                        break;
                    }
                };
                let mut tau = 1.0;
                let mut advanced = false;
                for _ in 0..30 {
                    let cand = &y + &delta * tau;
                    if self.norm_oriented_raw(x, &cand) > 0.0 {
                        let rc = residual(&cand);
                        let rcn = rc.norm();
                        if rcn < rn {
                            y = cand;
                            r = rc;
                            rn = rcn;
                            advanced = true;
                            break;
                        }
                    }
                    tau *= 0.5;
                }
                if !advanced {
                    ok = false;
                    break;
                }
            }
            if ok && rn <= tol {
                return Ok(y);
            }
            best_residual = best_residual.min(rn);
        }
        Err(FinslerError::numeric("inverse legendre newton", best_residual))
    }

    #[inline]
    fn norm_oriented_raw(&self, x: &Point, y: &DVector<f64>) -> f64 {
        if self.is_reversed() {
            self.norm(x, &(-y))
        } else {
            self.norm(x, y)
        }
    }

    #[inline]
    fn norm_sq_dy_oriented_raw(&self, x: &Point, y: &DVector<f64>) -> DVector<f64> {
        if self.is_reversed() {
            -self.norm_sq_dy(x, &(-y))
        } else {
            self.norm_sq_dy(x, y)
        }
    }

    #[inline]
    fn fundamental_matrix_oriented_raw(&self, x: &Point, y: &DVector<f64>) -> DMatrix<f64> {
        if self.is_reversed() {
            self.fundamental_matrix(x, &(-y)).expect("nonzero")
        } else {
            self.fundamental_matrix(x, y).expect("nonzero")
        }
    }

    /// Dual metric `g*_{ij}(x, alpha) = g^{ij}(J*(alpha))`.
    pub fn dual_fundamental_matrix(&self, a: &Covector) -> Result<DMatrix<f64>> {
        let y = self.inverse_legendre(a)?;
        if y.is_zero() {
            return Err(FinslerError::DegenerateDirection);
        }
        let t = self.fundamental_tensor(&y)?;
        Ok(t.inverse)
    }

    /// Finsler gradient `grad f(x) = J*(x, df(x))`, zero when the
    /// differential is below threshold.
    pub fn gradient(&self, f: &ScalarField, x: &Point) -> Result<TangentVector> {
        self.chart().check_contains(x)?;
        let df = f.differential(x);
        self.gradient_from_differential(x, &df)
    }

    /// Gradient from a precomputed differential.
    pub fn gradient_from_differential(&self, x: &Point, df: &DVector<f64>) -> Result<TangentVector> {
        if df.amax() < ZERO_GRADIENT_THRESHOLD {
            return Ok(TangentVector::new(x.clone(), DVector::zeros(self.dim())));
        }
        self.inverse_legendre(&Covector::new(x.clone(), df.clone()))
    }
}

/// `F*(alpha)` for `F = sqrt(y'Ay) + b.y`: the positive root `s` of
/// `s^2 (1 - |b|_inv^2) + 2 s (alpha . A^{-1} b) - |alpha|_inv^2 = 0`,
/// where `|.|_inv` is the `A^{-1}` norm.
fn randers_dual_norm(a: &DMatrix<f64>, b: &DVector<f64>, alpha: &DVector<f64>) -> Result<f64> {
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| FinslerError::numeric("randers dual", f64::NAN))?;
    let aia = alpha.dot(&(&inv * alpha));
    let aib = alpha.dot(&(&inv * b));
    let bib = b.dot(&(&inv * b));
    let c = 1.0 - bib;
    let disc = aib * aib + c * aia;
    Ok((-aib + disc.sqrt()) / c)
}

/// Closed-form `J*` for randers-type data: with `s = F*(alpha)`,
/// `w = A^{-1}(alpha/s - b)` is `A`-unit, and `y = s w / F(w)`.
fn randers_inverse_legendre(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    alpha: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = randers_dual_norm(a, b, alpha)?;
    if s <= 0.0 || !s.is_finite() {
        return Err(FinslerError::numeric("randers inverse legendre", s));
    }
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| FinslerError::numeric("randers inverse legendre", f64::NAN))?;
    let alpha_hat = alpha / s;
    let w = &inv * (&alpha_hat - b);
    let kappa = 1.0 + b.dot(&w);
    if kappa <= 0.0 {
        return Err(FinslerError::numeric("randers inverse legendre", kappa));
    }
    Ok(&w * (s / kappa))
}

/// Differential of a scalar field by central differences (used when the
/// field does not carry an exact gradient).
pub(crate) fn central_differential(
    f: &dyn Fn(&Point) -> f64,
    x: &Point,
    step: Option<f64>,
) -> DVector<f64> {
    let n = x.len();
    let h = step.unwrap_or_else(|| fd_step_first(x.amax()));
    let mut d = DVector::zeros(n);
    for i in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        d[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    d
}
