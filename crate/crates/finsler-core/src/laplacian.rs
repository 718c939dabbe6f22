//! Shen's Laplacian, weak-form residuals, level-set mean curvature and
//! harmonicity diagnostics.
//!
//! The pointwise Laplacian is computed in divergence form,
//! `Delta f = div(grad f) + grad f . d(log sigma)`, which needs only first
//! base-derivatives of the gradient field `grad f = J*(df)`. The weak-form
//! check integrates `h int phi dmu + int dphi(grad u) dmu` against a family
//! of polynomial bumps with tensor Gauss-Legendre quadrature. Harmonicity
//! tabulates the polar volume density around a point; radial deviation is
//! measured on per-direction normalized columns, which tests exactly the
//! radiality of the mean curvature of small geodesic spheres.

use crate::chart::{BoxRegion, Point, TangentVector};
use crate::error::{FinslerError, Result};
use crate::fields::ScalarField;
use crate::geodesic::exp_map;
use crate::metric::ZERO_GRADIENT_THRESHOLD;
use crate::structure::{DerivativeProvider, FinslerStructure};
use crate::volume::{gauss_legendre, VolumeForm};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Default)]
pub struct LaplacianOptions {
    /// Step of the outer divergence differences.
    pub h_div: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LaplacianReport {
    pub point: Point,
    pub value: f64,
    /// `grad f(x)` used by the divergence.
    pub gradient: DVector<f64>,
    pub metric_provider: DerivativeProvider,
    pub exact_differential: bool,
    /// True when `df(x)` fell below the zero threshold (value is 0 then).
    pub zero_differential: bool,
    pub h_div: f64,
}

/// Pointwise Shen Laplacian `Delta f = div_mu(grad f)`.
pub fn shen_laplacian(
    f: &FinslerStructure,
    mu: &VolumeForm,
    field: &ScalarField,
    x: &Point,
    opts: &LaplacianOptions,
) -> Result<LaplacianReport> {
    f.chart().check_contains(x)?;
    let n = f.dim();
    let df = field.differential(x);
    let exact_differential = field.differential_is_exact();
    if df.amax() < ZERO_GRADIENT_THRESHOLD {
        return Ok(LaplacianReport {
            point: x.clone(),
            value: 0.0,
            gradient: DVector::zeros(n),
            metric_provider: f.provider(),
            exact_differential,
            zero_differential: true,
            h_div: 0.0,
        });
    }
    let grad_center = f.gradient_from_differential(x, &df)?.components;
    let h = opts.h_div.unwrap_or_else(|| 1e-4 * x.amax().max(1.0));
    let mut div = 0.0;
    for k in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let wp = f.gradient(field, &xp)?.components;
        let wm = f.gradient(field, &xm)?.components;
        div += (wp[k] - wm[k]) / (2.0 * h);
    }
    let dlogs = mu.log_density_grad(x)?;
    let value = div + grad_center.dot(&dlogs);
    Ok(LaplacianReport {
        point: x.clone(),
        value,
        gradient: grad_center,
        metric_provider: f.provider(),
        exact_differential,
        zero_differential: false,
        h_div: h,
    })
}

/// The polynomial bump `(1 - s^2)^3` tensorized over a box.
#[derive(Debug, Clone)]
pub struct BumpFunction {
    pub support: BoxRegion,
}

impl BumpFunction {
    fn coords(&self, x: &Point) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let a = self.support.lower[i];
                let b = self.support.upper[i];
                (2.0 * x[i] - (a + b)) / (b - a)
            })
            .collect()
    }

    pub fn eval(&self, x: &Point) -> f64 {
        self.coords(x)
            .iter()
            .map(|&s| {
                let t: f64 = 1.0 - s * s;
                if t <= 0.0 {
                    0.0
                } else {
                    t * t * t
                }
            })
            .product()
    }

    pub fn grad(&self, x: &Point) -> DVector<f64> {
        let s = self.coords(x);
        let n = s.len();
        let factors: Vec<f64> = s
            .iter()
            .map(|&si| {
                let t: f64 = 1.0 - si * si;
                if t <= 0.0 {
                    0.0
                } else {
                    t * t * t
                }
            })
            .collect();
        let mut g = DVector::zeros(n);
        for i in 0..n {
            let t: f64 = 1.0 - s[i] * s[i];
            if t <= 0.0 {
                continue;
            }
            let dphi = -6.0 * s[i] * t * t;
            let scale = 2.0 / (self.support.upper[i] - self.support.lower[i]);
            let mut v = dphi * scale;
            for (j, fac) in factors.iter().enumerate() {
                if j != i {
                    v *= fac;
                }
            }
            g[i] = v;
        }
        g
    }
}

/// The standard family: bumps on nested sub-boxes of `omega`.
pub fn bump_family(omega: &BoxRegion, count: usize) -> Vec<BumpFunction> {
    (0..count)
        .map(|k| BumpFunction {
            support: omega.shrunk(0.9 - 0.1 * k as f64),
        })
        .collect()
}

/// Max over the bump family of `| h int phi dmu + int dphi(grad u) dmu |`.
/// A small residual certifies `Delta u = h` weakly on `omega`.
pub fn weak_laplacian_residual(
    f: &FinslerStructure,
    mu: &VolumeForm,
    u: &ScalarField,
    h: f64,
    omega: &BoxRegion,
    bumps: &[BumpFunction],
    quad_order: usize,
) -> Result<f64> {
    if omega.dim() != f.dim() {
        return Err(FinslerError::DimensionMismatch {
            expected: f.dim(),
            got: omega.dim(),
        });
    }
    let mut worst: f64 = 0.0;
    for bump in bumps {
        let reg = &bump.support;
        let integrand = |x: &Point| -> Result<f64> {
            let sigma = mu.density(x)?;
            let phi = bump.eval(x);
            let dphi = bump.grad(x);
            let grad = f.gradient(u, x)?.components;
            Ok((h * phi + dphi.dot(&grad)) * sigma)
        };
        let val = tensor_gauss_integral(reg, quad_order, &integrand)?;
        worst = worst.max(val.abs());
    }
    Ok(worst)
}

/// Tensor-product Gauss-Legendre integral over a box, summed in index
/// order for reproducibility.
pub fn tensor_gauss_integral(
    region: &BoxRegion,
    order: usize,
    integrand: &dyn Fn(&Point) -> Result<f64>,
) -> Result<f64> {
    let n = region.dim();
    let (nodes, weights) = gauss_legendre(order);
    let mut idx = vec![0usize; n];
    let mut total = 0.0;
    loop {
        let mut w = 1.0;
        let x = DVector::from_iterator(
            n,
            (0..n).map(|i| {
                let a = region.lower[i];
                let b = region.upper[i];
                w *= weights[idx[i]] * 0.5 * (b - a);
                0.5 * (a + b) + 0.5 * (b - a) * nodes[idx[i]]
            }),
        );
        total += w * integrand(&x)?;
        let mut k = n;
        loop {
            if k == 0 {
                return Ok(total);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < order {
                break;
            }
            idx[k] = 0;
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanCurvatureReport {
    pub point: Point,
    /// `Delta r(x)` from the Laplacian route (the primary value).
    pub via_laplacian: f64,
    /// Log-derivative of the level-flow volume density.
    pub via_flow: f64,
    pub gradient: DVector<f64>,
}

/// Mean curvature of the level set of a distance-type field through `x`,
/// computed two ways: (a) Shen's Laplacian of `r`; (b) finite difference of
/// the log volume density transported by the flow of `grad r`.
pub fn level_set_mean_curvature(
    f: &FinslerStructure,
    mu: &VolumeForm,
    r: &ScalarField,
    x: &Point,
    opts: &LaplacianOptions,
) -> Result<MeanCurvatureReport> {
    let dr = r.differential(x);
    if dr.amax() < ZERO_GRADIENT_THRESHOLD {
        return Err(FinslerError::invalid(
            "level_set_mean_curvature",
            "dr(x) = 0: level set degenerate at x",
        ));
    }
    let lap = shen_laplacian(f, mu, r, x, opts)?;

    // flow route
    let n = f.dim();
    let grad_at = |z: &Point| -> Result<DVector<f64>> { Ok(f.gradient(r, z)?.components) };
    let w0 = grad_at(x)?;

    // euclidean-orthonormal frame spanning ker(dr)
    let nu = dr.normalize();
    let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let mut v = &e - &nu * nu.dot(&e);
        for w in &frame {
            v -= w * w.dot(&v);
        }
        let vn = v.norm();
        if vn > 1e-8 {
            frame.push(v / vn);
        }
        if frame.len() == n - 1 {
            break;
        }
    }
    if frame.len() != n - 1 {
        return Err(FinslerError::numeric("level set frame", f64::NAN));
    }

    let delta = 1e-2;
    let eps = 1e-4;
    let flow = |z0: &Point, t: f64| -> Result<Point> {
        // RK4 on z' = grad r(z), 4 steps
        let steps = 4;
        let hh = t / steps as f64;
        let mut z = z0.clone();
        for _ in 0..steps {
            let k1 = grad_at(&z)?;
            let k2 = grad_at(&(&z + &k1 * (hh / 2.0)))?;
            let k3 = grad_at(&(&z + &k2 * (hh / 2.0)))?;
            let k4 = grad_at(&(&z + &k3 * hh))?;
            z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (hh / 6.0);
        }
        Ok(z)
    };
    let log_density = |t: f64| -> Result<f64> {
        let zc = flow(x, t)?;
        let mut m = DMatrix::zeros(n, n);
        let wc = grad_at(&zc)?;
        for i in 0..n {
            m[(i, 0)] = wc[i];
        }
        for (a, e) in frame.iter().enumerate() {
            let zp = flow(&(x + e * eps), t)?;
            let zm = flow(&(x - e * eps), t)?;
            for i in 0..n {
                m[(i, a + 1)] = (zp[i] - zm[i]) / (2.0 * eps);
            }
        }
        let det = m.determinant().abs();
        let sigma = mu.density(&zc)?;
        if det <= 0.0 {
            return Err(FinslerError::numeric("level flow density", det));
        }
        Ok((sigma * det).ln())
    };
    let via_flow = (log_density(delta)? - log_density(-delta)?) / (2.0 * delta);

    Ok(MeanCurvatureReport {
        point: x.clone(),
        via_laplacian: lap.value,
        via_flow,
        gradient: w0,
    })
}

#[derive(Debug, Clone)]
pub struct HarmonicityReport {
    pub base: Point,
    pub radii: Vec<f64>,
    pub reference_radius: f64,
    pub direction_count: usize,
    /// Normalized polar densities `sigma_bar(r, y)`, row per radius.
    pub density_table: Vec<Vec<f64>>,
    /// Per-direction growth ratios `sigma_bar(r, y) / sigma_bar(r_ref, y)`.
    pub normalized_table: Vec<Vec<f64>>,
    pub radial_deviation: f64,
    pub threshold: f64,
    pub harmonic: bool,
    /// True when radii had to be shrunk to stay inside the chart.
    pub radii_shrunk: bool,
}

/// Default verdict threshold for [`harmonicity_check`].
pub const HARMONICITY_THRESHOLD: f64 = 1e-4;

/// Tabulates the polar volume density around `p` and decides harmonicity.
///
/// `sigma_bar(r, y) = sigma_p(r, y) / sqrt(det g_dot)` where `sigma_p` is
/// the density of `dmu` under the polar map `(r, y) -> exp_p(r y)` (Jacobian
/// by central differences of the exponential map) and `g_dot` is the
/// restriction of the fundamental tensor to the indicatrix tangent. The
/// deviation statistic compares per-direction growth profiles, i.e. the
/// columns normalized at a reference radius.
pub fn harmonicity_check(
    f: &FinslerStructure,
    mu: &VolumeForm,
    p: &Point,
    radii: &[f64],
    direction_count: usize,
    threshold: f64,
) -> Result<HarmonicityReport> {
    f.chart().check_contains(p)?;
    if radii.is_empty() || radii.iter().any(|&r| r <= 0.0) {
        return Err(FinslerError::invalid(
            "harmonicity_check",
            "radii must be positive",
        ));
    }
    let n = f.dim();
    let m = direction_count;
    let dirs = f.indicatrix_directions(p, m);
    let mut radii_sorted: Vec<f64> = radii.to_vec();
    radii_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let fd_angle = 1e-4;
    let fd_radius = 1e-4;

    let sigma_bar = |r: f64, u: &DVector<f64>| -> Result<f64> {
        let exp_at = |w: &DVector<f64>, s: f64| -> Result<Point> {
            exp_map(f, p, &TangentVector::new(p.clone(), w.clone()), s)
        };
        // radial column
        let xp = exp_at(u, r + fd_radius)?;
        let xm = exp_at(u, r - fd_radius)?;
        let x0 = exp_at(u, r)?;
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            jac[(i, 0)] = (xp[i] - xm[i]) / (2.0 * fd_radius);
        }
        // angular columns: directions u(s) = normalize_F(u + s w_a)
        let ue = u.normalize();
        let mut frame: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let mut v = &e - &ue * ue.dot(&e);
            for w in &frame {
                v -= w * w.dot(&v);
            }
            let vn = v.norm();
            if vn > 1e-8 {
                frame.push(v / vn);
            }
            if frame.len() == n - 1 {
                break;
            }
        }
        let mut udots: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
        for (a, w) in frame.iter().enumerate() {
            let up = f.normalize(p, &(u + w * fd_angle))?;
            let um = f.normalize(p, &(u - w * fd_angle))?;
            let yp = exp_at(&up, r)?;
            let ym = exp_at(&um, r)?;
            for i in 0..n {
                jac[(i, a + 1)] = (yp[i] - ym[i]) / (2.0 * fd_angle);
            }
            udots.push((up - um) / (2.0 * fd_angle));
        }
        let det = jac.determinant().abs();
        let sigma = mu.density(&x0)?;
        // restriction of g(p, u) to the indicatrix tangent
        let g = f.fundamental_matrix(p, u)?;
        let mut gdot = DMatrix::zeros(n - 1, n - 1);
        for a in 0..n - 1 {
            for b in 0..n - 1 {
                gdot[(a, b)] = udots[a].dot(&(&g * &udots[b]));
            }
        }
        let det_gdot = gdot.determinant();
        if det_gdot <= 0.0 {
            return Err(FinslerError::numeric("indicatrix metric", det_gdot));
        }
        Ok(sigma * det / det_gdot.sqrt())
    };

    // shrink all radii if the largest one exits the chart
    let mut scale = 1.0f64;
    let mut radii_shrunk = false;
    'outer: for _ in 0..6 {
        let r_max = radii_sorted.last().unwrap() * scale;
        for u in &dirs {
            let probe = exp_map(
                f,
                p,
                &TangentVector::new(p.clone(), u.clone()),
                r_max + fd_radius,
            );
            if probe.is_err() {
                scale *= 0.5;
                radii_shrunk = true;
                continue 'outer;
            }
        }
        break;
    }

    let radii_used: Vec<f64> = radii_sorted.iter().map(|&r| r * scale).collect();
    let r_ref = 0.5 * radii_used[0];

    let mut reference = Vec::with_capacity(m);
    for u in &dirs {
        reference.push(sigma_bar(r_ref, u)?);
    }
    let mut density_table = Vec::with_capacity(radii_used.len());
    let mut normalized_table = Vec::with_capacity(radii_used.len());
    let mut deviation: f64 = 0.0;
    for &r in &radii_used {
        let mut row = Vec::with_capacity(m);
        for u in &dirs {
            row.push(sigma_bar(r, u)?);
        }
        let ratios: Vec<f64> = row
            .iter()
            .zip(reference.iter())
            .map(|(&v, &rf)| v / rf)
            .collect();
        let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = ratios.iter().sum::<f64>() / m as f64;
        deviation = deviation.max((max - min) / mean);
        density_table.push(row);
        normalized_table.push(ratios);
    }

    Ok(HarmonicityReport {
        base: p.clone(),
        radii: radii_used,
        reference_radius: r_ref,
        direction_count: m,
        density_table,
        normalized_table,
        radial_deviation: deviation,
        threshold,
        harmonic: deviation <= threshold,
        radii_shrunk,
    })
}

#[derive(Debug, Clone)]
pub struct HorosphereCurvatureReport {
    pub point: Point,
    pub direction: DVector<f64>,
    /// `(t, Pi(t))` for each sphere radius that solved.
    pub sequence: Vec<(f64, f64)>,
    pub extrapolated: f64,
    pub error_bar: f64,
    pub failures: Vec<(f64, String)>,
}

/// Mean curvature at `p` of geodesic spheres of radius `t` centered at
/// `exp_p(-v, t)`, and the Richardson-extrapolated sphere-at-infinity
/// value using the model `Pi(t) = Pi_inf + c/t`.
///
/// `distance_field(center, t)` must return the scalar field
/// `x -> d(center, x)` (the caller chooses caching and solver options).
pub fn horosphere_mean_curvature_limit(
    f: &FinslerStructure,
    mu: &VolumeForm,
    p: &Point,
    v: &DVector<f64>,
    t_list: &[f64],
    distance_field: &dyn Fn(&Point, f64) -> Result<ScalarField>,
    opts: &LaplacianOptions,
) -> Result<HorosphereCurvatureReport> {
    f.chart().check_contains(p)?;
    let back = -v;
    let fu = f.norm(p, &back);
    if fu <= 0.0 {
        return Err(FinslerError::DegenerateDirection);
    }
    let u = back / fu;
    let mut sequence = Vec::new();
    let mut failures = Vec::new();
    for &t in t_list {
        let run = || -> Result<f64> {
            let center = exp_map(f, p, &TangentVector::new(p.clone(), u.clone()), t)?;
            let r_t = distance_field(&center, t)?;
            let lap = shen_laplacian(f, mu, &r_t, p, opts)?;
            Ok(lap.value)
        };
        match run() {
            Ok(pi) => sequence.push((t, pi)),
            Err(e) => failures.push((t, e.to_string())),
        }
    }
    if sequence.len() < 2 {
        return Err(FinslerError::numeric(
            "horosphere_mean_curvature_limit: fewer than two radii solved",
            f64::NAN,
        ));
    }
    let extrap = |a: (f64, f64), b: (f64, f64)| -> f64 { (b.0 * b.1 - a.0 * a.1) / (b.0 - a.0) };
    let last = sequence[sequence.len() - 1];
    let prev = sequence[sequence.len() - 2];
    let extrapolated = extrap(prev, last);
    let error_bar = if sequence.len() >= 3 {
        let prev2 = sequence[sequence.len() - 3];
        (extrapolated - extrap(prev2, prev)).abs()
    } else {
        (extrapolated - last.1).abs()
    };
    Ok(HorosphereCurvatureReport {
        point: p.clone(),
        direction: u,
        sequence,
        extrapolated,
        error_bar,
        failures,
    })
}
