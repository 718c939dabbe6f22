//! Busemann functions with certified monotone truncation, asymptotic rays,
//! horosphere extraction and asymptotic-harmonicity diagnostics.
//!
//! The core evaluation doubles the truncation `b_t(x) = d(x, gamma(t)) - t`
//! from `t0 = max(1, 2 d(gamma(0), x))` until the decrement between
//! consecutive doublings falls below the requested tolerance. The decrement
//! is the convergence certificate: truncations decrease monotonically and
//! are bounded below by `-d(gamma(0), x)`, so `(upper - last decrement,
//! upper)` brackets the limit.
//!
//! Fields come in two modes. `Adaptive` runs the certified doubling per
//! point. `Frozen(t)` evaluates `b_t` at one fixed truncation for the whole
//! field; that trades certification for smoothness in `x`, which is what
//! finite-difference gradients and Laplacians of the field want (the
//! adaptive field has tolerance-sized steps where the stopping time jumps).

use crate::chart::{Covector, Point, TangentVector};
use crate::distance::{distance, DistanceOptions};
use crate::error::{FinslerError, Result};
use crate::fields::ScalarField;
use crate::geodesic::{minimizer_sequence, Ray};
use crate::laplacian::{
    shen_laplacian, weak_laplacian_residual, BumpFunction, LaplacianOptions,
};
use crate::structure::FinslerStructure;
use crate::volume::VolumeForm;
use nalgebra::DVector;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

/// Hard cap on the truncation parameter.
pub const DEFAULT_T_MAX: f64 = 16384.0; // 2^14

#[derive(Debug, Clone)]
pub struct BusemannOptions {
    /// Bracket tolerance of the doubling scheme.
    pub tol: f64,
    pub t_max: f64,
    pub distance: DistanceOptions,
}

impl Default for BusemannOptions {
    fn default() -> Self {
        BusemannOptions {
            tol: 1e-4,
            t_max: DEFAULT_T_MAX,
            distance: DistanceOptions::default(),
        }
    }
}

impl BusemannOptions {
    pub fn with_tol(tol: f64) -> Self {
        BusemannOptions {
            tol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct BusemannEvaluation {
    pub ray_id: u64,
    pub point: Point,
    pub value: f64,
    pub t_final: f64,
    /// `(upper - last decrement, upper)` with `upper = b_{t_final}(x)`.
    pub bracket: (f64, f64),
    /// Recorded `(t, b_t(x))` along the doubling schedule.
    pub history: Vec<(f64, f64)>,
    /// Largest observed increase between consecutive truncations (should
    /// stay within twice the distance-solver tolerance).
    pub monotonicity_violation: f64,
    pub converged: bool,
}

/// `b_{gamma, t}(x) = d_F(x, gamma(t)) - t`.
pub fn truncated_busemann(
    ray: &Ray,
    t: f64,
    x: &Point,
    dopts: &DistanceOptions,
) -> Result<f64> {
    if t < 0.0 {
        return Err(FinslerError::invalid("truncated_busemann", "t must be >= 0"));
    }
    let q = ray.point_at(t)?;
    let d = distance(ray.structure(), x, &q, dopts)?;
    Ok(d.value - t)
}

/// Certified Busemann evaluation by monotone t-doubling.
pub fn busemann(ray: &Ray, x: &Point, opts: &BusemannOptions) -> Result<BusemannEvaluation> {
    let f = ray.structure();
    f.chart().check_contains(x)?;
    let d0 = distance(f, ray.base(), x, &opts.distance)?.value;
    let mut t = (2.0 * d0).max(1.0);
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut monotonicity_violation: f64 = 0.0;
    let mut warm: Option<(DVector<f64>, f64)> = None;

    loop {
        let q = ray.point_at(t)?;
        let dopts = DistanceOptions {
            warm_start: warm.clone(),
            ..opts.distance.clone()
        };
        let d = distance(f, x, &q, &dopts)?;
        warm = d
            .initial_direction
            .clone()
            .map(|dir| (dir, d.value + t)); // next target is roughly t further
        let bt = d.value - t;
        if let Some(&(_, prev)) = history.last() {
            monotonicity_violation = monotonicity_violation.max(bt - prev);
            let decrement = prev - bt;
            if decrement < opts.tol {
                history.push((t, bt));
                return Ok(BusemannEvaluation {
                    ray_id: ray.id(),
                    point: x.clone(),
                    value: bt,
                    t_final: t,
                    bracket: (bt - decrement.max(0.0), bt),
                    history,
                    monotonicity_violation,
                    converged: true,
                });
            }
        }
        history.push((t, bt));
        if 2.0 * t > opts.t_max + 1e-9 {
            let (lower, upper) = match history.len() {
                0 | 1 => (bt - opts.tol, bt),
                _ => {
                    let prev = history[history.len() - 2].1;
                    (bt - (prev - bt).max(0.0), bt)
                }
            };
            return Err(FinslerError::BusemannNonConvergence {
                tol: opts.tol,
                t_max: opts.t_max,
                lower,
                upper,
            });
        }
        t *= 2.0;
    }
}

/// Field evaluation mode; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldMode {
    Adaptive,
    Frozen(f64),
}

/// A memoized Busemann field for one ray at one tolerance.
///
/// Values depend only on `(ray, point, tol, mode)`; the cache is
/// synchronized and transparent, so concurrent evaluation order never
/// changes results.
pub struct BusemannField {
    ray: Arc<Ray>,
    opts: BusemannOptions,
    mode: FieldMode,
    cache: Mutex<HashMap<Vec<u64>, Arc<BusemannEvaluation>>>,
}

impl BusemannField {
    pub fn new(ray: Arc<Ray>, opts: BusemannOptions) -> Self {
        BusemannField {
            ray,
            opts,
            mode: FieldMode::Adaptive,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn frozen(ray: Arc<Ray>, opts: BusemannOptions, t: f64) -> Self {
        BusemannField {
            ray,
            opts,
            mode: FieldMode::Frozen(t),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn ray(&self) -> &Arc<Ray> {
        &self.ray
    }

    pub fn options(&self) -> &BusemannOptions {
        &self.opts
    }

    pub fn mode(&self) -> FieldMode {
        self.mode
    }

    pub fn evaluate(&self, x: &Point) -> Result<Arc<BusemannEvaluation>> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let eval = match self.mode {
            FieldMode::Adaptive => busemann(&self.ray, x, &self.opts)?,
            FieldMode::Frozen(t) => {
                let bt = self.frozen_value(t, x)?;
                BusemannEvaluation {
                    ray_id: self.ray.id(),
                    point: x.clone(),
                    value: bt,
                    t_final: t,
                    bracket: (bt - self.opts.tol, bt),
                    history: vec![(t, bt)],
                    monotonicity_violation: 0.0,
                    converged: true,
                }
            }
        };
        let arc = Arc::new(eval);
        self.cache
            .lock()
            .unwrap()
            .entry(key)
            .or_insert_with(|| arc.clone());
        Ok(arc)
    }

    pub fn value(&self, x: &Point) -> Result<f64> {
        Ok(self.evaluate(x)?.value)
    }

    /// `b_t(x)` at the frozen truncation, reached through a warm-started
    /// chain of intermediate targets (a cold shot straight at `gamma(t)` is
    /// fragile for far targets on curved models).
    fn frozen_value(&self, t: f64, x: &Point) -> Result<f64> {
        let f = self.ray.structure();
        if f.is_point_independent() {
            return truncated_busemann(&self.ray, t, x, &self.opts.distance);
        }
        let mut schedule = vec![t];
        let mut s = t;
        while s > 4.0 {
            s *= 0.5;
            schedule.push(s);
        }
        schedule.reverse();
        let mut warm: Option<(DVector<f64>, f64)> = None;
        let mut last = f64::NAN;
        for (i, &ti) in schedule.iter().enumerate() {
            let q = self.ray.point_at(ti)?;
            let dopts = DistanceOptions {
                warm_start: warm.clone(),
                ..self.opts.distance.clone()
            };
            let d = distance(f, x, &q, &dopts)?;
            let gap = if i + 1 < schedule.len() {
                schedule[i + 1] - ti
            } else {
                0.0
            };
            warm = d.initial_direction.clone().map(|dir| (dir, d.value + gap));
            last = d.value - ti;
        }
        Ok(last)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    /// Wrap as a [`ScalarField`] (evaluation errors surface as NaN).
    pub fn scalar_field(self: &Arc<Self>, fd_step: f64) -> ScalarField {
        let me = self.clone();
        ScalarField::new("busemann", move |x| me.value(x).unwrap_or(f64::NAN))
            .with_fd_step(fd_step)
    }
}

/// Closed-form Busemann function of a point-independent structure:
/// `b_v(y) = -y^i dF/dy^i (v)` for the ray `t -> t v`.
pub fn minkowski_closed_form(
    f: &FinslerStructure,
    v: &DVector<f64>,
    y: &Point,
) -> Result<f64> {
    if !f.is_point_independent() {
        return Err(FinslerError::unsupported(
            "minkowski_closed_form",
            "structure is point-dependent",
        ));
    }
    if v.iter().all(|&c| c == 0.0) {
        return Err(FinslerError::DegenerateDirection);
    }
    let df = f.norm_dy(y, v)?;
    Ok(-y.dot(&df))
}

#[derive(Debug, Clone)]
pub struct AsymptoteDiagnostics {
    /// Truncations used by the minimizer sequence.
    pub t_list: Vec<f64>,
    /// Euclidean gap between the last two raw minimizer directions.
    pub raw_cauchy_gap: f64,
    /// Gap between the last two Richardson-extrapolated directions.
    pub extrapolated_gap: f64,
    /// The limit direction used for the asymptote (F-unit).
    pub direction: DVector<f64>,
    /// `grad b_eta(p)` of the Busemann field (frozen-mode differences).
    pub busemann_gradient: DVector<f64>,
    /// `F(grad b_eta(p))`.
    pub gradient_norm: f64,
    /// Euclidean angle between the F-normalized steepest-descent direction
    /// `-grad b` and the asymptote direction; near zero when the gradient
    /// relation holds in the descent convention.
    pub descent_angle: f64,
}

/// Construct the asymptotic ray to `eta` from `p` out of the limit of
/// minimizer initial velocities, with Richardson extrapolation of the
/// direction sequence in `1/t`.
pub fn asymptote(
    f: &FinslerStructure,
    eta: &Ray,
    p: &Point,
    dir_tol: f64,
    t_cap: f64,
) -> Result<(Ray, AsymptoteDiagnostics)> {
    f.chart().check_contains(p)?;
    let mut t = 1.0f64.max(2.0 * distance(f, eta.base(), p, &DistanceOptions::default())?.value);
    let mut t_list = vec![t];
    while 2.0 * t_list[t_list.len() - 1] <= t_cap {
        let last = t_list[t_list.len() - 1];
        t_list.push(2.0 * last);
        t = 2.0 * last;
    }
    let _ = t;

    let mut dirs: Vec<(f64, DVector<f64>)> = Vec::new();
    let mut extrapolated: Vec<DVector<f64>> = Vec::new();
    let mut used: Vec<f64> = Vec::new();
    let mut raw_gap = f64::INFINITY;
    let mut ext_gap = f64::INFINITY;
    for &ti in &t_list {
        let seq = minimizer_sequence(f, p, eta, &[ti], f64::INFINITY)?;
        let (_, u) = seq.entries.into_iter().next().expect("one entry");
        if let Some((tp, up)) = dirs.last() {
            raw_gap = (&u - up).norm();
            // Richardson in 1/t: u_inf ~ (t2 u2 - t1 u1) / (t2 - t1)
            let ue = (&u * ti - up * *tp) / (ti - tp);
            if let Some(pe) = extrapolated.last() {
                ext_gap = (&ue - pe).norm();
            }
            extrapolated.push(ue);
        }
        dirs.push((ti, u));
        used.push(ti);
        if ext_gap <= dir_tol {
            break;
        }
    }
    if ext_gap > dir_tol {
        return Err(FinslerError::numeric(
            format!("asymptote direction not Cauchy (gap {ext_gap:.3e} > {dir_tol:.3e})"),
            ext_gap,
        ));
    }
    let raw_dir = extrapolated.last().expect("at least one").clone();
    let dir = f.normalize(p, &raw_dir)?;
    let zeta = Ray::new_unchecked(f, p.clone(), &dir)?;

    // gradient relation report (frozen field keeps the differences smooth)
    let t_frozen = *used.last().expect("nonempty");
    let field = Arc::new(BusemannField::frozen(
        Arc::new(Ray::new_unchecked(f, eta.base().clone(), eta.direction())?),
        BusemannOptions::default(),
        t_frozen,
    ));
    let sf = field.scalar_field(1e-3);
    let db = sf.differential(p);
    let grad = f
        .gradient_from_differential(p, &db)
        .map(|g| g.components)
        .unwrap_or_else(|_| DVector::zeros(f.dim()));
    let gradient_norm = f.norm(p, &grad);
    let descent = f.gradient_from_differential(p, &(-&db))?.components;
    let descent_unit = if f.norm(p, &descent) > 0.0 {
        f.normalize(p, &descent)?
    } else {
        DVector::zeros(f.dim())
    };
    let cosang = (descent_unit.dot(&dir) / (descent_unit.norm() * dir.norm())).clamp(-1.0, 1.0);
    let diag = AsymptoteDiagnostics {
        t_list: used,
        raw_cauchy_gap: raw_gap,
        extrapolated_gap: ext_gap,
        direction: dir,
        busemann_gradient: grad,
        gradient_norm,
        descent_angle: cosang.acos(),
    };
    Ok((zeta, diag))
}

#[derive(Debug, Clone)]
pub struct AsymptoteRelationReport {
    /// Max of `| b_eta(zeta(s)) - (b_eta(p) - s) |` over the s-samples.
    pub max_relation_violation: f64,
    /// Max of `b_eta(x) - b_zeta(x) - b_eta(p)` over the x-samples
    /// (positive part; the relation is an inequality).
    pub max_inequality_violation: f64,
    pub busemann_at_base: f64,
}

/// Checks the two displayed relations tying the Busemann functions of a ray
/// and its asymptote.
pub fn verify_asymptote_relation(
    eta: &Arc<Ray>,
    zeta: &Arc<Ray>,
    s_list: &[f64],
    x_list: &[Point],
    opts: &BusemannOptions,
) -> Result<AsymptoteRelationReport> {
    let field_eta = BusemannField::new(eta.clone(), opts.clone());
    let field_zeta = BusemannField::new(zeta.clone(), opts.clone());
    let b_p = field_eta.value(zeta.base())?;
    let mut rel: f64 = 0.0;
    for &s in s_list {
        let zs = zeta.point_at(s)?;
        let b = field_eta.value(&zs)?;
        rel = rel.max((b - (b_p - s)).abs());
    }
    let mut ineq: f64 = 0.0;
    for x in x_list {
        let be = field_eta.value(x)?;
        let bz = field_zeta.value(x)?;
        ineq = ineq.max(be - bz - b_p);
    }
    Ok(AsymptoteRelationReport {
        max_relation_violation: rel,
        max_inequality_violation: ineq.max(0.0),
        busemann_at_base: b_p,
    })
}

#[derive(Debug, Clone)]
pub struct GradientFieldReport {
    pub points: Vec<Point>,
    pub gradients: Vec<DVector<f64>>,
    /// `max |F(J*(-db)) - 1|`: descent-direction normalization. This is the
    /// orientation in which the Busemann field of a forward ray is a unit
    /// (distance-type) field even for nonreversible structures.
    pub max_unit_residual_descent: f64,
    /// `max |F(grad b) - 1|`; equals the descent residual when `F` is
    /// reversible.
    pub max_unit_residual_forward: f64,
}

/// Finsler gradient of the Busemann field over a point set.
pub fn busemann_gradient_field(
    f: &FinslerStructure,
    field: &Arc<BusemannField>,
    points: &[Point],
    fd_step: f64,
) -> Result<GradientFieldReport> {
    let sf = field.scalar_field(fd_step);
    let rows: Vec<Result<(DVector<f64>, f64, f64)>> = points
        .par_iter()
        .map(|x| {
            let db = sf.differential(x);
            if db.iter().any(|v| !v.is_finite()) {
                return Err(FinslerError::numeric("busemann differential", f64::NAN));
            }
            let grad = f.gradient_from_differential(x, &db)?.components;
            let descent = f.gradient_from_differential(x, &(-db))?.components;
            let rf = (f.norm(x, &grad) - 1.0).abs();
            let rd = (f.norm(x, &descent) - 1.0).abs();
            Ok((grad, rd, rf))
        })
        .collect();
    let mut gradients = Vec::with_capacity(points.len());
    let mut rd: f64 = 0.0;
    let mut rf: f64 = 0.0;
    for row in rows {
        let (g, d, fw) = row?;
        gradients.push(g);
        rd = rd.max(d);
        rf = rf.max(fw);
    }
    Ok(GradientFieldReport {
        points: points.to_vec(),
        gradients,
        max_unit_residual_descent: rd,
        max_unit_residual_forward: rf,
    })
}

#[derive(Debug, Clone)]
pub struct LipschitzReport {
    pub pairs_checked: usize,
    /// Worst positive violation of either one-sided bound.
    pub max_violation: f64,
}

/// Two-sided 1-Lipschitz check
/// `-d(y, x) <= b(y) - b(x) <= d(x, y)` over sample pairs.
pub fn lipschitz_check(
    f: &FinslerStructure,
    field: &BusemannField,
    pairs: &[(Point, Point)],
) -> Result<LipschitzReport> {
    let mut worst: f64 = 0.0;
    for (x, y) in pairs {
        let bx = field.value(x)?;
        let by = field.value(y)?;
        let dxy = distance(f, x, y, &field.options().distance)?.value;
        let dyx = distance(f, y, x, &field.options().distance)?.value;
        let upper = by - bx - dxy;
        let lower = -dyx - (by - bx);
        worst = worst.max(upper).max(lower);
    }
    Ok(LipschitzReport {
        pairs_checked: pairs.len(),
        max_violation: worst.max(0.0),
    })
}

#[derive(Debug, Clone)]
pub struct Horosphere {
    pub ray_id: u64,
    pub level: f64,
    pub band: f64,
    pub samples: Vec<Point>,
    /// `|b(sample) - level|` after refinement.
    pub residuals: Vec<f64>,
    /// `|F(descent direction) - 1|` per sample.
    pub unit_gradient_residuals: Vec<f64>,
}

/// Extract the horosphere `b^{-1}(c)` from a grid: keep points whose value
/// is within one cell-reach of the level, refine each by one step along the
/// descent direction, and keep those within `band`.
pub fn horosphere_extract(
    f: &FinslerStructure,
    field: &Arc<BusemannField>,
    c: f64,
    grid: &[Point],
    cell_reach: f64,
    band: f64,
) -> Result<Horosphere> {
    let mut samples = Vec::new();
    let mut residuals = Vec::new();
    let mut unit_res = Vec::new();
    let mut seen_min = f64::INFINITY;
    let mut seen_max = f64::NEG_INFINITY;
    // frozen companion for smooth differences
    let mut t_frozen: f64 = 1.0;
    let mut keep: Vec<(Point, f64)> = Vec::new();
    for x in grid {
        let ev = field.evaluate(x)?;
        seen_min = seen_min.min(ev.value);
        seen_max = seen_max.max(ev.value);
        if (ev.value - c).abs() <= cell_reach {
            t_frozen = t_frozen.max(ev.t_final);
            keep.push((x.clone(), ev.value));
        }
    }
    if keep.is_empty() {
        return Err(FinslerError::LevelOutOfRange {
            level: c,
            min: seen_min,
            max: seen_max,
        });
    }
    let frozen = Arc::new(BusemannField::frozen(
        field.ray().clone(),
        field.options().clone(),
        t_frozen,
    ));
    let sf = frozen.scalar_field(1e-3);
    for (x, b) in keep {
        let db = sf.differential(&x);
        let descent = f.gradient_from_differential(&x, &(-&db))?.components;
        let fnorm = f.norm(&x, &descent);
        if fnorm <= 0.0 {
            continue;
        }
        let unit = &descent / fnorm;
        // b decreases at unit rate along the descent direction
        let xr = &x + &unit * (b - c);
        let br = field.value(&xr)?;
        if (br - c).abs() <= band {
            let dbr = sf.differential(&xr);
            let des_r = f.gradient_from_differential(&xr, &(-dbr))?.components;
            samples.push(xr);
            residuals.push((br - c).abs());
            unit_res.push((f.norm(&x, &des_r) - 1.0).abs());
        }
    }
    if samples.is_empty() {
        return Err(FinslerError::LevelOutOfRange {
            level: c,
            min: seen_min,
            max: seen_max,
        });
    }
    Ok(Horosphere {
        ray_id: field.ray().id(),
        level: c,
        band,
        samples,
        residuals,
        unit_gradient_residuals: unit_res,
    })
}

#[derive(Debug, Clone)]
pub struct ForwardBackwardReport {
    pub sums: Vec<(Point, f64)>,
    pub max_abs_sum: f64,
}

/// `max |b_eta + b_eta_bar|` over the sample points, for the line through
/// `base` with direction `dir`. The backward Busemann function lives under
/// the reverse structure with the opposite initial velocity.
pub fn forward_backward_sum(
    f: &FinslerStructure,
    base: &Point,
    dir: &DVector<f64>,
    xs: &[Point],
    opts: &BusemannOptions,
) -> Result<ForwardBackwardReport> {
    let fwd = Arc::new(Ray::new_unchecked(f, base.clone(), dir)?);
    let rev_structure = f.reverse_structure();
    let bwd = Arc::new(Ray::new_unchecked(&rev_structure, base.clone(), &(-dir))?);
    let field_f = BusemannField::new(fwd, opts.clone());
    let field_b = BusemannField::new(bwd, opts.clone());
    let mut sums = Vec::with_capacity(xs.len());
    let mut worst: f64 = 0.0;
    for x in xs {
        let s = field_f.value(x)? + field_b.value(x)?;
        worst = worst.max(s.abs());
        sums.push((x.clone(), s));
    }
    Ok(ForwardBackwardReport {
        sums,
        max_abs_sum: worst,
    })
}

#[derive(Debug, Clone)]
pub struct AhfReport {
    pub structure: String,
    pub volume_kind: String,
    pub ray_ids: Vec<u64>,
    /// `(ray id, point, Delta b)` samples.
    pub samples: Vec<(u64, Point, f64)>,
    pub estimated_h: f64,
    pub spread: f64,
    pub weak_residual: f64,
    pub threshold: f64,
    pub weak_tolerance: f64,
    pub consistent: bool,
}

/// Laplacians of Busemann functions over rays x points; constancy is the
/// asymptotic-harmonicity diagnosis.
#[allow(clippy::too_many_arguments)]
pub fn ahf_diagnose(
    f: &FinslerStructure,
    mu: &VolumeForm,
    rays: &[Arc<Ray>],
    points: &[Point],
    threshold: f64,
    weak_tolerance: f64,
    frozen_t: f64,
    fd_step: f64,
    weak_region: Option<(crate::chart::BoxRegion, usize)>,
) -> Result<AhfReport> {
    if rays.is_empty() || points.is_empty() {
        return Err(FinslerError::invalid("ahf_diagnose", "rays and points must be nonempty"));
    }
    let lopts = LaplacianOptions {
        h_div: Some(fd_step),
    };
    let mut samples = Vec::new();
    let mut first_field: Option<Arc<BusemannField>> = None;
    for ray in rays {
        let field = Arc::new(BusemannField::frozen(
            ray.clone(),
            BusemannOptions::default(),
            frozen_t,
        ));
        if first_field.is_none() {
            first_field = Some(field.clone());
        }
        let sf = field.scalar_field(fd_step);
        let values: Vec<Result<f64>> = points
            .par_iter()
            .map(|p| Ok(shen_laplacian(f, mu, &sf, p, &lopts)?.value))
            .collect();
        for (p, v) in points.iter().zip(values) {
            samples.push((ray.id(), p.clone(), v?));
        }
    }
    let vals: Vec<f64> = samples.iter().map(|(_, _, v)| *v).collect();
    let h = vals.iter().sum::<f64>() / vals.len() as f64;
    let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - vals.iter().cloned().fold(f64::INFINITY, f64::min);

    let weak_residual = match weak_region {
        Some((omega, order)) => {
            let field = first_field.expect("at least one ray");
            let sf = field.scalar_field(fd_step);
            let bump = BumpFunction {
                support: omega.shrunk(0.9),
            };
            weak_laplacian_residual(f, mu, &sf, h, &omega, &[bump], order)?
        }
        None => 0.0,
    };

    Ok(AhfReport {
        structure: f.describe(),
        volume_kind: mu.kind().to_string(),
        ray_ids: rays.iter().map(|r| r.id()).collect(),
        samples,
        estimated_h: h,
        spread,
        weak_residual,
        threshold,
        weak_tolerance,
        consistent: spread <= threshold && weak_residual <= weak_tolerance,
    })
}

#[derive(Debug, Clone)]
pub struct DistanceVsBusemannReport {
    pub max_deviation: f64,
    pub gradient_norm_at_base: f64,
    pub value_at_base: f64,
}

/// For a distance-type field `f_field` with `f(p) = 0`, builds the backward
/// Busemann function of the integral curve of `grad f` through `p` and
/// reports `max |f - b_bar|` over the samples.
pub fn distance_function_vs_busemann(
    f: &FinslerStructure,
    f_field: &ScalarField,
    p: &Point,
    xs: &[Point],
    opts: &BusemannOptions,
) -> Result<DistanceVsBusemannReport> {
    let grad_p = f.gradient(f_field, p)?.components;
    let gradient_norm_at_base = f.norm(p, &grad_p);
    let value_at_base = f_field.eval(p);

    // backward flow of grad f from p: eta(-t)
    let flow_back = |t: f64| -> Result<Point> {
        let steps = ((t / 1e-3).ceil() as usize).max(1);
        let h = -t / steps as f64;
        let mut z = p.clone();
        for _ in 0..steps {
            let k1 = f.gradient(f_field, &z)?.components;
            let k2 = f.gradient(f_field, &(&z + &k1 * (h / 2.0)))?.components;
            let k3 = f.gradient(f_field, &(&z + &k2 * (h / 2.0)))?.components;
            let k4 = f.gradient(f_field, &(&z + &k3 * h))?.components;
            z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        Ok(z)
    };

    // b_bar(x) = lim_t d(eta(-t), x) - t, by the same doubling certificate
    let b_bar = |x: &Point| -> Result<f64> {
        let mut t = 1.0f64.max(2.0 * distance(f, x, p, &opts.distance)?.value);
        let mut prev: Option<f64> = None;
        loop {
            let c = flow_back(t)?;
            let d = distance(f, &c, x, &opts.distance)?;
            let bt = d.value - t;
            if let Some(pv) = prev {
                if (pv - bt).abs() < opts.tol {
                    return Ok(bt);
                }
            }
            prev = Some(bt);
            if 2.0 * t > opts.t_max {
                return Err(FinslerError::BusemannNonConvergence {
                    tol: opts.tol,
                    t_max: opts.t_max,
                    lower: bt - opts.tol,
                    upper: bt,
                });
            }
            t *= 2.0;
        }
    };

    let mut worst: f64 = 0.0;
    for x in xs {
        let fx = f_field.eval(x);
        let bb = b_bar(x)?;
        worst = worst.max((fx - bb).abs());
    }
    Ok(DistanceVsBusemannReport {
        max_deviation: worst,
        gradient_norm_at_base,
        value_at_base,
    })
}

#[derive(Debug, Clone)]
pub struct TotalBusemannReport {
    /// Per direction: `(sup over samples, inf over samples)`.
    pub envelopes: Vec<(f64, f64)>,
    /// Worst violation of `-d(x, p) <= b(x) <= d(p, x)`.
    pub max_bound_violation: f64,
    /// `max over samples |b_{y_k} - b_y|` for a direction sequence
    /// `y_k -> y` (equicontinuous convergence record).
    pub convergence_gaps: Vec<f64>,
}

/// Evaluates the total Busemann function `(p, y) -> b_{(p,y)}` over a
/// direction fan and a compact sample set, asserting the two-sided distance
/// bound per sample.
pub fn total_busemann_bound(
    f: &FinslerStructure,
    p: &Point,
    direction_count: usize,
    samples: &[Point],
    opts: &BusemannOptions,
) -> Result<TotalBusemannReport> {
    let dirs = f.indicatrix_directions(p, direction_count);
    let mut envelopes = Vec::with_capacity(dirs.len());
    let mut worst: f64 = 0.0;
    for u in &dirs {
        let ray = Arc::new(Ray::new_unchecked(f, p.clone(), u)?);
        let field = BusemannField::new(ray, opts.clone());
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        for x in samples {
            let b = field.value(x)?;
            sup = sup.max(b);
            inf = inf.min(b);
            let d_px = distance(f, p, x, &opts.distance)?.value;
            let d_xp = distance(f, x, p, &opts.distance)?.value;
            worst = worst.max(b - d_px).max(-d_xp - b);
        }
        envelopes.push((sup, inf));
    }

    // convergence record: directions approaching dirs[0] along the fan
    let base_dir = &dirs[0];
    let base_ray = Arc::new(Ray::new_unchecked(f, p.clone(), base_dir)?);
    let base_field = BusemannField::new(base_ray, opts.clone());
    let mut gaps = Vec::new();
    let probe = dirs.len().min(4);
    for k in 1..=probe {
        let angle_scale = 0.5f64.powi(k as i32);
        // blend toward the base direction
        let blend = base_dir * (1.0 - angle_scale) + &dirs[1 % dirs.len()] * angle_scale;
        let u = f.normalize(p, &blend)?;
        let ray = Arc::new(Ray::new_unchecked(f, p.clone(), &u)?);
        let field = BusemannField::new(ray, opts.clone());
        let mut gap: f64 = 0.0;
        for x in samples {
            gap = gap.max((field.value(x)? - base_field.value(x)?).abs());
        }
        gaps.push(gap);
    }

    Ok(TotalBusemannReport {
        envelopes,
        max_bound_violation: worst.max(0.0),
        convergence_gaps: gaps,
    })
}

/// Convenience: two-sided Lipschitz data for one pair, used by harness code.
pub fn busemann_pair_slack(
    f: &FinslerStructure,
    field: &BusemannField,
    x: &Point,
    y: &Point,
) -> Result<(f64, f64)> {
    let bx = field.value(x)?;
    let by = field.value(y)?;
    let dxy = distance(f, x, y, &field.options().distance)?.value;
    let dyx = distance(f, y, x, &field.options().distance)?.value;
    Ok((by - bx - dxy, -dyx - (by - bx)))
}

/// Build a covector field helper for tests: the differential of the
/// closed-form Busemann function of a point-independent structure.
pub fn minkowski_closed_form_field(
    f: &FinslerStructure,
    v: &DVector<f64>,
) -> Result<ScalarField> {
    if !f.is_point_independent() {
        return Err(FinslerError::unsupported(
            "minkowski_closed_form_field",
            "structure is point-dependent",
        ));
    }
    let origin = Point::zeros(f.dim());
    let df = f.norm_dy(&origin, v)?;
    let name = "minkowski_busemann".to_string();
    let df2 = df.clone();
    Ok(
        ScalarField::new(name, move |x: &Point| -x.dot(&df)).with_exact_grad(move |_x| -&df2),
    )
}

/// The covector `-dF(v)` paired with a base point, for gradient tests.
pub fn closed_form_differential(
    f: &FinslerStructure,
    v: &DVector<f64>,
    base: &Point,
) -> Result<Covector> {
    let df = f.norm_dy(base, v)?;
    Ok(Covector::new(base.clone(), -df))
}

/// Re-export the tangent type for downstream ergonomics.
pub type Tangent = TangentVector;
