//! Geodesic integration: spray coefficients, RK4, exponential map, rays.
//!
//! The geodesic equation is `x'' = -2 G(x, x')` with spray coefficients
//! `G^i = 1/4 g^{il} (y^k d^2(F^2)/dx^k dy^l - d(F^2)/dx^l)`. Point
//! independent norms have `G = 0` (straight lines); the riemannian presets
//! have closed-form sprays used as fast kernels in the hot loop. Everything
//! integrates with fixed-step RK4 so traces are reproducible across runs.

use crate::chart::{ManifoldChart, Point, TangentVector};
use crate::distance::{distance, DistanceOptions};
use crate::error::{FinslerError, Result};
use crate::structure::{Family, FinslerStructure, RiemannianPreset};
use nalgebra::DVector;
use std::sync::Mutex;

/// Default fixed RK4 step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Bound on the speed drift of an accepted geodesic trace.
pub const SPEED_DRIFT_BOUND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

/// Acceleration kernel `a = -2G(x, v)` specialized per family so the RK4
/// inner loop stays allocation-light.
pub(crate) enum SprayKernel {
    Zero,
    HyperbolicHalfSpace,
    Conformal { amplitude: f64 },
    Generic(FinslerStructure),
}

impl SprayKernel {
    pub(crate) fn for_structure(f: &FinslerStructure) -> SprayKernel {
        if f.is_point_independent() {
            return SprayKernel::Zero;
        }
        match f.family() {
            Family::Riemannian { preset } | Family::Randers { alpha: preset, .. } => match preset {
                RiemannianPreset::HyperbolicHalfSpace
                    if matches!(f.family(), Family::Riemannian { .. }) =>
                {
                    SprayKernel::HyperbolicHalfSpace
                }
                RiemannianPreset::PerturbedConformal { amplitude }
                    if matches!(f.family(), Family::Riemannian { .. }) =>
                {
                    SprayKernel::Conformal { amplitude: *amplitude }
                }
                _ => SprayKernel::Generic(f.clone()),
            },
            _ => SprayKernel::Generic(f.clone()),
        }
    }

    /// Writes `-2 G(x, v)` into `out`.
    pub(crate) fn accel(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            SprayKernel::Zero => out.fill(0.0),
            SprayKernel::HyperbolicHalfSpace => {
                // g = delta / x_n^2: Gamma^a_{an} = -1/x_n, Gamma^n_{aa} = 1/x_n,
                // Gamma^n_{nn} = -1/x_n
                let n = x.len();
                let y = x[n - 1];
                let vn = v[n - 1];
                let mut tang_sq = 0.0;
                for a in 0..n - 1 {
                    tang_sq += v[a] * v[a];
                    out[a] = 2.0 * v[a] * vn / y;
                }
                out[n - 1] = (vn * vn - tang_sq) / y;
            }
            SprayKernel::Conformal { amplitude } => {
                // g = e^{2 phi} delta: G^i = (dphi.v) v^i - 1/2 |v|^2 dphi^i
                let n = x.len();
                let mut dphi = [0.0f64; 8];
                dphi[0] = amplitude * x[0].cos() * x[1].sin();
                dphi[1] = amplitude * x[0].sin() * x[1].cos();
                let mut dv = 0.0;
                let mut vv = 0.0;
                for i in 0..n {
                    dv += dphi[i] * v[i];
                    vv += v[i] * v[i];
                }
                for i in 0..n {
                    let g = dv * v[i] - 0.5 * vv * dphi[i];
                    out[i] = -2.0 * g;
                }
            }
            SprayKernel::Generic(f) => {
                let n = x.len();
                let xp = DVector::from_row_slice(x);
                let vp = DVector::from_row_slice(v);
                let g = match f.fundamental_matrix(&xp, &vp) {
                    Ok(g) => g,
                    Err(_) => {
                        out.fill(f64::NAN);
                        return;
                    }
                };
                let mixed = f.norm_sq_dxdy(&xp, &vp);
                let dx = f.norm_sq_dx(&xp, &vp);
                // rhs_l = y^k d2(F^2)/dx^k dy^l - d(F^2)/dx^l
                let rhs = mixed.transpose() * &vp - dx;
                match g.lu().solve(&rhs) {
                    Some(sol) => {
                        for i in 0..n {
                            out[i] = -0.5 * sol[i];
                        }
                    }
                    None => out.fill(f64::NAN),
                }
            }
        }
    }
}

/// Fixed-step RK4 integrator with preallocated buffers.
pub(crate) struct Integrator<'a> {
    kernel: SprayKernel,
    chart: &'a ManifoldChart,
    n: usize,
    // stage buffers
    ax: Vec<f64>,
    bx: Vec<f64>,
    bv: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub(crate) fn new(f: &'a FinslerStructure) -> Self {
        let n = f.dim();
        Integrator {
            kernel: SprayKernel::for_structure(f),
            chart: f.chart(),
            n,
            ax: vec![0.0; n],
            bx: vec![0.0; n],
            bv: vec![0.0; n],
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        let lo = self.chart.lower();
        let hi = self.chart.upper();
        x.iter()
            .enumerate()
            .all(|(i, &xi)| xi.is_finite() && xi > lo[i] && xi < hi[i])
    }

    /// One RK4 step in place. Returns false if the state left the chart or
    /// became non-finite.
    pub(crate) fn step(&mut self, x: &mut [f64], v: &mut [f64], h: f64) -> bool {
        let n = self.n;
        // stage 1 at (x, v)
        self.kernel.accel(x, v, &mut self.k1);
        // stage 2 at (x + h/2 v, v + h/2 k1)
        for i in 0..n {
            self.ax[i] = x[i] + 0.5 * h * v[i];
            self.bv[i] = v[i] + 0.5 * h * self.k1[i];
        }
        self.kernel.accel(&self.ax, &self.bv, &mut self.k2);
        // stage 3 at (x + h/2 (v + h/2 k1), v + h/2 k2)
        for i in 0..n {
            self.bx[i] = x[i] + 0.5 * h * self.bv[i];
        }
        let v2: Vec<f64> = self.bv.clone();
        for i in 0..n {
            self.bv[i] = v[i] + 0.5 * h * self.k2[i];
        }
        self.kernel.accel(&self.bx, &self.bv, &mut self.k3);
        // stage 4 at (x + h (v + h/2 k2), v + h k3)
        for i in 0..n {
            self.ax[i] = x[i] + h * self.bv[i];
        }
        let v3: Vec<f64> = self.bv.clone();
        for i in 0..n {
            self.bv[i] = v[i] + h * self.k3[i];
        }
        self.kernel.accel(&self.ax, &self.bv, &mut self.k4);
        for i in 0..n {
            let dx = v[i] + 2.0 * v2[i] + 2.0 * v3[i] + self.bv[i];
            x[i] += h / 6.0 * dx;
            v[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        self.contains(x) && v.iter().all(|c| c.is_finite())
    }

    /// Integrate from `(x0, v0)` over arc length `s` (unit-speed data);
    /// returns the final state.
    pub(crate) fn endpoint(&mut self, x0: &[f64], v0: &[f64], s: f64, dt: f64) -> Result<State> {
        let mut x = x0.to_vec();
        let mut v = v0.to_vec();
        if s == 0.0 {
            return Ok(State {
                x: DVector::from_row_slice(&x),
                v: DVector::from_row_slice(&v),
            });
        }
        let nsteps = (s / dt).ceil().max(1.0) as usize;
        let h = s / nsteps as f64;
        for k in 0..nsteps {
            if !self.step(&mut x, &mut v, h) {
                let mut state = x.clone();
                state.extend_from_slice(&v);
                return Err(FinslerError::DomainExit {
                    t: (k as f64) * h,
                    state,
                });
            }
        }
        Ok(State {
            x: DVector::from_row_slice(&x),
            v: DVector::from_row_slice(&v),
        })
    }
}

/// One RK4 step of the geodesic equation. The velocity need not be unit.
pub fn spray_step(
    f: &FinslerStructure,
    state: (&Point, &DVector<f64>),
    dt: f64,
) -> Result<(Point, DVector<f64>)> {
    let (x0, v0) = state;
    f.chart().check_contains(x0)?;
    if v0.iter().all(|&c| c == 0.0) {
        return Err(FinslerError::DegenerateDirection);
    }
    let mut integ = Integrator::new(f);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut v: Vec<f64> = v0.iter().copied().collect();
    if !integ.step(&mut x, &mut v, dt) {
        let mut st = x.clone();
        st.extend_from_slice(&v);
        return Err(FinslerError::DomainExit { t: dt, state: st });
    }
    Ok((DVector::from_row_slice(&x), DVector::from_row_slice(&v)))
}

/// Spray coefficients `G^i(x, v)` (exposed mainly for diagnostics/tests).
pub fn spray_coefficients(f: &FinslerStructure, x: &Point, v: &DVector<f64>) -> DVector<f64> {
    let kernel = SprayKernel::for_structure(f);
    let mut out = vec![0.0; f.dim()];
    let xs: Vec<f64> = x.iter().copied().collect();
    let vs: Vec<f64> = v.iter().copied().collect();
    kernel.accel(&xs, &vs, &mut out);
    DVector::from_iterator(f.dim(), out.into_iter().map(|a| -0.5 * a))
}

/// Endpoint of the geodesic from `x` with initial velocity `v / F(v)` at
/// arc-length parameter `t * F(v)`; `exp(x, v, 0) = x` exactly.
pub fn exp_map(f: &FinslerStructure, x: &Point, v: &TangentVector, t: f64) -> Result<Point> {
    f.chart().check_contains(x)?;
    if v.is_zero() {
        return Err(FinslerError::DegenerateDirection);
    }
    if t < 0.0 {
        return Err(FinslerError::invalid("exp_map", "t must be >= 0"));
    }
    if t == 0.0 {
        return Ok(x.clone());
    }
    let fv = f.norm(x, &v.components);
    let u = &v.components / fv;
    let s = t * fv;
    let mut integ = Integrator::new(f);
    let xs: Vec<f64> = x.iter().copied().collect();
    let us: Vec<f64> = u.iter().copied().collect();
    Ok(integ.endpoint(&xs, &us, s, DEFAULT_DT)?.x)
}

/// An integrated geodesic trace with speed diagnostics.
#[derive(Debug, Clone)]
pub struct GeodesicRecord {
    pub structure: String,
    pub initial_point: Point,
    pub initial_velocity: DVector<f64>,
    pub dt: f64,
    pub samples: Vec<(f64, Point, DVector<f64>)>,
    pub speed_drift: f64,
}

/// Integrate a unit-speed geodesic and record decimated samples.
pub fn integrate_record(
    f: &FinslerStructure,
    x0: &Point,
    v0: &DVector<f64>,
    t_end: f64,
    dt: f64,
    max_samples: usize,
) -> Result<GeodesicRecord> {
    f.chart().check_contains(x0)?;
    let fv = f.norm(x0, v0);
    if fv <= 0.0 {
        return Err(FinslerError::DegenerateDirection);
    }
    let u = v0 / fv;
    let nsteps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / nsteps as f64;
    let every = (nsteps / max_samples.max(1)).max(1);
    let mut integ = Integrator::new(f);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut v: Vec<f64> = u.iter().copied().collect();
    let mut samples = Vec::new();
    let mut drift: f64 = 0.0;
    samples.push((0.0, x0.clone(), u.clone()));
    for k in 0..nsteps {
        if !integ.step(&mut x, &mut v, h) {
            let mut st = x.clone();
            st.extend_from_slice(&v);
            return Err(FinslerError::DomainExit {
                t: (k as f64) * h,
                state: st,
            });
        }
        let xp = DVector::from_row_slice(&x);
        let vp = DVector::from_row_slice(&v);
        drift = drift.max((f.norm(&xp, &vp) - 1.0).abs());
        if (k + 1) % every == 0 || k + 1 == nsteps {
            samples.push(((k + 1) as f64 * h, xp, vp));
        }
    }
    Ok(GeodesicRecord {
        structure: f.describe(),
        initial_point: x0.clone(),
        initial_velocity: u,
        dt,
        samples,
        speed_drift: drift,
    })
}

struct Trace {
    /// checkpoint states; `states[k]` is the state at `t = k * ckpt_t`
    states: Vec<State>,
    speed_drift: f64,
}

/// A forward geodesic ray with an on-demand extendable trace.
///
/// Minimality `d(gamma(s), gamma(t)) = t - s` is verified up to
/// `minimality_checked_up_to` when the ray is built with [`make_ray`].
pub struct Ray {
    structure: FinslerStructure,
    id: u64,
    base: Point,
    direction: DVector<f64>,
    dt: f64,
    steps_per_ckpt: usize,
    trace: Mutex<Trace>,
    pub minimality_checked_up_to: f64,
}

impl std::fmt::Debug for Ray {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ray")
            .field("id", &self.id)
            .field("base", &self.base.as_slice())
            .field("direction", &self.direction.as_slice())
            .field("minimality_checked_up_to", &self.minimality_checked_up_to)
            .finish()
    }
}

impl Ray {
    /// Build a ray without the minimality verification (used internally and
    /// for closed-form families where straight lines are known minimal).
    pub fn new_unchecked(f: &FinslerStructure, base: Point, velocity: &DVector<f64>) -> Result<Ray> {
        f.chart().check_contains(&base)?;
        let fv = f.norm(&base, velocity);
        if fv <= 0.0 {
            return Err(FinslerError::DegenerateDirection);
        }
        let direction = velocity / fv;
        let id = ray_id(f, &base, &direction);
        Ok(Ray {
            structure: f.clone(),
            id,
            base: base.clone(),
            direction: direction.clone(),
            dt: DEFAULT_DT,
            steps_per_ckpt: (1.0 / DEFAULT_DT).round().max(1.0) as usize,
            trace: Mutex::new(Trace {
                states: vec![State {
                    x: base,
                    v: direction,
                }],
                speed_drift: 0.0,
            }),
            minimality_checked_up_to: 0.0,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn structure(&self) -> &FinslerStructure {
        &self.structure
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    /// F-unit initial velocity.
    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn speed_drift(&self) -> f64 {
        self.trace.lock().unwrap().speed_drift
    }

    fn ckpt_t(&self) -> f64 {
        self.steps_per_ckpt as f64 * self.dt
    }

    /// Ensure checkpoints cover `t`, extending the trace if needed.
    fn extend_to(&self, t: f64) -> Result<State> {
        let ckpt = self.ckpt_t();
        let k_need = (t / ckpt).floor() as usize;
        let mut trace = self.trace.lock().unwrap();
        if trace.states.len() <= k_need {
            let mut integ = Integrator::new(&self.structure);
            let last = trace.states.last().expect("nonempty").clone();
            let mut x: Vec<f64> = last.x.iter().copied().collect();
            let mut v: Vec<f64> = last.v.iter().copied().collect();
            let start_k = trace.states.len() - 1;
            for k in start_k..k_need {
                for s in 0..self.steps_per_ckpt {
                    if !integ.step(&mut x, &mut v, self.dt) {
                        let mut st = x.clone();
                        st.extend_from_slice(&v);
                        return Err(FinslerError::DomainExit {
                            t: (k as f64) * ckpt + (s as f64) * self.dt,
                            state: st,
                        });
                    }
                }
                let xp = DVector::from_row_slice(&x);
                let vp = DVector::from_row_slice(&v);
                let drift = (self.structure.norm(&xp, &vp) - 1.0).abs();
                trace.speed_drift = trace.speed_drift.max(drift);
                trace.states.push(State { x: xp, v: vp });
            }
        }
        Ok(trace.states[k_need].clone())
    }

    /// State `(gamma(t), gamma'(t))` for `t >= 0`.
    pub fn state_at(&self, t: f64) -> Result<State> {
        if t < 0.0 {
            return Err(FinslerError::invalid("ray", "t must be >= 0"));
        }
        let ckpt = self.ckpt_t();
        let base_state = self.extend_to(t)?;
        let k = (t / ckpt).floor() as usize;
        let rem = t - k as f64 * ckpt;
        if rem == 0.0 {
            return Ok(base_state);
        }
        let mut integ = Integrator::new(&self.structure);
        let full = (rem / self.dt).floor() as usize;
        let mut x: Vec<f64> = base_state.x.iter().copied().collect();
        let mut v: Vec<f64> = base_state.v.iter().copied().collect();
        for s in 0..full {
            if !integ.step(&mut x, &mut v, self.dt) {
                let mut st = x.clone();
                st.extend_from_slice(&v);
                return Err(FinslerError::DomainExit {
                    t: k as f64 * ckpt + s as f64 * self.dt,
                    state: st,
                });
            }
        }
        let tail = rem - full as f64 * self.dt;
        if tail > 1e-15 && !integ.step(&mut x, &mut v, tail) {
            let mut st = x.clone();
            st.extend_from_slice(&v);
            return Err(FinslerError::DomainExit { t, state: st });
        }
        Ok(State {
            x: DVector::from_row_slice(&x),
            v: DVector::from_row_slice(&v),
        })
    }

    pub fn point_at(&self, t: f64) -> Result<Point> {
        Ok(self.state_at(t)?.x)
    }

    /// A decimated [`GeodesicRecord`] of the trace computed so far.
    pub fn record(&self) -> GeodesicRecord {
        let trace = self.trace.lock().unwrap();
        let ckpt = self.ckpt_t();
        GeodesicRecord {
            structure: self.structure.describe(),
            initial_point: self.base.clone(),
            initial_velocity: self.direction.clone(),
            dt: self.dt,
            samples: trace
                .states
                .iter()
                .enumerate()
                .map(|(k, s)| (k as f64 * ckpt, s.x.clone(), s.v.clone()))
                .collect(),
            speed_drift: trace.speed_drift,
        }
    }
}

fn ray_id(f: &FinslerStructure, base: &Point, dir: &DVector<f64>) -> u64 {
    // FNV-1a over the structure description and the state bits
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    eat(f.describe().as_bytes());
    for v in base.iter().chain(dir.iter()) {
        eat(&v.to_bits().to_le_bytes());
    }
    h
}

/// Pairs `(s, t)` used for the minimality verification of [`make_ray`].
fn minimality_pairs(t_check: f64) -> Vec<(f64, f64)> {
    vec![
        (0.0, 0.25 * t_check),
        (0.0, 0.5 * t_check),
        (0.0, t_check),
        (0.25 * t_check, 0.5 * t_check),
        (0.25 * t_check, 0.75 * t_check),
        (0.5 * t_check, t_check),
    ]
}

/// Build a forward ray with velocity normalized to `F = 1` and verify the
/// ray property `d(gamma(s), gamma(t)) = t - s` on sampled pairs up to
/// `t_check`.
pub fn make_ray(
    f: &FinslerStructure,
    p: &Point,
    v: &TangentVector,
    t_check: f64,
    minimality_tol: f64,
) -> Result<Ray> {
    if v.is_zero() {
        return Err(FinslerError::DegenerateDirection);
    }
    let mut ray = Ray::new_unchecked(f, p.clone(), &v.components)?;
    if t_check > 0.0 {
        for (s, t) in minimality_pairs(t_check) {
            if t <= s {
                continue;
            }
            let a = ray.state_at(s)?;
            let b = ray.state_at(t)?;
            let opts = DistanceOptions {
                warm_start: Some((a.v.clone(), t - s)),
                ..DistanceOptions::default()
            };
            let d = distance(f, &a.x, &b.x, &opts)?;
            let tol = minimality_tol * (1.0 + (t - s)) + d.error_estimate;
            if (d.value - (t - s)).abs() > tol {
                return Err(FinslerError::NotMinimizing {
                    s,
                    t,
                    measured: d.value,
                    expected: t - s,
                });
            }
        }
        ray.minimality_checked_up_to = t_check;
    }
    Ok(ray)
}

/// Initial velocities of minimal geodesics from `p` to `ray(t_i)`, plus the
/// detected limit direction when the sequence is Cauchy within `cauchy_tol`.
#[derive(Debug, Clone)]
pub struct MinimizerSequence {
    pub entries: Vec<(f64, DVector<f64>)>,
    pub limit: Option<DVector<f64>>,
    pub cauchy_gap: f64,
}

pub fn minimizer_sequence(
    f: &FinslerStructure,
    p: &Point,
    ray: &Ray,
    t_list: &[f64],
    cauchy_tol: f64,
) -> Result<MinimizerSequence> {
    f.chart().check_contains(p)?;
    let mut entries: Vec<(f64, DVector<f64>)> = Vec::with_capacity(t_list.len());
    let mut warm: Option<(DVector<f64>, f64)> = None;
    for &t in t_list {
        let q = ray.point_at(t)?;
        let opts = DistanceOptions {
            warm_start: warm.clone(),
            ..DistanceOptions::default()
        };
        let d = distance(f, p, &q, &opts).map_err(|e| {
            FinslerError::numeric(format!("minimizer at t = {t}: {e}"), f64::NAN)
        })?;
        let dir = d.initial_direction.clone().ok_or_else(|| {
            FinslerError::numeric("minimizer direction unavailable", f64::NAN)
        })?;
        warm = Some((dir.clone(), d.value));
        entries.push((t, dir));
    }
    let mut cauchy_gap = f64::INFINITY;
    if entries.len() >= 2 {
        let (_, ref a) = entries[entries.len() - 2];
        let (_, ref b) = entries[entries.len() - 1];
        cauchy_gap = (a - b).norm();
    }
    let limit = if cauchy_gap <= cauchy_tol {
        Some(entries.last().expect("nonempty").1.clone())
    } else {
        None
    };
    Ok(MinimizerSequence {
        entries,
        limit,
        cauchy_gap,
    })
}
