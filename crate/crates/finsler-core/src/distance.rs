//! The nonsymmetric two-point distance problem.
//!
//! Method cascade: translation-invariant families use the closed form
//! `d(p, q) = F(q - p)`; otherwise a shooting solver finds the initial
//! direction and arc length of the connecting geodesic by damped Newton,
//! multi-started over indicatrix directions; when shooting fails to
//! converge, a directed-graph lattice seed is tried. The returned value is
//! the arc length of the converged geodesic, the witness path is a sampled
//! polyline, and `error_estimate` combines the endpoint miss (measured in
//! the metric at the target) with an integration-error heuristic.

use crate::chart::Point;
use crate::error::{FinslerError, Result};
use crate::geodesic::{Integrator, DEFAULT_DT};
use crate::structure::FinslerStructure;
use nalgebra::{DMatrix, DVector};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMethod {
    ClosedForm,
    Shooting,
    LatticeFallback,
}

impl std::fmt::Display for DistanceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceMethod::ClosedForm => write!(f, "closed-form"),
            DistanceMethod::Shooting => write!(f, "shooting"),
            DistanceMethod::LatticeFallback => write!(f, "lattice-fallback"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistanceResult {
    pub from: Point,
    pub to: Point,
    pub value: f64,
    pub path: Vec<Point>,
    pub method: DistanceMethod,
    pub error_estimate: f64,
    /// F-unit initial velocity of the minimizing geodesic (when known).
    pub initial_direction: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct DistanceOptions {
    /// RK4 step of the shooting integrations.
    pub dt: f64,
    /// Endpoint-miss tolerance, measured by `F(q, miss)` and scaled by
    /// `(1 + T)`.
    pub tol: f64,
    /// Newton iteration cap per seed.
    pub max_iters: usize,
    /// How many of the best-scoring seeds get fully refined.
    pub refine_candidates: usize,
    /// Warm start `(F-unit direction, arc length)`; tried before the
    /// multi-start sweep.
    pub warm_start: Option<(DVector<f64>, f64)>,
    /// Whether the lattice seed may run when multi-start fails.
    pub allow_lattice: bool,
    /// Witness-path sample count.
    pub path_samples: usize,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            dt: DEFAULT_DT,
            tol: 1e-10,
            max_iters: 60,
            refine_candidates: 4,
            warm_start: None,
            allow_lattice: true,
            path_samples: 33,
        }
    }
}

/// Nonsymmetric distance `d_F(p, q)`.
pub fn distance(
    f: &FinslerStructure,
    p: &Point,
    q: &Point,
    opts: &DistanceOptions,
) -> Result<DistanceResult> {
    f.chart().check_contains(p)?;
    f.chart().check_contains(q)?;
    if p == q {
        return Ok(DistanceResult {
            from: p.clone(),
            to: q.clone(),
            value: 0.0,
            path: vec![p.clone()],
            method: DistanceMethod::ClosedForm,
            error_estimate: 0.0,
            initial_direction: None,
        });
    }
    if f.is_point_independent() {
        let delta = q - p;
        let value = f.norm(p, &delta);
        return Ok(DistanceResult {
            from: p.clone(),
            to: q.clone(),
            value,
            path: vec![p.clone(), q.clone()],
            method: DistanceMethod::ClosedForm,
            error_estimate: 8.0 * f64::EPSILON * value.max(1.0),
            initial_direction: Some(delta / value),
        });
    }
    shooting_distance(f, p, q, opts)
}

struct Shot {
    direction: DVector<f64>,
    length: f64,
    miss: f64,
}

/// Newton refinement of one seed. Unknowns are `(xi, T)` where the
/// direction is `normalize_F(u_anchor + Z xi)` with `Z` a basis of the
/// euclidean complement of the anchor; the anchor is re-centered every
/// iteration.
fn newton_refine(
    f: &FinslerStructure,
    integ: &mut Integrator<'_>,
    p: &Point,
    q: &Point,
    seed_dir: &DVector<f64>,
    seed_len: f64,
    opts: &DistanceOptions,
) -> Option<Shot> {
    let n = f.dim();
    let ps: Vec<f64> = p.iter().copied().collect();
    let metric_miss = |end: &DVector<f64>| -> f64 {
        let miss = end - q;
        f.norm(q, &miss)
    };
    let endpoint = |integ: &mut Integrator<'_>, dir: &DVector<f64>, t: f64| -> Option<DVector<f64>> {
        if t <= 0.0 {
            return None;
        }
        let ds: Vec<f64> = dir.iter().copied().collect();
        integ.endpoint(&ps, &ds, t, opts.dt).ok().map(|s| s.x)
    };

    let debug = std::env::var_os("FINSLER_DEBUG_SHOOTING").is_some();
    let mut u = seed_dir.clone();
    let mut t = seed_len.max(opts.dt);
    let mut end = endpoint(integ, &u, t)?;
    let mut miss = metric_miss(&end);
    // adaptive FD steps for the Jacobian; the endpoint map can be violently
    // nonlinear in the direction at long range, so each step is rescaled to
    // move the endpoint by roughly the current miss
    let mut dxi = 1e-7;
    let mut dt_fd = 1e-7 * (1.0 + t);

    for iter in 0..opts.max_iters {
        if debug {
            eprintln!(
                "  shoot iter {iter}: T = {t:.6e}, miss = {miss:.3e}, u = {:?}",
                u.as_slice()
            );
        }
        if miss <= opts.tol * (1.0 + t) {
            return Some(Shot {
                direction: u,
                length: t,
                miss,
            });
        }
        // complement basis of u (euclidean)
        let ue = u.normalize();
        let mut z_cols: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
        let mut pivot = 0usize;
        for i in 1..n {
            if ue[i].abs() > ue[pivot].abs() {
                pivot = i;
            }
        }
        for i in 0..n {
            if i == pivot {
                continue;
            }
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            let mut w = &e - &ue * ue.dot(&e);
            for zc in &z_cols {
                w -= zc * zc.dot(&w);
            }
            let wn = w.norm();
            if wn < 1e-12 {
                return None;
            }
            z_cols.push(w / wn);
        }

        // residual and forward-difference Jacobian in (xi, T). Each FD step
        // is rescaled until the probe endpoint moves by roughly a third of
        // the current miss, which keeps the column in the linear regime.
        let r0 = &end - q;
        let mut jac = DMatrix::zeros(n, n);
        for (j, zc) in z_cols.iter().enumerate() {
            let floor = 1e-14;
            let cap = 1e-4;
            let probe = |step: f64| -> Option<DVector<f64>> {
                let pert = &u + zc * step;
                let pert_dir = f.normalize(p, &pert).ok()?;
                endpoint(integ, &pert_dir, t)
            };
            let (col, step) = fd_column(f, q, &end, miss, dxi, floor, cap, probe)?;
            for i in 0..n {
                jac[(i, j)] = col[i];
            }
            dxi = step;
        }
        {
            let floor = 1e-14 * (1.0 + t);
            let cap = 0.25 * (1.0 + t);
            let probe = |step: f64| -> Option<DVector<f64>> { endpoint(integ, &u, t + step) };
            let (col, step) = fd_column(f, q, &end, miss, dt_fd, floor, cap, probe)?;
            for i in 0..n {
                jac[(i, n - 1)] = col[i];
            }
            dt_fd = step;
        }

        let mut delta = jac.lu().solve(&(-&r0))?;
        // clamp the arc-length step so line-search candidates stay integrable
        let dt_cap = (2.0 * t).max(5.0);
        if delta[n - 1] > dt_cap {
            let scale = dt_cap / delta[n - 1];
            delta *= scale;
        } else if delta[n - 1] < -0.5 * t {
            let scale = (0.5 * t) / (-delta[n - 1]);
            delta *= scale;
        }
        // damped update
        let mut tau = 1.0;
        let mut advanced = false;
        for _ in 0..30 {
            let mut cand = u.clone();
            for (j, zc) in z_cols.iter().enumerate() {
                cand += zc * (tau * delta[j]);
            }
            let cand_t = t + tau * delta[n - 1];
            if cand_t > 0.0 {
                if let Ok(cand_dir) = f.normalize(p, &cand) {
                    if let Some(cand_end) = endpoint(integ, &cand_dir, cand_t) {
                        let cand_miss = metric_miss(&cand_end);
                        if cand_miss < miss {
                            u = cand_dir;
                            t = cand_t;
                            end = cand_end;
                            miss = cand_miss;
                            advanced = true;
                            break;
                        }
                    }
                }
            }
            tau *= 0.5;
        }
        if !advanced {
            return None;
        }
    }
    if miss <= opts.tol * (1.0 + t) {
        Some(Shot {
            direction: u,
            length: t,
            miss,
        })
    } else {
        None
    }
}

/// One forward-difference Jacobian column with step adaptation: the step is
/// rescaled towards a target endpoint displacement of `0.3 * miss` so the
/// difference quotient stays in the linear response regime.
fn fd_column(
    f: &FinslerStructure,
    q: &Point,
    end: &DVector<f64>,
    miss: f64,
    step0: f64,
    floor: f64,
    cap: f64,
    mut probe: impl FnMut(f64) -> Option<DVector<f64>>,
) -> Option<(DVector<f64>, f64)> {
    let mut step = step0.clamp(floor, cap);
    let mut last: Option<(DVector<f64>, f64)> = None;
    for _ in 0..6 {
        let ep = probe(step)?;
        let disp = f.norm(q, &(&ep - end));
        if !disp.is_finite() {
            step = (step * 0.1).max(floor);
            continue;
        }
        let in_band = disp >= 0.02 * miss && disp <= 1.5 * miss;
        let stuck_low = step <= floor * 1.0001 && disp <= 1.5 * miss;
        let stuck_high = step >= cap * 0.9999 && disp >= 0.02 * miss;
        if in_band || stuck_low || stuck_high {
            return Some(((ep - end) / step, step));
        }
        last = Some(((&ep - end) / step, step));
        if disp <= 0.0 {
            step = (step * 10.0).min(cap);
        } else {
            step = (step * 0.3 * miss / disp).clamp(floor, cap);
        }
    }
    last
}

/// Straight-segment F-length estimate by an adaptive composite midpoint
/// rule (panel doubling until 0.1% relative change).
fn segment_length(f: &FinslerStructure, p: &Point, q: &Point, panels: usize) -> f64 {
    let delta = q - p;
    let eval = |m: usize| -> f64 {
        let mut total = 0.0;
        for i in 0..m {
            let s = (i as f64 + 0.5) / m as f64;
            let mid = p + &delta * s;
            total += f.norm(&mid, &delta);
        }
        total / m as f64
    };
    let mut m = panels.max(2);
    let mut prev = eval(m);
    while m < 1024 {
        m *= 2;
        let cur = eval(m);
        if (cur - prev).abs() <= 1e-3 * cur.abs() {
            return cur;
        }
        prev = cur;
    }
    prev
}

fn shooting_distance(
    f: &FinslerStructure,
    p: &Point,
    q: &Point,
    opts: &DistanceOptions,
) -> Result<DistanceResult> {
    let n = f.dim();
    let mut integ = Integrator::new(f);

    let finish = |shot: Shot, method: DistanceMethod, integ: &mut Integrator<'_>| -> DistanceResult {
        let ps: Vec<f64> = p.iter().copied().collect();
        let ds: Vec<f64> = shot.direction.iter().copied().collect();
        let mut path = Vec::with_capacity(opts.path_samples);
        path.push(p.clone());
        for k in 1..opts.path_samples.saturating_sub(1) {
            let s = shot.length * (k as f64) / (opts.path_samples - 1) as f64;
            if let Ok(state) = integ.endpoint(&ps, &ds, s, opts.dt) {
                path.push(state.x);
            }
        }
        path.push(q.clone());
        let step_count = (shot.length / opts.dt).ceil().max(1.0);
        let integration_err = 10.0 * step_count * opts.dt.powi(5);
        DistanceResult {
            from: p.clone(),
            to: q.clone(),
            value: shot.length,
            path,
            method,
            error_estimate: shot.miss + integration_err,
            initial_direction: Some(shot.direction),
        }
    };

    // warm start first
    if let Some((dir, len)) = &opts.warm_start {
        if let Ok(u) = f.normalize(p, dir) {
            if let Some(shot) = newton_refine(f, &mut integ, p, q, &u, *len, opts) {
                return Ok(finish(shot, DistanceMethod::Shooting, &mut integ));
            }
        }
    }

    // multi-start: 4n + 8 indicatrix directions plus the straight direction
    let t0 = segment_length(f, p, q, 16);
    let mut seeds: Vec<DVector<f64>> = Vec::new();
    if let Ok(u) = f.normalize(p, &(q - p)) {
        seeds.push(u);
    }
    seeds.extend(f.indicatrix_directions(p, 4 * n + 8));

    // score all seeds by the endpoint miss of a single integration
    let ps: Vec<f64> = p.iter().copied().collect();
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(seeds.len());
    for (i, u) in seeds.iter().enumerate() {
        let us: Vec<f64> = u.iter().copied().collect();
        let score = match integ.endpoint(&ps, &us, t0, opts.dt) {
            Ok(st) => {
                let miss = &st.x - q;
                f.norm(q, &miss)
            }
            Err(_) => f64::INFINITY,
        };
        scored.push((score, i));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));

    let mut candidates: Vec<Shot> = Vec::new();
    for &(score, i) in scored.iter().take(opts.refine_candidates) {
        if !score.is_finite() {
            continue;
        }
        if let Some(shot) = newton_refine(f, &mut integ, p, q, &seeds[i], t0, opts) {
            candidates.push(shot);
        }
    }

    if candidates.is_empty() && opts.allow_lattice {
        if let Ok((upper, path)) = lattice_distance(f, p, q, None) {
            if path.len() >= 2 {
                let first = &path[1] - &path[0];
                if let Ok(u) = f.normalize(p, &first) {
                    if let Some(shot) = newton_refine(f, &mut integ, p, q, &u, upper, opts) {
                        return Ok(finish(shot, DistanceMethod::LatticeFallback, &mut integ));
                    }
                }
            }
            return Err(FinslerError::SolverFailure {
                from: p.iter().copied().collect(),
                to: q.iter().copied().collect(),
                upper_bound: upper,
            });
        }
    }

    // smallest length wins; ties by lexicographically smaller direction
    candidates.sort_by(|a, b| {
        a.length
            .partial_cmp(&b.length)
            .unwrap_or(Ordering::Equal)
            .then_with(|| {
                for i in 0..n {
                    match a.direction[i].partial_cmp(&b.direction[i]) {
                        Some(Ordering::Equal) | None => continue,
                        Some(o) => return o,
                    }
                }
                Ordering::Equal
            })
    });
    match candidates.into_iter().next() {
        Some(shot) => Ok(finish(shot, DistanceMethod::Shooting, &mut integ)),
        None => Err(FinslerError::SolverFailure {
            from: p.iter().copied().collect(),
            to: q.iter().copied().collect(),
            upper_bound: t0,
        }),
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    cost: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, deterministic tie-break on node index
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then(other.node.cmp(&self.node))
    }
}

/// Dijkstra on a local grid with directed edge weights `F(midpoint, dq)`,
/// followed by shortcut smoothing of the polyline. Returns an upper bound
/// for `d(p, q)` and the witness polyline. Mainly a seed generator for the
/// shooting solver.
pub fn lattice_distance(
    f: &FinslerStructure,
    p: &Point,
    q: &Point,
    spacing_override: Option<f64>,
) -> Result<(f64, Vec<Point>)> {
    let n = f.dim();
    if n > 3 {
        return Err(FinslerError::unsupported(
            "lattice_distance",
            "grid fallback implemented for n <= 3",
        ));
    }
    let sep = (q - p).norm();
    let mut spacing = spacing_override.unwrap_or_else(|| (0.05f64).min(sep / 40.0));
    if spacing <= 0.0 {
        spacing = 0.05;
    }

    // bounding box of {p, q} inflated by 20%, clamped inside the chart
    let lo_chart = f.chart().lower();
    let hi_chart = f.chart().upper();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        let a = p[i].min(q[i]);
        let b = p[i].max(q[i]);
        let pad = 0.2 * (b - a) + 2.0 * spacing;
        lo[i] = a - pad;
        hi[i] = b + pad;
        if lo_chart[i].is_finite() {
            // keep a quarter of the clearance to the chart boundary
            lo[i] = lo[i].max(lo_chart[i] + 0.25 * (a - lo_chart[i]));
        }
        if hi_chart[i].is_finite() {
            hi[i] = hi[i].min(hi_chart[i] - 0.25 * (hi_chart[i] - b));
        }
    }

    // grid anchored at p
    let mut kmin = vec![0i64; n];
    let mut kmax = vec![0i64; n];
    let mut counts = vec![0usize; n];
    loop {
        let mut total: usize = 1;
        for i in 0..n {
            kmin[i] = ((lo[i] - p[i]) / spacing).ceil() as i64;
            kmax[i] = ((hi[i] - p[i]) / spacing).floor() as i64;
            if kmax[i] < 0 {
                kmax[i] = 0;
            }
            if kmin[i] > 0 {
                kmin[i] = 0;
            }
            counts[i] = (kmax[i] - kmin[i] + 1) as usize;
            total = total.saturating_mul(counts[i]);
        }
        if total <= 400_000 {
            break;
        }
        spacing *= 1.5;
    }
    let total: usize = counts.iter().product();
    let flat = |k: &[i64]| -> usize {
        let mut idx = 0usize;
        for i in 0..n {
            idx = idx * counts[i] + (k[i] - kmin[i]) as usize;
        }
        idx
    };
    let coords = |idx: usize| -> Vec<i64> {
        let mut rem = idx;
        let mut k = vec![0i64; n];
        for i in (0..n).rev() {
            k[i] = kmin[i] + (rem % counts[i]) as i64;
            rem /= counts[i];
        }
        k
    };
    let point_of = |k: &[i64]| -> Point {
        DVector::from_iterator(n, (0..n).map(|i| p[i] + k[i] as f64 * spacing))
    };

    // neighbor offsets: all nonzero {-1,0,1}^n
    let mut offsets: Vec<Vec<i64>> = Vec::new();
    for c in 0..3usize.pow(n as u32) {
        let mut off = vec![0i64; n];
        let mut rem = c;
        for item in off.iter_mut() {
            *item = (rem % 3) as i64 - 1;
            rem /= 3;
        }
        if off.iter().any(|&o| o != 0) {
            offsets.push(off);
        }
    }

    let q_node = total; // extra node for the exact target
    let start = flat(&vec![0i64; n]);
    let mut dist = vec![f64::INFINITY; total + 1];
    let mut prev = vec![usize::MAX; total + 1];
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry { cost: 0.0, node: start });

    // cell corners around q for the target hookup
    let mut q_corner_ids = Vec::new();
    {
        let mut base = vec![0i64; n];
        for i in 0..n {
            base[i] = ((q[i] - p[i]) / spacing).floor() as i64;
        }
        let corners = 1usize << n;
        for c in 0..corners {
            let mut k = base.clone();
            for i in 0..n {
                if (c >> i) & 1 == 1 {
                    k[i] += 1;
                }
            }
            if (0..n).all(|i| k[i] >= kmin[i] && k[i] <= kmax[i]) {
                q_corner_ids.push(flat(&k));
            }
        }
    }

    while let Some(HeapEntry { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        if node == q_node {
            break;
        }
        let k = coords(node);
        let xp = point_of(&k);
        for offv in &offsets {
            let mut k2 = k.clone();
            let mut ok = true;
            for i in 0..n {
                k2[i] += offv[i];
                if k2[i] < kmin[i] || k2[i] > kmax[i] {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let xq = point_of(&k2);
            if !f.chart().contains(&xq) {
                continue;
            }
            let mid = (&xp + &xq) * 0.5;
            let w = f.norm(&mid, &(&xq - &xp));
            let next = cost + w;
            let id2 = flat(&k2);
            if next < dist[id2] {
                dist[id2] = next;
                prev[id2] = node;
                heap.push(HeapEntry { cost: next, node: id2 });
            }
        }
        if q_corner_ids.contains(&node) {
            let mid = (&xp + q) * 0.5;
            let w = f.norm(&mid, &(q - &xp));
            let next = cost + w;
            if next < dist[q_node] {
                dist[q_node] = next;
                prev[q_node] = node;
                heap.push(HeapEntry { cost: next, node: q_node });
            }
        }
    }

    if !dist[q_node].is_finite() {
        return Err(FinslerError::SolverFailure {
            from: p.iter().copied().collect(),
            to: q.iter().copied().collect(),
            upper_bound: f64::INFINITY,
        });
    }

    // reconstruct and smooth
    let mut nodes = vec![q_node];
    let mut cur = q_node;
    while prev[cur] != usize::MAX {
        cur = prev[cur];
        nodes.push(cur);
    }
    nodes.reverse();
    let mut path: Vec<Point> = nodes
        .iter()
        .map(|&id| {
            if id == q_node {
                q.clone()
            } else {
                point_of(&coords(id))
            }
        })
        .collect();

    // shortcut smoothing: replace subchains by straight segments when the
    // segment F-length is shorter
    for _ in 0..3 {
        let mut out: Vec<Point> = vec![path[0].clone()];
        let mut i = 0usize;
        while i + 1 < path.len() {
            let mut best_j = i + 1;
            for j in (i + 2..path.len()).rev() {
                let seg = segment_length(f, &path[i], &path[j], 8);
                let mut chain = 0.0;
                for k in i..j {
                    chain += segment_length(f, &path[k], &path[k + 1], 2);
                }
                if seg <= chain + 1e-12 {
                    best_j = j;
                    break;
                }
            }
            out.push(path[best_j].clone());
            i = best_j;
        }
        if out.len() == path.len() {
            path = out;
            break;
        }
        path = out;
    }
    let mut value = 0.0;
    for k in 0..path.len() - 1 {
        value += segment_length(f, &path[k], &path[k + 1], 8);
    }
    Ok((value, path))
}
