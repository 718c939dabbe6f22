use finsler_core::*;
use nalgebra::DVector;

fn pt(v: &[f64]) -> Point { DVector::from_row_slice(v) }

#[test]
fn scratch_metric() {
    let e = FinslerStructure::euclidean(2);
    assert!((e.norm(&pt(&[0., 0.]), &pt(&[3., 4.])) - 5.0).abs() < 1e-14);

    let r = FinslerStructure::randers(&[0.5, 0.0]).unwrap();
    assert!((r.norm(&pt(&[0., 0.]), &pt(&[1., 0.])) - 1.5).abs() < 1e-14);

    // fundamental tensor vs FD Hessian of F^2/2 at y = (0, 1)
    let x = pt(&[0., 0.]);
    let y = pt(&[0., 1.]);
    let g = r.fundamental_matrix(&x, &y).unwrap();
    let h = 1e-4;
    for i in 0..2 {
        for j in 0..2 {
            let f2 = |yy: &Point| { let f = r.norm(&x, yy); f * f };
            let mut ypp = y.clone(); ypp[i] += h; ypp[j] += h;
            let mut ypm = y.clone(); ypm[i] += h; ypm[j] -= h;
            let mut ymp = y.clone(); ymp[i] -= h; ymp[j] += h;
            let mut ymm = y.clone(); ymm[i] -= h; ymm[j] -= h;
            let fd = (f2(&ypp) - f2(&ypm) - f2(&ymp) + f2(&ymm)) / (8.0 * h * h);
            assert!((g[(i, j)] - fd).abs() < 1e-6, "g[{i}{j}] = {} vs fd {}", g[(i,j)], fd);
        }
    }

    // Euler identity
    let gy = &g * &y;
    let f = r.norm(&x, &y);
    assert!((y.dot(&gy) - f * f).abs() < 1e-12);

    // legendre roundtrip
    let v = TangentVector::new(x.clone(), pt(&[0.7, -0.3]));
    let a = r.legendre(&v).unwrap();
    let back = r.inverse_legendre(&a).unwrap();
    assert!((back.components - v.components).norm() < 1e-10);
    let fd = r.dual_norm(&a).unwrap();
    assert!((fd - r.norm(&x, &pt(&[0.7, -0.3]))).abs() < 1e-10, "F*(J(v)) = {fd}");

    // quartic dual norm at (1, 0): brute force over indicatrix says 1
    let qn = FinslerStructure::quartic(2);
    let alpha = Covector::new(x.clone(), pt(&[1.0, 0.0]));
    let d = qn.dual_norm(&alpha).unwrap();
    assert!((d - 1.0).abs() < 1e-8, "quartic dual = {d}");
    // roundtrip through newton inverse legendre
    let v2 = TangentVector::new(x.clone(), pt(&[0.8, 0.6]));
    let a2 = qn.legendre(&v2).unwrap();
    let b2 = qn.inverse_legendre(&a2).unwrap();
    assert!((b2.components - v2.components).norm() < 1e-8);
}

#[test]
fn scratch_geodesics() {
    let hyp = FinslerStructure::hyperbolic_half_plane();
    let x = pt(&[0., 1.]);
    let v = TangentVector::new(x.clone(), pt(&[0., 1.]));
    let endp = exp_map(&hyp, &x, &v, 1.0).unwrap();
    assert!((endp[0]).abs() < 1e-9 && (endp[1] - 1.0f64.exp()).abs() < 1e-6, "exp = {endp:?}");

    // hyperbolic distance oracle: d((0,1),(0,e)) = 1
    let q = pt(&[0., 1.0f64.exp()]);
    let d = distance(&hyp, &x, &q, &DistanceOptions::default()).unwrap();
    assert!((d.value - 1.0).abs() < 1e-6, "dist = {} method {:?}", d.value, d.method);

    // generic pair vs arcosh closed form
    let p2 = pt(&[-0.7, 0.8]);
    let q2 = pt(&[1.3, 2.1]);
    let oracle = {
        let dx: f64 = q2[0] - p2[0];
        let dy: f64 = q2[1] - p2[1];
        (1.0 + (dx * dx + dy * dy) / (2.0 * p2[1] * q2[1])).acosh()
    };
    let d2 = distance(&hyp, &p2, &q2, &DistanceOptions::default()).unwrap();
    assert!((d2.value - oracle).abs() < 1e-7, "dist = {} oracle {}", d2.value, oracle);

    // randers closed form + asymmetry
    let r = FinslerStructure::randers(&[0.5, 0.0]).unwrap();
    let o = pt(&[0., 0.]);
    let e1 = pt(&[1., 0.]);
    let dpq = distance(&r, &o, &e1, &DistanceOptions::default()).unwrap();
    let dqp = distance(&r, &e1, &o, &DistanceOptions::default()).unwrap();
    assert!((dpq.value - 1.5).abs() < 1e-12 && (dqp.value - 0.5).abs() < 1e-12);
}

#[test]
fn scratch_laplacian_volume() {
    use finsler_core::laplacian::*;
    use finsler_core::fields::ScalarField;
    use finsler_core::volume::{VolumeForm, VolumeKind};

    let e = FinslerStructure::euclidean(2);
    let mu = VolumeForm::new(e.clone(), VolumeKind::BusemannHausdorff);
    assert_eq!(mu.density(&pt(&[0.3, -0.7])).unwrap(), 1.0);

    // Delta(1/2 |x|^2) = 2 in R^2
    let f2 = ScalarField::half_sqnorm();
    let rep = shen_laplacian(&e, &mu, &f2, &pt(&[0.4, 1.1]), &LaplacianOptions::default()).unwrap();
    assert!((rep.value - 2.0).abs() < 1e-6, "lap = {}", rep.value);

    // Delta |x| = 1/r at r = 2
    let fr = ScalarField::norm_from(pt(&[0.0, 0.0]));
    let rep = shen_laplacian(&e, &mu, &fr, &pt(&[2.0, 0.0]), &LaplacianOptions::default()).unwrap();
    assert!((rep.value - 0.5).abs() < 1e-6, "lap = {}", rep.value);

    // hyperbolic: Delta(-log y) = 1
    let hyp = FinslerStructure::hyperbolic_half_plane();
    let muh = VolumeForm::new(hyp.clone(), VolumeKind::BusemannHausdorff);
    let fb = ScalarField::neg_log_last();
    for p in [pt(&[0., 1.]), pt(&[1., 0.5]), pt(&[-2., 3.])] {
        let rep = shen_laplacian(&hyp, &muh, &fb, &p, &LaplacianOptions::default()).unwrap();
        assert!((rep.value - 1.0).abs() < 1e-6, "lap at {p:?} = {}", rep.value);
    }

    // randers BH density closed form vs MC oracle would be in real tests; here HT quadrature sanity
    let r = FinslerStructure::randers(&[0.5, 0.0]).unwrap();
    let mur = VolumeForm::new(r.clone(), VolumeKind::BusemannHausdorff);
    let d = mur.density(&pt(&[0., 0.])).unwrap();
    assert!((d - (1.0f64 - 0.25).powf(1.5)).abs() < 1e-12, "bh = {d}");
    let muh2 = VolumeForm::new(r.clone(), VolumeKind::HolmesThompson);
    let dht = muh2.density(&pt(&[0., 0.])).unwrap();
    println!("randers HT density = {dht}");
    assert!(dht > 0.0);

    // weak laplacian: u = x1, h = 0
    let omega = BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
    let bumps = bump_family(&omega, 5);
    let res = weak_laplacian_residual(&e, &mu, &ScalarField::coordinate(0), 0.0, &omega, &bumps, 24).unwrap();
    assert!(res < 1e-10, "weak residual = {res}");
    let res2 = weak_laplacian_residual(&e, &mu, &ScalarField::half_sqnorm(), 2.0, &omega, &bumps, 24).unwrap();
    assert!(res2 < 1e-8, "weak residual = {res2}");

    // level-set mean curvature: euclid circle radius 2
    let rep = level_set_mean_curvature(&e, &mu, &fr, &pt(&[2.0, 0.0]), &LaplacianOptions::default()).unwrap();
    assert!((rep.via_laplacian - 0.5).abs() < 1e-5, "a = {}", rep.via_laplacian);
    assert!((rep.via_flow - 0.5).abs() < 1e-4, "b = {}", rep.via_flow);

    // harmonicity: euclid harmonic, randers harmonic, perturbed not
    let h1 = harmonicity_check(&e, &mu, &pt(&[0., 0.]), &[0.5, 1.0, 2.0], 16, 1e-4).unwrap();
    println!("euclid deviation = {:.3e}", h1.radial_deviation);
    assert!(h1.harmonic);
    let h2 = harmonicity_check(&r, &mur, &pt(&[0., 0.]), &[0.5, 1.0, 2.0], 16, 1e-4).unwrap();
    println!("randers deviation = {:.3e}", h2.radial_deviation);
    assert!(h2.harmonic, "randers deviation = {}", h2.radial_deviation);
    let p = FinslerStructure::perturbed(0.3);
    let mup = VolumeForm::new(p.clone(), VolumeKind::BusemannHausdorff);
    let h3 = harmonicity_check(&p, &mup, &pt(&[0., 0.]), &[0.5, 1.0, 2.0], 16, 1e-4).unwrap();
    println!("perturbed deviation = {:.3e}", h3.radial_deviation);
    assert!(!h3.harmonic && h3.radial_deviation > 1e-2);
}

#[test]
fn scratch_busemann() {
    use finsler_core::busemann::*;
    use std::sync::Arc;

    // euclidean: b(x) = -x1 for the e1 ray from origin
    let e = FinslerStructure::euclidean(2);
    let ray = Arc::new(Ray::new_unchecked(&e, pt(&[0., 0.]), &pt(&[1., 0.])).unwrap());
    let field = BusemannField::new(ray.clone(), BusemannOptions::with_tol(2e-5));
    let b = field.value(&pt(&[0.3, 0.4])).unwrap();
    assert!((b - (-0.3)).abs() < 1e-4, "b = {b}");
    let b2 = field.value(&pt(&[5.0, 0.0])).unwrap();
    assert!((b2 - (-5.0)).abs() < 1e-9, "b2 = {b2}");

    // closed form randers
    let r = FinslerStructure::randers(&[0.5, 0.0]).unwrap();
    let v = pt(&[1.0, 0.0]);
    let cf = minkowski_closed_form(&r, &v, &pt(&[1.0, 1.0])).unwrap();
    assert!((cf - (-1.5)).abs() < 1e-12, "cf = {cf}");

    // asymptote euclid: from (0,1) to the e1-axis ray
    let (zeta, diag) = asymptote(&e, &ray, &pt(&[0., 0.25]), 1e-6, 8192.0).unwrap();
    println!("asymptote dir = {:?}, raw gap {:.2e}, ext gap {:.2e}, descent angle {:.2e}",
             diag.direction.as_slice(), diag.raw_cauchy_gap, diag.extrapolated_gap, diag.descent_angle);
    assert!((diag.direction[0] - 1.0).abs() < 1e-5 && diag.direction[1].abs() < 1e-4);
    let rep = verify_asymptote_relation(&ray, &Arc::new(zeta), &[1.0, 2.0, 4.0],
        &[pt(&[1.0, 0.3]), pt(&[-0.5, 0.4])], &BusemannOptions::with_tol(5e-5)).unwrap();
    println!("relation violation {:.2e}, inequality violation {:.2e}",
             rep.max_relation_violation, rep.max_inequality_violation);
    assert!(rep.max_relation_violation < 2.5e-4, "rel = {}", rep.max_relation_violation);

    // forward/backward sum on euclid line
    let fb = forward_backward_sum(&e, &pt(&[0., 0.]), &pt(&[1., 0.]),
        &[pt(&[0.5, 0.2]), pt(&[-1.0, 0.1]), pt(&[2.0, -0.2])], &BusemannOptions::with_tol(4e-6)).unwrap();
    println!("fb max sum = {:.3e}", fb.max_abs_sum);
    assert!(fb.max_abs_sum < 2e-5);
}

#[test]
fn scratch_hyperbolic_heavy() {
    use finsler_core::busemann::*;
    use finsler_core::laplacian::*;
    use finsler_core::volume::{VolumeForm, VolumeKind};
    use finsler_core::fields::ScalarField;
    use std::sync::Arc;
    use std::time::Instant;

    let hyp = FinslerStructure::hyperbolic_half_plane();
    let mu = VolumeForm::new(hyp.clone(), VolumeKind::BusemannHausdorff);

    // busemann field of the vertical ray from (0,1): b = -log y
    let t0 = Instant::now();
    let ray = Arc::new(Ray::new_unchecked(&hyp, pt(&[0., 1.]), &pt(&[0., 1.])).unwrap());
    let field = BusemannField::new(ray.clone(), BusemannOptions::with_tol(1e-6));
    for p in [pt(&[0.5, 0.8]), pt(&[-0.3, 1.5])] {
        let b = field.value(&p).unwrap();
        let oracle = -p[1].ln();
        assert!((b - oracle).abs() < 1e-5, "b = {b} oracle = {oracle}");
    }
    println!("busemann evals: {:?}", t0.elapsed());

    // ahf: 2 rays x 4 points, frozen t = 32
    let t1 = Instant::now();
    let ray2 = Arc::new(Ray::new_unchecked(&hyp, pt(&[1., 1.]), &pt(&[0., 1.])).unwrap());
    let points = vec![pt(&[0.2, 0.9]), pt(&[-0.4, 1.2]), pt(&[0.6, 1.1]), pt(&[0.0, 0.7])];
    let omega = BoxRegion::new(vec![-0.5, 0.7], vec![0.5, 1.3]).unwrap();
    let rep = ahf_diagnose(&hyp, &mu, &[ray, ray2], &points, 1e-3, 1e-3, 32.0, 1e-2,
        Some((omega, 10))).unwrap();
    println!("ahf: h = {}, spread = {:.3e}, weak = {:.3e}, elapsed {:?}",
             rep.estimated_h, rep.spread, rep.weak_residual, t1.elapsed());
    assert!((rep.estimated_h - 1.0).abs() < 1e-3);
    assert!(rep.spread <= 1e-3);

    // horosphere curvature limit: euclid 1/t and extrapolation to 0
    let e = FinslerStructure::euclidean(2);
    let mue = VolumeForm::new(e.clone(), VolumeKind::BusemannHausdorff);
    let dfield = |center: &Point, _t: f64| -> finsler_core::Result<ScalarField> {
        let c = center.clone();
        let f2 = e.clone();
        Ok(ScalarField::new("dist", move |x: &Point| {
            finsler_core::distance(&f2, &c, x, &DistanceOptions::default()).map(|d| d.value).unwrap_or(f64::NAN)
        }).with_fd_step(1e-5))
    };
    let rep = horosphere_mean_curvature_limit(&e, &mue, &pt(&[0., 0.]), &pt(&[1., 0.]),
        &[4.0, 8.0, 16.0, 32.0], &dfield, &LaplacianOptions { h_div: Some(1e-3) }).unwrap();
    for (t, pi) in &rep.sequence {
        println!("euclid Pi({t}) = {pi} (oracle {})", 1.0 / t);
        assert!((pi - 1.0 / t).abs() < 1e-6);
    }
    println!("euclid Pi_inf = {:.3e} +- {:.3e}", rep.extrapolated, rep.error_bar);
    assert!(rep.extrapolated.abs() < 1e-3);

    // hyperbolic: coth(t) -> 1
    let t2 = Instant::now();
    let hyp2 = hyp.clone();
    let dfieldh = move |center: &Point, _t: f64| -> finsler_core::Result<ScalarField> {
        let c = center.clone();
        let f2 = hyp2.clone();
        let cache = std::sync::Mutex::new(std::collections::HashMap::<Vec<u64>, f64>::new());
        Ok(ScalarField::new("dist", move |x: &Point| {
            let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
            if let Some(v) = cache.lock().unwrap().get(&key) { return *v; }
            let opts = DistanceOptions { tol: 1e-12, ..Default::default() };
            let v = finsler_core::distance(&f2, &c, x, &opts).map(|d| d.value).unwrap_or(f64::NAN);
            cache.lock().unwrap().insert(key, v);
            v
        }).with_fd_step(1e-3))
    };
    let reph = horosphere_mean_curvature_limit(&hyp, &mu, &pt(&[0., 1.]), &pt(&[0., 1.]),
        &[2.0, 4.0, 8.0, 16.0], &dfieldh, &LaplacianOptions { h_div: Some(1e-3) }).unwrap();
    for (t, pi) in &reph.sequence {
        println!("hyp Pi({t}) = {pi} (oracle {})", 1.0 / t.tanh());
    }
    println!("hyp Pi_inf = {} +- {:.3e}, elapsed {:?}", reph.extrapolated, reph.error_bar, t2.elapsed());
    assert!((reph.extrapolated - 1.0).abs() < 1e-3);
}
