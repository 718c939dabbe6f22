use finsler_core::*;
use nalgebra::DVector;
fn pt(v: &[f64]) -> Point { DVector::from_row_slice(v) }

#[test]
fn dbg_far_shot() {
    let hyp = FinslerStructure::hyperbolic_half_plane();
    let p = pt(&[0.5, 0.8]);
    let t: f64 = 18.987;
    let q = pt(&[0.0, t.exp()]);
    // oracle direction: minimizing geodesic from p to q; warm start from the t/2 solve
    let q2 = pt(&[0.0, (t/2.0).exp()]);
    let d2 = distance(&hyp, &p, &q2, &DistanceOptions::default()).unwrap();
    eprintln!("half solve: {} method {:?}", d2.value, d2.method);
    let opts = DistanceOptions {
        warm_start: Some((d2.initial_direction.clone().unwrap(), d2.value + t/2.0)),
        ..Default::default()
    };
    let d = distance(&hyp, &p, &q, &opts).unwrap();
    eprintln!("full solve: {} method {:?}", d.value, d.method);
}
