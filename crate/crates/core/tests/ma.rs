use jkoflow::laguerre::build_diagram;
use jkoflow::ma::{hessian_pattern_violations, ma, ma_hessian, ma_jacobian, HessianMode};
use jkoflow::{ConvexDomain, Point2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Point2>, Vec<f64>) {
    let y = ConvexDomain::square(2.0).unwrap();
    loop {
        let (pts, phi) = candidate(rng, n);
        if jkoflow::ma::interiority(&pts, &phi, &y).unwrap() {
            return (pts, phi);
        }
    }
}

fn candidate(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Point2>, Vec<f64>) {
    let pts: Vec<Point2> = (0..n)
        .map(|_| Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let phi = pts
        .iter()
        .map(|p| 0.5 * p.norm2() + rng.gen_range(-0.01..0.01))
        .collect();
    (pts, phi)
}

#[test]
fn jacobian_matches_central_differences() {
    let y = ConvexDomain::square(2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let (pts, phi) = instance(&mut rng, 25);
        let j = ma_jacobian(&pts, &phi, &y).unwrap().to_dense();
        let h = 1e-6 * (1.0 + phi.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for r in 0..pts.len() {
            let mut p = phi.clone();
            p[r] += h;
            let mut m = phi.clone();
            m[r] -= h;
            let ap = ma(&pts, &p, &y).unwrap();
            let am = ma(&pts, &m, &y).unwrap();
            for i in 0..pts.len() {
                let fd = (ap[i] - am[i]) / (2.0 * h);
                assert!((fd - j[[i, r]]).abs() < 1e-5, "({i},{r}) fd {fd} an {}", j[[i, r]]);
            }
        }
    }
}

#[test]
fn hessian_matches_jacobian_differences() {
    let y = ConvexDomain::square(2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let (pts, phi) = instance(&mut rng, 20);
        let h_an = ma_hessian(&pts, &phi, &y, HessianMode::Analytic).unwrap();
        let delta: Vec<f64> = (0..pts.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = 1e-6;
        let p: Vec<f64> = phi.iter().zip(&delta).map(|(a, d)| a + h * d).collect();
        let m: Vec<f64> = phi.iter().zip(&delta).map(|(a, d)| a - h * d).collect();
        let jp = ma_jacobian(&pts, &p, &y).unwrap().to_dense();
        let jm = ma_jacobian(&pts, &m, &y).unwrap().to_dense();
        for row in 0..pts.len() {
            let an = h_an.apply_row(row, &delta);
            for q in 0..pts.len() {
                let fd = (jp[[row, q]] - jm[[row, q]]) / (2.0 * h);
                assert!((fd - an[q]).abs() < 1e-4, "row {row} q {q}: fd {fd} an {}", an[q]);
            }
        }
        let d = build_diagram(&pts, &phi, &y).unwrap();
        assert!(hessian_pattern_violations(&h_an, &d).is_empty());
    }
}
