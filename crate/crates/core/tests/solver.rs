use jkoflow::energy::{DiscreteMeasure, InternalEnergy, JkoProblem, Mode, Objective, Order, PotentialSpec, Selection};
use jkoflow::flows::sample_uniform;
use jkoflow::ma::{interiority, ma};
use jkoflow::solver::{fixed_point_outer, initial_potential, newton_solve, HessianSource, SolveOptions};
use jkoflow::ConvexDomain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(seed: u64, n: usize, u: InternalEnergy, mode: Mode) -> JkoProblem {
    let y = ConvexDomain::square(4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sample_uniform(&y, n, seed);
    let m = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mu = DiscreteMeasure::normalized(pts, m).unwrap();
    JkoProblem::new(mu, y, 0.1, u, PotentialSpec::crowd(), mode, Selection::Steiner).unwrap()
}

fn perturbed(pr: &JkoProblem, phi: &[f64], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let p: Vec<f64> = phi.iter().map(|v| v + rng.gen_range(-0.05..0.05)).collect();
        let finite = pr.evaluate(&p, Order::Value).map_or(false, |e| e.value.is_finite());
        if interiority(&pr.mu.points, &p, &pr.domain).unwrap() && finite {
            return p;
        }
    }
}

#[test]
fn two_starts_reach_the_same_minimum() {
    for (seed, u) in [
        (1, InternalEnergy::Entropy),
        (2, InternalEnergy::Power { m: 2.0 }),
        (3, InternalEnergy::Congestion { alpha: 1.0, beta: 0.01 }),
    ] {
        let pr = problem(seed, 40, u, Mode::Ac);
        let a = initial_potential(&pr.mu.points, &pr.domain).unwrap();
        let b = perturbed(&pr, &a, seed + 100);
        let (pa, ra) = newton_solve(&pr, &a, &SolveOptions::default()).unwrap();
        let (pb, rb) = newton_solve(&pr, &b, &SolveOptions::default()).unwrap();
        assert!(ra.converged() && rb.converged());
        let fa = pr.evaluate(&pa, Order::Value).unwrap().value;
        let fb = pr.evaluate(&pb, Order::Value).unwrap().value;
        assert!((fa - fb).abs() < 1e-9, "{fa} vs {fb}");
        // Minimizers agree up to an additive constant.
        let c = pa[0] - pb[0];
        assert!(pa.iter().zip(&pb).all(|(x, y)| (x - y - c).abs() < 1e-5));
    }
}

#[test]
fn iterates_descend() {
    let pr = problem(4, 60, InternalEnergy::Entropy, Mode::Ac);
    let phi0 = initial_potential(&pr.mu.points, &pr.domain).unwrap();
    let (_, rep) = newton_solve(&pr, &phi0, &SolveOptions::default()).unwrap();
    assert!(rep.converged());
    assert!(rep.values.windows(2).all(|w| w[1] <= w[0] + 1e-14 * w[0].abs()));
    assert!(rep.grad_inf <= 1e-8);
}

#[test]
fn entropy_step_keeps_cells_and_lowers_objective() {
    let y = ConvexDomain::square(4.0).unwrap();
    let pts = sample_uniform(&y, 30, 5);
    let mu = DiscreteMeasure::uniform(pts).unwrap();
    let pr = JkoProblem::new(
        mu,
        y.clone(),
        0.05,
        InternalEnergy::Entropy,
        PotentialSpec::default(),
        Mode::Ac,
        Selection::Steiner,
    )
    .unwrap();
    let phi0 = initial_potential(&pr.mu.points, &y).unwrap();
    let (phi, rep) = newton_solve(&pr, &phi0, &SolveOptions::default()).unwrap();
    assert!(rep.converged());
    let areas = ma(&pr.mu.points, &phi, &y).unwrap();
    assert!(areas.iter().all(|a| *a > 0.0));
    assert!((areas.iter().sum::<f64>() - 16.0).abs() < 1e-9);
    let start = pr.evaluate(&phi0, Order::Value).unwrap().value;
    let end = pr.evaluate(&phi, Order::Value).unwrap().value;
    assert!(end < start);
}

#[test]
fn finite_difference_hessian_agrees() {
    let pr = problem(6, 15, InternalEnergy::Power { m: 2.0 }, Mode::Ac);
    let phi0 = initial_potential(&pr.mu.points, &pr.domain).unwrap();
    let fd = SolveOptions {
        hessian: HessianSource::FdOfGradient,
        ..Default::default()
    };
    let (pa, ra) = newton_solve(&pr, &phi0, &SolveOptions::default()).unwrap();
    let (pb, rb) = newton_solve(&pr, &phi0, &fd).unwrap();
    assert!(ra.converged() && rb.converged());
    let fa = pr.evaluate(&pa, Order::Value).unwrap().value;
    let fb = pr.evaluate(&pb, Order::Value).unwrap().value;
    assert!((fa - fb).abs() < 1e-9);
}

#[test]
fn selection_fixed_point_is_stationary() {
    let mut pr = problem(7, 30, InternalEnergy::Entropy, Mode::Selection);
    let phi0 = initial_potential(&pr.mu.points, &pr.domain).unwrap();
    pr.freeze_selection(&phi0).unwrap();
    let (phi, g, outer) = fixed_point_outer(&mut pr, &phi0, &SolveOptions::default()).unwrap();
    assert!(outer.converged);
    // Refreezing at the fixed point reproduces the selected points.
    let again = pr.freeze_selection(&phi).unwrap();
    let drift = g.iter().zip(&again).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max);
    assert!(drift < 1e-6, "{drift}");
    assert_eq!(g.len(), pr.mu.len());
}
