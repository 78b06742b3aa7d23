//! Independent oracles: Monte-Carlo areas, finite-difference derivative
//! checks and convexity properties along segments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::energy::objective::{Objective, Order, Selection};
use crate::energy::{nonconvexity_demo, InternalEnergy};
use crate::error::{Error, Result};
use crate::geom2d::{ConvexDomain, Point2};
use crate::laguerre::build_diagram;
use crate::ma::{interiority, ma, ma_hessian, ma_jacobian, segment_logconcavity_check, HessianMode};

/// Outcome of one oracle comparison; `passed` iff `max_deviation ≤ tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub instance: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub samples: usize,
}

impl OracleReport {
    pub fn new(name: &str, instance: String, max_deviation: f64, tolerance: f64, samples: usize) -> Self {
        Self {
            name: name.into(),
            instance,
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
            samples,
        }
    }
}

/// Monte-Carlo cell areas with their binomial standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct AreaEstimate {
    pub areas: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub samples: usize,
}

/// Estimates cell areas by assigning uniform samples of `domain` to
/// `argmax_p ⟨y, p⟩ − φ(p)`, ties going to the lowest index.
pub fn mc_area_oracle(
    points: &[Point2],
    phi: &[f64],
    domain: &ConvexDomain,
    n_samples: usize,
    seed: u64,
) -> Result<AreaEstimate> {
    if n_samples < 10_000 {
        return Err(Error::InvalidInput(format!(
            "at least 10000 samples are required, got {n_samples}"
        )));
    }
    if points.is_empty() || phi.len() != points.len() {
        return Err(Error::InvalidInput("need one potential value per site".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = domain.bounding_box();
    let mut counts = vec![0usize; points.len()];
    let mut accepted = 0;
    while accepted < n_samples {
        let y = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if !domain.contains(y) {
            continue;
        }
        accepted += 1;
        let mut best = 0;
        let mut best_v = y.dot(points[0]) - phi[0];
        for (p, q) in points.iter().enumerate().skip(1) {
            let v = y.dot(*q) - phi[p];
            if v > best_v {
                best = p;
                best_v = v;
            }
        }
        counts[best] += 1;
    }
    let total = domain.area();
    let n = n_samples as f64;
    let (areas, std_errors) = counts
        .iter()
        .map(|&c| {
            let f = c as f64 / n;
            (total * f, total * (f * (1.0 - f) / n).sqrt())
        })
        .unzip();
    Ok(AreaEstimate {
        areas,
        std_errors,
        samples: n_samples,
    })
}

/// Largest `|MA(p) − estimate| / σ` over sites, with `σ` floored at the
/// area of one sample; passes below 4.
pub fn mc_area_check(
    points: &[Point2],
    phi: &[f64],
    domain: &ConvexDomain,
    n_samples: usize,
    seed: u64,
) -> Result<OracleReport> {
    let est = mc_area_oracle(points, phi, domain, n_samples, seed)?;
    let exact = ma(points, phi, domain)?;
    let floor = domain.area() / n_samples as f64;
    let dev = exact
        .iter()
        .zip(est.areas.iter().zip(&est.std_errors))
        .map(|(a, (e, s))| (a - e).abs() / s.max(floor))
        .fold(0.0, f64::max);
    let instance = format!("n={} seed={seed}", points.len());
    Ok(OracleReport::new("mc_area", instance, dev, 4.0, n_samples))
}

/// Quantity checked by [`fd_check`].
pub enum FdTarget<'a> {
    /// Cell areas as functions of `φ`.
    Ma {
        points: &'a [Point2],
        domain: &'a ConvexDomain,
    },
    Objective(&'a dyn Objective),
}

/// First-order step `1e−6 (1 + ‖φ‖∞)`.
pub fn fd_step1(phi: &[f64]) -> f64 {
    1e-6 * (1.0 + sup_norm(phi))
}

/// Second-order step `1e−4 (1 + ‖φ‖∞)`.
pub fn fd_step2(phi: &[f64]) -> f64 {
    1e-4 * (1.0 + sup_norm(phi))
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn shifted(phi: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut p = phi.to_vec();
    p[i] += h;
    p
}

/// Compares the analytic derivative of order 1 or 2 with central
/// differences of step `h` of the order below. Tolerances are `1e−5` for
/// first and `1e−4` for second derivatives.
pub fn fd_check(target: &FdTarget, phi: &[f64], order: usize, h: f64) -> Result<OracleReport> {
    let tolerance = match order {
        1 => 1e-5,
        2 => 1e-4,
        _ => {
            return Err(Error::InvalidInput(format!(
                "derivative order must be 1 or 2, got {order}"
            )))
        }
    };
    if !(h > 0.0) {
        return Err(Error::InvalidInput("step must be positive".into()));
    }
    let n = phi.len();
    let mut dev = 0.0f64;
    let name;
    match target {
        FdTarget::Ma { points, domain } => {
            if !interiority(points, phi, domain)? {
                return Err(Error::NotInterior("finite differences need every cell nonempty".into()));
            }
            if order == 1 {
                name = "ma_jacobian";
                let j = ma_jacobian(points, phi, domain)?.to_dense();
                for q in 0..n {
                    let ap = ma(points, &shifted(phi, q, h), domain)?;
                    let am = ma(points, &shifted(phi, q, -h), domain)?;
                    for p in 0..n {
                        dev = dev.max(((ap[p] - am[p]) / (2.0 * h) - j[[p, q]]).abs());
                    }
                }
            } else {
                name = "ma_hessian";
                let hs = ma_hessian(points, phi, domain, HessianMode::Analytic)?;
                for r in 0..n {
                    let jp = ma_jacobian(points, &shifted(phi, r, h), domain)?.to_dense();
                    let jm = ma_jacobian(points, &shifted(phi, r, -h), domain)?.to_dense();
                    for p in 0..n {
                        for q in 0..n {
                            let fd = (jp[[p, q]] - jm[[p, q]]) / (2.0 * h);
                            dev = dev.max((fd - hs.get(p, q, r)).abs());
                        }
                    }
                }
            }
        }
        FdTarget::Objective(obj) => {
            let eval = obj.evaluate(phi, if order == 1 { Order::Gradient } else { Order::Hessian })?;
            if !eval.value.is_finite() {
                return Err(Error::NotInterior("objective is infinite at the base point".into()));
            }
            if order == 1 {
                name = "objective_gradient";
                let g = eval.gradient.expect("gradient requested");
                for (i, gi) in g.iter().enumerate() {
                    let fp = obj.evaluate(&shifted(phi, i, h), Order::Value)?.value;
                    let fm = obj.evaluate(&shifted(phi, i, -h), Order::Value)?.value;
                    dev = dev.max(((fp - fm) / (2.0 * h) - gi).abs());
                }
            } else {
                name = "objective_hessian";
                let hs = eval.hessian.expect("hessian requested").to_dense();
                for j in 0..n {
                    let gp = gradient_at(*obj, &shifted(phi, j, h))?;
                    let gm = gradient_at(*obj, &shifted(phi, j, -h))?;
                    for i in 0..n {
                        dev = dev.max(((gp[i] - gm[i]) / (2.0 * h) - hs[[i, j]]).abs());
                    }
                }
            }
        }
    }
    let instance = format!("n={n} h={h:e}");
    Ok(OracleReport::new(name, instance, dev, tolerance, n))
}

fn gradient_at(obj: &dyn Objective, phi: &[f64]) -> Result<Vec<f64>> {
    obj.evaluate(phi, Order::Gradient)?
        .gradient
        .ok_or_else(|| Error::NotInterior("finite-difference step left the interior".into()))
}

/// Random sites in `[−0.9, 0.9]²` with `φ = ‖p‖²/2 + noise·min(1, h)`,
/// resampled until every cell in `[−1, 1]²` has at least a tenth of the mean
/// area. Sites are jittered inside distinct cells of a `k × k` lattice of
/// spacing `h`, `k² ≥ n`.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> Result<(Vec<Point2>, Vec<f64>)> {
    sample_instance(rng, n, noise, 0.0)
}

/// [`random_instance`] with no cell side shorter than `h/50`, so that
/// finite-difference steps keep the combinatorics of the diagram.
pub fn random_fd_instance(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> Result<(Vec<Point2>, Vec<f64>)> {
    sample_instance(rng, n, noise, 0.02)
}

fn sample_instance(rng: &mut ChaCha8Rng, n: usize, noise: f64, min_side: f64) -> Result<(Vec<Point2>, Vec<f64>)> {
    let domain = ConvexDomain::square(2.0)?;
    let floor = 0.1 * domain.area() / n as f64;
    let k = (n as f64).sqrt().ceil() as usize;
    let h = 1.8 / k as f64;
    let amp = noise * h.min(1.0);
    loop {
        let cells = rand::seq::index::sample(rng, k * k, n);
        let pts: Vec<Point2> = cells
            .iter()
            .map(|c| {
                let (i, j) = ((c % k) as f64, (c / k) as f64);
                Point2::new(
                    -0.9 + h * (i + rng.gen_range(0.15..0.85)),
                    -0.9 + h * (j + rng.gen_range(0.15..0.85)),
                )
            })
            .collect();
        let phi: Vec<f64> = pts
            .iter()
            .map(|p| 0.5 * p.norm2() + if amp > 0.0 { rng.gen_range(-amp..amp) } else { 0.0 })
            .collect();
        let d = build_diagram(&pts, &phi, &domain)?;
        let accepted = d
            .cells
            .iter()
            .all(|c| c.polygon.area() > floor && c.polygon.edges().all(|(a, b)| a.dist(b) >= min_side * h));
        if accepted {
            return Ok((pts, phi));
        }
    }
}

/// Segment interpolates `t = 0.1, …, 0.9`.
fn interior_ts() -> Vec<f64> {
    (1..10).map(|i| i as f64 / 10.0).collect()
}

/// Runs the segment convexity properties on `n_instances` random segments
/// of potentials and the nonconvexity demonstration.
pub fn convexity_suite(seed: u64, n_instances: usize) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = ConvexDomain::square(2.0)?;
    let ts = interior_ts();
    let mut logc = 0.0f64;
    let mut conv = [0.0f64; 2];
    let mut feas = 0.0f64;
    let mut checks = 0;
    let energies = [InternalEnergy::Entropy, InternalEnergy::Power { m: 2.0 }];
    for _ in 0..n_instances {
        let n = rng.gen_range(3..30);
        let (pts, phi0) = random_instance(&mut rng, n, 0.02)?;
        let phi1 = loop {
            let p: Vec<f64> = phi0.iter().map(|v| v + rng.gen_range(-0.02..0.02)).collect();
            if interiority(&pts, &p, &domain)? {
                break p;
            }
        };
        let r = segment_logconcavity_check(&pts, &phi0, &phi1, &domain, &ts)?;
        logc = logc.max(r.max_violation);
        checks += r.checks;

        let masses: Vec<f64> = {
            let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
            let s: f64 = m.iter().sum();
            m.into_iter().map(|v| v / s).collect()
        };
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let phis: Vec<Vec<f64>> = grid
            .iter()
            .map(|t| phi0.iter().zip(&phi1).map(|(a, b)| (1.0 - t) * a + t * b).collect())
            .collect();
        let areas: Vec<Vec<f64>> = phis.iter().map(|p| ma(&pts, p, &domain)).collect::<Result<_>>()?;
        for (k, u) in energies.iter().enumerate() {
            let vals: Vec<f64> = areas
                .iter()
                .map(|a| masses.iter().zip(a).map(|(m, a)| u.cell_term(*m, *a)).sum())
                .collect();
            for w in vals.windows(3) {
                let gap = 0.5 * (w[0] + w[2]) - w[1];
                conv[k] = conv[k].max(-gap / (1.0 + w[1].abs()));
            }
        }

        // Interpolated selections stay feasible.
        let g0 = Selection::Steiner.select(&build_diagram(&pts, &phi0, &domain)?)?;
        let g1 = Selection::Centroid.select(&build_diagram(&pts, &phi1, &domain)?)?;
        for &t in &ts {
            let phit: Vec<f64> = phi0.iter().zip(&phi1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            let gt: Vec<Point2> = g0.iter().zip(&g1).map(|(a, b)| a.lerp(*b, t)).collect();
            feas = feas.max(selection_violation(&pts, &phit, &gt, &domain));
        }
    }
    let inst = format!("seed={seed} segments={n_instances}");
    let mut out = vec![
        OracleReport::new("logconcavity", inst.clone(), logc, 1e-9, checks),
        OracleReport::new(
            "entropy_segment_convexity",
            inst.clone(),
            conv[0],
            1e-9,
            n_instances * 9,
        ),
        OracleReport::new("power2_segment_convexity", inst.clone(), conv[1], 1e-9, n_instances * 9),
        OracleReport::new("selection_feasibility", inst, feas, 1e-9, n_instances * ts.len()),
    ];
    // The demo must detect a violation: the deviation is the negated
    // largest midpoint excess.
    let demo = nonconvexity_demo(64)?;
    let excess = demo.violations.iter().map(|v| v.1).fold(0.0, f64::max);
    out.push(OracleReport::new(
        "nonconvexity_demo",
        format!("violations={}", demo.violations.len()),
        -excess,
        -1e-12,
        demo.t.len(),
    ));
    Ok(out)
}

/// Largest violation of `φ(q) ≥ φ(p) + ⟨q − p, G_p⟩` and of `G_p ∈ Y`.
fn selection_violation(points: &[Point2], phi: &[f64], g: &[Point2], domain: &ConvexDomain) -> f64 {
    let mut worst = 0.0f64;
    let poly = domain.polygon();
    for (p, gp) in g.iter().enumerate() {
        for (a, b) in poly.edges() {
            // Counterclockwise boundary: inside is to the left of each edge.
            let out = -(b - a).cross(*gp - a) / (b - a).norm();
            worst = worst.max(out);
        }
        for q in 0..points.len() {
            worst = worst.max(phi[p] + (points[q] - points[p]).dot(*gp) - phi[q]);
        }
    }
    worst
}

/// Monte-Carlo area checks on `n_instances` random diagrams.
pub fn area_suite(seed: u64, n_instances: usize) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = ConvexDomain::square(2.0)?;
    (0..n_instances)
        .map(|k| {
            let n = rng.gen_range(1..20);
            let (pts, phi) = random_instance(&mut rng, n, 0.02)?;
            let mut r = mc_area_check(&pts, &phi, &domain, 20_000, seed.wrapping_add(k as u64))?;
            r.instance = format!("seed={seed} instance={k} n={n}");
            Ok(r)
        })
        .collect()
}

/// Finite-difference checks of the area Jacobian and Hessian.
pub fn derivative_suite(seed: u64, n_instances: usize) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = ConvexDomain::square(2.0)?;
    let mut out = Vec::new();
    for k in 0..n_instances {
        let n = rng.gen_range(2..30);
        let (pts, phi) = random_fd_instance(&mut rng, n, 0.02)?;
        let t = FdTarget::Ma {
            points: &pts,
            domain: &domain,
        };
        for (order, h) in [(1, fd_step1(&phi)), (2, fd_step2(&phi))] {
            let mut r = fd_check(&t, &phi, order, h)?;
            r.instance = format!("seed={seed} instance={k} n={n}");
            out.push(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_area_is_exact() {
        let y = ConvexDomain::square(2.0).unwrap();
        let e = mc_area_oracle(&[Point2::new(0.3, 0.1)], &[0.0], &y, 10_000, 1).unwrap();
        assert_eq!(e.areas, vec![4.0]);
        assert_eq!(e.std_errors, vec![0.0]);
    }

    #[test]
    fn symmetric_sites_split_evenly() {
        let y = ConvexDomain::square(2.0).unwrap();
        let pts = [Point2::new(-0.5, 0.0), Point2::new(0.5, 0.0)];
        let e = mc_area_oracle(&pts, &[0.0, 0.0], &y, 40_000, 2).unwrap();
        for (a, s) in e.areas.iter().zip(&e.std_errors) {
            assert!((a - 2.0).abs() <= 3.0 * s, "{a} ± {s}");
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let y = ConvexDomain::square(2.0).unwrap();
        assert!(mc_area_oracle(&[Point2::default()], &[0.0], &y, 100, 1).is_err());
    }

    #[test]
    fn random_instance_within_four_sigma() {
        let r = area_suite(3, 3).unwrap();
        assert!(r.iter().all(|r| r.passed), "{r:?}");
    }

    #[test]
    fn two_site_jacobian_fd() {
        let y = ConvexDomain::square(2.0).unwrap();
        let pts = [Point2::new(-0.4, 0.1), Point2::new(0.5, -0.2)];
        let phi = [0.05, -0.02];
        let r = fd_check(
            &FdTarget::Ma {
                points: &pts,
                domain: &y,
            },
            &phi,
            1,
            fd_step1(&phi),
        )
        .unwrap();
        assert!(r.passed && r.max_deviation < 1e-5, "{r:?}");
    }

    #[test]
    fn ten_site_hessian_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (pts, phi) = random_fd_instance(&mut rng, 10, 0.02).unwrap();
        let y = ConvexDomain::square(2.0).unwrap();
        let r = fd_check(
            &FdTarget::Ma {
                points: &pts,
                domain: &y,
            },
            &phi,
            2,
            fd_step2(&phi),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn non_interior_is_an_error() {
        let y = ConvexDomain::square(2.0).unwrap();
        let pts = [Point2::new(-0.5, 0.0), Point2::new(0.5, 0.0)];
        let t = FdTarget::Ma {
            points: &pts,
            domain: &y,
        };
        assert!(matches!(
            fd_check(&t, &[0.0, 50.0], 1, 1e-6),
            Err(Error::NotInterior(_))
        ));
    }

    #[test]
    fn convexity_suite_passes_and_detects_demo() {
        let r = convexity_suite(5, 10).unwrap();
        for rep in &r {
            assert!(rep.passed, "{rep:?}");
        }
        assert_eq!(r.last().unwrap().name, "nonconvexity_demo");
    }

    #[test]
    fn seeded_reports_repeat() {
        assert_eq!(convexity_suite(4, 3).unwrap(), convexity_suite(4, 3).unwrap());
    }
}
