//! Damped Newton minimization of a step objective over `φ`.
//!
//! The objective is invariant under `φ ← φ + c`, so the first entry is
//! pinned to zero and the Newton system is solved on the remaining
//! coordinates. The internal energy is a barrier: trial points outside the
//! interior evaluate to `+∞` and are rejected by the line search.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};
use sprs_ldl::Ldl;

use crate::energy::objective::{JkoProblem, Objective, ObjectiveEval, Order};
use crate::error::{Error, Result};
use crate::geom2d::{ConvexDomain, Point2};
use crate::laguerre::build_diagram;
use crate::ma::diagram_is_interior;

/// Source of the Newton matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianSource {
    #[default]
    Analytic,
    /// Central differences of the gradient.
    FdOfGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
    pub shrink: f64,
    pub armijo: f64,
    pub tikhonov_floor: f64,
    pub tikhonov_max: f64,
    pub hessian: HessianSource,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 100,
            shrink: 0.5,
            armijo: 1e-4,
            tikhonov_floor: 1e-10,
            tikhonov_max: 1e-2,
            hessian: HessianSource::Analytic,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.grad_tol, self.armijo, self.tikhonov_floor, self.tikhonov_max]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive || !(self.shrink > 0.0 && self.shrink < 1.0) || self.armijo >= 1.0 {
            return Err(Error::InvalidInput(
                "solver tolerances must be positive, shrink and armijo in (0, 1)".into(),
            ));
        }
        if self.tikhonov_floor > self.tikhonov_max {
            return Err(Error::InvalidInput("tikhonov floor exceeds its maximum".into()));
        }
        Ok(())
    }
}

/// Smallest accepted line-search step.
pub const MIN_STEP: f64 = 1e-16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchStalled,
}

/// How a search direction was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "shift")]
pub enum Direction {
    Newton,
    Regularized(f64),
    SteepestDescent,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationLog {
    pub iter: usize,
    pub value: f64,
    pub grad_inf: f64,
    pub step: f64,
    pub backtracks: usize,
    pub direction: Direction,
    /// Accepted on gradient decrease because the value change was below
    /// rounding level.
    pub noise_accept: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub grad_inf: f64,
    pub values: Vec<f64>,
    pub backtracks: Vec<usize>,
    pub termination: Termination,
    pub log: Vec<IterationLog>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// One JSON object per iteration.
    pub fn write_jsonl(&self, out: &mut impl Write) -> Result<()> {
        for l in &self.log {
            serde_json::to_writer(&mut *out, l)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn noise_level(f: f64) -> f64 {
    16.0 * f64::EPSILON * (1.0 + f.abs())
}

fn hessian_of(obj: &impl Objective, phi: &[f64], eval: &ObjectiveEval, source: HessianSource) -> Result<CsMat<f64>> {
    match source {
        HessianSource::Analytic => eval
            .hessian
            .clone()
            .ok_or_else(|| Error::Solver("objective returned no Hessian".into())),
        HessianSource::FdOfGradient => {
            let n = phi.len();
            let h = 1e-6 * (1.0 + inf_norm(phi));
            let mut tri = TriMat::new((n, n));
            for j in 0..n {
                let mut p = phi.to_vec();
                p[j] += h;
                let mut m = phi.to_vec();
                m[j] -= h;
                let gp = obj.evaluate(&p, Order::Gradient)?.gradient;
                let gm = obj.evaluate(&m, Order::Gradient)?.gradient;
                let (Some(gp), Some(gm)) = (gp, gm) else {
                    return Err(Error::Solver("finite-difference Hessian left the interior".into()));
                };
                for i in 0..n {
                    let v = (gp[i] - gm[i]) / (2.0 * h);
                    if v != 0.0 {
                        tri.add_triplet(i, j, v);
                    }
                }
            }
            Ok(tri.to_csr())
        }
    }
}

/// Symmetric part of `h` with the first row and column removed, shifted by
/// `shift` on the diagonal.
fn reduced(h: &CsMat<f64>, shift: f64) -> CsMat<f64> {
    let n = h.rows() - 1;
    let mut tri = TriMat::new((n, n));
    for (v, (i, j)) in h.iter() {
        if i > 0 && j > 0 {
            tri.add_triplet(i - 1, j - 1, 0.5 * v);
            tri.add_triplet(j - 1, i - 1, 0.5 * v);
        }
    }
    for i in 0..n {
        tri.add_triplet(i, i, shift);
    }
    tri.to_csc()
}

/// Solves `H δ = −g` on the pinned subspace, escalating the diagonal shift
/// until the factorization is positive definite and `δ` is a descent
/// direction.
fn direction(h: &CsMat<f64>, g: &[f64], opts: &SolveOptions) -> (Vec<f64>, Direction) {
    let n = g.len();
    let rhs: Vec<f64> = g[1..].iter().map(|v| -v).collect();
    let scale = (1..n)
        .map(|i| h.get(i, i).copied().unwrap_or(0.0).abs())
        .fold(1.0f64, f64::max);
    let mut shift = 0.0;
    loop {
        if let Some(d) = try_solve(h, &rhs, shift * scale) {
            let mut full = vec![0.0; n];
            full[1..].copy_from_slice(&d);
            if dot(&full, g) < 0.0 {
                let kind = if shift == 0.0 {
                    Direction::Newton
                } else {
                    Direction::Regularized(shift * scale)
                };
                return (full, kind);
            }
        }
        shift = if shift == 0.0 {
            opts.tikhonov_floor
        } else {
            shift * 10.0
        };
        if shift > opts.tikhonov_max * (1.0 + 1e-12) {
            let mut full: Vec<f64> = g.iter().map(|v| -v).collect();
            full[0] = 0.0;
            return (full, Direction::SteepestDescent);
        }
    }
}

fn try_solve(h: &CsMat<f64>, rhs: &[f64], shift: f64) -> Option<Vec<f64>> {
    let a = reduced(h, shift);
    if a.rows() == 1 {
        // The factorization workspace needs at least two unknowns.
        let d = a.get(0, 0).copied().unwrap_or(0.0);
        return (d > 0.0 && d.is_finite()).then(|| vec![rhs[0] / d]);
    }
    let ldl = Ldl::new()
        .fill_in_reduction(sprs::FillInReduction::ReverseCuthillMcKee)
        .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
        .numeric(a.view())
        .ok()?;
    if !ldl.d().iter().all(|d| *d > 0.0 && d.is_finite()) {
        return None;
    }
    let x: Vec<f64> = ldl.solve(rhs);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Minimizes `obj` from the interior point `phi0`. The result satisfies
/// `φ*[0] = 0`.
pub fn newton_solve(obj: &impl Objective, phi0: &[f64], opts: &SolveOptions) -> Result<(Vec<f64>, SolveReport)> {
    opts.validate()?;
    let n = obj.dim();
    if phi0.len() != n || n == 0 {
        return Err(Error::InvalidInput(
            "initial potential length differs from site count".into(),
        ));
    }
    let mut phi: Vec<f64> = phi0.iter().map(|v| v - phi0[0]).collect();
    let order = match opts.hessian {
        HessianSource::Analytic => Order::Hessian,
        HessianSource::FdOfGradient => Order::Gradient,
    };
    let mut eval = obj.evaluate(&phi, order)?;
    if !eval.value.is_finite() {
        return Err(Error::NotInterior("initial potential is not in the interior".into()));
    }
    let mut report = SolveReport {
        iterations: 0,
        grad_inf: f64::INFINITY,
        values: vec![eval.value],
        backtracks: Vec::new(),
        termination: Termination::MaxIterations,
        log: Vec::new(),
    };
    for iter in 0..=opts.max_iters {
        let g = eval
            .gradient
            .clone()
            .ok_or_else(|| Error::Solver("objective returned no gradient".into()))?;
        report.grad_inf = inf_norm(&g);
        if report.grad_inf <= opts.grad_tol || n == 1 {
            report.termination = Termination::Converged;
            break;
        }
        if iter == opts.max_iters {
            break;
        }
        let h = hessian_of(obj, &phi, &eval, opts.hessian)?;
        let (delta, kind) = direction(&h, &g, opts);
        let slope = dot(&g, &delta);
        let f0 = eval.value;
        let mut t = 1.0;
        let mut backtracks = 0;
        let mut noise_accept = false;
        let accepted = loop {
            let trial: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + t * d).collect();
            let ft = obj.evaluate(&trial, Order::Value)?.value;
            if ft.is_finite() {
                if ft <= f0 + opts.armijo * t * slope {
                    break Some(trial);
                }
                if (ft - f0).abs() <= noise_level(f0) {
                    let e = obj.evaluate(&trial, Order::Gradient)?;
                    if let Some(gt) = &e.gradient {
                        if inf_norm(gt) <= 0.5 * report.grad_inf {
                            noise_accept = true;
                            break Some(trial);
                        }
                    }
                }
            }
            t *= opts.shrink;
            backtracks += 1;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some(trial) = accepted else {
            report.termination = Termination::LineSearchStalled;
            report.backtracks.push(backtracks);
            break;
        };
        phi = trial;
        eval = obj.evaluate(&phi, order)?;
        report.iterations += 1;
        report.values.push(eval.value);
        report.backtracks.push(backtracks);
        report.log.push(IterationLog {
            iter,
            value: eval.value,
            grad_inf: inf_norm(eval.gradient.as_deref().unwrap_or(&[])),
            step: t,
            backtracks,
            direction: kind,
            noise_accept,
        });
    }
    Ok((phi, report))
}

#[derive(Clone, Debug, Serialize)]
pub struct OuterReport {
    pub rounds: usize,
    /// `‖G_{k+1} − G_k‖∞` after each round.
    pub selection_change: Vec<f64>,
    pub converged: bool,
    pub solves: Vec<SolveReport>,
}

pub const OUTER_TOL: f64 = 1e-7;
pub const OUTER_MAX_ROUNDS: usize = 20;

/// Alternates freezing the selection at the current `φ` and minimizing
/// with it frozen, until the selected points stop moving.
pub fn fixed_point_outer(
    problem: &mut JkoProblem,
    phi0: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, Vec<Point2>, OuterReport)> {
    let mut phi = phi0.to_vec();
    let mut report = OuterReport {
        rounds: 0,
        selection_change: Vec::new(),
        converged: false,
        solves: Vec::new(),
    };
    let mut g = problem.freeze_selection(&phi)?;
    while report.rounds < OUTER_MAX_ROUNDS {
        let (next, solve) = newton_solve(&*problem, &phi, opts)?;
        let stalled = !solve.converged();
        report.solves.push(solve);
        report.rounds += 1;
        phi = next;
        let g_next = problem.freeze_selection(&phi)?;
        let change = g.iter().zip(&g_next).fold(0.0f64, |m, (a, b)| m.max((*a - *b).norm()));
        report.selection_change.push(change);
        g = g_next;
        if stalled {
            return Err(Error::Solver(format!(
                "inner solve stopped without converging in outer round {}",
                report.rounds
            )));
        }
        if change <= OUTER_TOL {
            report.converged = true;
            break;
        }
    }
    Ok((phi, g, report))
}

/// `φ0(p) = ½‖p‖²`, whose cells are the Voronoi cells of the sites.
pub fn initial_potential(points: &[Point2], domain: &ConvexDomain) -> Result<Vec<f64>> {
    let phi: Vec<f64> = points.iter().map(|p| 0.5 * p.norm2()).collect();
    let d = build_diagram(points, &phi, domain)?;
    if !diagram_is_interior(&d) {
        let p = d
            .cells
            .iter()
            .position(|c| c.polygon.area() <= d.empty_tolerance())
            .unwrap_or(0);
        return Err(Error::NotInterior(format!(
            "the Voronoi cell of site {p} misses the domain; check that the sites lie inside it"
        )));
    }
    Ok(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{DiscreteMeasure, InternalEnergy, Mode, PotentialSpec, Selection};

    fn entropy_problem(points: Vec<Point2>) -> JkoProblem {
        JkoProblem::new(
            DiscreteMeasure::uniform(points).unwrap(),
            ConvexDomain::square(2.0).unwrap(),
            0.1,
            InternalEnergy::Entropy,
            PotentialSpec::default(),
            Mode::Ac,
            Selection::Steiner,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_pair_gets_equal_areas() {
        let pts = vec![Point2::new(-0.3, 0.0), Point2::new(0.7, 0.0)];
        let pr = JkoProblem {
            tau: 1e12,
            ..entropy_problem(pts.clone())
        };
        let y = ConvexDomain::square(2.0).unwrap();
        let phi0 = initial_potential(&pts, &y).unwrap();
        let (phi, rep) = newton_solve(&pr, &phi0, &SolveOptions::default()).unwrap();
        assert!(rep.converged());
        assert_eq!(phi[0], 0.0);
        let a = build_diagram(&pts, &phi, &y).unwrap().areas();
        assert!((a[0] - a[1]).abs() < 1e-8, "{a:?}");
    }

    #[test]
    fn single_site_converges_immediately() {
        let pts = vec![Point2::new(0.2, 0.1)];
        let pr = entropy_problem(pts.clone());
        let (_, rep) = newton_solve(&pr, &[3.0], &SolveOptions::default()).unwrap();
        assert!(rep.converged() && rep.iterations == 0);
    }

    #[test]
    fn rejects_non_interior_start() {
        let pr = entropy_problem(vec![Point2::new(-0.5, 0.0), Point2::new(0.5, 0.0)]);
        assert!(matches!(
            newton_solve(&pr, &[0.0, 100.0], &SolveOptions::default()),
            Err(Error::NotInterior(_))
        ));
    }

    #[test]
    fn initial_potential_is_voronoi() {
        let y = ConvexDomain::square(2.0).unwrap();
        let one = initial_potential(&[Point2::new(0.3, 0.3)], &y).unwrap();
        let d = build_diagram(&[Point2::new(0.3, 0.3)], &one, &y).unwrap();
        assert!((d.cells[0].polygon.area() - 4.0).abs() < 1e-15);
        assert!(initial_potential(&[Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)], &y).is_err());
    }

    #[test]
    fn options_validation() {
        assert!(SolveOptions::default().validate().is_ok());
        let bad = SolveOptions {
            shrink: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
