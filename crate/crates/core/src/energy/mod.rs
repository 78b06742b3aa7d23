//! Pushforwards of discrete measures through subgradient selections, the
//! transport, potential and internal energies, and the per-step objective.

pub mod internal;
pub mod objective;
pub mod potential;

use serde::Serialize;

use crate::cellcalc::{cell_values, Q_AREA, Q_SECOND};
use crate::error::{Error, Result};
use crate::geom2d::{ConvexDomain, ConvexPolygon, Point2};
use crate::laguerre::{build_diagram, LaguerreDiagram};

pub use internal::{mccann_check, InternalEnergy, McCannReport};
pub use objective::{GradientStencil, JkoProblem, Mode, Objective, ObjectiveEval, Order, Selection, Terms};
pub use potential::{GaussianBump, PotentialSpec, QuadraticInteraction, QuadraticWell};

/// Tolerance on the total mass of a probability measure.
pub const MASS_TOL: f64 = 1e-12;

/// Finitely supported probability measure `Σ μ_p δ_p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Point2>,
    pub masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Point2>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() || points.is_empty() {
            return Err(Error::InvalidInput(
                "measure needs as many masses as points, at least one".into(),
            ));
        }
        if let Some(i) = masses.iter().position(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "mass of point {i} must be positive, got {}",
                masses[i]
            )));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!("masses sum to {total}, expected 1")));
        }
        Ok(Self { points, masses })
    }

    /// Rescales positive masses to unit total.
    pub fn normalized(points: Vec<Point2>, masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("total mass must be positive".into()));
        }
        Self::new(points, masses.into_iter().map(|m| m / total).collect())
    }

    pub fn uniform(points: Vec<Point2>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Checks `φ(q) ≥ φ(p) + ⟨q − p, G_p⟩ − 1e−9` for all pairs and `G_p ∈ Y`.
pub fn check_selection(points: &[Point2], phi: &[f64], selection: &[Point2], domain: &ConvexDomain) -> Result<()> {
    if selection.len() != points.len() {
        return Err(Error::InvalidInput("selection length differs from site count".into()));
    }
    for (p, g) in selection.iter().enumerate() {
        if !domain.polygon().contains(*g, 1e-9) {
            return Err(Error::InvalidInput(format!(
                "selected gradient of site {p} lies outside the domain"
            )));
        }
        for q in 0..points.len() {
            if phi[q] < phi[p] + (points[q] - points[p]).dot(*g) - 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "selected gradient of site {p} violates the constraint of site {q}"
                )));
            }
        }
    }
    Ok(())
}

/// Moves each mass to its selected point; coincident targets are merged.
pub fn discrete_pushforward(mu: &DiscreteMeasure, selection: &[Point2]) -> Result<DiscreteMeasure> {
    if selection.len() != mu.len() {
        return Err(Error::InvalidInput("selection length differs from measure size".into()));
    }
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (selection[a], selection[b]);
        pa.x.total_cmp(&pb.x).then(pa.y.total_cmp(&pb.y)).then(a.cmp(&b))
    });
    let mut points: Vec<Point2> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    for i in order {
        if points.last() == Some(&selection[i]) {
            *masses.last_mut().unwrap() += mu.masses[i];
        } else {
            points.push(selection[i]);
            masses.push(mu.masses[i]);
        }
    }
    Ok(DiscreteMeasure { points, masses })
}

/// Piecewise-constant density `μ_p / area(cell p)` on the cells.
#[derive(Clone, Debug, Serialize)]
pub struct AcPushforward {
    pub cells: Vec<ConvexPolygon>,
    pub density: Vec<f64>,
}

impl AcPushforward {
    pub fn total_mass(&self) -> f64 {
        self.cells.iter().zip(&self.density).map(|(c, d)| c.area() * d).sum()
    }
}

fn interior_diagram(mu: &DiscreteMeasure, phi: &[f64], domain: &ConvexDomain) -> Result<LaguerreDiagram> {
    let d = build_diagram(&mu.points, phi, domain)?;
    if !crate::ma::diagram_is_interior(&d) {
        let p = d
            .cells
            .iter()
            .position(|c| c.polygon.area() <= d.empty_tolerance())
            .unwrap_or(0);
        return Err(Error::NotInterior(format!("cell of site {p} is empty")));
    }
    Ok(d)
}

pub fn ac_pushforward(mu: &DiscreteMeasure, phi: &[f64], domain: &ConvexDomain) -> Result<AcPushforward> {
    let d = interior_diagram(mu, phi, domain)?;
    let density = d
        .cells
        .iter()
        .zip(&mu.masses)
        .map(|(c, m)| m / c.polygon.area())
        .collect();
    Ok(AcPushforward {
        cells: d.cells.into_iter().map(|c| c.polygon).collect(),
        density,
    })
}

/// `Σ μ_p ‖p − G_p‖²`.
pub fn wasserstein_discrete(mu: &DiscreteMeasure, selection: &[Point2]) -> f64 {
    mu.points
        .iter()
        .zip(selection)
        .zip(&mu.masses)
        .map(|((p, g), m)| m * (*p - *g).norm2())
        .sum()
}

/// `Σ (μ_p / A_p) ∫_{cell p} ‖p − x‖² dx`.
pub fn wasserstein_ac(mu: &DiscreteMeasure, phi: &[f64], domain: &ConvexDomain) -> Result<f64> {
    let d = interior_diagram(mu, phi, domain)?;
    Ok(d.cells
        .iter()
        .enumerate()
        .map(|(p, c)| {
            let v = cell_values(c.polygon.vertices(), mu.points[p], None);
            mu.masses[p] * v[Q_SECOND] / v[Q_AREA]
        })
        .sum())
}

/// `Σ ν_i V(x_i) + Σ_{i,j} ν_i ν_j W(x_i, x_j)`.
pub fn potential_energy(nu: &DiscreteMeasure, spec: &PotentialSpec) -> f64 {
    let mut e: f64 = nu.points.iter().zip(&nu.masses).map(|(x, m)| m * spec.value(*x)).sum();
    if spec.has_interaction() {
        for (i, (xi, mi)) in nu.points.iter().zip(&nu.masses).enumerate() {
            for (xj, mj) in nu.points.iter().zip(&nu.masses).skip(i + 1) {
                e += 2.0 * mi * mj * spec.interaction_value(*xi, *xj);
            }
        }
    }
    e
}

/// `Σ A_p U(μ_p / A_p)` over the cells, `+∞` if some cell is empty.
pub fn internal_energy(mu: &DiscreteMeasure, phi: &[f64], domain: &ConvexDomain, u: &InternalEnergy) -> Result<f64> {
    let d = build_diagram(&mu.points, phi, domain)?;
    Ok(internal_energy_of_areas(&mu.masses, &d.areas(), d.empty_tolerance(), u))
}

pub fn internal_energy_of_areas(masses: &[f64], areas: &[f64], tol: f64, u: &InternalEnergy) -> f64 {
    let mut total = 0.0;
    for (m, a) in masses.iter().zip(areas) {
        if !(*a > tol) {
            return f64::INFINITY;
        }
        total += u.cell_term(*m, *a);
    }
    total
}

/// Samples of the second moment of the absolutely continuous pushforward
/// along a segment of potentials.
#[derive(Clone, Debug, Serialize)]
pub struct NonconvexityDemo {
    pub t: Vec<f64>,
    pub energy: Vec<f64>,
    /// `(t_mid, E(t_mid) − (E(t_lo) + E(t_hi))/2)` for strict violations.
    pub violations: Vec<(f64, f64)>,
}

/// Three sites `q = (2, 0)`, `(0, ±1)` with masses `0.8, 0.1, 0.1` in
/// `[−1, 1]²`; `φ_t` interpolates from the indicator of `q` to zero and
/// the second moment `∫‖x‖²` of the absolutely continuous pushforward is
/// sampled on `samples + 1` equispaced values of `t`.
pub fn nonconvexity_demo(samples: usize) -> Result<NonconvexityDemo> {
    let domain = ConvexDomain::square(2.0)?;
    let mu = DiscreteMeasure::new(
        vec![Point2::new(2.0, 0.0), Point2::new(0.0, 1.0), Point2::new(0.0, -1.0)],
        vec![0.8, 0.1, 0.1],
    )?;
    let samples = samples.max(2);
    let ts: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
    let origin = Point2::default();
    let mut energy = Vec::with_capacity(ts.len());
    for &t in &ts {
        let phi = [1.0 - t, 0.0, 0.0];
        let ac = ac_pushforward(&mu, &phi, &domain)?;
        let e: f64 = ac
            .cells
            .iter()
            .zip(&ac.density)
            .map(|(c, rho)| rho * c.second_moment(origin))
            .sum();
        energy.push(e);
    }
    let mut violations = Vec::new();
    let n = ts.len();
    for i in 1..n - 1 {
        let w = i.min(n - 1 - i);
        for s in 1..=w {
            let excess = energy[i] - 0.5 * (energy[i - s] + energy[i + s]);
            if excess > 1e-12 {
                violations.push((ts[i], excess));
                break;
            }
        }
    }
    Ok(NonconvexityDemo {
        t: ts,
        energy,
        violations,
    })
}
