//! Time loops: nonlinear diffusion of point clouds and crowd motion with
//! congestion on a fixed grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cellcalc::{cell_values, Q_POT};
use crate::energy::objective::{GradientStencil, JkoProblem, Mode, Objective, Order, Selection, Terms};
use crate::energy::{discrete_pushforward, DiscreteMeasure, InternalEnergy, PotentialSpec};
use crate::error::{Error, Result};
use crate::geom2d::{ConvexDomain, ConvexPolygon, Point2};
use crate::laguerre::build_diagram;
use crate::raster::Grid;
use crate::solver::{fixed_point_outer, initial_potential, newton_solve, SolveOptions};

/// Settings shared by both flows.
#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub domain: ConvexDomain,
    pub tau: f64,
    pub steps: usize,
    pub internal: InternalEnergy,
    pub potential: PotentialSpec,
    pub mode: Mode,
    pub selection: Selection,
    pub solver: SolveOptions,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidInput(format!(
                "time step must be positive, got {}",
                self.tau
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("at least one step is required".into()));
        }
        self.internal.validate()?;
        self.potential.validate()?;
        self.solver.validate()
    }
}

/// Solver summary of one step.
#[derive(Clone, Debug, Serialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub grad_inf: f64,
    pub converged: bool,
    pub outer_rounds: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// Sites at the start of the step and the optimal potential on them.
    pub sites: Vec<Point2>,
    pub masses: Vec<f64>,
    pub phi: Vec<f64>,
    /// Objective terms at the optimum.
    pub terms: Terms,
    pub objective: f64,
    /// Objective at the Voronoi starting potential.
    pub start_objective: f64,
    /// `E + U` after the step.
    pub energy: f64,
    pub min_area: f64,
    pub max_area: f64,
    pub solve: SolveSummary,
    /// Grid masses after rebinning (crowd flow only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
}

impl StepRecord {
    /// Minimizing-movement comparison with the starting candidate.
    pub fn descended(&self) -> bool {
        self.objective <= self.start_objective + 1e-12 * (1.0 + self.start_objective.abs())
    }

    pub fn mean(&self) -> Point2 {
        let mut c = Point2::default();
        for (p, m) in self.sites.iter().zip(&self.masses) {
            c += *p * *m;
        }
        c
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FlowTrace {
    /// `E + U` of the initial state.
    pub initial_energy: f64,
    pub steps: Vec<StepRecord>,
    /// Sites and masses after the last completed step.
    pub final_sites: Vec<Point2>,
    pub final_masses: Vec<f64>,
    pub warnings: Vec<String>,
    /// Diagnostic of the step that failed, if the run stopped early.
    pub failure: Option<String>,
}

fn area_range(areas: &[f64]) -> (f64, f64) {
    areas
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), a| (lo.min(*a), hi.max(*a)))
}

/// Nonlinear diffusion: each step minimizes the step objective and moves
/// every site to its selected point.
pub fn diffusion_flow(cfg: &FlowConfig, mu0: DiscreteMeasure) -> Result<FlowTrace> {
    diffusion_flow_observed(cfg, mu0, &mut |_| {})
}

/// [`diffusion_flow`] calling `observe` after every completed step.
pub fn diffusion_flow_observed(
    cfg: &FlowConfig,
    mu0: DiscreteMeasure,
    observe: &mut dyn FnMut(&StepRecord),
) -> Result<FlowTrace> {
    cfg.validate()?;
    let mut trace = FlowTrace::default();
    if let InternalEnergy::Power { m } = cfg.internal {
        if m < 0.5 {
            return Err(Error::InvalidInput(format!(
                "diffusion exponent must be at least 1/2, got {m}"
            )));
        }
        if m < 1.0 {
            trace.warnings.push(format!(
                "fast diffusion with m = {m} < 1: the discrete energy is not a barrier and convergence is not guaranteed"
            ));
        }
    }
    let mut mu = mu0;
    trace.initial_energy = {
        let phi = initial_potential(&mu.points, &cfg.domain)?;
        let mut pr = step_problem(cfg, &mu)?;
        pr.freeze_selection(&phi)?;
        let t = pr.evaluate(&phi, Order::Value)?.terms;
        t.potential + t.internal
    };
    for step in 0..cfg.steps {
        match diffusion_step(cfg, &mu, step) {
            Ok((record, next)) => {
                observe(&record);
                trace.steps.push(record);
                mu = next;
            }
            Err(e) => {
                trace.failure = Some(format!("step {step}: {e}"));
                break;
            }
        }
    }
    trace.final_sites = mu.points;
    trace.final_masses = mu.masses;
    Ok(trace)
}

fn step_problem(cfg: &FlowConfig, mu: &DiscreteMeasure) -> Result<JkoProblem> {
    JkoProblem::new(
        mu.clone(),
        cfg.domain.clone(),
        cfg.tau,
        cfg.internal.clone(),
        cfg.potential.clone(),
        cfg.mode,
        cfg.selection,
    )
}

fn diffusion_step(cfg: &FlowConfig, mu: &DiscreteMeasure, step: usize) -> Result<(StepRecord, DiscreteMeasure)> {
    let phi0 = initial_potential(&mu.points, &cfg.domain)?;
    let mut pr = step_problem(cfg, mu)?;
    pr.freeze_selection(&phi0)?;
    let start = pr.evaluate(&phi0, Order::Value)?.value;
    let (phi, g, outer) = fixed_point_outer(&mut pr, &phi0, &cfg.solver)?;
    let rep = outer.solves.last().expect("at least one outer round");
    if !rep.converged() {
        return Err(Error::Solver(format!(
            "Newton stopped ({:?}) with gradient {:e}",
            rep.termination, rep.grad_inf
        )));
    }
    let eval = pr.evaluate(&phi, Order::Value)?;
    let d = build_diagram(&mu.points, &phi, &cfg.domain)?;
    let (min_area, max_area) = area_range(&d.areas());
    let record = StepRecord {
        step,
        time: (step + 1) as f64 * cfg.tau,
        sites: mu.points.clone(),
        masses: mu.masses.clone(),
        phi,
        terms: eval.terms,
        objective: eval.value,
        start_objective: start,
        energy: eval.terms.potential + eval.terms.internal,
        min_area,
        max_area,
        solve: SolveSummary {
            iterations: outer.solves.iter().map(|s| s.iterations).sum(),
            grad_inf: rep.grad_inf,
            converged: outer.converged,
            outer_rounds: outer.rounds,
        },
        grid: None,
    };
    Ok((record, discrete_pushforward(mu, &g)?))
}

/// Settings of the crowd-motion flow on a fixed grid.
#[derive(Clone, Debug)]
pub struct CrowdConfig {
    pub flow: FlowConfig,
    pub resolution: usize,
    /// Pixels below this density keep their mass in place for the step
    /// instead of becoming sites.
    pub vacuum: f64,
}

impl CrowdConfig {
    /// The grid over the bounding box of the domain, which must be a
    /// rectangle.
    pub fn grid(&self) -> Result<Grid> {
        let (lo, hi) = self.flow.domain.bounding_box();
        let box_area = (hi.x - lo.x) * (hi.y - lo.y);
        if (box_area - self.flow.domain.area()).abs() > 1e-12 * box_area {
            return Err(Error::InvalidInput(
                "crowd motion needs an axis-aligned rectangular domain".into(),
            ));
        }
        Grid::new(lo, hi, self.resolution, self.resolution)
    }
}

/// Uniform density on `block` plus a background density `floor`
/// everywhere, normalized to unit mass; returns pixel masses.
pub fn block_density(grid: &Grid, block: &ConvexPolygon, floor: f64) -> Result<Vec<f64>> {
    if !(floor > 0.0) {
        return Err(Error::InvalidInput("background density must be positive".into()));
    }
    let h2 = grid.pixel_area();
    let mut m = vec![floor * h2; grid.len()];
    for (k, a) in grid.overlaps(block) {
        m[k] += a;
    }
    let total: f64 = m.iter().sum();
    Ok(m.into_iter().map(|v| v / total).collect())
}

/// `∫ V ρ + Σ h² U(ρ)` for pixel masses on `grid`.
pub fn grid_energy(grid: &Grid, masses: &[f64], internal: &InternalEnergy, potential: &PotentialSpec) -> f64 {
    let h2 = grid.pixel_area();
    let mut e = 0.0;
    for (k, m) in masses.iter().enumerate() {
        let u = internal.cell_term(*m, h2);
        let v = if potential.is_zero() {
            0.0
        } else {
            let px = grid.pixel(k);
            cell_values(px.vertices(), grid.center(k), Some(potential))[Q_POT] / h2 * m
        };
        e += u + v;
    }
    e
}

/// Crowd motion: pixel masses sit at the pixel centers; each step solves
/// the step objective with the selection frozen per outer round, then the
/// spread-out density on the cells is rebinned onto the grid by exact
/// overlaps.
pub fn crowd_flow(cfg: &CrowdConfig, initial: &[f64]) -> Result<FlowTrace> {
    crowd_flow_observed(cfg, initial, &mut |_| {})
}

/// [`crowd_flow`] calling `observe` after every completed step.
pub fn crowd_flow_observed(
    cfg: &CrowdConfig,
    initial: &[f64],
    observe: &mut dyn FnMut(&StepRecord),
) -> Result<FlowTrace> {
    cfg.flow.validate()?;
    if !(0.0..1.0).contains(&cfg.vacuum) {
        return Err(Error::InvalidInput(format!(
            "vacuum density must lie in [0, 1), got {}",
            cfg.vacuum
        )));
    }
    let grid = cfg.grid()?;
    if initial.len() != grid.len() {
        return Err(Error::InvalidInput("initial grid masses do not match the grid".into()));
    }
    let h2 = grid.pixel_area();
    if let Some(k) = initial.iter().position(|m| !(m / h2 <= 1.0)) {
        return Err(Error::InvalidInput(format!(
            "initial density {} at pixel {k} exceeds the congestion bound 1",
            initial[k] / h2
        )));
    }
    let centers = grid.centers();
    let mut masses = initial.to_vec();
    let mut trace = FlowTrace {
        initial_energy: grid_energy(&grid, &masses, &cfg.flow.internal, &cfg.flow.potential),
        ..Default::default()
    };
    for step in 0..cfg.flow.steps {
        match crowd_step(cfg, &grid, &centers, &masses, step) {
            Ok((record, next)) => {
                observe(&record);
                masses = next;
                trace.steps.push(record);
            }
            Err(e) => {
                trace.failure = Some(format!("step {step}: {e}"));
                break;
            }
        }
    }
    trace.final_sites = centers;
    trace.final_masses = masses;
    Ok(trace)
}

/// Pixels dense enough to be sites, with every site having an active
/// neighbour along both axes.
fn active_pixels(grid: &Grid, masses: &[f64], vacuum: f64) -> Vec<bool> {
    let h2 = grid.pixel_area();
    let mut active: Vec<bool> = masses.iter().map(|m| m / h2 >= vacuum).collect();
    loop {
        let on = |i: usize, j: usize| active[grid.index(i, j)];
        let isolated: Vec<usize> = (0..grid.len())
            .filter(|&k| {
                let (i, j) = (k % grid.nx, k / grid.nx);
                active[k] && !((i > 0 && on(i - 1, j)) || (i + 1 < grid.nx && on(i + 1, j)))
                    || active[k] && !((j > 0 && on(i, j - 1)) || (j + 1 < grid.ny && on(i, j + 1)))
            })
            .collect();
        if isolated.is_empty() {
            return active;
        }
        for k in isolated {
            active[k] = false;
        }
    }
}

fn crowd_step(
    cfg: &CrowdConfig,
    grid: &Grid,
    centers: &[Point2],
    masses: &[f64],
    step: usize,
) -> Result<(StepRecord, Vec<f64>)> {
    let active = active_pixels(grid, masses, cfg.vacuum);
    let sites: Vec<Point2> = (0..grid.len()).filter(|k| active[*k]).map(|k| centers[k]).collect();
    let moving: Vec<f64> = (0..grid.len()).filter(|k| active[*k]).map(|k| masses[k]).collect();
    if sites.len() < 3 {
        return Err(Error::InvalidInput(
            "fewer than three pixels above the vacuum density".into(),
        ));
    }
    let mu = DiscreteMeasure::normalized(sites.clone(), moving.clone())?;
    let phi0 = initial_potential(&sites, &cfg.flow.domain)?;
    let mut pr = step_problem(&cfg.flow, &mu)?;
    if cfg.flow.mode == Mode::GridGradient {
        pr = pr.with_stencil(GradientStencil::masked(grid, &active)?)?;
    }
    pr.freeze_selection(&phi0)?;
    let start = pr.evaluate(&phi0, Order::Value)?.value;
    let (phi, solves, outer_rounds) = if cfg.flow.mode == Mode::Selection {
        let (phi, _, outer) = fixed_point_outer(&mut pr, &phi0, &cfg.flow.solver)?;
        (phi, outer.solves, outer.rounds)
    } else {
        let (phi, rep) = newton_solve(&pr, &phi0, &cfg.flow.solver)?;
        if !rep.converged() {
            return Err(Error::Solver(format!(
                "Newton stopped ({:?}) with gradient {:e}",
                rep.termination, rep.grad_inf
            )));
        }
        (phi, vec![rep], 1)
    };
    let eval = pr.evaluate(&phi, Order::Value)?;
    let d = build_diagram(&sites, &phi, &cfg.flow.domain)?;
    let cells: Vec<ConvexPolygon> = d.cells.iter().map(|c| c.polygon.clone()).collect();
    let mut next = grid.rasterize(&cells, &moving);
    for (k, m) in masses.iter().enumerate() {
        if !active[k] {
            next[k] += m;
        }
    }
    let (min_area, max_area) = area_range(&d.areas());
    let last = solves.last();
    let record = StepRecord {
        step,
        time: (step + 1) as f64 * cfg.flow.tau,
        sites,
        masses: moving,
        phi,
        terms: eval.terms,
        objective: eval.value,
        start_objective: start,
        energy: grid_energy(grid, &next, &cfg.flow.internal, &cfg.flow.potential),
        min_area,
        max_area,
        solve: SolveSummary {
            iterations: solves.iter().map(|s| s.iterations).sum(),
            grad_inf: last.map_or(0.0, |s| s.grad_inf),
            converged: true,
            outer_rounds,
        },
        grid: Some(next.clone()),
    };
    Ok((record, next))
}

/// `n` points uniform in the domain.
pub fn sample_uniform(domain: &ConvexDomain, n: usize, seed: u64) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = domain.bounding_box();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if domain.contains(p) {
            out.push(p);
        }
    }
    out
}

/// `n` points uniform in a disk.
pub fn sample_disk(center: Point2, radius: f64, n: usize, seed: u64) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = radius * rng.gen::<f64>().sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            center + Point2::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

/// Support radius at time `t` of the unit-mass self-similar solution of
/// `∂ρ/∂t = Δ(ρ²)` in the plane: `(16 C)^{1/2} t^{1/4}` with
/// `C = (8π)^{-1/2}`.
pub fn barenblatt_radius(t: f64) -> f64 {
    let c = 1.0 / (8.0 * std::f64::consts::PI).sqrt();
    (16.0 * c).sqrt() * t.powf(0.25)
}

/// `n` samples of the density `∝ (R² − ‖x‖²)_+` with `R = barenblatt_radius(t)`.
pub fn sample_barenblatt(t: f64, n: usize, seed: u64) -> Vec<Point2> {
    let big_r = barenblatt_radius(t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            // Radial CDF 1 − (1 − r²/R²)².
            let u: f64 = rng.gen();
            let r = big_r * (1.0 - (1.0 - u).sqrt()).sqrt();
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            Point2::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

/// Support radius estimated from the second moment, exact for the profile
/// `(R² − ‖x‖²)_+`, whose mean squared radius is `R²/3`.
pub fn moment_radius(points: &[Point2], masses: &[f64]) -> f64 {
    let mut c = Point2::default();
    for (p, m) in points.iter().zip(masses) {
        c += *p * *m;
    }
    let second: f64 = points.iter().zip(masses).map(|(p, m)| m * (*p - c).norm2()).sum();
    (3.0 * second).sqrt()
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(steps: usize) -> FlowConfig {
        FlowConfig {
            domain: ConvexDomain::square(2.0).unwrap(),
            tau: 0.01,
            steps,
            internal: InternalEnergy::Entropy,
            potential: PotentialSpec::default(),
            mode: Mode::Selection,
            selection: Selection::Steiner,
            solver: SolveOptions::default(),
        }
    }

    #[test]
    fn centered_single_site_stays() {
        let mu = DiscreteMeasure::uniform(vec![Point2::new(0.0, 0.0)]).unwrap();
        let tr = diffusion_flow(&heat(3), mu).unwrap();
        assert!(tr.failure.is_none());
        assert_eq!(tr.steps.len(), 3);
        for s in &tr.steps {
            assert!((s.max_area - 4.0).abs() < 1e-12);
        }
        assert!(tr.final_sites[0].norm() < 1e-14);
    }

    #[test]
    fn fast_diffusion_is_flagged() {
        let mu = DiscreteMeasure::uniform(sample_disk(Point2::default(), 0.5, 10, 3)).unwrap();
        let cfg = FlowConfig {
            internal: InternalEnergy::Power { m: 0.6 },
            ..heat(1)
        };
        let tr = diffusion_flow(&cfg, mu.clone()).unwrap();
        assert_eq!(tr.warnings.len(), 1);
        let cfg = FlowConfig {
            internal: InternalEnergy::Power { m: 0.4 },
            ..heat(1)
        };
        assert!(diffusion_flow(&cfg, mu).is_err());
    }

    #[test]
    fn barenblatt_samples_match_radius() {
        let t = 0.1;
        let pts = sample_barenblatt(t, 20000, 1);
        let r = barenblatt_radius(t);
        assert!(pts.iter().all(|p| p.norm() <= r));
        let m = vec![1.0 / pts.len() as f64; pts.len()];
        assert!((moment_radius(&pts, &m) / r - 1.0).abs() < 0.02);
    }

    #[test]
    fn block_density_is_normalized() {
        let g = Grid::new(Point2::new(-2.0, -2.0), Point2::new(2.0, 2.0), 40, 40).unwrap();
        let block = ConvexPolygon::rectangle(Point2::new(-1.8, -0.8), Point2::new(-0.8, 0.8)).unwrap();
        let m = block_density(&g, &block, 1e-3).unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let peak = m.iter().cloned().fold(0.0, f64::max) / g.pixel_area();
        assert!(peak < 1.0);
    }
}
