//! Command implementations.

use jkoflow::energy::{DiscreteMeasure, JkoProblem, Mode, Objective, Order};
use jkoflow::flows::{
    block_density, crowd_flow_observed, diffusion_flow_observed, sample_barenblatt, sample_uniform, CrowdConfig,
    FlowConfig, FlowTrace, StepRecord,
};
use jkoflow::laguerre::build_diagram;
use jkoflow::raster::Grid;
use jkoflow::solver::{fixed_point_outer, initial_potential};
use jkoflow::validate::{area_suite, convexity_suite, derivative_suite, OracleReport};
use jkoflow::{ConvexDomain, ConvexPolygon, Point2};
use serde::Serialize;

use crate::config::{Command, RunConfig, Sampler, Suite};
use crate::error::CliError;
use crate::output::{
    load_points_csv, svg_snapshot, write_grid_csv, write_json, write_points_csv, write_text, ColorScale, OutDir,
};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("JKOFLOW_GIT_DESCRIBE"), ")");

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    command: String,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    color_scale: Option<ColorScale>,
    artifacts: Vec<String>,
}

fn finish(out: OutDir, cfg: &RunConfig, color_scale: Option<ColorScale>) -> Result<(), CliError> {
    let path = out.root.join("manifest.json");
    let manifest = Manifest {
        version: VERSION,
        command: cfg.command.expect("resolved").to_string(),
        config: cfg,
        color_scale,
        artifacts: out.files,
    };
    write_json(&path, &manifest)
}

/// Runs a resolved configuration.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command.expect("resolved") {
        Command::Diagram => diagram(cfg),
        Command::Validate => validate(cfg),
        Command::JkoStep => jko_step(cfg),
        Command::FlowDiffusion => flow_diffusion(cfg),
        Command::FlowCrowd => flow_crowd(cfg),
    }
}

fn initial_measure(cfg: &RunConfig, domain: &ConvexDomain) -> Result<DiscreteMeasure, CliError> {
    let mu = match &cfg.points.csv {
        Some(path) => load_points_csv(path)?,
        None => {
            let n = cfg.points.n_points;
            let pts = match cfg.points.sampler {
                Sampler::Uniform => sample_uniform(domain, n, cfg.seed),
                Sampler::Barenblatt => sample_barenblatt(cfg.points.barenblatt_t0, n, cfg.seed),
            };
            DiscreteMeasure::uniform(pts)?
        }
    };
    if let Some(i) = mu.points.iter().position(|p| !domain.contains(*p)) {
        return Err(CliError::Config {
            key: if cfg.points.csv.is_some() {
                "points.csv".into()
            } else {
                "points".into()
            },
            message: format!("point {i} lies outside the domain"),
        });
    }
    Ok(mu)
}

fn densities(polys: &[ConvexPolygon], masses: &[f64]) -> Vec<f64> {
    polys
        .iter()
        .zip(masses)
        .map(|(c, m)| if c.area() > 0.0 { m / c.area() } else { 0.0 })
        .collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(*b))
}

#[derive(Serialize)]
struct CellOut {
    site: Point2,
    mass: f64,
    area: f64,
    vertices: Vec<Point2>,
}

fn diagram(cfg: &RunConfig) -> Result<(), CliError> {
    let domain = cfg.domain.build()?;
    let mu = initial_measure(cfg, &domain)?;
    let phi = initial_potential(&mu.points, &domain)?;
    let d = build_diagram(&mu.points, &phi, &domain)?;
    let polys: Vec<ConvexPolygon> = d.cells.iter().map(|c| c.polygon.clone()).collect();
    let rho = densities(&polys, &mu.masses);
    let scale = ColorScale::density(cfg.flow.color_max.unwrap_or_else(|| max_of(&rho)));
    let mut out = OutDir::create(&cfg.out_dir)?;
    let cells: Vec<CellOut> = d
        .cells
        .iter()
        .enumerate()
        .map(|(p, c)| CellOut {
            site: mu.points[p],
            mass: mu.masses[p],
            area: c.polygon.area(),
            vertices: c.polygon.vertices().to_vec(),
        })
        .collect();
    write_json(&out.file("diagram.json".into()), &cells)?;
    write_points_csv(&out.file("points_0.csv".into()), &mu.points, &mu.masses)?;
    write_text(
        &out.file("snapshot_0.svg".into()),
        &svg_snapshot(&domain, &polys, &rho, &mu.points, &scale),
    )?;
    let total: f64 = d.areas().iter().sum();
    println!("diagram: {} cells, total area {total}", d.cells.len());
    finish(out, cfg, Some(scale))
}

fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    let (seed, n) = (cfg.seed, cfg.validate.instances);
    let suite = cfg.validate.suite;
    let mut reports: Vec<OracleReport> = Vec::new();
    if matches!(suite, Suite::Areas | Suite::All) {
        reports.extend(area_suite(seed, n)?);
    }
    if matches!(suite, Suite::Derivatives | Suite::All) {
        reports.extend(derivative_suite(seed, n)?);
    }
    if matches!(suite, Suite::Convexity | Suite::All) {
        reports.extend(convexity_suite(seed, n)?);
    }
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    println!("{json}");
    let mut out = OutDir::create(&cfg.out_dir)?;
    write_text(&out.file("validate.json".into()), &(json + "\n"))?;
    finish(out, cfg, None)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} oracle(s) failed: {}",
            failed.len(),
            failed.join(", ")
        )))
    }
}

fn flow_config(cfg: &RunConfig, domain: ConvexDomain) -> FlowConfig {
    FlowConfig {
        domain,
        tau: cfg.flow.tau,
        steps: cfg.flow.steps,
        internal: cfg.energy.internal.clone().expect("resolved"),
        potential: cfg.energy.potential.clone().expect("resolved"),
        mode: cfg.flow.mode.expect("resolved"),
        selection: cfg.flow.selection.expect("resolved"),
        solver: cfg.solver.clone(),
    }
}

#[derive(Serialize)]
struct StepOut {
    terms: jkoflow::energy::Terms,
    objective: f64,
    start_objective: f64,
    iterations: usize,
    grad_inf: f64,
    outer_rounds: usize,
    converged: bool,
}

fn jko_step(cfg: &RunConfig) -> Result<(), CliError> {
    let domain = cfg.domain.build()?;
    let mu = initial_measure(cfg, &domain)?;
    let fc = flow_config(cfg, domain.clone());
    if fc.mode == Mode::GridGradient {
        return Err(CliError::Config {
            key: "flow.mode".into(),
            message: "grid-gradient needs grid sites; use flow-crowd".into(),
        });
    }
    let mut pr = JkoProblem::new(
        mu.clone(),
        domain.clone(),
        fc.tau,
        fc.internal,
        fc.potential,
        fc.mode,
        fc.selection,
    )?;
    let phi0 = initial_potential(&mu.points, &domain)?;
    pr.freeze_selection(&phi0)?;
    let start = pr.evaluate(&phi0, Order::Value)?.value;
    let (phi, g, outer) = fixed_point_outer(&mut pr, &phi0, &cfg.solver)?;
    let eval = pr.evaluate(&phi, Order::Value)?;
    let last = outer.solves.last().expect("at least one round");
    let d = build_diagram(&mu.points, &phi, &domain)?;
    let polys: Vec<ConvexPolygon> = d.cells.iter().map(|c| c.polygon.clone()).collect();
    let rho = densities(&polys, &mu.masses);
    let scale = ColorScale::density(cfg.flow.color_max.unwrap_or_else(|| max_of(&rho)));
    let mut out = OutDir::create(&cfg.out_dir)?;
    let step = StepOut {
        terms: eval.terms,
        objective: eval.value,
        start_objective: start,
        iterations: outer.solves.iter().map(|s| s.iterations).sum(),
        grad_inf: last.grad_inf,
        outer_rounds: outer.rounds,
        converged: outer.converged,
    };
    write_json(&out.file("trace.json".into()), &step)?;
    let log = out.file("solver_log.jsonl".into());
    let mut buf = Vec::new();
    last.write_jsonl(&mut buf)?;
    std::fs::write(&log, buf).map_err(|source| CliError::Io {
        path: log.display().to_string(),
        source,
    })?;
    write_points_csv(&out.file("points_0.csv".into()), &mu.points, &mu.masses)?;
    write_points_csv(&out.file("points_1.csv".into()), &g, &mu.masses)?;
    write_text(
        &out.file("snapshot_0.svg".into()),
        &svg_snapshot(&domain, &polys, &rho, &mu.points, &scale),
    )?;
    println!(
        "jko-step: objective {} (start {start}), {} Newton iterations, |g| {:e}",
        eval.value, step.iterations, step.grad_inf
    );
    finish(out, cfg, Some(scale))?;
    if outer.converged {
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "selection fixed point not reached after {} rounds",
            outer.rounds
        )))
    }
}

#[derive(Serialize)]
struct StepSummary {
    step: usize,
    time: f64,
    transport: f64,
    potential: f64,
    internal: f64,
    objective: f64,
    start_objective: f64,
    energy: f64,
    descended: bool,
    min_area: f64,
    max_area: f64,
    iterations: usize,
    grad_inf: f64,
    outer_rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mass_error: Option<f64>,
}

impl StepSummary {
    fn new(r: &StepRecord, grid: Option<&Grid>) -> Self {
        let (max_density, mass_error) = match (grid, &r.grid) {
            (Some(g), Some(m)) => (
                Some(max_of(m) / g.pixel_area()),
                Some((m.iter().sum::<f64>() - 1.0).abs()),
            ),
            _ => (None, None),
        };
        Self {
            step: r.step,
            time: r.time,
            transport: r.terms.transport,
            potential: r.terms.potential,
            internal: r.terms.internal,
            objective: r.objective,
            start_objective: r.start_objective,
            energy: r.energy,
            descended: r.descended(),
            min_area: r.min_area,
            max_area: r.max_area,
            iterations: r.solve.iterations,
            grad_inf: r.solve.grad_inf,
            outer_rounds: r.solve.outer_rounds,
            max_density,
            mass_error,
        }
    }

    fn line(&self) -> String {
        let mut s = format!(
            "step {:>4} t={:.4} F={:.10} W/2τ={:.3e} iters={} |g|={:.1e}",
            self.step, self.time, self.energy, self.transport, self.iterations, self.grad_inf
        );
        if let (Some(d), Some(e)) = (self.max_density, self.mass_error) {
            s += &format!(" max_density={d:.6} mass_error={e:.1e}");
        }
        s
    }
}

#[derive(Serialize)]
struct TraceOut {
    initial_energy: f64,
    warnings: Vec<String>,
    failure: Option<String>,
    steps: Vec<StepSummary>,
}

fn trace_out(trace: &FlowTrace, grid: Option<&Grid>) -> TraceOut {
    TraceOut {
        initial_energy: trace.initial_energy,
        warnings: trace.warnings.clone(),
        failure: trace.failure.clone(),
        steps: trace.steps.iter().map(|r| StepSummary::new(r, grid)).collect(),
    }
}

fn snapshot_steps(n: usize, every: usize) -> impl Iterator<Item = usize> {
    (0..n).filter(move |k| k % every == 0 || *k + 1 == n)
}

fn flow_result(trace: &FlowTrace) -> Result<(), CliError> {
    match &trace.failure {
        Some(f) => Err(CliError::Solver(f.clone())),
        None => Ok(()),
    }
}

fn flow_diffusion(cfg: &RunConfig) -> Result<(), CliError> {
    let domain = cfg.domain.build()?;
    let mu = initial_measure(cfg, &domain)?;
    let fc = flow_config(cfg, domain.clone());
    if fc.mode == Mode::GridGradient {
        return Err(CliError::Config {
            key: "flow.mode".into(),
            message: "grid-gradient needs grid sites; use flow-crowd".into(),
        });
    }
    let trace = diffusion_flow_observed(&fc, mu, &mut |r| println!("{}", StepSummary::new(r, None).line()))?;
    for w in &trace.warnings {
        eprintln!("warning: {w}");
    }
    let mut out = OutDir::create(&cfg.out_dir)?;
    write_json(&out.file("trace.json".into()), &trace_out(&trace, None))?;
    for r in &trace.steps {
        write_points_csv(&out.file(format!("points_{}.csv", r.step)), &r.sites, &r.masses)?;
    }
    write_points_csv(
        &out.file(format!("points_{}.csv", trace.steps.len())),
        &trace.final_sites,
        &trace.final_masses,
    )?;
    let mut scale = cfg.flow.color_max.map(ColorScale::density);
    for k in snapshot_steps(trace.steps.len(), cfg.flow.snapshot_every) {
        let r = &trace.steps[k];
        let d = build_diagram(&r.sites, &r.phi, &domain)?;
        let polys: Vec<ConvexPolygon> = d.cells.iter().map(|c| c.polygon.clone()).collect();
        let rho = densities(&polys, &r.masses);
        let sc = *scale.get_or_insert_with(|| ColorScale::density(max_of(&rho)));
        write_text(
            &out.file(format!("snapshot_{k}.svg")),
            &svg_snapshot(&domain, &polys, &rho, &r.sites, &sc),
        )?;
    }
    finish(out, cfg, scale)?;
    flow_result(&trace)
}

fn flow_crowd(cfg: &RunConfig) -> Result<(), CliError> {
    let domain = cfg.domain.build()?;
    let crowd = CrowdConfig {
        flow: flow_config(cfg, domain.clone()),
        resolution: cfg.flow.resolution,
        vacuum: cfg.flow.vacuum,
    };
    let grid = crowd.grid()?;
    let [x0, x1, y0, y1] = cfg.flow.block;
    let block = ConvexPolygon::rectangle(Point2::new(x0, y0), Point2::new(x1, y1))?;
    let m0 = block_density(&grid, &block, cfg.flow.floor)?;
    let trace = crowd_flow_observed(&crowd, &m0, &mut |r| {
        println!("{}", StepSummary::new(r, Some(&grid)).line())
    })?;
    let mut out = OutDir::create(&cfg.out_dir)?;
    write_json(&out.file("trace.json".into()), &trace_out(&trace, Some(&grid)))?;
    let mut states = vec![m0.as_slice()];
    states.extend(
        trace
            .steps
            .iter()
            .map(|r| r.grid.as_deref().expect("crowd steps carry the grid")),
    );
    for (k, m) in states.iter().enumerate() {
        write_grid_csv(&out.file(format!("grid_{k}.csv")), &grid, m)?;
    }
    let scale = ColorScale::density(cfg.flow.color_max.unwrap_or(1.0));
    let pixels: Vec<ConvexPolygon> = (0..grid.len()).map(|k| grid.pixel(k)).collect();
    for k in snapshot_steps(states.len(), cfg.flow.snapshot_every) {
        let rho: Vec<f64> = states[k].iter().map(|m| m / grid.pixel_area()).collect();
        write_text(
            &out.file(format!("snapshot_{k}.svg")),
            &svg_snapshot(&domain, &pixels, &rho, &[], &scale),
        )?;
    }
    finish(out, cfg, Some(scale))?;
    flow_result(&trace)
}
