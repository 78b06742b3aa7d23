//! Run configuration: JSON file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use jkoflow::energy::{InternalEnergy, Mode, PotentialSpec, Selection};
use jkoflow::solver::SolveOptions;
use jkoflow::{ConvexDomain, ConvexPolygon, Point2};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Diagram,
    Validate,
    JkoStep,
    FlowDiffusion,
    FlowCrowd,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Diagram => "diagram",
            Self::Validate => "validate",
            Self::JkoStep => "jko-step",
            Self::FlowDiffusion => "flow-diffusion",
            Self::FlowCrowd => "flow-crowd",
        };
        f.write_str(s)
    }
}

/// Convex domain written as `square:<side>` (centered at the origin) or
/// `polygon:x,y;x,y;...` (counterclockwise).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DomainSpec {
    Square(f64),
    Polygon(Vec<Point2>),
}

impl DomainSpec {
    pub fn build(&self) -> jkoflow::Result<ConvexDomain> {
        match self {
            Self::Square(side) => ConvexDomain::square(*side),
            Self::Polygon(v) => ConvexDomain::new(ConvexPolygon::new(v.clone())?),
        }
    }
}

impl TryFrom<String> for DomainSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<DomainSpec> for String {
    fn from(d: DomainSpec) -> String {
        d.to_string()
    }
}

impl std::str::FromStr for DomainSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
        if let Some(side) = s.strip_prefix("square:") {
            return Ok(Self::Square(num(side)?));
        }
        if let Some(list) = s.strip_prefix("polygon:") {
            let pts = list
                .split(';')
                .map(|pair| {
                    let (x, y) = pair
                        .split_once(',')
                        .ok_or_else(|| format!("`{pair}` is not an x,y pair"))?;
                    Ok(Point2::new(num(x)?, num(y)?))
                })
                .collect::<Result<_, String>>()?;
            return Ok(Self::Polygon(pts));
        }
        Err(format!("`{s}` is neither square:<side> nor polygon:x,y;x,y;..."))
    }
}

impl fmt::Display for DomainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Square(side) => write!(f, "square:{side}"),
            Self::Polygon(v) => {
                let parts: Vec<String> = v.iter().map(|p| format!("{},{}", p.x, p.y)).collect();
                write!(f, "polygon:{}", parts.join(";"))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Uniform in the domain.
    Uniform,
    /// The self-similar porous-medium profile with `m = 2`.
    Barenblatt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointsSpec {
    pub n_points: usize,
    pub sampler: Sampler,
    /// Profile time of the Barenblatt sampler.
    pub barenblatt_t0: f64,
    /// CSV file with columns `x,y[,mass]`; overrides sampling.
    pub csv: Option<PathBuf>,
}

impl Default for PointsSpec {
    fn default() -> Self {
        Self {
            n_points: 100,
            sampler: Sampler::Uniform,
            barenblatt_t0: 0.08,
            csv: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergySpec {
    /// Defaults to the entropy, or to congestion with `β = 0.01` for the
    /// crowd flow.
    pub internal: Option<InternalEnergy>,
    /// Defaults to none, or to the crowd potential for the crowd flow.
    pub potential: Option<PotentialSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    pub tau: f64,
    pub steps: usize,
    /// Defaults to `selection` for diffusion and `grid-gradient` for crowds.
    pub mode: Option<Mode>,
    pub selection: Option<Selection>,
    /// Crowd grid pixels per side.
    pub resolution: usize,
    /// Crowd initial state: unit density on `block` = `[x0, x1, y0, y1]`
    /// over a background density `floor`, normalized.
    pub block: [f64; 4],
    pub floor: f64,
    /// Crowd pixels below this density stay in place for a step.
    pub vacuum: f64,
    /// Write an SVG snapshot every this many steps (and after the last).
    pub snapshot_every: usize,
    /// Upper end of the density color scale; defaults to the largest
    /// initial density.
    pub color_max: Option<f64>,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            tau: 0.01,
            steps: 10,
            mode: None,
            selection: None,
            resolution: 40,
            block: [-1.8, -0.8, -0.8, 0.8],
            floor: 1e-3,
            vacuum: 1e-6,
            snapshot_every: 10,
            color_max: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Areas,
    Derivatives,
    Convexity,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSpec {
    pub suite: Suite,
    pub instances: usize,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        Self {
            suite: Suite::All,
            instances: 10,
        }
    }
}

/// Full run configuration. Every section is optional in the JSON file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub domain: DomainSpec,
    pub points: PointsSpec,
    pub energy: EnergySpec,
    pub solver: SolveOptions,
    pub flow: FlowSpec,
    pub validate: ValidateSpec,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 1,
            domain: DomainSpec::Square(4.0),
            points: PointsSpec::default(),
            energy: EnergySpec::default(),
            solver: SolveOptions::default(),
            flow: FlowSpec::default(),
            validate: ValidateSpec::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses a JSON config, naming the offending key on failure.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            CliError::Config {
                key,
                message: e.into_inner().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            key: "--config".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    /// Fills command-dependent defaults and checks every value, naming the
    /// offending key on failure.
    pub fn resolve(mut self, command: Command) -> Result<Self, CliError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(bad("command", format!("config is for `{c}` but `{command}` was run")));
            }
        }
        self.command = Some(command);
        let crowd = command == Command::FlowCrowd;
        self.energy.internal.get_or_insert(if crowd {
            InternalEnergy::Congestion { alpha: 1.0, beta: 0.01 }
        } else {
            InternalEnergy::Entropy
        });
        self.energy.potential.get_or_insert_with(|| {
            if crowd {
                PotentialSpec::crowd()
            } else {
                PotentialSpec::default()
            }
        });
        self.flow
            .mode
            .get_or_insert(if crowd { Mode::GridGradient } else { Mode::Selection });
        self.flow
            .selection
            .get_or_insert(if crowd { Selection::Centroid } else { Selection::Steiner });
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<(), CliError> {
        let domain = self.domain.build().map_err(|e| bad("domain", e.to_string()))?;
        if self.points.csv.is_none() && self.points.n_points == 0 {
            return Err(bad("points.n_points", "at least one point is required".into()));
        }
        if !(self.points.barenblatt_t0 > 0.0) {
            return Err(bad("points.barenblatt_t0", "must be positive".into()));
        }
        let internal = self.energy.internal.as_ref().expect("resolved");
        internal.validate().map_err(|e| bad("energy.internal", e.to_string()))?;
        let potential = self.energy.potential.as_ref().expect("resolved");
        potential
            .validate()
            .map_err(|e| bad("energy.potential", e.to_string()))?;
        if potential.has_interaction() {
            return Err(bad(
                "energy.potential.interaction",
                "not supported in the step objective".into(),
            ));
        }
        self.solver.validate().map_err(|e| bad("solver", e.to_string()))?;
        let f = &self.flow;
        if !(f.tau > 0.0) || !f.tau.is_finite() {
            return Err(bad("flow.tau", format!("must be positive, got {}", f.tau)));
        }
        if f.steps == 0 {
            return Err(bad("flow.steps", "at least one step is required".into()));
        }
        if f.snapshot_every == 0 {
            return Err(bad("flow.snapshot_every", "must be at least 1".into()));
        }
        if let Some(c) = f.color_max {
            if !(c > 0.0) {
                return Err(bad("flow.color_max", "must be positive".into()));
            }
        }
        let command = self.command.expect("resolved");
        if command == Command::FlowDiffusion {
            if let InternalEnergy::Power { m } = internal {
                if *m < 0.5 {
                    return Err(bad(
                        "energy.internal.m",
                        format!("must be at least 1/2 in the plane, got {m}"),
                    ));
                }
            }
        }
        if command == Command::FlowCrowd {
            if f.resolution < 3 {
                return Err(bad("flow.resolution", "at least 3 pixels per side are required".into()));
            }
            let [x0, x1, y0, y1] = f.block;
            if !(x1 > x0 && y1 > y0) {
                return Err(bad(
                    "flow.block",
                    "expected [x0, x1, y0, y1] with x0 < x1 and y0 < y1".into(),
                ));
            }
            if !(f.floor > 0.0 && f.floor < 1.0) {
                return Err(bad("flow.floor", "must lie in (0, 1)".into()));
            }
            if !(0.0..1.0).contains(&f.vacuum) || f.vacuum >= f.floor {
                return Err(bad("flow.vacuum", "must lie in [0, flow.floor)".into()));
            }
            let (lo, hi) = domain.bounding_box();
            if ((hi.x - lo.x) * (hi.y - lo.y) - domain.area()).abs() > 1e-12 * domain.area() {
                return Err(bad("domain", "the crowd flow needs an axis-aligned rectangle".into()));
            }
        }
        if self.validate.instances == 0 {
            return Err(bad("validate.instances", "at least one instance is required".into()));
        }
        Ok(())
    }
}

fn bad(key: &str, message: String) -> CliError {
    CliError::Config {
        key: key.into(),
        message,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_round_trip() {
        for s in ["square:4", "polygon:0,0;1,0;0,1"] {
            let d: DomainSpec = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("circle:1".parse::<DomainSpec>().is_err());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_json(r#"{"flow": {"tua": 0.1}}"#).unwrap_err();
        match e {
            CliError::Config { key, message } => {
                assert_eq!(key, "flow.tua");
                assert!(message.contains("tua"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_value_is_named() {
        let cfg = RunConfig::from_json(r#"{"flow": {"tau": -1}}"#).unwrap();
        match cfg.resolve(Command::FlowDiffusion).unwrap_err() {
            CliError::Config { key, .. } => assert_eq!(key, "flow.tau"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crowd_defaults() {
        let cfg = RunConfig::default().resolve(Command::FlowCrowd).unwrap();
        assert_eq!(cfg.flow.mode, Some(Mode::GridGradient));
        assert_eq!(cfg.energy.potential, Some(PotentialSpec::crowd()));
    }
}
