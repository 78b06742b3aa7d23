//! Internal energy densities `U` and the McCann condition check.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Scalar;

/// User-supplied density: returns `(U(r), U'(r), U''(r))`.
#[derive(Clone)]
pub struct CustomEnergy {
    pub name: String,
    pub eval: Arc<dyn Fn(f64) -> (f64, f64, f64) + Send + Sync>,
    pub superlinear: bool,
}

impl fmt::Debug for CustomEnergy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomEnergy")
            .field("name", &self.name)
            .field("superlinear", &self.superlinear)
            .finish()
    }
}

/// Internal energy density.
///
/// * `Power { m }`: `U(r) = r^m / (m − 1)`, the entropy when `m = 1`.
/// * `Entropy`: `U(r) = r log r`.
/// * `Congestion { alpha, beta }`: `β·r^α·(−log(1 − √r))`, infinite for
///   `r ≥ 1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InternalEnergy {
    Power {
        m: f64,
    },
    Entropy,
    Congestion {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "one")]
        beta: f64,
    },
    #[serde(skip)]
    Custom(CustomEnergy),
}

fn one() -> f64 {
    1.0
}

impl InternalEnergy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Power { m } if !(m > 0.0) || !m.is_finite() => {
                Err(Error::InvalidInput(format!("power exponent must be positive, got {m}")))
            }
            Self::Congestion { alpha, beta }
                if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() =>
            {
                Err(Error::InvalidInput(format!(
                    "congestion needs positive alpha and beta, got {alpha}, {beta}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Superlinear growth at infinity, which makes the energy a barrier.
    pub fn is_superlinear(&self) -> bool {
        match self {
            Self::Power { m } => *m > 1.0,
            Self::Entropy => true,
            Self::Congestion { .. } => true,
            Self::Custom(c) => c.superlinear,
        }
    }

    fn is_entropy(&self) -> bool {
        matches!(self, Self::Entropy) || matches!(self, Self::Power { m } if *m == 1.0)
    }

    /// `U(r)`; `+∞` outside the domain of a congestion energy.
    pub fn density(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        match self {
            Self::Custom(c) => (c.eval)(r).0,
            _ => self.density_generic(r),
        }
    }

    fn density_generic<S: Scalar>(&self, r: S) -> S {
        match self {
            _ if self.is_entropy() => r * r.ln(),
            Self::Power { m } => r.powf(*m) / (m - 1.0),
            Self::Congestion { alpha, beta } => {
                if r.value() >= 1.0 {
                    S::cst(f64::INFINITY)
                } else {
                    -(r.powf(*alpha) * (-(r.sqrt()) + 1.0).ln()) * *beta
                }
            }
            Self::Custom(c) => {
                let (f, df, d2f) = (c.eval)(r.value());
                r.apply(f, df, d2f)
            }
            Self::Entropy => unreachable!(),
        }
    }

    /// Contribution `A·U(μ/A)` of one cell of area `area` carrying mass `mass`.
    /// The entropy uses `−μ log A`, which differs from `A·U(μ/A)` by the
    /// constant `μ log μ`.
    pub fn cell_term<S: Scalar>(&self, mass: f64, area: S) -> S {
        if self.is_entropy() {
            return -(area.ln() * mass);
        }
        let r = area.powf(-1.0) * mass;
        area * self.density_generic(r)
    }
}

/// Outcome of the McCann condition check for `g(r) = r² U(r⁻²)`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct McCannReport {
    pub monotone: bool,
    pub convex: bool,
    pub worst_monotonicity: f64,
    pub worst_convexity: f64,
    pub samples: usize,
}

impl McCannReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.convex
    }
}

/// Log-spaced grid on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

/// Checks that `g(r) = r² U(r⁻²)` is non-increasing and midpoint convex on
/// the finite part of `grid`.
pub fn mccann_check(u: &InternalEnergy, grid: &[f64]) -> McCannReport {
    let g = |r: f64| {
        let v = r * r * u.density(1.0 / (r * r));
        if u.is_entropy() {
            // r² · r⁻² log r⁻² without cancellation.
            -2.0 * r.ln()
        } else {
            v
        }
    };
    let pts: Vec<(f64, f64)> = grid.iter().map(|&r| (r, g(r))).filter(|(_, v)| v.is_finite()).collect();
    let mut report = McCannReport {
        monotone: true,
        convex: true,
        samples: pts.len(),
        ..Default::default()
    };
    for w in pts.windows(2) {
        let (_, g0) = w[0];
        let (_, g1) = w[1];
        let rise = g1 - g0;
        let tol = 1e-12 * (1.0 + g0.abs());
        if rise > tol {
            report.monotone = false;
        }
        report.worst_monotonicity = report.worst_monotonicity.max(rise);
    }
    let n = pts.len();
    let mut stride = 1;
    while stride < n {
        for i in 0..n.saturating_sub(stride) {
            let (a, ga) = pts[i];
            let (b, gb) = pts[i + stride];
            let gm = g(0.5 * (a + b));
            if !gm.is_finite() {
                continue;
            }
            let excess = gm - 0.5 * (ga + gb);
            let tol = 1e-12 * (1.0 + ga.abs() + gb.abs());
            if excess > tol {
                report.convex = false;
            }
            report.worst_convexity = report.worst_convexity.max(excess);
        }
        stride *= 2;
    }
    report
}
