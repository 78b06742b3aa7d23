//! External potential `V` and optional pairwise interaction `W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom2d::Point2;
use crate::jet::Scalar;

/// `w·‖x − center‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticWell {
    pub weight: f64,
    pub center: Point2,
}

/// `amplitude·exp(−rate·‖x − center‖²/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBump {
    pub amplitude: f64,
    pub rate: f64,
    pub center: Point2,
}

/// Interaction `W(x, y) = weight·‖x − y‖²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticInteraction {
    pub weight: f64,
}

/// Closed-form potential: a quadratic well plus Gaussian bumps, and an
/// optional quadratic interaction. Convexity is not required.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub quadratic: Option<QuadraticWell>,
    #[serde(default)]
    pub bumps: Vec<GaussianBump>,
    #[serde(default)]
    pub interaction: Option<QuadraticInteraction>,
}

impl PotentialSpec {
    /// `V(x) = ‖x − (2, 0)‖² + 5·exp(−5‖x‖²/2)`, a semi-convex well with a
    /// repulsive bump at the origin.
    pub fn crowd() -> Self {
        Self {
            quadratic: Some(QuadraticWell {
                weight: 1.0,
                center: Point2::new(2.0, 0.0),
            }),
            bumps: vec![GaussianBump {
                amplitude: 5.0,
                rate: 5.0,
                center: Point2::new(0.0, 0.0),
            }],
            interaction: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |p: Point2| p.is_finite();
        let ok = self
            .quadratic
            .map_or(true, |q| q.weight.is_finite() && finite(q.center))
            && self
                .bumps
                .iter()
                .all(|b| b.amplitude.is_finite() && b.rate.is_finite() && finite(b.center))
            && self.interaction.map_or(true, |w| w.weight.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("potential parameters must be finite".into()))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.quadratic.map_or(true, |q| q.weight == 0.0)
            && self.bumps.iter().all(|b| b.amplitude == 0.0)
            && self.interaction.map_or(true, |w| w.weight == 0.0)
    }

    pub fn has_interaction(&self) -> bool {
        self.interaction.map_or(false, |w| w.weight != 0.0)
    }

    /// Evaluates `V` at `(x, y)` for any scalar type.
    pub fn eval<S: Scalar>(&self, x: S, y: S) -> S {
        let mut v = S::cst(0.0);
        if let Some(q) = self.quadratic {
            let dx = x - q.center.x;
            let dy = y - q.center.y;
            v = v + (dx * dx + dy * dy) * q.weight;
        }
        for b in &self.bumps {
            let dx = x - b.center.x;
            let dy = y - b.center.y;
            v = v + ((dx * dx + dy * dy) * (-0.5 * b.rate)).exp() * b.amplitude;
        }
        v
    }

    pub fn value(&self, p: Point2) -> f64 {
        self.eval(p.x, p.y)
    }

    pub fn interaction_value(&self, a: Point2, b: Point2) -> f64 {
        self.interaction.map_or(0.0, |w| w.weight * (a - b).norm2())
    }
}
