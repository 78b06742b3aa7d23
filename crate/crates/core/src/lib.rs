//! Wasserstein gradient flows in the plane discretized through clipped
//! Laguerre cells and the associated discrete Monge-Ampère operator.

pub mod cellcalc;
pub mod energy;
pub mod error;
pub mod flows;
pub mod geom2d;
pub mod jet;
pub mod laguerre;
pub mod ma;
pub mod predicates;
pub mod raster;
pub mod solver;
pub mod triangulation;
pub mod validate;

pub use error::{Error, Result};
pub use geom2d::{ConvexDomain, ConvexPolygon, HalfPlane, Point2};
