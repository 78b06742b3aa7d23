//! The per-step objective `W²(μ, ·)/2τ + E + U` as a function of `φ`.

use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::cellcalc::{cell_quantities, cell_values, CellQuantities, NQ, Q_AREA, Q_MX, Q_MY, Q_POT, Q_SECOND};
use crate::error::{Error, Result};
use crate::geom2d::{ConvexDomain, Point2};
use crate::jet::{Jet, Scalar};
use crate::laguerre::{build_diagram, LaguerreDiagram};
use crate::ma::diagram_is_interior;
use crate::raster::Grid;

use super::internal::InternalEnergy;
use super::potential::PotentialSpec;
use super::DiscreteMeasure;

/// How the transport and potential terms depend on `φ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Through the spread-out density `μ_p / A_p` on each cell.
    #[default]
    Ac,
    /// Through one selected point per cell: the centroid plus a per-site
    /// offset that is frozen during each Newton solve.
    Selection,
    /// Through finite-difference gradients of `φ` on a grid of sites, a
    /// linear function of `φ`.
    GridGradient,
}

/// Linear map from `φ` on the pixel centers of a grid to one gradient per
/// site: central differences inside, second-order one-sided differences
/// on the border. Exact for quadratics.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientStencil {
    /// Per site, the `(site, weight)` rows of the x and y components.
    rows: Vec<[Vec<(usize, f64)>; 2]>,
}

impl GradientStencil {
    pub fn grid(grid: &Grid) -> Result<Self> {
        Self::masked(grid, &vec![true; grid.len()])
    }

    /// Stencil over the active pixels only, indexed by their rank among
    /// the active pixels. Central differences where both neighbours are
    /// active, one-sided differences otherwise.
    pub fn masked(grid: &Grid, active: &[bool]) -> Result<Self> {
        if grid.nx < 3 || grid.ny < 3 {
            return Err(Error::InvalidInput(
                "gradient stencil needs at least 3 pixels per direction".into(),
            ));
        }
        if active.len() != grid.len() {
            return Err(Error::InvalidInput("activity mask does not match the grid".into()));
        }
        let mut rank = vec![usize::MAX; grid.len()];
        let mut n = 0;
        for (k, a) in active.iter().enumerate() {
            if *a {
                rank[k] = n;
                n += 1;
            }
        }
        // Offsets along one axis; `at(d)` is the active rank at offset d.
        let diff = |at: &dyn Fn(isize) -> Option<usize>, h: f64| -> Option<Vec<(usize, f64)>> {
            let (m2, m1, p1, p2) = (at(-2), at(-1), at(1), at(2));
            let c = at(0)?;
            Some(match (m2, m1, p1, p2) {
                (_, Some(a), Some(b), _) => vec![(b, 0.5 / h), (a, -0.5 / h)],
                (_, _, Some(b), Some(e)) => vec![(c, -1.5 / h), (b, 2.0 / h), (e, -0.5 / h)],
                (Some(e), Some(a), _, _) => vec![(c, 1.5 / h), (a, -2.0 / h), (e, 0.5 / h)],
                (_, _, Some(b), None) => vec![(c, -1.0 / h), (b, 1.0 / h)],
                (_, Some(a), None, _) => vec![(c, 1.0 / h), (a, -1.0 / h)],
                _ => return None,
            })
        };
        let mut rows = Vec::with_capacity(n);
        for k in (0..grid.len()).filter(|k| active[*k]) {
            let (i, j) = ((k % grid.nx) as isize, (k / grid.nx) as isize);
            let pick = |a: isize, b: isize| -> Option<usize> {
                let inside = a >= 0 && b >= 0 && (a as usize) < grid.nx && (b as usize) < grid.ny;
                inside
                    .then(|| rank[grid.index(a as usize, b as usize)])
                    .filter(|r| *r != usize::MAX)
            };
            let x = diff(&|d| pick(i + d, j), grid.dx());
            let y = diff(&|d| pick(i, j + d), grid.dy());
            match (x, y) {
                (Some(x), Some(y)) => rows.push([x, y]),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "active pixel {k} has no active neighbour along one axis"
                    )))
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<Point2> {
        let dot = |r: &[(usize, f64)]| r.iter().map(|&(s, w)| w * phi[s]).sum::<f64>();
        self.rows.iter().map(|[x, y]| Point2::new(dot(x), dot(y))).collect()
    }
}

/// Point chosen in each cell to receive its mass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    #[default]
    Steiner,
    Centroid,
}

impl Selection {
    pub fn select(self, diagram: &LaguerreDiagram) -> Result<Vec<Point2>> {
        diagram
            .cells
            .iter()
            .map(|c| match self {
                Self::Steiner => c.polygon.steiner_point(),
                Self::Centroid => c.polygon.centroid(),
            })
            .collect()
    }
}

/// Requested derivative order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Objective value split into its three terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Terms {
    /// Squared transport cost divided by `2τ`.
    pub transport: f64,
    pub potential: f64,
    pub internal: f64,
}

#[derive(Clone, Debug)]
pub struct ObjectiveEval {
    pub value: f64,
    pub terms: Terms,
    pub gradient: Option<Vec<f64>>,
    pub hessian: Option<CsMat<f64>>,
}

impl ObjectiveEval {
    fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            terms: Terms {
                transport: f64::INFINITY,
                potential: f64::INFINITY,
                internal: f64::INFINITY,
            },
            gradient: None,
            hessian: None,
        }
    }
}

/// Smooth function of `φ ∈ R^n` minimized by the Newton solver.
pub trait Objective {
    fn dim(&self) -> usize;
    /// Returns `+∞` without derivatives outside the domain of definition.
    fn evaluate(&self, phi: &[f64], order: Order) -> Result<ObjectiveEval>;
}

/// One minimizing-movement step from the discrete measure `mu`.
#[derive(Clone, Debug)]
pub struct JkoProblem {
    pub mu: DiscreteMeasure,
    pub domain: ConvexDomain,
    pub tau: f64,
    pub internal: InternalEnergy,
    pub potential: PotentialSpec,
    pub mode: Mode,
    /// Point receiving each mass in selection mode.
    pub selection: Selection,
    /// Frozen selected point minus centroid, per site.
    pub offsets: Vec<Point2>,
    /// Gradient map of the grid-gradient mode.
    pub stencil: Option<GradientStencil>,
}

impl JkoProblem {
    pub fn new(
        mu: DiscreteMeasure,
        domain: ConvexDomain,
        tau: f64,
        internal: InternalEnergy,
        potential: PotentialSpec,
        mode: Mode,
        selection: Selection,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {tau}")));
        }
        internal.validate()?;
        potential.validate()?;
        if potential.has_interaction() {
            return Err(Error::InvalidInput(
                "pairwise interaction is only available in energy evaluation, not in the step objective".into(),
            ));
        }
        let n = mu.len();
        Ok(Self {
            mu,
            domain,
            tau,
            internal,
            potential,
            mode,
            selection,
            offsets: vec![Point2::default(); n],
            stencil: None,
        })
    }

    /// Attaches the gradient map used by the grid-gradient mode.
    pub fn with_stencil(mut self, stencil: GradientStencil) -> Result<Self> {
        if stencil.len() != self.mu.len() {
            return Err(Error::InvalidInput(
                "gradient stencil does not match the site count".into(),
            ));
        }
        self.stencil = Some(stencil);
        Ok(self)
    }

    /// Freezes the offsets so that the objective sees the true selection at
    /// `phi`, and returns the selected points.
    pub fn freeze_selection(&mut self, phi: &[f64]) -> Result<Vec<Point2>> {
        let d = build_diagram(&self.mu.points, phi, &self.domain)?;
        if !diagram_is_interior(&d) {
            return Err(Error::NotInterior("cannot select points in empty cells".into()));
        }
        let g = self.selection.select(&d)?;
        self.offsets = d
            .cells
            .iter()
            .zip(&g)
            .map(|(c, g)| Ok(*g - c.polygon.centroid()?))
            .collect::<Result<_>>()?;
        Ok(g)
    }

    /// True selected points of the cells at `phi`, ignoring the offsets.
    pub fn selected_points(&self, phi: &[f64]) -> Result<Vec<Point2>> {
        let d = build_diagram(&self.mu.points, phi, &self.domain)?;
        if !diagram_is_interior(&d) {
            return Err(Error::NotInterior("cannot select points in empty cells".into()));
        }
        self.selection.select(&d)
    }

    fn uses_potential_integral(&self) -> bool {
        self.mode == Mode::Ac && !self.potential.is_zero()
    }

    /// Per-site terms as a function of the cell quantities.
    fn site_terms<S: Scalar>(&self, p: usize, q: [S; NQ]) -> [S; 3] {
        let m = self.mu.masses[p];
        let area = q[Q_AREA];
        let internal = self.internal.cell_term(m, area);
        match self.mode {
            Mode::Ac => {
                let w = q[Q_SECOND] / area * (m / (2.0 * self.tau));
                let e = if self.uses_potential_integral() {
                    q[Q_POT] / area * m
                } else {
                    S::cst(0.0)
                };
                [w, e, internal]
            }
            Mode::Selection => {
                let gx = q[Q_MX] / area + self.offsets[p].x;
                let gy = q[Q_MY] / area + self.offsets[p].y;
                let [w, e] = self.point_terms(p, gx, gy);
                [w, e, internal]
            }
            Mode::GridGradient => [S::cst(0.0), S::cst(0.0), internal],
        }
    }

    /// Transport and potential terms of site `p` moved to `(gx, gy)`.
    fn point_terms<S: Scalar>(&self, p: usize, gx: S, gy: S) -> [S; 2] {
        let m = self.mu.masses[p];
        let site = self.mu.points[p];
        let dx = gx - site.x;
        let dy = gy - site.y;
        let w = (dx * dx + dy * dy) * (m / (2.0 * self.tau));
        let e = if self.potential.is_zero() {
            S::cst(0.0)
        } else {
            self.potential.eval(gx, gy) * m
        };
        [w, e]
    }

    /// Adds the stencil-based transport and potential terms.
    fn add_stencil_terms(
        &self,
        phi: &[f64],
        order: Order,
        terms: &mut Terms,
        grad: &mut [f64],
        tri: &mut TriMat<f64>,
    ) -> Result<()> {
        let stencil = self
            .stencil
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("grid-gradient mode needs a gradient stencil".into()))?;
        for (p, g) in stencil.apply(phi).into_iter().enumerate() {
            if order == Order::Value {
                let [w, e] = self.point_terms(p, g.x, g.y);
                terms.transport += w;
                terms.potential += e;
                continue;
            }
            let [w, e] = self.point_terms(p, Jet::<2>::var(g.x, 0), Jet::<2>::var(g.y, 1));
            terms.transport += w.v;
            terms.potential += e.v;
            let f = w + e;
            let rows = &stencil.rows[p];
            for (i, row) in rows.iter().enumerate() {
                for &(s, c) in row {
                    grad[s] += f.g[i] * c;
                }
            }
            if order == Order::Hessian {
                for (i, ri) in rows.iter().enumerate() {
                    for (j, rj) in rows.iter().enumerate() {
                        for &(s, a) in ri {
                            for &(t, b) in rj {
                                tri.add_triplet(s, t, f.h[i][j] * a * b);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn evaluate_diagram(&self, d: &LaguerreDiagram, phi: &[f64], order: Order) -> Result<ObjectiveEval> {
        let n = self.dim();
        let pot = self.uses_potential_integral().then_some(&self.potential);
        let mut terms = Terms::default();
        let mut grad = vec![0.0; if order >= Order::Gradient { n } else { 0 }];
        let mut tri = TriMat::new((n, n));
        for p in 0..n {
            if order == Order::Value {
                let v = cell_values(d.cells[p].polygon.vertices(), self.mu.points[p], pot);
                let [w, e, u] = self.site_terms(p, v);
                terms.transport += w;
                terms.potential += e;
                terms.internal += u;
                continue;
            }
            let cq = cell_quantities(d, &self.mu.points, phi, &self.domain, p, pot, order == Order::Hessian)?;
            let vars: [Jet<NQ>; NQ] = std::array::from_fn(|i| Jet::var(cq.values[i], i));
            let [w, e, u] = self.site_terms(p, vars);
            terms.transport += w.v;
            terms.potential += e.v;
            terms.internal += u.v;
            let f = w + e + u;
            if !f.v.is_finite() {
                return Ok(ObjectiveEval::infinite());
            }
            accumulate(&cq, &f, &mut grad, (order == Order::Hessian).then_some(&mut tri));
        }
        if self.mode == Mode::GridGradient {
            self.add_stencil_terms(phi, order, &mut terms, &mut grad, &mut tri)?;
        }
        let value = terms.transport + terms.potential + terms.internal;
        if !value.is_finite() {
            return Ok(ObjectiveEval::infinite());
        }
        Ok(ObjectiveEval {
            value,
            terms,
            gradient: (order >= Order::Gradient).then_some(grad),
            hessian: (order == Order::Hessian).then(|| tri.to_csr()),
        })
    }
}

/// Chain rule from the quantity derivatives of one cell into global arrays.
fn accumulate(cq: &CellQuantities, f: &Jet<NQ>, grad: &mut [f64], tri: Option<&mut TriMat<f64>>) {
    let nl = cq.len();
    for (a, ga) in cq.grads.iter().enumerate() {
        grad[cq.sites[a]] += (0..NQ).map(|i| f.g[i] * ga[i]).sum::<f64>();
    }
    let Some(tri) = tri else { return };
    for a in 0..nl {
        for b in 0..nl {
            let mut h = 0.0;
            for i in 0..NQ {
                h += f.g[i] * cq.h(a, b, i);
                let gai = cq.grads[a][i];
                if gai != 0.0 {
                    for j in 0..NQ {
                        h += f.h[i][j] * gai * cq.grads[b][j];
                    }
                }
            }
            if h != 0.0 {
                tri.add_triplet(cq.sites[a], cq.sites[b], h);
            }
        }
    }
}

impl Objective for JkoProblem {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn evaluate(&self, phi: &[f64], order: Order) -> Result<ObjectiveEval> {
        if phi.len() != self.dim() {
            return Err(Error::InvalidInput("potential length differs from site count".into()));
        }
        let d = build_diagram(&self.mu.points, phi, &self.domain)?;
        if !diagram_is_interior(&d) {
            return Ok(ObjectiveEval::infinite());
        }
        self.evaluate_diagram(&d, phi, order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(mode: Mode, tau: f64) -> JkoProblem {
        let mu = DiscreteMeasure::uniform(vec![
            Point2::new(-0.5, 0.1),
            Point2::new(0.4, -0.2),
            Point2::new(0.1, 0.6),
        ])
        .unwrap();
        JkoProblem::new(
            mu,
            ConvexDomain::square(2.0).unwrap(),
            tau,
            InternalEnergy::Entropy,
            PotentialSpec::crowd(),
            mode,
            Selection::Steiner,
        )
        .unwrap()
    }

    #[test]
    fn large_step_leaves_energy_terms() {
        let phi = [0.1, 0.0, -0.05];
        for mode in [Mode::Ac, Mode::Selection] {
            let small = problem(mode, 0.1).evaluate(&phi, Order::Value).unwrap();
            let big = problem(mode, 1e12).evaluate(&phi, Order::Value).unwrap();
            assert!(big.terms.transport < 1e-11);
            assert_eq!(big.terms.potential, small.terms.potential);
            assert_eq!(big.terms.internal, small.terms.internal);
        }
    }

    #[test]
    fn value_paths_agree() {
        let phi = [0.1, 0.0, -0.05];
        for mode in [Mode::Ac, Mode::Selection] {
            let pr = problem(mode, 0.3);
            let v = pr.evaluate(&phi, Order::Value).unwrap().value;
            let h = pr.evaluate(&phi, Order::Hessian).unwrap().value;
            assert_eq!(v, h);
        }
    }

    #[test]
    fn gauge_invariance() {
        let phi = [0.1, 0.0, -0.05];
        let shifted: Vec<f64> = phi.iter().map(|v| v + 0.7).collect();
        let pr = problem(Mode::Ac, 0.3);
        let a = pr.evaluate(&phi, Order::Gradient).unwrap();
        let b = pr.evaluate(&shifted, Order::Gradient).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        let g = a.gradient.unwrap();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(g.iter().sum::<f64>().abs() <= 1e-9 * norm.max(1e-300));
    }

    #[test]
    fn stencil_exact_for_quadratics() {
        let grid = Grid::new(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0), 5, 4).unwrap();
        let st = GradientStencil::grid(&grid).unwrap();
        let f = |p: Point2| 0.3 * p.x * p.x - 0.2 * p.x * p.y + 0.7 * p.y * p.y + p.x - 2.0 * p.y;
        let phi: Vec<f64> = grid.centers().into_iter().map(f).collect();
        for (p, g) in grid.centers().into_iter().zip(st.apply(&phi)) {
            let exact = Point2::new(0.6 * p.x - 0.2 * p.y + 1.0, -0.2 * p.x + 1.4 * p.y - 2.0);
            assert!((g - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn masked_stencil_exact_for_affine() {
        let grid = Grid::new(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0), 6, 5).unwrap();
        let mut active = vec![true; grid.len()];
        for k in [0, 3, 9, 14] {
            active[k] = false;
        }
        let st = GradientStencil::masked(&grid, &active).unwrap();
        let centers: Vec<Point2> = grid
            .centers()
            .into_iter()
            .zip(&active)
            .filter(|(_, a)| **a)
            .map(|(p, _)| p)
            .collect();
        assert_eq!(st.len(), centers.len());
        let phi: Vec<f64> = centers.iter().map(|p| 0.4 * p.x - 1.3 * p.y + 2.0).collect();
        for g in st.apply(&phi) {
            assert!((g - Point2::new(0.4, -1.3)).norm() < 1e-12);
        }
    }

    #[test]
    fn masked_stencil_rejects_isolated_pixels() {
        let grid = Grid::new(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0), 3, 3).unwrap();
        let mut active = vec![false; 9];
        active[4] = true;
        active[1] = true;
        assert!(GradientStencil::masked(&grid, &active).is_err());
    }

    #[test]
    fn grid_gradient_identity_has_no_transport() {
        let grid = Grid::new(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0), 4, 4).unwrap();
        let mu = DiscreteMeasure::uniform(grid.centers()).unwrap();
        let pr = JkoProblem::new(
            mu,
            ConvexDomain::square(2.0).unwrap(),
            0.1,
            InternalEnergy::Entropy,
            PotentialSpec::default(),
            Mode::GridGradient,
            Selection::Centroid,
        )
        .unwrap()
        .with_stencil(GradientStencil::grid(&grid).unwrap())
        .unwrap();
        let phi: Vec<f64> = grid.centers().iter().map(|p| 0.5 * p.norm2()).collect();
        let e = pr.evaluate(&phi, Order::Gradient).unwrap();
        assert!(e.terms.transport < 1e-28);
        assert!(e.gradient.unwrap().iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn grid_gradient_needs_stencil() {
        let pr = problem(Mode::GridGradient, 0.3);
        assert!(pr.evaluate(&[0.1, 0.0, -0.05], Order::Value).is_err());
    }

    #[test]
    fn empty_cell_gives_infinity() {
        let pr = problem(Mode::Ac, 0.3);
        let e = pr.evaluate(&[0.0, 0.0, 50.0], Order::Hessian).unwrap();
        assert_eq!(e.value, f64::INFINITY);
        assert!(e.gradient.is_none() && e.hessian.is_none());
    }
}
