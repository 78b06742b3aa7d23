//! Integrals over clipped cells and their derivatives with respect to `φ`.
//!
//! Each cell is split into signed triangles `(p, v_i, v_{i+1})` around its
//! site `p`, which does not move with `φ`, so every triangle depends on two
//! consecutive vertices only. Vertex positions are locally affine in `φ`, so second derivatives
//! come from the triangle Hessians pulled back through the vertex Jacobians.

use crate::energy::potential::PotentialSpec;
use crate::error::Result;
use crate::geom2d::{ConvexDomain, Point2};
use crate::jet::{Jet, Scalar};
use crate::laguerre::{LaguerreDiagram, Node};
use crate::ma::vertex_derivative;

pub const Q_AREA: usize = 0;
/// `∫ ‖x − p‖² dx` about the site `p`.
pub const Q_SECOND: usize = 1;
pub const Q_MX: usize = 2;
pub const Q_MY: usize = 3;
/// `∫ V dx`.
pub const Q_POT: usize = 4;
pub const NQ: usize = 5;

/// Degree-5 seven-point triangle rule: barycentric coordinates and weights.
const DUNAVANT5: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    (
        [0.059715871789770, 0.470142064105115, 0.470142064105115],
        0.132394152788506,
    ),
    (
        [0.470142064105115, 0.059715871789770, 0.470142064105115],
        0.132394152788506,
    ),
    (
        [0.470142064105115, 0.470142064105115, 0.059715871789770],
        0.132394152788506,
    ),
    (
        [0.797426985353087, 0.101286507323456, 0.101286507323456],
        0.125939180544827,
    ),
    (
        [0.101286507323456, 0.797426985353087, 0.101286507323456],
        0.125939180544827,
    ),
    (
        [0.101286507323456, 0.101286507323456, 0.797426985353087],
        0.125939180544827,
    ),
];

/// Five-point Gauss-Legendre rule on `[0, 1]`.
const GAUSS5: [(f64, f64); 5] = [
    (0.046910077030668, 0.118463442528095),
    (0.230765344947158, 0.239314335249683),
    (0.5, 0.284444444444444),
    (0.769234655052842, 0.239314335249683),
    (0.953089922969332, 0.118463442528095),
];

/// Integrals over the signed triangle `(c, a, b)`, plus the Steiner
/// contribution `w·a` of the vertex `a`.
fn triangle<S: Scalar>(c: Point2, ax: S, ay: S, bx: S, by: S, site: Point2, pot: Option<&PotentialSpec>) -> [S; NQ] {
    let ux = ax - c.x;
    let uy = ay - c.y;
    let vx = bx - c.x;
    let vy = by - c.y;
    let t = (ux * vy - uy * vx) * 0.5;
    let f = |x: S, y: S| {
        let dx = x - site.x;
        let dy = y - site.y;
        dx * dx + dy * dy
    };
    // Edge midpoints: exact for quadratics.
    let m = f((ax + c.x) * 0.5, (ay + c.y) * 0.5)
        + f((ax + bx) * 0.5, (ay + by) * 0.5)
        + f((bx + c.x) * 0.5, (by + c.y) * 0.5);
    let second = t * m / 3.0;
    let mx = t * (ax + bx + c.x) / 3.0;
    let my = t * (ay + by + c.y) / 3.0;
    let potential = match pot {
        Some(v) => {
            let mut acc = S::cst(0.0);
            for (l, w) in DUNAVANT5 {
                let x = ax * l[1] + bx * l[2] + c.x * l[0];
                let y = ay * l[1] + by * l[2] + c.y * l[0];
                acc = acc + v.eval(x, y) * w;
            }
            t * acc
        }
        None => S::cst(0.0),
    };
    [t, second, mx, my, potential]
}

/// Cell integrals `[A, ∫‖x−p‖², ∫x, ∫y, ∫V]` of a polygon.
pub fn cell_values(vertices: &[Point2], site: Point2, pot: Option<&PotentialSpec>) -> [f64; NQ] {
    let k = vertices.len();
    let mut out = [0.0; NQ];
    if k < 3 {
        return out;
    }
    for i in 0..k {
        let (a, b) = (vertices[i], vertices[(i + 1) % k]);
        let t = triangle(site, a.x, a.y, b.x, b.y, site, pot);
        for j in 0..NQ {
            out[j] += t[j];
        }
    }
    out
}

/// Cell integrals with gradients and Hessians in the local site ordering
/// `sites` (the cell's own site first).
#[derive(Clone, Debug)]
pub struct CellQuantities {
    pub sites: Vec<usize>,
    pub values: [f64; NQ],
    pub grads: Vec<[f64; NQ]>,
    /// Row-major `sites.len()²` blocks, one per quantity.
    pub hess: Vec<[f64; NQ]>,
}

impl CellQuantities {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    #[inline]
    pub fn h(&self, a: usize, b: usize, q: usize) -> f64 {
        self.hess[a * self.sites.len() + b][q]
    }
}

/// Differentiates the integrals of cell `p` of `diagram`.
pub fn cell_quantities(
    diagram: &LaguerreDiagram,
    points: &[Point2],
    phi: &[f64],
    domain: &ConvexDomain,
    p: usize,
    pot: Option<&PotentialSpec>,
    with_hessian: bool,
) -> Result<CellQuantities> {
    let cell = &diagram.cells[p];
    let verts = cell.polygon.vertices();
    let k = verts.len();
    let mut sites = vec![p];
    for l in &cell.labels {
        if let Node::Site(q) = l {
            if !sites.contains(q) {
                sites.push(*q);
            }
        }
    }
    let nl = sites.len();
    let local = |s: usize| sites.iter().position(|&x| x == s).unwrap_or(0);
    let mut out = CellQuantities {
        sites: sites.clone(),
        values: [0.0; NQ],
        grads: vec![[0.0; NQ]; nl],
        hess: if with_hessian {
            vec![[0.0; NQ]; nl * nl]
        } else {
            Vec::new()
        },
    };
    if k < 3 {
        return Ok(out);
    }
    // Vertex Jacobians as sparse rows over local sites: [dx, dy].
    let mut vd: Vec<[Vec<(usize, f64)>; 2]> = Vec::with_capacity(k);
    for i in 0..k {
        let v = vertex_derivative(points, phi, domain, p, cell.labels[(i + k - 1) % k], cell.labels[i])?;
        let mut rows: [Vec<(usize, f64)>; 2] = [Vec::new(), Vec::new()];
        for (s, dv) in v.d {
            let li = local(s);
            rows[0].push((li, dv.x));
            rows[1].push((li, dv.y));
        }
        vd.push(rows);
    }
    let site = points[p];
    for i in 0..k {
        let j = (i + 1) % k;
        let (a, b) = (verts[i], verts[j]);
        let t = triangle(
            site,
            Jet::<4>::var(a.x, 0),
            Jet::<4>::var(a.y, 1),
            Jet::<4>::var(b.x, 2),
            Jet::<4>::var(b.y, 3),
            site,
            pot,
        );
        let rows = [&vd[i][0], &vd[i][1], &vd[j][0], &vd[j][1]];
        for q in 0..NQ {
            out.values[q] += t[q].v;
            for (ci, row) in rows.iter().enumerate() {
                let g = t[q].g[ci];
                if g != 0.0 {
                    for &(s, d) in row.iter() {
                        out.grads[s][q] += g * d;
                    }
                }
            }
            if with_hessian {
                for (c1, r1) in rows.iter().enumerate() {
                    for (c2, r2) in rows.iter().enumerate() {
                        let h = t[q].h[c1][c2];
                        if h == 0.0 {
                            continue;
                        }
                        for &(s1, d1) in r1.iter() {
                            for &(s2, d2) in r2.iter() {
                                out.hess[s1 * nl + s2][q] += d1 * h * d2;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of `∫_{cell p} f` from the boundary-transport rule: moving the
/// edge shared with `q` transports `(1/‖p−q‖)·∫_edge f dℓ`. Returns sparse
/// `(site, derivative)` pairs.
pub fn boundary_transport_gradient(
    diagram: &LaguerreDiagram,
    points: &[Point2],
    p: usize,
    f: impl Fn(Point2) -> f64,
) -> Vec<(usize, f64)> {
    let cell = &diagram.cells[p];
    let v = cell.polygon.vertices();
    let k = v.len();
    let mut out: Vec<(usize, f64)> = vec![(p, 0.0)];
    for i in 0..k {
        let Node::Site(q) = cell.labels[i] else { continue };
        let (a, b) = (v[i], v[(i + 1) % k]);
        let len = a.dist(b);
        let integral: f64 = GAUSS5.iter().map(|&(s, w)| w * f(a.lerp(b, s))).sum::<f64>() * len;
        let w = integral / points[p].dist(points[q]);
        out[0].1 -= w;
        match out.iter_mut().find(|e| e.0 == q) {
            Some(e) => e.1 += w,
            None => out.push((q, w)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom2d::ConvexPolygon;

    #[test]
    fn values_match_polygon_routines() {
        let poly = ConvexPolygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(2.5, 1.0),
            Point2::new(0.5, 2.0),
        ])
        .unwrap();
        let site = Point2::new(0.3, -0.4);
        let v = cell_values(poly.vertices(), site, None);
        assert!((v[Q_AREA] - poly.area()).abs() < 1e-14);
        assert!((v[Q_SECOND] - poly.second_moment(site)).abs() < 1e-13);
        let c = poly.centroid().unwrap();
        assert!((v[Q_MX] / v[Q_AREA] - c.x).abs() < 1e-14);
        assert!((v[Q_MY] / v[Q_AREA] - c.y).abs() < 1e-14);
    }

    #[test]
    fn potential_quadrature_exact_for_quadratic_well() {
        use crate::energy::potential::{GaussianBump, QuadraticWell};
        // ∫ over the unit square of the quadratic well ‖x‖² is 2/3.
        let sq = ConvexPolygon::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap();
        let v = PotentialSpec {
            quadratic: Some(QuadraticWell {
                weight: 1.0,
                center: Point2::new(0.0, 0.0),
            }),
            bumps: vec![GaussianBump {
                amplitude: 0.0,
                rate: 1.0,
                center: Point2::default(),
            }],
            interaction: None,
        };
        let r = cell_values(sq.vertices(), Point2::default(), Some(&v));
        assert!((r[Q_POT] - 2.0 / 3.0).abs() < 1e-14);
    }
}
