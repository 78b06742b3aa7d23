//! Discrete Monge-Ampère operator: cell areas, their Jacobian and Hessian.
//!
//! The Jacobian entry `(p, q)` is the length of the shared edge divided by
//! `‖p − q‖`, with diagonal entries making every row sum to zero. Second
//! derivatives follow from differentiating edge lengths through the cell
//! vertices, each of which solves a 2×2 linear system whose right-hand side
//! is affine in `φ`.

use std::collections::BTreeMap;

use serde::Serialize;
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::geom2d::{ConvexDomain, Point2};
use crate::laguerre::{build_diagram, node_line, LaguerreDiagram, Node};

/// Vertex systems with condition number above this are differentiated by
/// finite differences of the Jacobian instead.
pub const VERTEX_COND_LIMIT: f64 = 1e12;

/// Cell areas of the clipped diagram.
pub fn ma(points: &[Point2], phi: &[f64], domain: &ConvexDomain) -> Result<Vec<f64>> {
    Ok(build_diagram(points, phi, domain)?.areas())
}

/// True iff every cell area is strictly above the empty-cell tolerance.
pub fn interiority(points: &[Point2], phi: &[f64], domain: &ConvexDomain) -> Result<bool> {
    let d = build_diagram(points, phi, domain)?;
    Ok(diagram_is_interior(&d))
}

pub fn diagram_is_interior(d: &LaguerreDiagram) -> bool {
    let tol = d.empty_tolerance();
    d.cells.iter().all(|c| c.polygon.area() > tol)
}

fn require_interior(d: &LaguerreDiagram) -> Result<()> {
    if let Some(p) = d.cells.iter().position(|c| c.is_empty()) {
        return Err(Error::NotInterior(format!("cell of site {p} is empty")));
    }
    Ok(())
}

/// Jacobian of the cell areas from an already built diagram.
pub fn jacobian_from_diagram(d: &LaguerreDiagram, points: &[Point2]) -> Result<CsMat<f64>> {
    require_interior(d)?;
    let n = points.len();
    let mut tri = TriMat::new((n, n));
    let mut diag = vec![0.0; n];
    for e in &d.edges {
        let w = e.length / points[e.p].dist(points[e.q]);
        tri.add_triplet(e.p, e.q, w);
        tri.add_triplet(e.q, e.p, w);
        diag[e.p] -= w;
        diag[e.q] -= w;
    }
    for (i, v) in diag.into_iter().enumerate() {
        tri.add_triplet(i, i, v);
    }
    Ok(tri.to_csr())
}

pub fn ma_jacobian(points: &[Point2], phi: &[f64], domain: &ConvexDomain) -> Result<CsMat<f64>> {
    let d = build_diagram(points, phi, domain)?;
    jacobian_from_diagram(&d, points)
}

/// A cell vertex and its derivative with respect to the potential values.
#[derive(Clone, Debug)]
pub(crate) struct VertexDeriv {
    pub pos: Point2,
    /// `(site, ∂pos/∂φ(site))`, at most three entries.
    pub d: Vec<(usize, Point2)>,
    pub cond: f64,
}

/// Differentiates the vertex of `p`'s cell lying on the lines of `l1`, `l2`.
pub(crate) fn vertex_derivative(
    points: &[Point2],
    phi: &[f64],
    domain: &ConvexDomain,
    p: usize,
    l1: Node,
    l2: Node,
) -> Result<VertexDeriv> {
    let h1 = node_line(points, phi, domain, p, l1);
    let h2 = node_line(points, phi, domain, p, l2);
    let (a1, a2) = (h1.normal, h2.normal);
    let det = a1.cross(a2);
    if det == 0.0 || !det.is_finite() {
        return Err(Error::Degenerate(format!(
            "singular vertex system for site {p} with {l1:?}, {l2:?}"
        )));
    }
    let pos = Point2::new(
        (h1.offset * a2.y - h2.offset * a1.y) / det,
        (a1.x * h2.offset - a2.x * h1.offset) / det,
    );
    // Columns of A⁻¹: response to a unit change of each right-hand side.
    let c1 = Point2::new(a2.y / det, -a2.x / det);
    let c2 = Point2::new(-a1.y / det, a1.x / det);
    let mut d: Vec<(usize, Point2)> = Vec::with_capacity(3);
    let mut add = |site: usize, v: Point2| {
        if let Some(e) = d.iter_mut().find(|e| e.0 == site) {
            e.1 += v;
        } else {
            d.push((site, v));
        }
    };
    for (node, col) in [(l1, c1), (l2, c2)] {
        if let Node::Site(q) = node {
            add(q, col);
            add(p, -col);
        }
    }
    let cond = (a1.norm2() + a2.norm2()) / det.abs();
    Ok(VertexDeriv { pos, d, cond })
}

/// Sparse third-order tensor `∂²MA(p)/∂φ(q)∂φ(r)`, symmetric in `(q, r)`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MaHessian {
    pub n: usize,
    /// Sorted `((p, q, r), value)` entries.
    pub entries: Vec<((usize, usize, usize), f64)>,
}

impl MaHessian {
    fn from_raw(n: usize, raw: BTreeMap<(usize, usize, usize), f64>) -> Self {
        let mut sym: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for (&(p, q, r), &v) in &raw {
            *sym.entry((p, q, r)).or_insert(0.0) += 0.5 * v;
            *sym.entry((p, r, q)).or_insert(0.0) += 0.5 * v;
        }
        Self {
            n,
            entries: sym.into_iter().filter(|(_, v)| *v != 0.0).collect(),
        }
    }

    pub fn get(&self, p: usize, q: usize, r: usize) -> f64 {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(&(p, q, r)))
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    /// `Σ_p c_p ∇²MA(p)` as a sparse symmetric matrix.
    pub fn contract(&self, c: &[f64]) -> CsMat<f64> {
        let mut tri = TriMat::new((self.n, self.n));
        for &((p, q, r), v) in &self.entries {
            if c[p] != 0.0 {
                tri.add_triplet(q, r, c[p] * v);
            }
        }
        tri.to_csr()
    }

    /// Row `p` applied to a direction: `∇²MA(p)·δ` as a dense vector.
    pub fn apply_row(&self, p: usize, delta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        let start = self.entries.partition_point(|(k, _)| k.0 < p);
        for &((pp, q, r), v) in &self.entries[start..] {
            if pp != p {
                break;
            }
            out[q] += v * delta[r];
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    #[default]
    Analytic,
    FdOfJacobian,
}

/// Gradient of every site-site edge length, keyed like `diagram.edges`.
/// Also returns the sites whose columns involve ill-conditioned vertices.
fn edge_length_gradients(
    d: &LaguerreDiagram,
    points: &[Point2],
    phi: &[f64],
    domain: &ConvexDomain,
) -> Result<(Vec<Vec<(usize, f64)>>, Vec<usize>)> {
    let mut sums: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); d.edges.len()];
    let mut counts = vec![0u32; d.edges.len()];
    let mut ill = Vec::new();
    for (p, cell) in d.cells.iter().enumerate() {
        let k = cell.labels.len();
        if k == 0 {
            continue;
        }
        let verts: Vec<VertexDeriv> = (0..k)
            .map(|i| vertex_derivative(points, phi, domain, p, cell.labels[(i + k - 1) % k], cell.labels[i]))
            .collect::<Result<_>>()?;
        for i in 0..k {
            let Node::Site(q) = cell.labels[i] else { continue };
            let (x, y) = (&verts[i], &verts[(i + 1) % k]);
            for v in [x, y] {
                if v.cond > VERTEX_COND_LIMIT {
                    ill.extend(v.d.iter().map(|e| e.0));
                }
            }
            let seg = y.pos - x.pos;
            let len = seg.norm();
            if len == 0.0 {
                continue;
            }
            let u = seg / len;
            let Some(idx) = edge_index(d, p, q) else { continue };
            counts[idx] += 1;
            for &(r, dv) in &y.d {
                *sums[idx].entry(r).or_insert(0.0) += u.dot(dv);
            }
            for &(r, dv) in &x.d {
                *sums[idx].entry(r).or_insert(0.0) -= u.dot(dv);
            }
        }
    }
    ill.sort_unstable();
    ill.dedup();
    let grads = sums
        .into_iter()
        .zip(counts)
        .map(|(m, c)| {
            let s = if c == 0 { 0.0 } else { 1.0 / c as f64 };
            m.into_iter().map(|(r, v)| (r, v * s)).collect()
        })
        .collect();
    Ok((grads, ill))
}

fn edge_index(d: &LaguerreDiagram, p: usize, q: usize) -> Option<usize> {
    let key = (p.min(q), p.max(q));
    d.edges.binary_search_by(|e| (e.p, e.q).cmp(&key)).ok()
}

/// Analytic Hessian of the cell areas from an already built diagram.
pub fn hessian_from_diagram(
    d: &LaguerreDiagram,
    points: &[Point2],
    phi: &[f64],
    domain: &ConvexDomain,
) -> Result<MaHessian> {
    require_interior(d)?;
    let n = points.len();
    let (grads, ill) = edge_length_gradients(d, points, phi, domain)?;
    let mut raw: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
    for (e, g) in d.edges.iter().zip(&grads) {
        let inv = 1.0 / points[e.p].dist(points[e.q]);
        for &(r, v) in g {
            if ill.binary_search(&r).is_ok() {
                continue;
            }
            let w = v * inv;
            *raw.entry((e.p, e.q, r)).or_insert(0.0) += w;
            *raw.entry((e.q, e.p, r)).or_insert(0.0) += w;
            *raw.entry((e.p, e.p, r)).or_insert(0.0) -= w;
            *raw.entry((e.q, e.q, r)).or_insert(0.0) -= w;
        }
    }
    if !ill.is_empty() {
        let h = 1e-4 * (1.0 + phi.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for &r in &ill {
            for ((p, q), v) in jacobian_column_fd(points, phi, domain, r, h)? {
                *raw.entry((p, q, r)).or_insert(0.0) += v;
            }
        }
    }
    Ok(MaHessian::from_raw(n, raw))
}

/// Central difference of the Jacobian in direction `e_r`.
fn jacobian_column_fd(
    points: &[Point2],
    phi: &[f64],
    domain: &ConvexDomain,
    r: usize,
    h: f64,
) -> Result<Vec<((usize, usize), f64)>> {
    let mut plus = phi.to_vec();
    plus[r] += h;
    let mut minus = phi.to_vec();
    minus[r] -= h;
    let jp = ma_jacobian(points, &plus, domain)?;
    let jm = ma_jacobian(points, &minus, domain)?;
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (v, (i, j)) in jp.iter() {
        *acc.entry((i, j)).or_insert(0.0) += v / (2.0 * h);
    }
    for (v, (i, j)) in jm.iter() {
        *acc.entry((i, j)).or_insert(0.0) -= v / (2.0 * h);
    }
    Ok(acc.into_iter().collect())
}

pub fn ma_hessian(points: &[Point2], phi: &[f64], domain: &ConvexDomain, mode: HessianMode) -> Result<MaHessian> {
    let d = build_diagram(points, phi, domain)?;
    match mode {
        HessianMode::Analytic => hessian_from_diagram(&d, points, phi, domain),
        HessianMode::FdOfJacobian => {
            require_interior(&d)?;
            let h = 1e-4 * (1.0 + phi.iter().fold(0.0f64, |m, v| m.max(v.abs())));
            let mut raw = BTreeMap::new();
            for r in 0..points.len() {
                for ((p, q), v) in jacobian_column_fd(points, phi, domain, r, h)? {
                    raw.insert((p, q, r), v);
                }
            }
            Ok(MaHessian::from_raw(points.len(), raw))
        }
    }
}

/// Checks whether every nonzero `(p, q, r)` is a vertex, a dual edge, or a
/// dual triangle of the diagram. Returns the offending entries.
pub fn hessian_pattern_violations(h: &MaHessian, d: &LaguerreDiagram) -> Vec<(usize, usize, usize)> {
    let edges: std::collections::HashSet<(usize, usize)> = d
        .dual
        .edges
        .iter()
        .filter_map(|e| match e {
            (Node::Site(a), Node::Site(b)) => Some((*a.min(b), *a.max(b))),
            _ => None,
        })
        .collect();
    let tris: std::collections::HashSet<[usize; 3]> = d
        .dual
        .triangles
        .iter()
        .filter_map(|t| match t.nodes {
            [Node::Site(a), Node::Site(b), Node::Site(c)] => {
                let mut s = [a, b, c];
                s.sort_unstable();
                Some(s)
            }
            _ => None,
        })
        .collect();
    h.entries
        .iter()
        .filter(|(_, v)| *v != 0.0)
        .map(|(k, _)| *k)
        .filter(|&(p, q, r)| {
            let mut s = vec![p, q, r];
            s.sort_unstable();
            s.dedup();
            match s.len() {
                1 => false,
                2 => !edges.contains(&(s[0], s[1])),
                _ => !tris.contains(&[s[0], s[1], s[2]]),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct LogConcavityReport {
    pub checks: usize,
    pub violations: Vec<LogConcavityViolation>,
    pub max_violation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LogConcavityViolation {
    pub t: f64,
    pub site: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// Verifies `log MA[φ_t](p) ≥ (1−t) log MA[φ0](p) + t log MA[φ1](p)` along
/// the segment `φ_t = (1−t)φ0 + tφ1`.
pub fn segment_logconcavity_check(
    points: &[Point2],
    phi0: &[f64],
    phi1: &[f64],
    domain: &ConvexDomain,
    t_samples: &[f64],
) -> Result<LogConcavityReport> {
    let a0 = ma(points, phi0, domain)?;
    let a1 = ma(points, phi1, domain)?;
    let mut report = LogConcavityReport::default();
    for &t in t_samples {
        let phit: Vec<f64> = phi0.iter().zip(phi1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let at = ma(points, &phit, domain)?;
        for p in 0..points.len() {
            let lhs = at[p].ln();
            let rhs = (1.0 - t) * a0[p].ln() + t * a1[p].ln();
            report.checks += 1;
            let gap = rhs - lhs;
            if gap.is_nan() || gap > 0.0 {
                report.max_violation = report.max_violation.max(if gap.is_nan() { f64::INFINITY } else { gap });
            }
            if gap.is_nan() || gap > 1e-9 {
                report.violations.push(LogConcavityViolation { t, site: p, lhs, rhs });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_site_jacobian() {
        let y = ConvexDomain::square(2.0).unwrap();
        let pts = [Point2::new(-1.0, 0.0), Point2::new(1.0, 0.0)];
        let j = ma_jacobian(&pts, &[0.0, 0.0], &y).unwrap().to_dense();
        assert_eq!(j[[0, 0]], -1.0);
        assert_eq!(j[[0, 1]], 1.0);
        assert_eq!(j[[1, 0]], 1.0);
        assert_eq!(j[[1, 1]], -1.0);
    }

    #[test]
    fn vertex_derivative_matches_resolve() {
        let y = ConvexDomain::square(2.0).unwrap();
        let pts = [Point2::new(-0.5, 0.1), Point2::new(0.6, 0.2), Point2::new(0.0, 0.7)];
        let phi = [0.1, -0.2, 0.05];
        let v = vertex_derivative(&pts, &phi, &y, 0, Node::Site(1), Node::Site(2)).unwrap();
        for r in 0..3 {
            let h = 1e-6;
            let mut pp = phi;
            pp[r] += h;
            let mut pm = phi;
            pm[r] -= h;
            let xp = vertex_derivative(&pts, &pp, &y, 0, Node::Site(1), Node::Site(2))
                .unwrap()
                .pos;
            let xm = vertex_derivative(&pts, &pm, &y, 0, Node::Site(1), Node::Site(2))
                .unwrap()
                .pos;
            let fd = (xp - xm) / (2.0 * h);
            let an = v.d.iter().find(|e| e.0 == r).map(|e| e.1).unwrap_or_default();
            assert!((fd - an).norm() < 1e-8, "r={r}: {fd:?} vs {an:?}");
        }
    }

    #[test]
    fn logconcavity_trivial_cases() {
        let y = ConvexDomain::square(2.0).unwrap();
        let pts = [Point2::new(-0.5, 0.1), Point2::new(0.6, 0.2), Point2::new(0.0, 0.7)];
        let phi0 = [0.1, -0.2, 0.05];
        let phi1: Vec<f64> = phi0.iter().map(|v| v + 3.0).collect();
        let r = segment_logconcavity_check(&pts, &phi0, &phi1, &y, &[0.25, 0.5]).unwrap();
        assert!(r.violations.is_empty());
        assert!(r.max_violation <= 1e-12);
    }
}
