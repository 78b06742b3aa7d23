//! Laguerre cells clipped to a convex domain and their dual triangulation.
//!
//! The cell of site `p` under the potential `φ` is
//! `{y ∈ Y : ⟨q − p, y⟩ ≤ φ(q) − φ(p) for all q}`, which is the power cell of
//! `p` with weight `‖p‖² − 2φ(p)`. Neighbors come from the regular
//! triangulation of the lifted sites `(p, φ(p))`; each cell is the domain
//! clipped by the half-planes of its neighbors.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom2d::{clip_labeled, polygon_area, ConvexDomain, ConvexPolygon, HalfPlane, Point2};
use crate::predicates::{dot_diff_sign, orient2d};
use crate::triangulation::regular_triangulation;

/// Relative tolerance for merging nearly coincident cell vertices.
pub const MERGE_TOL: f64 = 1e-12;
/// Cells with area below this fraction of the domain area count as empty.
pub const EMPTY_CELL_TOL: f64 = 1e-14;

/// Element of `P ∪ S`: a site or a boundary segment of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Node {
    Site(usize),
    Segment(usize),
}

/// One clipped cell; `labels[i]` names the constraint supporting the edge
/// from vertex `i` to vertex `i + 1`.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Cell {
    pub polygon: ConvexPolygon,
    pub labels: Vec<Node>,
}

impl Cell {
    pub fn is_empty(&self) -> bool {
        self.polygon.is_empty()
    }

    /// Sites sharing an edge with this cell, in boundary order.
    pub fn site_neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().filter_map(|l| match l {
            Node::Site(q) => Some(*q),
            Node::Segment(_) => None,
        })
    }
}

/// Edge shared by the cells of sites `p < q`.
#[derive(Clone, Debug, Serialize)]
pub struct Edge {
    pub p: usize,
    pub q: usize,
    pub length: f64,
    pub endpoints: (Point2, Point2),
}

#[derive(Clone, Debug, Serialize)]
pub struct DualTriangle {
    /// Sorted node triple.
    pub nodes: [Node; 3],
    /// The common point of the three cells (or cell and segments).
    pub vertex: Point2,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct DualTriangulation {
    /// Sorted pairs `(a, b)` with `a < b`.
    pub edges: Vec<(Node, Node)>,
    pub triangles: Vec<DualTriangle>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LaguerreDiagram {
    pub cells: Vec<Cell>,
    /// Site-site edges sorted by `(p, q)`.
    pub edges: Vec<Edge>,
    pub dual: DualTriangulation,
    pub domain_area: f64,
}

impl LaguerreDiagram {
    pub fn areas(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.polygon.area()).collect()
    }

    /// True iff every cell is nonempty.
    pub fn is_interpolate(&self) -> bool {
        self.cells.iter().all(|c| !c.is_empty())
    }

    pub fn edge(&self, p: usize, q: usize) -> Option<&Edge> {
        let key = (p.min(q), p.max(q));
        self.edges
            .binary_search_by(|e| (e.p, e.q).cmp(&key))
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn empty_tolerance(&self) -> f64 {
        EMPTY_CELL_TOL * self.domain_area
    }
}

fn check_sites(points: &[Point2], phi: &[f64]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::InvalidInput("site set is empty".into()));
    }
    if points.len() != phi.len() {
        return Err(Error::InvalidInput(format!(
            "{} sites but {} potential values",
            points.len(),
            phi.len()
        )));
    }
    if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("potential of site {i} is not finite")));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(Error::InvalidInput(format!("site {i} has non-finite coordinates")));
    }
    let mut seen = std::collections::HashMap::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let key = ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits());
        if let Some(j) = seen.insert(key, i) {
            return Err(Error::Degenerate(format!("sites {j} and {i} coincide")));
        }
    }
    Ok(())
}

/// Half-plane of the constraint `q` imposes on the cell of `p`.
#[inline]
pub(crate) fn site_halfplane(points: &[Point2], phi: &[f64], p: usize, q: usize) -> HalfPlane {
    HalfPlane {
        normal: points[q] - points[p],
        offset: phi[q] - phi[p],
    }
}

fn clip_cell(points: &[Point2], phi: &[f64], domain: &ConvexDomain, p: usize, neighbors: &[usize]) -> Cell {
    let mut verts = domain.polygon().vertices().to_vec();
    let mut labels: Vec<Node> = (0..verts.len()).map(Node::Segment).collect();
    let tol = MERGE_TOL * domain.diameter();
    for &q in neighbors {
        let h = site_halfplane(points, phi, p, q);
        let (v, l) = clip_labeled(&verts, &labels, &h, Node::Site(q), tol);
        verts = v;
        labels = l;
        if verts.is_empty() {
            break;
        }
    }
    if verts.len() < 3 || polygon_area(&verts) < EMPTY_CELL_TOL * domain.area() {
        return Cell::default();
    }
    Cell {
        polygon: ConvexPolygon::from_raw(verts),
        labels,
    }
}

/// Builds the clipped Laguerre diagram of `points` under `phi`.
pub fn build_diagram(points: &[Point2], phi: &[f64], domain: &ConvexDomain) -> Result<LaguerreDiagram> {
    check_sites(points, phi)?;
    let rt = regular_triangulation(points, phi, domain.radius())?;
    let cells = (0..points.len())
        .map(|p| {
            if rt.hidden[p] {
                Cell::default()
            } else {
                clip_cell(points, phi, domain, p, &rt.neighbors[p])
            }
        })
        .collect();
    Ok(assemble(cells, domain))
}

/// Reference construction clipping every cell by all other sites; quadratic
/// in the number of sites.
pub fn build_diagram_all_pairs(points: &[Point2], phi: &[f64], domain: &ConvexDomain) -> Result<LaguerreDiagram> {
    check_sites(points, phi)?;
    let n = points.len();
    let cells = (0..n)
        .map(|p| {
            let others: Vec<usize> = (0..n).filter(|&q| q != p).collect();
            clip_cell(points, phi, domain, p, &others)
        })
        .collect();
    Ok(assemble(cells, domain))
}

fn assemble(cells: Vec<Cell>, domain: &ConvexDomain) -> LaguerreDiagram {
    // Per unordered pair: summed length, number of sides seeing the edge,
    // endpoints from the lower-index side when available.
    let mut acc: BTreeMap<(usize, usize), (f64, u32, (Point2, Point2), bool)> = BTreeMap::new();
    let mut triangles: BTreeMap<[Node; 3], Point2> = BTreeMap::new();
    let mut dual_edges: HashSet<(Node, Node)> = HashSet::new();
    for (p, cell) in cells.iter().enumerate() {
        let v = cell.polygon.vertices();
        let k = v.len();
        for i in 0..k {
            let label = cell.labels[i];
            let (a, b) = (v[i], v[(i + 1) % k]);
            let me = Node::Site(p);
            dual_edges.insert(if me < label { (me, label) } else { (label, me) });
            if let Node::Site(q) = label {
                let key = (p.min(q), p.max(q));
                let entry = acc.entry(key).or_insert((0.0, 0, (a, b), false));
                entry.0 += a.dist(b);
                entry.1 += 1;
                if p < q && !entry.3 {
                    entry.2 = (a, b);
                    entry.3 = true;
                }
            }
            let prev = cell.labels[(i + k - 1) % k];
            if let (Node::Segment(s), Node::Segment(t)) = (prev, label) {
                let e = (Node::Segment(s.min(t)), Node::Segment(s.max(t)));
                dual_edges.insert(e);
            }
            let mut tri = [me, prev, label];
            tri.sort();
            triangles.entry(tri).or_insert(v[i]);
        }
    }
    let edges = acc
        .into_iter()
        .map(|((p, q), (sum, count, endpoints, _))| Edge {
            p,
            q,
            length: sum / count as f64,
            endpoints,
        })
        .collect();
    let mut dual_edges: Vec<(Node, Node)> = dual_edges.into_iter().collect();
    dual_edges.sort();
    let triangles = triangles
        .into_iter()
        .map(|(nodes, vertex)| DualTriangle { nodes, vertex })
        .collect();
    LaguerreDiagram {
        cells,
        edges,
        dual: DualTriangulation {
            edges: dual_edges,
            triangles,
        },
        domain_area: domain.area(),
    }
}

/// True iff every clipped cell is nonempty.
pub fn is_interpolate(points: &[Point2], phi: &[f64], domain: &ConvexDomain) -> Result<bool> {
    Ok(build_diagram(points, phi, domain)?.is_interpolate())
}

/// Line `⟨normal, y⟩ = offset` supporting the side of `p`'s cell facing `node`.
pub(crate) fn node_line(points: &[Point2], phi: &[f64], domain: &ConvexDomain, p: usize, node: Node) -> HalfPlane {
    match node {
        Node::Site(q) => site_halfplane(points, phi, p, q),
        Node::Segment(s) => domain.segment_halfplane(s),
    }
}

/// Solves the 2×2 system `⟨a1, y⟩ = b1, ⟨a2, y⟩ = b2`.
pub(crate) fn solve2(a1: Point2, b1: f64, a2: Point2, b2: f64) -> Option<Point2> {
    let det = a1.cross(a2);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let y = Point2::new((b1 * a2.y - b2 * a1.y) / det, (a1.x * b2 - a2.x * b1) / det);
    y.is_finite().then_some(y)
}

/// Common point of the cells/segments `a`, `b`, `c`, at least one a site.
pub fn cell_vertex(a: Node, b: Node, c: Node, points: &[Point2], phi: &[f64], domain: &ConvexDomain) -> Result<Point2> {
    let nodes = [a, b, c];
    let Some(pi) = nodes.iter().position(|n| matches!(n, Node::Site(_))) else {
        return Err(Error::InvalidInput("a dual triangle needs at least one site".into()));
    };
    let Node::Site(p) = nodes[pi] else { unreachable!() };
    let others: Vec<Node> = (0..3).filter(|&i| i != pi).map(|i| nodes[i]).collect();
    let l1 = node_line(points, phi, domain, p, others[0]);
    let l2 = node_line(points, phi, domain, p, others[1]);
    solve2(l1.normal, l1.offset, l2.normal, l2.offset)
        .ok_or_else(|| Error::Degenerate(format!("singular vertex system for {a:?}, {b:?}, {c:?}")))
}

/// Violations of general position.
#[derive(Clone, Debug, Default, Serialize)]
pub struct GenericityReport {
    /// Collinear site triples `(p, q, r)` with `p < q < r`.
    pub collinear_triples: Vec<[usize; 3]>,
    /// `(p, q, s)`: the bisector direction of `p, q` is parallel to segment `s`.
    pub parallel_bisectors: Vec<(usize, usize, usize)>,
}

impl GenericityReport {
    pub fn is_generic(&self) -> bool {
        self.collinear_triples.is_empty() && self.parallel_bisectors.is_empty()
    }
}

/// Reports collinear site triples and site pairs whose bisector runs
/// parallel to a boundary segment (the bisector of `p, q` moves with `φ`
/// but its direction does not).
pub fn genericity_check(points: &[Point2], domain: &ConvexDomain) -> GenericityReport {
    let n = points.len();
    let mut report = GenericityReport::default();
    for p in 0..n {
        let mut dirs: Vec<(f64, usize)> = (0..n)
            .filter(|&q| q > p)
            .map(|q| {
                let d = points[q] - points[p];
                let mut a = d.y.atan2(d.x);
                if a < 0.0 {
                    a += std::f64::consts::PI;
                }
                if a >= std::f64::consts::PI {
                    a -= std::f64::consts::PI;
                }
                (a, q)
            })
            .collect();
        dirs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let m = dirs.len();
        let mut candidates = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                if dirs[j].0 - dirs[i].0 > 1e-9 {
                    break;
                }
                candidates.push((dirs[i].1, dirs[j].1));
            }
        }
        // Directions just below π wrap around to those just above 0.
        let pi = std::f64::consts::PI;
        for hi in dirs.iter().rev().take_while(|d| d.0 >= pi - 1e-9) {
            for lo in dirs.iter().take_while(|d| d.0 <= 1e-9) {
                if hi.1 != lo.1 {
                    candidates.push((hi.1, lo.1));
                }
            }
        }
        for (q, r) in candidates {
            if orient2d(points[p], points[q], points[r]) == 0.0 {
                report.collinear_triples.push([p, q.min(r), q.max(r)]);
            }
        }
    }
    report.collinear_triples.sort_unstable();
    report.collinear_triples.dedup();
    for s in 0..domain.num_segments() {
        let (a, b) = domain.segment(s);
        let d = b - a;
        let mut keyed: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (d.dot(*p), i)).collect();
        keyed.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        for i in 0..n {
            for j in i + 1..n {
                let gap = keyed[j].0 - keyed[i].0;
                if gap > 1e-9 * (1.0 + keyed[i].0.abs()) {
                    break;
                }
                let (p, q) = (keyed[i].1, keyed[j].1);
                if dot_diff_sign(d, points[q], points[p]) == Ordering::Equal {
                    report.parallel_bisectors.push((p.min(q), p.max(q), s));
                }
            }
        }
    }
    report.parallel_bisectors.sort_unstable();
    report
}
