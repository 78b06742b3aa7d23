//! Regular triangulation of weighted sites by incremental insertion.
//!
//! Site `p` is lifted to `(p, h(p))` and the lower convex hull of the lifted
//! points is maintained with Bowyer-Watson cavity retriangulation. Three far
//! auxiliary vertices with very large heights close the triangulation; their
//! cells never reach the domain, so they are dropped from the output.
//! A lifted point lying exactly on the current hull is treated as hidden,
//! which resolves cocircular ties deterministically by insertion order.

use crate::error::{Error, Result};
use crate::geom2d::Point2;
use crate::predicates::{lifted_orient, orient2d};

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
struct Tri {
    v: [usize; 3],
    /// `n[i]` is the triangle across the edge opposite `v[i]`.
    n: [usize; 3],
    alive: bool,
}

/// Adjacency of the regular triangulation restricted to the input sites.
#[derive(Clone, Debug)]
pub struct RegularTriangulation {
    /// Sorted neighbor lists; empty for hidden sites.
    pub neighbors: Vec<Vec<usize>>,
    /// Sites that are not vertices of the lower hull.
    pub hidden: Vec<bool>,
}

/// Triangulates `points` lifted to `heights`. `domain_radius` bounds the
/// norm of every point of interest for the dual cells.
pub fn regular_triangulation(points: &[Point2], heights: &[f64], domain_radius: f64) -> Result<RegularTriangulation> {
    let n = points.len();
    if n != heights.len() {
        return Err(Error::InvalidInput("points and heights differ in length".into()));
    }
    if n == 0 {
        return Ok(RegularTriangulation {
            neighbors: Vec::new(),
            hidden: Vec::new(),
        });
    }
    let mut b = Builder::new(points, heights, domain_radius)?;
    for i in insertion_order(points) {
        b.insert(i)?;
    }
    Ok(b.finish())
}

struct Builder {
    pts: Vec<Point2>,
    hts: Vec<f64>,
    n: usize,
    tris: Vec<Tri>,
    free: Vec<usize>,
    hidden: Vec<bool>,
    last: usize,
    rng: u64,
    stamp: Vec<u32>,
    epoch: u32,
}

impl Builder {
    fn new(points: &[Point2], heights: &[f64], domain_radius: f64) -> Result<Self> {
        let n = points.len();
        if points.iter().any(|p| !p.is_finite()) || heights.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidInput(
                "site coordinates and heights must be finite".into(),
            ));
        }
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let c = (lo + hi) * 0.5;
        let r = points.iter().map(|p| p.dist(c)).fold(0.0, f64::max).max(1.0);
        let rp = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        let hmax = heights.iter().map(|h| h.abs()).fold(0.0, f64::max);
        let mut pts = points.to_vec();
        let mut hts = heights.to_vec();
        for k in 0..3 {
            let ang = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::TAU / 3.0;
            let s = c + Point2::new(ang.cos(), ang.sin()) * (16.0 * r);
            // Keeps the auxiliary affine pieces below every site's piece on
            // the disk of radius `domain_radius`.
            let h = 2.0 * (domain_radius.max(1.0) * (s.norm() + rp) + hmax) + 1.0;
            pts.push(s);
            hts.push(h);
        }
        let tris = vec![Tri {
            v: [n, n + 1, n + 2],
            n: [NONE; 3],
            alive: true,
        }];
        Ok(Self {
            pts,
            hts,
            n,
            tris,
            free: Vec::new(),
            hidden: vec![false; n],
            last: 0,
            rng: 0x9E37_79B9_7F4A_7C15,
            stamp: vec![0; 1],
            epoch: 0,
        })
    }

    fn next_rand(&mut self) -> usize {
        self.rng = self
            .rng
            .wrapping_mul(6_364_136_223_846_793_005)
            .wrapping_add(1_442_695_040_888_963_407);
        (self.rng >> 33) as usize
    }

    fn lifted(&self, i: usize) -> (Point2, f64) {
        (self.pts[i], self.hts[i])
    }

    fn conflicts(&self, t: usize, i: usize) -> bool {
        let v = self.tris[t].v;
        lifted_orient(self.lifted(v[0]), self.lifted(v[1]), self.lifted(v[2]), self.lifted(i)) > 0.0
    }

    fn locate(&mut self, p: Point2) -> usize {
        let mut t = self.last;
        let limit = 4 * self.tris.len() + 16;
        for _ in 0..limit {
            let r = self.next_rand() % 3;
            let tri = &self.tris[t];
            let mut next = None;
            for k in 0..3 {
                let i = (r + k) % 3;
                let a = self.pts[tri.v[(i + 1) % 3]];
                let b = self.pts[tri.v[(i + 2) % 3]];
                if orient2d(a, b, p) < 0.0 {
                    next = Some(tri.n[i]);
                    break;
                }
            }
            match next {
                Some(nb) if nb != NONE => t = nb,
                _ => return t,
            }
        }
        // The stochastic walk terminates with probability one; a linear scan
        // keeps the worst case bounded.
        self.tris
            .iter()
            .position(|tri| {
                tri.alive
                    && (0..3).all(|i| orient2d(self.pts[tri.v[(i + 1) % 3]], self.pts[tri.v[(i + 2) % 3]], p) >= 0.0)
            })
            .unwrap_or(self.last)
    }

    fn new_tri(&mut self, tri: Tri) -> usize {
        if let Some(i) = self.free.pop() {
            self.tris[i] = tri;
            i
        } else {
            self.tris.push(tri);
            self.stamp.push(0);
            self.tris.len() - 1
        }
    }

    fn insert(&mut self, i: usize) -> Result<()> {
        let p = self.pts[i];
        let t0 = self.locate(p);
        if !self.conflicts(t0, i) {
            self.hidden[i] = true;
            return Ok(());
        }
        self.epoch += 1;
        let inside = 2 * self.epoch;
        let outside = inside + 1;
        // Cavity: connected set of triangles whose lifted plane lies above
        // the new lifted point.
        let mut cavity = vec![t0];
        self.stamp[t0] = inside;
        let mut horizon: Vec<(usize, usize, usize)> = Vec::new();
        let mut k = 0;
        while k < cavity.len() {
            let t = cavity[k];
            k += 1;
            for e in 0..3 {
                let nb = self.tris[t].n[e];
                let a = self.tris[t].v[(e + 1) % 3];
                let b = self.tris[t].v[(e + 2) % 3];
                if nb == NONE {
                    horizon.push((a, b, NONE));
                    continue;
                }
                if self.stamp[nb] == inside {
                    continue;
                }
                if self.stamp[nb] == outside {
                    horizon.push((a, b, nb));
                    continue;
                }
                if self.conflicts(nb, i) {
                    self.stamp[nb] = inside;
                    cavity.push(nb);
                } else {
                    self.stamp[nb] = outside;
                    horizon.push((a, b, nb));
                }
            }
        }
        for &(a, b, _) in &horizon {
            if orient2d(p, self.pts[a], self.pts[b]) <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "insertion of site {i} produced a flat triangle with vertices {a}, {b}"
                )));
            }
        }
        let mut on_horizon = std::collections::HashSet::with_capacity(horizon.len() * 2);
        for &(a, b, _) in &horizon {
            on_horizon.insert(a);
            on_horizon.insert(b);
        }
        for &t in &cavity {
            for &v in &self.tris[t].v {
                if v < self.n && !on_horizon.contains(&v) {
                    self.hidden[v] = true;
                }
            }
        }
        let old: Vec<usize> = cavity.clone();
        for &t in &old {
            self.tris[t].alive = false;
        }
        let mut by_start = std::collections::HashMap::with_capacity(horizon.len());
        let mut created = Vec::with_capacity(horizon.len());
        for &(a, b, nb) in &horizon {
            let id = self.new_tri(Tri {
                v: [i, a, b],
                n: [nb, NONE, NONE],
                alive: true,
            });
            self.stamp[id] = 0;
            if nb != NONE {
                let tri = &mut self.tris[nb];
                for e in 0..3 {
                    let (x, y) = (tri.v[(e + 1) % 3], tri.v[(e + 2) % 3]);
                    if x == b && y == a {
                        tri.n[e] = id;
                    }
                }
            }
            by_start.insert(a, id);
            created.push((id, a, b));
        }
        for &(id, _, b) in &created {
            // Edge (b, i) is opposite `a`; edge (i, a) is opposite `b`.
            let next = by_start[&b];
            self.tris[id].n[1] = next;
            self.tris[next].n[2] = id;
        }
        self.free.extend(old);
        self.last = created[0].0;
        Ok(())
    }

    fn finish(self) -> RegularTriangulation {
        let mut neighbors = vec![Vec::new(); self.n];
        for tri in self.tris.iter().filter(|t| t.alive) {
            for a in 0..3 {
                let (u, w) = (tri.v[a], tri.v[(a + 1) % 3]);
                if u < self.n && w < self.n {
                    neighbors[u].push(w);
                    neighbors[w].push(u);
                }
            }
        }
        for (i, nb) in neighbors.iter_mut().enumerate() {
            nb.sort_unstable();
            nb.dedup();
            if self.hidden[i] {
                nb.clear();
            }
        }
        RegularTriangulation {
            neighbors,
            hidden: self.hidden,
        }
    }
}

/// Boustrophedon order over a coarse grid so consecutive insertions are close.
fn insertion_order(points: &[Point2]) -> Vec<usize> {
    let n = points.len();
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let k = ((n as f64 / 2.0).sqrt().ceil() as usize).max(1);
    let w = (hi.x - lo.x).max(f64::MIN_POSITIVE);
    let h = (hi.y - lo.y).max(f64::MIN_POSITIVE);
    let cell = |p: Point2| {
        let cx = (((p.x - lo.x) / w * k as f64) as usize).min(k - 1);
        let cy = (((p.y - lo.y) / h * k as f64) as usize).min(k - 1);
        let cx = if cy % 2 == 0 { cx } else { k - 1 - cx };
        cy * k + cx
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (cell(points[i]), i));
    order
}
