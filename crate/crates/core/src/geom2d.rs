//! Planar geometry: points, convex polygons, half-plane clipping and
//! polygon integrals.
//!
//! Polygons are stored counterclockwise. Clipping carries an optional label
//! per edge so that cells built by repeated clipping remember which
//! constraint produced each of their edges.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predicates::{line_side, orient2d};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Self) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Self) -> f64 {
        (self - o).norm()
    }

    /// Counterclockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn lerp(self, o: Self, t: f64) -> Self {
        self + (o - self) * t
    }
}

impl Add for Point2 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Point2 {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Point2 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Point2 {
    type Output = Self;
    #[inline]
    fn div(self, s: f64) -> Self {
        Self::new(self.x / s, self.y / s)
    }
}

impl Neg for Point2 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Closed half-plane `{y : ⟨normal, y⟩ ≤ offset}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: Point2,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(normal: Point2, offset: f64) -> Result<Self> {
        if !(normal.norm2() > 0.0) || !normal.is_finite() || !offset.is_finite() {
            return Err(Error::InvalidInput(format!(
                "half-plane needs a finite nonzero normal, got {normal:?} / {offset}"
            )));
        }
        Ok(Self { normal, offset })
    }

    /// The complementary closed half-plane `{⟨normal, y⟩ ≥ offset}`.
    pub fn reversed(&self) -> Self {
        Self {
            normal: -self.normal,
            offset: -self.offset,
        }
    }

    #[inline]
    pub fn eval(&self, y: Point2) -> f64 {
        self.normal.dot(y) - self.offset
    }
}

/// Counterclockwise convex polygon. An empty vertex list is the empty set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a polygon from counterclockwise vertices, dropping duplicate
    /// and collinear vertices. Fails on clockwise or nonconvex input.
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("polygon vertex is not finite".into()));
        }
        let diam = diameter_of(&vertices);
        let labels = vec![(); vertices.len()];
        let (verts, _) = cleanup(vertices, labels, 1e-12 * diam.max(f64::MIN_POSITIVE));
        let k = verts.len();
        if k == 0 {
            return Ok(Self::empty());
        }
        for i in 0..k {
            let o = orient2d(verts[(i + k - 1) % k], verts[i], verts[(i + 1) % k]);
            if o <= 0.0 {
                return Err(Error::InvalidInput(
                    "polygon vertices must be strictly convex and counterclockwise".into(),
                ));
            }
        }
        Ok(Self { vertices: verts })
    }

    pub fn rectangle(min: Point2, max: Point2) -> Result<Self> {
        Self::new(vec![min, Point2::new(max.x, min.y), max, Point2::new(min.x, max.y)])
    }

    pub(crate) fn from_raw(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    #[inline]
    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    /// Edge `i` runs from vertex `i` to vertex `i + 1`.
    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let k = self.vertices.len();
        (0..k).map(move |i| (self.vertices[i], self.vertices[(i + 1) % k]))
    }

    pub fn diameter(&self) -> f64 {
        diameter_of(&self.vertices)
    }

    pub fn translate(&self, v: Point2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|p| *p + v).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::empty();
        }
        Self {
            vertices: self.vertices.iter().map(|p| *p * s).collect(),
        }
    }

    /// Membership with an absolute slack on every edge.
    pub fn contains(&self, y: Point2, slack: f64) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        self.edges().all(|(a, b)| {
            let e = b - a;
            let len = e.norm();
            len == 0.0 || e.cross(y - a) / len >= -slack
        })
    }

    /// Intersection with a half-plane.
    pub fn clip(&self, h: &HalfPlane) -> Self {
        let tol = 1e-12 * self.diameter();
        let labels = vec![(); self.vertices.len()];
        let (v, _) = clip_labeled(&self.vertices, &labels, h, (), tol);
        Self { vertices: v }
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    /// Mass centroid.
    pub fn centroid(&self) -> Result<Point2> {
        polygon_centroid(&self.vertices)
    }

    /// `∫_poly ‖x − p‖² dx`, exact for any polygon.
    pub fn second_moment(&self, p: Point2) -> f64 {
        let k = self.vertices.len();
        if k < 3 {
            return 0.0;
        }
        let c = vertex_mean(&self.vertices);
        let f = |x: Point2| (x - p).norm2();
        let mut total = 0.0;
        for i in 0..k {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % k];
            let t = 0.5 * (a - c).cross(b - c);
            // Edge-midpoint rule: exact for quadratics.
            let m = f((c + a) * 0.5) + f((a + b) * 0.5) + f((b + c) * 0.5);
            total += t * m / 3.0;
        }
        total
    }

    /// Steiner point: vertices weighted by their exterior angles over 2π.
    pub fn steiner_point(&self) -> Result<Point2> {
        let k = self.vertices.len();
        if k < 3 || !(self.area() > 0.0) {
            return Err(Error::Degenerate("Steiner point of a degenerate polygon".into()));
        }
        let mut s = Point2::default();
        for i in 0..k {
            let prev = self.vertices[(i + k - 1) % k];
            let cur = self.vertices[i];
            let next = self.vertices[(i + 1) % k];
            let e0 = cur - prev;
            let e1 = next - cur;
            let theta = e0.cross(e1).atan2(e0.dot(e1));
            s += cur * theta;
        }
        Ok(s / std::f64::consts::TAU)
    }

    /// `(1 − t)·a ⊕ t·b` by merging edge sequences in angular order.
    pub fn minkowski_interpolate(a: &Self, b: &Self, t: f64) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidInput("Minkowski combination of an empty polygon".into()));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidInput(format!(
                "interpolation parameter {t} outside [0,1]"
            )));
        }
        if t == 0.0 {
            return Ok(a.clone());
        }
        if t == 1.0 {
            return Ok(b.clone());
        }
        let pa = rotate_to_bottom(&a.scale(1.0 - t).vertices);
        let pb = rotate_to_bottom(&b.scale(t).vertices);
        let (na, nb) = (pa.len(), pb.len());
        let mut out = Vec::with_capacity(na + nb);
        let mut cur = pa[0] + pb[0];
        out.push(cur);
        let (mut i, mut j) = (0, 0);
        while i < na || j < nb {
            let ea = pa[(i + 1) % na] - pa[i % na];
            let eb = pb[(j + 1) % nb] - pb[j % nb];
            let c = ea.cross(eb);
            if j == nb || (i < na && c > 0.0) {
                cur += ea;
                i += 1;
            } else if i == na || c < 0.0 {
                cur += eb;
                j += 1;
            } else {
                cur += ea + eb;
                i += 1;
                j += 1;
            }
            out.push(cur);
        }
        out.pop();
        let diam = diameter_of(&out);
        let labels = vec![(); out.len()];
        let (v, _) = cleanup(out, labels, 1e-12 * diam);
        Ok(Self { vertices: v })
    }
}

fn rotate_to_bottom(v: &[Point2]) -> Vec<Point2> {
    let start = (0..v.len())
        .min_by(|&i, &j| {
            (v[i].y, v[i].x)
                .partial_cmp(&(v[j].y, v[j].x))
                .unwrap_or(Ordering::Equal)
        })
        .unwrap_or(0);
    v[start..].iter().chain(v[..start].iter()).copied().collect()
}

pub(crate) fn diameter_of(v: &[Point2]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            d = d.max(v[i].dist(v[j]));
        }
    }
    d
}

fn vertex_mean(v: &[Point2]) -> Point2 {
    let mut s = Point2::default();
    for p in v {
        s += *p;
    }
    s / v.len() as f64
}

pub(crate) fn polygon_area(v: &[Point2]) -> f64 {
    let k = v.len();
    if k < 3 {
        return 0.0;
    }
    let o = v[0];
    let mut a = 0.0;
    for i in 1..k - 1 {
        a += (v[i] - o).cross(v[i + 1] - o);
    }
    0.5 * a
}

pub(crate) fn polygon_centroid(v: &[Point2]) -> Result<Point2> {
    let k = v.len();
    if k < 3 {
        return Err(Error::Degenerate("centroid of a degenerate polygon".into()));
    }
    let o = v[0];
    let mut a = 0.0;
    let mut m = Point2::default();
    for i in 1..k - 1 {
        let t = (v[i] - o).cross(v[i + 1] - o);
        a += t;
        m += (v[i] - o + (v[i + 1] - o)) * t;
    }
    if !(a > 0.0) {
        return Err(Error::Degenerate("centroid of a zero-area polygon".into()));
    }
    Ok(o + m / (3.0 * a))
}

/// Clips a labeled convex polygon by `h`; `labels[i]` names edge `i → i+1`
/// and edges created on the clipping line receive `new_label`.
pub(crate) fn clip_labeled<L: Copy>(
    verts: &[Point2],
    labels: &[L],
    h: &HalfPlane,
    new_label: L,
    tol: f64,
) -> (Vec<Point2>, Vec<L>) {
    let k = verts.len();
    if k == 0 {
        return (Vec::new(), Vec::new());
    }
    let sides: Vec<Ordering> = verts.iter().map(|v| line_side(h.normal, h.offset, *v)).collect();
    if sides.iter().all(|s| *s != Ordering::Greater) {
        return (verts.to_vec(), labels.to_vec());
    }
    if sides.iter().all(|s| *s != Ordering::Less) {
        return (Vec::new(), Vec::new());
    }
    let vals: Vec<f64> = verts.iter().map(|v| h.eval(*v)).collect();
    let cut = |i: usize, j: usize| {
        let denom = vals[i] - vals[j];
        let t = if denom != 0.0 {
            (vals[i] / denom).clamp(0.0, 1.0)
        } else {
            0.5
        };
        verts[i].lerp(verts[j], t)
    };
    let mut out_v = Vec::with_capacity(k + 1);
    let mut out_l = Vec::with_capacity(k + 1);
    for i in 0..k {
        let j = (i + 1) % k;
        match (sides[i], sides[j]) {
            (Ordering::Less, Ordering::Greater) => {
                out_v.push(verts[i]);
                out_l.push(labels[i]);
                out_v.push(cut(i, j));
                out_l.push(new_label);
            }
            (Ordering::Less, _) => {
                out_v.push(verts[i]);
                out_l.push(labels[i]);
            }
            (Ordering::Equal, Ordering::Greater) => {
                out_v.push(verts[i]);
                out_l.push(new_label);
            }
            (Ordering::Equal, _) => {
                out_v.push(verts[i]);
                out_l.push(labels[i]);
            }
            (Ordering::Greater, Ordering::Less) => {
                out_v.push(cut(i, j));
                out_l.push(labels[i]);
            }
            (Ordering::Greater, _) => {}
        }
    }
    cleanup(out_v, out_l, tol)
}

/// Merges vertices closer than `tol` and drops collinear vertices.
pub(crate) fn cleanup<L: Copy>(mut v: Vec<Point2>, mut l: Vec<L>, tol: f64) -> (Vec<Point2>, Vec<L>) {
    // Merge near-duplicates; the merged vertex keeps the first position and
    // the outgoing label of the second.
    let mut changed = true;
    while changed && v.len() >= 2 {
        changed = false;
        let k = v.len();
        for i in 0..k {
            let j = (i + 1) % k;
            if v[i].dist(v[j]) <= tol {
                l[i] = l[j];
                v.remove(j);
                l.remove(j);
                changed = true;
                break;
            }
        }
    }
    // Drop vertices whose turn is numerically flat.
    let mut changed = true;
    while changed && v.len() >= 3 {
        changed = false;
        let k = v.len();
        for i in 0..k {
            let prev = (i + k - 1) % k;
            let next = (i + 1) % k;
            let span = v[next].dist(v[prev]);
            let turn = (v[i] - v[prev]).cross(v[next] - v[i]);
            if turn.abs() <= tol * span {
                let keep = if v[i].dist(v[prev]) >= v[next].dist(v[i]) {
                    l[prev]
                } else {
                    l[i]
                };
                l[prev] = keep;
                v.remove(i);
                l.remove(i);
                changed = true;
                break;
            }
        }
    }
    if v.len() < 3 {
        return (Vec::new(), Vec::new());
    }
    (v, l)
}

/// Convex polygonal domain whose boundary segments are its polygon edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexDomain {
    polygon: ConvexPolygon,
}

impl ConvexDomain {
    pub fn new(polygon: ConvexPolygon) -> Result<Self> {
        if polygon.len() < 3 || !(polygon.area() > 0.0) {
            return Err(Error::InvalidInput("domain polygon must have positive area".into()));
        }
        Ok(Self { polygon })
    }

    /// Axis-aligned square of the given side centered at the origin.
    pub fn square(side: f64) -> Result<Self> {
        if !(side > 0.0) || !side.is_finite() {
            return Err(Error::InvalidInput(format!("square side must be positive, got {side}")));
        }
        let h = 0.5 * side;
        Self::new(ConvexPolygon::rectangle(Point2::new(-h, -h), Point2::new(h, h))?)
    }

    pub fn polygon(&self) -> &ConvexPolygon {
        &self.polygon
    }

    pub fn num_segments(&self) -> usize {
        self.polygon.len()
    }

    /// Endpoints of boundary segment `s`, counterclockwise.
    pub fn segment(&self, s: usize) -> (Point2, Point2) {
        let v = self.polygon.vertices();
        (v[s], v[(s + 1) % v.len()])
    }

    /// Half-plane bounded by segment `s` and containing the domain.
    pub fn segment_halfplane(&self, s: usize) -> HalfPlane {
        let (a, b) = self.segment(s);
        let e = b - a;
        let normal = Point2::new(e.y, -e.x);
        HalfPlane {
            normal,
            offset: normal.dot(a),
        }
    }

    pub fn area(&self) -> f64 {
        self.polygon.area()
    }

    pub fn diameter(&self) -> f64 {
        self.polygon.diameter()
    }

    /// Largest distance from the origin to a point of the domain.
    pub fn radius(&self) -> f64 {
        self.polygon.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn contains(&self, y: Point2) -> bool {
        self.polygon.contains(y, 0.0)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in self.polygon.vertices() {
            lo = Point2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> ConvexPolygon {
        ConvexPolygon::rectangle(Point2::new(0.0, 0.0), Point2::new(1.0, 1.0)).unwrap()
    }

    fn hp(nx: f64, ny: f64, b: f64) -> HalfPlane {
        HalfPlane::new(Point2::new(nx, ny), b).unwrap()
    }

    fn random_convex(rng: &mut ChaCha8Rng) -> ConvexPolygon {
        let c = Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let r = rng.gen_range(0.3..2.0);
        let mut poly = ConvexPolygon::rectangle(c - Point2::new(r, r), c + Point2::new(r, r)).unwrap();
        for _ in 0..rng.gen_range(1..8) {
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let n = Point2::new(ang.cos(), ang.sin());
            let off = n.dot(c) + rng.gen_range(0.2..1.0) * r;
            poly = poly.clip(&HalfPlane::new(n, off).unwrap());
        }
        poly
    }

    #[test]
    fn clip_examples() {
        let sq = unit_square();
        let half = sq.clip(&hp(1.0, 0.0, 0.5));
        assert!((half.area() - 0.5).abs() < 1e-15);
        assert_eq!(sq.clip(&hp(1.0, 0.0, 2.0)), sq);
        assert!(sq.clip(&hp(1.0, 0.0, -1.0)).is_empty());
    }

    #[test]
    fn area_examples() {
        assert_eq!(unit_square().area(), 1.0);
        assert_eq!(ConvexPolygon::empty().area(), 0.0);
        let tri = ConvexPolygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ])
        .unwrap();
        assert_eq!(tri.area(), 0.5);
    }

    #[test]
    fn centroid_examples() {
        let sq2 = ConvexPolygon::rectangle(Point2::new(0.0, 0.0), Point2::new(2.0, 2.0)).unwrap();
        let c = sq2.centroid().unwrap();
        assert!((c.x - 1.0).abs() < 1e-15 && (c.y - 1.0).abs() < 1e-15);
        let tri = ConvexPolygon::new(vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(0.0, 3.0),
        ])
        .unwrap();
        let c = tri.centroid().unwrap();
        assert!((c.x - 1.0).abs() < 1e-15 && (c.y - 1.0).abs() < 1e-15);
        let c = unit_square().clip(&hp(0.0, 1.0, 0.5)).centroid().unwrap();
        assert!((c.x - 0.5).abs() < 1e-15 && (c.y - 0.25).abs() < 1e-15);
        assert!(ConvexPolygon::empty().centroid().is_err());
    }

    #[test]
    fn second_moment_examples() {
        assert!((unit_square().second_moment(Point2::new(0.0, 0.0)) - 2.0 / 3.0).abs() < 1e-15);
        let sq = ConvexPolygon::rectangle(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0)).unwrap();
        assert!((sq.second_moment(Point2::new(0.0, 0.0)) - 8.0 / 3.0).abs() < 1e-14);
        assert_eq!(ConvexPolygon::empty().second_moment(Point2::new(1.0, 1.0)), 0.0);
    }

    #[test]
    fn second_moment_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let poly = random_convex(&mut rng);
        let p = Point2::new(0.3, -0.7);
        let (lo, hi) = bbox(&poly);
        let n = 10_000_000usize;
        let mut acc = 0.0;
        for _ in 0..n {
            let y = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
            if poly.contains(y, 0.0) {
                acc += (y - p).norm2();
            }
        }
        let mc = acc / n as f64 * (hi.x - lo.x) * (hi.y - lo.y);
        let exact = poly.second_moment(p);
        assert!(((mc - exact) / exact).abs() < 1e-3, "mc {mc} exact {exact}");
    }

    fn bbox(p: &ConvexPolygon) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in p.vertices() {
            lo = Point2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Point2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    #[test]
    fn steiner_examples() {
        let sq = ConvexPolygon::rectangle(Point2::new(-1.0, -1.0), Point2::new(1.0, 1.0)).unwrap();
        let s = sq.steiner_point().unwrap();
        assert!(s.norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_convex(&mut rng);
            let b = random_convex(&mut rng);
            let v = Point2::new(0.7, -1.3);
            let sa = a.steiner_point().unwrap();
            let st = a.translate(v).steiner_point().unwrap();
            assert!((st - (sa + v)).norm() < 1e-12);
            let sb = b.steiner_point().unwrap();
            for t in [0.25, 0.5, 0.8] {
                let m = ConvexPolygon::minkowski_interpolate(&a, &b, t).unwrap();
                let sm = m.steiner_point().unwrap();
                let expect = sa * (1.0 - t) + sb * t;
                assert!((sm - expect).norm() < 1e-9, "{sm:?} vs {expect:?}");
            }
        }
    }

    #[test]
    fn minkowski_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let a = random_convex(&mut rng);
            let b = random_convex(&mut rng);
            assert_eq!(ConvexPolygon::minkowski_interpolate(&a, &b, 0.0).unwrap(), a);
            assert_eq!(ConvexPolygon::minkowski_interpolate(&a, &b, 1.0).unwrap(), b);
            let same = ConvexPolygon::minkowski_interpolate(&a, &a, 0.4).unwrap();
            assert!((same.area() - a.area()).abs() < 1e-12 * a.area());
            assert_eq!(same.len(), a.len());
            for t in [0.1, 0.5, 0.9] {
                let m = ConvexPolygon::minkowski_interpolate(&a, &b, t).unwrap();
                let lhs = m.area().sqrt();
                let rhs = (1.0 - t) * a.area().sqrt() + t * b.area().sqrt();
                assert!(lhs >= rhs - 1e-12, "Brunn-Minkowski violated: {lhs} < {rhs}");
            }
        }
    }

    #[test]
    fn polygon_rejects_clockwise_input() {
        let cw = vec![Point2::new(0.0, 0.0), Point2::new(0.0, 1.0), Point2::new(1.0, 0.0)];
        assert!(ConvexPolygon::new(cw).is_err());
    }

    #[test]
    fn clip_properties_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let poly = random_convex(&mut rng);
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let h = hp(ang.cos(), ang.sin(), rng.gen_range(-1.5..1.5));
            let once = poly.clip(&h);
            let twice = once.clip(&h);
            assert_eq!(once.len(), twice.len());
            for a in once.vertices() {
                let d = twice
                    .vertices()
                    .iter()
                    .map(|b| a.dist(*b))
                    .fold(f64::INFINITY, f64::min);
                assert!(d <= 1e-12);
            }
            let other = poly.clip(&h.reversed());
            let sum = once.area() + other.area();
            assert!((sum - poly.area()).abs() <= 1e-12 * poly.area());
            assert!(once.area() <= poly.area() * (1.0 + 1e-14));
            if once.area() > 1e-6 {
                let c = once.centroid().unwrap();
                assert!(once.contains(c, 0.0));
                assert!(once.contains(once.steiner_point().unwrap(), 0.0));
            }
        }
    }

    #[test]
    fn second_moment_parallel_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let poly = random_convex(&mut rng);
            let p = Point2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let c = poly.centroid().unwrap();
            let lhs = poly.second_moment(p);
            let rhs = poly.second_moment(c) + poly.area() * (p - c).norm2();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs);
        }
    }
}
