//! Adaptive-precision sign predicates.
//!
//! Orientation and lifted orientation tests come from Shewchuk's adaptive
//! routines (via the `robust` crate). The affine line-side test is evaluated
//! with a floating-point filter and falls back to an exact expansion built
//! from error-free products when the filter cannot certify the sign.

use std::cmp::Ordering;

use crate::geom2d::Point2;

#[inline]
fn coord(p: Point2) -> robust::Coord<f64> {
    robust::Coord { x: p.x, y: p.y }
}

/// Twice the signed area of `(a, b, c)`; positive when counterclockwise.
/// The sign is exact.
#[inline]
pub fn orient2d(a: Point2, b: Point2, c: Point2) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

/// Sign of the lifted orientation test for the lower convex hull of
/// `(p, height(p))`. For `a, b, c` counterclockwise in the plane, the
/// result is positive iff the lifted `d` lies strictly below the plane
/// through the lifted `a, b, c`.
#[inline]
pub fn lifted_orient(a: (Point2, f64), b: (Point2, f64), c: (Point2, f64), d: (Point2, f64)) -> f64 {
    let l = |(p, z): (Point2, f64)| robust::Coord3D { x: p.x, y: p.y, z };
    robust::orient3d(l(a), l(b), l(c), l(d))
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bv = s - a;
    let av = s - bv;
    (s, (a - av) + (b - bv))
}

#[inline]
fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Adds `b` to a nonoverlapping expansion (components in increasing magnitude).
fn grow_expansion(e: &mut Vec<f64>, b: f64) {
    let mut q = b;
    for c in e.iter_mut() {
        let (s, err) = two_sum(q, *c);
        *c = err;
        q = s;
    }
    e.push(q);
}

fn expansion_sign(terms: &[f64]) -> Ordering {
    let mut e: Vec<f64> = Vec::with_capacity(terms.len() * 2);
    for &t in terms {
        grow_expansion(&mut e, t);
    }
    e.iter()
        .rev()
        .find(|c| **c != 0.0)
        .map(|c| c.partial_cmp(&0.0).unwrap_or(Ordering::Equal))
        .unwrap_or(Ordering::Equal)
}

/// Exact sign of `⟨n, v⟩ − b`.
pub fn line_side(n: Point2, b: f64, v: Point2) -> Ordering {
    let s = n.x * v.x + n.y * v.y - b;
    let mag = (n.x * v.x).abs() + (n.y * v.y).abs() + b.abs();
    // 4 roundings at most, each bounded by eps/2 of the running magnitude.
    let bound = 4.0 * f64::EPSILON * mag;
    if s > bound {
        return Ordering::Greater;
    }
    if s < -bound {
        return Ordering::Less;
    }
    let (p1, e1) = two_product(n.x, v.x);
    let (p2, e2) = two_product(n.y, v.y);
    expansion_sign(&[e1, e2, p1, p2, -b])
}

/// Exact sign of `⟨d, q⟩ − ⟨d, p⟩`.
pub fn dot_diff_sign(d: Point2, q: Point2, p: Point2) -> Ordering {
    let (a1, e1) = two_product(d.x, q.x);
    let (a2, e2) = two_product(d.y, q.y);
    let (b1, f1) = two_product(d.x, p.x);
    let (b2, f2) = two_product(d.y, p.y);
    expansion_sign(&[e1, e2, -f1, -f2, a1, a2, -b1, -b2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orient_signs() {
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(1.0, 0.0);
        assert!(orient2d(a, b, Point2::new(0.0, 1.0)) > 0.0);
        assert!(orient2d(a, b, Point2::new(0.0, -1.0)) < 0.0);
        assert_eq!(orient2d(a, b, Point2::new(7.0, 0.0)), 0.0);
    }

    #[test]
    fn lifted_orient_matches_paraboloid_incircle() {
        let lift = |p: Point2| (p, p.x * p.x + p.y * p.y);
        let a = Point2::new(1.0, 0.0);
        let b = Point2::new(0.0, 1.0);
        let c = Point2::new(-1.0, 0.0);
        assert!(lifted_orient(lift(a), lift(b), lift(c), lift(Point2::new(0.1, 0.2))) > 0.0);
        assert!(lifted_orient(lift(a), lift(b), lift(c), lift(Point2::new(2.0, 0.2))) < 0.0);
        assert_eq!(
            lifted_orient(lift(a), lift(b), lift(c), lift(Point2::new(0.0, -1.0))),
            0.0
        );
    }

    #[test]
    fn line_side_near_zero_is_exact() {
        // 0.1 * 3 is not exactly 0.3 in binary; the exact sign must be found.
        let n = Point2::new(0.1, 0.0);
        let v = Point2::new(3.0, 5.0);
        let exact = {
            let (p, e) = two_product(0.1, 3.0);
            expansion_sign(&[e, p, -0.3])
        };
        assert_eq!(line_side(n, 0.3, v), exact);
        assert_eq!(
            line_side(Point2::new(1.0, 1.0), 2.0, Point2::new(1.0, 1.0)),
            Ordering::Equal
        );
        assert_eq!(
            line_side(Point2::new(1.0, 1.0), 2.0, Point2::new(1.0, 1.5)),
            Ordering::Greater
        );
    }

    #[test]
    fn dot_diff_detects_exact_ties() {
        let d = Point2::new(0.0, 1.0);
        assert_eq!(
            dot_diff_sign(d, Point2::new(3.0, 0.1), Point2::new(-2.0, 0.1)),
            Ordering::Equal
        );
        assert_eq!(
            dot_diff_sign(d, Point2::new(3.0, 0.1), Point2::new(-2.0, 0.0)),
            Ordering::Greater
        );
    }
}
