//! Exact overlap of convex polygons with the pixels of a regular grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom2d::{ConvexPolygon, HalfPlane, Point2};

/// `nx × ny` pixels covering the box `[min, max]`, indexed row-major from
/// the bottom-left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min: Point2,
    pub max: Point2,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(min: Point2, max: Point2, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !(max.x > min.x && max.y > min.y) {
            return Err(Error::InvalidInput("grid needs a positive size and resolution".into()));
        }
        Ok(Self { min, max, nx, ny })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        (self.max.x - self.min.x) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.max.y - self.min.y) / self.ny as f64
    }

    pub fn pixel_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    fn corner(&self, i: usize, j: usize) -> Point2 {
        let x = if i == self.nx {
            self.max.x
        } else {
            self.min.x + i as f64 * self.dx()
        };
        let y = if j == self.ny {
            self.max.y
        } else {
            self.min.y + j as f64 * self.dy()
        };
        Point2::new(x, y)
    }

    pub fn center(&self, k: usize) -> Point2 {
        let (i, j) = (k % self.nx, k / self.nx);
        self.corner(i, j).lerp(self.corner(i + 1, j + 1), 0.5)
    }

    pub fn centers(&self) -> Vec<Point2> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }

    pub fn pixel(&self, k: usize) -> ConvexPolygon {
        let (i, j) = (k % self.nx, k / self.nx);
        ConvexPolygon::rectangle(self.corner(i, j), self.corner(i + 1, j + 1)).expect("grid pixels have positive size")
    }

    /// Column/row range of pixels meeting `[lo, hi]`.
    fn range(&self, lo: f64, hi: f64, origin: f64, h: f64, n: usize) -> (usize, usize) {
        let a = ((lo - origin) / h).floor().max(0.0) as usize;
        let b = (((hi - origin) / h).ceil().max(0.0) as usize).min(n);
        (a.min(n), b)
    }

    /// `(pixel, area)` pairs with positive intersection area.
    pub fn overlaps(&self, poly: &ConvexPolygon) -> Vec<(usize, f64)> {
        let v = poly.vertices();
        if v.len() < 3 {
            return Vec::new();
        }
        let (mut lo, mut hi) = (v[0], v[0]);
        for p in v {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let (i0, i1) = self.range(lo.x, hi.x, self.min.x, self.dx(), self.nx);
        let (j0, j1) = self.range(lo.y, hi.y, self.min.y, self.dy(), self.ny);
        let mut out = Vec::new();
        for j in j0..j1 {
            let (y0, y1) = (self.corner(0, j).y, self.corner(0, j + 1).y);
            let row = poly
                .clip(&HalfPlane {
                    normal: Point2::new(0.0, -1.0),
                    offset: -y0,
                })
                .clip(&HalfPlane {
                    normal: Point2::new(0.0, 1.0),
                    offset: y1,
                });
            if row.len() < 3 {
                continue;
            }
            for i in i0..i1 {
                let (x0, x1) = (self.corner(i, 0).x, self.corner(i + 1, 0).x);
                let a = row
                    .clip(&HalfPlane {
                        normal: Point2::new(-1.0, 0.0),
                        offset: -x0,
                    })
                    .clip(&HalfPlane {
                        normal: Point2::new(1.0, 0.0),
                        offset: x1,
                    })
                    .area();
                if a > 0.0 {
                    out.push((self.index(i, j), a));
                }
            }
        }
        out
    }

    /// Spreads each mass over the pixels met by its polygon in proportion to
    /// the overlap areas, so every polygon's mass is conserved exactly.
    pub fn rasterize(&self, polys: &[ConvexPolygon], masses: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (poly, m) in polys.iter().zip(masses) {
            let ov = self.overlaps(poly);
            let total: f64 = ov.iter().map(|(_, a)| a).sum();
            if total > 0.0 {
                for (k, a) in ov {
                    out[k] += m * a / total;
                }
            }
        }
        out
    }
}
