//! CSV input and CSV, JSON and SVG artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use jkoflow::energy::DiscreteMeasure;
use jkoflow::raster::Grid;
use jkoflow::{ConvexDomain, ConvexPolygon, Point2};
use serde::Serialize;

use crate::error::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Reads sites from a CSV file with a header row and columns `x,y[,mass]`.
/// Masses default to uniform and are normalized to sum to one.
pub fn load_points_csv(path: &Path) -> Result<DiscreteMeasure, CliError> {
    let bad = |message: String| CliError::Config {
        key: "points.csv".into(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(cx), Some(cy)) = (col("x"), col("y")) else {
        return Err(bad("header must name columns x and y".into()));
    };
    let cm = col("mass");
    let mut points = Vec::new();
    let mut masses = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize, name: &str| -> Result<f64, CliError> {
            let raw = rec.get(c).ok_or_else(|| bad(format!("line {line}: missing {name}")))?;
            let v: f64 = raw
                .parse()
                .map_err(|_| bad(format!("line {line}: {name} `{raw}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("line {line}: {name} is not finite")));
            }
            Ok(v)
        };
        points.push(Point2::new(field(cx, "x")?, field(cy, "y")?));
        let m = match cm {
            Some(c) => field(c, "mass")?,
            None => 1.0,
        };
        if !(m > 0.0) {
            return Err(bad(format!("line {line}: mass must be positive, got {m}")));
        }
        masses.push(m);
    }
    if points.is_empty() {
        return Err(bad("no points".into()));
    }
    DiscreteMeasure::normalized(points, masses).map_err(|e| bad(e.to_string()))
}

pub fn write_points_csv(path: &Path, points: &[Point2], masses: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["x", "y", "mass"]).map_err(csv_err(path))?;
    for (p, m) in points.iter().zip(masses) {
        w.write_record([p.x.to_string(), p.y.to_string(), m.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_grid_csv(path: &Path, grid: &Grid, masses: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["i", "j", "x", "y", "mass", "density"])
        .map_err(csv_err(path))?;
    let h2 = grid.pixel_area();
    for (k, m) in masses.iter().enumerate() {
        let c = grid.center(k);
        w.write_record([
            (k % grid.nx).to_string(),
            (k / grid.nx).to_string(),
            c.x.to_string(),
            c.y.to_string(),
            m.to_string(),
            (m / h2).to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Output directory that remembers the files written to it.
pub struct OutDir {
    pub root: PathBuf,
    pub files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Path of `name` inside the directory, recorded for the manifest.
    pub fn file(&mut self, name: String) -> PathBuf {
        let p = self.root.join(&name);
        self.files.push(name);
        p
    }
}

/// Linear density color scale from 0 to `max`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ColorScale {
    pub quantity: &'static str,
    pub min: f64,
    pub max: f64,
    pub colormap: &'static str,
}

impl ColorScale {
    pub fn density(max: f64) -> Self {
        Self {
            quantity: "density",
            min: 0.0,
            max,
            colormap: "viridis",
        }
    }

    fn color(&self, v: f64) -> String {
        const STOPS: [[f64; 3]; 5] = [
            [68.0, 1.0, 84.0],
            [59.0, 82.0, 139.0],
            [33.0, 145.0, 140.0],
            [94.0, 201.0, 98.0],
            [253.0, 231.0, 37.0],
        ];
        let t = ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0);
        let x = t * (STOPS.len() - 1) as f64;
        let i = (x.floor() as usize).min(STOPS.len() - 2);
        let f = x - i as f64;
        let c: Vec<u8> = (0..3)
            .map(|k| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8)
            .collect();
        format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
    }
}

/// Polygons filled by value on `scale`, with optional site markers, drawn
/// in domain coordinates with the y axis pointing up.
pub fn svg_snapshot(
    domain: &ConvexDomain,
    polys: &[ConvexPolygon],
    values: &[f64],
    sites: &[Point2],
    scale: &ColorScale,
) -> String {
    let (lo, hi) = domain.bounding_box();
    let size = (hi.x - lo.x).max(hi.y - lo.y);
    let pad = 0.02 * size;
    let stroke = 0.002 * size;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="600" height="{:.0}" viewBox="{:.6} {:.6} {:.6} {:.6}">"#,
        600.0 * (hi.y - lo.y + 2.0 * pad) / (hi.x - lo.x + 2.0 * pad),
        lo.x - pad,
        lo.y - pad,
        hi.x - lo.x + 2.0 * pad,
        hi.y - lo.y + 2.0 * pad
    );
    let _ = writeln!(s, r#"<g transform="matrix(1 0 0 -1 0 {:.6})">"#, lo.y + hi.y);
    for (poly, v) in polys.iter().zip(values) {
        if poly.is_empty() {
            continue;
        }
        let pts: Vec<String> = poly
            .vertices()
            .iter()
            .map(|p| format!("{:.6},{:.6}", p.x, p.y))
            .collect();
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="{}" stroke="#ffffff" stroke-width="{stroke:.6}"/>"##,
            pts.join(" "),
            scale.color(*v)
        );
    }
    let outline: Vec<String> = domain
        .polygon()
        .vertices()
        .iter()
        .map(|p| format!("{:.6},{:.6}", p.x, p.y))
        .collect();
    let _ = writeln!(
        s,
        r##"<polygon points="{}" fill="none" stroke="#000000" stroke-width="{:.6}"/>"##,
        outline.join(" "),
        2.0 * stroke
    );
    for p in sites {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.6}" cy="{:.6}" r="{:.6}" fill="#d62728"/>"##,
            p.x,
            p.y,
            2.0 * stroke
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_scale_ends() {
        let c = ColorScale::density(2.0);
        assert_eq!(c.color(0.0), "#440154");
        assert_eq!(c.color(5.0), "#fde725");
    }
}
