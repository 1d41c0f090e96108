//! Planar cross-sections of pegs and holes.
//!
//! Polygons are regular and centred on the axis. The square has edges
//! parallel to the frame axes; the triangle is equilateral with one vertex
//! on `+x`.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum CrossSection {
    Round { radius: f64 },
    Square { side: f64 },
    Triangle { side: f64 },
}

impl CrossSection {
    pub fn validate(&self) -> Result<()> {
        let size = match *self {
            CrossSection::Round { radius } => radius,
            CrossSection::Square { side } | CrossSection::Triangle { side } => side,
        };
        if !(size.is_finite() && size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cross-section size must be positive, got {size}"
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            CrossSection::Round { .. } => "round",
            CrossSection::Square { .. } => "square",
            CrossSection::Triangle { .. } => "triangle",
        }
    }

    /// Same shape with every length multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> CrossSection {
        match *self {
            CrossSection::Round { radius } => CrossSection::Round {
                radius: radius * factor,
            },
            CrossSection::Square { side } => CrossSection::Square {
                side: side * factor,
            },
            CrossSection::Triangle { side } => CrossSection::Triangle {
                side: side * factor,
            },
        }
    }

    /// Distance from the centre to the nearest boundary point.
    pub fn inradius(&self) -> f64 {
        match *self {
            CrossSection::Round { radius } => radius,
            CrossSection::Square { side } => side / 2.0,
            CrossSection::Triangle { side } => side / (2.0 * 3f64.sqrt()),
        }
    }

    pub fn circumradius(&self) -> f64 {
        match *self {
            CrossSection::Round { radius } => radius,
            CrossSection::Square { side } => side / 2f64.sqrt(),
            CrossSection::Triangle { side } => side / 3f64.sqrt(),
        }
    }

    fn vertices(&self) -> Vec<Vec2> {
        match *self {
            CrossSection::Round { .. } => Vec::new(),
            CrossSection::Square { side } => {
                let h = side / 2.0;
                vec![
                    Vec2::new(h, -h),
                    Vec2::new(h, h),
                    Vec2::new(-h, h),
                    Vec2::new(-h, -h),
                ]
            }
            CrossSection::Triangle { .. } => {
                let r = self.circumradius();
                (0..3)
                    .map(|k| {
                        let a = 2.0 * PI * k as f64 / 3.0;
                        Vec2::new(r * a.cos(), r * a.sin())
                    })
                    .collect()
            }
        }
    }

    /// Signed distance to the boundary (negative inside) and the outward unit
    /// normal of the nearest boundary feature.
    pub fn signed_distance(&self, p: &Vec2) -> (f64, Vec2) {
        match *self {
            CrossSection::Round { radius } => {
                let r = p.norm();
                let n = if r > 0.0 { p / r } else { Vec2::x() };
                (r - radius, n)
            }
            _ => polygon_sdf(&self.vertices(), self.inradius(), p),
        }
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        self.signed_distance(p).0 < 0.0
    }

    /// `n` boundary points spaced evenly by arc length, starting on the
    /// positive x-axis side.
    pub fn perimeter_points(&self, n: usize) -> Vec<Vec2> {
        match *self {
            CrossSection::Round { radius } => (0..n)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    Vec2::new(radius * a.cos(), radius * a.sin())
                })
                .collect(),
            _ => {
                let v = self.vertices();
                let m = v.len();
                let edge = (v[1] - v[0]).norm();
                let total = edge * m as f64;
                (0..n)
                    .map(|k| {
                        let s = total * k as f64 / n as f64;
                        let i = ((s / edge) as usize).min(m - 1);
                        let t = (s - i as f64 * edge) / edge;
                        v[i] + (v[(i + 1) % m] - v[i]) * t
                    })
                    .collect()
            }
        }
    }

    /// About `n` points strictly inside the section: the centre plus
    /// concentric scaled copies of the boundary.
    pub fn interior_points(&self, n: usize) -> Vec<Vec2> {
        const RINGS: usize = 4;
        let mut out = vec![Vec2::zeros()];
        if n <= 1 {
            return out;
        }
        let weights: Vec<f64> = (1..=RINGS).map(|j| j as f64 - 0.5).collect();
        let wsum: f64 = weights.iter().sum();
        let mut remaining = n - 1;
        for (j, w) in weights.iter().enumerate() {
            let count = if j + 1 == RINGS {
                remaining
            } else {
                ((((n - 1) as f64) * w / wsum).round() as usize).min(remaining)
            };
            remaining -= count;
            if count == 0 {
                continue;
            }
            let scale = w / RINGS as f64;
            out.extend(self.perimeter_points(count).into_iter().map(|p| p * scale));
        }
        out
    }
}

fn polygon_sdf(vertices: &[Vec2], apothem: f64, p: &Vec2) -> (f64, Vec2) {
    let m = vertices.len();
    let mut best_line = f64::NEG_INFINITY;
    let mut best_normal = Vec2::x();
    for i in 0..m {
        let e = vertices[(i + 1) % m] - vertices[i];
        let n = Vec2::new(e.y, -e.x).normalize();
        let d = n.dot(p) - apothem;
        if d > best_line {
            best_line = d;
            best_normal = n;
        }
    }
    if best_line <= 0.0 {
        return (best_line, best_normal);
    }
    // outside: exact distance to the nearest segment
    let mut best = f64::INFINITY;
    let mut normal = best_normal;
    for i in 0..m {
        let a = vertices[i];
        let e = vertices[(i + 1) % m] - a;
        let t = ((p - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
        let q = a + e * t;
        let d = (p - q).norm();
        if d < best {
            best = d;
            normal = if d > 0.0 { (p - q) / d } else { best_normal };
        }
    }
    (best, normal)
}

/// Smallest gap between the peg boundary and the hole boundary when both are
/// centred and aligned. Positive means the peg fits.
pub fn centred_clearance(peg: &CrossSection, hole: &CrossSection) -> f64 {
    peg.perimeter_points(720)
        .iter()
        .map(|p| -hole.signed_distance(p).0)
        .fold(f64::INFINITY, f64::min)
}
