//! Synthetic activity images and the analytic disc sinogram.
//!
//! All lengths are in pixels and measured from the image center, with `x`
//! pointing right and `y` pointing up (see [`ScanGeometry::pixel_center`]).

use std::f64::consts::PI;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::grid::{ImageGrid, Sinogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomKind {
    Disc {
        radius: f64,
        center: (f64, f64),
    },
    TwoDiscs {
        r1: f64,
        r2: f64,
        c1: (f64, f64),
        c2: (f64, f64),
    },
    /// Two annuli sharing an outer radius.
    TwoRings {
        outer: f64,
        inner1: f64,
        inner2: f64,
        c1: (f64, f64),
        c2: (f64, f64),
    },
    /// Regular star polygon with `points` tips.
    Star {
        outer: f64,
        inner: f64,
        points: usize,
    },
    /// Rectangular frame of outer size `length x width` (x by y).
    ThinRectangle {
        length: f64,
        width: f64,
        border: f64,
    },
    /// Horizontal and vertical bars crossing at the center.
    Cross {
        horizontal: f64,
        vertical: f64,
        thickness: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Rendering {
    /// Pixel is inside iff its center is.
    #[default]
    Binary,
    /// Area fraction from 4x4 sub-pixel samples.
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    #[serde(flatten)]
    pub kind: PhantomKind,
    pub intensity: f64,
    #[serde(default)]
    pub rendering: Rendering,
}

/// Centers for two circles of radii `r1 >= r2` laid out side by side on the
/// x axis with a gap of `r1 / 2`, the pair centered on the origin.
fn side_by_side(r1: f64, r2: f64) -> ((f64, f64), (f64, f64)) {
    let half = 0.5 * (2.0 * r1 + 0.5 * r1 + 2.0 * r2);
    ((-half + r1, 0.0), (half - r2, 0.0))
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind) -> Self {
        Self {
            kind,
            intensity: 1.0,
            rendering: Rendering::Binary,
        }
    }

    pub fn disc(radius: f64) -> Self {
        Self::new(PhantomKind::Disc {
            radius,
            center: (0.0, 0.0),
        })
    }

    pub fn two_discs(r1: f64, r2: f64) -> Self {
        let (c1, c2) = side_by_side(r1, r2);
        Self::new(PhantomKind::TwoDiscs { r1, r2, c1, c2 })
    }

    /// Radii 26 and 11.
    pub fn two_discs_default() -> Self {
        Self::two_discs(26.0, 11.0)
    }

    pub fn two_rings(outer: f64, inner1: f64, inner2: f64) -> Self {
        let (c1, c2) = side_by_side(outer, outer);
        Self::new(PhantomKind::TwoRings {
            outer,
            inner1,
            inner2,
            c1,
            c2,
        })
    }

    /// Outer radius 25.5, inner radii 21 and 11.
    pub fn two_rings_default() -> Self {
        Self::two_rings(25.5, 21.0, 11.0)
    }

    pub fn star(outer: f64) -> Self {
        Self::new(PhantomKind::Star {
            outer,
            inner: 0.4 * outer,
            points: 5,
        })
    }

    /// 100 x 50 frame with a 2 pixel border.
    pub fn thin_rectangle() -> Self {
        Self::new(PhantomKind::ThinRectangle {
            length: 100.0,
            width: 50.0,
            border: 2.0,
        })
    }

    /// Bars of 121 and 100 pixels, 3 pixels thick.
    pub fn cross() -> Self {
        Self::new(PhantomKind::Cross {
            horizontal: 121.0,
            vertical: 100.0,
            thickness: 3.0,
        })
    }

    pub fn with_intensity(mut self, intensity: f64) -> Self {
        self.intensity = intensity;
        self
    }

    pub fn with_rendering(mut self, rendering: Rendering) -> Self {
        self.rendering = rendering;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PhantomKind::Disc { .. } => "disc",
            PhantomKind::TwoDiscs { .. } => "two_discs",
            PhantomKind::TwoRings { .. } => "two_rings",
            PhantomKind::Star { .. } => "star",
            PhantomKind::ThinRectangle { .. } => "thin_rectangle",
            PhantomKind::Cross { .. } => "cross",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("{}: {msg}", self.name())));
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return bad("intensity must be finite and nonnegative");
        }
        let positive = |vals: &[f64]| vals.iter().all(|v| v.is_finite() && *v > 0.0);
        match self.kind {
            PhantomKind::Disc { radius, .. } if !positive(&[radius]) => bad("radius must be positive"),
            PhantomKind::TwoDiscs { r1, r2, .. } if !positive(&[r1, r2]) => bad("radii must be positive"),
            PhantomKind::TwoRings { outer, inner1, inner2, .. } => {
                if !positive(&[outer, inner1, inner2]) || inner1 >= outer || inner2 >= outer {
                    bad("need 0 < inner < outer")
                } else {
                    Ok(())
                }
            }
            PhantomKind::Star { outer, inner, points } => {
                if !positive(&[outer, inner]) || inner >= outer || points < 2 {
                    bad("need 0 < inner < outer and at least 2 points")
                } else {
                    Ok(())
                }
            }
            PhantomKind::ThinRectangle { length, width, border } => {
                if !positive(&[length, width, border]) || 2.0 * border >= length.min(width) {
                    bad("border must be positive and thinner than half the frame")
                } else {
                    Ok(())
                }
            }
            PhantomKind::Cross { horizontal, vertical, thickness } if !positive(&[horizontal, vertical, thickness]) => {
                bad("bar sizes must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Axis-aligned bounding box `(x_min, x_max, y_min, y_max)` of the support.
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let circle = |(x, y): (f64, f64), r: f64| (x - r, x + r, y - r, y + r);
        let union = |a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)| {
            (a.0.min(b.0), a.1.max(b.1), a.2.min(b.2), a.3.max(b.3))
        };
        match self.kind {
            PhantomKind::Disc { radius, center } => circle(center, radius),
            PhantomKind::TwoDiscs { r1, r2, c1, c2 } => union(circle(c1, r1), circle(c2, r2)),
            PhantomKind::TwoRings { outer, c1, c2, .. } => union(circle(c1, outer), circle(c2, outer)),
            PhantomKind::Star { outer, .. } => circle((0.0, 0.0), outer),
            PhantomKind::ThinRectangle { length, width, .. } => {
                (-0.5 * length, 0.5 * length, -0.5 * width, 0.5 * width)
            }
            PhantomKind::Cross { horizontal, vertical, .. } => {
                (-0.5 * horizontal, 0.5 * horizontal, -0.5 * vertical, 0.5 * vertical)
            }
        }
    }

    /// Region predicate at physical point `(x, y)`.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let in_circle = |(cx, cy): (f64, f64), r: f64| (x - cx).powi(2) + (y - cy).powi(2) <= r * r;
        // half-open boxes so that an integer extent covers that many pixels
        let in_box = |hx: f64, hy: f64| x >= -hx && x < hx && y >= -hy && y < hy;
        match self.kind {
            PhantomKind::Disc { radius, center } => in_circle(center, radius),
            PhantomKind::TwoDiscs { r1, r2, c1, c2 } => in_circle(c1, r1) || in_circle(c2, r2),
            PhantomKind::TwoRings { outer, inner1, inner2, c1, c2 } => {
                (in_circle(c1, outer) && !in_circle(c1, inner1))
                    || (in_circle(c2, outer) && !in_circle(c2, inner2))
            }
            PhantomKind::Star { outer, inner, points } => in_star(x, y, outer, inner, points),
            PhantomKind::ThinRectangle { length, width, border } => {
                in_box(0.5 * length, 0.5 * width)
                    && !in_box(0.5 * length - border, 0.5 * width - border)
            }
            PhantomKind::Cross { horizontal, vertical, thickness } => {
                in_box(0.5 * horizontal, 0.5 * thickness) || in_box(0.5 * thickness, 0.5 * vertical)
            }
        }
    }

    pub fn render(&self, geom: &ScanGeometry) -> Result<ImageGrid> {
        self.validate()?;
        let (x0, x1, y0, y1) = self.bounds();
        let d = geom.pixel_size;
        let half_w = 0.5 * geom.image_cols as f64 * d;
        let half_h = 0.5 * geom.image_rows as f64 * d;
        let fov = geom.field_of_view_radius();
        let corner = x0.abs().max(x1.abs()).hypot(y0.abs().max(y1.abs()));
        let reach = match self.kind {
            PhantomKind::Disc { radius, center } => center.0.hypot(center.1) + radius,
            PhantomKind::TwoDiscs { r1, r2, c1, c2 } => {
                (c1.0.hypot(c1.1) + r1).max(c2.0.hypot(c2.1) + r2)
            }
            PhantomKind::TwoRings { outer, c1, c2, .. } => {
                (c1.0.hypot(c1.1) + outer).max(c2.0.hypot(c2.1) + outer)
            }
            PhantomKind::Star { outer, .. } => outer,
            _ => corner,
        };
        if x0 < -half_w || x1 > half_w || y0 < -half_h || y1 > half_h || reach > fov {
            return Err(Error::InvalidArgument(format!(
                "{} does not fit inside the field of view",
                self.name()
            )));
        }

        let mut img = ImageGrid::zeros(geom);
        let sub = match self.rendering {
            Rendering::Binary => 1,
            Rendering::Smooth => 4,
        };
        for ((i, j), px) in img.data.indexed_iter_mut() {
            let (cx, cy) = geom.pixel_center(i, j);
            let mut hits = 0usize;
            for a in 0..sub {
                for b in 0..sub {
                    let ox = ((a as f64 + 0.5) / sub as f64 - 0.5) * d;
                    let oy = ((b as f64 + 0.5) / sub as f64 - 0.5) * d;
                    if self.contains(cx + ox, cy + oy) {
                        hits += 1;
                    }
                }
            }
            *px = self.intensity * hits as f64 / (sub * sub) as f64;
        }
        Ok(img)
    }
}

fn in_star(x: f64, y: f64, outer: f64, inner: f64, points: usize) -> bool {
    // vertices alternate outer/inner, first tip pointing up
    let n = 2 * points;
    let vertex = |k: usize| {
        let r = if k.is_multiple_of(2) { outer } else { inner };
        let t = PI / 2.0 + PI * k as f64 / points as f64;
        (r * t.cos(), r * t.sin())
    };
    let mut inside = false;
    for k in 0..n {
        let (xa, ya) = vertex(k);
        let (xb, yb) = vertex((k + 1) % n);
        if (ya > y) != (yb > y) && x < xa + (y - ya) * (xb - xa) / (yb - ya) {
            inside = !inside;
        }
    }
    inside
}

/// Sinogram of a unit-intensity centered disc: `2 sqrt(r^2 - s^2)` for
/// `|s| < r`, independent of angle.
pub fn analytic_disc_sinogram(r: f64, geom: &ScanGeometry) -> Result<Sinogram> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidArgument(format!("disc radius must be positive, got {r}")));
    }
    if r >= geom.field_of_view_radius() {
        return Err(Error::InvalidArgument(format!(
            "disc radius {r} exceeds the field of view"
        )));
    }
    let mut g = Sinogram::zeros(geom);
    for b in 0..geom.num_bins {
        let s = geom.bin_center(b);
        let value = disc_chord(r, s);
        g.data.row_mut(b).fill(value);
    }
    Ok(g)
}

pub(crate) fn disc_chord(r: f64, s: f64) -> f64 {
    if s.abs() < r {
        2.0 * (r * r - s * s).sqrt()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Row,
    Col,
}

/// Central row (index `rows / 2`) or central column of an image.
pub fn middle_line_profile(u: &ImageGrid, axis: Axis) -> Array1<f64> {
    let (rows, cols) = u.shape();
    match axis {
        Axis::Row => u.data.row(rows / 2).to_owned(),
        Axis::Col => u.data.column(cols / 2).to_owned(),
    }
}
