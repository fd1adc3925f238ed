//! Bounded model domains in one and two dimensions.
//!
//! Every shape is convex, so a ray leaving an interior point crosses the
//! boundary exactly once; the grid builder relies on this when it cuts
//! stencil arms.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which part of the boundary a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPortion {
    Endpoint,
    Side,
    Curved,
    /// The flat piece `{x_2 = -ν}` of a half disc.
    Flat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
    Disc { center: [f64; 2], radius: f64 },
    /// `B_1(0) ∩ {x_2 > -ν}` with `ν ∈ [0, 1]`.
    HalfDisc { nu: f64 },
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        let d = Domain::Interval { a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        let d = Domain::Rectangle { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn disc(center: [f64; 2], radius: f64) -> Result<Self> {
        let d = Domain::Disc { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn half_disc(nu: f64) -> Result<Self> {
        let d = Domain::HalfDisc { nu };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_square() -> Self {
        Domain::Rectangle {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            Domain::Interval { a, b } => {
                if !finite(&[a, b]) || b <= a {
                    return Err(invalid(format!("interval needs a < b, got ({a}, {b})")));
                }
            }
            Domain::Rectangle { lo, hi } => {
                if !finite(&[lo[0], lo[1], hi[0], hi[1]]) || hi[0] <= lo[0] || hi[1] <= lo[1] {
                    return Err(invalid("rectangle needs lo < hi in both coordinates"));
                }
            }
            Domain::Disc { center, radius } => {
                if !finite(&[center[0], center[1], radius]) || radius <= 0.0 {
                    return Err(invalid("disc needs a positive finite radius"));
                }
            }
            Domain::HalfDisc { nu } => {
                if !(0.0..=1.0).contains(&nu) {
                    return Err(invalid(format!("half disc needs ν ∈ [0,1], got {nu}")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`; the second coordinate is 0 in 1D.
    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Domain::Interval { a, b } => ([a, 0.0], [b, 0.0]),
            Domain::Rectangle { lo, hi } => (lo, hi),
            Domain::Disc { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Domain::HalfDisc { nu } => ([-1.0, -nu], [1.0, 1.0]),
        }
    }

    /// Signed distance-like margin: positive inside, zero on the boundary,
    /// negative outside. Exact distance for every shape except the corners
    /// of rectangles and half discs, where it is the minimum over faces.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match *self {
            Domain::Interval { a, b } => (x[0] - a).min(b - x[0]),
            Domain::Rectangle { lo, hi } => (x[0] - lo[0])
                .min(hi[0] - x[0])
                .min(x[1] - lo[1])
                .min(hi[1] - x[1]),
            Domain::Disc { center, radius } => {
                radius - ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt()
            }
            Domain::HalfDisc { nu } => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                (1.0 - r).min(x[1] + nu)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.margin(x) > 0.0
    }

    /// Distance to the boundary for points inside, 0 outside.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        self.margin(x).max(0.0)
    }

    /// Smallest `t > 0` with `x + t·d` on the boundary, for `x` inside.
    pub fn ray_exit(&self, x: &[f64], d: &[f64]) -> f64 {
        let slab = |lo: f64, hi: f64, p: f64, v: f64| -> f64 {
            if v > 0.0 {
                (hi - p) / v
            } else if v < 0.0 {
                (lo - p) / v
            } else {
                f64::INFINITY
            }
        };
        let circle = |c: [f64; 2], r: f64| -> f64 {
            let (px, py) = (x[0] - c[0], x[1] - c[1]);
            let a = d[0] * d[0] + d[1] * d[1];
            let b = px * d[0] + py * d[1];
            let cc = px * px + py * py - r * r;
            let disc = (b * b - a * cc).max(0.0);
            // cc < 0 inside, so the root below is the positive one
            (-b + disc.sqrt()) / a
        };
        match *self {
            Domain::Interval { a, b } => slab(a, b, x[0], d[0]),
            Domain::Rectangle { lo, hi } => {
                slab(lo[0], hi[0], x[0], d[0]).min(slab(lo[1], hi[1], x[1], d[1]))
            }
            Domain::Disc { center, radius } => circle(center, radius),
            Domain::HalfDisc { nu } => {
                let t = circle([0.0, 0.0], 1.0);
                if d[1] < 0.0 {
                    t.min((-nu - x[1]) / d[1])
                } else {
                    t
                }
            }
        }
    }

    /// Boundary label of a point lying on the boundary.
    pub fn portion(&self, x: &[f64]) -> BoundaryPortion {
        match *self {
            Domain::Interval { .. } => BoundaryPortion::Endpoint,
            Domain::Rectangle { .. } => BoundaryPortion::Side,
            Domain::Disc { .. } => BoundaryPortion::Curved,
            Domain::HalfDisc { nu } => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                if (x[1] + nu).abs() <= (1.0 - r).abs() {
                    BoundaryPortion::Flat
                } else {
                    BoundaryPortion::Curved
                }
            }
        }
    }

    /// Inward unit normal at a boundary point (one face is picked at corners).
    pub fn inward_normal(&self, x: &[f64]) -> [f64; 2] {
        match *self {
            Domain::Interval { a, b } => {
                if (x[0] - a).abs() <= (x[0] - b).abs() {
                    [1.0, 0.0]
                } else {
                    [-1.0, 0.0]
                }
            }
            Domain::Rectangle { lo, hi } => {
                let faces = [
                    ((x[0] - lo[0]).abs(), [1.0, 0.0]),
                    ((hi[0] - x[0]).abs(), [-1.0, 0.0]),
                    ((x[1] - lo[1]).abs(), [0.0, 1.0]),
                    ((hi[1] - x[1]).abs(), [0.0, -1.0]),
                ];
                faces
                    .iter()
                    .min_by(|p, q| p.0.total_cmp(&q.0))
                    .map(|f| f.1)
                    .unwrap_or([1.0, 0.0])
            }
            Domain::Disc { center, .. } => {
                let (dx, dy) = (center[0] - x[0], center[1] - x[1]);
                let r = (dx * dx + dy * dy).sqrt().max(f64::MIN_POSITIVE);
                [dx / r, dy / r]
            }
            Domain::HalfDisc { .. } => match self.portion(x) {
                BoundaryPortion::Flat => [0.0, 1.0],
                _ => {
                    let r = (x[0] * x[0] + x[1] * x[1]).sqrt().max(f64::MIN_POSITIVE);
                    [-x[0] / r, -x[1] / r]
                }
            },
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { lo, hi } => ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt(),
            Domain::Disc { radius, .. } => 2.0 * radius,
            Domain::HalfDisc { .. } => 2.0,
        }
    }

    /// Lebesgue measure (length in 1D, area in 2D).
    pub fn measure(&self) -> f64 {
        match *self {
            Domain::Interval { a, b } => b - a,
            Domain::Rectangle { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
            Domain::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
            Domain::HalfDisc { nu } => {
                let cut = nu.acos() - nu * (1.0 - nu * nu).max(0.0).sqrt();
                std::f64::consts::PI - cut
            }
        }
    }
}
