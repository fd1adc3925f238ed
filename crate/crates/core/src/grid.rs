//! Uniform Cartesian grids over a [`Domain`].
//!
//! Lattice points strictly inside the domain become interior nodes. Lattice
//! points on the boundary, plus the points where stencil arms leave the
//! domain, become boundary nodes. Every interior node stores one arm per ray
//! of the line dictionary, so any scheme up to the 16-ray stencil can be
//! assembled without touching the domain geometry again.

use std::collections::HashMap;

use serde::Serialize;

use crate::domain::{BoundaryPortion, Domain};
use crate::error::{invalid, Result};

/// Integer line directions. Consecutive pairs are orthogonal frames.
pub const LINES: [[i32; 2]; 8] = [
    [1, 0],
    [0, 1],
    [1, 1],
    [1, -1],
    [2, 1],
    [1, -2],
    [1, 2],
    [2, -1],
];

/// Lattice points closer than this fraction of `h` to the boundary are
/// dropped; their neighbors reach the exact boundary through cut arms
/// instead. Keeps every arm fraction bounded below.
const SNAP_FRACTION: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Interior,
    Boundary(BoundaryPortion),
}

#[derive(Clone, Debug, Serialize)]
pub struct Node {
    pub x: [f64; 2],
    pub kind: NodeKind,
    /// Lattice index `(i, j)` for lattice nodes, `None` for cut points.
    pub lattice: Option<[usize; 2]>,
}

/// One stencil arm: the neighbor reached and the arm length as a fraction
/// of the full lattice step along that line. Fractions exceed 1 only when
/// the arm skips a dropped near-boundary lattice point. Boundary exits
/// closer than about `1e-7·h` share one node, so a cut arm's target can sit
/// that far from the exact exit point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arm {
    pub target: usize,
    pub frac: f64,
}

#[derive(Clone, Debug)]
pub struct Grid {
    domain: Domain,
    h: f64,
    lo: [f64; 2],
    dims: [usize; 2],
    nodes: Vec<Node>,
    n_interior: usize,
    lattice_map: Vec<Option<usize>>,
    nlines: usize,
    arms: Vec<Arm>,
}

impl Grid {
    pub fn new(domain: Domain, h: f64) -> Result<Self> {
        domain.validate()?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("grid spacing must be positive, got {h}")));
        }
        let dim = domain.dim();
        let (lo, hi) = domain.bounding_box();
        let count = |a: f64, b: f64| ((b - a) / h + 1e-9).floor() as usize + 1;
        let dims = if dim == 1 {
            [count(lo[0], hi[0]), 1]
        } else {
            [count(lo[0], hi[0]), count(lo[1], hi[1])]
        };
        if dims[0] * dims[1] > 4_000_000 {
            return Err(invalid("grid too large (more than 4e6 lattice points)"));
        }
        let nlines = if dim == 1 { 1 } else { LINES.len() };
        let on_tol = 1e-10 * h;

        let lattice_point = |i: usize, j: usize| -> [f64; 2] {
            if dim == 1 {
                [lo[0] + i as f64 * h, 0.0]
            } else {
                [lo[0] + i as f64 * h, lo[1] + j as f64 * h]
            }
        };

        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let x = lattice_point(i, j);
                let m = domain.margin(&x);
                if m.abs() <= on_tol {
                    boundary.push(Node {
                        x,
                        kind: NodeKind::Boundary(domain.portion(&x)),
                        lattice: Some([i, j]),
                    });
                } else if m >= SNAP_FRACTION * h {
                    interior.push(Node {
                        x,
                        kind: NodeKind::Interior,
                        lattice: Some([i, j]),
                    });
                }
            }
        }
        if interior.is_empty() {
            return Err(invalid("grid has no interior nodes; refine h"));
        }
        let n_interior = interior.len();
        let mut nodes = interior;
        nodes.extend(boundary);

        let mut lattice_map = vec![None; dims[0] * dims[1]];
        for (k, node) in nodes.iter().enumerate() {
            if let Some([i, j]) = node.lattice {
                lattice_map[j * dims[0] + i] = Some(k);
            }
        }

        // Boundary points keyed by rounded coordinates so that cut points
        // shared by several arms are created once.
        let key = |x: &[f64; 2]| -> (i64, i64) {
            let s = 1e-7 * h;
            ((x[0] / s).round() as i64, (x[1] / s).round() as i64)
        };
        let mut by_key: HashMap<(i64, i64), usize> = HashMap::new();
        for (k, node) in nodes.iter().enumerate().skip(n_interior) {
            by_key.insert(key(&node.x), k);
        }

        let mut arms = Vec::with_capacity(n_interior * 2 * nlines);
        for k in 0..n_interior {
            let x = nodes[k].x;
            let [i, j] = nodes[k].lattice.expect("interior nodes lie on the lattice");
            for line in LINES.iter().take(nlines) {
                for s in [1i32, -1] {
                    let v = [s * line[0], s * line[1]];
                    let ni = i as i64 + v[0] as i64;
                    let nj = j as i64 + v[1] as i64;
                    let in_lattice =
                        ni >= 0 && nj >= 0 && (ni as usize) < dims[0] && (nj as usize) < dims[1];
                    let lattice_target = if in_lattice {
                        lattice_map[nj as usize * dims[0] + ni as usize]
                    } else {
                        None
                    };
                    if let Some(t) = lattice_target {
                        arms.push(Arm { target: t, frac: 1.0 });
                        continue;
                    }
                    // Either the line leaves the domain within one step, or
                    // the lattice point there was dropped for hugging the
                    // boundary; in both cases the arm ends at the exit point,
                    // slightly longer than a step in the second case.
                    let step = [v[0] as f64 * h, v[1] as f64 * h];
                    let t = domain.ray_exit(&x, &step).max(0.0);
                    let t = if in_lattice { t } else { t.min(1.0) };
                    let p = [x[0] + t * step[0], x[1] + t * step[1]];
                    let idx = *by_key.entry(key(&p)).or_insert_with(|| {
                        nodes.push(Node {
                            x: p,
                            kind: NodeKind::Boundary(domain.portion(&p)),
                            lattice: None,
                        });
                        nodes.len() - 1
                    });
                    arms.push(Arm { target: idx, frac: t });
                }
            }
        }

        Ok(Grid {
            domain,
            h,
            lo,
            dims,
            nodes,
            n_interior,
            lattice_map,
            nlines,
            arms,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn lattice_origin(&self) -> [f64; 2] {
        self.lo
    }

    pub fn lattice_dims(&self) -> [usize; 2] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        self.nodes[k].x
    }

    /// Coordinates truncated to the grid dimension.
    pub fn coords(&self, k: usize) -> &[f64] {
        &self.nodes[k].x[..self.dim()]
    }

    pub fn is_interior(&self, k: usize) -> bool {
        k < self.n_interior
    }

    pub fn interior(&self) -> std::ops::Range<usize> {
        0..self.n_interior
    }

    pub fn boundary(&self) -> std::ops::Range<usize> {
        self.n_interior..self.nodes.len()
    }

    pub fn nlines(&self) -> usize {
        self.nlines
    }

    /// Arm of interior node `k` along `line`, forward (`+`) or backward.
    pub fn arm(&self, k: usize, line: usize, forward: bool) -> Arm {
        debug_assert!(k < self.n_interior && line < self.nlines);
        self.arms[(k * self.nlines + line) * 2 + usize::from(!forward)]
    }

    /// True when every arm of node `k` has full length.
    pub fn full_arms(&self, k: usize) -> bool {
        let base = k * self.nlines * 2;
        self.arms[base..base + self.nlines * 2]
            .iter()
            .all(|a| a.frac == 1.0)
    }

    /// Euclidean length of the full lattice step along `line`.
    pub fn line_step(&self, line: usize) -> f64 {
        let v = LINES[line];
        self.h * ((v[0] * v[0] + v[1] * v[1]) as f64).sqrt()
    }

    pub fn lattice_node(&self, i: usize, j: usize) -> Option<usize> {
        if i < self.dims[0] && j < self.dims[1] {
            self.lattice_map[j * self.dims[0] + i]
        } else {
            None
        }
    }

    /// Node sitting exactly at `x` (up to 1e-9·h), if any.
    pub fn find_node(&self, x: &[f64]) -> Option<usize> {
        let k = self.nearest_node(x)?;
        let p = self.nodes[k].x;
        let d2: f64 = (0..self.dim()).map(|a| (p[a] - x[a]).powi(2)).sum();
        (d2.sqrt() <= 1e-9 * self.h).then_some(k)
    }

    /// Closest lattice node to `x`.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let i = ((x[0] - self.lo[0]) / self.h).round();
        let j = if self.dim() == 1 {
            0.0
        } else {
            ((x[1] - self.lo[1]) / self.h).round()
        };
        if i < 0.0 || j < 0.0 {
            return None;
        }
        self.lattice_node(i as usize, j as usize)
    }

    /// Quadrature weight: `hⁿ` on lattice nodes, 0 on cut points.
    pub fn weight(&self, k: usize) -> f64 {
        if self.nodes[k].lattice.is_some() {
            self.h.powi(self.dim() as i32)
        } else {
            0.0
        }
    }

    /// Nearest center of a lattice cell, at distance ≥ h/2 from every
    /// lattice node.
    pub fn snap_to_cell_center(&self, x: &[f64]) -> [f64; 2] {
        snap_cell_center(self.lo, self.h, self.dim(), x)
    }

    /// Largest bandwidth of the interior coupling for schemes using the
    /// first `lines` lines.
    pub fn bandwidth(&self, lines: usize) -> usize {
        let lines = lines.min(self.nlines);
        let mut bw = 0;
        for k in self.interior() {
            for l in 0..lines {
                for fwd in [true, false] {
                    let t = self.arm(k, l, fwd).target;
                    if t < self.n_interior {
                        bw = bw.max(t.abs_diff(k));
                    }
                }
            }
        }
        bw
    }
}

pub(crate) fn snap_cell_center(lo: [f64; 2], h: f64, dim: usize, x: &[f64]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for a in 0..dim {
        out[a] = lo[a] + (((x[a] - lo[a]) / h - 0.5).round() + 0.5) * h;
    }
    out
}
