//! Monotone finite differences on [`Grid`]s.
//!
//! Second differences run along the integer line dictionary of the grid;
//! arms cut by the boundary use the three-point formula for unequal
//! spacing, which keeps every neighbor weight nonnegative.

mod audit;
mod scheme;

use serde::{Deserialize, Serialize};

pub use audit::{monotonicity_audit, AuditReport, AuditWitness};
pub use scheme::{Linearization, Scheme};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::gridfn::GridFunction;
use crate::operators::{Sign, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientScheme {
    /// Monotone one-sided selection.
    #[default]
    Upwind,
    /// Central differences; not monotone for large first-order terms.
    Centered,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StencilConfig {
    /// Number of rays of the 2D wide stencil: 4, 8 or 16.
    pub m: usize,
    /// Near the boundary, shorten arms to hit it exactly.
    pub boundary_one_sided: bool,
    pub gradient: GradientScheme,
}

impl Default for StencilConfig {
    fn default() -> Self {
        StencilConfig {
            m: 8,
            boundary_one_sided: true,
            gradient: GradientScheme::Upwind,
        }
    }
}

impl StencilConfig {
    pub fn with_m(m: usize) -> Self {
        StencilConfig {
            m,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ![4, 8, 16].contains(&self.m) {
            return Err(invalid(format!("stencil direction count must be 4, 8 or 16, got {}", self.m)));
        }
        Ok(())
    }

    /// Lines (pairs of opposite rays) used in dimension `dim`.
    pub fn lines(&self, dim: usize) -> usize {
        if dim == 1 {
            1
        } else {
            self.m / 2
        }
    }
}

/// Which one-sided slope the upwind norm selects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpwindOrientation {
    /// `mᵢ = max(Dᵢ⁺u, −Dᵢ⁻u, 0)`: nondecreasing in every neighbor value.
    Increasing,
    /// `mᵢ = max(Dᵢ⁻u, −Dᵢ⁺u, 0)`: nonincreasing in every neighbor value.
    Decreasing,
}

impl UpwindOrientation {
    /// Orientation keeping `sign·b|Du|` nondecreasing in the neighbors.
    pub fn for_sign(sign: Sign) -> Self {
        match sign {
            Sign::Plus => UpwindOrientation::Increasing,
            Sign::Minus => UpwindOrientation::Decreasing,
        }
    }
}

/// Discrete `(r, p, X)` slots at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteDerivs {
    pub dim: usize,
    pub r: f64,
    /// Second differences along the first `lines` dictionary lines.
    pub second: [f64; 8],
    pub lines: usize,
    /// Forward differences `Dᵢ⁺u` along the axes.
    pub fwd: [f64; 2],
    /// Backward differences `Dᵢ⁻u` along the axes.
    pub bwd: [f64; 2],
    /// Central gradient (second order on unequal arms).
    pub p: [f64; 2],
}

impl DiscreteDerivs {
    pub fn zero(dim: usize, lines: usize) -> Self {
        DiscreteDerivs {
            dim,
            r: 0.0,
            second: [0.0; 8],
            lines,
            fwd: [0.0; 2],
            bwd: [0.0; 2],
            p: [0.0; 2],
        }
    }

    /// Hessian proxy: axis second differences on the diagonal and
    /// `(Δ_{(1,1)} − Δ_{(1,−1)})/2` off it.
    pub fn hessian_proxy(&self) -> SymMatrix {
        if self.dim == 1 {
            return SymMatrix::diag(&[self.second[0]]);
        }
        let mut x = SymMatrix::diag(&[self.second[0], self.second[1]]);
        if self.lines >= 4 {
            x.set(0, 1, 0.5 * (self.second[2] - self.second[3]));
        }
        x
    }

    pub fn gradient(&self) -> &[f64] {
        &self.p[..self.dim]
    }

    /// Upwind gradient components.
    pub fn upwind(&self, o: UpwindOrientation) -> [f64; 2] {
        let mut m = [0.0; 2];
        for i in 0..self.dim {
            m[i] = match o {
                UpwindOrientation::Increasing => self.fwd[i].max(-self.bwd[i]).max(0.0),
                UpwindOrientation::Decreasing => self.bwd[i].max(-self.fwd[i]).max(0.0),
            };
        }
        m
    }

    pub(crate) fn negated(&self) -> Self {
        let mut d = *self;
        d.r = -d.r;
        d.second.iter_mut().for_each(|v| *v = -*v);
        d.fwd.iter_mut().for_each(|v| *v = -*v);
        d.bwd.iter_mut().for_each(|v| *v = -*v);
        d.p.iter_mut().for_each(|v| *v = -*v);
        d
    }
}

/// Weights `(w₊, w₋)` of the three-point second difference with arm
/// lengths `l₊, l₋`; the center weight is `−(w₊ + w₋)`.
pub(crate) fn three_point(lp: f64, lm: f64) -> (f64, f64) {
    let s = lp + lm;
    (2.0 / (lp * s), 2.0 / (lm * s))
}

/// Arm lengths and neighbor indices of `line` at interior node `k`.
pub(crate) fn arms(grid: &Grid, k: usize, line: usize) -> ((usize, f64), (usize, f64)) {
    let step = grid.line_step(line);
    let f = grid.arm(k, line, true);
    let b = grid.arm(k, line, false);
    ((f.target, f.frac * step), (b.target, b.frac * step))
}

pub(crate) fn derivs_at(grid: &Grid, u: &[f64], k: usize, lines: usize) -> DiscreteDerivs {
    let dim = grid.dim();
    let u0 = u[k];
    let mut d = DiscreteDerivs::zero(dim, lines);
    d.r = u0;
    for l in 0..lines {
        let ((tp, lp), (tm, lm)) = arms(grid, k, l);
        let (wp, wm) = three_point(lp, lm);
        let (up, um) = (u[tp], u[tm]);
        d.second[l] = wp * (up - u0) + wm * (um - u0);
        if l < dim {
            d.fwd[l] = (up - u0) / lp;
            d.bwd[l] = (u0 - um) / lm;
            d.p[l] = (lm * lm * (up - u0) + lp * lp * (u0 - um)) / (lp * lm * (lp + lm));
        }
    }
    d
}

fn check_interior(u: &GridFunction, node: usize) -> Result<()> {
    if !u.grid().is_interior(node) {
        return Err(invalid(format!("node {node} is not an interior node")));
    }
    Ok(())
}

/// `(u(x+hθ) − 2u(x) + u(x−hθ))/|hθ|²` along dictionary line `line`;
/// refuses arms cut by the boundary.
pub fn second_directional_diff(u: &GridFunction, node: usize, line: usize) -> Result<f64> {
    check_interior(u, node)?;
    let g = u.grid();
    if line >= g.nlines() {
        return Err(invalid(format!("line {line} is not in the dictionary")));
    }
    if g.arm(node, line, true).frac != 1.0 || g.arm(node, line, false).frac != 1.0 {
        return Err(Error::ArmOutside { node, line });
    }
    second_directional_diff_cut(u, node, line)
}

/// Boundary variant: three-point formula on possibly shortened arms.
pub fn second_directional_diff_cut(u: &GridFunction, node: usize, line: usize) -> Result<f64> {
    check_interior(u, node)?;
    let g = u.grid();
    if line >= g.nlines() {
        return Err(invalid(format!("line {line} is not in the dictionary")));
    }
    let ((tp, lp), (tm, lm)) = arms(g, node, line);
    let (wp, wm) = three_point(lp, lm);
    let v = u.values();
    Ok(wp * (v[tp] - v[node]) + wm * (v[tm] - v[node]))
}

/// All discrete slots at a node for the first `cfg.lines(n)` lines.
pub fn discrete_derivs(u: &GridFunction, node: usize, cfg: &StencilConfig) -> Result<DiscreteDerivs> {
    check_interior(u, node)?;
    cfg.validate()?;
    let g = u.grid();
    Ok(derivs_at(g, u.values(), node, cfg.lines(g.dim()).min(g.nlines())))
}

pub(crate) fn pucci_frames(d: &DiscreteDerivs, lambda: f64, cap: f64, sign: Sign) -> (f64, usize) {
    let g = |t: f64| match sign {
        Sign::Plus => (cap * t).max(lambda * t),
        Sign::Minus => (lambda * t).min(cap * t),
    };
    if d.dim == 1 {
        return (g(d.second[0]), 0);
    }
    let mut best = (0.0, 0);
    for f in 0..d.lines / 2 {
        let v = g(d.second[2 * f]) + g(d.second[2 * f + 1]);
        let better = match sign {
            Sign::Plus => v > best.0,
            Sign::Minus => v < best.0,
        };
        if f == 0 || better {
            best = (v, f);
        }
    }
    best
}

/// Wide-stencil `M^±`: best orthogonal frame of the dictionary for
/// `Σ Λ(Δ)⁺ − λ(Δ)⁻` (sign `+`) or `Σ λ(Δ)⁺ − Λ(Δ)⁻` (sign `−`).
pub fn pucci_stencil(
    u: &GridFunction,
    node: usize,
    lambda: f64,
    cap: f64,
    sign: Sign,
    cfg: &StencilConfig,
) -> Result<f64> {
    crate::operators::Ellipticity::new(lambda, cap)?;
    let d = discrete_derivs(u, node, cfg)?;
    Ok(pucci_frames(&d, lambda, cap, sign).0)
}

fn upwind_vec(u: &GridFunction, node: usize, o: UpwindOrientation) -> Result<[f64; 2]> {
    check_interior(u, node)?;
    let g = u.grid();
    let d = derivs_at(g, u.values(), node, g.dim());
    Ok(d.upwind(o))
}

/// Upwind `|Du|`, selecting the steeper admissible one-sided slope.
pub fn upwind_gradient_norm(u: &GridFunction, node: usize) -> Result<f64> {
    upwind_gradient_norm_oriented(u, node, UpwindOrientation::Increasing)
}

pub fn upwind_gradient_norm_oriented(u: &GridFunction, node: usize, o: UpwindOrientation) -> Result<f64> {
    let m = upwind_vec(u, node, o)?;
    Ok(m[0].hypot(m[1]))
}

/// Upwind `|Du|²`.
pub fn upwind_quadratic_hamiltonian(u: &GridFunction, node: usize) -> Result<f64> {
    let m = upwind_vec(u, node, UpwindOrientation::Increasing)?;
    Ok(m[0] * m[0] + m[1] * m[1])
}
