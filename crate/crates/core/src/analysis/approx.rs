use std::sync::Arc;

use serde::Serialize;

use super::measure_lp;
use crate::discretize::Scheme;
use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::gridfn::lattice_of;
use crate::operators::{oscillation_beta, AffineRescaling, BetaVariant, MatrixNorm, OperatorSpec};
use crate::rules::ScalarRule;
use crate::solve::{DirichletSolver, SolverConfig};
use crate::REPORT_SCHEMA;

/// Data of the approximation experiment on a unit ball or half-ball:
/// `F(x, v + L, Dv + B, D²v) = f` with `L(x) = A + B·x`, against the frozen
/// problem `F(0,0,0,D²h) = 0`, both with boundary data `ψ`.
#[derive(Clone, Debug)]
pub struct ApproxSetup {
    pub operator: OperatorSpec,
    pub rhs: ScalarRule,
    pub boundary: ScalarRule,
    pub affine_a: f64,
    pub affine_b: [f64; 2],
    pub grid: Arc<Grid>,
    /// Exponent of the `L^p` smallness norms.
    pub p: f64,
    /// Nodes sampled for `‖β̄_F(·,0)‖_p`; the rest are skipped evenly.
    pub beta_nodes: usize,
}

impl ApproxSetup {
    pub fn new(operator: OperatorSpec, grid: Arc<Grid>) -> Self {
        let p = 2.0 * grid.dim() as f64;
        ApproxSetup {
            operator,
            rhs: ScalarRule::zero(),
            boundary: ScalarRule::zero(),
            affine_a: 0.0,
            affine_b: [0.0; 2],
            grid,
            p,
            beta_nodes: 300,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallnessInputs {
    /// `‖β̄_F(·,0)‖_p`
    pub beta_bar: f64,
    /// `‖f‖_p`
    pub f: f64,
    /// `μ(|B|² + |B| + 1)`
    pub mu: f64,
    /// `‖b‖_p(|B| + 1)`
    pub b: f64,
    /// `ω(1)‖d‖_p(|A| + |B| + 1)`
    pub d: f64,
}

impl SmallnessInputs {
    pub fn max(&self) -> f64 {
        self.beta_bar.max(self.f).max(self.mu).max(self.b).max(self.d)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproxGapReport {
    pub schema: String,
    pub delta: f64,
    /// `‖v − h‖∞`
    pub gap: f64,
    pub inputs: SmallnessInputs,
    pub full_residual: f64,
    pub frozen_residual: f64,
}

/// Scales `f`, `b`, `μ` and `d` by `δ` and measures `‖v − h‖∞`.
pub fn approximation_gap(setup: &ApproxSetup, delta: f64, cfg: &SolverConfig) -> Result<ApproxGapReport> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid(format!("δ must be finite and nonnegative, got {delta}")));
    }
    let g = &setup.grid;
    let n = g.dim();
    let mut op = setup.operator.clone();
    if op.dim != n {
        return Err(invalid("operator and grid dimensions differ"));
    }
    op.params.mu *= delta;
    op.params.b = op.params.b.rescaled(1.0, [0.0; 2], delta, 0.0);
    op.params.d = op.params.d.rescaled(1.0, [0.0; 2], delta, 0.0);
    let lat = lattice_of(g);
    let f: Vec<f64> = (0..g.len())
        .map(|k| delta * setup.rhs.eval_on(g.coords(k), Some(lat)))
        .collect();
    let psi: Vec<f64> = (0..g.len()).map(|k| setup.boundary.eval_on(g.coords(k), Some(lat))).collect();

    // v solves F(x, v + L, Dv + B, D²v) − F(x, L, B, 0) = f − F_h[L]
    let map = AffineRescaling::new(1.0, 1.0, [0.0; 2], setup.affine_a, setup.affine_b)?;
    let lvals: Vec<f64> = (0..g.len()).map(|k| map.affine(g.coords(k))).collect();
    let base = Scheme::new(&op, g.clone(), cfg.stencil)?;
    let mut f_full = f.clone();
    for k in g.interior() {
        f_full[k] -= base.eval(&lvals, k);
    }
    let full_op = op.rescaled(map);
    let v = DirichletSolver::new(&full_op, g.clone(), cfg.clone())?.solve_with(&f_full, &psi, None)?;
    let frozen = op.frozen([0.0; 2]);
    let zero = vec![0.0; g.len()];
    let h = DirichletSolver::new(&frozen, g.clone(), cfg.clone())?.solve_with(&zero, &psi, None)?;
    let gap = v
        .u
        .values()
        .iter()
        .zip(h.u.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let p = setup.p;
    let nb = setup.affine_b[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
    let na = setup.affine_a.abs();
    let stride = (g.n_interior() / setup.beta_nodes.max(1)).max(1);
    let origin = [0.0; 2];
    let mut beta = vec![0.0; g.len()];
    let mut sampled = Vec::new();
    for k in g.interior().step_by(stride) {
        beta[k] = oscillation_beta(&op, g.coords(k), &origin[..n], BetaVariant::BetaBar, MatrixNorm::Spectral).value;
        sampled.push(k);
    }
    // the sampled nodes stand in for the whole interior
    let beta_bar = measure_lp(g, sampled.iter().copied(), &beta, p) * (stride as f64).powf(1.0 / p);
    let all = 0..g.len();
    let bvals = op.params.b.sample(g)?;
    let dvals = op.params.d.sample(g)?;
    let inputs = SmallnessInputs {
        beta_bar,
        f: measure_lp(g, all.clone(), &f, p),
        mu: op.params.mu * (nb * nb + nb + 1.0),
        b: measure_lp(g, all.clone(), bvals.values(), p) * (nb + 1.0),
        d: op.params.omega.eval(1.0) * measure_lp(g, all, dvals.values(), p) * (na + nb + 1.0),
    };
    Ok(ApproxGapReport {
        schema: REPORT_SCHEMA.into(),
        delta,
        gap,
        inputs,
        full_residual: v.residual,
        frozen_residual: h.residual,
    })
}
