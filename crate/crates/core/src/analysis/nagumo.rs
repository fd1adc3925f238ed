use serde::Serialize;

use super::measure_lp;
use crate::discretize::{discrete_derivs, StencilConfig};
use crate::error::{invalid, Result};
use crate::gridfn::GridFunction;
use crate::solve::{ProblemSpec, Solution};
use crate::REPORT_SCHEMA;

#[derive(Clone, Debug, Serialize)]
pub struct NagumoBracket {
    pub u_inf: f64,
    pub f_p: f64,
    pub psi_w2p: f64,
    /// `‖d‖_p ω(‖u‖∞)`
    pub d_term: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NagumoReport {
    pub schema: String,
    pub h: f64,
    pub p: f64,
    pub w2p: f64,
    pub bracket: NagumoBracket,
    /// `‖u‖_{W^{2,p}} / bracket`
    pub ratio: f64,
}

/// Discrete `‖u‖_{W^{2,p}}` over interior nodes: values, centered first
/// differences and the Frobenius norm of the second-difference Hessian.
pub fn w2p_norm(u: &GridFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("W^{{2,p}} needs finite p ≥ 1, got {p}")));
    }
    let g = u.grid();
    let cfg = StencilConfig::default();
    let mut grad = vec![0.0; g.len()];
    let mut hess = vec![0.0; g.len()];
    for k in g.interior() {
        let d = discrete_derivs(u, k, &cfg)?;
        grad[k] = d.gradient().iter().map(|v| v * v).sum::<f64>().sqrt();
        hess[k] = d.hessian_proxy().frobenius_norm();
    }
    let parts = [
        measure_lp(g, g.interior(), u.values(), p),
        measure_lp(g, g.interior(), &grad, p),
        measure_lp(g, g.interior(), &hess, p),
    ];
    Ok(parts.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p))
}

/// Discrete `W^{2,p}` norm of a computed solution against
/// `‖u‖∞ + ‖f‖_p + ‖ψ‖_{W^{2,p}} + ‖d‖_p ω(‖u‖∞)`.
pub fn nagumo_check(u: &Solution, problem: &ProblemSpec, p: f64) -> Result<NagumoReport> {
    if !u.converged {
        return Err(invalid("W^{2,p} check needs a converged solution"));
    }
    let g = &problem.grid;
    let w2p = w2p_norm(&u.u, p)?;
    let f = problem.rhs.sample(g)?;
    let psi = GridFunction::new(g.clone(), problem.boundary.sample(g)?)?;
    let params = &problem.operator.params;
    let d = params.d.sample(g)?;
    let u_inf = u.u.sup_norm();
    let all = 0..g.len();
    let f_p = measure_lp(g, all.clone(), &f, p);
    let psi_w2p = w2p_norm(&psi, p)?;
    let d_term = measure_lp(g, all, d.values(), p) * params.omega.eval(u_inf);
    let total = u_inf + f_p + psi_w2p + d_term;
    Ok(NagumoReport {
        schema: REPORT_SCHEMA.into(),
        h: g.h(),
        p,
        w2p,
        bracket: NagumoBracket {
            u_inf,
            f_p,
            psi_w2p,
            d_term,
            total,
        },
        ratio: if total > 0.0 { w2p / total } else { 0.0 },
    })
}

/// No blow-up trend along a refinement ladder: the spread stays within a
/// factor 2, and two successive increases of more than 5% are allowed only
/// when the second increment is at most 0.9 of the first. A discrete norm
/// converging from below has contracting increments (`2^{-γ}` for an
/// `O(h^γ)` defect), while logarithmic or power blow-up does not.
pub fn nagumo_ladder_stable(ratios: &[f64]) -> bool {
    if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return false;
    }
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let runaway = ratios.windows(3).any(|w| {
        let (d1, d2) = (w[1] - w[0], w[2] - w[1]);
        w[1] > 1.05 * w[0] && w[2] > 1.05 * w[1] && d2 > 0.9 * d1
    });
    hi <= 2.0 * lo && !runaway
}
