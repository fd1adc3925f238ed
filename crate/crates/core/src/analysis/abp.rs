use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::measure_lp;
use crate::coefficient::CoefficientField;
use crate::domain::Domain;
use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::gridfn::GridFunction;
use crate::operators::{OperatorSpec, Sign, StructureParams};
use crate::solve::{solve_dirichlet, ProblemSpec, Solution, SolverConfig};
use crate::REPORT_SCHEMA;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbpConfig {
    /// Exponent of the `L^p` norms of `f^∓`; `None` means `2n`.
    pub p: Option<f64>,
    /// Flag a violation when the excess exceeds `cap·‖f^∓‖_p`.
    pub cap: Option<f64>,
    pub delta_gate: f64,
    /// Absolute slack for solver round-off in the excess.
    pub slack: f64,
}

impl Default for AbpConfig {
    fn default() -> Self {
        AbpConfig {
            p: None,
            cap: None,
            delta_gate: 1.0,
            slack: 1e-9,
        }
    }
}

/// `μ‖f⁻‖_p diam^{n/p} ≤ δ`
#[derive(Clone, Debug, Serialize)]
pub struct GateStatus {
    pub mu: f64,
    pub value: f64,
    pub delta: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AbpReport {
    pub schema: String,
    pub max_interior: f64,
    pub max_boundary: f64,
    pub min_interior: f64,
    pub min_boundary: f64,
    pub p: f64,
    pub f_minus_norm: f64,
    pub f_plus_norm: f64,
    /// `(max_Ω u − max_∂Ω u)⁺ / ‖f⁻‖_p`, 0 when the norm vanishes.
    pub ratio: f64,
    /// `(min_∂Ω u − min_Ω u)⁺ / ‖f⁺‖_p`
    pub ratio_min: f64,
    pub cap: Option<f64>,
    pub violation: bool,
    pub gate: GateStatus,
}

fn one_sided(excess: f64, norm: f64, cap: Option<f64>, slack: f64) -> (f64, bool) {
    let ratio = if norm > 0.0 { excess / norm } else { 0.0 };
    let bound = cap.map_or(0.0, |c| c * norm);
    let violated = if norm > 0.0 {
        cap.is_some() && excess > bound + slack
    } else {
        excess > slack
    };
    (ratio, violated)
}

/// Evaluates both one-sided ABP statements for a computed solution.
pub fn abp_check(u: &Solution, problem: &ProblemSpec, cfg: &AbpConfig) -> Result<AbpReport> {
    if !u.converged {
        return Err(invalid("ABP check needs a converged solution"));
    }
    let g = &problem.grid;
    let n = g.dim() as f64;
    let p = cfg.p.unwrap_or(2.0 * n);
    if !(p >= 1.0) {
        return Err(invalid(format!("L^p exponent must be ≥ 1, got {p}")));
    }
    let f = problem.rhs.sample(g)?;
    let fm: Vec<f64> = f.iter().map(|v| (-v).max(0.0)).collect();
    let fp: Vec<f64> = f.iter().map(|v| v.max(0.0)).collect();
    let all = 0..g.len();
    let f_minus_norm = measure_lp(g, all.clone(), &fm, p);
    let f_plus_norm = measure_lp(g, all, &fp, p);
    let v = u.u.values();
    let ext = |r: std::ops::Range<usize>| {
        r.fold((f64::NEG_INFINITY, f64::INFINITY), |(hi, lo), k| (hi.max(v[k]), lo.min(v[k])))
    };
    let (max_interior, min_interior) = ext(g.interior());
    let (max_boundary, min_boundary) = ext(g.boundary());
    let (ratio, up) = one_sided((max_interior - max_boundary).max(0.0), f_minus_norm, cfg.cap, cfg.slack);
    let (ratio_min, down) = one_sided((min_boundary - min_interior).max(0.0), f_plus_norm, cfg.cap, cfg.slack);
    let mu = problem.operator.params.mu;
    let value = mu * f_minus_norm * g.domain().diameter().powf(n / p);
    Ok(AbpReport {
        schema: REPORT_SCHEMA.into(),
        max_interior,
        max_boundary,
        min_interior,
        min_boundary,
        p,
        f_minus_norm,
        f_plus_norm,
        ratio,
        ratio_min,
        cap: cfg.cap,
        violation: up || down,
        gate: GateStatus {
            mu,
            value,
            delta: cfg.delta_gate,
            pass: value <= cfg.delta_gate,
        },
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbpBatchConfig {
    pub problems: usize,
    pub seed: u64,
    pub h: f64,
    pub domain: Domain,
    pub p: Option<f64>,
    pub solver: SolverConfig,
}

impl Default for AbpBatchConfig {
    fn default() -> Self {
        AbpBatchConfig {
            problems: 100,
            seed: 0xAB9,
            h: 1.0 / 16.0,
            domain: Domain::unit_square(),
            p: None,
            solver: SolverConfig {
                tol: 1e-10,
                audit_samples: 500,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AbpBatch {
    pub schema: String,
    pub problems: usize,
    pub ratios_max: Vec<f64>,
    pub ratios_min: Vec<f64>,
    /// Largest ratio over both statements.
    pub max_ratio: f64,
    /// `1.5 ×` the largest ratio.
    pub calibrated_cap: f64,
    /// Cap the violations are counted against: the supplied one, or the
    /// calibrated one.
    pub cap: f64,
    pub violations: usize,
}

/// Random `μ = 0` problem number `i` of a batch: random Pucci bounds and
/// drift, smooth random `f` and boundary data.
fn batch_problem(cfg: &AbpBatchConfig, grid: &Arc<Grid>, i: usize) -> Result<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1)));
    let n = grid.dim();
    let sign = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
    let cap = rng.random_range(1.0..4.0);
    let params = StructureParams::new(1.0, cap)?.with_b(CoefficientField::constant(rng.random_range(0.0..3.0)));
    let op = OperatorSpec::extremal(sign, params, n)?;
    let modes: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-4.0..4.0),
                rng.random_range(1.0..4.0),
                rng.random_range(1.0..4.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let c0 = rng.random_range(-3.0..3.0);
    let f = GridFunction::from_fn(grid.clone(), |x| {
        let y = if n == 2 { x[1] } else { 0.0 };
        c0 + modes.iter().map(|(a, k1, k2, ph)| a * (k1 * x[0] + k2 * y + ph).sin()).sum::<f64>()
    });
    let (pa, pb0, pb1) = (
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
    );
    // mild boundary data, so that f drives interior extrema
    let wiggle = rng.random_range(0.0..0.1);
    let psi = GridFunction::from_fn(grid.clone(), |x| {
        let y = if n == 2 { x[1] } else { 0.0 };
        pa + pb0 * x[0] + pb1 * y + wiggle * (3.0 * x[0] + 2.0 * y).sin()
    });
    Ok(ProblemSpec::new(op, grid.clone()).with_rhs(f).with_boundary(psi))
}

/// Runs the seeded batch and counts violations against `cap`, or against
/// the batch's own calibration when no cap is given.
pub fn abp_batch(cfg: &AbpBatchConfig, cap: Option<f64>) -> Result<AbpBatch> {
    let grid = Arc::new(Grid::new(cfg.domain.clone(), cfg.h)?);
    let check = AbpConfig {
        p: cfg.p,
        ..Default::default()
    };
    let mut ratios_max = Vec::with_capacity(cfg.problems);
    let mut ratios_min = Vec::with_capacity(cfg.problems);
    let mut excesses = Vec::with_capacity(cfg.problems);
    for i in 0..cfg.problems {
        let problem = batch_problem(cfg, &grid, i)?;
        let sol = solve_dirichlet(&problem, &cfg.solver)?;
        let r = abp_check(&sol, &problem, &check)?;
        ratios_max.push(r.ratio);
        ratios_min.push(r.ratio_min);
        excesses.push(r);
    }
    let max_ratio = ratios_max.iter().chain(&ratios_min).copied().fold(0.0, f64::max);
    let calibrated_cap = 1.5 * max_ratio;
    let cap_used = cap.unwrap_or(calibrated_cap);
    let violations = excesses
        .iter()
        .filter(|r| {
            let up = (r.max_interior - r.max_boundary).max(0.0);
            let down = (r.min_boundary - r.min_interior).max(0.0);
            one_sided(up, r.f_minus_norm, Some(cap_used), check.slack).1
                || one_sided(down, r.f_plus_norm, Some(cap_used), check.slack).1
        })
        .count();
    Ok(AbpBatch {
        schema: REPORT_SCHEMA.into(),
        problems: cfg.problems,
        ratios_max,
        ratios_min,
        max_ratio,
        calibrated_cap,
        cap: cap_used,
        violations,
    })
}
