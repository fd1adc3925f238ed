use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{measure_lp, AbpBatch, AbpBatchConfig};
use crate::error::{invalid, Result};
use crate::gridfn::GridFunction;
use crate::operators::OperatorSpec;
use crate::solve::{DirichletSolver, SolverConfig};
use crate::REPORT_SCHEMA;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmallDomainConfig {
    /// Integrability of `c`; `2n` when absent. Must exceed `n`.
    pub p: Option<f64>,
    pub instances: usize,
    pub seed: u64,
    /// Allowed positive overshoot of `max u`.
    pub tol: f64,
    pub solver: SolverConfig,
}

impl Default for SmallDomainConfig {
    fn default() -> Self {
        SmallDomainConfig {
            p: None,
            instances: 50,
            seed: 0x5D,
            tol: 1e-9,
            solver: SolverConfig {
                tol: 1e-8,
                ..Default::default()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallDomainBatch {
    pub instances: usize,
    /// Largest value of `u` over all instances and nodes.
    pub max_value: f64,
    pub violations: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallDomainReport {
    pub schema: String,
    pub measure: f64,
    pub diameter: f64,
    pub p: f64,
    pub c_plus_norm: f64,
    pub c1: f64,
    pub c1_source: String,
    /// `∞` when `c⁺ ≡ 0`.
    pub eps0: f64,
    pub applicable: bool,
    pub batch: Option<SmallDomainBatch>,
}

/// Empirical `C₁` for the small-domain threshold: the ABP batch cap divided
/// by the diameter of the calibration domain.
pub fn c1_from_abp(batch: &AbpBatch, cfg: &AbpBatchConfig) -> f64 {
    batch.cap / cfg.domain.diameter()
}

/// Solves `F[u] + c u = g` by the resolvent iteration
/// `F[u_{j+1}] = g − c u_j`, which contracts on small domains.
fn solve_shifted(solver: &mut DirichletSolver, c: &[f64], g: &[f64], psi: &[f64]) -> Result<Option<Vec<f64>>> {
    let mut u = psi.to_vec();
    let mut warm: Option<Vec<f64>> = None;
    for _ in 0..100 {
        let rhs: Vec<f64> = g.iter().zip(c).zip(&u).map(|((g, c), u)| g - c * u).collect();
        let s = solver.solve_with(&rhs, psi, warm.as_deref())?;
        if !s.converged {
            return Ok(None);
        }
        let next = s.u.into_values();
        let change = next.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = next.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        u = next;
        if change <= 1e-11 * scale {
            return Ok(Some(u));
        }
        warm = Some(u.clone());
    }
    Ok(None)
}

/// Maximum principle on small domains: compares `|Ω|` with
/// `ε₀ = (2 C₁ diam ‖c⁺‖_p)^{−1/(1−n/p)}` and, when `|Ω| < ε₀`,
/// checks `u ≤ 0` on a seeded batch of `F[u] + c u = g ≥ 0`, `u ≤ 0` on
/// the boundary.
pub fn mp_small_domain(op: &OperatorSpec, c: &GridFunction, c1: f64, cfg: &SmallDomainConfig) -> Result<SmallDomainReport> {
    let g = c.grid().clone();
    let n = g.dim() as f64;
    let p = cfg.p.unwrap_or(2.0 * n);
    if !(p > n) {
        return Err(invalid(format!("small-domain threshold needs p > n, got {p}")));
    }
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(invalid(format!("C₁ must be positive, got {c1}")));
    }
    let measure = g.domain().measure();
    let diameter = g.domain().diameter();
    let cplus: Vec<f64> = c.values().iter().map(|v| v.max(0.0)).collect();
    let c_plus_norm = measure_lp(&g, 0..g.len(), &cplus, p);
    let eps0 = if c_plus_norm == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / (2.0 * c1 * diameter * c_plus_norm)).powf(1.0 / (1.0 - n / p))
    };
    let applicable = measure <= eps0;
    let mut report = SmallDomainReport {
        schema: REPORT_SCHEMA.into(),
        measure,
        diameter,
        p,
        c_plus_norm,
        c1,
        c1_source: "empirical (ABP batch cap)".into(),
        eps0,
        applicable,
        batch: None,
    };
    if !applicable || cfg.instances == 0 {
        return Ok(report);
    }

    let mut solver = DirichletSolver::new(op, g.clone(), cfg.solver.clone())?;
    let (lo, _) = g.domain().bounding_box();
    let mut max_value = f64::NEG_INFINITY;
    let mut violations = 0;
    for i in 0..cfg.instances {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let a0: f64 = rng.random_range(0.0..1.0);
        let a1: f64 = rng.random_range(0.0..0.5);
        let kx: f64 = rng.random_range(1.0..4.0);
        let b0: f64 = rng.random_range(0.0..1.0);
        let b1: f64 = rng.random_range(0.0..0.5);
        let phase = |x: &[f64]| (0..x.len()).map(|j| (x[j] - lo[j]) / diameter).sum::<f64>();
        let rhs: Vec<f64> = (0..g.len())
            .map(|k| a0 * (1.0 + a1 * (std::f64::consts::PI * kx * phase(g.coords(k))).sin()))
            .collect();
        let psi: Vec<f64> = (0..g.len())
            .map(|k| -b0 - b1 * (std::f64::consts::PI * kx * phase(g.coords(k))).cos().abs())
            .collect();
        match solve_shifted(&mut solver, &cplus, &rhs, &psi)? {
            Some(u) => {
                let m = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                max_value = max_value.max(m);
                if m > cfg.tol {
                    violations += 1;
                }
            }
            None => violations += 1,
        }
    }
    report.batch = Some(SmallDomainBatch {
        instances: cfg.instances,
        max_value,
        violations,
        pass: violations == 0,
    });
    Ok(report)
}
