//! Principal weighted eigenpairs `F[φ] + α c φ = 0`, `±φ > 0`, `φ = 0` on
//! the boundary, computed by inverse power iteration on `T = −F⁻¹∘c`
//! along the continuation `c + ε ↓ c`.
//!
//! The minus branch is computed as the plus branch of the companion
//! `G(x,r,p,X) = −F(x,−r,−p,−X)` and flipped back.

mod certificate;
mod simplicity;
mod small;

pub use certificate::{eigen_upper_bound_sigma, sigma_derivatives, EigenBoundCertificate};
pub use simplicity::{simplicity_check, SimplicityReport, SimplicityRun};
pub use small::{c1_from_abp, mp_small_domain, SmallDomainBatch, SmallDomainConfig, SmallDomainReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gridfn::GridFunction;
use crate::operators::{assert_homogeneous, OperatorSpec, Sign, SymMatrix};
use crate::solve::{DirichletSolver, SolverConfig};
use crate::REPORT_SCHEMA;

/// Eigenvalue estimate read off one power step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quotient {
    /// `max|u| / max|U|`, matching the sup normalization of `φ`.
    #[default]
    Sup,
    /// `⟨u,u⟩ / ⟨u,U⟩` with lattice weights; diagnostics only.
    L2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialGuess {
    /// Distance to the boundary.
    Distance,
    /// 1 on interior nodes.
    Constant,
    /// Independent uniform values in `[0.1, 1]` on interior nodes.
    Random { seed: u64 },
}

impl InitialGuess {
    pub fn label(&self) -> String {
        match self {
            InitialGuess::Distance => "distance".into(),
            InitialGuess::Constant => "constant".into(),
            InitialGuess::Random { seed } => format!("random({seed})"),
        }
    }

    /// Positive on interior nodes, zero on the boundary, max 1.
    pub fn sample(&self, grid: &std::sync::Arc<crate::grid::Grid>) -> GridFunction {
        let mut v = vec![0.0; grid.len()];
        match self {
            InitialGuess::Distance => {
                let h = grid.h();
                for k in grid.interior() {
                    // nodes dropped near the boundary still get a positive value
                    v[k] = grid.domain().distance_to_boundary(grid.coords(k)).max(0.05 * h);
                }
            }
            InitialGuess::Constant => grid.interior().for_each(|k| v[k] = 1.0),
            InitialGuess::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                grid.interior().for_each(|k| v[k] = rng.random_range(0.1..=1.0));
            }
        }
        let m = v.iter().copied().fold(0.0, f64::max);
        if m > 0.0 {
            v.iter_mut().for_each(|x| *x /= m);
        }
        GridFunction::new(grid.clone(), v).expect("sized from the grid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenConfig {
    /// Relative tolerance on the α change per step.
    pub tol_alpha: f64,
    /// Tolerance on the ∞-norm change of the normalized field per step.
    pub tol_field: f64,
    /// Decreasing continuation values of ε; a final `ε = 0` stage is
    /// always appended.
    pub eps_schedule: Vec<f64>,
    /// Power steps allowed per ε stage.
    pub max_steps: usize,
    pub quotient: Quotient,
    pub init: InitialGuess,
    pub solver: SolverConfig,
}

impl Default for EigenConfig {
    fn default() -> Self {
        EigenConfig {
            tol_alpha: 1e-6,
            tol_field: 1e-5,
            eps_schedule: (0..=10).map(|k| 0.5f64.powi(k)).collect(),
            max_steps: 300,
            quotient: Quotient::Sup,
            init: InitialGuess::Distance,
            solver: SolverConfig {
                tol: 1e-11,
                ..Default::default()
            },
        }
    }
}

impl EigenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_alpha > 0.0 && self.tol_field > 0.0) {
            return Err(invalid("eigen tolerances must be positive"));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be positive"));
        }
        if self.eps_schedule.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(invalid("ε schedule entries must be finite and ≥ 0"));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("ε schedule must be strictly decreasing"));
        }
        self.solver.validate()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerStep {
    #[serde(skip)]
    pub u: GridFunction,
    /// `max|u_k| / max|U|`; `+∞` when `c·u_k` vanishes.
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EigenStep {
    pub eps: f64,
    pub alpha: f64,
    pub field_change: f64,
}

/// Converged α at the end of one continuation stage.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpsStage {
    pub eps: f64,
    pub alpha: f64,
    pub steps: usize,
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub sign: Sign,
    pub alpha: f64,
    /// `max(±φ) = 1`, zero on the boundary.
    pub phi: GridFunction,
    pub trace: Vec<EigenStep>,
    pub steps: usize,
    /// Stages actually run, ending with `ε = 0`.
    pub ladder: Vec<EpsStage>,
    /// `‖F_h[φ] + α c φ‖∞ / (α ‖c‖∞)` on interior nodes.
    pub residual: f64,
    pub init: InitialGuess,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenReport {
    pub schema: String,
    pub sign: Sign,
    pub alpha: f64,
    pub steps: usize,
    pub residual: f64,
    pub init: String,
    pub interior_min: f64,
    pub ladder: Vec<EpsStage>,
    pub h: f64,
    pub nodes: usize,
}

impl EigenPair {
    pub fn report(&self) -> EigenReport {
        let g = self.phi.grid();
        let f = self.sign.factor();
        EigenReport {
            schema: REPORT_SCHEMA.into(),
            sign: self.sign,
            alpha: self.alpha,
            steps: self.steps,
            residual: self.residual,
            init: self.init.label(),
            interior_min: g.interior().map(|k| f * self.phi.get(k)).fold(f64::INFINITY, f64::min),
            ladder: self.ladder.clone(),
            h: g.h(),
            nodes: g.len(),
        }
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,eps,alpha,field_change\n");
        for (i, t) in self.trace.iter().enumerate() {
            s.push_str(&format!("{},{:e},{:.17e},{:e}\n", i + 1, t.eps, t.alpha, t.field_change));
        }
        s
    }
}

fn check_weight(c: &GridFunction) -> Result<()> {
    let g = c.grid();
    if let Some(k) = c.values().iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(invalid(format!("weight must be finite and ≥ 0, got {} at node {k}", c.get(k))));
    }
    if g.interior().all(|k| c.get(k) == 0.0) {
        return Err(Error::ZeroWeight);
    }
    Ok(())
}

/// Samples `F(x, r+t, p, X) ≤ F(x, r, p, X)` for `t > 0`.
fn assert_proper(op: &OperatorSpec, grid: &crate::grid::Grid, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = op.dim;
    let interior = grid.n_interior();
    for _ in 0..64 {
        let x = grid.coords(rng.random_range(0..interior)).to_vec();
        let r = rng.random_range(-2.0..2.0);
        let t = rng.random_range(0.0..2.0);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = SymMatrix::diag(&d);
        let (lo, hi) = (op.apply(&x, r, &p, &m), op.apply(&x, r + t, &p, &m));
        if hi > lo + 1e-12 * (1.0 + lo.abs()) {
            return Err(invalid(format!("operator {} is not proper at x = {x:?}: F increases in r", op.label())));
        }
    }
    Ok(())
}

/// One inverse power step with a reusable Dirichlet solver.
struct PowerMap {
    solver: DirichletSolver,
    zero: Vec<f64>,
}

impl PowerMap {
    fn new(op: &OperatorSpec, grid: std::sync::Arc<crate::grid::Grid>, cfg: &SolverConfig) -> Result<Self> {
        let zero = vec![0.0; grid.len()];
        Ok(PowerMap {
            solver: DirichletSolver::new(op, grid, cfg.clone())?,
            zero,
        })
    }

    /// Solves `F[U] = −c·u`, `U = 0` on the boundary. Returns `U` and the
    /// sup quotient, checking that `U` keeps the sign of `u`.
    fn step(&mut self, c: &[f64], u: &[f64], init: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
        let g = self.solver.scheme().grid().clone();
        let umax = u.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
        let rhs: Vec<f64> = c.iter().zip(u).map(|(c, u)| -c * u).collect();
        if rhs.iter().all(|v| *v == 0.0) {
            return Ok((vec![0.0; g.len()], f64::INFINITY));
        }
        let sol = self.solver.solve_with(&rhs, &self.zero, init)?;
        if !sol.converged {
            return Err(Error::NotConverged {
                iterations: sol.sweeps,
                residual: sol.residual,
                tol: sol.config.tol,
            });
        }
        let big = sol.u.values().to_vec();
        let top = big.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = if umax >= 0.0 { 1.0 } else { -1.0 };
        for k in g.interior() {
            if s * big[k] < -1e-8 * top {
                return Err(Error::SignLoss { node: k, value: big[k] });
            }
        }
        Ok((big, umax.abs() / top))
    }
}

/// `U = T u_k`: solves `F[U] = −c·u_k` with zero boundary data and returns
/// `U` with `α = max|u_k| / max|U|`.
pub fn power_step(op: &OperatorSpec, c: &GridFunction, u: &GridFunction, solver: &SolverConfig) -> Result<PowerStep> {
    if !c.same_grid(u) {
        return Err(Error::GridMismatch("weight and iterate live on different grids".into()));
    }
    let g = u.grid().clone();
    if g.boundary().any(|k| u.get(k) != 0.0) {
        return Err(invalid("power iterate must vanish on the boundary"));
    }
    let mut map = PowerMap::new(op, g.clone(), solver)?;
    let (big, alpha) = map.step(c.values(), u.values(), None)?;
    Ok(PowerStep {
        u: GridFunction::new(g, big)?,
        alpha,
    })
}

fn quotient(kind: Quotient, grid: &crate::grid::Grid, u: &[f64], big: &[f64], sup_alpha: f64) -> f64 {
    match kind {
        Quotient::Sup => sup_alpha,
        Quotient::L2 => {
            let (mut uu, mut ub) = (0.0, 0.0);
            for k in grid.interior() {
                uu += grid.weight(k) * u[k] * u[k];
                ub += grid.weight(k) * u[k] * big[k];
            }
            uu / ub
        }
    }
}

/// Principal eigenpair of the given branch for the weight `c ≥ 0`.
pub fn eigen_solve(op: &OperatorSpec, c: &GridFunction, sign: Sign, cfg: &EigenConfig) -> Result<EigenPair> {
    cfg.validate()?;
    check_weight(c)?;
    let g = c.grid().clone();
    if op.dim != g.dim() {
        return Err(invalid("operator and grid dimensions differ"));
    }
    assert_homogeneous(op, g.domain(), 64, 0xE16)?;
    assert_proper(op, &g, 0xE17)?;
    let used = match sign {
        Sign::Plus => op.clone(),
        Sign::Minus => op.companion(),
    };
    let mut map = PowerMap::new(&used, g.clone(), &cfg.solver)?;

    let mut schedule = cfg.eps_schedule.clone();
    if schedule.last() != Some(&0.0) {
        schedule.push(0.0);
    }
    let mut u = cfg.init.sample(&g).into_values();
    let mut alpha = f64::NAN;
    let mut trace = Vec::new();
    let mut ladder: Vec<EpsStage> = Vec::new();
    let mut steps = 0;
    let mut stage = 0;
    while stage < schedule.len() {
        let eps = schedule[stage];
        let ce: Vec<f64> = c.values().iter().map(|v| v + eps).collect();
        let mut history = Vec::new();
        let mut done = false;
        let mut change = f64::INFINITY;
        for s in 0..cfg.max_steps {
            let warm: Option<Vec<f64>> = alpha.is_finite().then(|| u.iter().map(|v| v / alpha).collect());
            let (big, sup_alpha) = map.step(&ce, &u, warm.as_deref())?;
            if !sup_alpha.is_finite() {
                return Err(Error::ZeroWeight);
            }
            let next_alpha = quotient(cfg.quotient, &g, &u, &big, sup_alpha);
            let top = big.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let next: Vec<f64> = big.iter().map(|v| v / top).collect();
            change = next.iter().zip(&u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let da = (next_alpha - alpha).abs();
            u = next;
            alpha = next_alpha;
            steps += 1;
            history.push(alpha);
            trace.push(EigenStep {
                eps,
                alpha,
                field_change: change,
            });
            if s > 0 && da <= cfg.tol_alpha * alpha.max(1.0) && change <= cfg.tol_field {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::PowerStalled {
                steps,
                alpha,
                change,
                trace: history,
            });
        }
        let prev = ladder.last().map(|s| s.alpha);
        ladder.push(EpsStage {
            eps,
            alpha,
            steps: history.len(),
        });
        // consecutive stages agree: jump to the final ε = 0 stage
        match prev {
            Some(a) if eps > 0.0 && (alpha - a).abs() <= cfg.tol_alpha * alpha.max(1.0) => stage = schedule.len() - 1,
            _ => stage += 1,
        }
    }

    let scheme = map.solver.scheme();
    let cmax = g.interior().map(|k| c.get(k)).fold(0.0, f64::max);
    let residual = g
        .interior()
        .map(|k| (scheme.eval(&u, k) + alpha * c.get(k) * u[k]).abs())
        .fold(0.0, f64::max)
        / (alpha * cmax);
    let f = sign.factor();
    let phi = GridFunction::new(g, u.iter().map(|v| f * v).collect())?;
    Ok(EigenPair {
        sign,
        alpha,
        phi,
        trace,
        steps,
        ladder,
        residual,
        init: cfg.init.clone(),
    })
}
