//! Dirichlet solvers for `F[u] = f`, `u = ψ` on the boundary.
//!
//! The residual convention is `R = F_h[u] − f`. Because `F_h` is
//! nondecreasing in neighbor values and nonincreasing in the center value,
//! the explicit update `u ← u + ρR` is monotone for small `ρ`. Extremal
//! operators are solved by policy iteration on the generalized Jacobian,
//! with the explicit iteration as fallback.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretize::{monotonicity_audit, AuditReport, Scheme, StencilConfig};
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::gridfn::{lattice_of, GridFunction, Region};
use crate::linalg::{Csr, LinearSolver};
use crate::operators::OperatorSpec;
use crate::rules::ScalarRule;

/// A scalar field given by a rule or already sampled on the problem grid.
#[derive(Clone, Debug)]
pub enum FieldSource {
    Rule(ScalarRule),
    Sampled(GridFunction),
}

impl FieldSource {
    pub fn zero() -> Self {
        FieldSource::Rule(ScalarRule::zero())
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> Result<Vec<f64>> {
        match self {
            FieldSource::Rule(r) => {
                let lat = lattice_of(grid);
                let v: Vec<f64> = (0..grid.len()).map(|k| r.eval_on(grid.coords(k), Some(lat))).collect();
                if let Some(k) = v.iter().position(|x| !x.is_finite()) {
                    return Err(invalid(format!("field is not finite at node {k}")));
                }
                Ok(v)
            }
            FieldSource::Sampled(g) => {
                if g.grid().len() != grid.len() {
                    return Err(Error::GridMismatch("sampled field lives on another grid".into()));
                }
                Ok(g.values().to_vec())
            }
        }
    }
}

impl From<ScalarRule> for FieldSource {
    fn from(r: ScalarRule) -> Self {
        FieldSource::Rule(r)
    }
}

impl From<GridFunction> for FieldSource {
    fn from(g: GridFunction) -> Self {
        FieldSource::Sampled(g)
    }
}

/// Operator, right-hand side, boundary data and grid.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub operator: OperatorSpec,
    pub rhs: FieldSource,
    pub boundary: FieldSource,
    /// Hölder exponent of the boundary data, for flat-boundary work.
    pub tau: Option<f64>,
    pub grid: Arc<Grid>,
}

impl ProblemSpec {
    pub fn new(operator: OperatorSpec, grid: Arc<Grid>) -> Self {
        ProblemSpec {
            operator,
            rhs: FieldSource::zero(),
            boundary: FieldSource::zero(),
            tau: None,
            grid,
        }
    }

    pub fn with_rhs(mut self, f: impl Into<FieldSource>) -> Self {
        self.rhs = f.into();
        self
    }

    pub fn with_boundary(mut self, psi: impl Into<FieldSource>) -> Self {
        self.boundary = psi.into();
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tau {
            if !(t > 0.0 && t <= 1.0) {
                return Err(invalid(format!("boundary exponent τ must lie in (0,1], got {t}")));
            }
        }
        if self.operator.dim != self.grid.dim() {
            return Err(invalid("operator and grid dimensions differ"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Absolute tolerance on the ∞-norm of the residual.
    pub tol: f64,
    pub max_sweeps: usize,
    pub stencil: StencilConfig,
    /// Multiplier on the explicit pseudo-time step, in (0, 1].
    pub rho_safety: f64,
    pub policy_iteration: bool,
    pub max_policy_iterations: usize,
    /// Threshold of the advisory smallness gate for μ > 0.
    pub delta_gate: f64,
    /// Exponent of the `L^p` norm used by the gate; `2n` when absent.
    pub gate_exponent: Option<f64>,
    /// Sweeps over which residual growth counts as divergence.
    pub patience: usize,
    pub audit_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_sweeps: 200_000,
            stencil: StencilConfig::default(),
            rho_safety: 1.0,
            policy_iteration: true,
            max_policy_iterations: 200,
            delta_gate: 1.0,
            gate_exponent: None,
            patience: 2_000,
            audit_samples: 10_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.stencil.validate()?;
        if !(self.tol > 0.0) {
            return Err(invalid("tol must be positive"));
        }
        if !(self.rho_safety > 0.0 && self.rho_safety <= 1.0) {
            return Err(invalid("rho_safety must lie in (0,1]"));
        }
        if self.patience == 0 {
            return Err(invalid("patience must be positive"));
        }
        Ok(())
    }
}

/// Outcome of the smallness check `μ·‖f⁻‖_p·diam^{n/p} ≤ δ`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GateReport {
    pub mu: f64,
    pub p: f64,
    pub f_minus_norm: f64,
    pub diameter: f64,
    pub value: f64,
    pub delta: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Policy,
    Explicit,
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct TraceEntry {
    pub sweep: usize,
    pub residual: f64,
    pub phase: Phase,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: GridFunction,
    pub residual: f64,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub config: SolverConfig,
    pub gate: Option<GateReport>,
    /// False when the smallness gate failed.
    pub trusted: bool,
    pub policy_iterations: usize,
    pub sweeps: usize,
}

impl Solution {
    /// Convergence trace as `sweep,residual` CSV.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("sweep,residual\n");
        for t in &self.trace {
            s.push_str(&format!("{},{:.6e}\n", t.sweep, t.residual));
        }
        s
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// A solver bound to one operator and grid; reusable across right-hand
/// sides and boundary data.
#[derive(Debug)]
pub struct DirichletSolver {
    scheme: Scheme,
    cfg: SolverConfig,
    audit: AuditReport,
    linear: LinearSolver,
}

impl DirichletSolver {
    /// Assembles the scheme and refuses non-monotone ones.
    pub fn new(op: &OperatorSpec, grid: Arc<Grid>, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let scheme = Scheme::new(op, grid, cfg.stencil)?;
        let audit = monotonicity_audit(&scheme, cfg.audit_samples, 0x5EED);
        if !audit.pass {
            return Err(Error::NonMonotone {
                violations: audit.violations,
                samples: audit.samples,
            });
        }
        Ok(DirichletSolver {
            scheme,
            cfg,
            audit,
            linear: LinearSolver::new(),
        })
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn audit(&self) -> &AuditReport {
        &self.audit
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn grid(&self) -> &Arc<Grid> {
        self.scheme.grid()
    }

    fn residual_vec(&self, u: &[f64], f: &[f64]) -> Vec<f64> {
        self.grid().interior().map(|k| self.scheme.eval(u, k) - f[k]).collect()
    }

    fn gate(&self, f: &[f64]) -> Result<Option<GateReport>> {
        let mu = self.scheme.operator().params.mu;
        if mu == 0.0 {
            return Ok(None);
        }
        let g = self.grid();
        let n = g.dim() as f64;
        let p = self.cfg.gate_exponent.unwrap_or(2.0 * n);
        let fm = GridFunction::new(g.clone(), f.to_vec())?.negative_part();
        let norm = fm.lp_norm(p, &Region::Interior)?;
        let diam = g.domain().diameter();
        let value = mu * norm * diam.powf(n / p);
        Ok(Some(GateReport {
            mu,
            p,
            f_minus_norm: norm,
            diameter: diam,
            value,
            delta: self.cfg.delta_gate,
            pass: value <= self.cfg.delta_gate,
        }))
    }

    /// Jacobian on interior columns and the residual at `u`.
    fn assemble(&self, u: &[f64], f: &[f64]) -> (Csr, Vec<f64>) {
        let g = self.grid();
        let n = g.n_interior();
        let mut m = Csr::with_capacity(n, n * (4 * self.scheme.lines() + 1));
        let mut r = Vec::with_capacity(n);
        let mut row = Vec::new();
        for k in g.interior() {
            row.clear();
            let v = self
                .scheme
                .linearize_into(u, k, &mut row)
                .expect("policy structure checked by caller");
            row.retain(|e| e.0 < n);
            m.push_row(&mut row);
            r.push(v - f[k]);
        }
        (m, r)
    }

    /// Boundary-pinned discrete harmonic extension of `psi`.
    fn harmonic_extension(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let g = self.grid();
        let lap = Scheme::new(&OperatorSpec::laplacian(g.dim()), g.clone(), self.cfg.stencil)?;
        let mut u = psi.to_vec();
        u[..g.n_interior()].iter_mut().for_each(|v| *v = 0.0);
        let n = g.n_interior();
        let mut m = Csr::with_capacity(n, n * (4 * lap.lines() + 1));
        let mut r = Vec::with_capacity(n);
        let mut row = Vec::new();
        for k in g.interior() {
            row.clear();
            let v = lap.linearize_into(&u, k, &mut row).expect("laplacian is linear");
            row.retain(|e| e.0 < n);
            m.push_row(&mut row);
            r.push(-v);
        }
        let d = LinearSolver::new().solve(m, &r)?;
        u[..n].copy_from_slice(&d);
        Ok(u)
    }

    fn initial_guess(&self, psi: &[f64]) -> Vec<f64> {
        let g = self.grid();
        match self.harmonic_extension(psi) {
            Ok(u) => u,
            Err(_) => {
                let b = g.boundary();
                let mean = if b.is_empty() {
                    0.0
                } else {
                    psi[b.clone()].iter().sum::<f64>() / b.len() as f64
                };
                let mut u = psi.to_vec();
                u[..g.n_interior()].iter_mut().for_each(|v| *v = mean);
                u
            }
        }
    }

    /// Solves with `f` and `ψ` given at every node (ψ read on boundary
    /// nodes only) and an optional warm start.
    pub fn solve_with(&mut self, f: &[f64], psi: &[f64], init: Option<&[f64]>) -> Result<Solution> {
        let g = self.grid().clone();
        if f.len() != g.len() || psi.len() != g.len() {
            return Err(Error::GridMismatch("field length differs from grid size".into()));
        }
        let gate = self.gate(f)?;
        let mut u = match init {
            Some(v) if v.len() == g.len() => v.to_vec(),
            Some(_) => return Err(Error::GridMismatch("initial guess length differs from grid size".into())),
            None => self.initial_guess(psi),
        };
        for k in g.boundary() {
            u[k] = psi[k];
        }
        let n = g.n_interior();
        let tol = self.cfg.tol;
        let mut trace = Vec::new();
        let mut res = self.residual_vec(&u, f);
        let mut rn = sup(&res);
        trace.push(TraceEntry {
            sweep: 0,
            residual: rn,
            phase: Phase::Policy,
        });
        let mut sweeps = 0;
        let mut policy_iterations = 0;

        if self.scheme.has_policy_structure() && self.cfg.policy_iteration {
            let mut recent = vec![rn];
            // best iterate so far, restored when watchdog steps fail to pay off
            let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
            let mut watchdog = 0;
            while rn > tol && policy_iterations < self.cfg.max_policy_iterations {
                let (m, r) = self.assemble(&u, f);
                let neg: Vec<f64> = r.iter().map(|v| -v).collect();
                let delta = match self.linear.solve(m, &neg) {
                    Ok(d) => d,
                    Err(_) => break,
                };
                policy_iterations += 1;
                let reference = recent.iter().cloned().fold(0.0, f64::max);
                let mut accepted = None;
                let mut t = 1.0;
                for _ in 0..12 {
                    let mut v = u.clone();
                    for i in 0..n {
                        v[i] += t * delta[i];
                    }
                    let rv = self.residual_vec(&v, f);
                    let nv = sup(&rv);
                    if nv.is_finite() && (nv <= tol || nv < reference * (1.0 - 1e-4 * t)) {
                        accepted = Some((v, rv, nv));
                        break;
                    }
                    t *= 0.5;
                }
                let (v, rv, nv) = match accepted {
                    Some(step) => {
                        watchdog = 0;
                        step
                    }
                    // A degenerate start (an affine guess has a rounding-noise
                    // Hessian) can pick a poor first policy whose Howard step
                    // raises the residual; a few full steps usually recover.
                    None if watchdog < 3 => {
                        let mut v = u.clone();
                        for i in 0..n {
                            v[i] += delta[i];
                        }
                        let rv = self.residual_vec(&v, f);
                        let nv = sup(&rv);
                        if !nv.is_finite() {
                            break;
                        }
                        if watchdog == 0 {
                            best = Some((u.clone(), res.clone(), rn));
                        }
                        watchdog += 1;
                        (v, rv, nv)
                    }
                    None => break,
                };
                u = v;
                res = rv;
                rn = nv;
                sweeps += 1;
                trace.push(TraceEntry {
                    sweep: sweeps,
                    residual: rn,
                    phase: Phase::Policy,
                });
                recent.push(rn);
                if recent.len() > 5 {
                    recent.remove(0);
                }
            }
            if let Some((bu, br, bn)) = best {
                if bn < rn {
                    (u, res, rn) = (bu, br, bn);
                }
            }
        }

        if rn > tol {
            let mut safety = self.cfg.rho_safety;
            let mut best = rn;
            let mut checkpoint = rn;
            let mut prev = rn;
            let mut rho = vec![0.0; n];
            let start = sweeps;
            while rn > tol && sweeps - start < self.cfg.max_sweeps {
                for (k, r) in rho.iter_mut().enumerate() {
                    *r = safety * self.scheme.pseudo_time_step(&u, k);
                }
                for k in 0..n {
                    u[k] += rho[k] * res[k];
                }
                res = self.residual_vec(&u, f);
                rn = sup(&res);
                sweeps += 1;
                if !rn.is_finite() {
                    return Err(Error::Diverged {
                        sweep: sweeps,
                        residual: rn,
                        best,
                    });
                }
                if rn > 1.5 * prev && safety > 1.0 / 64.0 {
                    safety *= 0.5;
                }
                prev = rn;
                best = best.min(rn);
                if (sweeps - start) % self.cfg.patience == 0 {
                    if rn > 10.0 * checkpoint && rn > 10.0 * best {
                        return Err(Error::Diverged {
                            sweep: sweeps,
                            residual: rn,
                            best,
                        });
                    }
                    checkpoint = rn;
                }
                if sweeps % 100 == 0 || rn <= tol {
                    trace.push(TraceEntry {
                        sweep: sweeps,
                        residual: rn,
                        phase: Phase::Explicit,
                    });
                }
            }
        }

        let trusted = gate.as_ref().is_none_or(|gr| gr.pass);
        Ok(Solution {
            u: GridFunction::new(g, u)?,
            residual: rn,
            trace,
            converged: rn <= tol,
            config: self.cfg.clone(),
            gate,
            trusted,
            policy_iterations,
            sweeps,
        })
    }

    pub fn solve(&mut self, problem: &ProblemSpec) -> Result<Solution> {
        let g = self.grid().clone();
        if !Arc::ptr_eq(&problem.grid, &g) && problem.grid.len() != g.len() {
            return Err(Error::GridMismatch("problem grid differs from solver grid".into()));
        }
        let f = problem.rhs.sample(&g)?;
        let psi = problem.boundary.sample(&g)?;
        self.solve_with(&f, &psi, None)
    }
}

/// Solves `F[u] = f` in the domain with `u = ψ` on the boundary.
pub fn solve_dirichlet(problem: &ProblemSpec, cfg: &SolverConfig) -> Result<Solution> {
    problem.validate()?;
    DirichletSolver::new(&problem.operator, problem.grid.clone(), cfg.clone())?.solve(problem)
}

/// Solves `F(D²u) = 0` with `u = ψ` on the boundary.
pub fn solve_pure(op: &OperatorSpec, psi: impl Into<FieldSource>, grid: Arc<Grid>, cfg: &SolverConfig) -> Result<Solution> {
    if !op.is_pure_second_order() {
        return Err(invalid(format!("operator {} depends on more than D²u", op.label())));
    }
    let problem = ProblemSpec::new(op.clone(), grid).with_boundary(psi);
    solve_dirichlet(&problem, cfg)
}

/// `F_h[u] − f` on interior nodes, zero on boundary nodes.
pub fn residual(problem: &ProblemSpec, u: &GridFunction) -> Result<GridFunction> {
    residual_with(problem, u, StencilConfig::default())
}

/// Same as [`residual`] with an explicit stencil configuration.
pub fn residual_with(problem: &ProblemSpec, u: &GridFunction, stencil: StencilConfig) -> Result<GridFunction> {
    let g = &problem.grid;
    if u.grid().len() != g.len() || (!Arc::ptr_eq(u.grid(), g) && u.grid().h() != g.h()) {
        return Err(Error::GridMismatch("function does not live on the problem grid".into()));
    }
    let scheme = Scheme::new(&problem.operator, g.clone(), stencil)?;
    let f = problem.rhs.sample(g)?;
    let mut out = vec![0.0; g.len()];
    for k in g.interior() {
        out[k] = scheme.eval(u.values(), k) - f[k];
    }
    GridFunction::new(g.clone(), out)
}
