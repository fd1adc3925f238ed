//! Pipelines behind each experiment kind. Reports hold no timings so that a
//! (config, seed) pair always produces the same bytes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use viscolab::operators::{h_theta_report, oscillation_beta, BetaVariant};
use viscolab::*;

use crate::config::{ConfigError, ExperimentConfig, HThetaSection, Kind};

/// Files produced by a run, keyed by file name.
#[derive(Default)]
pub struct Artifacts {
    pub json: Vec<(String, Value)>,
    pub csv: Vec<(String, String)>,
    /// Set when a solver did not converge; artifacts are still written.
    pub failure: Option<String>,
}

impl Artifacts {
    fn report(&mut self, name: &str, value: Value) {
        self.json.push((name.into(), value));
    }

    fn csv(&mut self, name: &str, text: String) {
        self.csv.push((name.into(), text));
    }

    /// Report value by file stem, e.g. `report` for `report.json`.
    pub fn lookup(&self, stem: &str) -> Option<&Value> {
        self.json.iter().find(|(n, _)| n.trim_end_matches(".json") == stem).map(|(_, v)| v)
    }
}

pub enum RunError {
    Config(ConfigError),
    Solver(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<viscolab::Error> for RunError {
    fn from(e: viscolab::Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Inadmissible { .. } | Error::EmptyRegion | Error::GridMismatch(_) => {
                RunError::Config(ConfigError(e.to_string()))
            }
            other => RunError::Solver(other.to_string()),
        }
    }
}

type Run<T> = std::result::Result<T, RunError>;

fn to_value(v: impl Serialize) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn header(cfg: &ExperimentConfig, seed: u64) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema".into(), json!(REPORT_SCHEMA));
    m.insert("kind".into(), json!(cfg.kind.name()));
    m.insert("seed".into(), json!(seed));
    m
}

fn merge(mut head: serde_json::Map<String, Value>, body: Value) -> Value {
    if let Value::Object(b) = body {
        for (k, v) in b {
            head.entry(k).or_insert(v);
        }
    }
    Value::Object(head)
}

pub fn execute(cfg: &ExperimentConfig, seed: u64) -> Run<Artifacts> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Artifacts::default();
    match cfg.kind {
        Kind::Solve => solve(cfg, seed, &mut out)?,
        Kind::Eigen => eigen(cfg, seed, &mut rng, &mut out)?,
        Kind::AbpBatch => abp(cfg, seed, &mut rng, &mut out)?,
        Kind::Regularity => regularity(cfg, seed, &mut out)?,
        Kind::Oscillation => oscillation(cfg, seed, &mut rng, &mut out)?,
        Kind::Approximation => approximation(cfg, seed, &mut out)?,
        Kind::BoundCertificate => certificate(cfg, seed, &mut out)?,
        Kind::Nagumo => nagumo(cfg, seed, &mut out)?,
    }
    Ok(out)
}

fn problem_at(cfg: &ExperimentConfig, grid: Arc<Grid>) -> Run<ProblemSpec> {
    let p = cfg.problem.as_ref().expect("validated");
    let mut spec = ProblemSpec::new(cfg.operator()?, grid);
    if let Some(f) = &p.rhs {
        spec = spec.with_rhs(f.clone());
    }
    if let Some(psi) = &p.boundary {
        spec = spec.with_boundary(psi.clone());
    }
    Ok(spec)
}

fn main_grid(cfg: &ExperimentConfig) -> Run<Arc<Grid>> {
    let h = cfg.problem.as_ref().and_then(|p| p.h).expect("validated");
    Ok(cfg.grid(h)?)
}

fn solution_summary(cfg: &ExperimentConfig, problem: &ProblemSpec, s: &Solution) -> Value {
    let g = &problem.grid;
    let mut v = json!({
        "operator": problem.operator.label(),
        "domain": to_value(g.domain()),
        "h": g.h(),
        "nodes": g.len(),
        "interior": g.n_interior(),
        "converged": s.converged,
        "residual": s.residual,
        "policy_iterations": s.policy_iterations,
        "sweeps": s.sweeps,
        "u_inf": s.u.sup_norm(),
        "trusted": s.trusted,
        "gate": to_value(&s.gate),
    });
    if let Some(exact) = cfg.problem.as_ref().and_then(|p| p.exact.as_ref()) {
        let err = (0..g.len())
            .map(|k| (s.u.get(k) - exact.eval(g.coords(k))).abs())
            .fold(0.0, f64::max);
        v["error_inf"] = json!(err);
    }
    v
}

fn run_solve(cfg: &ExperimentConfig, problem: &ProblemSpec, out: &mut Artifacts) -> Run<Solution> {
    let s = solve_dirichlet(problem, &cfg.solver_config(SolverConfig::default()))?;
    if !s.converged {
        out.failure = Some(format!(
            "solver stopped at residual {:e} above tol {:e} on h = {}",
            s.residual,
            s.config.tol,
            problem.grid.h()
        ));
    }
    Ok(s)
}

fn solve(cfg: &ExperimentConfig, seed: u64, out: &mut Artifacts) -> Run<()> {
    let problem = problem_at(cfg, main_grid(cfg)?)?;
    let s = run_solve(cfg, &problem, out)?;
    out.report("report.json", merge(header(cfg, seed), solution_summary(cfg, &problem, &s)));
    out.csv("u.csv", s.u.to_csv());
    out.csv("trace.csv", s.trace_csv());
    Ok(())
}

fn eigen(cfg: &ExperimentConfig, seed: u64, rng: &mut ChaCha8Rng, out: &mut Artifacts) -> Run<()> {
    let op = cfg.operator()?;
    let grid = main_grid(cfg)?;
    let c = cfg.weight(&grid)?;
    let section = cfg.eigen.clone();
    let sign = section.as_ref().map_or(Sign::Plus, |e| e.sign);
    let trials = section.as_ref().map_or(1, |e| e.trials);
    let mut ecfg = cfg.eigen_config();
    if let InitialGuess::Random { .. } = ecfg.init {
        ecfg.init = InitialGuess::Random { seed: rng.random() };
    }
    let pair = if trials > 1 {
        let rep_tol = section.as_ref().map_or(1e-5, |e| e.rep_tol);
        let (report, mut pairs) = simplicity_check(&op, &c, sign, trials, &ecfg, rep_tol)?;
        out.report("simplicity.json", merge(header(cfg, seed), to_value(&report)));
        pairs.swap_remove(0)
    } else {
        eigen_solve(&op, &c, sign, &ecfg)?
    };
    let positive = pair.phi.scale(sign.factor());
    let smp = smp_hopf_check(&positive, &SmpConfig::default());
    let mut body = to_value(pair.report());
    body["operator"] = json!(op.label());
    body["smp_hopf"] = to_value(&smp);
    out.report("report.json", merge(header(cfg, seed), body));
    out.csv("phi.csv", pair.phi.to_csv());
    out.csv("trace.csv", pair.trace_csv());
    Ok(())
}

fn abp(cfg: &ExperimentConfig, seed: u64, rng: &mut ChaCha8Rng, out: &mut Artifacts) -> Run<()> {
    let bcfg = cfg.abp_config(rng.random());
    let cap = cfg.abp.as_ref().and_then(|a| a.cap);
    let batch = abp_batch(&bcfg, cap)?;
    out.report("report.json", merge(header(cfg, seed), to_value(&batch)));
    Ok(())
}

fn h_theta(op: &OperatorSpec, domain: &Domain, center: &[f64], s: &HThetaSection) -> Run<Value> {
    Ok(to_value(h_theta_report(op, domain, center, s.radius, s.p, s.resolution)?))
}

fn regularity(cfg: &ExperimentConfig, seed: u64, out: &mut Artifacts) -> Run<()> {
    let problem = problem_at(cfg, main_grid(cfg)?)?;
    let s = run_solve(cfg, &problem, out)?;
    let section = cfg.fit.as_ref().expect("validated");
    let fit = caffarelli_fit(&s.u, &section.center, &cfg.fit_config(), section.boundary)?;
    let mut body = json!({
        "solve": solution_summary(cfg, &problem, &s),
        "fit": to_value(&fit),
        "shape_ratio": fit.shape_ratio(),
    });
    if let Some(ht) = &section.h_theta {
        body["h_theta"] = h_theta(&problem.operator, problem.grid.domain(), &section.center, ht)?;
    }
    out.report("report.json", merge(header(cfg, seed), body));
    out.csv("u.csv", s.u.to_csv());
    Ok(())
}

fn sample_point(domain: &Domain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lo, hi) = domain.bounding_box();
    let n = domain.dim();
    loop {
        let x: Vec<f64> = (0..n).map(|i| rng.random_range(lo[i]..hi[i])).collect();
        if domain.contains(&x) {
            return x;
        }
    }
}

fn oscillation(cfg: &ExperimentConfig, seed: u64, rng: &mut ChaCha8Rng, out: &mut Artifacts) -> Run<()> {
    let op = cfg.operator()?;
    let domain = cfg.problem.as_ref().expect("validated").domain.clone();
    let section = cfg.oscillation.clone().unwrap_or(crate::config::OscillationSection {
        pairs: 64,
        norm: MatrixNorm::Spectral,
        center: None,
        h_theta: None,
    });
    let n = domain.dim();
    let mut csv = String::from(if n == 1 { "x,x0,beta,beta_bar\n" } else { "x_0,x_1,x0_0,x0_1,beta,beta_bar\n" });
    let (mut max_beta, mut max_bar, mut ordered) = (0.0f64, 0.0f64, true);
    for _ in 0..section.pairs {
        let x = sample_point(&domain, rng);
        let x0 = match &section.center {
            Some(c) => c.clone(),
            None => sample_point(&domain, rng),
        };
        let b = oscillation_beta(&op, &x, &x0, BetaVariant::Beta, section.norm).value;
        let bb = oscillation_beta(&op, &x, &x0, BetaVariant::BetaBar, section.norm).value;
        max_beta = max_beta.max(b);
        max_bar = max_bar.max(bb);
        ordered &= bb <= b;
        let coords: Vec<String> = x.iter().chain(&x0).map(|v| format!("{v:.17e}")).collect();
        csv.push_str(&format!("{},{b:.17e},{bb:.17e}\n", coords.join(",")));
    }
    let mut body = json!({
        "operator": op.label(),
        "pairs": section.pairs,
        "norm": to_value(section.norm),
        "max_beta": max_beta,
        "max_beta_bar": max_bar,
        "beta_bar_le_beta": ordered,
    });
    if let Some(ht) = &section.h_theta {
        let center = section
            .center
            .clone()
            .ok_or_else(|| ConfigError("oscillation.h_theta needs oscillation.center".into()))?;
        body["h_theta"] = h_theta(&op, &domain, &center, ht)?;
    }
    out.report("report.json", merge(header(cfg, seed), body));
    out.csv("pairs.csv", csv);
    Ok(())
}

fn approximation(cfg: &ExperimentConfig, seed: u64, out: &mut Artifacts) -> Run<()> {
    let section = cfg.approximation.as_ref().expect("validated");
    let p = cfg.problem.as_ref().expect("validated");
    let mut setup = ApproxSetup::new(cfg.operator()?, main_grid(cfg)?);
    if let Some(f) = &p.rhs {
        setup.rhs = f.clone();
    }
    if let Some(psi) = &p.boundary {
        setup.boundary = psi.clone();
    }
    setup.affine_a = section.affine_a;
    setup.affine_b = section.affine_b;
    if let Some(v) = section.p {
        setup.p = v;
    }
    if let Some(v) = section.beta_nodes {
        setup.beta_nodes = v;
    }
    let solver = cfg.solver_config(SolverConfig {
        tol: 1e-11,
        ..Default::default()
    });
    let mut ladder = Vec::new();
    for &d in &section.deltas {
        ladder.push(approximation_gap(&setup, d, &solver)?);
    }
    let gaps: Vec<f64> = ladder.iter().map(|r| r.gap).collect();
    let body = json!({
        "operator": setup.operator.label(),
        "deltas": section.deltas,
        "gaps": gaps,
        "nonincreasing": gaps.windows(2).all(|w| w[1] <= w[0]),
        "ladder": to_value(&ladder),
    });
    out.report("report.json", merge(header(cfg, seed), body));
    Ok(())
}

fn certificate(cfg: &ExperimentConfig, seed: u64, out: &mut Artifacts) -> Run<()> {
    let section = cfg.certificate.as_ref().expect("validated");
    let op = cfg.operator()?;
    let grid = main_grid(cfg)?;
    let c = cfg.weight(&grid)?;
    let cert = eigen_upper_bound_sigma(&op, &c, section.center, section.radius, section.sign)?;
    let mut body = json!({ "operator": op.label(), "certificate": to_value(&cert) });
    if section.compare {
        let pair = eigen_solve(&op, &c, section.sign, &cfg.eigen_config())?;
        body["alpha"] = json!(pair.alpha);
        body["dominated"] = json!(pair.alpha <= cert.bound);
    }
    out.report("report.json", merge(header(cfg, seed), body));
    Ok(())
}

fn nagumo(cfg: &ExperimentConfig, seed: u64, out: &mut Artifacts) -> Run<()> {
    let section = cfg.nagumo.as_ref().expect("validated");
    let mut ladder = Vec::new();
    for &h in &section.hs {
        let problem = problem_at(cfg, cfg.grid(h)?)?;
        let s = run_solve(cfg, &problem, out)?;
        if out.failure.is_some() {
            break;
        }
        ladder.push(nagumo_check(&s, &problem, section.p)?);
    }
    let ratios: Vec<f64> = ladder.iter().map(|r| r.ratio).collect();
    let body = json!({
        "p": section.p,
        "hs": section.hs,
        "ratios": ratios,
        "stable": out.failure.is_none() && nagumo_ladder_stable(&ratios),
        "ladder": to_value(&ladder),
    });
    out.report("report.json", merge(header(cfg, seed), body));
    Ok(())
}
