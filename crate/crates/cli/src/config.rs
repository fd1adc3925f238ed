//! Experiment configuration: TOML with dotted sections, every table closed
//! against unknown keys.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use viscolab::*;
use std::result::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Solve,
    Eigen,
    AbpBatch,
    Regularity,
    Oscillation,
    Approximation,
    BoundCertificate,
    Nagumo,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::Eigen => "eigen",
            Kind::AbpBatch => "abp_batch",
            Kind::Regularity => "regularity",
            Kind::Oscillation => "oscillation",
            Kind::Approximation => "approximation",
            Kind::BoundCertificate => "bound_certificate",
            Kind::Nagumo => "nagumo",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub problem: Option<ProblemConfig>,
    pub solver: Option<SolverConfig>,
    /// Shorthand for `solver.stencil`.
    pub stencil: Option<StencilConfig>,
    pub eigen: Option<EigenSection>,
    pub abp: Option<AbpSection>,
    pub fit: Option<FitSection>,
    pub oscillation: Option<OscillationSection>,
    pub approximation: Option<ApproxSection>,
    pub certificate: Option<CertificateSection>,
    pub nagumo: Option<NagumoSection>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: Domain,
    pub h: Option<f64>,
    pub operator: OperatorConfig,
    pub rhs: Option<ScalarRule>,
    pub boundary: Option<ScalarRule>,
    /// Eigenvalue weight `c`.
    pub weight: Option<ScalarRule>,
    /// Known solution; the solve report then carries the ∞-error.
    pub exact: Option<ScalarRule>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorConfig {
    Laplacian,
    Pucci {
        sign: Sign,
        lambda: f64,
        cap: f64,
    },
    Extremal {
        sign: Sign,
        lambda: f64,
        cap: f64,
        #[serde(default)]
        mu: f64,
        b: Option<CoefficientField>,
        d: Option<CoefficientField>,
        omega: Option<Modulus>,
    },
    TraceScaled {
        a: ScalarRule,
        lambda: f64,
        cap: f64,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenSection {
    #[serde(default = "plus")]
    pub sign: Sign,
    /// More than one trial runs the simplicity check.
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "rep_tol")]
    pub rep_tol: f64,
    pub tol_alpha: Option<f64>,
    pub tol_field: Option<f64>,
    pub eps_schedule: Option<Vec<f64>>,
    pub max_steps: Option<usize>,
    pub init: Option<InitialGuess>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbpSection {
    pub problems: Option<usize>,
    pub h: Option<f64>,
    pub domain: Option<Domain>,
    pub p: Option<f64>,
    /// Check against this cap instead of calibrating one.
    pub cap: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub center: Vec<f64>,
    #[serde(default)]
    pub boundary: bool,
    pub gamma: Option<f64>,
    pub scales: Option<usize>,
    pub alpha_grid: Option<Vec<f64>>,
    pub r0: Option<f64>,
    pub min_nodes: Option<usize>,
    pub h_theta: Option<HThetaSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HThetaSection {
    pub radius: f64,
    pub p: f64,
    #[serde(default = "resolution")]
    pub resolution: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationSection {
    #[serde(default = "pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub norm: MatrixNorm,
    pub center: Option<Vec<f64>>,
    pub h_theta: Option<HThetaSection>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSection {
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub affine_a: f64,
    #[serde(default)]
    pub affine_b: [f64; 2],
    pub p: Option<f64>,
    pub beta_nodes: Option<usize>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    pub center: [f64; 2],
    pub radius: f64,
    #[serde(default = "plus")]
    pub sign: Sign,
    /// Also compute the eigenvalue and compare it with the bound.
    #[serde(default = "yes")]
    pub compare: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NagumoSection {
    pub p: f64,
    #[serde(default = "ladder")]
    pub hs: Vec<f64>,
}

/// One assertion on a report value addressed by a dotted path.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Report file stem; `report` when absent.
    pub report: Option<String>,
    pub path: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub near: Option<f64>,
    pub rel: Option<f64>,
    pub abs: Option<f64>,
    pub equals: Option<serde_json::Value>,
}

fn plus() -> Sign {
    Sign::Plus
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn rep_tol() -> f64 {
    1e-5
}
fn resolution() -> usize {
    16
}
fn pairs() -> usize {
    64
}
fn ladder() -> Vec<f64> {
    vec![1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
}

/// Configuration problems, reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

pub fn load(path: &Path) -> Result<(ExperimentConfig, String), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let cfg = parse(&text)?;
    Ok((cfg, text))
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    if text.trim().is_empty() {
        return Err(bad("empty config: `kind` is required"));
    }
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Checks that the sections needed by `kind` are present and that every
    /// core object can be built, without computing anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let need = |present: bool, key: &str| {
            if present {
                Ok(())
            } else {
                Err(bad(format!("kind = \"{}\" requires the `{key}` section", self.kind.name())))
            }
        };
        match self.kind {
            Kind::AbpBatch => {}
            Kind::Nagumo | Kind::Oscillation => need(self.problem.is_some(), "problem")?,
            _ => {
                need(self.problem.is_some(), "problem")?;
                if self.problem.as_ref().is_some_and(|p| p.h.is_none()) {
                    return Err(bad(format!("kind = \"{}\" requires `problem.h`", self.kind.name())));
                }
            }
        }
        match self.kind {
            Kind::Nagumo => need(self.nagumo.is_some(), "nagumo")?,
            Kind::Regularity => need(self.fit.is_some(), "fit")?,
            Kind::Approximation => need(self.approximation.is_some(), "approximation")?,
            Kind::BoundCertificate => need(self.certificate.is_some(), "certificate")?,
            _ => {}
        }
        self.solver_config(SolverConfig::default()).validate().map_err(core)?;
        if let Some(p) = &self.problem {
            p.domain.validate().map_err(core)?;
            self.operator()?;
            if let Some(h) = p.h {
                check_h(h)?;
            }
            for rule in [&p.rhs, &p.boundary, &p.weight, &p.exact].into_iter().flatten() {
                rule.validate().map_err(core)?;
            }
        }
        if let Some(e) = &self.eigen {
            if e.trials == 0 {
                return Err(bad("eigen.trials must be at least 1"));
            }
            self.eigen_config().validate().map_err(core)?;
        }
        if let Some(f) = &self.fit {
            self.fit_config().validate().map_err(core)?;
            let n = self.dim();
            if f.center.len() != n {
                return Err(bad(format!("fit.center needs {n} coordinates, got {}", f.center.len())));
            }
        }
        if let Some(a) = &self.approximation {
            if a.deltas.is_empty() || a.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return Err(bad("approximation.deltas must be a nonempty list of finite values ≥ 0"));
            }
        }
        if let Some(c) = &self.certificate {
            if !(c.radius > 0.0) {
                return Err(bad("certificate.radius must be positive"));
            }
        }
        if let Some(n) = &self.nagumo {
            if n.hs.is_empty() {
                return Err(bad("nagumo.hs must not be empty"));
            }
            for h in &n.hs {
                check_h(*h)?;
            }
        }
        for (i, e) in self.expect.iter().enumerate() {
            let bounds = e.min.is_some() || e.max.is_some() || e.near.is_some() || e.equals.is_some();
            if !bounds {
                return Err(bad(format!("expect[{i}] ({}) states no condition", e.path)));
            }
            if e.near.is_some() && e.rel.is_none() && e.abs.is_none() {
                return Err(bad(format!("expect[{i}] ({}): `near` needs `rel` or `abs`", e.path)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.problem.as_ref().map_or(2, |p| p.domain.dim())
    }

    pub fn solver_config(&self, base: SolverConfig) -> SolverConfig {
        let mut cfg = self.solver.clone().unwrap_or(base);
        if let Some(s) = self.stencil {
            cfg.stencil = s;
        }
        cfg
    }

    pub fn operator(&self) -> Result<OperatorSpec, ConfigError> {
        let p = self.problem.as_ref().ok_or_else(|| bad("missing `problem` section"))?;
        let n = p.domain.dim();
        let op = match &p.operator {
            OperatorConfig::Laplacian => OperatorSpec::laplacian(n),
            OperatorConfig::Pucci { sign, lambda, cap } => OperatorSpec::pucci(*sign, *lambda, *cap, n).map_err(core)?,
            OperatorConfig::Extremal {
                sign,
                lambda,
                cap,
                mu,
                b,
                d,
                omega,
            } => {
                let mut params = StructureParams::new(*lambda, *cap).map_err(core)?.with_mu(*mu);
                if let Some(b) = b {
                    params = params.with_b(CoefficientField::new(b.rule.clone(), b.p, n).map_err(core)?);
                }
                if let Some(d) = d {
                    let field = CoefficientField::new(d.rule.clone(), d.p, n).map_err(core)?;
                    params = params.with_d(field, omega.unwrap_or_default());
                } else if omega.is_some() {
                    return Err(bad("problem.operator.omega is given without `d`"));
                }
                OperatorSpec::extremal(*sign, params, n).map_err(core)?
            }
            OperatorConfig::TraceScaled { a, lambda, cap } => {
                OperatorSpec::trace_scaled(a.clone(), *lambda, *cap, n).map_err(core)?
            }
        };
        Ok(op)
    }

    pub fn grid(&self, h: f64) -> Result<Arc<Grid>, ConfigError> {
        let p = self.problem.as_ref().ok_or_else(|| bad("missing `problem` section"))?;
        Ok(Arc::new(Grid::new(p.domain.clone(), h).map_err(core)?))
    }

    pub fn eigen_config(&self) -> EigenConfig {
        let mut cfg = EigenConfig::default();
        if let Some(s) = &self.solver {
            cfg.solver = s.clone();
        }
        if let Some(st) = self.stencil {
            cfg.solver.stencil = st;
        }
        if let Some(e) = &self.eigen {
            if let Some(v) = e.tol_alpha {
                cfg.tol_alpha = v;
            }
            if let Some(v) = e.tol_field {
                cfg.tol_field = v;
            }
            if let Some(v) = &e.eps_schedule {
                cfg.eps_schedule = v.clone();
            }
            if let Some(v) = e.max_steps {
                cfg.max_steps = v;
            }
            if let Some(v) = &e.init {
                cfg.init = v.clone();
            }
        }
        cfg
    }

    pub fn fit_config(&self) -> FitConfig {
        let mut cfg = FitConfig::default();
        if let Some(f) = &self.fit {
            if let Some(v) = f.gamma {
                cfg.gamma = v;
            }
            if let Some(v) = f.scales {
                cfg.scales = v;
            }
            if let Some(v) = &f.alpha_grid {
                cfg.alpha_grid = v.clone();
            }
            if let Some(v) = f.r0 {
                cfg.r0 = v;
            }
            if let Some(v) = f.min_nodes {
                cfg.min_nodes = v;
            }
        }
        cfg
    }

    pub fn abp_config(&self, seed: u64) -> AbpBatchConfig {
        let mut cfg = AbpBatchConfig {
            seed,
            ..Default::default()
        };
        if let Some(s) = &self.solver {
            cfg.solver = s.clone();
        }
        if let Some(st) = self.stencil {
            cfg.solver.stencil = st;
        }
        if let Some(a) = &self.abp {
            if let Some(v) = a.problems {
                cfg.problems = v;
            }
            if let Some(v) = a.h {
                cfg.h = v;
            }
            if let Some(v) = &a.domain {
                cfg.domain = v.clone();
            }
            cfg.p = a.p.or(cfg.p);
        }
        cfg
    }

    pub fn weight(&self, grid: &Arc<Grid>) -> Result<GridFunction, ConfigError> {
        let rule = self
            .problem
            .as_ref()
            .and_then(|p| p.weight.clone())
            .unwrap_or_else(|| ScalarRule::constant(1.0));
        GridFunction::from_rule(grid.clone(), &rule).map_err(core)
    }
}

fn check_h(h: f64) -> Result<(), ConfigError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("grid spacing must be positive, got {h}")))
    }
}

fn core(e: viscolab::Error) -> ConfigError {
    bad(e.to_string())
}
