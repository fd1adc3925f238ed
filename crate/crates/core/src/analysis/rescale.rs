use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::measure_lp;
use crate::discretize::{Scheme, StencilConfig};
use crate::domain::Domain;
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::gridfn::{lattice_of, GridFunction};
use crate::operators::{AffineRescaling, OperatorSpec, StructureParams};
use crate::solve::ProblemSpec;
use crate::REPORT_SCHEMA;

/// Which size term enters the blow-up amplitude.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WVariant {
    /// `W = ‖u‖∞ + ‖f‖_p + ‖d‖_p ω(‖u‖∞)`, for Lipschitz moduli.
    #[default]
    Lipschitz,
    /// `max{W, 1}`, for arbitrary moduli.
    Arbitrary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlowupConfig {
    /// Exponent of `‖f‖_p` and `‖d‖_p`; `None` means `2n`.
    pub p: Option<f64>,
    pub variant: WVariant,
    /// Overrides the computed amplitude `N`.
    pub amplitude: Option<f64>,
    pub stencil: StencilConfig,
}

/// One step of the affine-fit iteration: `l_k(x) = a + b·(x − center)` at
/// radius `r_k` and exponent `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationStep {
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: [f64; 2],
    pub r_k: f64,
    pub alpha: f64,
    /// Bound `K ≥ |b_k|` in the transformed drift; defaults to `|b|`.
    #[serde(default)]
    pub k_bound: Option<f64>,
    #[serde(default)]
    pub stencil: StencilConfig,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RescaleKind {
    Blowup { sigma: f64, amplitude: f64, w: f64 },
    Iteration { r_k: f64, alpha: f64 },
}

/// Largest relative deviation of each transformed quantity from its
/// defining formula, over the rescaled nodes.
#[derive(Clone, Debug, Serialize)]
pub struct FormulaCheck {
    pub b: f64,
    pub d: f64,
    pub mu: f64,
    pub omega: f64,
}

impl FormulaCheck {
    pub fn max(&self) -> f64 {
        self.b.max(self.d).max(self.mu).max(self.omega)
    }
}

/// Where a rescaled node takes its value from.
#[derive(Clone, Copy, Debug)]
enum Source {
    Node(usize),
    /// Linear interpolation along a box edge between two lattice nodes.
    Edge(usize, usize, f64),
}

/// The rescaled field, operator and right-hand side on the box
/// `[−w, w]^n`, with `w = 2` for the blow-up and `w = 1` for the iteration.
#[derive(Clone, Debug)]
pub struct RescaledProblem {
    pub kind: RescaleKind,
    pub map: AffineRescaling,
    pub grid: Arc<Grid>,
    /// `ũ` or `v`
    pub field: GridFunction,
    /// Rescaled operator; its declared parameters are the transformed set.
    pub operator: OperatorSpec,
    /// `f̃₁ = (s²/A) f(y)`
    pub rhs_source: GridFunction,
    /// `f̃₂ = −(s²/A) F(y, ℓ(y), b, 0)`
    pub rhs_affine: GridFunction,
    pub field_sup: f64,
    /// Residual sup of the original problem on the image nodes.
    pub original_residual: f64,
    pub transformed_residual: f64,
    /// `max |R̃ − (s²/A) R|` over matched interior nodes.
    pub identity_error: f64,
    /// `(s²/A)·original + 10h`
    pub residual_bound: f64,
    sources: Vec<Source>,
    original: Arc<Grid>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RescaleReport {
    pub schema: String,
    pub kind: RescaleKind,
    pub map: AffineRescaling,
    pub mu: f64,
    pub field_sup: f64,
    pub original_residual: f64,
    pub transformed_residual: f64,
    pub identity_error: f64,
    pub residual_bound: f64,
    pub formulas: FormulaCheck,
}

impl RescaledProblem {
    pub fn params(&self) -> &StructureParams {
        &self.operator.params
    }

    /// `f̃₁ + f̃₂`
    pub fn rhs(&self) -> GridFunction {
        let v = self
            .rhs_source
            .values()
            .iter()
            .zip(self.rhs_affine.values())
            .map(|(a, b)| a + b)
            .collect();
        GridFunction::new(self.grid.clone(), v).expect("same grid")
    }

    /// The transformed Dirichlet problem with the field as boundary data.
    pub fn problem(&self) -> ProblemSpec {
        ProblemSpec::new(self.operator.clone(), self.grid.clone())
            .with_rhs(self.rhs())
            .with_boundary(self.field.clone())
    }

    /// Inverse map `u(y) = A·ũ(ξ) + ℓ(y)` on the rescaled nodes that are
    /// original nodes, as `(original node, value)` pairs.
    pub fn pull_back(&self) -> Vec<(usize, f64)> {
        self.sources
            .iter()
            .enumerate()
            .filter_map(|(k, s)| match *s {
                Source::Node(o) => {
                    Some((o, self.map.amplitude * self.field.get(k) + self.map.affine(self.original.coords(o))))
                }
                Source::Edge(..) => None,
            })
            .collect()
    }

    /// Compares the sampled transformed coefficients with `s·b(y) + 2sμK`,
    /// `s²d(y)`, `Aμ` and `ω(At)/A` evaluated from the original data.
    pub fn formula_check(&self, original: &StructureParams) -> FormulaCheck {
        let m = &self.map;
        let (s, a) = (m.scale, m.amplitude);
        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1.0);
        let lt = lattice_of(&self.grid);
        let lo = lattice_of(&self.original);
        let p = self.params();
        let mut out = FormulaCheck {
            b: 0.0,
            d: 0.0,
            mu: rel(p.mu, a * original.mu),
            omega: 0.0,
        };
        for k in 0..self.grid.len() {
            let xi = self.grid.coords(k);
            let y = m.to_original(xi);
            let y = &y[..xi.len()];
            let want_b = s * original.b.rule.eval_on(y, Some(lo)) + 2.0 * s * original.mu * m.k_bound;
            out.b = out.b.max(rel(p.b.rule.eval_on(xi, Some(lt)), want_b));
            let want_d = s * s * original.d.rule.eval_on(y, Some(lo));
            out.d = out.d.max(rel(p.d.rule.eval_on(xi, Some(lt)), want_d));
        }
        for t in [0.25, 1.0, 4.0] {
            out.omega = out.omega.max(rel(p.omega.eval(t), original.omega.eval(a * t) / a));
        }
        out
    }

    pub fn report(&self, original: &StructureParams) -> RescaleReport {
        RescaleReport {
            schema: REPORT_SCHEMA.into(),
            kind: self.kind.clone(),
            map: self.map,
            mu: self.params().mu,
            field_sup: self.field_sup,
            original_residual: self.original_residual,
            transformed_residual: self.transformed_residual,
            identity_error: self.identity_error,
            residual_bound: self.residual_bound,
            formulas: self.formula_check(original),
        }
    }
}

/// Lattice-aligned box grid around `x₀` and the original source of each of
/// its nodes.
fn box_grid(g: &Grid, x0: &[f64], s: f64, half: f64) -> Result<(Arc<Grid>, Vec<Source>)> {
    let n = g.dim();
    let h = g.h();
    g.find_node(x0)
        .filter(|&k| (0..n).all(|i| (g.coords(k)[i] - x0[i]).abs() <= 1e-9 * h))
        .ok_or_else(|| invalid("the center must be a lattice node"))?;
    let ratio = half * s / h;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 * ratio {
        return Err(invalid(format!(
            "scale {s} must make {half}·s a positive multiple of h = {h}"
        )));
    }
    let dom = if n == 1 {
        Domain::interval(-half, half)?
    } else {
        Domain::rectangle([-half, -half], [half, half])?
    };
    let gt = Arc::new(Grid::new(dom, half / m)?);
    let escapes = || Error::InvalidParameter("the rescaled box escapes the domain".into());
    let locate = |y: &[f64]| {
        g.find_node(y)
            .filter(|&k| (0..n).all(|i| (g.coords(k)[i] - y[i]).abs() <= 1e-7 * h))
    };
    let mut sources = Vec::with_capacity(gt.len());
    for k in 0..gt.len() {
        let xi = gt.coords(k);
        let mut y = [0.0; 2];
        for i in 0..n {
            y[i] = x0[i] + s * xi[i];
        }
        if let Some(o) = locate(&y[..n]) {
            sources.push(Source::Node(o));
            continue;
        }
        if gt.nodes()[k].lattice.is_some() {
            return Err(escapes());
        }
        // cut point on an edge: interpolate along the off-lattice coordinate
        let lo = g.lattice_origin();
        let mut a = y;
        let mut b = y;
        let mut w = 0.0;
        for i in 0..n {
            let t = (y[i] - lo[i]) / h;
            if (t - t.round()).abs() > 1e-7 {
                a[i] = lo[i] + t.floor() * h;
                b[i] = lo[i] + t.ceil() * h;
                w = t - t.floor();
            }
        }
        match (locate(&a[..n]), locate(&b[..n])) {
            (Some(ia), Some(ib)) => sources.push(Source::Edge(ia, ib, w)),
            _ => return Err(escapes()),
        }
    }
    Ok((gt, sources))
}

fn read(u: &[f64], s: Source) -> f64 {
    match s {
        Source::Node(o) => u[o],
        Source::Edge(a, b, w) => (1.0 - w) * u[a] + w * u[b],
    }
}

/// Image of the original grid points the box touches, for `N`.
fn box_sup_increment(u: &[f64], sources: &[Source], center_value: f64) -> f64 {
    sources.iter().map(|&s| (read(u, s) - center_value).abs()).fold(0.0, f64::max)
}

fn build(
    u: &GridFunction,
    problem: &ProblemSpec,
    map: AffineRescaling,
    kind: RescaleKind,
    grid_t: Arc<Grid>,
    sources: Vec<Source>,
    stencil: StencilConfig,
) -> Result<RescaledProblem> {
    let g = problem.grid.clone();
    let uv = u.values();
    let factor = map.factor();
    let lvals: Vec<f64> = (0..g.len()).map(|k| map.affine(g.coords(k))).collect();
    let field_vals: Vec<f64> = sources
        .iter()
        .map(|&s| (read(uv, s) - read(&lvals, s)) / map.amplitude)
        .collect();
    let field = GridFunction::new(grid_t.clone(), field_vals)?;
    let field_sup = field.sup_norm();

    let scheme = Scheme::new(&problem.operator, g.clone(), stencil)?;
    let f = problem.rhs.sample(&g)?;
    let operator = problem.operator.rescaled(map);
    let scheme_t = Scheme::new(&operator, grid_t.clone(), stencil)?;

    let mut f1 = vec![0.0; grid_t.len()];
    let mut f2 = vec![0.0; grid_t.len()];
    let mut original_residual = 0.0f64;
    let mut transformed_residual = 0.0f64;
    let mut identity_error = 0.0f64;
    for k in grid_t.interior() {
        let Source::Node(o) = sources[k] else { continue };
        f1[k] = factor * f[o];
        if !g.is_interior(o) {
            continue;
        }
        f2[k] = -factor * scheme.eval(&lvals, o);
        let r = scheme.eval(uv, o) - f[o];
        let rt = scheme_t.eval(field.values(), k) - (f1[k] + f2[k]);
        original_residual = original_residual.max(r.abs());
        transformed_residual = transformed_residual.max(rt.abs());
        identity_error = identity_error.max((rt - factor * r).abs());
    }
    for k in grid_t.boundary() {
        if let Source::Node(o) = sources[k] {
            f1[k] = factor * f[o];
        }
    }
    Ok(RescaledProblem {
        kind,
        map,
        field,
        operator,
        rhs_source: GridFunction::new(grid_t.clone(), f1)?,
        rhs_affine: GridFunction::new(grid_t.clone(), f2)?,
        field_sup,
        original_residual,
        transformed_residual,
        identity_error,
        residual_bound: factor * original_residual + 10.0 * g.h(),
        grid: grid_t,
        sources,
        original: g,
    })
}

fn check_field(u: &GridFunction, problem: &ProblemSpec) -> Result<()> {
    problem.validate()?;
    if u.grid().len() != problem.grid.len() || u.grid().h() != problem.grid.h() {
        return Err(Error::GridMismatch("field does not live on the problem grid".into()));
    }
    Ok(())
}

/// Blow-up `ũ(ξ) = (u(σξ + x₀) − u(x₀))/N` on `[−2,2]^n` with
/// `N = σW + sup_{B₂}|u(σξ + x₀) − u(x₀)|`.
pub fn rescale_blowup(
    u: &GridFunction,
    problem: &ProblemSpec,
    x0: &[f64],
    sigma: f64,
    cfg: &BlowupConfig,
) -> Result<RescaledProblem> {
    check_field(u, problem)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("σ must be positive, got {sigma}")));
    }
    let g = &problem.grid;
    let n = g.dim();
    let (grid_t, sources) = box_grid(g, x0, sigma, 2.0)?;
    let p = cfg.p.unwrap_or(2.0 * n as f64);
    let params = &problem.operator.params;
    let u_inf = u.sup_norm();
    let f = problem.rhs.sample(g)?;
    let d = params.d.sample(g)?;
    let all = 0..g.len();
    let w = u_inf + measure_lp(g, all.clone(), &f, p) + measure_lp(g, all, d.values(), p) * params.omega.eval(u_inf);
    let w = match cfg.variant {
        WVariant::Lipschitz => w,
        WVariant::Arbitrary => w.max(1.0),
    };
    let mut c = [0.0; 2];
    c[..n].copy_from_slice(&x0[..n]);
    let k0 = g.find_node(x0).expect("checked by box_grid");
    let u0 = u.get(k0);
    let amplitude = match cfg.amplitude {
        Some(a) => a,
        None => sigma * w + box_sup_increment(u.values(), &sources, u0),
    };
    if !(amplitude > 0.0) {
        return Err(invalid("blow-up amplitude N vanishes (u constant and data zero)"));
    }
    let map = AffineRescaling::new(sigma, amplitude, c, u0, [0.0; 2])?.with_k_bound(0.0);
    build(
        u,
        problem,
        map,
        RescaleKind::Blowup { sigma, amplitude, w },
        grid_t,
        sources,
        cfg.stencil,
    )
}

/// Iteration step `v(ξ) = (u − l_k)(r_k ξ + x₀)/r_k^{1+α}` on `[−1,1]^n`.
pub fn rescale_iteration(u: &GridFunction, problem: &ProblemSpec, step: &IterationStep) -> Result<RescaledProblem> {
    check_field(u, problem)?;
    if !(step.r_k > 0.0 && step.r_k <= 1.0) {
        return Err(invalid(format!("r_k must lie in (0,1], got {}", step.r_k)));
    }
    if !(step.alpha > 0.0 && step.alpha < 1.0) {
        return Err(invalid(format!("α must lie in (0,1), got {}", step.alpha)));
    }
    let n = problem.grid.dim();
    let (grid_t, sources) = box_grid(&problem.grid, &step.center[..n], step.r_k, 1.0)?;
    let amp = step.r_k.powf(1.0 + step.alpha);
    let mut map = AffineRescaling::new(step.r_k, amp, step.center, step.a, step.b)?;
    if let Some(k) = step.k_bound {
        if k < map.k_bound {
            return Err(invalid("K must bound |b_k|"));
        }
        map = map.with_k_bound(k);
    }
    build(
        u,
        problem,
        map,
        RescaleKind::Iteration {
            r_k: step.r_k,
            alpha: step.alpha,
        },
        grid_t,
        sources,
        step.stencil,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::modulus::Modulus;
    use crate::operators::Sign;
    use crate::rules::ScalarRule;
    use crate::solve::{solve_dirichlet, SolverConfig};

    fn cfg() -> SolverConfig {
        SolverConfig {
            tol: 1e-11,
            audit_samples: 500,
            ..Default::default()
        }
    }

    fn rich() -> StructureParams {
        StructureParams::new(1.0, 2.0)
            .unwrap()
            .with_b(
                CoefficientField::new(
                    ScalarRule::SineProduct { amplitude: 0.8, freq: 0.7 }.rescaled(1.0, [0.0, 0.0], 1.0, 1.0),
                    4.0,
                    1,
                )
                .unwrap(),
            )
            .with_mu(0.4)
            .with_d(CoefficientField::constant(1.5), Modulus::lipschitz(2.0).unwrap())
    }

    fn solved_line(params: StructureParams) -> (ProblemSpec, GridFunction) {
        let g = Arc::new(Grid::new(Domain::interval(-1.0, 1.0).unwrap(), 1.0 / 128.0).unwrap());
        let op = OperatorSpec::extremal(Sign::Plus, params, 1).unwrap();
        let p = ProblemSpec::new(op, g)
            .with_rhs(ScalarRule::SineProduct { amplitude: -2.0, freq: 1.0 })
            .with_boundary(ScalarRule::Affine { a: 0.2, b: [0.5, 0.0] });
        let s = solve_dirichlet(&p, &cfg()).unwrap();
        (p, s.u)
    }

    #[test]
    fn identity_blowup() {
        let g = Arc::new(Grid::new(Domain::interval(-2.0, 2.0).unwrap(), 1.0 / 32.0).unwrap());
        let u = GridFunction::from_fn(g.clone(), |x| x[0] * x[0] * x[0] - 0.5 * x[0]);
        let p = ProblemSpec::new(OperatorSpec::extremal(Sign::Plus, rich(), 1).unwrap(), g.clone());
        let c = BlowupConfig {
            amplitude: Some(1.0),
            ..Default::default()
        };
        let r = rescale_blowup(&u, &p, &[0.0], 1.0, &c).unwrap();
        for k in 0..r.grid.len() {
            let o = g.find_node(r.grid.coords(k)).unwrap();
            assert_eq!(r.field.get(k), u.get(o));
        }
        let f = r.formula_check(&p.operator.params);
        assert!(f.max() < 1e-15, "{f:?}");
        assert_eq!(r.params().mu, 0.4);
    }

    #[test]
    fn blowup_identities_on_solved_problem() {
        let (p, u) = solved_line(rich());
        let sigma = 0.25;
        let r = rescale_blowup(&u, &p, &[0.125], sigma, &BlowupConfig::default()).unwrap();
        assert!(r.field_sup <= 1.0);
        let RescaleKind::Blowup { amplitude, .. } = r.kind else { panic!() };
        assert_eq!(r.params().mu, amplitude * 0.4);
        let f = r.formula_check(&p.operator.params);
        assert!(f.max() <= 1e-12, "{f:?}");
        assert!(r.transformed_residual <= r.residual_bound);
        assert!(r.identity_error <= 1e-9, "{}", r.identity_error);
        for (o, v) in r.pull_back() {
            assert!((v - u.get(o)).abs() <= 1e-12 * u.get(o).abs().max(1.0));
        }
        let arb = BlowupConfig {
            variant: WVariant::Arbitrary,
            ..Default::default()
        };
        assert!(rescale_blowup(&u, &p, &[0.125], sigma, &arb).is_ok());
    }

    #[test]
    fn blowup_preconditions() {
        let (p, u) = solved_line(rich());
        let c = BlowupConfig::default();
        assert!(rescale_blowup(&u, &p, &[0.0], 0.625, &c).is_err());
        assert!(rescale_blowup(&u, &p, &[0.0], 0.3, &c).is_err());
        assert!(rescale_blowup(&u, &p, &[0.0], -1.0, &c).is_err());
        assert!(rescale_blowup(&u, &p, &[0.001], 0.25, &c).is_err());
    }

    #[test]
    fn iteration_step_zero_is_identity() {
        let (p, u) = solved_line(rich());
        let step = IterationStep {
            center: [0.0; 2],
            a: 0.0,
            b: [0.0; 2],
            r_k: 1.0,
            alpha: 0.5,
            k_bound: None,
            stencil: StencilConfig::default(),
        };
        let r = rescale_iteration(&u, &p, &step).unwrap();
        for (k, (o, v)) in r.pull_back().into_iter().enumerate() {
            assert_eq!(r.field.get(k), u.get(o));
            assert_eq!(v, u.get(o));
        }
        assert_eq!(r.params().mu, p.operator.params.mu);
        assert!(r.formula_check(&p.operator.params).max() < 1e-15);
    }

    #[test]
    fn iteration_ladder_and_modulus() {
        let (p, u) = solved_line(rich());
        let k2 = 0.6;
        let mut prev = f64::INFINITY;
        for k in 0..6 {
            let r_k = 0.25f64.powi(k);
            let step = IterationStep {
                center: [0.0; 2],
                a: u.get(p.grid.find_node(&[0.0]).unwrap()),
                b: [0.3, 0.0],
                r_k,
                alpha: 0.5,
                k_bound: Some(k2),
                stencil: StencilConfig::default(),
            };
            if r_k < 2.0 * p.grid.h() {
                break;
            }
            let r = rescale_iteration(&u, &p, &step).unwrap();
            let mu = r.params().mu;
            assert!((mu - 0.4 * 4f64.powf(-1.5 * k as f64)).abs() <= 1e-15);
            assert!(mu < prev);
            prev = mu;
            assert!((r.params().omega.eval(1.0) - 2.0).abs() <= 1e-15);
            assert!(r.formula_check(&p.operator.params).max() <= 1e-12);
            assert!(r.identity_error <= 1e-9);
        }
    }

    #[test]
    fn two_dimensional_box_with_cut_points() {
        let g = Arc::new(Grid::new(Domain::unit_square(), 1.0 / 32.0).unwrap());
        let op = OperatorSpec::extremal(Sign::Minus, rich_2d(), 2).unwrap();
        let p = ProblemSpec::new(op, g.clone()).with_rhs(ScalarRule::constant(-1.0));
        let s = solve_dirichlet(&p, &cfg()).unwrap();
        let r = rescale_blowup(&s.u, &p, &[0.5, 0.5], 0.125, &BlowupConfig::default()).unwrap();
        assert!(r.field_sup <= 1.0);
        assert!(r.identity_error <= 1e-9);
        assert!(r.transformed_residual <= r.residual_bound);
    }

    fn rich_2d() -> StructureParams {
        StructureParams::new(1.0, 2.0)
            .unwrap()
            .with_b(CoefficientField::singular(0.2, 0.5, [0.31, 0.47], 3.0, 2).unwrap())
            .with_mu(0.3)
    }
}
