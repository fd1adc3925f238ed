//! Operators compiled onto a grid: coefficients sampled once per node,
//! evaluation on the discrete bundle, and the generalized derivative used by
//! policy iteration.

use std::sync::Arc;

use super::{arms, derivs_at, pucci_frames, three_point, DiscreteDerivs, GradientScheme, StencilConfig, UpwindOrientation};
use crate::error::{invalid, Result};
use crate::grid::Grid;
use crate::gridfn::{lattice_of, GridFunction};
use crate::modulus::Modulus;
use crate::operators::{CustomOperator, OperatorKind, OperatorSpec, Sign};
use crate::rules::{Lattice, ScalarRule};

/// Sensitivities of the scheme value to each slot of the bundle.
#[derive(Clone, Copy, Debug, Default)]
struct Grad {
    r: f64,
    second: [f64; 8],
    fwd: [f64; 2],
    bwd: [f64; 2],
    p: [f64; 2],
}

#[derive(Clone, Debug)]
enum Compiled {
    Extremal {
        sign: Sign,
        lambda: f64,
        cap: f64,
        mu: f64,
        b: Vec<f64>,
        d: Vec<f64>,
        omega: Modulus,
        gradient: GradientScheme,
    },
    Trace {
        a: Vec<f64>,
    },
    Custom {
        op: CustomOperator,
        pts: Vec<[f64; 2]>,
    },
    Companion(Box<Compiled>),
    Rescaled {
        inner: Box<Compiled>,
        amp: f64,
        scale: f64,
        slope: [f64; 2],
        ell: Vec<f64>,
        base: Vec<f64>,
    },
    Frozen(Box<Compiled>),
}

fn sample(rule: &ScalarRule, pts: &[[f64; 2]], lat: Lattice, what: &str) -> Result<Vec<f64>> {
    let dim = lat.dim;
    pts.iter()
        .map(|x| {
            let v = rule.eval_on(&x[..dim], Some(lat));
            if !v.is_finite() || v < 0.0 {
                Err(invalid(format!("{what} coefficient is {v} at {:?}", &x[..dim])))
            } else {
                Ok(v)
            }
        })
        .collect()
}

fn compile(op: &OperatorSpec, pts: &[[f64; 2]], lat: Lattice, cfg: &StencilConfig) -> Result<Compiled> {
    Ok(match &op.kind {
        OperatorKind::Extremal { sign } => {
            let p = &op.params;
            Compiled::Extremal {
                sign: *sign,
                lambda: p.lambda(),
                cap: p.cap(),
                mu: p.mu,
                b: sample(&p.b.rule, pts, lat, "first-order")?,
                d: sample(&p.d.rule, pts, lat, "zero-order")?,
                omega: p.omega,
                gradient: cfg.gradient,
            }
        }
        OperatorKind::TraceScaled { a } => Compiled::Trace {
            a: sample(a, pts, lat, "trace")?,
        },
        OperatorKind::Custom(c) => Compiled::Custom {
            op: c.clone(),
            pts: pts.to_vec(),
        },
        OperatorKind::Companion(inner) => Compiled::Companion(Box::new(compile(inner, pts, lat, cfg)?)),
        OperatorKind::Rescaled { inner, map } => {
            let dim = lat.dim;
            let ys: Vec<[f64; 2]> = pts.iter().map(|x| map.to_original(&x[..dim])).collect();
            let inner_lat = Lattice {
                origin: map.to_original(&lat.origin[..dim]),
                h: map.scale * lat.h,
                dim,
            };
            let inner_c = compile(inner, &ys, inner_lat, cfg)?;
            let ell: Vec<f64> = ys.iter().map(|y| map.affine(&y[..dim])).collect();
            let mut slope = [0.0; 2];
            slope[..dim].copy_from_slice(&map.b[..dim]);
            let base = (0..pts.len())
                .map(|k| {
                    let mut d = DiscreteDerivs::zero(dim, 8);
                    d.r = ell[k];
                    d.fwd = slope;
                    d.bwd = slope;
                    d.p = slope;
                    inner_c.eval(k, &d, None)
                })
                .collect();
            Compiled::Rescaled {
                inner: Box::new(inner_c),
                amp: map.amplitude,
                scale: map.scale,
                slope,
                ell,
                base,
            }
        }
        OperatorKind::Frozen { inner, at } => {
            let frozen = vec![*at; pts.len()];
            Compiled::Frozen(Box::new(compile(inner, &frozen, lat, cfg)?))
        }
    })
}

fn contains_custom(op: &OperatorSpec) -> bool {
    match &op.kind {
        OperatorKind::Custom(_) => true,
        OperatorKind::Companion(i) | OperatorKind::Rescaled { inner: i, .. } | OperatorKind::Frozen { inner: i, .. } => {
            contains_custom(i)
        }
        _ => false,
    }
}

impl Compiled {
    fn eval(&self, k: usize, d: &DiscreteDerivs, mut g: Option<&mut Grad>) -> f64 {
        match self {
            Compiled::Extremal {
                sign,
                lambda,
                cap,
                mu,
                b,
                d: dz,
                omega,
                gradient,
            } => {
                let (second, frame) = pucci_frames(d, *lambda, *cap, *sign);
                let sf = sign.factor();
                let (bk, dk) = (b[k], dz[k]);
                let mut val = second;
                if let Some(g) = g.as_deref_mut() {
                    let slope = |t: f64| match sign {
                        Sign::Plus => {
                            if t >= 0.0 {
                                *cap
                            } else {
                                *lambda
                            }
                        }
                        Sign::Minus => {
                            if t >= 0.0 {
                                *lambda
                            } else {
                                *cap
                            }
                        }
                    };
                    if d.dim == 1 {
                        g.second[0] = slope(d.second[0]);
                    } else {
                        for l in [2 * frame, 2 * frame + 1] {
                            g.second[l] = slope(d.second[l]);
                        }
                    }
                }
                if bk != 0.0 || *mu != 0.0 {
                    let m = match gradient {
                        GradientScheme::Upwind => d.upwind(UpwindOrientation::for_sign(*sign)),
                        GradientScheme::Centered => d.p,
                    };
                    let norm = m[0].hypot(m[1]);
                    val += sf * (bk * norm + mu * norm * norm);
                    if let Some(g) = g.as_deref_mut() {
                        for i in 0..d.dim {
                            if m[i] == 0.0 && *gradient == GradientScheme::Upwind {
                                continue;
                            }
                            let dm = sf * (if norm > 0.0 { bk * m[i] / norm } else { 0.0 } + 2.0 * mu * m[i]);
                            match gradient {
                                GradientScheme::Centered => g.p[i] += dm,
                                GradientScheme::Upwind => match UpwindOrientation::for_sign(*sign) {
                                    UpwindOrientation::Increasing => {
                                        if d.fwd[i] >= -d.bwd[i] {
                                            g.fwd[i] += dm;
                                        } else {
                                            g.bwd[i] -= dm;
                                        }
                                    }
                                    UpwindOrientation::Decreasing => {
                                        if d.bwd[i] >= -d.fwd[i] {
                                            g.bwd[i] += dm;
                                        } else {
                                            g.fwd[i] -= dm;
                                        }
                                    }
                                },
                            }
                        }
                    }
                }
                if dk != 0.0 {
                    // ω of r⁻ for +, of r⁺ for −; both terms decrease in r
                    let t = match sign {
                        Sign::Plus => -d.r,
                        Sign::Minus => d.r,
                    };
                    if t > 0.0 {
                        val += sf * dk * omega.eval(t);
                        if let Some(g) = g.as_deref_mut() {
                            g.r -= dk * omega.secant(t);
                        }
                    }
                }
                val
            }
            Compiled::Trace { a } => {
                let n = d.dim;
                if let Some(g) = g {
                    for l in 0..n {
                        g.second[l] = a[k];
                    }
                }
                a[k] * d.second[..n].iter().sum::<f64>()
            }
            Compiled::Custom { op, pts } => {
                let x = &pts[k][..d.dim];
                (op.f)(x, d.r, d.gradient(), &d.hessian_proxy())
            }
            Compiled::Companion(inner) => -inner.eval(k, &d.negated(), g),
            Compiled::Rescaled {
                inner,
                amp,
                scale,
                slope,
                ell,
                base,
            } => {
                let (a, s) = (*amp, *scale);
                let kappa = s * s / a;
                let mut di = *d;
                di.r = a * d.r + ell[k];
                for v in di.second.iter_mut() {
                    *v *= a / (s * s);
                }
                for i in 0..d.dim {
                    di.fwd[i] = a / s * d.fwd[i] + slope[i];
                    di.bwd[i] = a / s * d.bwd[i] + slope[i];
                    di.p[i] = a / s * d.p[i] + slope[i];
                }
                match g {
                    None => kappa * (inner.eval(k, &di, None) - base[k]),
                    Some(g) => {
                        let mut gi = Grad::default();
                        let v = kappa * (inner.eval(k, &di, Some(&mut gi)) - base[k]);
                        g.r += kappa * a * gi.r;
                        for l in 0..8 {
                            g.second[l] += kappa * a / (s * s) * gi.second[l];
                        }
                        for i in 0..2 {
                            g.fwd[i] += kappa * a / s * gi.fwd[i];
                            g.bwd[i] += kappa * a / s * gi.bwd[i];
                            g.p[i] += kappa * a / s * gi.p[i];
                        }
                        v
                    }
                }
            }
            Compiled::Frozen(inner) => {
                let mut di = DiscreteDerivs::zero(d.dim, d.lines);
                di.second = d.second;
                // lower-order slots stay at zero and carry no sensitivity
                inner.eval(k, &di, g)
            }
        }
    }
}

/// One row of the generalized Jacobian: `F_h ≈ value + Σ coef·(δu)_col`.
#[derive(Clone, Debug, Default)]
pub struct Linearization {
    pub value: f64,
    pub entries: Vec<(usize, f64)>,
}

/// An [`OperatorSpec`] discretized on a fixed grid.
#[derive(Clone, Debug)]
pub struct Scheme {
    grid: Arc<Grid>,
    cfg: StencilConfig,
    op: OperatorSpec,
    compiled: Compiled,
    lines: usize,
    policy: bool,
    /// Static part of the pseudo-time bound per interior node.
    bound: Vec<f64>,
    /// Coefficient of the gradient size in the pseudo-time bound.
    mu_weight: Vec<f64>,
    /// Arm lengths per interior node and line, `(l₊, l₋)`.
    lengths: Vec<[(f64, f64); 8]>,
}

impl Scheme {
    pub fn new(op: &OperatorSpec, grid: Arc<Grid>, cfg: StencilConfig) -> Result<Self> {
        cfg.validate()?;
        op.params.validate()?;
        if op.dim != grid.dim() {
            return Err(invalid(format!(
                "operator dimension {} does not match grid dimension {}",
                op.dim,
                grid.dim()
            )));
        }
        let dim = grid.dim();
        let custom = contains_custom(op);
        let mut lines = cfg.lines(dim).min(grid.nlines());
        if custom && dim == 2 {
            lines = lines.max(4);
        }
        let lat = lattice_of(&grid);
        let pts: Vec<[f64; 2]> = grid.interior().map(|k| grid.point(k)).collect();
        let compiled = compile(op, &pts, lat, &cfg)?;

        let mut lengths = Vec::with_capacity(pts.len());
        for k in grid.interior() {
            let mut row = [(0.0, 0.0); 8];
            for (l, slot) in row.iter_mut().enumerate().take(lines) {
                let ((_, lp), (_, lm)) = arms(&grid, k, l);
                *slot = if cfg.boundary_one_sided {
                    (lp, lm)
                } else {
                    let s = grid.line_step(l);
                    (s, s)
                };
            }
            lengths.push(row);
        }

        let p = &op.params;
        let b = sample(&p.b.rule, &pts, lat, "first-order")?;
        let dz = sample(&p.d.rule, &pts, lat, "zero-order")?;
        let mut bound = Vec::with_capacity(pts.len());
        let mut mu_weight = Vec::with_capacity(pts.len());
        for (k, len) in lengths.iter().enumerate() {
            let mut second = 0.0;
            for &(lp, lm) in len.iter().take(lines) {
                let (wp, wm) = three_point(lp, lm);
                second += wp + wm;
            }
            let first: f64 = len.iter().take(dim).map(|&(lp, lm)| 1.0 / lp + 1.0 / lm).sum();
            let zero = if p.omega.is_zero() { 0.0 } else { dz[k] * p.omega.constant() };
            bound.push(p.cap() * second + b[k] * first + zero);
            mu_weight.push(2.0 * p.mu * first);
        }

        Ok(Scheme {
            grid,
            cfg,
            op: op.clone(),
            compiled,
            lines,
            policy: op.has_policy_structure() && !custom,
            bound,
            mu_weight,
            lengths,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn config(&self) -> &StencilConfig {
        &self.cfg
    }

    pub fn operator(&self) -> &OperatorSpec {
        &self.op
    }

    /// Dictionary lines the scheme reads.
    pub fn lines(&self) -> usize {
        self.lines
    }

    /// True when the generalized Jacobian is available.
    pub fn has_policy_structure(&self) -> bool {
        self.policy
    }

    pub fn derivs(&self, u: &[f64], k: usize) -> DiscreteDerivs {
        if self.cfg.boundary_one_sided {
            return derivs_at(&self.grid, u, k, self.lines);
        }
        let dim = self.grid.dim();
        let mut d = DiscreteDerivs::zero(dim, self.lines);
        d.r = u[k];
        for l in 0..self.lines {
            let (lp, lm) = self.lengths[k][l];
            let (wp, wm) = three_point(lp, lm);
            let (up, um) = (u[self.grid.arm(k, l, true).target], u[self.grid.arm(k, l, false).target]);
            d.second[l] = wp * (up - u[k]) + wm * (um - u[k]);
            if l < dim {
                d.fwd[l] = (up - u[k]) / lp;
                d.bwd[l] = (u[k] - um) / lm;
                d.p[l] = (up - um) / (lp + lm);
            }
        }
        d
    }

    /// `F_h[u]` at interior node `k`.
    pub fn eval(&self, u: &[f64], k: usize) -> f64 {
        self.compiled.eval(k, &self.derivs(u, k), None)
    }

    /// `F_h[u]` on every interior node.
    pub fn apply(&self, u: &GridFunction) -> Result<Vec<f64>> {
        if !Arc::ptr_eq(u.grid(), &self.grid) && u.grid().len() != self.grid.len() {
            return Err(crate::error::Error::GridMismatch("function and scheme grids differ".into()));
        }
        Ok(self.grid.interior().map(|k| self.eval(u.values(), k)).collect())
    }

    /// Generalized Jacobian row at node `k`; `None` for custom operators.
    pub fn linearize(&self, u: &[f64], k: usize) -> Option<Linearization> {
        let mut row = Vec::with_capacity(4 * self.lines + 1);
        let value = self.linearize_into(u, k, &mut row)?;
        Some(Linearization { value, entries: row })
    }

    /// Like [`Scheme::linearize`], appending `(column, coefficient)` pairs to
    /// `row` (columns may repeat).
    pub fn linearize_into(&self, u: &[f64], k: usize, row: &mut Vec<(usize, f64)>) -> Option<f64> {
        if !self.policy {
            return None;
        }
        let d = self.derivs(u, k);
        let mut g = Grad::default();
        let value = self.compiled.eval(k, &d, Some(&mut g));
        let dim = self.grid.dim();
        let mut center = g.r;
        for l in 0..self.lines {
            let (lp, lm) = self.lengths[k][l];
            let tp = self.grid.arm(k, l, true).target;
            let tm = self.grid.arm(k, l, false).target;
            let gs = g.second[l];
            if gs != 0.0 {
                let (wp, wm) = three_point(lp, lm);
                row.push((tp, gs * wp));
                row.push((tm, gs * wm));
                center -= gs * (wp + wm);
            }
            if l < dim {
                if g.fwd[l] != 0.0 {
                    row.push((tp, g.fwd[l] / lp));
                    center -= g.fwd[l] / lp;
                }
                if g.bwd[l] != 0.0 {
                    row.push((tm, -g.bwd[l] / lm));
                    center += g.bwd[l] / lm;
                }
                if g.p[l] != 0.0 {
                    let (cp, cm) = if self.cfg.boundary_one_sided {
                        (lm / (lp * (lp + lm)), lp / (lm * (lp + lm)))
                    } else {
                        (1.0 / (lp + lm), 1.0 / (lp + lm))
                    };
                    row.push((tp, g.p[l] * cp));
                    row.push((tm, -g.p[l] * cm));
                    center += g.p[l] * (cm - cp);
                }
            }
        }
        row.push((k, center));
        Some(value)
    }

    /// Upper bound on `Σⱼ |∂F_h/∂uⱼ|` at node `k` for the current `u`,
    /// giving the explicit step `ρ = 1/(2·bound)`.
    pub fn pseudo_time_step(&self, u: &[f64], k: usize) -> f64 {
        let mut b = self.bound[k];
        if self.mu_weight[k] > 0.0 {
            let d = self.derivs(u, k);
            let g = (0..self.grid.dim())
                .map(|i| d.fwd[i].abs().max(d.bwd[i].abs()))
                .fold(0.0, f64::max);
            b += self.mu_weight[k] * g * (self.grid.dim() as f64).sqrt();
        }
        if let crate::modulus::Modulus::Power { .. } = self.op.params.omega {
            let t = u[k].abs().max(self.grid.h());
            b += self.op.params.omega.secant(t) * self.op.params.d.eval(self.grid.coords(k)).max(0.0);
        }
        0.5 / b.max(1e-300)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::domain::Domain;
    use crate::operators::{AffineRescaling, StructureParams};

    fn square(h: f64) -> Arc<Grid> {
        Arc::new(Grid::new(Domain::unit_square(), h).unwrap())
    }

    fn rich_params() -> StructureParams {
        StructureParams::new(1.0, 2.0)
            .unwrap()
            .with_b(CoefficientField::constant(0.7))
            .with_mu(0.3)
            .with_d(CoefficientField::constant(1.2), Modulus::lipschitz(1.5).unwrap())
    }

    fn smooth(x: &[f64; 2]) -> f64 {
        (3.0 * x[0]).sin() * (2.0 * x[1] + 0.3).cos() - 0.4
    }

    fn field(g: &Arc<Grid>) -> Vec<f64> {
        g.nodes().iter().map(|n| smooth(&n.x)).collect()
    }

    #[test]
    fn linearization_row_reproduces_value_on_linear_pieces() {
        // without μ every piece is positively 1-homogeneous in the bundle
        // (ω is linear here), so F_h(u) = J(u)·u
        let g = square(1.0 / 16.0);
        let u = field(&g);
        for sign in [Sign::Plus, Sign::Minus] {
            let op = OperatorSpec::extremal(sign, rich_params().with_mu(0.0), 2).unwrap();
            let s = Scheme::new(&op, g.clone(), StencilConfig::default()).unwrap();
            for k in g.interior().step_by(7) {
                let lin = s.linearize(&u, k).unwrap();
                let ju: f64 = lin.entries.iter().map(|&(c, a)| a * u[c]).sum();
                assert!((ju - lin.value).abs() < 1e-9 * (1.0 + lin.value.abs()), "{sign} node {k}");
                assert!((lin.value - s.eval(&u, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linearization_matches_finite_differences() {
        let g = square(1.0 / 8.0);
        let u = field(&g);
        let op = OperatorSpec::extremal(Sign::Plus, rich_params(), 2).unwrap().companion();
        let s = Scheme::new(&op, g.clone(), StencilConfig::default()).unwrap();
        let k = g.find_node(&[0.375, 0.5]).unwrap();
        let lin = s.linearize(&u, k).unwrap();
        let mut dense = vec![0.0; g.len()];
        for &(c, a) in &lin.entries {
            dense[c] += a;
        }
        for (j, &coef) in dense.iter().enumerate() {
            let eps = 1e-7;
            let mut v = u.clone();
            v[j] += eps;
            let fd = (s.eval(&v, k) - s.eval(&u, k)) / eps;
            assert!((fd - coef).abs() < 1e-4 * (1.0 + coef.abs()), "column {j}: {fd} vs {coef}");
        }
    }

    #[test]
    fn rescaled_scheme_matches_identity() {
        // F̃[ũ](ξ) = (s²/A)(F[u](y) − F[ℓ](y)) on full-arm nodes when the
        // rescaled grid is the blow-up of the original one
        let h = 1.0 / 32.0;
        let g = square(h);
        let op = OperatorSpec::extremal(Sign::Plus, rich_params(), 2).unwrap();
        let base = Scheme::new(&op, g.clone(), StencilConfig::default()).unwrap();
        let u = field(&g);
        let (s, amp) = (0.125, 0.4);
        let x0 = [0.5, 0.5];
        let map = AffineRescaling::new(s, amp, x0, 0.2, [0.3, -0.1]).unwrap();
        let rop = op.rescaled(map);
        let rg = Arc::new(Grid::new(Domain::rectangle([-1.0, -1.0], [1.0, 1.0]).unwrap(), h / s).unwrap());
        let rs = Scheme::new(&rop, rg.clone(), StencilConfig::default()).unwrap();
        let ut: Vec<f64> = rg
            .nodes()
            .iter()
            .map(|n| {
                let y = map.to_original(&n.x);
                (smooth(&y) - map.affine(&y)) / amp
            })
            .collect();
        let ell: Vec<f64> = g.nodes().iter().map(|n| map.affine(&n.x)).collect();
        for k in rg.interior() {
            if !rg.full_arms(k) {
                continue;
            }
            let y = map.to_original(&rg.point(k));
            let ko = g.find_node(&y).unwrap();
            let expect = s * s / amp * (base.eval(&u, ko) - base.eval(&ell, ko));
            let got = rs.eval(&ut, k);
            assert!((got - expect).abs() < 1e-9 * (1.0 + expect.abs()), "{got} vs {expect}");
        }
    }

    #[test]
    fn frozen_scheme_ignores_lower_order_slots() {
        let g = square(1.0 / 8.0);
        let params = rich_params().with_b(CoefficientField::new(ScalarRule::Affine { a: 1.0, b: [1.0, 0.0] }, 4.0, 2).unwrap());
        let op = OperatorSpec::extremal(Sign::Plus, params, 2).unwrap();
        let fr = Scheme::new(&op.frozen([0.5, 0.5]), g.clone(), StencilConfig::default()).unwrap();
        let pure = Scheme::new(&OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 2).unwrap(), g.clone(), StencilConfig::default()).unwrap();
        let u = field(&g);
        for k in g.interior() {
            assert!((fr.eval(&u, k) - pure.eval(&u, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn custom_scheme_uses_hessian_proxy() {
        let g = square(1.0 / 16.0);
        let op = OperatorSpec::custom("det-like", StructureParams::new(1.0, 1.0).unwrap(), 2, |_, _, _, x| {
            x.get(0, 0) + x.get(1, 1) + x.get(0, 1)
        })
        .unwrap();
        let s = Scheme::new(&op, g.clone(), StencilConfig::with_m(4)).unwrap();
        assert_eq!(s.lines(), 4);
        assert!(!s.has_policy_structure());
        let u: Vec<f64> = g.nodes().iter().map(|n| n.x[0] * n.x[1] + n.x[0] * n.x[0]).collect();
        let k = g.find_node(&[0.5, 0.5]).unwrap();
        assert!((s.eval(&u, k) - 3.0).abs() < 1e-9);
        assert!(s.linearize(&u, k).is_none());
    }
}
