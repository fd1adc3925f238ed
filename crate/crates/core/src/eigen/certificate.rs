use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::gridfn::GridFunction;
use crate::operators::{OperatorSpec, Sign, SymMatrix};
use crate::REPORT_SCHEMA;

/// Upper bound `α₁ ≤ C₀/(δR²)` from the barrier `σ = −(R² − |x−x_c|²)²`.
#[derive(Clone, Debug, Serialize)]
pub struct EigenBoundCertificate {
    pub schema: String,
    pub sign: Sign,
    pub center: [f64; 2],
    pub radius: f64,
    /// Smallest weight on the ball nodes.
    pub delta: f64,
    /// Largest `b` and `d` on the ball nodes.
    pub gamma: f64,
    pub eta: f64,
    pub omega_one: f64,
    /// Split radius `|x|² = αR²` of the two cases.
    pub alpha_split: f64,
    pub c0: f64,
    /// `C₀/(δR²)`; infinite when `δ = 0`.
    pub bound: f64,
    pub informative: bool,
    pub nodes: usize,
    /// Extremes of `F[σ] + (C₀/(δR²)) c σ` over the ball nodes.
    pub field_max: f64,
    pub field_min: f64,
}

/// `σ`, `Dσ`, `D²σ` at `x` for the ball `B_R(x_c)`.
pub fn sigma_derivatives(x: &[f64], center: [f64; 2], radius: f64) -> (f64, Vec<f64>, SymMatrix) {
    let n = x.len();
    let y: Vec<f64> = (0..n).map(|i| x[i] - center[i]).collect();
    let q = radius * radius - y.iter().map(|v| v * v).sum::<f64>();
    let grad = y.iter().map(|v| 4.0 * q * v).collect();
    let mut hess = SymMatrix::identity(n).scale(4.0 * q);
    for i in 0..n {
        for j in i..n {
            hess.set(i, j, hess.get(i, j) - 8.0 * y[i] * y[j]);
        }
    }
    (-q * q, grad, hess)
}

/// Certifies `λ₁^±(F(c), Ω) ≤ C₀/(δR²)` on a ball where `c ≥ δ`, checking
/// the barrier inequality at every interior node of the ball with exact
/// derivatives of `σ`. The plus branch is checked on the companion.
pub fn eigen_upper_bound_sigma(
    op: &OperatorSpec,
    c: &GridFunction,
    center: [f64; 2],
    radius: f64,
    sign: Sign,
) -> Result<EigenBoundCertificate> {
    let g = c.grid();
    let n = g.dim();
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("ball radius must be positive, got {radius}")));
    }
    if g.domain().margin(&center[..n]) < radius - 1e-12 {
        return Err(invalid("certificate ball is not contained in the domain"));
    }
    let inside = |k: usize| {
        let x = g.coords(k);
        (0..n).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>() < radius * radius
    };
    let ball: Vec<usize> = g.interior().filter(|&k| inside(k)).collect();
    if ball.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let params = &op.params;
    let sup = |f: &dyn Fn(&[f64]) -> f64| ball.iter().map(|&k| f(g.coords(k))).fold(0.0, f64::max);
    let gamma = sup(&|x| params.b.eval(x));
    let eta = sup(&|x| params.d.eval(x));
    if !(gamma.is_finite() && eta.is_finite()) {
        return Err(invalid("b and d must be bounded on the certificate ball"));
    }
    let omega_one = params.omega.eval(1.0);
    if eta * omega_one > 0.0 && radius > 1.0 {
        return Err(invalid(format!("with a zero-order term the ball radius must be ≤ 1, got {radius}")));
    }
    let delta = ball.iter().map(|&k| c.get(k)).fold(f64::INFINITY, f64::min);
    let (lambda, cap) = (params.lambda(), params.cap());
    let top = n as f64 * cap + gamma * radius;
    let alpha_split = top / (2.0 * lambda + top);
    let c0 = 4.0 * top / (1.0 - alpha_split) + eta * omega_one;

    let mut cert = EigenBoundCertificate {
        schema: REPORT_SCHEMA.into(),
        sign,
        center,
        radius,
        delta,
        gamma,
        eta,
        omega_one,
        alpha_split,
        c0,
        bound: f64::INFINITY,
        informative: false,
        nodes: ball.len(),
        field_max: 0.0,
        field_min: 0.0,
    };
    if !(delta > 0.0) {
        return Ok(cert);
    }
    let k_bound = c0 / (delta * radius * radius);
    let used = match sign {
        Sign::Minus => op.clone(),
        Sign::Plus => op.companion(),
    };
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for &k in &ball {
        let x = g.coords(k);
        let (s, p, xm) = sigma_derivatives(x, center, radius);
        let fs = used.apply(x, s, &p, &xm);
        let zero_order = k_bound * c.get(k) * s;
        let v = fs + zero_order;
        if v > 1e-10 * (1.0 + fs.abs() + zero_order.abs()) {
            return Err(Error::CertificateRefused { node: k, value: v });
        }
        hi = hi.max(v);
        lo = lo.min(v);
    }
    cert.bound = k_bound;
    cert.informative = true;
    cert.field_max = hi;
    cert.field_min = lo;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientField;
    use crate::domain::Domain;
    use crate::grid::Grid;
    use crate::modulus::Modulus;
    use crate::operators::StructureParams;
    use std::sync::Arc;

    #[test]
    fn sigma_derivatives_match_finite_differences() {
        let (c, r) = ([0.1, -0.2], 0.9);
        let x = [0.3, 0.25];
        let e = 1e-4;
        let f = |x: &[f64]| sigma_derivatives(x, c, r).0;
        let (_, p, xm) = sigma_derivatives(&x, c, r);
        for i in 0..2 {
            let mut a = x;
            let mut b = x;
            a[i] += e;
            b[i] -= e;
            assert!(((f(&a) - f(&b)) / (2.0 * e) - p[i]).abs() < 1e-6);
            let d2 = (f(&a) - 2.0 * f(&x) + f(&b)) / (e * e);
            assert!((d2 - xm.get(i, i)).abs() < 1e-6 * (1.0 + d2.abs()) + 1e-5);
        }
        let mix = |s0: f64, s1: f64| f(&[x[0] + s0 * e, x[1] + s1 * e]);
        let d01 = (mix(1.0, 1.0) - mix(1.0, -1.0) - mix(-1.0, 1.0) + mix(-1.0, -1.0)) / (4.0 * e * e);
        assert!((d01 - xm.get(0, 1)).abs() < 1e-5);
    }

    #[test]
    fn one_dimensional_laplacian_constant() {
        let g = Arc::new(Grid::new(Domain::interval(-1.0, 1.0).unwrap(), 1.0 / 64.0).unwrap());
        let c = GridFunction::constant(g, 1.0);
        for sign in [Sign::Plus, Sign::Minus] {
            let cert = eigen_upper_bound_sigma(&OperatorSpec::laplacian(1), &c, [0.0, 0.0], 1.0, sign).unwrap();
            assert!((cert.alpha_split - 1.0 / 3.0).abs() < 1e-15);
            assert!((cert.c0 - 6.0).abs() < 1e-12);
            assert!(cert.informative && cert.field_max <= 0.0);
        }
    }

    #[test]
    fn drift_and_zero_order_terms() {
        let params = StructureParams::new(0.5, 2.0)
            .unwrap()
            .with_b(CoefficientField::constant(3.0))
            .with_d(CoefficientField::constant(1.5), Modulus::lipschitz(2.0).unwrap());
        let g = Arc::new(Grid::new(Domain::unit_square(), 1.0 / 32.0).unwrap());
        let c = GridFunction::from_fn(g, |x| 1.0 + x[0]);
        for sign in [Sign::Plus, Sign::Minus] {
            let op = OperatorSpec::extremal(sign, params.clone(), 2).unwrap();
            for s in [Sign::Plus, Sign::Minus] {
                let cert = eigen_upper_bound_sigma(&op, &c, [0.5, 0.5], 0.45, s).unwrap();
                assert!(cert.field_max <= 0.0 && cert.nodes > 500);
                assert!(cert.delta >= 1.05 - 1e-12);
            }
        }
        let op = OperatorSpec::extremal(Sign::Plus, params, 2).unwrap();
        let big = Arc::new(Grid::new(Domain::rectangle([0.0, 0.0], [3.0, 3.0]).unwrap(), 0.25).unwrap());
        let cb = GridFunction::constant(big, 1.0);
        assert!(eigen_upper_bound_sigma(&op, &cb, [1.5, 1.5], 1.2, Sign::Plus).is_err());
    }

    #[test]
    fn vanishing_weight_is_uninformative() {
        let g = Arc::new(Grid::new(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 32.0).unwrap());
        let c = GridFunction::from_fn(g, |x| (x[0] - 0.5).max(0.0));
        let cert = eigen_upper_bound_sigma(&OperatorSpec::laplacian(1), &c, [0.5, 0.0], 0.5, Sign::Plus).unwrap();
        assert!(!cert.informative && cert.bound.is_infinite());
    }

    #[test]
    fn ball_must_fit() {
        let g = Arc::new(Grid::new(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 32.0).unwrap());
        let c = GridFunction::constant(g, 1.0);
        assert!(eigen_upper_bound_sigma(&OperatorSpec::laplacian(1), &c, [0.5, 0.0], 0.6, Sign::Plus).is_err());
    }
}
