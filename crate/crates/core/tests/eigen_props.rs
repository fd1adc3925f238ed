use std::sync::Arc;

use proptest::prelude::*;
use viscolab::*;

fn line() -> Arc<Grid> {
    Arc::new(Grid::new(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 32.0).unwrap())
}

fn alpha(op: &OperatorSpec, c: &GridFunction, sign: Sign) -> EigenPair {
    eigen_solve(op, c, sign, &EigenConfig::default()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn eigenvalue_scales_inversely_with_the_weight(
        amp in 0.0f64..2.0,
        t in 0.2f64..5.0,
        plus in any::<bool>(),
    ) {
        let sign = if plus { Sign::Plus } else { Sign::Minus };
        let op = OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 1).unwrap();
        let c = GridFunction::from_fn(line(), |x| 1.0 + amp * x[0] * x[0]);
        let a = alpha(&op, &c, sign);
        let b = alpha(&op, &c.scale(t), sign);
        prop_assert!(rel(a.alpha, t * b.alpha) < 1e-5, "{} vs {}", a.alpha, t * b.alpha);
        let f = sign.factor();
        prop_assert!(line().interior().all(|k| f * a.phi.get(k) > 0.0));
    }

    #[test]
    fn eigenvalue_scales_with_ellipticity(k in 0.3f64..3.0, spread in 1.0f64..3.0) {
        let c = GridFunction::constant(line(), 1.0);
        let base = OperatorSpec::pucci(Sign::Plus, 1.0, spread, 1).unwrap();
        let scaled = OperatorSpec::pucci(Sign::Plus, k, k * spread, 1).unwrap();
        for sign in [Sign::Plus, Sign::Minus] {
            let a = alpha(&base, &c, sign).alpha;
            let b = alpha(&scaled, &c, sign).alpha;
            prop_assert!(rel(k * a, b) < 1e-5, "{} vs {b}", k * a);
        }
    }

    /// A pointwise larger weight gives a smaller principal eigenvalue.
    #[test]
    fn larger_weight_smaller_eigenvalue(bump in 0.05f64..1.0, center in 0.2f64..0.8) {
        let op = OperatorSpec::pucci(Sign::Minus, 1.0, 1.5, 1).unwrap();
        let c1 = GridFunction::constant(line(), 1.0);
        let c2 = GridFunction::from_fn(line(), |x| 1.0 + bump * (-(x[0] - center).powi(2) * 20.0).exp());
        for sign in [Sign::Plus, Sign::Minus] {
            let a1 = alpha(&op, &c1, sign).alpha;
            let a2 = alpha(&op, &c2, sign).alpha;
            prop_assert!(a2 <= a1 * (1.0 + 1e-6), "{a2} > {a1}");
        }
    }
}
