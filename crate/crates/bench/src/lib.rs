//! Fixed problems shared by the benchmarks.

use std::sync::Arc;

use viscolab::*;

pub fn square(h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(Domain::unit_square(), h).expect("unit square grid"))
}

pub fn disc(h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(Domain::disc([0.0, 0.0], 1.0).expect("unit disc"), h).expect("disc grid"))
}

/// Maximal Pucci operator with λ = 1, Λ = 2 and a sign-changing source.
pub fn pucci_problem(grid: Arc<Grid>) -> ProblemSpec {
    let op = OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, grid.dim()).expect("valid Pucci constants");
    ProblemSpec::new(op, grid).with_rhs(ScalarRule::SineProduct { amplitude: 1.0, freq: 2.0 })
}

pub fn solver() -> SolverConfig {
    SolverConfig {
        tol: 1e-10,
        ..Default::default()
    }
}
