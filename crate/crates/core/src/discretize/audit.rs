use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Scheme;

/// A perturbation that moved the scheme the wrong way.
#[derive(Clone, Debug, Serialize)]
pub struct AuditWitness {
    pub node: usize,
    /// Perturbed node; equal to `node` for a properness failure.
    pub perturbed: usize,
    pub delta: f64,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub pass: bool,
    pub samples: usize,
    pub violations: usize,
    /// Largest wrong-way change seen, relative to the value scale.
    pub worst: f64,
    pub witness: Option<AuditWitness>,
}

/// Random-perturbation audit of the monotonicity convention: `F_h[u](x)`
/// must not decrease when a neighbor value increases, and must not increase
/// when the center value increases.
///
/// Each sample draws random stencil values at a random interior node, with
/// amplitudes spread over four decades so that every branch of the policy
/// is visited.
pub fn monotonicity_audit(scheme: &Scheme, samples: usize, seed: u64) -> AuditReport {
    let grid = scheme.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = vec![0.0; grid.len()];
    let mut stencil = Vec::new();
    let mut report = AuditReport {
        pass: true,
        samples,
        violations: 0,
        worst: 0.0,
        witness: None,
    };
    let n_int = grid.n_interior();
    for _ in 0..samples {
        let k = rng.random_range(0..n_int);
        stencil.clear();
        stencil.push(k);
        for l in 0..scheme.lines() {
            stencil.push(grid.arm(k, l, true).target);
            stencil.push(grid.arm(k, l, false).target);
        }
        let amp = 10f64.powf(rng.random_range(-2.0..2.0));
        let tilt = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let x0 = grid.point(k);
        for &j in &stencil {
            let x = grid.point(j);
            // a random slope plus noise reaches the upwind branches
            u[j] = amp * (rng.random_range(-1.0..1.0) * grid.h()
                + tilt[0] * (x[0] - x0[0])
                + tilt[1] * (x[1] - x0[1]));
        }
        let before = scheme.eval(&u, k);
        let j = stencil[rng.random_range(0..stencil.len())];
        let delta = amp * grid.h() * rng.random_range(0.01..1.0);
        u[j] += delta;
        let after = scheme.eval(&u, k);
        u[j] -= delta;
        let wrong = if j == k { after - before } else { before - after };
        let scale = before.abs().max(after.abs()).max(1.0);
        if wrong > 1e-10 * scale {
            report.violations += 1;
            if wrong / scale > report.worst {
                report.worst = wrong / scale;
                report.witness = Some(AuditWitness {
                    node: k,
                    perturbed: j,
                    delta,
                    before,
                    after,
                });
            }
        }
        for &j in &stencil {
            u[j] = 0.0;
        }
    }
    report.pass = report.violations == 0;
    report
}
