use serde::Serialize;

use super::{eigen_solve, EigenConfig, EigenPair, InitialGuess};
use crate::error::Result;
use crate::gridfn::GridFunction;
use crate::operators::{OperatorSpec, Sign};
use crate::REPORT_SCHEMA;

#[derive(Clone, Debug, Serialize)]
pub struct SimplicityRun {
    pub init: String,
    pub alpha: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimplicityReport {
    pub schema: String,
    pub sign: Sign,
    pub trials: usize,
    /// One trial compares nothing.
    pub vacuous: bool,
    pub runs: Vec<SimplicityRun>,
    /// Largest `‖φ_i − φ_j‖∞` over pairs.
    pub max_field_distance: f64,
    /// Largest relative `|α_i − α_j|`.
    pub max_alpha_spread: f64,
    /// The two most distant runs.
    pub worst_pair: Option<[usize; 2]>,
    pub rep_tol: f64,
    pub alpha_tol: f64,
    pub pass: bool,
}

fn guesses(trials: usize) -> Vec<InitialGuess> {
    (0..trials)
        .map(|i| match i {
            0 => InitialGuess::Constant,
            1 => InitialGuess::Distance,
            _ => InitialGuess::Random { seed: 0x51 + i as u64 },
        })
        .collect()
}

/// Runs the eigen solver from `trials` different positive starts and checks
/// that the normalized eigenfunctions agree within `rep_tol` and the
/// eigenvalues within `cfg.tol_alpha`. Each run iterates to a tenth of those
/// tolerances so that agreement is limited by the fixed point, not the stop.
pub fn simplicity_check(
    op: &OperatorSpec,
    c: &GridFunction,
    sign: Sign,
    trials: usize,
    cfg: &EigenConfig,
    rep_tol: f64,
) -> Result<(SimplicityReport, Vec<EigenPair>)> {
    let mut pairs = Vec::with_capacity(trials);
    for init in guesses(trials) {
        let run = EigenConfig {
            tol_alpha: cfg.tol_alpha / 10.0,
            tol_field: rep_tol / 10.0,
            init,
            ..cfg.clone()
        };
        pairs.push(eigen_solve(op, c, sign, &run)?);
    }
    let (mut dist, mut spread, mut worst) = (0.0f64, 0.0f64, None);
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let d = pairs[i]
                .phi
                .values()
                .iter()
                .zip(pairs[j].phi.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let s = (pairs[i].alpha - pairs[j].alpha).abs() / pairs[i].alpha.max(1.0);
            if worst.is_none() || d > dist {
                dist = d;
                worst = Some([i, j]);
            }
            spread = spread.max(s);
        }
    }
    let report = SimplicityReport {
        schema: REPORT_SCHEMA.into(),
        sign,
        trials,
        vacuous: trials <= 1,
        runs: pairs
            .iter()
            .map(|p| SimplicityRun {
                init: p.init.label(),
                alpha: p.alpha,
                steps: p.steps,
            })
            .collect(),
        max_field_distance: dist,
        max_alpha_spread: spread,
        worst_pair: worst,
        rep_tol,
        alpha_tol: cfg.tol_alpha,
        pass: dist <= rep_tol && spread <= cfg.tol_alpha,
    };
    Ok((report, pairs))
}
