//! Diagnostics that test the qualitative theory on computed solutions:
//! ABP and maximum principles, Hölder seminorms, affine-fit ladders,
//! rescaling identities, the approximation gap and discrete `W^{2,p}` bounds.

mod abp;
mod approx;
mod fit;
mod holder;
mod nagumo;
mod rescale;
mod smp;

pub use abp::{abp_batch, abp_check, AbpBatch, AbpBatchConfig, AbpConfig, AbpReport, GateStatus};
pub use approx::{approximation_gap, ApproxGapReport, ApproxSetup, SmallnessInputs};
pub use fit::{caffarelli_fit, minimax_affine_fit, AffineFit, FitConfig, LadderStep, RegularityFit, ScaleFit};
pub use holder::holder_seminorm;
pub use nagumo::{nagumo_check, nagumo_ladder_stable, w2p_norm, NagumoBracket, NagumoReport};
pub use rescale::{
    rescale_blowup, rescale_iteration, BlowupConfig, FormulaCheck, IterationStep, RescaleKind, RescaleReport, RescaledProblem,
    WVariant,
};
pub use smp::{smp_hopf_check, HopfReport, SmpBranch, SmpConfig, SmpHopfReport};

use crate::grid::Grid;

/// `L^p` norm over the listed nodes with lattice weights rescaled so that
/// the total weight equals the measure of the domain. Constants integrate
/// exactly, which the plain `hⁿ` sum misses by the boundary layer.
pub(crate) fn measure_lp(grid: &Grid, idx: impl Iterator<Item = usize> + Clone, vals: &[f64], p: f64) -> f64 {
    let wsum: f64 = grid.interior().chain(grid.boundary()).map(|k| grid.weight(k)).sum();
    let norm = if wsum > 0.0 { grid.domain().measure() / wsum } else { 1.0 };
    if p.is_infinite() {
        return idx.map(|k| vals[k].abs()).fold(0.0, f64::max);
    }
    let m = idx.clone().map(|k| vals[k].abs()).fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    let s: f64 = idx.map(|k| grid.weight(k) * norm * (vals[k].abs() / m).powf(p)).sum();
    m * s.powf(1.0 / p)
}
