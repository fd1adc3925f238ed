use crate::error::{invalid, Error, Result};
use crate::gridfn::{GridFunction, Region};

/// Regions up to this many nodes are scanned pair by pair.
const EXACT_LIMIT: usize = 2000;
/// Offsets, in units of the current stride, compared at each level.
const REACH: i64 = 4;

/// `max |u(x) − u(y)| / |x − y|^β` over node pairs of the region.
///
/// Large regions use a dyadic ladder: at level `j` only lattice nodes on
/// the sublattice of stride `2^j` are compared, with partners within
/// `REACH·2^j·h`. Cut points are compared against every region node.
pub fn holder_seminorm(u: &GridFunction, beta: f64, region: &Region) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!("Hölder exponent must lie in (0,1], got {beta}")));
    }
    let idx = region.indices(u.grid());
    if idx.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if idx.len() < 2 {
        return Err(invalid("Hölder seminorm needs at least two nodes"));
    }
    if idx.len() <= EXACT_LIMIT {
        Ok(exact(u, beta, &idx))
    } else {
        Ok(multiscale(u, beta, &idx))
    }
}

fn quotient(u: &GridFunction, beta: f64, a: usize, b: usize) -> f64 {
    let g = u.grid();
    let (x, y) = (g.point(a), g.point(b));
    let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
    if d == 0.0 {
        return 0.0;
    }
    (u.get(a) - u.get(b)).abs() / d.powf(beta)
}

fn exact(u: &GridFunction, beta: f64, idx: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (i, &a) in idx.iter().enumerate() {
        for &b in &idx[i + 1..] {
            best = best.max(quotient(u, beta, a, b));
        }
    }
    best
}

pub(crate) fn multiscale(u: &GridFunction, beta: f64, idx: &[usize]) -> f64 {
    let g = u.grid();
    let mut member = vec![false; g.len()];
    for &k in idx {
        member[k] = true;
    }
    let dims = g.lattice_dims();
    let two_d = g.dim() == 2;
    let mut best = 0.0f64;
    let mut stride: i64 = 1;
    loop {
        let mut any = false;
        for &a in idx {
            let Some([i, j]) = g.nodes()[a].lattice else { continue };
            let (i, j) = (i as i64, j as i64);
            if i % stride != 0 || j % stride != 0 {
                continue;
            }
            any = true;
            let jr = if two_d { -REACH..=REACH } else { 0..=0 };
            for dj in jr {
                for di in -REACH..=REACH {
                    // each unordered pair once
                    if dj < 0 || (dj == 0 && di <= 0) {
                        continue;
                    }
                    let (bi, bj) = (i + di * stride, j + dj * stride);
                    if bi < 0 || bj < 0 || bi >= dims[0] as i64 || bj >= dims[1] as i64 {
                        continue;
                    }
                    if let Some(b) = g.lattice_node(bi as usize, bj as usize) {
                        if member[b] {
                            best = best.max(quotient(u, beta, a, b));
                        }
                    }
                }
            }
        }
        if !any || stride as usize > dims[0].max(dims[1]) {
            break;
        }
        stride *= 2;
    }
    for &a in idx {
        if g.nodes()[a].lattice.is_none() {
            for &b in idx {
                if b != a {
                    best = best.max(quotient(u, beta, a, b));
                }
            }
        }
    }
    best
}
