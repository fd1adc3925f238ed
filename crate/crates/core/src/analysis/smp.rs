use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::gridfn::GridFunction;
use crate::REPORT_SCHEMA;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmpConfig {
    /// Values with `|u| ≤ tol·max|u|` count as zero.
    pub tol: f64,
    /// Hopf threshold as a multiple of `h`.
    pub hopf_floor: f64,
    /// Boundary points this many `h` from a corner are skipped: no interior
    /// ball touches there.
    pub corner_margin: f64,
    /// Also skipped: points within this fraction of the domain diameter of a
    /// corner. The field vanishes to second order at a right-angle corner, so
    /// the normal quotient there is only of the size of the corner distance.
    pub corner_fraction: f64,
}

impl Default for SmpConfig {
    fn default() -> Self {
        SmpConfig {
            tol: 1e-10,
            hopf_floor: 10.0,
            corner_margin: 4.0,
            corner_fraction: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "branch", rename_all = "snake_case")]
pub enum SmpBranch {
    IdenticallyZero,
    Positive { min: f64 },
    Violation { node: usize, value: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct HopfReport {
    /// Boundary zeros examined.
    pub checked: usize,
    /// Smallest interior-normal quotient `κ`.
    pub kappa: f64,
    pub node: Option<usize>,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmpHopfReport {
    pub schema: String,
    pub smp: SmpBranch,
    pub hopf: HopfReport,
    pub pass: bool,
}

fn near_corner(domain: &Domain, x: &[f64], eps: f64) -> bool {
    match *domain {
        Domain::Interval { .. } | Domain::Disc { .. } => false,
        Domain::Rectangle { lo, hi } => {
            let near = |i: usize| (x[i] - lo[i]).abs() < eps || (hi[i] - x[i]).abs() < eps;
            near(0) && near(1)
        }
        Domain::HalfDisc { nu } => {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            (x[1] + nu).abs() < eps && (1.0 - r).abs() < eps
        }
    }
}

/// Strong maximum principle and Hopf checks for a nonnegative field that
/// vanishes on (part of) the boundary.
pub fn smp_hopf_check(u: &GridFunction, cfg: &SmpConfig) -> SmpHopfReport {
    let g = u.grid();
    let h = g.h();
    let n = g.dim();
    let scale = u.sup_norm();
    let zero = cfg.tol * scale.max(f64::MIN_POSITIVE);
    let smp = if scale == 0.0 || u.values().iter().all(|v| v.abs() <= cfg.tol) {
        SmpBranch::IdenticallyZero
    } else {
        let (node, min) = g
            .interior()
            .map(|k| (k, u.get(k)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("grids have interior nodes");
        if min > zero {
            SmpBranch::Positive { min }
        } else {
            SmpBranch::Violation { node, value: min }
        }
    };

    let threshold = cfg.hopf_floor * h;
    let corner_eps = (cfg.corner_margin * h).max(cfg.corner_fraction * g.domain().diameter());
    let mut hopf = HopfReport {
        checked: 0,
        kappa: f64::INFINITY,
        node: None,
        threshold,
        pass: true,
    };
    if !matches!(smp, SmpBranch::IdenticallyZero) {
        let lo = g.lattice_origin();
        let dims = g.lattice_dims();
        for k in g.boundary() {
            let xb = g.point(k);
            if u.get(k).abs() > zero || near_corner(g.domain(), &xb, corner_eps) {
                continue;
            }
            let nu = g.domain().inward_normal(&xb[..n]);
            // best-aligned interior lattice node within three steps
            let ci = ((xb[0] - lo[0]) / h).round() as i64;
            let cj = if n == 2 { ((xb[1] - lo[1]) / h).round() as i64 } else { 0 };
            let mut best: Option<(f64, f64, usize)> = None;
            let jr = if n == 2 { -3..=3 } else { 0..=0 };
            for dj in jr {
                for di in -3i64..=3 {
                    let (i, j) = (ci + di, cj + dj);
                    if i < 0 || j < 0 || i >= dims[0] as i64 || j >= dims[1] as i64 {
                        continue;
                    }
                    let Some(m) = g.lattice_node(i as usize, j as usize) else { continue };
                    if !g.is_interior(m) {
                        continue;
                    }
                    let y = g.point(m);
                    let dv = [y[0] - xb[0], y[1] - xb[1]];
                    let dist = (dv[0] * dv[0] + dv[1] * dv[1]).sqrt();
                    let along = dv[0] * nu[0] + dv[1] * nu[1];
                    if along < 0.5 * h {
                        continue;
                    }
                    let cos = along / dist;
                    let better = match best {
                        None => true,
                        Some((c, d, _)) => cos > c + 1e-12 || ((cos - c).abs() <= 1e-12 && dist < d),
                    };
                    if better {
                        best = Some((cos, dist, m));
                    }
                }
            }
            let Some((_, _, m)) = best else { continue };
            let y = g.point(m);
            let along = (y[0] - xb[0]) * nu[0] + (y[1] - xb[1]) * nu[1];
            let q = (u.get(m) - u.get(k)) / along;
            hopf.checked += 1;
            if q < hopf.kappa {
                hopf.kappa = q;
                hopf.node = Some(k);
            }
        }
        hopf.pass = hopf.checked == 0 || hopf.kappa >= threshold;
    }
    if hopf.checked == 0 {
        hopf.kappa = 0.0;
    }
    let pass = !matches!(smp, SmpBranch::Violation { .. }) && hopf.pass;
    SmpHopfReport {
        schema: REPORT_SCHEMA.into(),
        smp,
        hopf,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn zero_field_takes_zero_branch() {
        let g = Arc::new(Grid::new(Domain::unit_square(), 0.125).unwrap());
        let r = smp_hopf_check(&GridFunction::zeros(g), &SmpConfig::default());
        assert_eq!(r.smp, SmpBranch::IdenticallyZero);
        assert!(r.pass);
    }

    #[test]
    fn sine_mode() {
        let g = Arc::new(Grid::new(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 256.0).unwrap());
        let u = GridFunction::from_fn(g, |x| (PI * x[0]).sin());
        let r = smp_hopf_check(&u, &SmpConfig::default());
        assert!(matches!(r.smp, SmpBranch::Positive { .. }));
        assert_eq!(r.hopf.checked, 2);
        assert!((r.hopf.kappa - PI).abs() < 1e-3, "{}", r.hopf.kappa);
        assert!(r.pass);
    }

    #[test]
    fn interior_zero_is_reported() {
        let g = Arc::new(Grid::new(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 64.0).unwrap());
        let u = GridFunction::from_fn(g, |x| (2.0 * PI * x[0]).sin().abs());
        let r = smp_hopf_check(&u, &SmpConfig::default());
        assert!(matches!(r.smp, SmpBranch::Violation { .. }));
        assert!(!r.pass);
    }

    #[test]
    fn disc_mode_has_positive_normal_derivative() {
        let g = Arc::new(Grid::new(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 32.0).unwrap());
        let u = GridFunction::from_fn(g, |x| 1.0 - x[0] * x[0] - x[1] * x[1]);
        let r = smp_hopf_check(&u, &SmpConfig::default());
        assert!(r.pass);
        assert!(r.hopf.checked > 100);
        // ∂_ν u = 2 on the unit circle
        assert!((r.hopf.kappa - 2.0).abs() < 0.2, "{}", r.hopf.kappa);
    }

    #[test]
    fn flat_gradient_fails_hopf() {
        let g = Arc::new(Grid::new(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 64.0).unwrap());
        let u = GridFunction::from_fn(g, |x| (x[0] * (1.0 - x[0])).powi(2));
        let r = smp_hopf_check(&u, &SmpConfig::default());
        assert!(matches!(r.smp, SmpBranch::Positive { .. }));
        assert!(!r.hopf.pass);
    }
}
