use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gridfn::GridFunction;
use crate::REPORT_SCHEMA;

/// `l(x) = a + b·(x − x₀)` with its discrete sup error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AffineFit {
    pub a: f64,
    pub b: [f64; 2],
    pub error: f64,
}

/// Dense simplex on `max cᵀy, Ay = rhs, y ≥ 0` with `rhs ≥ 0`, starting
/// from an artificial basis. Returns the simplex multipliers of the optimal
/// basis, which solve the dual `min rhsᵀπ, Aᵀπ ≥ c`.
fn simplex_multipliers(cols: &[Vec<f64>], rhs: &[f64], cost: &[f64]) -> Option<Vec<f64>> {
    let d = rhs.len();
    let m = cols.len();
    let width = m + d + 1;
    // tableau rows hold B⁻¹[A | I | rhs]
    let mut t = vec![vec![0.0; width]; d];
    for (i, row) in t.iter_mut().enumerate() {
        for j in 0..m {
            row[j] = cols[j][i];
        }
        row[m + i] = 1.0;
        row[width - 1] = rhs[i];
    }
    let mut basis: Vec<usize> = (m..m + d).collect();
    let pivot = |t: &mut Vec<Vec<f64>>, r: usize, c: usize| {
        let p = t[r][c];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        let pr = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, w) in row.iter_mut().zip(&pr) {
                        *v -= f * w;
                    }
                }
            }
        }
    };
    let eps = 1e-11;
    for phase in 0..2 {
        let c_of = |j: usize| -> f64 {
            if phase == 0 {
                if j >= m {
                    -1.0
                } else {
                    0.0
                }
            } else if j >= m {
                0.0
            } else {
                cost[j]
            }
        };
        let mut iter = 0usize;
        loop {
            iter += 1;
            if iter > 50 * (m + d) {
                return None;
            }
            // reduced costs c_j − c_Bᵀ B⁻¹A_j
            let cb: Vec<f64> = basis.iter().map(|&j| c_of(j)).collect();
            let bland = iter > 5 * (m + d);
            let mut enter = None;
            let mut best = eps;
            for j in 0..m + if phase == 0 { d } else { 0 } {
                if basis.contains(&j) {
                    continue;
                }
                let rc = c_of(j) - (0..d).map(|i| cb[i] * t[i][j]).sum::<f64>();
                if rc > best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(c) = enter else { break };
            let mut leave = None;
            let mut ratio = f64::INFINITY;
            for i in 0..d {
                // an artificial left in the basis at level zero must leave
                // before it could turn positive
                if phase == 1 && basis[i] >= m && t[i][c].abs() > eps {
                    leave = Some(i);
                    break;
                }
                if t[i][c] > eps {
                    let q = t[i][width - 1] / t[i][c];
                    if q < ratio - 1e-15 {
                        ratio = q;
                        leave = Some(i);
                    }
                }
            }
            let r = leave?;
            pivot(&mut t, r, c);
            basis[r] = c;
        }
        if phase == 0 {
            let infeas: f64 = (0..d).filter(|&i| basis[i] >= m).map(|i| t[i][width - 1]).sum();
            if infeas > 1e-9 {
                return None;
            }
        }
    }
    // πᵀ = c_Bᵀ B⁻¹, with B⁻¹ read off the artificial block
    let mut pi = vec![0.0; d];
    for (i, &j) in basis.iter().enumerate() {
        let cj = if j < m { cost[j] } else { 0.0 };
        for (k, p) in pi.iter_mut().enumerate() {
            *p += cj * t[i][m + k];
        }
    }
    Some(pi)
}

/// Discrete Chebyshev fit `min_{a,b} max_i |v_i − a − b·(x_i − x₀)|`,
/// solved exactly through the dual linear program.
pub fn minimax_affine_fit(points: &[[f64; 2]], values: &[f64], x0: &[f64], dim: usize) -> Result<AffineFit> {
    if points.len() != values.len() || points.is_empty() {
        return Err(invalid("fit needs matching, nonempty point and value lists"));
    }
    let n = dim;
    // local coordinates scaled to the unit ball for conditioning
    let rad = points
        .iter()
        .map(|p| (0..n).map(|i| (p[i] - x0[i]).powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let vscale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let eval = |a: f64, b: [f64; 2]| -> f64 {
        points
            .iter()
            .zip(values)
            .map(|(p, v)| (v - a - (0..n).map(|i| b[i] * (p[i] - x0[i])).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    };
    if vscale == 0.0 {
        return Ok(AffineFit { a: 0.0, b: [0.0; 2], error: 0.0 });
    }
    // columns y⁺_i, y⁻_i of  Σw = 0, Σw·ξ = 0, Σ|w| = 1  with w = y⁻ − y⁺
    let d = n + 2;
    let mut cols = Vec::with_capacity(2 * points.len());
    let mut cost = Vec::with_capacity(2 * points.len());
    for (p, v) in points.iter().zip(values) {
        let v = v / vscale;
        for s in [1.0, -1.0] {
            let mut c = vec![0.0; d];
            c[0] = s;
            for i in 0..n {
                c[1 + i] = s * (p[i] - x0[i]) / rad;
            }
            c[n + 1] = 1.0;
            cols.push(c);
            cost.push(-s * v);
        }
    }
    let mut rhs = vec![0.0; d];
    rhs[n + 1] = 1.0;
    let pi = simplex_multipliers(&cols, &rhs, &cost)
        .ok_or_else(|| Error::LinearSolve("minimax fit: simplex did not terminate".into()))?;
    let a = -pi[0] * vscale;
    let mut b = [0.0; 2];
    for i in 0..n {
        b[i] = -pi[1 + i] * vscale / rad;
    }
    Ok(AffineFit { a, b, error: eval(a, b) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Ratio `γ ∈ (0, ¼]` between consecutive radii.
    pub gamma: f64,
    /// Number of scales `k = 0..K`.
    pub scales: usize,
    pub alpha_grid: Vec<f64>,
    /// Radius of the outermost ball.
    pub r0: f64,
    /// Smallest node count for a usable ball.
    pub min_nodes: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            gamma: 0.25,
            scales: 6,
            alpha_grid: (1..=19).map(|i| (5 * i) as f64 / 100.0).collect(),
            r0: 1.0,
            min_nodes: 10,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 0.25) {
            return Err(invalid(format!("γ must lie in (0, 1/4], got {}", self.gamma)));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(invalid("α grid must be a nonempty subset of (0,1)"));
        }
        if !(self.r0 > 0.0) || self.scales == 0 {
            return Err(invalid("fit needs r0 > 0 and at least one scale"));
        }
        Ok(())
    }

    fn top(&self) -> f64 {
        self.alpha_grid.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScaleFit {
    pub k: usize,
    pub radius: f64,
    pub nodes: usize,
    pub a: f64,
    pub b: [f64; 2],
    /// `sup_{B_{r_k}} |u − l_k|`
    pub error: f64,
}

/// Increment of the fit from scale `k − 1` to `k`.
#[derive(Clone, Debug, Serialize)]
pub struct LadderStep {
    pub k: usize,
    pub da: f64,
    pub db: f64,
    /// `|b_k − b_{k−1}| / r_{k−1}^{α_est}`
    pub db_scaled: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityFit {
    pub schema: String,
    pub center: [f64; 2],
    pub gamma: f64,
    pub boundary: bool,
    pub scales: Vec<ScaleFit>,
    /// Slope of `log E_k` against `log r_k`; `None` when every `E_k` is
    /// at round-off level.
    pub slope: Option<f64>,
    pub alpha_est: f64,
    /// `max_k E_k / r_k^{1+α_est}`
    pub c_est: f64,
    pub ladder: Vec<LadderStep>,
    /// `max_k |b_k − b_{k−1}| / r_{k−1}^{α_est}`
    pub k2_est: f64,
    pub ladder_sum: f64,
    /// `K₂ Σ r_{k−1}^{α_est}`
    pub geometric_bound: f64,
}

impl RegularityFit {
    /// `ladder_sum / geometric_bound`; 1 when the ladder is trivial.
    pub fn shape_ratio(&self) -> f64 {
        if self.geometric_bound > 0.0 {
            self.ladder_sum / self.geometric_bound
        } else {
            1.0
        }
    }

    /// One row per scale: `k, r_k, E_k, a_k, b_k…`.
    pub fn to_csv(&self) -> String {
        let n2 = self.scales.iter().any(|s| s.b[1] != 0.0);
        let mut out = String::from(if n2 { "k,r_k,E_k,a_k,b_k_1,b_k_2\n" } else { "k,r_k,E_k,a_k,b_k_1\n" });
        for s in &self.scales {
            out.push_str(&format!("{},{:e},{:e},{:e},{:e}", s.k, s.radius, s.error, s.a, s.b[0]));
            if n2 {
                out.push_str(&format!(",{:e}", s.b[1]));
            }
            out.push('\n');
        }
        out
    }
}

/// Minimax affine fits on the balls `B_{r_k}(x₀)`, `r_k = r₀γ^k`, and the
/// exponent read off the decay of the fit errors. With `boundary` set the
/// balls are half-balls cut by the domain and the boundary nodes carry the
/// Dirichlet data.
pub fn caffarelli_fit(u: &GridFunction, x0: &[f64], cfg: &FitConfig, boundary: bool) -> Result<RegularityFit> {
    cfg.validate()?;
    let g = u.grid();
    let n = g.dim();
    let mut center = [0.0; 2];
    center[..n].copy_from_slice(&x0[..n]);
    let mut scales = Vec::new();
    for k in 0..cfg.scales {
        let r = cfg.r0 * cfg.gamma.powi(k as i32);
        let tol = 1e-12 * r;
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        for j in 0..g.len() {
            let x = g.point(j);
            let d2: f64 = (0..n).map(|i| (x[i] - center[i]).powi(2)).sum();
            if d2.sqrt() <= r + tol {
                pts.push(x);
                vals.push(u.get(j));
            }
        }
        if pts.len() < cfg.min_nodes.max(n + 2) {
            break;
        }
        let fit = minimax_affine_fit(&pts, &vals, &center, n)?;
        scales.push(ScaleFit {
            k,
            radius: r,
            nodes: pts.len(),
            a: fit.a,
            b: fit.b,
            error: fit.error,
        });
    }
    if scales.len() < 3 {
        return Err(Error::TooFewScales {
            found: scales.len(),
            needed: 3,
        });
    }
    let vmax = u.sup_norm().max(1.0);
    let floor = 10.0 * f64::EPSILON * vmax;
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .filter(|s| s.error > floor)
        .map(|s| (s.radius.ln(), s.error.ln()))
        .collect();
    let top = cfg.top();
    let slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let alpha_est = match slope {
        None => top,
        Some(s) => cfg
            .alpha_grid
            .iter()
            .copied()
            .filter(|a| *a <= s - 1.0 + 0.02)
            .fold(0.0, f64::max),
    };
    let c_est = scales
        .iter()
        .map(|s| if s.error > floor { s.error / s.radius.powf(1.0 + alpha_est) } else { 0.0 })
        .fold(0.0, f64::max);
    let ladder: Vec<LadderStep> = scales
        .windows(2)
        .map(|w| {
            let db = ((w[1].b[0] - w[0].b[0]).powi(2) + (w[1].b[1] - w[0].b[1]).powi(2)).sqrt();
            LadderStep {
                k: w[1].k,
                da: (w[1].a - w[0].a).abs(),
                db,
                db_scaled: db / w[0].radius.powf(alpha_est),
            }
        })
        .collect();
    let k2_est = ladder.iter().map(|l| l.db_scaled).fold(0.0, f64::max);
    let ladder_sum = ladder.iter().map(|l| l.db).sum();
    let geometric_bound = k2_est * scales[..scales.len() - 1].iter().map(|s| s.radius.powf(alpha_est)).sum::<f64>();
    Ok(RegularityFit {
        schema: REPORT_SCHEMA.into(),
        center,
        gamma: cfg.gamma,
        boundary,
        scales,
        slope,
        alpha_est,
        c_est,
        ladder,
        k2_est,
        ladder_sum,
        geometric_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Domain;
    use crate::grid::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    /// Exact minimax error by reference enumeration: the best error is the
    /// largest over (n+2)-point references of `|λ·v| / ‖λ‖₁`, where `λ`
    /// annihilates affine functions on the reference.
    fn reference_oracle(points: &[[f64; 2]], values: &[f64], n: usize) -> f64 {
        let m = points.len();
        let mut best = 0.0f64;
        let mut consider = |ids: &[usize]| {
            let lam = if n == 1 {
                let (x0, x1, x2) = (points[ids[0]][0], points[ids[1]][0], points[ids[2]][0]);
                vec![x2 - x1, x0 - x2, x1 - x0]
            } else {
                // cofactors of the 3×4 matrix with rows 1, x, y
                let col = |i: usize| [1.0, points[ids[i]][0], points[ids[i]][1]];
                let det3 = |a: [f64; 3], b: [f64; 3], c: [f64; 3]| {
                    a[0] * (b[1] * c[2] - b[2] * c[1]) - b[0] * (a[1] * c[2] - a[2] * c[1]) + c[0] * (a[1] * b[2] - a[2] * b[1])
                };
                vec![
                    det3(col(1), col(2), col(3)),
                    -det3(col(0), col(2), col(3)),
                    det3(col(0), col(1), col(3)),
                    -det3(col(0), col(1), col(2)),
                ]
            };
            let l1: f64 = lam.iter().map(|v| v.abs()).sum();
            if l1 > 1e-12 {
                let dot: f64 = lam.iter().zip(ids).map(|(l, &i)| l * values[i]).sum();
                best = best.max(dot.abs() / l1);
            }
        };
        if n == 1 {
            for a in 0..m {
                for b in a + 1..m {
                    for c in b + 1..m {
                        consider(&[a, b, c]);
                    }
                }
            }
        } else {
            for a in 0..m {
                for b in a + 1..m {
                    for c in b + 1..m {
                        for d in c + 1..m {
                            consider(&[a, b, c, d]);
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn lp_fit_matches_reference_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2] {
            for _ in 0..5 {
                let m = if n == 1 { 25 } else { 14 };
                let pts: Vec<[f64; 2]> = (0..m)
                    .map(|_| [rng.random_range(-1.0..1.0), if n == 2 { rng.random_range(-1.0..1.0) } else { 0.0 }])
                    .collect();
                let vals: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1] + rng.random_range(-0.1..0.1)).collect();
                let fit = minimax_affine_fit(&pts, &vals, &[0.0, 0.0], n).unwrap();
                let oracle = reference_oracle(&pts, &vals, n);
                assert!((fit.error - oracle).abs() < 1e-9, "n={n}: {} vs {oracle}", fit.error);
            }
        }
    }

    #[test]
    fn fit_beats_random_competitors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<[f64; 2]> = (0..300).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let vals: Vec<f64> = pts.iter().map(|p| (p[0] * p[0] + p[1] * p[1]).powf(0.75) - p[0]).collect();
        let fit = minimax_affine_fit(&pts, &vals, &[0.0, 0.0], 2).unwrap();
        for _ in 0..100 {
            let a = fit.a + rng.random_range(-0.3..0.3);
            let b = [fit.b[0] + rng.random_range(-0.3..0.3), fit.b[1] + rng.random_range(-0.3..0.3)];
            let e = pts
                .iter()
                .zip(&vals)
                .map(|(p, v)| (v - a - b[0] * p[0] - b[1] * p[1]).abs())
                .fold(0.0, f64::max);
            assert!(fit.error <= e + 1e-12);
        }
    }

    #[test]
    fn affine_data_gives_zero_errors() {
        let g = Arc::new(Grid::new(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 64.0).unwrap());
        let u = GridFunction::from_fn(g, |x| 0.5 - 2.0 * x[0] + 0.25 * x[1]);
        let fit = caffarelli_fit(&u, &[0.0, 0.0], &FitConfig { scales: 3, ..Default::default() }, false).unwrap();
        assert!(fit.scales.iter().all(|s| s.error < 1e-13));
        assert_eq!(fit.slope, None);
        assert_eq!(fit.alpha_est, 0.95);
        assert_eq!(fit.c_est, 0.0);
        assert!((fit.scales[0].b[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn three_halves_power_gives_half() {
        let g = Arc::new(Grid::new(Domain::interval(-1.0, 1.0).unwrap(), 1.0 / 16384.0).unwrap());
        let u = GridFunction::from_fn(g, |x| x[0].abs().powf(1.5));
        let fit = caffarelli_fit(&u, &[0.0], &FitConfig::default(), false).unwrap();
        let s = fit.slope.unwrap();
        assert!((s - 1.5).abs() <= 0.05, "{s}");
        assert!((fit.alpha_est - 0.5).abs() <= 0.05 + 1e-12);
        assert!(fit.to_csv().starts_with("k,r_k,E_k,a_k,b_k_1\n0,"));
    }

    #[test]
    fn quadratic_caps_at_top() {
        let g = Arc::new(Grid::new(Domain::unit_square(), 1.0 / 128.0).unwrap());
        let u = GridFunction::from_fn(g, |x| (x[0] - 0.5).powi(2) + 0.3 * (x[0] - 0.5) * (x[1] - 0.5));
        let cfg = FitConfig { r0: 0.5, scales: 3, ..Default::default() };
        let fit = caffarelli_fit(&u, &[0.5, 0.5], &cfg, false).unwrap();
        assert!(fit.slope.unwrap() >= 2.0 - 0.05);
        assert_eq!(fit.alpha_est, 0.95);
    }

    #[test]
    fn too_few_scales() {
        let g = Arc::new(Grid::new(Domain::interval(-1.0, 1.0).unwrap(), 1.0 / 16.0).unwrap());
        let u = GridFunction::from_fn(g, |x| x[0].abs());
        assert!(matches!(
            caffarelli_fit(&u, &[0.0], &FitConfig::default(), false),
            Err(Error::TooFewScales { .. })
        ));
    }
}
