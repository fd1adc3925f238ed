//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Golden values live in `tests/golden/`; rerun with
//! `VISCOLAB_BLESS=1` to rewrite them after an intended change.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use viscolab::eigen::EpsStage;
use viscolab::operators::{oscillation_beta, BetaVariant};
use viscolab::*;

type Outcome = std::result::Result<String, String>;
type Criterion = fn(&mut Ctx) -> Outcome;

#[derive(Default)]
struct Ctx {
    /// Converged eigenfunctions, sign-corrected to be positive.
    eigenfunctions: Vec<(String, GridFunction)>,
    ladders: Vec<(String, Vec<EpsStage>)>,
}

impl Ctx {
    fn record(&mut self, label: &str, pair: &EigenPair) {
        self.eigenfunctions.push((label.into(), pair.phi.scale(pair.sign.factor())));
        self.ladders.push((label.into(), pair.ladder.clone()));
    }
}

fn ensure(ok: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn golden(name: &str, value: Value) -> std::result::Result<Value, String> {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "golden", name].iter().collect();
    if std::env::var_os("VISCOLAB_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, serde_json::to_string_pretty(&value).unwrap() + "\n").map_err(|e| e.to_string())?;
        return Ok(value);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn grid(domain: Domain, h: f64) -> Arc<Grid> {
    Arc::new(Grid::new(domain, h).expect("valid grid"))
}

fn solver(tol: f64) -> SolverConfig {
    SolverConfig {
        tol,
        ..Default::default()
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

// ---------------------------------------------------------------- oracles

/// Classical RK4 for `y' = f(r, y)` from `r0` to `r1`.
fn rk4(f: impl Fn(f64, [f64; 2]) -> [f64; 2], r0: f64, r1: f64, y0: [f64; 2], steps: usize) -> Vec<(f64, [f64; 2])> {
    let h = (r1 - r0) / steps as f64;
    let mut out = vec![(r0, y0)];
    let (mut r, mut y) = (r0, y0);
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    for _ in 0..steps {
        let k1 = f(r, y);
        let k2 = f(r + h / 2.0, add(y, k1, h / 2.0));
        let k3 = f(r + h / 2.0, add(y, k2, h / 2.0));
        let k4 = f(r + h, add(y, k3, h));
        y = [
            y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        r += h;
        out.push((r, y));
    }
    out
}

/// Radial profile of `M⁺_{λ,Λ}(D²u) = f(r)` in the unit disc with `u(1) = 0`.
/// The Hessian has eigenvalues `u″` and `u′/r`; for the known `u′/r` the
/// equation is solved for `u″` branch by branch.
fn radial_pucci_oracle(lambda: f64, cap: f64, f: impl Fn(f64) -> f64) -> impl Fn(f64) -> f64 {
    let w = |e: f64| if e > 0.0 { cap * e } else { lambda * e };
    let inv = |g: f64| if g > 0.0 { g / cap } else { g / lambda };
    let r0 = 1e-6;
    // at the center both eigenvalues equal u″(0)
    let c0 = inv(f(0.0) / 2.0);
    let rhs = |r: f64, y: [f64; 2]| [y[1], inv(f(r) - w(y[1] / r))];
    let steps = 20_000;
    let path = rk4(rhs, r0, 1.0, [0.0, c0 * r0], steps);
    let shift = path.last().unwrap().1[0];
    let table: Vec<(f64, f64)> = path.iter().map(|(r, y)| (*r, y[0] - shift)).collect();
    move |r: f64| {
        let t = ((r - r0) / (1.0 - r0) * steps as f64).clamp(0.0, steps as f64 - 1e-9);
        let i = t.floor() as usize;
        let s = t - i as f64;
        (1.0 - s) * table[i].1 + s * table[i + 1].1
    }
}

/// First eigenvalue `j₀²` of the unit-disc Laplacian: bisection on `k` for
/// the zero of the Bessel ODE `φ″ + φ′/r + kφ = 0` at `r = 1`.
fn bessel_oracle() -> f64 {
    let end = |k: f64| {
        let r0 = 1e-8;
        let rhs = |r: f64, y: [f64; 2]| [y[1], -y[1] / r - k * y[0]];
        rk4(rhs, r0, 1.0, [1.0 - k * r0 * r0 / 4.0, -k * r0 / 2.0], 4000).last().unwrap().1[0]
    };
    let (mut lo, mut hi) = (4.0, 7.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if end(lo) * end(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest eigenvalue of the symmetric tridiagonal matrix with constant
/// diagonal `a` and off-diagonal `b`, by Sturm-count bisection.
fn tridiagonal_oracle(a: f64, b: f64, n: usize) -> f64 {
    let count = |x: f64| {
        let mut q = a - x;
        let mut c = usize::from(q < 0.0);
        for _ in 1..n {
            q = a - x - b * b / if q == 0.0 { 1e-300 } else { q };
            c += usize::from(q < 0.0);
        }
        c
    };
    let (mut lo, mut hi) = (0.0, 2.0 * (a.abs() + 2.0 * b.abs()));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count(mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

// --------------------------------------------------------------- criteria

fn c01_pucci_sampling(_: &mut Ctx) -> Outcome {
    let (lambda, cap) = (0.5, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let (mut worst_sample, mut worst_gap) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..200 {
        let x = SymMatrix::rotated_diag(rng.random_range(0.0..PI), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let plus = pucci(&x, lambda, cap, Sign::Plus).map_err(|e| e.to_string())?;
        let minus = pucci(&x, lambda, cap, Sign::Minus).map_err(|e| e.to_string())?;
        for _ in 0..200 {
            let a = SymMatrix::rotated_diag(
                rng.random_range(0.0..PI),
                rng.random_range(lambda..=cap),
                rng.random_range(lambda..=cap),
            );
            let t = a.trace_product(&x);
            worst_sample = worst_sample.max(t - plus).max(minus - t);
        }
        // structured family: corner eigenvalues on a fine rotation ladder
        let (mut best_hi, mut best_lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..1024 {
            let th = k as f64 * PI / 1024.0;
            for (e1, e2) in [(lambda, lambda), (lambda, cap), (cap, lambda), (cap, cap)] {
                let t = SymMatrix::rotated_diag(th, e1, e2).trace_product(&x);
                best_hi = best_hi.max(t);
                best_lo = best_lo.min(t);
            }
        }
        worst_gap = worst_gap.max(plus - best_hi).max(best_lo - minus);
        ensure(best_hi <= plus + 1e-9 && best_lo >= minus - 1e-9, "structured sample beyond the formula")?;
    }
    ensure(worst_sample <= 1e-9, format!("sample exceeds formula by {worst_sample:e}"))?;
    ensure(worst_gap <= 1e-3, format!("best structured sample {worst_gap:e} from formula"))?;
    Ok(format!("max sample excess {worst_sample:.2e}, best-sample gap {worst_gap:.2e}"))
}

fn c02_solver_exactness(_: &mut Ctx) -> Outcome {
    let g = grid(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 64.0);
    let mut worst = 0.0f64;
    for op in [OperatorSpec::laplacian(1), OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 1).unwrap()] {
        let p = ProblemSpec::new(op, g.clone()).with_rhs(ScalarRule::constant(-2.0));
        let s = solve_dirichlet(&p, &solver(1e-12)).map_err(|e| e.to_string())?;
        let exact = GridFunction::from_fn(g.clone(), |x| x[0] * (1.0 - x[0]));
        worst = worst.max(sup_diff(s.u.values(), exact.values()));
    }
    ensure(worst <= 1e-10, format!("∞-error {worst:e}"))?;
    Ok(format!("∞-error {worst:.2e} at h = 1/64"))
}

fn c03_radial_pucci(_: &mut Ctx) -> Outcome {
    let (lambda, cap) = (1.0, 2.0);
    let g = grid(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 128.0);
    let op = OperatorSpec::pucci(Sign::Plus, lambda, cap, 2).unwrap();
    // f = −(1 + r²)
    let f = ScalarRule::Quadratic {
        q: [[-2.0, 0.0], [0.0, -2.0]],
        g: [0.0, 0.0],
        c: -1.0,
    };
    let p = ProblemSpec::new(op, g.clone()).with_rhs(f);
    let s = solve_dirichlet(&p, &solver(1e-10)).map_err(|e| e.to_string())?;
    let oracle = radial_pucci_oracle(lambda, cap, |r| -(1.0 + r * r));
    let err = (0..g.len())
        .map(|k| {
            let x = g.coords(k);
            (s.u.get(k) - oracle((x[0] * x[0] + x[1] * x[1]).sqrt())).abs()
        })
        .fold(0.0, f64::max);
    ensure(err <= 2e-3, format!("∞-error {err:e}"))?;
    Ok(format!("∞-error {err:.2e} vs shooting oracle at h = 1/128"))
}

fn c04_abp_batch(_: &mut Ctx) -> Outcome {
    let cfg = AbpBatchConfig::default();
    let calibrated = abp_batch(&cfg, None).map_err(|e| e.to_string())?;
    let stored = golden("abp_cap.json", json!({ "cap": calibrated.calibrated_cap, "max_ratio": calibrated.max_ratio }))?;
    let cap = stored["cap"].as_f64().ok_or("golden cap missing")?;
    ensure(close(cap, calibrated.calibrated_cap, 1e-9), format!("cap drifted: {} vs golden {cap}", calibrated.calibrated_cap))?;
    let run = abp_batch(&cfg, Some(cap)).map_err(|e| e.to_string())?;
    ensure(run.violations == 0, format!("{} violations at C_cap = {cap}", run.violations))?;
    Ok(format!("{} problems, max/min statements, 0 violations at C_cap = {cap:.4}", run.problems))
}

fn c05_eigenvalues(ctx: &mut Ctx) -> Outcome {
    let cfg = EigenConfig::default();
    let mut lines = Vec::new();
    let h = 1.0 / 256.0;
    let line = grid(Domain::interval(0.0, 1.0).unwrap(), h);
    let c = GridFunction::constant(line.clone(), 1.0);
    let op = OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 1).unwrap();
    for (sign, lam) in [(Sign::Plus, 1.0), (Sign::Minus, 2.0)] {
        let t = Instant::now();
        let pair = eigen_solve(&op, &c, sign, &cfg).map_err(|e| e.to_string())?;
        let secs = t.elapsed().as_secs_f64();
        let n = line.n_interior();
        let tri = tridiagonal_oracle(2.0 * lam / (h * h), -lam / (h * h), n);
        let target = lam * PI * PI;
        ensure(close(pair.alpha, target, 0.01), format!("1D {sign:?}: α = {} vs {target}", pair.alpha))?;
        ensure(close(pair.alpha, tri, 1e-5), format!("1D {sign:?}: α = {} vs tridiagonal {tri}", pair.alpha))?;
        ensure(secs < 60.0, format!("1D {sign:?} took {secs:.1}s"))?;
        lines.push(format!("1D {sign:?} α = {:.5} ({secs:.2}s)", pair.alpha));
        ctx.record(&format!("1D M+ {sign:?}"), &pair);
    }
    let disc = grid(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 128.0);
    let c = GridFunction::constant(disc, 1.0);
    let t = Instant::now();
    let pair = eigen_solve(&OperatorSpec::laplacian(2), &c, Sign::Plus, &cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    let j0 = bessel_oracle();
    ensure(close(j0, 5.7832, 1e-4), format!("Bessel oracle gives {j0}"))?;
    ensure(close(pair.alpha, j0, 0.01), format!("disc α = {} vs j₀² = {j0}", pair.alpha))?;
    ensure(secs < 60.0, format!("disc took {secs:.1}s"))?;
    lines.push(format!("disc α = {:.5} vs j₀² = {j0:.5} ({secs:.2}s)", pair.alpha));
    ctx.record("disc Laplacian", &pair);
    Ok(lines.join("; "))
}

fn c06_sigma_certificate(ctx: &mut Ctx) -> Outcome {
    let cfg = EigenConfig::default();
    let rich = StructureParams::new(0.5, 2.0)
        .unwrap()
        .with_b(CoefficientField::constant(2.0))
        .with_d(CoefficientField::constant(1.5), Modulus::lipschitz(1.0).unwrap());
    let square = grid(Domain::unit_square(), 1.0 / 32.0);
    let benches: Vec<(&str, OperatorSpec, GridFunction, [f64; 2], f64)> = vec![
        (
            "(−1,1) Laplacian",
            OperatorSpec::laplacian(1),
            GridFunction::constant(grid(Domain::interval(-1.0, 1.0).unwrap(), 1.0 / 64.0), 1.0),
            [0.0, 0.0],
            1.0,
        ),
        (
            "(0,1) Pucci",
            OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 1).unwrap(),
            GridFunction::constant(grid(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 64.0), 1.0),
            [0.5, 0.0],
            0.5,
        ),
        (
            "square L+ with b, d",
            OperatorSpec::extremal(Sign::Plus, rich.clone(), 2).unwrap(),
            GridFunction::from_fn(square.clone(), |x| 1.0 + x[0]),
            [0.5, 0.5],
            0.45,
        ),
        (
            "square L− with b, d",
            OperatorSpec::extremal(Sign::Minus, rich, 2).unwrap(),
            GridFunction::from_fn(square, |x| 1.0 + x[1] * x[1]),
            [0.5, 0.5],
            0.5,
        ),
        (
            "disc Laplacian",
            OperatorSpec::laplacian(2),
            GridFunction::constant(grid(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 32.0), 1.0),
            [0.0, 0.0],
            1.0,
        ),
    ];
    let mut worst: f64 = 0.0;
    for (label, op, c, center, r) in benches {
        for sign in [Sign::Plus, Sign::Minus] {
            let cert = eigen_upper_bound_sigma(&op, &c, center, r, sign).map_err(|e| format!("{label}: {e}"))?;
            ensure(cert.informative && cert.field_max <= 0.0, format!("{label}: field max {}", cert.field_max))?;
            let pair = eigen_solve(&op, &c, sign, &cfg).map_err(|e| format!("{label}: {e}"))?;
            ensure(pair.alpha <= cert.bound, format!("{label} {sign:?}: α = {} > bound {}", pair.alpha, cert.bound))?;
            worst = worst.max(pair.alpha / cert.bound);
            ctx.record(&format!("{label} {sign:?}"), &pair);
        }
    }
    Ok(format!("10 certificates verified, largest α₁/bound = {worst:.3}"))
}

fn c07_smp_hopf(ctx: &mut Ctx) -> Outcome {
    ensure(!ctx.eigenfunctions.is_empty(), "no eigenfunctions recorded")?;
    let mut least = f64::INFINITY;
    for (label, phi) in &ctx.eigenfunctions {
        let r = smp_hopf_check(phi, &SmpConfig::default());
        let pass = matches!(r.smp, viscolab::analysis::SmpBranch::Positive { .. }) && r.hopf.pass && r.hopf.checked > 0;
        ensure(pass, format!("{label}: {:?}, κ = {} vs {}", r.smp, r.hopf.kappa, r.hopf.threshold))?;
        least = least.min(r.hopf.kappa / r.hopf.threshold);
    }
    Ok(format!("{} eigenfunctions positive inside, smallest κ/(10h) = {least:.2}", ctx.eigenfunctions.len()))
}

fn c08_simplicity(ctx: &mut Ctx) -> Outcome {
    let cfg = EigenConfig::default();
    let op = OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 1).unwrap();
    let line = GridFunction::constant(grid(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 128.0), 1.0);
    let (r1, p1) = simplicity_check(&op, &line, Sign::Plus, 3, &cfg, 1e-5).map_err(|e| e.to_string())?;
    let op2 = OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 2).unwrap();
    let disc = GridFunction::constant(grid(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 32.0), 1.0);
    let (r2, p2) = simplicity_check(&op2, &disc, Sign::Plus, 3, &cfg, 1e-5).map_err(|e| e.to_string())?;
    for (i, p) in p1.iter().chain(&p2).enumerate() {
        ctx.record(&format!("simplicity run {i}"), p);
    }
    let stored = golden("simplicity_disc.json", json!({ "alpha": r2.runs[0].alpha, "report": &r2 }))?;
    let alpha = stored["alpha"].as_f64().ok_or("golden alpha missing")?;
    ensure(close(alpha, r2.runs[0].alpha, 1e-6), format!("disc α drifted: {} vs golden {alpha}", r2.runs[0].alpha))?;
    for r in [&r1, &r2] {
        ensure(r.pass && !r.vacuous, format!("distance {:e}, α spread {:e}", r.max_field_distance, r.max_alpha_spread))?;
    }
    Ok(format!(
        "1D distance {:.1e}, disc distance {:.1e} (rep_tol 1e-5)",
        r1.max_field_distance, r2.max_field_distance
    ))
}

fn c09_monotonicity_ladders(ctx: &mut Ctx) -> Outcome {
    for (label, ladder) in &ctx.ladders {
        ensure(ladder.last().map(|s| s.eps) == Some(0.0), format!("{label}: ladder does not end at ε = 0"))?;
        for w in ladder.windows(2) {
            ensure(w[1].alpha >= w[0].alpha * (1.0 - 1e-9), format!("{label}: α fell from {} to {}", w[0].alpha, w[1].alpha))?;
        }
    }
    let cfg = EigenConfig::default();
    let op = OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 2).unwrap();
    let (center, radius) = ([0.5, 0.5], 0.4);
    let square = grid(Domain::unit_square(), 1.0 / 32.0);
    let c = GridFunction::from_fn(square.clone(), |x| 0.2 + x[0] * x[1]);
    let delta = (0..square.len())
        .filter(|&k| {
            let x = square.coords(k);
            (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2) < radius * radius
        })
        .map(|k| c.get(k))
        .fold(f64::INFINITY, f64::min);
    let mut worst = f64::NEG_INFINITY;
    for sign in [Sign::Plus, Sign::Minus] {
        let outer = eigen_solve(&op, &c, sign, &cfg).map_err(|e| e.to_string())?;
        let ball = grid(Domain::disc(center, radius).unwrap(), 1.0 / 32.0);
        let one = GridFunction::constant(ball, 1.0);
        let inner = eigen_solve(&op, &one, sign, &cfg).map_err(|e| e.to_string())?;
        let bound = inner.alpha / delta + 1e-4;
        ensure(outer.alpha <= bound, format!("{sign:?}: α = {} > {bound}", outer.alpha))?;
        worst = worst.max(outer.alpha / bound);
        ctx.record(&format!("nested weight {sign:?}"), &outer);
    }
    Ok(format!(
        "{} ε-ladders nondecreasing; nested-weight α₁/bound ≤ {worst:.3}",
        ctx.ladders.len()
    ))
}

fn c10_caffarelli_fit(_: &mut Ctx) -> Outcome {
    let line = grid(Domain::interval(-1.0, 1.0).unwrap(), 1.0 / 16384.0);
    let u = GridFunction::from_fn(line, |x| x[0].abs().powf(1.5));
    let fit = caffarelli_fit(&u, &[0.0], &FitConfig::default(), false).map_err(|e| e.to_string())?;
    ensure((fit.alpha_est - 0.5).abs() <= 0.05 + 1e-12, format!("|x|^1.5: α_est = {}", fit.alpha_est))?;

    let disc = grid(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 64.0);
    let affine = GridFunction::from_fn(disc.clone(), |x| 0.5 - 2.0 * x[0] + 0.25 * x[1]);
    let cfg3 = FitConfig {
        scales: 3,
        ..Default::default()
    };
    let af = caffarelli_fit(&affine, &[0.0, 0.0], &cfg3, false).map_err(|e| e.to_string())?;
    let e_max = af.scales.iter().map(|s| s.error).fold(0.0, f64::max);
    ensure(e_max < 1e-12, format!("affine: E_k up to {e_max:e}"))?;

    let mut shapes = Vec::new();
    let smooth: Vec<(GridFunction, Vec<f64>)> = vec![
        (
            GridFunction::from_fn(grid(Domain::interval(-1.0, 1.0).unwrap(), 1.0 / 4096.0), |x| (1.3 * x[0]).sin() + 0.7 * x[0] * x[0]),
            vec![0.0],
        ),
        (
            GridFunction::from_fn(grid(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 256.0), |x| {
                (x[0] + 0.5 * x[1]).sin() + (0.8 * x[1]).cos() * (1.0 + x[0])
            }),
            vec![0.0, 0.0],
        ),
    ];
    for (u, x0) in &smooth {
        let cfg = FitConfig {
            scales: 4,
            ..Default::default()
        };
        let f = caffarelli_fit(u, x0, &cfg, false).map_err(|e| e.to_string())?;
        ensure(f.ladder_sum.is_finite(), "ladder sum is not finite")?;
        let s = f.shape_ratio();
        ensure((0.5..=2.0).contains(&s), format!("ladder/bound shape ratio {s}"))?;
        shapes.push(s);
    }
    Ok(format!(
        "α_est = {:.2} for |x|^1.5, affine E ≤ {e_max:.1e}, ladder shape ratios {:?}",
        fit.alpha_est,
        shapes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>()
    ))
}

fn c11_rescaling(_: &mut Ctx) -> Outcome {
    let params = StructureParams::new(1.0, 2.0)
        .unwrap()
        .with_b(CoefficientField::new(ScalarRule::SineProduct { amplitude: 0.8, freq: 0.7 }.rescaled(1.0, [0.0, 0.0], 1.0, 1.0), 4.0, 1).unwrap())
        .with_mu(0.4)
        .with_d(CoefficientField::constant(1.5), Modulus::lipschitz(2.0).unwrap());
    let g = grid(Domain::interval(-1.0, 1.0).unwrap(), 1.0 / 128.0);
    let h = g.h();
    let p = ProblemSpec::new(OperatorSpec::extremal(Sign::Plus, params.clone(), 1).unwrap(), g.clone())
        .with_rhs(ScalarRule::SineProduct { amplitude: -2.0, freq: 1.0 })
        .with_boundary(ScalarRule::Affine { a: 0.2, b: [0.5, 0.0] });
    let s = solve_dirichlet(&p, &solver(1e-11)).map_err(|e| e.to_string())?;
    let (mut formulas, mut identity) = (0.0f64, 0.0f64);
    let mut check = |r: &RescaledProblem, orig: &StructureParams| -> std::result::Result<(), String> {
        let f = r.formula_check(orig).max();
        formulas = formulas.max(f);
        identity = identity.max(r.identity_error);
        ensure(f <= 1e-12, format!("formula mismatch {f:e}"))?;
        ensure(r.identity_error <= 10.0 * h, format!("residual identity off by {:e}", r.identity_error))
    };
    for (x0, sigma) in [(0.125, 0.25), (-0.25, 0.125), (0.0, 0.5)] {
        let r = rescale_blowup(&s.u, &p, &[x0], sigma, &BlowupConfig::default()).map_err(|e| e.to_string())?;
        check(&r, &params)?;
    }
    let a = s.u.get(g.find_node(&[0.0]).unwrap());
    for k in 0..4 {
        let step = IterationStep {
            center: [0.0; 2],
            a,
            b: [0.3, 0.0],
            r_k: 0.25f64.powi(k),
            alpha: 0.5,
            k_bound: Some(0.6),
            stencil: StencilConfig::default(),
        };
        let r = rescale_iteration(&s.u, &p, &step).map_err(|e| e.to_string())?;
        check(&r, &params)?;
    }
    let p2d = StructureParams::new(1.0, 2.0)
        .unwrap()
        .with_b(CoefficientField::singular(0.2, 0.5, [0.31, 0.47], 3.0, 2).unwrap())
        .with_mu(0.3);
    let sq = grid(Domain::unit_square(), 1.0 / 32.0);
    let prob = ProblemSpec::new(OperatorSpec::extremal(Sign::Minus, p2d.clone(), 2).unwrap(), sq).with_rhs(ScalarRule::constant(-1.0));
    let s2 = solve_dirichlet(&prob, &solver(1e-11)).map_err(|e| e.to_string())?;
    let r = rescale_blowup(&s2.u, &prob, &[0.5, 0.5], 0.125, &BlowupConfig::default()).map_err(|e| e.to_string())?;
    check(&r, &p2d)?;
    Ok(format!("formulas within {formulas:.1e}, residual identity within {identity:.1e} (bound 10h)"))
}

fn c12_approximation_gap(_: &mut Ctx) -> Outcome {
    let cfg = SolverConfig {
        tol: 1e-11,
        ..Default::default()
    };
    let disc = grid(Domain::disc([0.0, 0.0], 1.0).unwrap(), 1.0 / 16.0);
    let mut zero = ApproxSetup::new(OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 2).unwrap(), disc.clone());
    zero.boundary = ScalarRule::SineProduct { amplitude: 1.0, freq: 0.8 };
    zero.affine_a = 0.7;
    zero.affine_b = [0.4, -0.2];
    let z = approximation_gap(&zero, 1.0, &cfg).map_err(|e| e.to_string())?;
    ensure(z.inputs.max() == 0.0 && z.gap <= 2.0 * cfg.tol, format!("zero-input gap {:e}", z.gap))?;

    let params = StructureParams::new(1.0, 2.0)
        .unwrap()
        .with_b(CoefficientField::constant(1.0))
        .with_mu(1.0)
        .with_d(CoefficientField::constant(1.0), Modulus::lipschitz(1.0).unwrap());
    let deltas = [1e-1, 1e-2, 1e-3];
    let mut ladders = Vec::new();
    for (label, g) in [("ball", disc), ("half-ball", grid(Domain::half_disc(0.5).unwrap(), 1.0 / 16.0))] {
        let mut s = ApproxSetup::new(OperatorSpec::extremal(Sign::Plus, params.clone(), 2).unwrap(), g);
        s.rhs = ScalarRule::constant(-1.0);
        s.boundary = ScalarRule::AbsPower {
            center: [0.0, -0.5],
            exponent: 1.5,
            scale: 1.0,
        };
        s.affine_b = [0.5, 0.0];
        let mut gaps = Vec::new();
        for d in deltas {
            gaps.push(approximation_gap(&s, d, &cfg).map_err(|e| e.to_string())?.gap);
        }
        ensure(gaps.windows(2).all(|w| w[1] <= w[0]), format!("{label}: gaps {gaps:?} not nonincreasing"))?;
        ladders.push((label, gaps));
    }
    let value = json!({ "deltas": deltas, "ball": ladders[0].1, "half_ball": ladders[1].1 });
    let stored = golden("approximation_ladder.json", value)?;
    for (label, key) in [("ball", "ball"), ("half-ball", "half_ball")] {
        let gaps = &ladders.iter().find(|l| l.0 == label).unwrap().1;
        let gold: Vec<f64> = serde_json::from_value(stored[key].clone()).map_err(|e| e.to_string())?;
        ensure(
            gold.len() == gaps.len() && gold.iter().zip(gaps).all(|(a, b)| close(*a, *b, 1e-6)),
            format!("{label}: gaps {gaps:?} differ from golden {gold:?}"),
        )?;
    }
    Ok(format!(
        "zero-input gap {:.1e}; ball {:?}; half-ball {:?}",
        z.gap,
        ladders[0].1.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>(),
        ladders[1].1.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>()
    ))
}

fn c13_oscillation(_: &mut Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC13);
    let pts: Vec<([f64; 2], [f64; 2])> = (0..40)
        .map(|_| {
            let mut p = || [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            (p(), p())
        })
        .collect();
    let rich = StructureParams::new(0.5, 2.0)
        .unwrap()
        .with_b(CoefficientField::new(ScalarRule::SineProduct { amplitude: 1.0, freq: 2.0 }, 4.0, 2).unwrap())
        .with_mu(0.7)
        .with_d(CoefficientField::constant(1.0), Modulus::lipschitz(1.0).unwrap());
    let frozen_ops = [
        OperatorSpec::laplacian(2),
        OperatorSpec::pucci(Sign::Minus, 0.5, 2.0, 2).unwrap(),
        OperatorSpec::extremal(Sign::Plus, rich, 2).unwrap(),
    ];
    for op in &frozen_ops {
        for (x, x0) in &pts {
            let b = oscillation_beta(op, x, x0, BetaVariant::Beta, MatrixNorm::Spectral).value;
            ensure(b == 0.0, format!("{}: β = {b} for an x-independent operator", op.label()))?;
        }
    }
    let a = ScalarRule::Rescaled {
        inner: Box::new(ScalarRule::SineProduct { amplitude: 0.5, freq: 1.0 }),
        scale: 1.0,
        center: [0.0, 0.0],
        factor: 1.0,
        offset: 1.5,
    };
    let op = OperatorSpec::trace_scaled(a.clone(), 1.0, 2.0, 2).unwrap();
    let mut worst = 0.0f64;
    for (x, x0) in &pts {
        let beta = oscillation_beta(&op, x, x0, BetaVariant::Beta, MatrixNorm::Spectral).value;
        let bar = oscillation_beta(&op, x, x0, BetaVariant::BetaBar, MatrixNorm::Spectral).value;
        let exact = 2.0 * (a.eval(x) - a.eval(x0)).abs();
        worst = worst.max((beta - exact).abs());
        ensure(bar <= beta + 1e-15, format!("β̄ = {bar} > β = {beta}"))?;
    }
    ensure(worst <= 1e-3, format!("closed-form β mismatch {worst:e}"))?;
    Ok(format!("x-independent β = 0 on {} pairs; |β − n|Δa|| ≤ {worst:.1e}; β̄ ≤ β", pts.len()))
}

fn c14_nagumo(_: &mut Ctx) -> Outcome {
    let p = 4.0;
    let op_plus = OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 2).unwrap();
    let singular = StructureParams::new(1.0, 2.0)
        .unwrap()
        .with_b(CoefficientField::singular(0.5, 0.4, [0.53, 0.47], p, 2).unwrap());
    let op_sing = OperatorSpec::extremal(Sign::Plus, singular, 2).unwrap();
    let mut out = Vec::new();
    let mut all = Vec::new();
    for (label, op, domain) in [
        ("smooth disc", op_plus, Domain::disc([0.0, 0.0], 1.0).unwrap()),
        ("singular b square", op_sing, Domain::unit_square()),
    ] {
        let mut ratios = Vec::new();
        for h in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
            let prob = ProblemSpec::new(op.clone(), grid(domain.clone(), h))
                .with_rhs(ScalarRule::constant(-1.0))
                .with_boundary(ScalarRule::Affine { a: 0.1, b: [0.2, -0.1] });
            let s = solve_dirichlet(&prob, &solver(1e-10)).map_err(|e| e.to_string())?;
            ratios.push(nagumo_check(&s, &prob, p).map_err(|e| e.to_string())?.ratio);
        }
        ensure(nagumo_ladder_stable(&ratios), format!("{label}: ratios {ratios:?}"))?;
        let steps: Vec<f64> = ratios.windows(2).map(|w| w[1] - w[0]).collect();
        let contraction = if steps[0] != 0.0 { steps[1] / steps[0] } else { 0.0 };
        out.push(format!(
            "{label} {:?} (increment ratio {contraction:.2})",
            ratios.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>()
        ));
        all.push(ratios);
    }
    let stored = golden("nagumo_ladder.json", json!({ "p": p, "smooth": all[0], "singular_b": all[1] }))?;
    let gold: Vec<f64> = serde_json::from_value(stored["singular_b"].clone()).map_err(|e| e.to_string())?;
    ensure(
        gold.iter().zip(&all[1]).all(|(a, b)| close(*a, *b, 1e-6)),
        format!("singular-b ratios {:?} differ from golden {gold:?}", all[1]),
    )?;
    Ok(out.join("; "))
}

fn c15_monotonicity_audit(_: &mut Ctx) -> Outcome {
    let rich = StructureParams::new(0.5, 2.0)
        .unwrap()
        .with_b(CoefficientField::singular(0.3, 0.5, [0.31, 0.47], 3.0, 2).unwrap())
        .with_mu(0.5)
        .with_d(CoefficientField::constant(1.0), Modulus::power(0.5, 1.0).unwrap());
    let ops = vec![
        OperatorSpec::laplacian(2),
        OperatorSpec::pucci(Sign::Plus, 1.0, 2.0, 2).unwrap(),
        OperatorSpec::pucci(Sign::Minus, 1.0, 2.0, 2).unwrap(),
        OperatorSpec::extremal(Sign::Plus, rich.clone(), 2).unwrap(),
        OperatorSpec::extremal(Sign::Minus, rich.clone(), 2).unwrap(),
        OperatorSpec::extremal(Sign::Plus, rich, 2).unwrap().companion(),
        OperatorSpec::trace_scaled(ScalarRule::SineProduct { amplitude: 0.5, freq: 1.0 }.rescaled(1.0, [0.0, 0.0], 1.0, 1.5), 1.0, 2.0, 2).unwrap(),
    ];
    let domains = [
        Domain::unit_square(),
        Domain::disc([0.0, 0.0], 1.0).unwrap(),
        Domain::half_disc(0.5).unwrap(),
    ];
    let defaults = SolverConfig::default();
    let mut runs = 0;
    for op in &ops {
        for d in &domains {
            let g = grid(d.clone(), 1.0 / 16.0);
            let scheme = Scheme::new(op, g, defaults.stencil).map_err(|e| e.to_string())?;
            let a = monotonicity_audit(&scheme, defaults.audit_samples, 0xC15 + runs);
            ensure(a.samples >= 10_000, format!("only {} samples", a.samples))?;
            ensure(a.pass && a.violations == 0, format!("{} on {d:?}: {} violations", op.label(), a.violations))?;
            runs += 1;
        }
    }
    let one = grid(Domain::interval(0.0, 1.0).unwrap(), 1.0 / 32.0);
    let scheme = Scheme::new(&OperatorSpec::pucci(Sign::Minus, 1.0, 3.0, 1).unwrap(), one, defaults.stencil).map_err(|e| e.to_string())?;
    ensure(monotonicity_audit(&scheme, defaults.audit_samples, 0xC15).pass, "1D audit failed")?;
    Ok(format!("{} scheme audits × {} samples, 0 violations", runs + 1, defaults.audit_samples))
}

fn main() {
    let criteria: [(&str, Criterion); 15] = [
        ("Pucci formula vs sampling", c01_pucci_sampling),
        ("solver exactness on x(1−x)", c02_solver_exactness),
        ("radial 2D Pucci vs shooting ODE", c03_radial_pucci),
        ("ABP batch at calibrated cap", c04_abp_batch),
        ("principal eigenvalues", c05_eigenvalues),
        ("σ-certificate upper bounds", c06_sigma_certificate),
        ("SMP and Hopf on eigenfunctions", c07_smp_hopf),
        ("simplicity from three starts", c08_simplicity),
        ("weight monotonicity ladders", c09_monotonicity_ladders),
        ("Caffarelli affine-fit ladder", c10_caffarelli_fit),
        ("rescaling identities", c11_rescaling),
        ("approximation gap", c12_approximation_gap),
        ("oscillation β", c13_oscillation),
        ("W^{2,p} ratio refinement stability", c14_nagumo),
        ("monotonicity audit of default schemes", c15_monotonicity_audit),
    ];
    let only: Option<usize> = std::env::var("VISCOLAB_CRITERION").ok().and_then(|v| v.parse().ok());
    let mut ctx = Ctx::default();
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != i + 1) && !(only.is_some_and(|o| o == 7 || o == 9) && (i + 1 == 5 || i + 1 == 6)) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut ctx))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:02}] {name} ({secs:.1}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{:02}] {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {failed} failing, {:.1}s total", start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
