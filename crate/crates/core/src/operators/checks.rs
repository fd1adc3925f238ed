use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{MatrixNorm, OperatorSpec, Sign, SymMatrix};
use crate::domain::Domain;
use crate::error::{invalid, Error, Result};

/// One tuple `(x, r, s, p, q, X, Y)` and the side of the envelope it broke.
#[derive(Clone, Debug, Serialize)]
pub struct StructureWitness {
    pub side: Sign,
    pub x: Vec<f64>,
    pub r: f64,
    pub s: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub xm: SymMatrix,
    pub ym: SymMatrix,
    pub difference: f64,
    pub envelope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StructureReport {
    pub pass: bool,
    pub samples: usize,
    pub violations: usize,
    /// Smallest slack over both sides; negative means a violation.
    pub worst_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<StructureWitness>,
}

impl StructureReport {
    pub fn ensure(&self) -> Result<()> {
        match &self.witness {
            Some(w) if !self.pass => Err(Error::StructureViolation(format!(
                "{} side broken at x={:?}, r={}, s={}, p={:?}, q={:?}: difference {} vs envelope {}",
                w.side, w.x, w.r, w.s, w.p, w.q, w.difference, w.envelope
            ))),
            _ => Ok(()),
        }
    }
}

pub(crate) fn sample_point(domain: &Domain, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (lo, hi) = domain.bounding_box();
    let n = domain.dim();
    loop {
        let x: Vec<f64> = (0..n).map(|i| rng.random_range(lo[i]..=hi[i])).collect();
        if domain.margin(&x) > 0.0 {
            return x;
        }
    }
}

fn random_sym(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> SymMatrix {
    if n == 1 {
        SymMatrix::diag(&[scale * rng.random_range(-1.0..1.0)])
    } else {
        SymMatrix::rotated_diag(
            rng.random_range(0.0..std::f64::consts::PI),
            scale * rng.random_range(-1.0..1.0),
            scale * rng.random_range(-1.0..1.0),
        )
    }
}

/// Samples the two-sided envelope `M⁻(X−Y) − … ≤ F(x,r,p,X) − F(x,s,q,Y) ≤ M⁺(X−Y) + …`
/// with the operator's declared parameters.
pub fn check_structure_condition(
    op: &OperatorSpec,
    domain: &Domain,
    sample_count: usize,
    seed: u64,
) -> Result<StructureReport> {
    if sample_count == 0 {
        return Err(invalid("sample_count must be ≥ 1"));
    }
    let n = op.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero_v = vec![0.0; n];
    let zero_m = SymMatrix::zeros(n);
    let mut e1 = zero_v.clone();
    e1[0] = 1.0;
    let mut saddle = vec![1.0; n];
    if n > 1 {
        saddle[1] = -1.0;
    }
    // structured witnesses first, then random tuples on a log ladder of scales
    type Tuple = (f64, f64, Vec<f64>, Vec<f64>, SymMatrix, SymMatrix);
    let structured: Vec<Tuple> = vec![
        (0.0, 0.0, zero_v.clone(), zero_v.clone(), SymMatrix::identity(n), zero_m),
        (0.0, 0.0, zero_v.clone(), zero_v.clone(), SymMatrix::identity(n).scale(-1.0), zero_m),
        (0.0, 0.0, zero_v.clone(), zero_v.clone(), SymMatrix::diag(&saddle), zero_m),
        (1.0, 0.0, zero_v.clone(), zero_v.clone(), zero_m, zero_m),
        (-1.0, 0.0, zero_v.clone(), zero_v.clone(), zero_m, zero_m),
        (0.0, 0.0, e1.clone(), zero_v.clone(), zero_m, zero_m),
        (0.0, 0.0, e1.clone(), e1.iter().map(|v| -v).collect(), zero_m, zero_m),
    ];

    let mut report = StructureReport {
        pass: true,
        samples: sample_count,
        violations: 0,
        worst_margin: f64::INFINITY,
        witness: None,
    };
    for k in 0..sample_count {
        let x = sample_point(domain, &mut rng);
        let (r, s, p, q, xm, ym) = if k < structured.len() {
            structured[k].clone()
        } else {
            let t = 10f64.powf(rng.random_range(-2.0..2.0));
            let vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..n).map(|_| t * rng.random_range(-1.0..1.0)).collect()
            };
            let r = t * rng.random_range(-1.0..1.0);
            let s = if rng.random_bool(0.2) { r } else { t * rng.random_range(-1.0..1.0) };
            let p = vec(&mut rng);
            let q = if rng.random_bool(0.2) { p.clone() } else { vec(&mut rng) };
            let xm = random_sym(n, t, &mut rng);
            let ym = if rng.random_bool(0.2) { xm } else { random_sym(n, t, &mut rng) };
            (r, s, p, q, xm, ym)
        };
        let f1 = op.apply(&x, r, &p, &xm);
        let f2 = op.apply(&x, s, &q, &ym);
        let diff = f1 - f2;
        let dx = xm.sub(&ym);
        for side in [Sign::Plus, Sign::Minus] {
            let env = op.params.envelope(side, &x, r - s, &p, &q, &dx);
            let margin = match side {
                Sign::Plus => env - diff,
                Sign::Minus => diff - env,
            };
            let tol = 1e-9 * (1.0 + f1.abs() + f2.abs() + env.abs());
            let scaled = margin / (1.0 + env.abs());
            if scaled < report.worst_margin {
                report.worst_margin = scaled;
            }
            if margin < -tol {
                report.violations += 1;
                if report.witness.is_none() {
                    report.witness = Some(StructureWitness {
                        side,
                        x: x.clone(),
                        r,
                        s,
                        p: p.clone(),
                        q: q.clone(),
                        xm,
                        ym,
                        difference: diff,
                        envelope: env,
                    });
                }
            }
        }
    }
    report.pass = report.violations == 0;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaVariant {
    Beta,
    BetaBar,
}

#[derive(Clone, Debug, Serialize)]
pub struct BetaReport {
    pub variant: BetaVariant,
    pub value: f64,
    pub maximizer: SymMatrix,
}

fn beta_family(n: usize) -> Vec<SymMatrix> {
    let ladder: Vec<f64> = (-4..=4)
        .flat_map(|k| {
            let v = 2f64.powi(k);
            [v, -v]
        })
        .collect();
    let mut family = Vec::new();
    if n == 1 {
        family.extend(ladder.iter().map(|&v| SymMatrix::diag(&[v])));
    } else {
        for a in 0..32 {
            let theta = a as f64 * std::f64::consts::PI / 32.0;
            for &e1 in &ladder {
                for &e2 in &ladder {
                    family.push(SymMatrix::rotated_diag(theta, e1, e2));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xB37A);
    for _ in 0..512 {
        let t = 2f64.powf(rng.random_range(-4.0..4.0));
        family.push(random_sym(n, t, &mut rng));
    }
    family
}

/// Oscillation of `F(·,0,0,X)` between `x` and `x₀`, maximized over a
/// structured family of rotated diagonal ladders plus seeded random `X`.
pub fn oscillation_beta(
    op: &OperatorSpec,
    x: &[f64],
    x0: &[f64],
    variant: BetaVariant,
    norm: MatrixNorm,
) -> BetaReport {
    let family = beta_family(op.dim);
    beta_over(op, x, x0, variant, norm, &family)
}

fn beta_over(
    op: &OperatorSpec,
    x: &[f64],
    x0: &[f64],
    variant: BetaVariant,
    norm: MatrixNorm,
    family: &[SymMatrix],
) -> BetaReport {
    let zero = vec![0.0; op.dim];
    let mut best = BetaReport {
        variant,
        value: 0.0,
        maximizer: SymMatrix::zeros(op.dim),
    };
    for m in family {
        let nm = m.norm(norm);
        if nm == 0.0 {
            continue;
        }
        let num = (op.apply(x, 0.0, &zero, m) - op.apply(x0, 0.0, &zero, m)).abs();
        let den = match variant {
            BetaVariant::Beta => nm,
            BetaVariant::BetaBar => nm + 1.0,
        };
        let q = num / den;
        if q > best.value {
            best.value = q;
            best.maximizer = *m;
        }
    }
    best
}

#[derive(Clone, Debug, Serialize)]
pub struct HThetaReport {
    pub center: Vec<f64>,
    pub radius: f64,
    pub p: f64,
    pub nodes: usize,
    pub value: f64,
}

/// `(r^{-n} ∫_{B_r(x₀)∩Ω} β(x,x₀)^p dx)^{1/p}` by midpoint quadrature on a
/// lattice centered at `x₀` with `resolution` cells per radius.
pub fn h_theta_report(
    op: &OperatorSpec,
    domain: &Domain,
    x0: &[f64],
    r: f64,
    p: f64,
    resolution: usize,
) -> Result<HThetaReport> {
    if !(r > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let n = op.dim;
    if !(p > n as f64) {
        return Err(invalid(format!("(H_θ) needs p > n, got p={p}")));
    }
    let q = resolution.max(1) as i64;
    let step = r / q as f64;
    let family = beta_family(n);
    let mut sum = 0.0;
    let mut count = 0;
    let jr = if n == 1 { 0..=0 } else { -q..=q };
    for j in jr {
        for i in -q..=q {
            if (i * i + j * j) > q * q {
                continue;
            }
            let mut x = vec![x0[0] + i as f64 * step];
            if n == 2 {
                x.push(x0[1] + j as f64 * step);
            }
            if domain.margin(&x) < 0.0 {
                continue;
            }
            count += 1;
            let b = beta_over(op, &x, x0, BetaVariant::Beta, MatrixNorm::Spectral, &family).value;
            sum += b.powf(p) * step.powi(n as i32);
        }
    }
    if count == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(HThetaReport {
        center: x0.to_vec(),
        radius: r,
        p,
        nodes: count,
        value: (sum / r.powi(n as i32)).powf(1.0 / p),
    })
}

/// Samples `F(x,tr,tp,tX) = t·F(x,r,p,X)` for `t > 0`.
pub fn assert_homogeneous(op: &OperatorSpec, domain: &Domain, samples: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = op.dim;
    for _ in 0..samples {
        let x = sample_point(domain, &mut rng);
        let r = rng.random_range(-2.0..2.0);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = random_sym(n, 2.0, &mut rng);
        let t = 10f64.powf(rng.random_range(-2.0..1.0));
        let base = op.apply(&x, r, &p, &m);
        let tp: Vec<f64> = p.iter().map(|v| t * v).collect();
        let scaled = op.apply(&x, t * r, &tp, &m.scale(t));
        if (scaled - t * base).abs() > 1e-9 * (1.0 + scaled.abs() + (t * base).abs()) {
            return Err(invalid(format!(
                "operator {} is not positively 1-homogeneous: F(t·)={scaled} vs t·F={} at t={t}",
                op.label(),
                t * base
            )));
        }
    }
    let zero = vec![0.0; n];
    for _ in 0..16 {
        let x = sample_point(domain, &mut rng);
        let v = op.apply(&x, 0.0, &zero, &SymMatrix::zeros(n));
        if v.abs() > 1e-12 {
            return Err(invalid(format!("F(x,0,0,0) = {v} ≠ 0 at {x:?}")));
        }
    }
    Ok(())
}
