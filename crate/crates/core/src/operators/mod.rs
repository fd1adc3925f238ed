//! Pointwise operators `F(x, r, p, X)` and their structure.

mod checks;
mod matrix;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use checks::{
    assert_homogeneous, check_structure_condition, h_theta_report, oscillation_beta, BetaReport,
    BetaVariant, HThetaReport, StructureReport, StructureWitness,
};
pub use matrix::{MatrixNorm, SymMatrix};

use crate::coefficient::CoefficientField;
use crate::error::{invalid, Result};
use crate::modulus::Modulus;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

/// Ellipticity constants `0 < λ ≤ Λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipticity {
    pub lambda: f64,
    #[serde(rename = "big_lambda")]
    pub cap: f64,
}

impl Ellipticity {
    pub fn new(lambda: f64, cap: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= cap && cap.is_finite()) {
            return Err(invalid(format!(
                "ellipticity needs 0 < λ ≤ Λ, got λ={lambda}, Λ={cap}"
            )));
        }
        Ok(Ellipticity { lambda, cap })
    }

    pub fn unit() -> Self {
        Ellipticity {
            lambda: 1.0,
            cap: 1.0,
        }
    }
}

/// `Λ·Σeᵢ⁺ − λ·Σeᵢ⁻` for `+`, `λ·Σeᵢ⁺ − Λ·Σeᵢ⁻` for `−`.
pub fn pucci(x: &SymMatrix, lambda: f64, cap: f64, sign: Sign) -> Result<f64> {
    Ellipticity::new(lambda, cap)?;
    Ok(pucci_unchecked(x, lambda, cap, sign))
}

pub(crate) fn pucci_unchecked(x: &SymMatrix, lambda: f64, cap: f64, sign: Sign) -> f64 {
    let (pos, neg) = match sign {
        Sign::Plus => (cap, lambda),
        Sign::Minus => (lambda, cap),
    };
    x.eigenvalues()
        .into_iter()
        .map(|e| if e > 0.0 { pos * e } else { neg * e })
        .sum()
}

/// Every symbol of the structure condition: ellipticity, first-order
/// coefficient `b`, superlinear constant `μ`, zero-order coefficient `d`
/// with modulus `ω`, and an optional eigenvalue weight `c`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureParams {
    pub ellipticity: Ellipticity,
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "CoefficientField::zero")]
    pub b: CoefficientField,
    #[serde(default = "CoefficientField::zero")]
    pub d: CoefficientField,
    #[serde(default)]
    pub omega: Modulus,
    #[serde(default)]
    pub c: Option<CoefficientField>,
}

impl StructureParams {
    pub fn new(lambda: f64, cap: f64) -> Result<Self> {
        Ok(StructureParams {
            ellipticity: Ellipticity::new(lambda, cap)?,
            mu: 0.0,
            b: CoefficientField::zero(),
            d: CoefficientField::zero(),
            omega: Modulus::default(),
            c: None,
        })
    }

    pub fn with_b(mut self, b: CoefficientField) -> Self {
        self.b = b;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_d(mut self, d: CoefficientField, omega: Modulus) -> Self {
        self.d = d;
        self.omega = omega;
        self
    }

    pub fn with_c(mut self, c: CoefficientField) -> Self {
        self.c = Some(c);
        self
    }

    pub fn lambda(&self) -> f64 {
        self.ellipticity.lambda
    }

    pub fn cap(&self) -> f64 {
        self.ellipticity.cap
    }

    pub fn validate(&self) -> Result<()> {
        Ellipticity::new(self.ellipticity.lambda, self.ellipticity.cap)?;
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(invalid(format!("μ must be ≥ 0, got {}", self.mu)));
        }
        self.omega.validate()?;
        self.b.rule.validate()?;
        self.d.rule.validate()?;
        Ok(())
    }

    /// Envelope `M^±(X−Y) ± (b|p−q| + μ|p−q|(|p|+|q|) + dω(|r−s|))`.
    #[allow(clippy::too_many_arguments)]
    pub fn envelope(
        &self,
        sign: Sign,
        x: &[f64],
        dr: f64,
        p: &[f64],
        q: &[f64],
        dx: &SymMatrix,
    ) -> f64 {
        let dp = norm(&p.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>());
        let lower_order = self.b.eval(x) * dp
            + self.mu * dp * (norm(p) + norm(q))
            + self.d.eval(x) * self.omega.eval(dr.abs());
        pucci_unchecked(dx, self.lambda(), self.cap(), sign) + sign.factor() * lower_order
    }
}

pub(crate) fn norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `L^±(x,r,p,X) = M^±(X) ± b(x)|p| ± μ|p|² ± d(x)ω(r^∓)`.
///
/// Proper for both signs: `ω(r⁻)` decreases in `r` and `−ω(r⁺)` too.
pub fn extremal_apply(
    sign: Sign,
    x: &[f64],
    r: f64,
    p: &[f64],
    xm: &SymMatrix,
    params: &StructureParams,
) -> Result<f64> {
    params.validate()?;
    Ok(extremal_unchecked(sign, x, r, p, xm, params))
}

fn extremal_unchecked(
    sign: Sign,
    x: &[f64],
    r: f64,
    p: &[f64],
    xm: &SymMatrix,
    params: &StructureParams,
) -> f64 {
    let g = norm(p);
    let zero_order = match sign {
        Sign::Plus => (-r).max(0.0),
        Sign::Minus => r.max(0.0),
    };
    let mut lower = params.b.eval(x) * g + params.mu * g * g;
    if zero_order > 0.0 {
        lower += params.d.eval(x) * params.omega.eval(zero_order);
    }
    pucci_unchecked(xm, params.lambda(), params.cap(), sign) + sign.factor() * lower
}

type OperatorFn = dyn Fn(&[f64], f64, &[f64], &SymMatrix) -> f64 + Send + Sync;

/// A user-supplied rule `(x, r, p, X) ↦ F`.
#[derive(Clone)]
pub struct CustomOperator {
    pub label: String,
    pub f: Arc<OperatorFn>,
}

impl fmt::Debug for CustomOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomOperator({})", self.label)
    }
}

/// Change of variables `y = s·ξ + x₀`, `u = A·ũ + ℓ(y)` with
/// `ℓ(y) = a + b·(y − x₀)`.
///
/// The transformed operator is
/// `(s²/A)·[F(y, A r + ℓ(y), (A/s)p + b, (A/s²)X) − F(y, ℓ(y), b, 0)]`.
/// The blow-up uses `(s, A, ℓ) = (σ, N, u(x₀))`, the iteration
/// `(r_k, r_k^{1+α}, l_k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineRescaling {
    pub scale: f64,
    pub amplitude: f64,
    pub center: [f64; 2],
    pub a: f64,
    pub b: [f64; 2],
    /// Bound `K ≥ |b|` entering the transformed first-order coefficient.
    pub k_bound: f64,
}

impl AffineRescaling {
    pub fn new(scale: f64, amplitude: f64, center: [f64; 2], a: f64, b: [f64; 2]) -> Result<Self> {
        if !(scale > 0.0 && amplitude > 0.0 && scale.is_finite() && amplitude.is_finite()) {
            return Err(invalid("rescaling needs positive finite scale and amplitude"));
        }
        Ok(AffineRescaling {
            scale,
            amplitude,
            center,
            a,
            b,
            k_bound: b[0].hypot(b[1]),
        })
    }

    pub fn with_k_bound(mut self, k: f64) -> Self {
        self.k_bound = k;
        self
    }

    /// `ξ ↦ y = sξ + x₀`
    pub fn to_original(&self, xi: &[f64]) -> [f64; 2] {
        let mut y = self.center;
        for (i, v) in xi.iter().enumerate().take(2) {
            y[i] += self.scale * v;
        }
        y
    }

    /// `y ↦ ξ = (y − x₀)/s`
    pub fn to_rescaled(&self, y: &[f64]) -> [f64; 2] {
        let mut xi = [0.0; 2];
        for (i, v) in y.iter().enumerate().take(2) {
            xi[i] = (v - self.center[i]) / self.scale;
        }
        xi
    }

    /// `ℓ(y)`
    pub fn affine(&self, y: &[f64]) -> f64 {
        self.a
            + y.iter()
                .enumerate()
                .take(2)
                .map(|(i, v)| self.b[i] * (v - self.center[i]))
                .sum::<f64>()
    }

    /// Outer factor `s²/A`.
    pub fn factor(&self) -> f64 {
        self.scale * self.scale / self.amplitude
    }

    /// Transformed structure parameters: `b̃ = s·b(y) + 2sμK`, `μ̃ = Aμ`,
    /// `d̃ = s²d(y)`, `ω̃(t) = ω(At)/A`.
    pub fn transform_params(&self, p: &StructureParams) -> StructureParams {
        let s = self.scale;
        let a = self.amplitude;
        StructureParams {
            ellipticity: p.ellipticity,
            mu: a * p.mu,
            b: p.b.rescaled(s, self.center, s, 2.0 * s * p.mu * self.k_bound),
            d: p.d.rescaled(s, self.center, s * s, 0.0),
            omega: p.omega.rescale(a, a),
            c: p.c.as_ref().map(|c| c.rescaled(s, self.center, 1.0, 0.0)),
        }
    }
}

#[derive(Clone, Debug)]
pub enum OperatorKind {
    /// `L^±` built from the declared parameters.
    Extremal { sign: Sign },
    /// `a(x)·tr X`, with `λ ≤ a ≤ Λ` declared in the parameters.
    TraceScaled { a: crate::rules::ScalarRule },
    Custom(CustomOperator),
    /// `G(x,r,p,X) = −F(x,−r,−p,−X)`.
    Companion(Box<OperatorSpec>),
    Rescaled {
        inner: Box<OperatorSpec>,
        map: AffineRescaling,
    },
    /// `X ↦ F(x₀, 0, 0, X)`.
    Frozen { inner: Box<OperatorSpec>, at: [f64; 2] },
}

/// Pointwise operator with declared structure parameters.
#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub params: StructureParams,
    pub dim: usize,
}

impl OperatorSpec {
    pub fn extremal(sign: Sign, params: StructureParams, dim: usize) -> Result<Self> {
        params.validate()?;
        check_dim(dim)?;
        Ok(OperatorSpec {
            kind: OperatorKind::Extremal { sign },
            params,
            dim,
        })
    }

    /// The pure Pucci operator `M^±` (no lower-order terms).
    pub fn pucci(sign: Sign, lambda: f64, cap: f64, dim: usize) -> Result<Self> {
        Self::extremal(sign, StructureParams::new(lambda, cap)?, dim)
    }

    pub fn laplacian(dim: usize) -> Self {
        Self::pucci(Sign::Plus, 1.0, 1.0, dim).expect("unit ellipticity is valid")
    }

    pub fn trace_scaled(a: crate::rules::ScalarRule, lambda: f64, cap: f64, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        a.validate()?;
        Ok(OperatorSpec {
            kind: OperatorKind::TraceScaled { a },
            params: StructureParams::new(lambda, cap)?,
            dim,
        })
    }

    pub fn custom(
        label: &str,
        params: StructureParams,
        dim: usize,
        f: impl Fn(&[f64], f64, &[f64], &SymMatrix) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_dim(dim)?;
        params.validate()?;
        Ok(OperatorSpec {
            kind: OperatorKind::Custom(CustomOperator {
                label: label.into(),
                f: Arc::new(f),
            }),
            params,
            dim,
        })
    }

    /// `G(x,r,p,X) = −F(x,−r,−p,−X)`, with the same parameters.
    pub fn companion(&self) -> Self {
        if let OperatorKind::Companion(inner) = &self.kind {
            return (**inner).clone();
        }
        OperatorSpec {
            kind: OperatorKind::Companion(Box::new(self.clone())),
            params: self.params.clone(),
            dim: self.dim,
        }
    }

    pub fn rescaled(&self, map: AffineRescaling) -> Self {
        OperatorSpec {
            kind: OperatorKind::Rescaled {
                inner: Box::new(self.clone()),
                map,
            },
            params: map.transform_params(&self.params),
            dim: self.dim,
        }
    }

    /// `X ↦ F(x₀, 0, 0, X)`; its lower-order parameters vanish.
    pub fn frozen(&self, at: [f64; 2]) -> Self {
        let mut params = self.params.clone();
        params.mu = 0.0;
        params.b = CoefficientField::zero();
        params.d = CoefficientField::zero();
        OperatorSpec {
            kind: OperatorKind::Frozen {
                inner: Box::new(self.clone()),
                at,
            },
            params,
            dim: self.dim,
        }
    }

    pub fn with_weight(mut self, c: CoefficientField) -> Self {
        self.params.c = Some(c);
        self
    }

    /// `F(x, r, p, X)`.
    pub fn apply(&self, x: &[f64], r: f64, p: &[f64], xm: &SymMatrix) -> f64 {
        match &self.kind {
            OperatorKind::Extremal { sign } => extremal_unchecked(*sign, x, r, p, xm, &self.params),
            OperatorKind::TraceScaled { a } => a.eval(x) * xm.trace(),
            OperatorKind::Custom(c) => (c.f)(x, r, p, xm),
            OperatorKind::Companion(inner) => {
                let np: Vec<f64> = p.iter().map(|v| -v).collect();
                -inner.apply(x, -r, &np, &xm.scale(-1.0))
            }
            OperatorKind::Rescaled { inner, map } => {
                let y = map.to_original(x);
                let y = &y[..self.dim];
                let l = map.affine(y);
                let amp = map.amplitude;
                let s = map.scale;
                let b = &map.b[..self.dim];
                let pp: Vec<f64> = p.iter().zip(b).map(|(v, bi)| amp / s * v + bi).collect();
                let zero = SymMatrix::zeros(self.dim);
                map.factor()
                    * (inner.apply(y, amp * r + l, &pp, &xm.scale(amp / (s * s)))
                        - inner.apply(y, l, b, &zero))
            }
            OperatorKind::Frozen { inner, at } => {
                inner.apply(&at[..self.dim], 0.0, &vec![0.0; self.dim], xm)
            }
        }
    }

    /// True when `F` depends on `X` only.
    pub fn is_pure_second_order(&self) -> bool {
        match &self.kind {
            OperatorKind::Extremal { .. } => {
                self.params.b.is_zero() && self.params.mu == 0.0 && self.params.d.is_zero()
            }
            OperatorKind::TraceScaled { a } => a.is_constant(),
            OperatorKind::Frozen { .. } => true,
            OperatorKind::Companion(inner) => inner.is_pure_second_order(),
            _ => false,
        }
    }

    /// True for operators whose discretization is a sup or inf of monotone
    /// affine maps, so policy iteration applies.
    pub fn has_policy_structure(&self) -> bool {
        match &self.kind {
            OperatorKind::Extremal { .. } | OperatorKind::TraceScaled { .. } => true,
            OperatorKind::Custom(_) => false,
            OperatorKind::Companion(inner)
            | OperatorKind::Rescaled { inner, .. }
            | OperatorKind::Frozen { inner, .. } => inner.has_policy_structure(),
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            OperatorKind::Extremal { sign } => format!("L{sign}"),
            OperatorKind::TraceScaled { .. } => "a(x)·tr".into(),
            OperatorKind::Custom(c) => c.label.clone(),
            OperatorKind::Companion(inner) => format!("companion({})", inner.label()),
            OperatorKind::Rescaled { inner, .. } => format!("rescaled({})", inner.label()),
            OperatorKind::Frozen { inner, .. } => format!("frozen({})", inner.label()),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(invalid(format!("dimension must be 1 or 2, got {dim}")))
    }
}
