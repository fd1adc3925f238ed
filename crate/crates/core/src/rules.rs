//! Closed-form scalar rules `x ↦ value`, shared by coefficient fields,
//! right-hand sides and boundary data.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::snap_cell_center;

/// The lattice a rule is sampled on; singular centers snap to its cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub origin: [f64; 2],
    pub h: f64,
    pub dim: usize,
}

type RuleFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A user closure with a label for reports.
#[derive(Clone)]
pub struct CustomRule {
    pub label: String,
    pub f: Arc<RuleFn>,
}

impl CustomRule {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CustomRule {
            label: label.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for CustomRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomRule({})", self.label)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarRule {
    Constant {
        value: f64,
    },
    /// `a + b·x`
    Affine {
        a: f64,
        #[serde(default)]
        b: [f64; 2],
    },
    /// `½xᵀQx + g·x + c`
    Quadratic {
        q: [[f64; 2]; 2],
        #[serde(default)]
        g: [f64; 2],
        #[serde(default)]
        c: f64,
    },
    /// `A·Π sin(kπxᵢ)`
    SineProduct {
        amplitude: f64,
        #[serde(default = "one")]
        freq: f64,
    },
    /// `scale·|x − center|^exponent` with `exponent ≥ 0`.
    AbsPower {
        #[serde(default)]
        center: [f64; 2],
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `inside` on the closed ball, `outside` elsewhere.
    Step {
        inside: f64,
        outside: f64,
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    /// `κ|x − x₀|^{−s}` with x₀ snapped to the nearest lattice cell center.
    Singular {
        kappa: f64,
        s: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// `factor·inner(scale·x + center) + offset`
    Rescaled {
        inner: Box<ScalarRule>,
        scale: f64,
        #[serde(default)]
        center: [f64; 2],
        #[serde(default = "one")]
        factor: f64,
        #[serde(default)]
        offset: f64,
    },
    #[serde(skip)]
    Custom(CustomRule),
}

fn one() -> f64 {
    1.0
}

impl ScalarRule {
    pub fn constant(value: f64) -> Self {
        ScalarRule::Constant { value }
    }

    pub fn zero() -> Self {
        ScalarRule::constant(0.0)
    }

    pub fn custom(label: &str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarRule::Custom(CustomRule::new(label, f))
    }

    /// `factor·self(scale·x + center) + offset`
    pub fn rescaled(&self, scale: f64, center: [f64; 2], factor: f64, offset: f64) -> Self {
        ScalarRule::Rescaled {
            inner: Box::new(self.clone()),
            scale,
            center,
            factor,
            offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fin = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{what} must be finite")))
            }
        };
        match self {
            ScalarRule::Constant { value } => fin(*value, "constant"),
            ScalarRule::AbsPower { exponent, .. } if *exponent < 0.0 => Err(invalid(
                "abs_power needs a nonnegative exponent; use a singular rule instead",
            )),
            ScalarRule::Step { radius, .. } if *radius < 0.0 => {
                Err(invalid("step radius must be ≥ 0"))
            }
            ScalarRule::Singular { kappa, s, .. } => {
                fin(*kappa, "kappa")?;
                if *s < 0.0 {
                    return Err(invalid("singular exponent s must be ≥ 0"));
                }
                Ok(())
            }
            ScalarRule::Rescaled { inner, scale, .. } => {
                if !(*scale > 0.0) {
                    return Err(invalid("rescaled rule needs a positive scale"));
                }
                inner.validate()
            }
            _ => Ok(()),
        }
    }

    /// Unsnapped pointwise evaluation; singular rules return +∞ at the center.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_on(x, None)
    }

    /// Evaluation with singular centers snapped to cells of `lattice`.
    pub fn eval_on(&self, x: &[f64], lattice: Option<Lattice>) -> f64 {
        let n = x.len().min(2);
        let comp = |v: &[f64; 2], i: usize| if i < n { v[i] } else { 0.0 };
        let dist = |c: &[f64; 2]| -> f64 {
            (0..n).map(|i| (x[i] - c[i]).powi(2)).sum::<f64>().sqrt()
        };
        match self {
            ScalarRule::Constant { value } => *value,
            ScalarRule::Affine { a, b } => a + (0..n).map(|i| b[i] * x[i]).sum::<f64>(),
            ScalarRule::Quadratic { q, g, c } => {
                let mut v = *c;
                for i in 0..n {
                    v += g[i] * x[i];
                    for j in 0..n {
                        v += 0.5 * q[i][j] * x[i] * x[j];
                    }
                }
                v
            }
            ScalarRule::SineProduct { amplitude, freq } => {
                amplitude
                    * (0..n)
                        .map(|i| (freq * std::f64::consts::PI * x[i]).sin())
                        .product::<f64>()
            }
            ScalarRule::AbsPower {
                center,
                exponent,
                scale,
            } => {
                let r = dist(center);
                if r == 0.0 && *exponent == 0.0 {
                    *scale
                } else {
                    scale * r.powf(*exponent)
                }
            }
            ScalarRule::Step {
                inside,
                outside,
                center,
                radius,
            } => {
                if dist(center) <= *radius {
                    *inside
                } else {
                    *outside
                }
            }
            ScalarRule::Singular { kappa, s, center } => {
                let c = match lattice {
                    Some(l) => snap_cell_center(l.origin, l.h, l.dim, &center[..l.dim.min(2)]),
                    None => *center,
                };
                let r = dist(&c);
                if *s == 0.0 {
                    *kappa
                } else {
                    kappa * r.powf(-s)
                }
            }
            ScalarRule::Rescaled {
                inner,
                scale,
                center,
                factor,
                offset,
            } => {
                let mut y = [0.0; 2];
                for i in 0..n {
                    y[i] = scale * x[i] + comp(center, i);
                }
                let inner_lattice = lattice.map(|l| Lattice {
                    origin: [
                        center[0] + scale * l.origin[0],
                        center[1] + scale * l.origin[1],
                    ],
                    h: scale * l.h,
                    dim: l.dim,
                });
                factor * inner.eval_on(&y[..n], inner_lattice) + offset
            }
            ScalarRule::Custom(c) => (c.f)(x),
        }
    }

    /// Singular exponent of the worst singular component (0 if regular).
    pub fn singular_exponent(&self) -> f64 {
        match self {
            ScalarRule::Singular { kappa, s, .. } if *kappa != 0.0 => *s,
            ScalarRule::Rescaled { inner, factor, .. } if *factor != 0.0 => {
                inner.singular_exponent()
            }
            _ => 0.0,
        }
    }

    /// True when the rule is the same at every point.
    pub fn is_constant(&self) -> bool {
        match self {
            ScalarRule::Constant { .. } => true,
            ScalarRule::Affine { b, .. } => b == &[0.0, 0.0],
            ScalarRule::Singular { kappa, s, .. } => *kappa == 0.0 || *s == 0.0,
            ScalarRule::Rescaled { inner, factor, .. } => *factor == 0.0 || inner.is_constant(),
            _ => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScalarRule::Custom(c) => c.label.clone(),
            other => serde_json::to_string(other).unwrap_or_else(|_| "rule".into()),
        }
    }
}

impl Default for ScalarRule {
    fn default() -> Self {
        ScalarRule::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_affine() {
        let q = ScalarRule::Quadratic {
            q: [[2.0, 1.0], [1.0, -2.0]],
            g: [1.0, 0.0],
            c: 3.0,
        };
        // ½(2·1 + 2·1·2 − 2·4) + 1 + 3
        assert_eq!(q.eval(&[1.0, 2.0]), 3.0);
        let a = ScalarRule::Affine { a: 1.0, b: [1.0, 0.0] };
        assert_eq!(a.eval(&[0.25, 9.0]), 1.25);
    }

    #[test]
    fn rescaled_composes() {
        let base = ScalarRule::AbsPower {
            center: [0.0, 0.0],
            exponent: 2.0,
            scale: 1.0,
        };
        let r = base.rescaled(0.5, [1.0, 0.0], 3.0, 1.0);
        assert!((r.eval(&[2.0, 0.0]) - (3.0 * 4.0 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn singular_snapping_follows_lattice_map() {
        let s = ScalarRule::Singular {
            kappa: 1.0,
            s: 0.4,
            center: [0.0, 0.0],
        };
        let fine = Lattice {
            origin: [-1.0, -1.0],
            h: 0.25,
            dim: 2,
        };
        // same points seen through a rescaled lattice
        let r = s.rescaled(0.5, [0.25, 0.0], 1.0, 0.0);
        let coarse = Lattice {
            origin: [-2.5, -2.0],
            h: 0.5,
            dim: 2,
        };
        let x = [0.5, 0.5];
        let y = [0.5 * x[0] + 0.25, 0.5 * x[1]];
        assert!((r.eval_on(&x, Some(coarse)) - s.eval_on(&y, Some(fine))).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let r = ScalarRule::Step {
            inside: 2.0,
            outside: 1.0,
            center: [0.5, 0.5],
            radius: 0.25,
        };
        let s = serde_json::to_string(&r).unwrap();
        let back: ScalarRule = serde_json::from_str(&s).unwrap();
        assert_eq!(back.eval(&[0.5, 0.6]), 2.0);
    }
}
