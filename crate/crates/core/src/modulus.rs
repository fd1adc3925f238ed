use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Modulus of continuity ω, either `L·r` or `L·r^γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulus {
    Lipschitz { l: f64 },
    Power { gamma: f64, l: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusKind {
    Lipschitz,
    Power,
}

impl Default for Modulus {
    fn default() -> Self {
        Modulus::Lipschitz { l: 0.0 }
    }
}

/// Builds a modulus; `gamma` is ignored for the Lipschitz kind.
pub fn make_modulus(kind: ModulusKind, l: f64, gamma: f64) -> Result<Modulus> {
    let m = match kind {
        ModulusKind::Lipschitz => Modulus::Lipschitz { l },
        ModulusKind::Power => Modulus::Power { gamma, l },
    };
    m.validate()?;
    Ok(m)
}

impl Modulus {
    pub fn lipschitz(l: f64) -> Result<Self> {
        make_modulus(ModulusKind::Lipschitz, l, 1.0)
    }

    pub fn power(gamma: f64, l: f64) -> Result<Self> {
        make_modulus(ModulusKind::Power, l, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Modulus::Lipschitz { l } => {
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(invalid(format!("modulus constant must be ≥ 0, got {l}")));
                }
            }
            Modulus::Power { gamma, l } => {
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(invalid(format!("modulus constant must be ≥ 0, got {l}")));
                }
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(invalid(format!("power modulus needs γ ∈ (0,1], got {gamma}")));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match *self {
            Modulus::Lipschitz { l } => l * r,
            Modulus::Power { gamma, l } => {
                if r == 0.0 {
                    0.0
                } else {
                    l * r.powf(gamma)
                }
            }
        }
    }

    pub fn constant(&self) -> f64 {
        match *self {
            Modulus::Lipschitz { l } | Modulus::Power { l, .. } => l,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant() == 0.0
    }

    /// `r ↦ ω(a·r)/b`, which stays in the same family.
    pub fn rescale(&self, a: f64, b: f64) -> Modulus {
        match *self {
            Modulus::Lipschitz { l } => Modulus::Lipschitz { l: l * (a / b) },
            Modulus::Power { gamma, l } => Modulus::Power {
                gamma,
                l: l * a.powf(gamma) / b,
            },
        }
    }

    /// `ω(r)/r` for `r > 0`, used to freeze the zero-order term into a
    /// linear coefficient. Finite for every `r > 0`.
    pub fn secant(&self, r: f64) -> f64 {
        match *self {
            Modulus::Lipschitz { l } => l,
            Modulus::Power { gamma, l } => {
                if r <= 0.0 {
                    // the derivative blows up at 0; callers cap this
                    f64::INFINITY
                } else {
                    l * r.powf(gamma - 1.0)
                }
            }
        }
    }
}
