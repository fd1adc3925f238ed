use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::gridfn::GridFunction;
use crate::rules::ScalarRule;

/// Nonnegative coefficient `x ↦ value`, possibly singular but in `L^p`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientField {
    pub rule: ScalarRule,
    /// Integrability exponent the field is declared in.
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    f64::INFINITY
}

impl CoefficientField {
    /// Checks the admissibility `s·p < n` for singular rules.
    pub fn new(rule: ScalarRule, p: f64, dim: usize) -> Result<Self> {
        rule.validate()?;
        if !(p >= 1.0) {
            return Err(invalid(format!("integrability exponent must be ≥ 1, got {p}")));
        }
        let s = rule.singular_exponent();
        if s > 0.0 {
            let product = s * p;
            if !(product < dim as f64) {
                return Err(Error::Inadmissible { product, dim });
            }
        }
        Ok(CoefficientField { rule, p })
    }

    pub fn constant(v: f64) -> Self {
        CoefficientField {
            rule: ScalarRule::constant(v),
            p: f64::INFINITY,
        }
    }

    pub fn zero() -> Self {
        CoefficientField::constant(0.0)
    }

    pub fn singular(kappa: f64, s: f64, center: [f64; 2], p: f64, dim: usize) -> Result<Self> {
        CoefficientField::new(ScalarRule::Singular { kappa, s, center }, p, dim)
    }

    pub fn custom(label: &str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        CoefficientField {
            rule: ScalarRule::custom(label, f),
            p: f64::INFINITY,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.rule.eval(x)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.rule, ScalarRule::Constant { value } if value == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.rule.is_constant()
    }

    /// `factor·self(scale·x + center) + offset`, keeping the exponent.
    pub fn rescaled(&self, scale: f64, center: [f64; 2], factor: f64, offset: f64) -> Self {
        CoefficientField {
            rule: self.rule.rescaled(scale, center, factor, offset),
            p: self.p,
        }
    }

    /// Samples at every node, singular centers snapped off-node.
    pub fn sample(&self, grid: &Arc<Grid>) -> Result<GridFunction> {
        let g = GridFunction::from_rule(grid.clone(), &self.rule)?;
        if let Some(k) = g.values().iter().position(|&v| v < 0.0) {
            return Err(invalid(format!(
                "coefficient is negative ({}) at node {k}",
                g.get(k)
            )));
        }
        Ok(g)
    }
}

/// Free-function form of [`CoefficientField::sample`].
pub fn sample_coefficient(field: &CoefficientField, grid: &Arc<Grid>) -> Result<GridFunction> {
    field.sample(grid)
}
