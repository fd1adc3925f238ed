use std::sync::Arc;

use serde::Serialize;

use crate::domain::Domain;
use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::rules::{Lattice, ScalarRule};

/// Subset of grid nodes a norm or extremum is taken over.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    All,
    Interior,
    Boundary,
    /// Closed ball; nodes with `|x − center| ≤ radius`.
    Ball { center: [f64; 2], radius: f64 },
    Nodes(Vec<usize>),
}

impl Region {
    pub fn ball(center: [f64; 2], radius: f64) -> Self {
        Region::Ball { center, radius }
    }

    pub fn indices(&self, grid: &Grid) -> Vec<usize> {
        match self {
            Region::All => (0..grid.len()).collect(),
            Region::Interior => grid.interior().collect(),
            Region::Boundary => grid.boundary().collect(),
            Region::Ball { center, radius } => {
                let n = grid.dim();
                let tol = 1e-12 * radius.max(grid.h());
                (0..grid.len())
                    .filter(|&k| {
                        let x = grid.point(k);
                        let d2: f64 = (0..n).map(|a| (x[a] - center[a]).powi(2)).sum();
                        d2.sqrt() <= radius + tol
                    })
                    .collect()
            }
            Region::Nodes(v) => v.clone(),
        }
    }
}

/// Scalar field sampled at the nodes of a grid.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at node {k}")));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        GridFunction {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        GridFunction {
            grid,
            values: vec![c; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.coords(k))).collect();
        GridFunction { grid, values }
    }

    /// Samples a rule; singular centers snap to this grid's cells.
    pub fn from_rule(grid: Arc<Grid>, rule: &ScalarRule) -> Result<Self> {
        let lat = lattice_of(&grid);
        let values = (0..grid.len())
            .map(|k| rule.eval_on(grid.coords(k), Some(lat)))
            .collect();
        GridFunction::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        if self.values.len() != other.values.len() {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(GridFunction {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    pub fn positive_part(&self) -> GridFunction {
        self.map(|v| v.max(0.0))
    }

    pub fn negative_part(&self) -> GridFunction {
        self.map(|v| (-v).max(0.0))
    }

    fn nonempty(&self, region: &Region) -> Result<Vec<usize>> {
        let idx = region.indices(&self.grid);
        if idx.is_empty() {
            Err(Error::EmptyRegion)
        } else {
            Ok(idx)
        }
    }

    /// Discrete `L^p` norm with weight `hⁿ` per lattice node; `p = ∞` gives
    /// the max norm over all region nodes.
    pub fn lp_norm(&self, p: f64, region: &Region) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(invalid(format!("L^p exponent must be ≥ 1, got {p}")));
        }
        let idx = self.nonempty(region)?;
        if p.is_infinite() {
            return Ok(idx.iter().map(|&k| self.values[k].abs()).fold(0.0, f64::max));
        }
        // scale by the max to keep |g|^p in range for large p
        let m = idx.iter().map(|&k| self.values[k].abs()).fold(0.0, f64::max);
        if m == 0.0 {
            return Ok(0.0);
        }
        let s: f64 = idx
            .iter()
            .map(|&k| self.grid.weight(k) * (self.values[k].abs() / m).powf(p))
            .sum();
        Ok(m * s.powf(1.0 / p))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn max_on(&self, region: &Region) -> Result<f64> {
        let idx = self.nonempty(region)?;
        Ok(idx.iter().map(|&k| self.values[k]).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn min_on(&self, region: &Region) -> Result<f64> {
        let idx = self.nonempty(region)?;
        Ok(idx.iter().map(|&k| self.values[k]).fold(f64::INFINITY, f64::min))
    }

    /// Node index of the largest value on the region.
    pub fn argmax_on(&self, region: &Region) -> Result<usize> {
        let idx = self.nonempty(region)?;
        Ok(*idx
            .iter()
            .max_by(|&&a, &&b| self.values[a].total_cmp(&self.values[b]))
            .expect("nonempty"))
    }

    /// CSV with one row per node: coordinates, then value.
    pub fn to_csv(&self) -> String {
        let n = self.grid.dim();
        let mut out = String::with_capacity(self.values.len() * 48);
        out.push_str(if n == 1 { "x,value\n" } else { "x,y,value\n" });
        for (k, v) in self.values.iter().enumerate() {
            let x = self.grid.point(k);
            for a in 0..n {
                out.push_str(&format!("{:.16e},", x[a]));
            }
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }

    /// Parses CSV written by [`GridFunction::to_csv`] for the same grid.
    pub fn from_csv(grid: Arc<Grid>, text: &str) -> Result<Self> {
        let n = grid.dim();
        let mut values = Vec::with_capacity(grid.len());
        for (line_no, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != n + 1 {
                return Err(Error::Parse(format!("line {}: expected {} columns", line_no + 1, n + 1)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", line_no + 1)))
            };
            let k = values.len();
            if k >= grid.len() {
                return Err(Error::GridMismatch("more rows than grid nodes".into()));
            }
            let x = grid.point(k);
            for a in 0..n {
                let c = parse(cols[a])?;
                if (c - x[a]).abs() > 1e-9 * grid.h() {
                    return Err(Error::GridMismatch(format!(
                        "row {k} is at a different node"
                    )));
                }
            }
            values.push(parse(cols[n])?);
        }
        GridFunction::new(grid, values)
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            domain: self.grid.domain().clone(),
            h: self.grid.h(),
            n: self.grid.dim(),
            nodes: self.grid.len(),
            interior_nodes: self.grid.n_interior(),
            linf: self.sup_norm(),
            l2: self.lp_norm(2.0, &Region::All).unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridHeader {
    pub domain: Domain,
    pub h: f64,
    pub n: usize,
    pub nodes: usize,
    pub interior_nodes: usize,
    pub linf: f64,
    pub l2: f64,
}

pub(crate) fn lattice_of(grid: &Grid) -> Lattice {
    Lattice {
        origin: grid.lattice_origin(),
        h: grid.h(),
        dim: grid.dim(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(h: f64) -> Arc<Grid> {
        Arc::new(Grid::new(Domain::interval(0.0, 1.0).unwrap(), h).unwrap())
    }

    #[test]
    fn lp_examples() {
        let g = unit(1.0 / 256.0);
        assert_eq!(GridFunction::zeros(g.clone()).lp_norm(3.0, &Region::All).unwrap(), 0.0);
        let one = GridFunction::constant(g.clone(), 1.0);
        assert!((one.lp_norm(4.0, &Region::All).unwrap() - 1.0).abs() < 4.0 / 256.0);
        let x = GridFunction::from_fn(g.clone(), |x| x[0]);
        let l2 = x.lp_norm(2.0, &Region::All).unwrap();
        assert!((l2 - 1.0 / 3f64.sqrt()).abs() < 2.0 / 256.0);
        let empty = Region::ball([5.0, 0.0], 0.1);
        assert!(matches!(x.lp_norm(2.0, &empty), Err(Error::EmptyRegion)));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let g = Arc::new(Grid::new(Domain::disc([0.1, 0.2], 0.7).unwrap(), 0.05).unwrap());
        let f = GridFunction::from_fn(g.clone(), |x| (x[0] * 3.3).sin() / (1.0 + x[1] * x[1]) + 1e-300);
        let back = GridFunction::from_csv(g, &f.to_csv()).unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn singular_cauchy_differences_shrink() {
        // κ|x − x₀|^{−0.4} with p = 4 in 2D is in L^p since 1.6 < 2
        let rule = ScalarRule::Singular {
            kappa: 1.0,
            s: 0.4,
            center: [0.5, 0.5],
        };
        let norms: Vec<f64> = [8.0, 16.0, 32.0, 64.0, 128.0]
            .iter()
            .map(|&m| {
                let g = Arc::new(Grid::new(Domain::unit_square(), 1.0 / m).unwrap());
                GridFunction::from_rule(g, &rule)
                    .unwrap()
                    .lp_norm(4.0, &Region::All)
                    .unwrap()
            })
            .collect();
        let diffs: Vec<f64> = norms.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for w in diffs.windows(2) {
            assert!(w[1] < w[0], "{norms:?}");
        }
    }

    proptest! {
        #[test]
        fn lp_monotone_and_homogeneous(
            vals in proptest::collection::vec(-5.0f64..5.0, 17),
            c in -3.0f64..3.0,
            p in 1.0f64..8.0,
            r in 0.05f64..0.6,
        ) {
            let g = unit(1.0 / 16.0);
            let f = GridFunction::new(g, vals).unwrap();
            let small = f.lp_norm(p, &Region::ball([0.5, 0.0], r)).unwrap();
            let large = f.lp_norm(p, &Region::All).unwrap();
            prop_assert!(small <= large * (1.0 + 1e-12));
            let scaled = f.scale(c).lp_norm(p, &Region::All).unwrap();
            prop_assert!((scaled - c.abs() * large).abs() <= 1e-12 * (1.0 + large));
        }
    }
}
