use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Symmetric `n×n` matrix with `n ≤ 3`, stored as its upper triangle
/// (row-major: `a11 a12 a13 a22 a23 a33`), so symmetry holds by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    upper: [f64; 6],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixNorm {
    #[default]
    Spectral,
    Frobenius,
}

fn slot(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    // offset of row i in the packed upper triangle
    i * n - i * (i + 1) / 2 + j
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=3).contains(&n), "SymMatrix supports n ∈ {{1,2,3}}");
        SymMatrix { n, upper: [0.0; 6] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from a full row-major matrix, rejecting asymmetric input.
    pub fn from_full(n: usize, a: &[f64]) -> Result<Self> {
        if a.len() != n * n {
            return Err(invalid("matrix entry count does not match n²"));
        }
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let (x, y) = (a[i * n + j], a[j * n + i]);
                if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                    return Err(invalid(format!("matrix is not symmetric at ({i},{j})")));
                }
                m.set(i, j, x);
            }
        }
        Ok(m)
    }

    /// 2×2 matrix `R(θ)·diag(e₁,e₂)·R(θ)ᵀ`.
    pub fn rotated_diag(theta: f64, e1: f64, e2: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let mut m = Self::zeros(2);
        m.set(0, 0, c * c * e1 + s * s * e2);
        m.set(1, 1, s * s * e1 + c * c * e2);
        m.set(0, 1, c * s * (e1 - e2));
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.upper[slot(self.n, i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = slot(self.n, i, j);
        self.upper[s] = v;
    }

    fn zip(&self, o: &SymMatrix, f: impl Fn(f64, f64) -> f64) -> SymMatrix {
        assert_eq!(self.n, o.n);
        let mut out = *self;
        for k in 0..6 {
            out.upper[k] = f(self.upper[k], o.upper[k]);
        }
        out
    }

    pub fn add(&self, o: &SymMatrix) -> SymMatrix {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &SymMatrix) -> SymMatrix {
        self.zip(o, |a, b| a - b)
    }

    pub fn scale(&self, t: f64) -> SymMatrix {
        let mut out = *self;
        out.upper.iter_mut().for_each(|v| *v *= t);
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// `tr(AX)` for symmetric `A`.
    pub fn trace_product(&self, a: &SymMatrix) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += a.get(i, j) * self.get(j, i);
            }
        }
        s
    }

    /// `θᵀXθ`
    pub fn quad(&self, theta: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += theta[i] * self.get(i, j) * theta[j];
            }
        }
        s
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.n {
            1 => vec![self.upper[0]],
            2 => {
                let (a, b, d) = (self.get(0, 0), self.get(0, 1), self.get(1, 1));
                let m = 0.5 * (a + d);
                let r = (0.5 * (a - d)).hypot(b);
                vec![m - r, m + r]
            }
            _ => jacobi_eigenvalues(self),
        }
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues().iter().map(|e| e.abs()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.get(i, j).powi(2);
            }
        }
        s.sqrt()
    }

    pub fn norm(&self, kind: MatrixNorm) -> f64 {
        match kind {
            MatrixNorm::Spectral => self.spectral_norm(),
            MatrixNorm::Frobenius => self.frobenius_norm(),
        }
    }
}

fn jacobi_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    let n = m.n;
    let mut a = [[0.0f64; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = m.get(i, j);
        }
    }
    for _ in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut e: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    e.sort_by(f64::total_cmp);
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packed_storage_is_symmetric() {
        let mut m = SymMatrix::zeros(3);
        m.set(2, 0, 5.0);
        assert_eq!(m.get(0, 2), 5.0);
        assert!(SymMatrix::from_full(2, &[1.0, 2.0, 3.0, 4.0]).is_err());
    }

    #[test]
    fn eigenvalues_closed_form_and_jacobi_agree() {
        let m = SymMatrix::rotated_diag(0.3, 2.0, -1.0);
        let e = m.eigenvalues();
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14);
        let m3 = SymMatrix::from_full(3, &[2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        let e3 = m3.eigenvalues();
        let s2 = 2f64.sqrt();
        for (a, b) in e3.iter().zip([2.0 - s2, 2.0, 2.0 + s2]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
