//! Sparse linear algebra for the policy-iteration systems: CSR storage,
//! banded LU for moderate bandwidths and ILU(0)-preconditioned BiCGSTAB for
//! the rest.
//!
//! The matrices are negated M-matrices in practice (monotone schemes), so
//! neither factorization pivots.

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        Csr {
            n,
            indptr,
            indices: Vec::with_capacity(nnz),
            data: Vec::with_capacity(nnz),
        }
    }

    /// Appends the next row; `entries` is sorted and merged in place.
    pub fn push_row(&mut self, entries: &mut [(usize, f64)]) {
        entries.sort_unstable_by_key(|e| e.0);
        let mut last = usize::MAX;
        for &(c, v) in entries.iter() {
            if c == last {
                *self.data.last_mut().expect("merged entry exists") += v;
            } else {
                self.indices.push(c);
                self.data.push(v);
                last = c;
            }
        }
        self.indptr.push(self.indices.len());
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.data[a..b])
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let (c, v) = self.row(i);
            *yi = c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    /// Largest `|i − j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).0.iter().map(move |&j| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }
}

/// LU factors of a banded matrix, stored row-wise over the band.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    a: Vec<f64>,
}

impl BandedLu {
    pub fn factor(m: &Csr) -> Result<Self> {
        let n = m.n;
        let bw = m.bandwidth();
        let w = 2 * bw + 1;
        let mut a = vec![0.0; n * w];
        for i in 0..n {
            let (c, v) = m.row(i);
            for (&j, &x) in c.iter().zip(v) {
                a[i * w + j + bw - i] = x;
            }
        }
        for k in 0..n {
            let piv = a[k * w + bw];
            if piv.abs() < 1e-300 || !piv.is_finite() {
                return Err(Error::LinearSolve(format!("zero pivot in banded LU at row {k}")));
            }
            let end = (k + bw).min(n - 1);
            for i in k + 1..=end {
                let ik = i * w + k + bw - i;
                let l = a[ik] / piv;
                a[ik] = l;
                if l == 0.0 {
                    continue;
                }
                // rows k and i overlap on columns k+1..=end
                let (ks, is) = (k * w + bw - k, i * w + bw - i);
                for j in k + 1..=end {
                    a[is + j] -= l * a[ks + j];
                }
            }
        }
        Ok(BandedLu { n, bw, a })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, 2 * self.bw + 1);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base = i * w + bw - i;
            let mut s = b[i];
            for j in lo..i {
                s -= self.a[base + j] * b[j];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let base = i * w + bw - i;
            let mut s = b[i];
            for j in i + 1..=hi {
                s -= self.a[base + j] * b[j];
            }
            b[i] = s / self.a[base + i];
        }
    }
}

/// Incomplete LU with the sparsity of the matrix itself.
#[derive(Clone, Debug)]
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn factor(m: &Csr) -> Result<Self> {
        let mut lu = m.clone();
        let n = m.n;
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            let (a, b) = (lu.indptr[i], lu.indptr[i + 1]);
            if let Some(p) = lu.indices[a..b].iter().position(|&j| j == i) {
                *d = a + p;
            } else {
                return Err(Error::LinearSolve(format!("row {i} has no diagonal entry")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (a, b) = (lu.indptr[i], lu.indptr[i + 1]);
            for p in a..b {
                pos[lu.indices[p]] = p;
            }
            for p in a..diag[i] {
                let k = lu.indices[p];
                let piv = lu.data[diag[k]];
                if piv.abs() < 1e-300 {
                    return Err(Error::LinearSolve(format!("zero pivot in ILU(0) at row {k}")));
                }
                let l = lu.data[p] / piv;
                lu.data[p] = l;
                for q in diag[k] + 1..lu.indptr[k + 1] {
                    let j = lu.indices[q];
                    let t = pos[j];
                    if t != usize::MAX {
                        lu.data[t] -= l * lu.data[q];
                    }
                }
            }
            for p in a..b {
                pos[lu.indices[p]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    pub fn apply(&self, b: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = b[i];
            for p in lu.indptr[i]..self.diag[i] {
                s -= lu.data[p] * b[lu.indices[p]];
            }
            b[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = b[i];
            for p in self.diag[i] + 1..lu.indptr[i + 1] {
                s -= lu.data[p] * b[lu.indices[p]];
            }
            b[i] = s / lu.data[self.diag[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB; returns the iteration count.
pub fn bicgstab(m: &Csr, pre: &Ilu0, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> Result<usize> {
    let n = m.n;
    let mut r = vec![0.0; n];
    m.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bn = norm(b).max(1e-300);
    if norm(&r) <= rtol * bn {
        return Ok(0);
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(Error::LinearSolve("BiCGSTAB breakdown (ρ = 0)".into()));
        }
        let beta = rho_new / rho * alpha / omega;
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        y.copy_from_slice(&p);
        pre.apply(&mut y);
        m.matvec(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= rtol * bn {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(it);
        }
        z.copy_from_slice(&s);
        pre.apply(&mut z);
        m.matvec(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= rtol * bn {
            return Ok(it);
        }
        if !omega.is_finite() || omega == 0.0 {
            return Err(Error::LinearSolve("BiCGSTAB breakdown (ω = 0)".into()));
        }
    }
    Err(Error::LinearSolve(format!("BiCGSTAB did not converge in {max_iter} iterations")))
}

/// Work estimate above which the iterative solver is used.
const BANDED_WORK_LIMIT: f64 = 2e8;

enum Factor {
    Banded(BandedLu),
    Ilu(Ilu0),
}

/// Solves `J x = b` for a sequence of matrices, reusing the factorization
/// while the matrix is unchanged.
#[derive(Default)]
pub struct LinearSolver {
    last: Option<(Csr, Factor)>,
    pub factorizations: usize,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "LinearSolver({} factorizations)", self.factorizations)
    }
}

impl LinearSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, m: Csr, b: &[f64]) -> Result<Vec<f64>> {
        let reuse = matches!(&self.last, Some((old, _)) if *old == m);
        if !reuse {
            let bw = m.bandwidth() as f64;
            let factor = if (m.n as f64) * bw * bw <= BANDED_WORK_LIMIT {
                Factor::Banded(BandedLu::factor(&m)?)
            } else {
                Factor::Ilu(Ilu0::factor(&m)?)
            };
            self.factorizations += 1;
            self.last = Some((m, factor));
        }
        let (m, factor) = self.last.as_ref().expect("factorization stored above");
        match factor {
            Factor::Banded(lu) => {
                let mut x = b.to_vec();
                lu.solve(&mut x);
                Ok(x)
            }
            Factor::Ilu(ilu) => {
                let mut x = vec![0.0; m.n];
                match bicgstab(m, ilu, b, &mut x, 1e-12, 4000) {
                    Ok(_) => Ok(x),
                    Err(_) => {
                        // slow but robust
                        let lu = BandedLu::factor(m)?;
                        let mut x = b.to_vec();
                        lu.solve(&mut x);
                        Ok(x)
                    }
                }
            }
        }
    }
}
