//! Small sparse/banded linear solvers used by the Airy recovery and the
//! minimizer's preconditioner.

use crate::error::{Error, Result};

/// Symmetric positive-definite matrix stored by its lower band.
#[derive(Clone, Debug)]
pub struct BandedSpd {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Adds `v` to entry `(i, j)` (and, implicitly, `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        assert!(r - c <= self.bw, "entry ({i}, {j}) outside bandwidth {}", self.bw);
        self.data[r * (self.bw + 1) + (r - c)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[r * (self.bw + 1) + (r - c)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let lo = r.saturating_sub(self.bw);
            for c in lo..=r {
                let a = self.data[r * (self.bw + 1) + (r - c)];
                y[r] += a * x[c];
                if c != r {
                    y[c] += a * x[r];
                }
            }
        }
        y
    }

    /// In-place Cholesky factorization `A = L Lᵀ`.
    pub fn cholesky(mut self) -> Result<BandedCholesky> {
        let (n, bw) = (self.n, self.bw);
        let s = bw + 1;
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let mut sum = self.data[i * s + (i - j)];
                for k in lo..j {
                    sum -= self.data[i * s + (i - k)] * self.data[j * s + (j - k)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::Singular(format!("banded Cholesky pivot {i} is {sum:e}")));
                    }
                    self.data[i * s] = sum.sqrt();
                } else {
                    self.data[i * s + (i - j)] = sum / self.data[j * s];
                }
            }
        }
        Ok(BandedCholesky { factor: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandedCholesky {
    factor: BandedSpd,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let f = &self.factor;
        let (n, bw, s) = (f.n, f.bw, f.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut sum = y[i];
            for k in i.saturating_sub(bw)..i {
                sum -= f.data[i * s + (i - k)] * y[k];
            }
            y[i] = sum / f.data[i * s];
        }
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                sum -= f.data[k * s + (k - i)] * y[k];
            }
            y[i] = sum / f.data[i * s];
        }
        y
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for `A x = b`, `A` symmetric
/// positive definite and given by its action.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    diag: &[f64],
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let inv: Vec<f64> = diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::CgBreakdown {
                iterations: it,
                rel_residual: rel,
                tol,
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                rel_residual: rel,
            });
        }
        for k in 0..n {
            z[k] = r[k] * inv[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::CgBreakdown {
        iterations: max_iter,
        rel_residual: rel,
        tol,
    })
}

/// General sparse matrix in CSR form.
#[derive(Clone, Debug, Default)]
pub struct CsrMatrix {
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            row_ptr: vec![0],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Appends a row given as unsorted `(column, value)` pairs; repeated columns are summed.
    pub fn push_row(&mut self, entries: &mut [(usize, f64)]) {
        entries.sort_by_key(|e| e.0);
        let mut k = 0;
        while k < entries.len() {
            let col = entries[k].0;
            let mut v = 0.0;
            while k < entries.len() && entries[k].0 == col {
                v += entries[k].1;
                k += 1;
            }
            self.cols.push(col);
            self.vals.push(v);
        }
        self.row_ptr.push(self.cols.len());
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    /// `out += Aᵀ y`.
    pub fn mul_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.cols[k]] += self.vals[k] * yr;
            }
        }
    }

    /// Diagonal of `Aᵀ diag(w) A`.
    pub fn normal_diagonal(&self, w: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.ncols];
        for (r, &wr) in w.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[self.cols[k]] += wr * self.vals[k] * self.vals[k];
            }
        }
        d
    }
}
