//! Finite-difference weights and sparse partial-derivative operators on a [`Grid2D`].
//!
//! Every derivative of order `m` uses the centered `2r+1` point stencil
//! (`r = (m+1)/2`) where it fits and a shifted one-sided `m+2` point stencil
//! near the boundary, so all operators are second-order accurate. Mixed
//! partials are tensor products of the 1D stencils.

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// Fornberg's weights for the `m`-th derivative at `z` from nodes `x`.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    assert!(n > m, "need more than {m} nodes for a derivative of order {m}");
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Minimum node count per axis for a derivative of order `m`.
pub fn min_nodes(m: usize) -> usize {
    m + 3
}

/// 1D stencil for the `m`-th derivative at node `i` of `n` nodes with spacing `h`:
/// returns the first node of the window and the weights.
pub fn stencil_1d(i: usize, m: usize, n: usize, h: f64) -> (usize, Vec<f64>) {
    if m == 0 {
        return (i, vec![1.0]);
    }
    let r = m.div_ceil(2);
    let (start, len) = if i >= r && i + r < n {
        (i - r, 2 * r + 1)
    } else {
        let len = m + 2;
        (if i < r { 0 } else { n - len }, len)
    };
    let offsets: Vec<f64> = (start..start + len).map(|k| k as f64 - i as f64).collect();
    let scale = h.powi(-(m as i32));
    let w = fd_weights(0.0, &offsets, m).into_iter().map(|w| w * scale).collect();
    (start, w)
}

/// Sparse linear operator acting on nodal vectors (CSR storage).
#[derive(Clone, Debug)]
pub struct DiffOp {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl DiffOp {
    /// `∂^(a+b) / ∂x1^a ∂x2^b`.
    pub fn partial(grid: &Grid2D, a: usize, b: usize) -> Result<Self> {
        let need = min_nodes(a).max(min_nodes(b));
        if (a > 0 && grid.nx < min_nodes(a)) || (b > 0 && grid.ny < min_nodes(b)) {
            return Err(Error::GridTooSmall {
                what: "derivative",
                nx: grid.nx,
                ny: grid.ny,
                min: need,
            });
        }
        let sx: Vec<_> = (0..grid.nx).map(|i| stencil_1d(i, a, grid.nx, grid.hx())).collect();
        let sy: Vec<_> = (0..grid.ny).map(|j| stencil_1d(j, b, grid.ny, grid.hy())).collect();
        let mut row_ptr = Vec::with_capacity(grid.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for j in 0..grid.ny {
            let (y0, wy) = &sy[j];
            for i in 0..grid.nx {
                let (x0, wx) = &sx[i];
                for (q, wq) in wy.iter().enumerate() {
                    for (p, wp) in wx.iter().enumerate() {
                        cols.push(grid.index(x0 + p, y0 + q));
                        vals.push(wp * wq);
                    }
                }
                row_ptr.push(cols.len());
            }
        }
        Ok(Self {
            n: grid.len(),
            row_ptr,
            cols,
            vals,
        })
    }

    /// `Σ c_k Op_k`, merging duplicate columns row by row.
    pub fn combine(terms: &[(f64, &DiffOp)]) -> Self {
        let n = terms[0].1.n;
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            row.clear();
            for (c, op) in terms {
                for k in op.row_ptr[r]..op.row_ptr[r + 1] {
                    row.push((op.cols[k], c * op.vals[k]));
                }
            }
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut v = 0.0;
                while k < row.len() && row[k].0 == col {
                    v += row[k].1;
                    k += 1;
                }
                cols.push(col);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn apply_row(&self, r: usize, x: &[f64]) -> f64 {
        self.row(r).map(|(c, w)| w * x[c]).sum()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| self.apply_row(r, x)).collect()
    }

    /// `out += Opᵀ y`.
    pub fn apply_transpose_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                for (c, w) in self.row(r) {
                    out[c] += w * yr;
                }
            }
        }
    }
}

/// The first and second partials used by the energy.
#[derive(Clone, Debug)]
pub struct PlateOps {
    pub d1: DiffOp,
    pub d2: DiffOp,
    pub d11: DiffOp,
    pub d12: DiffOp,
    pub d22: DiffOp,
}

impl PlateOps {
    pub fn new(grid: &Grid2D) -> Result<Self> {
        Ok(Self {
            d1: DiffOp::partial(grid, 1, 0)?,
            d2: DiffOp::partial(grid, 0, 1)?,
            d11: DiffOp::partial(grid, 2, 0)?,
            d12: DiffOp::partial(grid, 1, 1)?,
            d22: DiffOp::partial(grid, 0, 2)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn classic_weights() {
        assert!(close(&fd_weights(0.0, &[-1.0, 0.0, 1.0], 1), &[-0.5, 0.0, 0.5]));
        assert!(close(&fd_weights(0.0, &[-1.0, 0.0, 1.0], 2), &[1.0, -2.0, 1.0]));
        assert!(close(&fd_weights(0.0, &[0.0, 1.0, 2.0], 1), &[-1.5, 2.0, -0.5]));
        assert!(close(
            &fd_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 4),
            &[1.0, -4.0, 6.0, -4.0, 1.0]
        ));
        assert!(close(
            &fd_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 3),
            &[-0.5, 1.0, 0.0, -1.0, 0.5]
        ));
    }

    #[test]
    fn windows_stay_inside() {
        for m in 1..=4 {
            let n = min_nodes(m);
            for i in 0..n {
                let (s, w) = stencil_1d(i, m, n, 1.0);
                assert!(s <= i && i < s + w.len() && s + w.len() <= n);
            }
        }
    }

    #[test]
    fn one_sided_weights_are_exact_on_low_degree_polynomials() {
        let n = 9;
        for m in 1..=4 {
            for i in 0..n {
                let (s, w) = stencil_1d(i, m, n, 0.5);
                for deg in 0..=m + 1 {
                    let p = |x: f64| x.powi(deg as i32);
                    let approx: f64 = w.iter().enumerate().map(|(k, wk)| wk * p(0.5 * (s + k) as f64)).sum();
                    let xi = 0.5 * i as f64;
                    let exact = if deg < m {
                        0.0
                    } else {
                        (0..m).fold(1.0, |acc, t| acc * (deg - t) as f64) * xi.powi((deg - m) as i32)
                    };
                    assert!(
                        (approx - exact).abs() < 1e-8 * (1.0 + exact.abs()),
                        "m={m} i={i} deg={deg}"
                    );
                }
            }
        }
    }

    #[test]
    fn too_small_grid_is_rejected() {
        let g = Grid2D::unit_square(6).unwrap();
        assert!(DiffOp::partial(&g, 4, 0).is_err());
        assert!(DiffOp::partial(&g, 2, 2).is_ok());
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = Grid2D::new(0.0, 1.0, -1.0, 0.5, 7, 8).unwrap();
        let op = DiffOp::partial(&g, 1, 2).unwrap();
        let x: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.len()).map(|k| (k as f64 * 0.11).cos()).collect();
        let ax = op.apply(&x);
        let mut aty = vec![0.0; g.len()];
        op.apply_transpose_add(&y, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = aty.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }
}
