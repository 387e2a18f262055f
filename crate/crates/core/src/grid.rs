//! Uniform tensor grids over a rectangle, node-sampled fields and trapezoid quadrature.

use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;

/// Uniform grid with nodes on the boundary. Node `(i, j)` has flat index `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid2D {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

pub const MIN_NODES: usize = 5;

impl Grid2D {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if !(x_min < x_max && y_min < y_max) {
            return Err(Error::InvalidGrid(format!(
                "empty rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        if nx < MIN_NODES || ny < MIN_NODES {
            return Err(Error::GridTooSmall {
                what: "grid",
                nx,
                ny,
                min: MIN_NODES,
            });
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, 0.0, 1.0, n, n)
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.nx {
            self.x_max
        } else {
            self.x_min + i as f64 * self.hx()
        }
    }

    pub fn y(&self, j: usize) -> f64 {
        if j + 1 == self.ny {
            self.y_max
        } else {
            self.y_min + j as f64 * self.hy()
        }
    }

    pub fn point(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.x(i), self.y(j))
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// Composite trapezoid weights, one per node.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let (hx, hy) = (self.hx(), self.hy());
        let wx = |i: usize| if i == 0 || i + 1 == self.nx { 0.5 * hx } else { hx };
        let wy = |j: usize| if j == 0 || j + 1 == self.ny { 0.5 * hy } else { hy };
        (0..self.len())
            .map(|k| {
                let (i, j) = self.ij(k);
                wx(i) * wy(j)
            })
            .collect()
    }

    pub fn same_as(&self, other: &Grid2D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Sample an expression at every node.
    pub fn sample(&self, e: &Expr) -> Result<GridField<f64>> {
        let mut values = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let (x1, x2) = self.point(k);
            let value = e.eval(x1, x2);
            if !value.is_finite() {
                let (i, j) = self.ij(k);
                return Err(Error::NonFinite { i, j, x1, x2, value });
            }
            values.push(value);
        }
        Ok(GridField { grid: *self, values })
    }
}

/// Per-node values of a scalar, vector or matrix field.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField<T> {
    pub grid: Grid2D,
    pub values: Vec<T>,
}

pub type ScalarField = GridField<f64>;
pub type VectorField = GridField<Vector2<f64>>;
pub type MatrixField = GridField<Matrix2<f64>>;
pub type Matrix3Field = GridField<Matrix3<f64>>;

impl<T: Clone> GridField<T> {
    pub fn new(grid: Grid2D, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn filled(grid: Grid2D, value: T) -> Self {
        Self {
            values: vec![value; grid.len()],
            grid,
        }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> T) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> GridField<U> {
        GridField {
            grid: self.grid,
            values: self.values.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U: Clone, V>(&self, other: &GridField<U>, mut f: impl FnMut(&T, &U) -> V) -> Result<GridField<V>> {
        self.grid.same_as(&other.grid)?;
        Ok(GridField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| f(a, b)).collect(),
        })
    }

    pub fn at(&self, i: usize, j: usize) -> &T {
        &self.values[self.grid.index(i, j)]
    }
}

impl GridField<f64> {
    pub fn zeros(grid: Grid2D) -> Self {
        Self::filled(grid, 0.0)
    }

    /// Trapezoid quadrature over the rectangle.
    pub fn integrate(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        neumaier_sum(self.values.iter().zip(&w).map(|(v, w)| v * w))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn integrate(f: &ScalarField) -> f64 {
    f.integrate()
}

/// Compensated summation; the result does not depend on the magnitude ordering of terms.
pub fn neumaier_sum(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid2D::new(0.0, 1.0, 0.0, 1.0, 4, 9).is_err());
        assert!(Grid2D::new(1.0, 1.0, 0.0, 1.0, 9, 9).is_err());
        assert!(Grid2D::new(0.0, f64::INFINITY, 0.0, 1.0, 9, 9).is_err());
    }

    #[test]
    fn samples_at_nodes() {
        let g = Grid2D::new(0.0, 1.0, 0.0, 2.0, 5, 5).unwrap();
        let one = g.sample(&Expr::one()).unwrap();
        assert!(one.values.iter().all(|&v| v == 1.0));
        let x = g.sample(&Expr::x1()).unwrap();
        assert_eq!(*x.at(0, 3), 0.0);
        assert_eq!(*x.at(2, 1), 0.5);
        assert_eq!(*x.at(4, 4), 1.0);
        let s = g.sample(&Expr::x1().sin()).unwrap();
        for k in 0..g.len() {
            assert_eq!(s.values[k], g.point(k).0.sin());
        }
    }

    #[test]
    fn sample_reports_failing_node() {
        let g = Grid2D::unit_square(5).unwrap();
        let e = Expr::parse("1/x1").unwrap();
        match g.sample(&e) {
            Err(Error::NonFinite { i, x1, .. }) => {
                assert_eq!(i, 0);
                assert_eq!(x1, 0.0);
            }
            other => panic!("expected a non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn trapezoid_is_exact_for_bilinear() {
        let g = Grid2D::new(0.0, 1.0, 0.0, 1.0, 7, 9).unwrap();
        assert!((g.sample(&Expr::one()).unwrap().integrate() - 1.0).abs() < 1e-15);
        assert!((g.sample(&Expr::x1()).unwrap().integrate() - 0.5).abs() < 1e-15);
        let xy = Expr::parse("x1*x2 + 3*x2").unwrap();
        assert!((g.sample(&xy).unwrap().integrate() - 1.75).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_second_order() {
        let e = Expr::parse("sin(pi*x1)*sin(pi*x2)").unwrap();
        let exact = 4.0 / std::f64::consts::PI.powi(2);
        let err = |n| (Grid2D::unit_square(n).unwrap().sample(&e).unwrap().integrate() - exact).abs();
        let ratio = err(17) / err(33);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn compensated_sum() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(v), 2.0);
    }
}
