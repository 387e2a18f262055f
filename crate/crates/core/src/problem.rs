//! Plate data: thickness profile, growth tensor, material and grid, bundled with
//! the nodal samples and difference operators that every evaluation needs.

use nalgebra::{Matrix2, Matrix3, Vector2};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{Grid2D, GridField, ScalarField, VectorField};
use crate::material::{sym3, upper2, LameMaterial};
use crate::stencil::PlateOps;

/// Lower and upper thickness profiles; the plate occupies `-g1 < x3 < g2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThicknessPair {
    pub g1: Expr,
    pub g2: Expr,
}

impl ThicknessPair {
    pub fn new(g1: Expr, g2: Expr) -> Self {
        Self { g1, g2 }
    }

    pub fn uniform(half: f64) -> Self {
        Self::new(Expr::constant(half), Expr::constant(half))
    }

    /// `g1 + g2`, the total thickness.
    pub fn total(&self) -> Expr {
        &self.g1 + &self.g2
    }

    /// `g2 - g1`, twice the offset of the geometric mid-surface.
    pub fn offset(&self) -> Expr {
        &self.g2 - &self.g1
    }

    /// Checks positivity of both profiles at every node of `grid`.
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        for (name, e) in [("g1", &self.g1), ("g2", &self.g2)] {
            for k in 0..grid.len() {
                let (x1, x2) = grid.point(k);
                let value = e.eval(x1, x2);
                if !(value > 0.0) {
                    return Err(Error::NonPositiveThickness { name, x1, x2, value });
                }
            }
        }
        Ok(())
    }
}

pub type ExprMatrix3 = [[Expr; 3]; 3];

pub fn zero_matrix3() -> ExprMatrix3 {
    std::array::from_fn(|_| std::array::from_fn(|_| Expr::zero()))
}

pub fn const_matrix3(m: &Matrix3<f64>) -> ExprMatrix3 {
    std::array::from_fn(|r| std::array::from_fn(|c| Expr::constant(m[(r, c)])))
}

pub fn eval_matrix3(m: &ExprMatrix3, x1: f64, x2: f64) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c].eval(x1, x2))
}

pub fn diff_matrix3(m: &ExprMatrix3, axis: usize) -> ExprMatrix3 {
    std::array::from_fn(|r| std::array::from_fn(|c| m[r][c].d(axis)))
}

/// The prestrain `ε_g` and curvature `κ_g` of the growth tensor
/// `a^h = Id + h² ε_g + h x3 κ_g`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthTensor {
    pub eps: ExprMatrix3,
    pub kappa: ExprMatrix3,
}

impl GrowthTensor {
    pub fn zero() -> Self {
        Self {
            eps: zero_matrix3(),
            kappa: zero_matrix3(),
        }
    }

    pub fn new(eps: ExprMatrix3, kappa: ExprMatrix3) -> Self {
        Self { eps, kappa }
    }

    pub fn is_zero(&self) -> bool {
        self.eps.iter().chain(&self.kappa).flatten().all(Expr::is_zero)
    }

    pub fn eps_at(&self, x1: f64, x2: f64) -> Matrix3<f64> {
        eval_matrix3(&self.eps, x1, x2)
    }

    pub fn kappa_at(&self, x1: f64, x2: f64) -> Matrix3<f64> {
        eval_matrix3(&self.kappa, x1, x2)
    }
}

/// In-plane and out-of-plane displacement sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Displacement {
    pub w: VectorField,
    pub v: ScalarField,
}

impl Displacement {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            w: GridField::filled(grid, Vector2::zeros()),
            v: GridField::zeros(grid),
        }
    }

    pub fn grid(&self) -> Grid2D {
        self.v.grid
    }

    /// Flat layout `[w1 | w2 | v]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let n = self.v.values.len();
        let mut x = Vec::with_capacity(3 * n);
        x.extend(self.w.values.iter().map(|w| w[0]));
        x.extend(self.w.values.iter().map(|w| w[1]));
        x.extend_from_slice(&self.v.values);
        x
    }

    pub fn from_flat(grid: Grid2D, x: &[f64]) -> Result<Self> {
        let n = grid.len();
        if x.len() != 3 * n {
            return Err(Error::GridMismatch(format!(
                "flat displacement has {} entries, expected {}",
                x.len(),
                3 * n
            )));
        }
        Ok(Self {
            w: GridField {
                grid,
                values: (0..n).map(|k| Vector2::new(x[k], x[n + k])).collect(),
            },
            v: GridField {
                grid,
                values: x[2 * n..].to_vec(),
            },
        })
    }
}

/// Closed-form displacement, needed wherever exact derivatives are required.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementExpr {
    pub w: [Expr; 2],
    pub v: Expr,
}

impl DisplacementExpr {
    pub fn zero() -> Self {
        Self {
            w: [Expr::zero(), Expr::zero()],
            v: Expr::zero(),
        }
    }

    pub fn sample(&self, grid: &Grid2D) -> Result<Displacement> {
        let w1 = grid.sample(&self.w[0])?;
        let w2 = grid.sample(&self.w[1])?;
        Ok(Displacement {
            w: w1.zip_map(&w2, |a, b| Vector2::new(*a, *b))?,
            v: grid.sample(&self.v)?,
        })
    }
}

/// Everything needed to evaluate the limit energy on a grid.
#[derive(Clone, Debug)]
pub struct PlateProblem {
    grid: Grid2D,
    material: LameMaterial,
    thickness: ThicknessPair,
    growth: GrowthTensor,
    ops: PlateOps,
    weights: Vec<f64>,
    total: Vec<f64>,
    offset: Vec<f64>,
    offset_grad: Vec<Vector2<f64>>,
    stretch_target: Vec<Matrix2<f64>>,
    curvature_target: Vec<Matrix2<f64>>,
}

impl PlateProblem {
    pub fn new(grid: Grid2D, material: LameMaterial, thickness: ThicknessPair, growth: GrowthTensor) -> Result<Self> {
        thickness.validate(&grid)?;
        let ops = PlateOps::new(&grid)?;
        let total_e = thickness.total();
        let offset_e = thickness.offset();
        let offset_d = offset_e.grad();
        let mut total = Vec::with_capacity(grid.len());
        let mut offset = Vec::with_capacity(grid.len());
        let mut offset_grad = Vec::with_capacity(grid.len());
        let mut stretch_target = Vec::with_capacity(grid.len());
        let mut curvature_target = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let (x1, x2) = grid.point(k);
            let d = offset_e.eval(x1, x2);
            let eps = upper2(&sym3(&growth.eps_at(x1, x2)));
            let kap = upper2(&sym3(&growth.kappa_at(x1, x2)));
            let vals = [
                total_e.eval(x1, x2),
                d,
                offset_d[0].eval(x1, x2),
                offset_d[1].eval(x1, x2),
            ];
            if let Some(&value) = vals.iter().chain(eps.iter()).chain(kap.iter()).find(|v| !v.is_finite()) {
                let (i, j) = grid.ij(k);
                return Err(Error::NonFinite { i, j, x1, x2, value });
            }
            total.push(vals[0]);
            offset.push(d);
            offset_grad.push(Vector2::new(vals[2], vals[3]));
            stretch_target.push(eps + kap * (0.5 * d));
            curvature_target.push(kap);
        }
        Ok(Self {
            weights: grid.trapezoid_weights(),
            grid,
            material,
            thickness,
            growth,
            ops,
            total,
            offset,
            offset_grad,
            stretch_target,
            curvature_target,
        })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn material(&self) -> &LameMaterial {
        &self.material
    }

    pub fn thickness(&self) -> &ThicknessPair {
        &self.thickness
    }

    pub fn growth(&self) -> &GrowthTensor {
        &self.growth
    }

    pub fn ops(&self) -> &PlateOps {
        &self.ops
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `g1 + g2` at the nodes.
    pub fn total_thickness(&self) -> &[f64] {
        &self.total
    }

    /// `g2 - g1` at the nodes.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Exact `∇(g2 - g1)` at the nodes.
    pub fn offset_grad(&self) -> &[Vector2<f64>] {
        &self.offset_grad
    }

    /// `(sym ε_g)_2x2 + ½(g2 - g1)(sym κ_g)_2x2`, subtracted from the stretching strain.
    pub fn stretch_target(&self) -> &[Matrix2<f64>] {
        &self.stretch_target
    }

    /// `(sym κ_g)_2x2`, added to the bending strain.
    pub fn curvature_target(&self) -> &[Matrix2<f64>] {
        &self.curvature_target
    }

    /// The same plate on another grid.
    pub fn with_grid(&self, grid: Grid2D) -> Result<Self> {
        Self::new(grid, self.material, self.thickness.clone(), self.growth.clone())
    }
}
