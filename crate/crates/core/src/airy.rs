//! Airy stress potential: `cof ∇²Φ` equals the in-plane stress resultant
//! `N = (g1 + g2) L2(E)`. `Φ` is reconstructed by weighted least squares on
//! its Hessian with the clamped conditions `Φ = ∂ₙΦ = 0` on the boundary.

use nalgebra::Matrix2;

use crate::energy::strains;
use crate::error::{Error, Result};
use crate::grid::{Grid2D, MatrixField, ScalarField};
use crate::linalg::{conjugate_gradient, CsrMatrix};
use crate::material::cof2;
use crate::problem::{Displacement, PlateProblem};
use crate::stencil::{min_nodes, DiffOp};

/// Relative tolerance of the normal-equation solve.
pub const AIRY_CG_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct AiryField {
    pub phi: ScalarField,
    /// The prescribed Hessian `M = cof N`.
    pub target_m: MatrixField,
    /// `‖∇²Φ − M‖` in the discrete L² norm.
    pub ls_residual: f64,
    pub cg_iterations: usize,
}

/// In-plane stress resultant `N = (g1 + g2) L2(E)` at the nodes.
pub fn stress_resultant(p: &PlateProblem, d: &Displacement) -> Result<MatrixField> {
    p.grid().same_as(&d.grid())?;
    let s = strains(p, &d.to_flat());
    let mat = p.material();
    Ok(MatrixField {
        grid: *p.grid(),
        values: s
            .stretch
            .iter()
            .zip(p.total_thickness())
            .map(|(e, g)| mat.l2_stress(e) * *g)
            .collect(),
    })
}

/// Inverts `cof M = N` pointwise.
pub fn hessian_target(stress: &MatrixField) -> MatrixField {
    stress.map(cof2)
}

pub fn airy_from_displacement(p: &PlateProblem, d: &Displacement) -> Result<AiryField> {
    airy_least_squares(&hessian_target(&stress_resultant(p, d)?))
}

/// Maps a node index along one axis to `(unknown index, coefficient)`.
///
/// Unknowns live on nodes `2..=n-3`. The boundary node is zero and the first
/// interior node is a quarter of its neighbour, which makes the one-sided
/// normal derivative at the boundary vanish.
fn axis_map(i: usize, n: usize) -> Option<(usize, f64)> {
    if i == 0 || i + 1 == n {
        None
    } else if i == 1 {
        Some((0, 0.25))
    } else if i + 2 == n {
        Some((n - 5, 0.25))
    } else {
        Some((i - 2, 1.0))
    }
}

/// Clamped least-squares fit of `Φ` to a target Hessian `M`.
pub fn airy_least_squares(target: &MatrixField) -> Result<AiryField> {
    let grid = target.grid;
    if grid.nx < min_nodes(4) || grid.ny < min_nodes(4) {
        return Err(Error::GridTooSmall {
            what: "Airy least-squares",
            nx: grid.nx,
            ny: grid.ny,
            min: min_nodes(4),
        });
    }
    let (mx, my) = (grid.nx - 4, grid.ny - 4);
    let n_unknown = mx * my;
    let prolong = |k: usize| -> Option<(usize, f64)> {
        let (i, j) = grid.ij(k);
        let (a, ca) = axis_map(i, grid.nx)?;
        let (b, cb) = axis_map(j, grid.ny)?;
        Some((b * mx + a, ca * cb))
    };

    let parts = [
        (DiffOp::partial(&grid, 2, 0)?, 1.0),
        (DiffOp::partial(&grid, 1, 1)?, 2.0),
        (DiffOp::partial(&grid, 0, 2)?, 1.0),
    ];
    let weights = grid.trapezoid_weights();
    let mut a = CsrMatrix::new(n_unknown);
    let mut row_w = Vec::with_capacity(3 * grid.len());
    let mut rhs_rows = Vec::with_capacity(3 * grid.len());
    let mut entries = Vec::new();
    for (c, (op, factor)) in parts.iter().enumerate() {
        for r in 0..grid.len() {
            entries.clear();
            for (col, w) in op.row(r) {
                if let Some((u, coef)) = prolong(col) {
                    entries.push((u, w * coef));
                }
            }
            a.push_row(&mut entries);
            row_w.push(weights[r] * factor);
            let m = &target.values[r];
            rhs_rows.push(match c {
                0 => m[(0, 0)],
                1 => 0.5 * (m[(0, 1)] + m[(1, 0)]),
                _ => m[(1, 1)],
            });
        }
    }
    let weighted: Vec<f64> = rhs_rows.iter().zip(&row_w).map(|(m, w)| m * w).collect();
    let mut rhs = vec![0.0; n_unknown];
    a.mul_transpose_add(&weighted, &mut rhs);
    let diag = a.normal_diagonal(&row_w);
    let apply = |u: &[f64]| {
        let au: Vec<f64> = a.mul(u).iter().zip(&row_w).map(|(x, w)| x * w).collect();
        let mut out = vec![0.0; n_unknown];
        a.mul_transpose_add(&au, &mut out);
        out
    };
    let out = conjugate_gradient(apply, &diag, &rhs, AIRY_CG_TOL, 50 * n_unknown.max(100))?;

    let mut phi = ScalarField::zeros(grid);
    for k in 0..grid.len() {
        if let Some((u, coef)) = prolong(k) {
            phi.values[k] = coef * out.x[u];
        }
    }
    let ls_residual = hessian_misfit(&grid, &phi, target, &weights)?;
    Ok(AiryField {
        phi,
        target_m: target.clone(),
        ls_residual,
        cg_iterations: out.iterations,
    })
}

fn hessian_misfit(grid: &Grid2D, phi: &ScalarField, target: &MatrixField, weights: &[f64]) -> Result<f64> {
    let h = crate::ops::hessian(phi)?;
    let sum: f64 = (0..grid.len())
        .map(|k| {
            let diff: Matrix2<f64> = h.values[k] - target.values[k];
            weights[k] * diff.norm_squared()
        })
        .sum();
    Ok(sum.sqrt())
}
