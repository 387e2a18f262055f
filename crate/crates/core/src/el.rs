//! Strong-form Euler–Lagrange residuals and natural boundary residuals of the
//! limit energy, expressed through the Airy potential `Φ`.
//!
//! With `g = g1 + g2`, `G = g³`, `d = g2 − g1`, `κ = (sym κ_g)_2x2` and
//! `P = κ + ν cof κ`, the system obtained by varying the energy reads
//!
//! ```text
//! r1 = Δ²Φ / g + ζ(Φ) + S (K_G + λ_g)
//! r2 = B G Δ²v + B η(v) + B Ω_g + B G divdiv P − [Φ, v] − ½ ξ(Φ)
//! ```
//!
//! where `η = 2 ∇G·∇Δv + ∇²G : (∇²v + ν cof ∇²v)`, `Ω_g = ∇²G : P + 2 ∇G · div P`
//! and `ξ = [Φ, d]`. The variant in [`printed`] keeps the alternative
//! published coefficients; both agree for uniform thickness and constant
//! curvature. Thickness and growth derivatives are exact, derivatives of
//! `v` and `Φ` use the grid stencils.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::airy::{airy_from_displacement, AiryField};
use crate::error::Result;
use crate::expr::Expr;
use crate::grid::{Grid2D, MatrixField, ScalarField, VectorField};
use crate::material::{cof2, sym2};
use crate::ops::{self, curl_t_curl, hessian, partial};
use crate::problem::{Displacement, PlateProblem};

/// Which coefficient set to use for the strong residuals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ElSystem {
    /// Coefficients obtained by varying the discrete-consistent energy.
    Consistent,
    /// The alternative published coefficients.
    Printed,
}

/// Fraction of each side excluded from interior norms.
pub const INTERIOR_MARGIN: f64 = 0.125;

/// Exact nodal samples of a scalar expression with its gradient and Hessian.
struct Sampled {
    value: Vec<f64>,
    grad: Vec<Vector2<f64>>,
    hess: Vec<Matrix2<f64>>,
}

fn sample_with_derivatives(grid: &Grid2D, e: &Expr) -> Result<Sampled> {
    let g = e.grad();
    let h = e.hessian();
    let mut out = Sampled {
        value: grid.sample(e)?.values,
        grad: Vec::with_capacity(grid.len()),
        hess: Vec::with_capacity(grid.len()),
    };
    for k in 0..grid.len() {
        let (x1, x2) = grid.point(k);
        out.grad.push(Vector2::new(g[0].eval(x1, x2), g[1].eval(x1, x2)));
        out.hess.push(Matrix2::from_fn(|r, c| h[r][c].eval(x1, x2)));
    }
    Ok(out)
}

/// `(sym κ_g)_2x2` as expressions.
fn curvature_exprs(p: &PlateProblem) -> [[Expr; 2]; 2] {
    let k = &p.growth().kappa;
    let off = 0.5 * (&k[0][1] + &k[1][0]);
    [[k[0][0].clone(), off.clone()], [off, k[1][1].clone()]]
}

/// `κ + ν cof κ` as expressions.
fn moment_exprs(p: &PlateProblem) -> [[Expr; 2]; 2] {
    let nu = p.material().poisson_ratio();
    let [[k11, k12], [_, k22]] = curvature_exprs(p);
    let off = (1.0 - nu) * k12;
    [[&k11 + &(nu * k22.clone()), off.clone()], [off, k22 + nu * k11]]
}

/// Row-wise divergence and double divergence of an expression matrix, sampled.
fn exact_div(grid: &Grid2D, m: &[[Expr; 2]; 2]) -> Result<(Vec<Vector2<f64>>, Vec<f64>)> {
    let rows: [Expr; 2] = std::array::from_fn(|r| m[r][0].d1() + m[r][1].d2());
    let divdiv = rows[0].d1() + rows[1].d2();
    let a = grid.sample(&rows[0])?.values;
    let b = grid.sample(&rows[1])?.values;
    let div = a.into_iter().zip(b).map(|(x, y)| Vector2::new(x, y)).collect();
    Ok((div, grid.sample(&divdiv)?.values))
}

fn sample_matrix(grid: &Grid2D, m: &[[Expr; 2]; 2]) -> Vec<Matrix2<f64>> {
    (0..grid.len())
        .map(|k| {
            let (x1, x2) = grid.point(k);
            Matrix2::from_fn(|r, c| m[r][c].eval(x1, x2))
        })
        .collect()
}

fn grad_laplacian(f: &ScalarField) -> Result<VectorField> {
    let a = partial(f, 3, 0)?.values;
    let b = partial(f, 1, 2)?.values;
    let c = partial(f, 2, 1)?.values;
    let d = partial(f, 0, 3)?.values;
    Ok(VectorField {
        grid: f.grid,
        values: (0..a.len()).map(|k| Vector2::new(a[k] + b[k], c[k] + d[k])).collect(),
    })
}

/// `K_G = det ∇²v`.
pub fn gauss_curvature(v: &ScalarField) -> Result<ScalarField> {
    Ok(hessian(v)?.map(|m| m.determinant()))
}

fn lambda_from(
    p: &PlateProblem,
    v: &ScalarField,
    build: impl Fn(usize, Vector2<f64>) -> Matrix2<f64>,
) -> Result<ScalarField> {
    p.grid().same_as(&v.grid)?;
    let gv = ops::grad(v)?;
    let m = MatrixField {
        grid: *p.grid(),
        values: (0..p.grid().len()).map(|k| build(k, gv.values[k])).collect(),
    };
    curl_t_curl(&m)
}

/// `λ_g = curlᵀcurl((sym ε_g)_2x2 + ½(g2−g1)(sym κ_g)_2x2 − ½ sym(∇v ⊗ ∇(g2−g1)))`.
pub fn lambda_g(p: &PlateProblem, v: &ScalarField) -> Result<ScalarField> {
    lambda_from(p, v, |k, gv| {
        p.stretch_target()[k] - sym2(&(gv * p.offset_grad()[k].transpose())) * 0.5
    })
}

/// `ζ(Φ) = 2∇(1/g)·∇ΔΦ + (S/2μ) ∇²(1/g) : ∇²Φ − ν Δ(1/g) ΔΦ`.
pub fn zeta(p: &PlateProblem, phi: &ScalarField) -> Result<ScalarField> {
    let grid = p.grid();
    grid.same_as(&phi.grid)?;
    let inv = sample_with_derivatives(grid, &(Expr::one() / p.thickness().total()))?;
    let mat = p.material();
    let (s_over, nu) = (mat.young_modulus() / (2.0 * mat.mu()), mat.poisson_ratio());
    let gl = grad_laplacian(phi)?;
    let h = hessian(phi)?;
    Ok(ScalarField {
        grid: *grid,
        values: (0..grid.len())
            .map(|k| {
                let hk = &h.values[k];
                2.0 * inv.grad[k].dot(&gl.values[k]) + s_over * inv.hess[k].component_mul(hk).sum()
                    - nu * inv.hess[k].trace() * hk.trace()
            })
            .collect(),
    })
}

fn eta_with(p: &PlateProblem, v: &ScalarField, grad_weight: f64) -> Result<ScalarField> {
    let grid = p.grid();
    grid.same_as(&v.grid)?;
    let big_g = sample_with_derivatives(grid, &p.thickness().total().powi(3))?;
    let nu = p.material().poisson_ratio();
    let gl = grad_laplacian(v)?;
    let h = hessian(v)?;
    Ok(ScalarField {
        grid: *grid,
        values: (0..grid.len())
            .map(|k| {
                let hk = &h.values[k];
                grad_weight * big_g.grad[k].dot(&gl.values[k])
                    + big_g.hess[k].component_mul(&(hk + cof2(hk) * nu)).sum()
            })
            .collect(),
    })
}

/// `η(v) = 2 ∇G · ∇Δv + ∇²G : (∇²v + ν cof ∇²v)` with `G = (g1 + g2)³`.
pub fn eta(p: &PlateProblem, v: &ScalarField) -> Result<ScalarField> {
    eta_with(p, v, 2.0)
}

/// `ξ(Φ) = [Φ, g2 − g1]`.
pub fn xi(p: &PlateProblem, phi: &ScalarField) -> Result<ScalarField> {
    let grid = p.grid();
    grid.same_as(&phi.grid)?;
    let d = sample_with_derivatives(grid, &p.thickness().offset())?;
    let h = hessian(phi)?;
    Ok(ScalarField {
        grid: *grid,
        values: (0..grid.len())
            .map(|k| h.values[k].component_mul(&cof2(&d.hess[k])).sum())
            .collect(),
    })
}

/// `Ω_g = ∇²G : P + 2 ∇G · div P` with `P = κ + ν cof κ`; vanishes for uniform thickness.
pub fn omega_g(p: &PlateProblem) -> Result<ScalarField> {
    let grid = p.grid();
    let big_g = sample_with_derivatives(grid, &p.thickness().total().powi(3))?;
    let moment = moment_exprs(p);
    let pm = sample_matrix(grid, &moment);
    let (div, _) = exact_div(grid, &moment)?;
    Ok(ScalarField {
        grid: *grid,
        values: (0..grid.len())
            .map(|k| big_g.hess[k].component_mul(&pm[k]).sum() + 2.0 * big_g.grad[k].dot(&div[k]))
            .collect(),
    })
}

/// `G divdiv(κ + ν cof κ)`, the curvature load present for any thickness.
pub fn curvature_load(p: &PlateProblem) -> Result<ScalarField> {
    let grid = p.grid();
    let (_, divdiv) = exact_div(grid, &moment_exprs(p))?;
    Ok(ScalarField {
        grid: *grid,
        values: divdiv
            .iter()
            .zip(p.total_thickness())
            .map(|(a, g)| a * g.powi(3))
            .collect(),
    })
}

/// The alternative published coefficient set.
pub mod printed {
    use super::*;

    /// `λ_g = curlᵀcurl((sym ε_g)_2x2 − ½(g2−g1)(sym κ_g)_2x2 + ½ ∇v ⊗ ∇(g2−g1))`.
    pub fn lambda_g(p: &PlateProblem, v: &ScalarField) -> Result<ScalarField> {
        let grid = *p.grid();
        let eps = sample_matrix(&grid, &{
            let e = &p.growth().eps;
            let off = 0.5 * (&e[0][1] + &e[1][0]);
            [[e[0][0].clone(), off.clone()], [off, e[1][1].clone()]]
        });
        lambda_from(p, v, |k, gv| {
            eps[k] - p.curvature_target()[k] * (0.5 * p.offset()[k]) + gv * p.offset_grad()[k].transpose() * 0.5
        })
    }

    /// `η(v) = ∇G · div ∇²v + ∇²G : (∇²v + ν cof ∇²v)`.
    pub fn eta(p: &PlateProblem, v: &ScalarField) -> Result<ScalarField> {
        eta_with(p, v, 1.0)
    }

    /// `g [Φ, u] + ∇gᵀ cof ∇²Φ ∇u` for a sampled `u` with exact or stencil derivatives.
    fn weighted_bracket(
        p: &PlateProblem,
        phi: &ScalarField,
        u_grad: &[Vector2<f64>],
        u_hess: &[Matrix2<f64>],
    ) -> Result<ScalarField> {
        let grid = p.grid();
        let g = sample_with_derivatives(grid, &p.thickness().total())?;
        let h = hessian(phi)?;
        Ok(ScalarField {
            grid: *grid,
            values: (0..grid.len())
                .map(|k| {
                    let c = cof2(&h.values[k]);
                    g.value[k] * u_hess[k].component_mul(&c).sum() + g.grad[k].dot(&(c * u_grad[k]))
                })
                .collect(),
        })
    }

    /// `ξ(Φ) = g [Φ, g2 − g1] + ∇gᵀ cof ∇²Φ ∇(g2 − g1)`.
    pub fn xi(p: &PlateProblem, phi: &ScalarField) -> Result<ScalarField> {
        let d = sample_with_derivatives(p.grid(), &p.thickness().offset())?;
        weighted_bracket(p, phi, &d.grad, &d.hess)
    }

    /// `g [Φ, v] + ∇gᵀ cof ∇²Φ ∇v`.
    pub fn stretch_coupling(p: &PlateProblem, phi: &ScalarField, v: &ScalarField) -> Result<ScalarField> {
        let gv = ops::grad(v)?;
        let hv = hessian(v)?;
        weighted_bracket(p, phi, &gv.values, &hv.values)
    }

    /// `Ω_g = ∇²G : (κ + ν cof κ) + ∇G · div κ`.
    pub fn omega_g(p: &PlateProblem) -> Result<ScalarField> {
        let grid = p.grid();
        let big_g = sample_with_derivatives(grid, &p.thickness().total().powi(3))?;
        let pm = sample_matrix(grid, &moment_exprs(p));
        let (div, _) = exact_div(grid, &curvature_exprs(p))?;
        Ok(ScalarField {
            grid: *grid,
            values: (0..grid.len())
                .map(|k| big_g.hess[k].component_mul(&pm[k]).sum() + big_g.grad[k].dot(&div[k]))
                .collect(),
        })
    }
}

/// Strong residual fields together with the Airy potential they were built from.
#[derive(Clone, Debug)]
pub struct ElResiduals {
    pub r1: ScalarField,
    pub r2: ScalarField,
    pub airy: AiryField,
}

pub fn el_residuals(p: &PlateProblem, d: &Displacement, system: ElSystem) -> Result<ElResiduals> {
    let airy = airy_from_displacement(p, d)?;
    el_residuals_with(p, d, airy, system)
}

pub fn el_residuals_with(p: &PlateProblem, d: &Displacement, airy: AiryField, system: ElSystem) -> Result<ElResiduals> {
    let grid = *p.grid();
    grid.same_as(&d.grid())?;
    let phi = &airy.phi;
    let v = &d.v;
    let mat = p.material();
    let (s, b) = (mat.young_modulus(), mat.bending_stiffness());
    let bih_phi = ops::biharmonic(phi)?;
    let bih_v = ops::biharmonic(v)?;
    let kg = gauss_curvature(v)?;
    let z = zeta(p, phi)?;
    let g = p.total_thickness();
    let (lam, eta_f, omega, coupling, xi_f, load) = match system {
        ElSystem::Consistent => {
            let hv = hessian(v)?;
            let hphi = hessian(phi)?;
            let bracket = hv.zip_map(&hphi, |a, c| a.component_mul(&cof2(c)).sum())?;
            (
                lambda_g(p, v)?,
                eta(p, v)?,
                omega_g(p)?,
                bracket,
                xi(p, phi)?,
                curvature_load(p)?,
            )
        }
        ElSystem::Printed => (
            printed::lambda_g(p, v)?,
            printed::eta(p, v)?,
            printed::omega_g(p)?,
            printed::stretch_coupling(p, phi, v)?,
            printed::xi(p, phi)?,
            ScalarField::zeros(grid),
        ),
    };
    let n = grid.len();
    let r1 = (0..n)
        .map(|k| bih_phi.values[k] / g[k] + z.values[k] + s * (kg.values[k] + lam.values[k]))
        .collect();
    let r2 = (0..n)
        .map(|k| {
            b * (g[k].powi(3) * bih_v.values[k] + eta_f.values[k] + omega.values[k] + load.values[k])
                - coupling.values[k]
                - 0.5 * xi_f.values[k]
        })
        .collect();
    Ok(ElResiduals {
        r1: ScalarField { grid, values: r1 },
        r2: ScalarField { grid, values: r2 },
        airy,
    })
}

/// Discrete L² norm over the nodes of the inset rectangle that excludes a
/// fraction `margin` of each side.
pub fn interior_l2(f: &ScalarField, margin: f64) -> f64 {
    let grid = &f.grid;
    let (lx, ly) = (grid.x_max - grid.x_min, grid.y_max - grid.y_min);
    let inside = |x: f64, y: f64| {
        x >= grid.x_min + margin * lx - 1e-12
            && x <= grid.x_max - margin * lx + 1e-12
            && y >= grid.y_min + margin * ly - 1e-12
            && y <= grid.y_max - margin * ly + 1e-12
    };
    let cell = grid.hx() * grid.hy();
    (0..grid.len())
        .filter_map(|k| {
            let (x, y) = grid.point(k);
            inside(x, y).then(|| f.values[k] * f.values[k] * cell)
        })
        .sum::<f64>()
        .sqrt()
}

/// Sup-norms over boundary nodes (corners excluded) of the three natural
/// boundary conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryResiduals {
    /// `max(|Φ|, |∂ₙΦ|)`.
    pub b1: f64,
    /// `Ψ : n⊗n + ν Ψ : τ⊗τ` with `Ψ = ∇²v + (sym κ_g)_2x2`.
    pub b2: f64,
    /// `(1−ν) ∂τ(G Ψ : n⊗τ) + div(G (Ψ + ν cof Ψ)) · n`.
    pub b3: f64,
}

pub fn boundary_residuals(p: &PlateProblem, d: &Displacement) -> Result<BoundaryResiduals> {
    let airy = airy_from_displacement(p, d)?;
    boundary_residuals_with(p, d, &airy)
}

#[derive(Clone, Copy)]
enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    fn normal(self) -> Vector2<f64> {
        match self {
            Edge::Left => Vector2::new(-1.0, 0.0),
            Edge::Right => Vector2::new(1.0, 0.0),
            Edge::Bottom => Vector2::new(0.0, -1.0),
            Edge::Top => Vector2::new(0.0, 1.0),
        }
    }

    /// Nodes of the edge without its corners.
    fn nodes(self, grid: &Grid2D) -> Vec<(usize, usize)> {
        let (nx, ny) = (grid.nx, grid.ny);
        match self {
            Edge::Left => (1..ny - 1).map(|j| (0, j)).collect(),
            Edge::Right => (1..ny - 1).map(|j| (nx - 1, j)).collect(),
            Edge::Bottom => (1..nx - 1).map(|i| (i, 0)).collect(),
            Edge::Top => (1..nx - 1).map(|i| (i, ny - 1)).collect(),
        }
    }
}

pub fn boundary_residuals_with(p: &PlateProblem, d: &Displacement, airy: &AiryField) -> Result<BoundaryResiduals> {
    let grid = *p.grid();
    grid.same_as(&d.grid())?;
    let nu = p.material().poisson_ratio();
    let hv = hessian(&d.v)?;
    let psi: Vec<Matrix2<f64>> = (0..grid.len())
        .map(|k| hv.values[k] + p.curvature_target()[k])
        .collect();
    let big_g: Vec<f64> = p.total_thickness().iter().map(|g| g.powi(3)).collect();
    let moment = MatrixField {
        grid,
        values: (0..grid.len())
            .map(|k| (psi[k] + cof2(&psi[k]) * nu) * big_g[k])
            .collect(),
    };
    let div = ops::div_rows(&moment)?;
    let dphi1 = partial(&airy.phi, 1, 0)?;
    let dphi2 = partial(&airy.phi, 0, 1)?;

    let mut res = BoundaryResiduals {
        b1: 0.0,
        b2: 0.0,
        b3: 0.0,
    };
    for edge in [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top] {
        let n = edge.normal();
        let t = Vector2::new(-n[1], n[0]);
        let twist = ScalarField {
            grid,
            values: (0..grid.len()).map(|k| big_g[k] * n.dot(&(psi[k] * t))).collect(),
        };
        let along = if n[0] != 0.0 {
            partial(&twist, 0, 1)?
        } else {
            partial(&twist, 1, 0)?
        };
        let dt = t[0] + t[1];
        for (i, j) in edge.nodes(&grid) {
            let k = grid.index(i, j);
            let dn = n[0] * dphi1.values[k] + n[1] * dphi2.values[k];
            res.b1 = res.b1.max(airy.phi.values[k].abs()).max(dn.abs());
            let b2 = n.dot(&(psi[k] * n)) + nu * t.dot(&(psi[k] * t));
            res.b2 = res.b2.max(b2.abs());
            let b3 = (1.0 - nu) * dt * along.values[k] + div.values[k].dot(&n);
            res.b3 = res.b3.max(b3.abs());
        }
    }
    Ok(res)
}
