//! Three-dimensional recovery sequence for the limit energy: the explicit
//! deformation of the thin body `-h g1 < x3 < h g2`, its prestrained elastic
//! energy, refinement studies in `h`, and the fundamental-form expansion of
//! the deformed mid-surface.
//!
//! The recovery deformation is written in physical thickness coordinates,
//!
//! ```text
//! u = (x', x3) + (h²w, hv) + (x3 − ½h(g2−g1)) (−h∇v, 0) + h² x3 d0 + ½ h x3² d1,
//! ```
//!
//! and every integral over the body is pulled back to `t ∈ (−½, ½)` through
//! `x3 = s(x', t) = h(g1+g2) t + ½h(g2−g1)`.

use std::fmt::Write as _;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::energy_ig_exact;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::{neumaier_sum, Grid2D};
use crate::material::LameMaterial;
use crate::problem::{DisplacementExpr, ExprMatrix3, PlateProblem};

type ExprVec3 = [Expr; 3];

/// `a^h = I + h² ε_g + h x3 κ_g`, rejected when it is not orientation preserving.
pub fn growth_tensor_at(p: &PlateProblem, h: f64, x1: f64, x2: f64, x3: f64) -> Result<Matrix3<f64>> {
    let g = p.growth();
    let a = Matrix3::identity() + g.eps_at(x1, x2) * (h * h) + g.kappa_at(x1, x2) * (h * x3);
    let det = a.determinant();
    if !(det > 0.0) {
        return Err(Error::GrowthNotInvertible { h, x1, x2, x3, det });
    }
    Ok(a)
}

/// Physical height of the point with reduced coordinate `t ∈ [−½, ½]`.
pub fn s_map(p: &PlateProblem, h: f64, x1: f64, x2: f64, t: f64) -> f64 {
    let g1 = p.thickness().g1.eval(x1, x2);
    let g2 = p.thickness().g2.eval(x1, x2);
    h * (g1 + g2) * t + 0.5 * h * (g2 - g1)
}

fn sym_block(m: &ExprMatrix3) -> [[Expr; 2]; 2] {
    let off = 0.5 * (&m[0][1] + &m[1][0]);
    [[m[0][0].clone(), off.clone()], [off, m[1][1].clone()]]
}

fn l_map_expr(m: &ExprMatrix3) -> ExprVec3 {
    [&m[0][2] + &m[2][0], &m[1][2] + &m[2][1], m[2][2].clone()]
}

/// The completion map `c` applied to a symmetric expression matrix. `c` is
/// linear, so its action is assembled from its values on a basis.
fn c_map_expr(mat: &LameMaterial, f: &[[Expr; 2]; 2]) -> ExprVec3 {
    let c11 = mat.c_map(&Matrix2::new(1.0, 0.0, 0.0, 0.0));
    let c22 = mat.c_map(&Matrix2::new(0.0, 0.0, 0.0, 1.0));
    let c12 = mat.c_map(&Matrix2::new(0.0, 1.0, 1.0, 0.0));
    let off = 0.5 * (&f[0][1] + &f[1][0]);
    std::array::from_fn(|k| c11[k] * f[0][0].clone() + c22[k] * f[1][1].clone() + c12[k] * off.clone())
}

fn add3(a: &ExprVec3, b: &ExprVec3) -> ExprVec3 {
    std::array::from_fn(|k| &a[k] + &b[k])
}

/// Out-of-plane correctors `d0`, `d1` of the recovery sequence.
#[derive(Clone, Debug)]
pub struct RecoveryCoefficients {
    pub d0: ExprVec3,
    pub d1: ExprVec3,
}

impl RecoveryCoefficients {
    /// `d1 = l(κ_g) + c(−K)` and
    /// `d0 = l(ε_g) + c(E) − ½(g2−g1) c(−K) − ½|∇v|² e3` with the limit
    /// strains `E`, `K` of `(w, v)`.
    ///
    /// The last term of `d0` cancels the `½|∇v|²` that the rotation by `∇v`
    /// leaves in the normal-normal strain at order `h²`. Without it the
    /// energy of the sequence stays above `I_g` whenever `∇v ≠ 0`.
    pub fn new(p: &PlateProblem, d: &DisplacementExpr) -> Self {
        let mut out = Self::without_rotation_correction(p, d);
        let gv = d.v.grad();
        out.d0[2] = out.d0[2].clone() - 0.5 * (&gv[0] * &gv[0] + &gv[1] * &gv[1]);
        out
    }

    /// The correctors without the `−½|∇v|² e3` term in `d0`.
    pub fn without_rotation_correction(p: &PlateProblem, d: &DisplacementExpr) -> Self {
        let mat = p.material();
        let growth = p.growth();
        let off = p.thickness().offset();
        let grad_off = off.grad();
        let gv = d.v.grad();
        let hv = d.v.hessian();
        let eps = sym_block(&growth.eps);
        let kap = sym_block(&growth.kappa);
        let stretch: [[Expr; 2]; 2] = std::array::from_fn(|r| {
            std::array::from_fn(|c| {
                0.5 * (d.w[r].d(c) + d.w[c].d(r))
                    + 0.5 * (&gv[r] * &gv[c])
                    + 0.25 * (&gv[r] * &grad_off[c] + &gv[c] * &grad_off[r])
                    - eps[r][c].clone()
                    - 0.5 * (&off * &kap[r][c])
            })
        });
        let neg_bend: [[Expr; 2]; 2] = std::array::from_fn(|r| std::array::from_fn(|c| -(&hv[r][c] + &kap[r][c])));
        let c_bend = c_map_expr(mat, &neg_bend);
        let d1 = add3(&l_map_expr(&growth.kappa), &c_bend);
        let shift: ExprVec3 = std::array::from_fn(|k| -0.5 * (&off * &c_bend[k]));
        let d0 = add3(&add3(&l_map_expr(&growth.eps), &c_map_expr(mat, &stretch)), &shift);
        Self { d0, d1 }
    }
}

/// Closed-form recovery deformation with its exact Jacobian, optionally
/// composed with a rigid motion `x ↦ R x + c`.
#[derive(Clone, Debug)]
pub struct RecoveryDeformation {
    h: f64,
    w: [Expr; 2],
    grad_w: [[Expr; 2]; 2],
    v: Expr,
    grad_v: [Expr; 2],
    hess_v: [[Expr; 2]; 2],
    offset: Expr,
    grad_offset: [Expr; 2],
    d0: ExprVec3,
    grad_d0: [[Expr; 2]; 3],
    d1: ExprVec3,
    grad_d1: [[Expr; 2]; 3],
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// All `x'`-dependent quantities of the deformation at one in-plane point.
#[derive(Clone, Debug)]
pub struct RecoveryPoint {
    h: f64,
    x: Vector2<f64>,
    w: Vector2<f64>,
    grad_w: Matrix2<f64>,
    v: f64,
    grad_v: Vector2<f64>,
    hess_v: Matrix2<f64>,
    offset: f64,
    grad_offset: Vector2<f64>,
    d0: Vector3<f64>,
    grad_d0: [Vector3<f64>; 2],
    d1: Vector3<f64>,
    grad_d1: [Vector3<f64>; 2],
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

pub fn recovery_deformation(p: &PlateProblem, d: &DisplacementExpr, h: f64) -> RecoveryDeformation {
    RecoveryDeformation::new(p, d, h)
}

impl RecoveryDeformation {
    pub fn new(p: &PlateProblem, d: &DisplacementExpr, h: f64) -> Self {
        Self::with_coefficients(p, d, h, RecoveryCoefficients::new(p, d))
    }

    pub fn with_coefficients(p: &PlateProblem, d: &DisplacementExpr, h: f64, coef: RecoveryCoefficients) -> Self {
        let offset = p.thickness().offset();
        Self {
            h,
            grad_w: [d.w[0].grad(), d.w[1].grad()],
            w: d.w.clone(),
            grad_v: d.v.grad(),
            hess_v: d.v.hessian(),
            v: d.v.clone(),
            grad_offset: offset.grad(),
            offset,
            grad_d0: std::array::from_fn(|k| coef.d0[k].grad()),
            grad_d1: std::array::from_fn(|k| coef.d1[k].grad()),
            d0: coef.d0,
            d1: coef.d1,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// The same deformation followed by `y ↦ R y + c`.
    pub fn with_rigid_motion(mut self, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        self.translation = rotation * self.translation + translation;
        self.rotation = rotation * self.rotation;
        self
    }

    pub fn at(&self, x1: f64, x2: f64) -> RecoveryPoint {
        let ev = |e: &Expr| e.eval(x1, x2);
        let v2 = |e: &[Expr; 2]| Vector2::new(ev(&e[0]), ev(&e[1]));
        let v3 = |e: &ExprVec3| Vector3::new(ev(&e[0]), ev(&e[1]), ev(&e[2]));
        let m2 = |e: &[[Expr; 2]; 2]| Matrix2::from_fn(|r, c| ev(&e[r][c]));
        let col = |g: &[[Expr; 2]; 3], a: usize| Vector3::new(ev(&g[0][a]), ev(&g[1][a]), ev(&g[2][a]));
        RecoveryPoint {
            h: self.h,
            x: Vector2::new(x1, x2),
            w: v2(&self.w),
            grad_w: m2(&self.grad_w),
            v: ev(&self.v),
            grad_v: v2(&self.grad_v),
            hess_v: m2(&self.hess_v),
            offset: ev(&self.offset),
            grad_offset: v2(&self.grad_offset),
            d0: v3(&self.d0),
            grad_d0: [col(&self.grad_d0, 0), col(&self.grad_d0, 1)],
            d1: v3(&self.d1),
            grad_d1: [col(&self.grad_d1, 0), col(&self.grad_d1, 1)],
            rotation: self.rotation,
            translation: self.translation,
        }
    }

    pub fn deformation(&self, x1: f64, x2: f64, x3: f64) -> Vector3<f64> {
        self.at(x1, x2).deformation(x3)
    }

    pub fn jacobian(&self, x1: f64, x2: f64, x3: f64) -> Matrix3<f64> {
        self.at(x1, x2).jacobian(x3)
    }
}

impl RecoveryPoint {
    /// `u^h(x', x3)`.
    pub fn deformation(&self, x3: f64) -> Vector3<f64> {
        let h = self.h;
        let lever = x3 - 0.5 * h * self.offset;
        let u = Vector3::new(
            self.x[0] + h * h * self.w[0] - lever * h * self.grad_v[0],
            self.x[1] + h * h * self.w[1] - lever * h * self.grad_v[1],
            x3 + h * self.v,
        ) + self.d0 * (h * h * x3)
            + self.d1 * (0.5 * h * x3 * x3);
        self.rotation * u + self.translation
    }

    /// `∇u^h(x', x3)` with respect to `(x1, x2, x3)`.
    pub fn jacobian(&self, x3: f64) -> Matrix3<f64> {
        let h = self.h;
        let lever = x3 - 0.5 * h * self.offset;
        let mut j = Matrix3::identity();
        for a in 0..2 {
            let mut col = Vector3::new(
                h * h * self.grad_w[(0, a)] + 0.5 * h * h * self.grad_offset[a] * self.grad_v[0]
                    - lever * h * self.hess_v[(0, a)],
                h * h * self.grad_w[(1, a)] + 0.5 * h * h * self.grad_offset[a] * self.grad_v[1]
                    - lever * h * self.hess_v[(1, a)],
                h * self.grad_v[a],
            );
            col += self.grad_d0[a] * (h * h * x3) + self.grad_d1[a] * (0.5 * h * x3 * x3);
            j.set_column(a, &(j.column(a) + col));
        }
        let col3 = Vector3::new(-h * self.grad_v[0], -h * self.grad_v[1], 0.0) + self.d0 * (h * h) + self.d1 * (h * x3);
        j.set_column(2, &(j.column(2) + col3));
        self.rotation * j
    }
}

/// Quadrature used for the three-dimensional energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Quadrature {
    /// Trapezoid nodes per in-plane axis.
    pub n_inplane: usize,
    /// Gauss–Legendre points across the thickness.
    pub n_thickness: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            n_inplane: 65,
            n_thickness: 4,
        }
    }
}

impl Quadrature {
    fn check(&self) -> Result<()> {
        if self.n_inplane < 2 || self.n_thickness < 2 {
            return Err(Error::InvalidArgument(format!(
                "quadrature orders must be at least 2, got ({}, {})",
                self.n_inplane, self.n_thickness
            )));
        }
        Ok(())
    }

    fn inplane_grid(&self, p: &PlateProblem) -> Result<Grid2D> {
        let g = p.grid();
        Grid2D::new(g.x_min, g.x_max, g.y_min, g.y_max, self.n_inplane, self.n_inplane)
    }

    /// Gauss–Legendre nodes and weights on `[−½, ½]`.
    fn thickness_rule(&self) -> Vec<(f64, f64)> {
        let n = NonZeroUsize::new(self.n_thickness).expect("checked quadrature order");
        GaussLegendre::new(n)
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * x, 0.5 * w))
            .collect()
    }
}

/// Prestrained elastic energy
/// `I^h = ∫ (g1+g2) ∫_{−½}^{½} W(∇u^h (a^h)⁻¹) dt dx'` of a deformation of the
/// body of thickness `h(g1+g2)`.
pub fn energy_3d(p: &PlateProblem, u: &RecoveryDeformation, quad: Quadrature) -> Result<f64> {
    quad.check()?;
    let grid = quad.inplane_grid(p)?;
    let weights = grid.trapezoid_weights();
    let rule = quad.thickness_rule();
    let h = u.h();
    let mat = p.material();
    let (g1, g2) = (&p.thickness().g1, &p.thickness().g2);
    let per_node: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (x1, x2) = grid.point(k);
            let (a1, a2) = (g1.eval(x1, x2), g2.eval(x1, x2));
            let pt = u.at(x1, x2);
            let mut acc = 0.0;
            for &(t, wt) in &rule {
                let x3 = h * (a1 + a2) * t + 0.5 * h * (a2 - a1);
                let a = growth_tensor_at(p, h, x1, x2, x3)?;
                let a_inv = a.try_inverse().ok_or(Error::GrowthNotInvertible {
                    h,
                    x1,
                    x2,
                    x3,
                    det: a.determinant(),
                })?;
                acc += wt * mat.density(&(pt.jacobian(x3) * a_inv));
            }
            Ok(weights[k] * (a1 + a2) * acc)
        })
        .collect::<Result<_>>()?;
    Ok(neumaier_sum(per_node))
}

/// Scaled energies `h⁻⁴ I^h` along a decreasing sequence of thicknesses.
#[derive(Clone, Debug, Serialize)]
pub struct GammaStudy {
    pub h_list: Vec<f64>,
    pub scaled_energies: Vec<f64>,
    /// `|h⁻⁴I^h − I_g| / |I_g|`, or the absolute gap when `I_g = 0`.
    pub rel_gaps: Vec<f64>,
    /// Two-point extrapolation from the two smallest `h`, assuming an `O(h)` error.
    pub extrapolated: f64,
    pub extrapolated_gap: f64,
    /// `I_g` with exact derivatives on the in-plane quadrature grid.
    pub reference: f64,
    /// Convergence order estimated from the three smallest `h`, when defined.
    pub observed_order: Option<f64>,
}

impl GammaStudy {
    /// CSV with header `h,scaled_energy,rel_gap_to_Ig` and a `#` footer line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,scaled_energy,rel_gap_to_Ig\n");
        for ((h, e), g) in self.h_list.iter().zip(&self.scaled_energies).zip(&self.rel_gaps) {
            let _ = writeln!(out, "{h:.16e},{e:.16e},{g:.16e}");
        }
        let order = self.observed_order.map_or("nan".to_string(), |o| format!("{o:.6}"));
        let _ = writeln!(
            out,
            "# extrapolated={:.16e} rel_gap={:.16e} reference_Ig={:.16e} observed_order={}",
            self.extrapolated, self.extrapolated_gap, self.reference, order
        );
        out
    }
}

fn relative_gap(value: f64, reference: f64) -> f64 {
    let gap = (value - reference).abs();
    if reference == 0.0 {
        gap
    } else {
        gap / reference.abs()
    }
}

pub fn gamma_study(p: &PlateProblem, d: &DisplacementExpr, h_list: &[f64], quad: Quadrature) -> Result<GammaStudy> {
    quad.check()?;
    if h_list.len() < 2 {
        return Err(Error::InvalidArgument(
            "gamma study needs at least two values of h".into(),
        ));
    }
    if h_list.iter().any(|h| !(*h > 0.0)) || h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(format!(
            "h values must be positive and strictly decreasing, got {h_list:?}"
        )));
    }
    let fine = p.with_grid(quad.inplane_grid(p)?)?;
    let reference = energy_ig_exact(&fine, d);
    let scaled_energies: Vec<f64> = h_list
        .par_iter()
        .map(|&h| Ok(energy_3d(p, &RecoveryDeformation::new(p, d, h), quad)? / h.powi(4)))
        .collect::<Result<_>>()?;
    if let Some(e) = scaled_energies.iter().find(|e| !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite scaled energy {e}")));
    }
    let n = h_list.len();
    let (h1, h2) = (h_list[n - 2], h_list[n - 1]);
    let (e1, e2) = (scaled_energies[n - 2], scaled_energies[n - 1]);
    let extrapolated = (h1 * e2 - h2 * e1) / (h1 - h2);
    let observed_order = (n >= 3)
        .then(|| {
            let (ea, eb, ec) = (scaled_energies[n - 3], e1, e2);
            let r = (ea - eb).abs() / (eb - ec).abs();
            (r.ln() / (h_list[n - 3] / h1).ln())
                .is_finite()
                .then(|| r.ln() / (h_list[n - 3] / h1).ln())
        })
        .flatten();
    Ok(GammaStudy {
        rel_gaps: scaled_energies.iter().map(|e| relative_gap(*e, reference)).collect(),
        h_list: h_list.to_vec(),
        scaled_energies,
        extrapolated_gap: relative_gap(extrapolated, reference),
        extrapolated,
        reference,
        observed_order,
    })
}

/// Remainders of the first and second fundamental forms of the deformed
/// mid-surface after removing their leading terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FormGaps {
    /// `|∂τφ1|² − |a ∂τφ̃|² − 2h² τᵀEτ`, expected `O(h³)`.
    pub first: f64,
    /// Second-form difference plus `h τᵀ(∇²v + (sym κ_g)_2x2)η`, expected `O(h²)`.
    pub second: f64,
}

struct Surface {
    tangent: [Vector3<f64>; 2],
    second: [[Vector3<f64>; 2]; 2],
}

impl Surface {
    fn new(phi: &ExprVec3, x1: f64, x2: f64) -> Self {
        let grads: [[Expr; 2]; 3] = std::array::from_fn(|k| phi[k].grad());
        let tangent = std::array::from_fn(|a| Vector3::from_fn(|k, _| grads[k][a].eval(x1, x2)));
        let second =
            std::array::from_fn(|a| std::array::from_fn(|b| Vector3::from_fn(|k, _| grads[k][a].d(b).eval(x1, x2))));
        Self { tangent, second }
    }

    fn along(&self, dir: &Vector2<f64>) -> Vector3<f64> {
        self.tangent[0] * dir[0] + self.tangent[1] * dir[1]
    }

    /// `∂τ (n/|n|)` with `n = ∂1φ × ∂2φ`.
    fn normal_derivative(&self, tau: &Vector2<f64>) -> Vector3<f64> {
        let n = self.tangent[0].cross(&self.tangent[1]);
        let d_first = self.second[0][0] * tau[0] + self.second[1][0] * tau[1];
        let d_second = self.second[0][1] * tau[0] + self.second[1][1] * tau[1];
        let dn = d_first.cross(&self.tangent[1]) + self.tangent[0].cross(&d_second);
        let len = n.norm();
        dn / len - n * (n.dot(&dn) / len.powi(3))
    }
}

/// Fundamental-form remainders at `x'` along unit directions `τ`, `η`.
pub fn midsurface_forms(
    p: &PlateProblem,
    d: &DisplacementExpr,
    h: f64,
    x: (f64, f64),
    tau: Vector2<f64>,
    eta: Vector2<f64>,
) -> Result<FormGaps> {
    if (tau.norm() - 1.0).abs() > 1e-12 || (eta.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("tau and eta must be unit vectors".into()));
    }
    let (x1, x2) = x;
    let half_offset = 0.5 * h * p.thickness().offset();
    let flat: ExprVec3 = [Expr::x1(), Expr::x2(), half_offset.clone()];
    let deformed: ExprVec3 = [
        Expr::x1() + (h * h) * d.w[0].clone(),
        Expr::x2() + (h * h) * d.w[1].clone(),
        half_offset.clone() + h * d.v.clone(),
    ];
    let ref_surface = Surface::new(&flat, x1, x2);
    let def_surface = Surface::new(&deformed, x1, x2);

    let x3 = half_offset.eval(x1, x2);
    let a = growth_tensor_at(p, h, x1, x2, x3)?;
    let (stretch, bend) = crate::energy::exact_strains_at(p, d, x1, x2);

    let t_ref = ref_surface.along(&tau);
    let t_def = def_surface.along(&tau);
    let first = t_def.norm_squared() - (a * t_ref).norm_squared() - 2.0 * h * h * tau.dot(&(stretch * tau));

    let kappa = p.growth().kappa_at(x1, x2);
    let half_dg = (kappa.transpose() * a + a.transpose() * kappa) * (0.5 * h);
    let e_ref = ref_surface.along(&eta);
    let e_def = def_surface.along(&eta);
    let raw = def_surface.normal_derivative(&tau).dot(&e_def)
        - ref_surface.normal_derivative(&tau).dot(&e_ref)
        - (half_dg * t_ref).dot(&e_ref);
    let second = raw + h * tau.dot(&(bend * eta));
    Ok(FormGaps { first, second })
}
