//! The limit energy
//! `I_g(w, v) = ½ ∫ g Q2(E) + 1/24 ∫ g³ Q2(K)`, with total thickness `g`,
//! stretching strain `E` and bending strain `K`, together with its exact
//! discrete gradient and the weak stationarity residuals.

use nalgebra::{Matrix2, Vector2};

use crate::error::Result;
use crate::expr::Expr;
use crate::grid::{neumaier_sum, MatrixField, ScalarField, VectorField};
use crate::material::sym2;
use crate::problem::{Displacement, DisplacementExpr, PlateProblem};

/// Nodal strains of a flat `[w1 | w2 | v]` state.
pub(crate) struct Strains {
    pub stretch: Vec<Matrix2<f64>>,
    pub bend: Vec<Matrix2<f64>>,
    pub grad_v: Vec<Vector2<f64>>,
}

pub(crate) fn strains(p: &PlateProblem, x: &[f64]) -> Strains {
    let n = p.grid().len();
    let (w1, rest) = x.split_at(n);
    let (w2, v) = rest.split_at(n);
    let ops = p.ops();
    let (a1, a2) = (ops.d1.apply(v), ops.d2.apply(v));
    let (w11, w12) = (ops.d1.apply(w1), ops.d2.apply(w1));
    let (w21, w22) = (ops.d1.apply(w2), ops.d2.apply(w2));
    let (v11, v12, v22) = (ops.d11.apply(v), ops.d12.apply(v), ops.d22.apply(v));
    let mut stretch = Vec::with_capacity(n);
    let mut bend = Vec::with_capacity(n);
    let mut grad_v = Vec::with_capacity(n);
    for k in 0..n {
        let gv = Vector2::new(a1[k], a2[k]);
        let dd = p.offset_grad()[k];
        let grad_w = Matrix2::new(w11[k], w12[k], w21[k], w22[k]);
        let e = sym2(&grad_w) + gv * gv.transpose() * 0.5 + sym2(&(gv * dd.transpose())) * 0.5 - p.stretch_target()[k];
        stretch.push(e);
        bend.push(Matrix2::new(v11[k], v12[k], v12[k], v22[k]) + p.curvature_target()[k]);
        grad_v.push(gv);
    }
    Strains { stretch, bend, grad_v }
}

/// `sym∇w + ½∇v⊗∇v − (sym ε_g)_2x2 − ½(g2−g1)(sym κ_g)_2x2 + ½ sym(∇v⊗∇(g2−g1))`.
pub fn stretching_strain(p: &PlateProblem, d: &Displacement) -> Result<MatrixField> {
    p.grid().same_as(&d.grid())?;
    Ok(MatrixField {
        grid: *p.grid(),
        values: strains(p, &d.to_flat()).stretch,
    })
}

/// `∇²v + (sym κ_g)_2x2`.
pub fn bending_strain(p: &PlateProblem, d: &Displacement) -> Result<MatrixField> {
    p.grid().same_as(&d.grid())?;
    Ok(MatrixField {
        grid: *p.grid(),
        values: strains(p, &d.to_flat()).bend,
    })
}

fn energy_from_strains(p: &PlateProblem, s: &Strains) -> f64 {
    let mat = p.material();
    let g = p.total_thickness();
    neumaier_sum(
        (0..g.len())
            .map(|k| p.weights()[k] * (0.5 * g[k] * mat.q2(&s.stretch[k]) + g[k].powi(3) / 24.0 * mat.q2(&s.bend[k]))),
    )
}

/// Energy of a flat `[w1 | w2 | v]` state.
pub fn energy_flat(p: &PlateProblem, x: &[f64]) -> f64 {
    energy_from_strains(p, &strains(p, x))
}

/// Energy and its exact gradient for a flat `[w1 | w2 | v]` state.
///
/// The gradient differentiates the quadrature sum itself, so
/// `⟨grad, δ⟩ = d/dt energy_flat(x + tδ)` holds to rounding.
pub fn energy_and_gradient_flat(p: &PlateProblem, x: &[f64]) -> (f64, Vec<f64>) {
    let n = p.grid().len();
    let s = strains(p, x);
    let energy = energy_from_strains(p, &s);
    let mat = p.material();
    let g = p.total_thickness();
    let mut s11 = vec![0.0; n];
    let mut s12 = vec![0.0; n];
    let mut s22 = vec![0.0; n];
    let mut a1 = vec![0.0; n];
    let mut a2 = vec![0.0; n];
    let mut p11 = vec![0.0; n];
    let mut p12 = vec![0.0; n];
    let mut p22 = vec![0.0; n];
    for k in 0..n {
        let om = p.weights()[k];
        let sig = mat.l2_stress(&s.stretch[k]) * (om * g[k]);
        let tau = mat.l2_stress(&s.bend[k]) * (om * g[k].powi(3) / 12.0);
        s11[k] = sig[(0, 0)];
        s12[k] = sig[(0, 1)];
        s22[k] = sig[(1, 1)];
        let lever = s.grad_v[k] + p.offset_grad()[k] * 0.5;
        let a = sig * lever;
        a1[k] = a[0];
        a2[k] = a[1];
        p11[k] = tau[(0, 0)];
        p12[k] = 2.0 * tau[(0, 1)];
        p22[k] = tau[(1, 1)];
    }
    let ops = p.ops();
    let mut grad = vec![0.0; 3 * n];
    {
        let (gw1, rest) = grad.split_at_mut(n);
        let (gw2, gv) = rest.split_at_mut(n);
        ops.d1.apply_transpose_add(&s11, gw1);
        ops.d2.apply_transpose_add(&s12, gw1);
        ops.d1.apply_transpose_add(&s12, gw2);
        ops.d2.apply_transpose_add(&s22, gw2);
        ops.d1.apply_transpose_add(&a1, gv);
        ops.d2.apply_transpose_add(&a2, gv);
        ops.d11.apply_transpose_add(&p11, gv);
        ops.d12.apply_transpose_add(&p12, gv);
        ops.d22.apply_transpose_add(&p22, gv);
    }
    (energy, grad)
}

pub fn energy_ig(p: &PlateProblem, d: &Displacement) -> Result<f64> {
    p.grid().same_as(&d.grid())?;
    Ok(energy_flat(p, &d.to_flat()))
}

/// Nodal gradient `(∂I/∂w, ∂I/∂v)`.
pub fn grad_ig(p: &PlateProblem, d: &Displacement) -> Result<(VectorField, ScalarField)> {
    p.grid().same_as(&d.grid())?;
    let g = energy_and_gradient_flat(p, &d.to_flat()).1;
    let split = Displacement::from_flat(*p.grid(), &g)?;
    Ok((split.w, split.v))
}

/// Weak stationarity residuals against nodal test fields `ψ` (in-plane) and `φ`
/// (out-of-plane):
///
/// `r1 = ∫ g L2(E) : sym∇ψ`,
/// `r2 = ∫ g L2(E) : sym((∇v + ½∇(g2−g1)) ⊗ ∇φ) + 1/12 ∫ g³ L2(K) : ∇²φ`.
pub fn weak_residual_fields(
    p: &PlateProblem,
    d: &Displacement,
    psi: &VectorField,
    phi: &ScalarField,
) -> Result<(f64, f64)> {
    let grid = p.grid();
    grid.same_as(&d.grid())?;
    grid.same_as(&psi.grid)?;
    grid.same_as(&phi.grid)?;
    let s = strains(p, &d.to_flat());
    let ops = p.ops();
    let psi1: Vec<f64> = psi.values.iter().map(|v| v[0]).collect();
    let psi2: Vec<f64> = psi.values.iter().map(|v| v[1]).collect();
    let (p11, p12) = (ops.d1.apply(&psi1), ops.d2.apply(&psi1));
    let (p21, p22) = (ops.d1.apply(&psi2), ops.d2.apply(&psi2));
    let (f1, f2) = (ops.d1.apply(&phi.values), ops.d2.apply(&phi.values));
    let (f11, f12, f22) = (
        ops.d11.apply(&phi.values),
        ops.d12.apply(&phi.values),
        ops.d22.apply(&phi.values),
    );
    let mat = p.material();
    let g = p.total_thickness();
    let mut r1 = Vec::with_capacity(grid.len());
    let mut r2 = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let om = p.weights()[k];
        let stress = mat.l2_stress(&s.stretch[k]);
        let moment = mat.l2_stress(&s.bend[k]);
        let dpsi = Matrix2::new(p11[k], p12[k], p21[k], p22[k]);
        let dphi = Vector2::new(f1[k], f2[k]);
        let hphi = Matrix2::new(f11[k], f12[k], f12[k], f22[k]);
        let lever = s.grad_v[k] + p.offset_grad()[k] * 0.5;
        r1.push(om * g[k] * stress.component_mul(&sym2(&dpsi)).sum());
        r2.push(
            om * (g[k] * stress.component_mul(&sym2(&(lever * dphi.transpose()))).sum()
                + g[k].powi(3) / 12.0 * moment.component_mul(&hphi).sum()),
        );
    }
    Ok((neumaier_sum(r1), neumaier_sum(r2)))
}

/// [`weak_residual_fields`] with closed-form test fields sampled at the nodes.
pub fn weak_residual(p: &PlateProblem, d: &Displacement, psi: &[Expr; 2], phi: &Expr) -> Result<(f64, f64)> {
    let grid = p.grid();
    let psi1 = grid.sample(&psi[0])?;
    let psi2 = grid.sample(&psi[1])?;
    let psi = psi1.zip_map(&psi2, |a, b| Vector2::new(*a, *b))?;
    weak_residual_fields(p, d, &psi, &grid.sample(phi)?)
}

/// Exact strains of a closed-form displacement at a point.
pub fn exact_strains_at(p: &PlateProblem, d: &DisplacementExpr, x1: f64, x2: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    exact_strains_with(&ExactStrainExprs::new(p, d), p, x1, x2)
}

pub(crate) struct ExactStrainExprs {
    grad_w: [[Expr; 2]; 2],
    grad_v: [Expr; 2],
    hess_v: [[Expr; 2]; 2],
    offset: Expr,
    grad_offset: [Expr; 2],
}

impl ExactStrainExprs {
    pub fn new(p: &PlateProblem, d: &DisplacementExpr) -> Self {
        let offset = p.thickness().offset();
        Self {
            grad_w: [d.w[0].grad(), d.w[1].grad()],
            grad_v: d.v.grad(),
            hess_v: d.v.hessian(),
            grad_offset: offset.grad(),
            offset,
        }
    }
}

pub(crate) fn exact_strains_with(
    e: &ExactStrainExprs,
    p: &PlateProblem,
    x1: f64,
    x2: f64,
) -> (Matrix2<f64>, Matrix2<f64>) {
    let ev = |x: &Expr| x.eval(x1, x2);
    let grad_w = Matrix2::from_fn(|r, c| ev(&e.grad_w[r][c]));
    let gv = Vector2::new(ev(&e.grad_v[0]), ev(&e.grad_v[1]));
    let dd = Vector2::new(ev(&e.grad_offset[0]), ev(&e.grad_offset[1]));
    let hv = Matrix2::from_fn(|r, c| ev(&e.hess_v[r][c]));
    let eps = crate::material::upper2(&crate::material::sym3(&p.growth().eps_at(x1, x2)));
    let kap = crate::material::upper2(&crate::material::sym3(&p.growth().kappa_at(x1, x2)));
    let stretch = sym2(&grad_w) + gv * gv.transpose() * 0.5 + sym2(&(gv * dd.transpose())) * 0.5
        - eps
        - kap * (0.5 * ev(&e.offset));
    (stretch, hv + kap)
}

/// `I_g` with exact derivatives of a closed-form displacement, integrated by
/// the trapezoid rule on the problem grid.
pub fn energy_ig_exact(p: &PlateProblem, d: &DisplacementExpr) -> f64 {
    let exprs = ExactStrainExprs::new(p, d);
    let grid = p.grid();
    let mat = p.material();
    let total = p.thickness().total();
    neumaier_sum((0..grid.len()).map(|k| {
        let (x1, x2) = grid.point(k);
        let (e, b) = exact_strains_with(&exprs, p, x1, x2);
        let g = total.eval(x1, x2);
        p.weights()[k] * (0.5 * g * mat.q2(&e) + g.powi(3) / 24.0 * mat.q2(&b))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid2D;
    use crate::material::LameMaterial;
    use crate::problem::{const_matrix3, GrowthTensor, ThicknessPair};
    use nalgebra::Matrix3;

    fn unit_problem(n: usize, thickness: ThicknessPair, growth: GrowthTensor) -> PlateProblem {
        PlateProblem::new(
            Grid2D::unit_square(n).unwrap(),
            LameMaterial::new(1.0, 1.0).unwrap(),
            thickness,
            growth,
        )
        .unwrap()
    }

    fn disp(p: &PlateProblem, w1: &str, w2: &str, v: &str) -> Displacement {
        DisplacementExpr {
            w: [Expr::parse(w1).unwrap(), Expr::parse(w2).unwrap()],
            v: Expr::parse(v).unwrap(),
        }
        .sample(p.grid())
        .unwrap()
    }

    #[test]
    fn strain_examples() {
        let p = unit_problem(7, ThicknessPair::uniform(0.5), GrowthTensor::zero());
        let zero = stretching_strain(&p, &disp(&p, "0", "0", "0")).unwrap();
        assert!(zero.values.iter().all(|m| m.norm() == 0.0));
        let id = stretching_strain(&p, &disp(&p, "x1", "x2", "0")).unwrap();
        assert!(id.values.iter().all(|m| (m - Matrix2::identity()).norm() < 1e-12));

        let t = ThicknessPair::new(Expr::parse("1 - x1/2").unwrap(), Expr::parse("1 + x1/2").unwrap());
        let p = unit_problem(7, t, GrowthTensor::zero());
        let e = stretching_strain(&p, &disp(&p, "0", "0", "x1")).unwrap();
        let e11 = Matrix2::new(1.0, 0.0, 0.0, 0.0);
        assert!(e.values.iter().all(|m| (m - e11).norm() < 1e-12));
    }

    #[test]
    fn bending_examples() {
        let p = unit_problem(7, ThicknessPair::uniform(0.5), GrowthTensor::zero());
        let b = bending_strain(&p, &disp(&p, "0", "0", "2*x1 - x2 + 1")).unwrap();
        assert!(b.values.iter().all(|m| m.norm() < 1e-11));
        let b = bending_strain(&p, &disp(&p, "0", "0", "(x1^2 + x2^2)/2")).unwrap();
        assert!(b.values.iter().all(|m| (m - Matrix2::identity()).norm() < 1e-10));
        let growth = GrowthTensor::new(const_matrix3(&Matrix3::zeros()), const_matrix3(&Matrix3::identity()));
        let p = unit_problem(7, ThicknessPair::uniform(0.5), growth);
        let b = bending_strain(&p, &Displacement::zeros(*p.grid())).unwrap();
        assert!(b.values.iter().all(|m| (m - Matrix2::identity()).norm() < 1e-15));
    }

    #[test]
    fn gradient_matches_directional_difference() {
        let t = ThicknessPair::new(
            Expr::parse("0.5 + 0.1*x2").unwrap(),
            Expr::parse("0.4 + 0.2*x1^2").unwrap(),
        );
        let mut eps = crate::problem::zero_matrix3();
        eps[0][1] = Expr::parse("0.1*x1*x2").unwrap();
        eps[1][1] = Expr::parse("0.05").unwrap();
        let mut kap = crate::problem::zero_matrix3();
        kap[0][0] = Expr::parse("0.3").unwrap();
        kap[1][0] = Expr::parse("sin(x1)").unwrap();
        let p = unit_problem(9, t, GrowthTensor::new(eps, kap));
        let x: Vec<f64> = (0..3 * 81).map(|k| 0.1 * ((k * 7 % 13) as f64 - 6.0) / 6.0).collect();
        let dir: Vec<f64> = (0..3 * 81).map(|k| ((k * 5 % 11) as f64 - 5.0) / 5.0).collect();
        let (_, g) = energy_and_gradient_flat(&p, &x);
        let t = 1e-5;
        let shifted = |s: f64| {
            let y: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + s * b).collect();
            energy_flat(&p, &y)
        };
        let fd = (shifted(t) - shifted(-t)) / (2.0 * t);
        let an: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((fd - an).abs() <= 1e-6 * an.abs(), "{fd} {an}");
    }

    #[test]
    fn weak_residual_is_gradient_pairing() {
        let t = ThicknessPair::new(Expr::parse("0.5").unwrap(), Expr::parse("0.5 + 0.25*x1").unwrap());
        let p = unit_problem(9, t, GrowthTensor::zero());
        let d = disp(&p, "0.1*x1*x2", "sin(x2)*0.2", "0.3*x1^2 - x2*x1");
        let psi = [Expr::parse("x1^2").unwrap(), Expr::parse("x2 - x1").unwrap()];
        let phi = Expr::parse("x1*x2^2").unwrap();
        let (r1, r2) = weak_residual(&p, &d, &psi, &phi).unwrap();
        let (gw, gv) = grad_ig(&p, &d).unwrap();
        let g = p.grid();
        let mut e1 = 0.0;
        let mut e2 = 0.0;
        for k in 0..g.len() {
            let (x1, x2) = g.point(k);
            e1 += gw.values[k][0] * psi[0].eval(x1, x2) + gw.values[k][1] * psi[1].eval(x1, x2);
            e2 += gv.values[k] * phi.eval(x1, x2);
        }
        assert!((r1 - e1).abs() <= 1e-10 * e1.abs().max(1e-12));
        assert!((r2 - e2).abs() <= 1e-10 * e2.abs().max(1e-12));
        let zero = weak_residual(&p, &d, &[Expr::zero(), Expr::zero()], &Expr::zero()).unwrap();
        assert_eq!(zero, (0.0, 0.0));
    }

    #[test]
    fn exact_energy_matches_discrete_for_quadratics() {
        let p = unit_problem(9, ThicknessPair::uniform(0.5), GrowthTensor::zero());
        let d = DisplacementExpr {
            w: [Expr::parse("x1*x2").unwrap(), Expr::parse("x1^2").unwrap()],
            v: Expr::parse("x1^2 - x2").unwrap(),
        };
        let discrete = energy_ig(&p, &d.sample(p.grid()).unwrap()).unwrap();
        assert!((discrete - energy_ig_exact(&p, &d)).abs() < 1e-12 * discrete);
    }
}
