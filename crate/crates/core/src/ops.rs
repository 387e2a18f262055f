//! Differential operators on sampled fields.

use nalgebra::{Matrix2, Vector2};

use crate::error::Result;
use crate::grid::{MatrixField, ScalarField, VectorField};
use crate::material::cof2;
use crate::stencil::DiffOp;

/// `∂^(a+b) f / ∂x1^a ∂x2^b` at every node.
pub fn partial(f: &ScalarField, a: usize, b: usize) -> Result<ScalarField> {
    let op = DiffOp::partial(&f.grid, a, b)?;
    Ok(ScalarField {
        grid: f.grid,
        values: op.apply(&f.values),
    })
}

pub fn grad(f: &ScalarField) -> Result<VectorField> {
    let d1 = partial(f, 1, 0)?;
    let d2 = partial(f, 0, 1)?;
    d1.zip_map(&d2, |a, b| Vector2::new(*a, *b))
}

pub fn hessian(f: &ScalarField) -> Result<MatrixField> {
    let d11 = partial(f, 2, 0)?.values;
    let d12 = partial(f, 1, 1)?.values;
    let d22 = partial(f, 0, 2)?.values;
    Ok(MatrixField {
        grid: f.grid,
        values: (0..f.values.len())
            .map(|k| Matrix2::new(d11[k], d12[k], d12[k], d22[k]))
            .collect(),
    })
}

pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    let op = DiffOp::combine(&[
        (1.0, &DiffOp::partial(&f.grid, 2, 0)?),
        (1.0, &DiffOp::partial(&f.grid, 0, 2)?),
    ]);
    Ok(ScalarField {
        grid: f.grid,
        values: op.apply(&f.values),
    })
}

/// `∂1111 + 2 ∂1122 + ∂2222`; the 13-point stencil away from the boundary.
pub fn biharmonic_op(grid: &crate::grid::Grid2D) -> Result<DiffOp> {
    Ok(DiffOp::combine(&[
        (1.0, &DiffOp::partial(grid, 4, 0)?),
        (2.0, &DiffOp::partial(grid, 2, 2)?),
        (1.0, &DiffOp::partial(grid, 0, 4)?),
    ]))
}

pub fn biharmonic(f: &ScalarField) -> Result<ScalarField> {
    let op = biharmonic_op(&f.grid)?;
    Ok(ScalarField {
        grid: f.grid,
        values: op.apply(&f.values),
    })
}

pub fn cof2_field(m: &MatrixField) -> MatrixField {
    m.map(cof2)
}

/// `[u, p] = ∇²u : cof ∇²p`.
pub fn airy_bracket(u: &ScalarField, p: &ScalarField) -> Result<ScalarField> {
    let hu = hessian(u)?;
    let hp = hessian(p)?;
    hu.zip_map(&hp, |a, b| a.component_mul(&cof2(b)).sum())
}

/// `∂11 M22 + ∂22 M11 − ∂12 (M12 + M21)`.
pub fn curl_t_curl(m: &MatrixField) -> Result<ScalarField> {
    let grid = m.grid;
    let comp = |f: fn(&Matrix2<f64>) -> f64| m.values.iter().map(f).collect::<Vec<_>>();
    let m11 = comp(|a| a[(0, 0)]);
    let m22 = comp(|a| a[(1, 1)]);
    let off = comp(|a| a[(0, 1)] + a[(1, 0)]);
    let d11 = DiffOp::partial(&grid, 2, 0)?.apply(&m22);
    let d22 = DiffOp::partial(&grid, 0, 2)?.apply(&m11);
    let d12 = DiffOp::partial(&grid, 1, 1)?.apply(&off);
    Ok(ScalarField {
        grid,
        values: (0..grid.len()).map(|k| d11[k] + d22[k] - d12[k]).collect(),
    })
}

/// Row-wise divergence `(∂1 M11 + ∂2 M12, ∂1 M21 + ∂2 M22)`.
pub fn div_rows(m: &MatrixField) -> Result<VectorField> {
    let grid = m.grid;
    let d1 = DiffOp::partial(&grid, 1, 0)?;
    let d2 = DiffOp::partial(&grid, 0, 1)?;
    let comp = |r: usize, c: usize| m.values.iter().map(|a| a[(r, c)]).collect::<Vec<_>>();
    let a = d1.apply(&comp(0, 0));
    let b = d2.apply(&comp(0, 1));
    let c = d1.apply(&comp(1, 0));
    let d = d2.apply(&comp(1, 1));
    Ok(VectorField {
        grid,
        values: (0..grid.len())
            .map(|k| Vector2::new(a[k] + b[k], c[k] + d[k]))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::grid::Grid2D;

    fn sample(g: &Grid2D, s: &str) -> ScalarField {
        g.sample(&Expr::parse(s).unwrap()).unwrap()
    }

    #[test]
    fn exact_on_low_degree() {
        let g = Grid2D::new(-1.0, 1.0, 0.0, 2.0, 9, 11).unwrap();
        let lap = laplacian(&sample(&g, "x1^2 + x2^2")).unwrap();
        assert!(lap.values.iter().all(|v| (v - 4.0).abs() < 1e-10));
        let bih = biharmonic(&sample(&g, "x1^4")).unwrap();
        for j in 2..g.ny - 2 {
            for i in 2..g.nx - 2 {
                assert!((bih.at(i, j) - 24.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gradient_order_two() {
        let e = Expr::parse("sin(x1)").unwrap();
        let err = |n: usize| {
            let g = Grid2D::new(0.0, 2.0, 0.0, 1.0, n, n).unwrap();
            let d = grad(&g.sample(&e).unwrap()).unwrap();
            (0..g.len())
                .map(|k| (d.values[k][0] - g.point(k).0.cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(33) / err(65);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn all_operators_second_order() {
        let f = Expr::parse("exp(0.5*x1)*sin(x2 + 0.3*x1) + x1^2*x2^3").unwrap();
        let derivs: [(usize, usize); 9] = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (4, 0), (2, 2)];
        for (a, b) in derivs {
            let mut exact = f.clone();
            for _ in 0..a {
                exact = exact.d1();
            }
            for _ in 0..b {
                exact = exact.d2();
            }
            let err = |n: usize| {
                let g = Grid2D::unit_square(n).unwrap();
                let approx = partial(&g.sample(&f).unwrap(), a, b).unwrap();
                let truth = g.sample(&exact).unwrap();
                approx
                    .values
                    .iter()
                    .zip(&truth.values)
                    .map(|(p, q)| (p - q).abs())
                    .fold(0.0, f64::max)
            };
            let ratio = err(33) / err(65);
            assert!((3.5..4.5).contains(&ratio), "({a},{b}) ratio {ratio}");
        }
    }

    #[test]
    fn bracket_examples() {
        let g = Grid2D::unit_square(9).unwrap();
        let v = sample(&g, "(x1^2 + x2^2)/2");
        let kg = airy_bracket(&v, &v).unwrap();
        assert!(kg.values.iter().all(|x| (x / 2.0 - 1.0).abs() < 1e-10));
        let p = sample(&g, "sin(x1)*x2^2 + x1*x2");
        let q = sample(&g, "exp(x2)*x1^3");
        let a = airy_bracket(&p, &q).unwrap();
        let b = airy_bracket(&q, &p).unwrap();
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| (x - y).abs() < 1e-9));
        let aff = sample(&g, "3*x1 - x2 + 2");
        assert!(airy_bracket(&p, &aff).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn incompatibility_examples() {
        let g = Grid2D::unit_square(9).unwrap();
        let m = MatrixField::from_fn(g, |x, y| Matrix2::new(y * y, 0.0, 0.0, x * x));
        assert!(curl_t_curl(&m).unwrap().values.iter().all(|v| (v - 4.0).abs() < 1e-9));
        let c = MatrixField::filled(g, Matrix2::new(1.0, 2.0, -3.0, 4.0));
        assert!(curl_t_curl(&c).unwrap().max_abs() < 1e-9);
        let u = [Expr::parse("sin(x1)*x2").unwrap(), Expr::parse("exp(x1 - x2)").unwrap()];
        let err = |n: usize| {
            let g = Grid2D::unit_square(n).unwrap();
            let m = MatrixField::from_fn(g, |x, y| {
                let du = Matrix2::new(
                    u[0].d1().eval(x, y),
                    u[0].d2().eval(x, y),
                    u[1].d1().eval(x, y),
                    u[1].d2().eval(x, y),
                );
                (du + du.transpose()) * 0.5
            });
            curl_t_curl(&m).unwrap().max_abs()
        };
        let (a, b) = (err(17), err(33));
        assert!(a / b > 3.5, "{a} {b}");
    }

    #[test]
    fn cofactor_field() {
        let g = Grid2D::unit_square(5).unwrap();
        let m = MatrixField::from_fn(g, |x, y| Matrix2::new(x, y, -x * y, 2.0));
        let c = cof2_field(&m);
        for (a, b) in m.values.iter().zip(&c.values) {
            assert!((a.determinant() - 0.5 * a.component_mul(b).sum()).abs() < 1e-14);
        }
    }
}
