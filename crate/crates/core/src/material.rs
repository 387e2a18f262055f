//! Isotropic material law: the quadratic forms `Q3` and `Q2`, the completion
//! maps `c(F)` and `l(F)`, the bilinear form `L2`, and a concrete stored-energy
//! density `W` whose Hessian at the identity is `Q3`.

use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

/// Isotropic Lamé constants together with the derived plate moduli.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LameMaterial {
    mu: f64,
    lambda: f64,
}

impl LameMaterial {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidMaterial(format!("mu must be > 0, got {mu}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidMaterial(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { mu, lambda })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Young's modulus `S = mu (2 mu + 3 lambda) / (mu + lambda)`.
    pub fn young_modulus(&self) -> f64 {
        self.mu * (2.0 * self.mu + 3.0 * self.lambda) / (self.mu + self.lambda)
    }

    /// Poisson's ratio `nu = lambda / (2 (lambda + mu))`, in `[0, 1/2)`.
    pub fn poisson_ratio(&self) -> f64 {
        self.lambda / (2.0 * (self.lambda + self.mu))
    }

    /// Bending stiffness `B = S / (12 (1 - nu^2))`.
    pub fn bending_stiffness(&self) -> f64 {
        let nu = self.poisson_ratio();
        self.young_modulus() / (12.0 * (1.0 - nu * nu))
    }

    /// Trace coefficient of the relaxed form, `2 mu lambda / (2 mu + lambda)`.
    pub fn plane_trace_modulus(&self) -> f64 {
        2.0 * self.mu * self.lambda / (2.0 * self.mu + self.lambda)
    }

    /// `Q3(M) = 2 mu |sym M|^2 + lambda (tr M)^2`.
    pub fn q3(&self, m: &Matrix3<f64>) -> f64 {
        let s = sym3(m);
        let tr = m.trace();
        2.0 * self.mu * s.norm_squared() + self.lambda * tr * tr
    }

    /// Closed-form isotropic `Q2(F) = 2 mu |sym F|^2 + 2 mu lambda/(2 mu + lambda) (tr F)^2`.
    pub fn q2(&self, f: &Matrix2<f64>) -> f64 {
        let s = sym2(f);
        let tr = f.trace();
        // Single division keeps e.g. Q2(I) = 20/3 correctly rounded.
        let stiff = 2.0 * self.mu + self.lambda;
        (2.0 * self.mu * s.norm_squared() * stiff + 2.0 * self.mu * self.lambda * tr * tr) / stiff
    }

    /// `Q2(F)` as the minimum of `Q3` over all 3x3 completions of `F`.
    ///
    /// `Q3` only sees the symmetric part, so the free entries reduce to the
    /// three coefficients of `sym(c ⊗ e3)`. The stationarity system for `c`
    /// is assembled from `Q3` by polarization and solved directly; the
    /// returned vector satisfies `Q2(F) = Q3((F)* + sym(c ⊗ e3))`.
    pub fn q2_minimized(&self, f: &Matrix2<f64>) -> Result<(f64, Vector3<f64>)> {
        let base = embed(f);
        let basis: [Matrix3<f64>; 3] = std::array::from_fn(|k| sym_outer_e3(&Vector3::ith(k, 1.0)));
        let bilinear = |a: &Matrix3<f64>, b: &Matrix3<f64>| 0.5 * (self.q3(&(a + b)) - self.q3(a) - self.q3(b));
        let hessian = Matrix3::from_fn(|k, l| bilinear(&basis[k], &basis[l]));
        let rhs = Vector3::from_fn(|k, _| -bilinear(&base, &basis[k]));
        let chol = hessian.cholesky().ok_or_else(|| {
            Error::Singular(format!(
                "Q3 completion system is not positive definite (mu = {}, lambda = {})",
                self.mu, self.lambda
            ))
        })?;
        let c = chol.solve(&rhs);
        let value = self.q3(&(base + sym_outer_e3(&c)));
        Ok((value, c))
    }

    /// The linear completion map `c(F)`; only `sym F` matters.
    ///
    /// For the isotropic `Q3` the shear entries vanish and only the normal
    /// stretch `c3 = -lambda tr F / (2 mu + lambda)` remains.
    pub fn c_map(&self, f: &Matrix2<f64>) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.lambda * f.trace() / (2.0 * self.mu + self.lambda))
    }

    /// `L2(E, F) = (Q2(E + F) - Q2(E) - Q2(F)) / 2`.
    pub fn l2(&self, e: &Matrix2<f64>, f: &Matrix2<f64>) -> f64 {
        0.5 * (self.q2(&(e + f)) - self.q2(e) - self.q2(f))
    }

    /// Matrix representing the functional `L2 E`, i.e. `<L2 E : F> = L2(E, F)`.
    pub fn l2_stress(&self, e: &Matrix2<f64>) -> Matrix2<f64> {
        sym2(e) * (2.0 * self.mu) + Matrix2::identity() * (self.plane_trace_modulus() * e.trace())
    }

    /// St. Venant–Kirchhoff type density
    /// `W(F) = mu/4 |F^T F - I|^2 + lambda/8 (tr(F^T F - I))^2`.
    pub fn density(&self, f: &Matrix3<f64>) -> f64 {
        let c = f.transpose() * f - Matrix3::identity();
        let tr = c.trace();
        0.25 * self.mu * c.norm_squared() + 0.125 * self.lambda * tr * tr
    }
}

/// `l(F)`: the vector with `sym(F - (F_2x2)*) = sym(l ⊗ e3)`.
pub fn l_map(f: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(f[(0, 2)] + f[(2, 0)], f[(1, 2)] + f[(2, 1)], f[(2, 2)])
}

/// `(F)*`: the 3x3 matrix with `F` in the upper-left block and zeros elsewhere.
pub fn embed(f: &Matrix2<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(f);
    m
}

/// Upper-left 2x2 block.
pub fn upper2(m: &Matrix3<f64>) -> Matrix2<f64> {
    m.fixed_view::<2, 2>(0, 0).into_owned()
}

/// `sym(c ⊗ e3)`.
pub fn sym_outer_e3(c: &Vector3<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    m.set_column(2, c);
    sym3(&m)
}

pub fn sym2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

pub fn sym3(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// 2x2 cofactor matrix, `cof [[a, b], [c, d]] = [[d, -c], [-b, a]]`.
pub fn cof2(m: &Matrix2<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(1, 1)], -m[(1, 0)], -m[(0, 1)], m[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> LameMaterial {
        LameMaterial::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(LameMaterial::new(0.0, 1.0).is_err());
        assert!(LameMaterial::new(1.0, -0.5).is_err());
        assert!(LameMaterial::new(f64::NAN, 1.0).is_err());
        assert!(LameMaterial::new(1.0, 0.0).is_ok());
    }

    #[test]
    fn q3_hand_values() {
        let mat = unit();
        assert_eq!(mat.q3(&Matrix3::zeros()), 0.0);
        let mut skew = Matrix3::zeros();
        skew[(0, 1)] = 1.0;
        skew[(1, 0)] = -1.0;
        assert_eq!(mat.q3(&skew), 0.0);
        assert_eq!(mat.q3(&Matrix3::identity()), 15.0);
    }

    #[test]
    fn q2_hand_values() {
        let mat = unit();
        assert_eq!(mat.q2(&Matrix2::zeros()), 0.0);
        assert!((mat.q2(&Matrix2::identity()) - 20.0 / 3.0).abs() < 1e-14);
        assert!((mat.q2(&Matrix2::new(0.5, 0.0, 0.0, 0.0)) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn q2_minimized_identity() {
        let mat = unit();
        let (value, c) = mat.q2_minimized(&Matrix2::identity()).unwrap();
        assert!((value - 20.0 / 3.0).abs() < 1e-13);
        assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15);
        assert!((c[2] + 2.0 / 3.0).abs() < 1e-14);
        let (zero, c0) = mat.q2_minimized(&Matrix2::zeros()).unwrap();
        assert_eq!(zero, 0.0);
        assert_eq!(c0, Vector3::zeros());
    }

    #[test]
    fn c_map_matches_isotropic_closed_form() {
        let mat = LameMaterial::new(2.0, 3.0).unwrap();
        let f = Matrix2::new(0.3, -0.2, -0.2, 1.1);
        let c = mat.c_map(&f);
        let (_, numeric) = mat.q2_minimized(&f).unwrap();
        assert!((c - numeric).amax() < 1e-13);
        assert_eq!(unit().c_map(&Matrix2::identity())[2], -0.6666666666666666);
        assert_eq!(unit().q2(&Matrix2::identity()), 6.666666666666667);
    }

    #[test]
    fn l_map_hand_values() {
        let mut f = Matrix3::zeros();
        f.fixed_view_mut::<2, 2>(0, 0)
            .copy_from(&Matrix2::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!(l_map(&f), Vector3::zeros());
        let mut e13 = Matrix3::zeros();
        e13[(0, 2)] = 1.0;
        assert_eq!(l_map(&e13), Vector3::new(1.0, 0.0, 0.0));
        let mut e33 = Matrix3::zeros();
        e33[(2, 2)] = 2.0;
        assert_eq!(l_map(&e33), Vector3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn l_map_reproduces_symmetric_out_of_plane_part() {
        let f = Matrix3::new(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9);
        let lhs = sym3(&(f - embed(&upper2(&f))));
        let rhs = sym_outer_e3(&l_map(&f));
        assert!((lhs - rhs).norm() < 1e-15);
    }

    #[test]
    fn l2_examples() {
        let mat = unit();
        let e = Matrix2::new(0.3, 0.7, -0.1, 0.2);
        assert_eq!(mat.l2(&e, &Matrix2::zeros()), 0.0);
        let id = Matrix2::identity();
        assert!((mat.l2(&id, &id) - 20.0 / 3.0).abs() < 1e-13);
        let skew = Matrix2::new(0.0, 1.0, -1.0, 0.0);
        assert!(mat.l2(&e, &skew).abs() < 1e-14);
        let f = Matrix2::new(-0.4, 0.25, 0.5, 0.9);
        assert!((mat.l2(&e, &f) - mat.l2_stress(&e).component_mul(&f).sum()).abs() < 1e-14);
    }

    #[test]
    fn density_normalization_and_rotations() {
        let mat = LameMaterial::new(1.3, 0.7).unwrap();
        assert_eq!(mat.density(&Matrix3::identity()), 0.0);
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        assert!(mat.density(&r) < 1e-28);
    }

    #[test]
    fn moduli_identities() {
        let mat = LameMaterial::new(1.0, 1.0).unwrap();
        assert!((mat.young_modulus() - 2.5).abs() < 1e-15);
        assert!((mat.poisson_ratio() - 0.25).abs() < 1e-15);
        assert!((mat.bending_stiffness() - 2.5 / (12.0 * (1.0 - 0.0625))).abs() < 1e-15);
    }

    #[test]
    fn cofactor_examples() {
        assert_eq!(cof2(&Matrix2::identity()), Matrix2::identity());
        assert_eq!(
            cof2(&Matrix2::new(2.0, 0.0, 0.0, 3.0)),
            Matrix2::new(3.0, 0.0, 0.0, 2.0)
        );
        let m = Matrix2::new(1.5, -0.3, 2.2, 0.7);
        assert!((m.determinant() - 0.5 * m.component_mul(&cof2(&m)).sum()).abs() < 1e-14);
    }
}
