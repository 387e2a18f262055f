use fvk_core::el::{eta, omega_g, xi, zeta};
use fvk_core::energy::energy_ig;
use fvk_core::gamma::{energy_3d, s_map, Quadrature, RecoveryDeformation};
use fvk_core::material::{cof2, embed, sym_outer_e3};
use fvk_core::ops;
use fvk_core::problem::zero_matrix3;
use fvk_core::solver::{fix_gauge, minimize, stationarity_report, InitialGuess, SolveConfig};
use fvk_core::{
    Displacement, DisplacementExpr, Expr, Grid2D, GridField, GrowthTensor, LameMaterial, PlateProblem, ScalarField,
    ThicknessPair,
};
use nalgebra::{Matrix2, Matrix3, Rotation3, Vector2, Vector3};
use proptest::prelude::*;

fn e(s: &str) -> Expr {
    Expr::parse(s).unwrap()
}

fn growth(eps: &[(usize, usize, &str)], kappa: &[(usize, usize, &str)]) -> GrowthTensor {
    let mut a = zero_matrix3();
    for (r, c, s) in eps {
        a[*r][*c] = e(s);
    }
    let mut b = zero_matrix3();
    for (r, c, s) in kappa {
        b[*r][*c] = e(s);
    }
    GrowthTensor::new(a, b)
}

fn sample_growth() -> GrowthTensor {
    growth(
        &[(0, 0, "0.1*x2"), (1, 1, "0.05*x1^2")],
        &[(0, 0, "0.5 + 0.3*x2"), (1, 1, "0.2*x1"), (0, 1, "0.1")],
    )
}

fn tapered_problem(n: usize) -> PlateProblem {
    PlateProblem::new(
        Grid2D::unit_square(n).unwrap(),
        LameMaterial::new(1.0, 1.0).unwrap(),
        ThicknessPair::new(e("0.5"), e("0.5 + 0.25*x1")),
        sample_growth(),
    )
    .unwrap()
}

fn smooth_displacement() -> DisplacementExpr {
    DisplacementExpr {
        w: [e("0.1*sin(x2)"), e("0.1*x1*x2")],
        v: e("0.3*x1^2 - 0.2*x1*x2 + 0.1*sin(x2)"),
    }
}

fn material() -> impl Strategy<Value = LameMaterial> {
    (0.1f64..10.0, 0.0f64..10.0).prop_map(|(mu, lambda)| LameMaterial::new(mu, lambda).unwrap())
}

fn matrix3(scale: f64) -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform9(-scale..scale).prop_map(|a| Matrix3::from_row_slice(&a))
}

fn matrix2(scale: f64) -> impl Strategy<Value = Matrix2<f64>> {
    prop::array::uniform4(-scale..scale).prop_map(|a| Matrix2::from_row_slice(&a))
}

fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform3(-3.0f64..3.0).prop_map(|a| Rotation3::from_scaled_axis(Vector3::from(a)).into_inner())
}

fn random_displacement(grid: Grid2D, seed: u64, amplitude: f64) -> Displacement {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        amplitude * (((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0)
    };
    Displacement {
        w: GridField::from_fn(grid, |_, _| Vector2::new(next(), next())),
        v: ScalarField::from_fn(grid, |_, _| next()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn q3_sees_only_the_symmetric_part(mat in material(), m in matrix3(2.0)) {
        let sym = (m + m.transpose()) * 0.5;
        prop_assert_eq!(mat.q3(&m), mat.q3(&sym));
    }

    #[test]
    fn c_map_completion_attains_q2(mat in material(), f in matrix2(3.0)) {
        let c = mat.c_map(&f);
        let completed = mat.q3(&(embed(&f) + sym_outer_e3(&c)));
        let q2 = mat.q2(&f);
        prop_assert!((completed - q2).abs() <= 1e-10 * (1.0 + q2));
    }

    #[test]
    fn density_is_frame_indifferent_and_isotropic(mat in material(), f in matrix3(2.0), r in rotation()) {
        let w = mat.density(&f);
        prop_assert!((mat.density(&(r * f)) - w).abs() <= 1e-12 * (1.0 + w));
        prop_assert!((mat.density(&(f * r)) - w).abs() <= 1e-12 * (1.0 + w));
        prop_assert!(mat.density(&r).abs() <= 1e-12);
    }

    #[test]
    fn moduli_satisfy_their_identities(mat in material()) {
        let (mu, lambda) = (mat.mu(), mat.lambda());
        let (s, nu, b) = (mat.young_modulus(), mat.poisson_ratio(), mat.bending_stiffness());
        prop_assert!((s * (mu + lambda) - mu * (2.0 * mu + 3.0 * lambda)).abs() <= 1e-12 * s * (mu + lambda));
        prop_assert!((nu * 2.0 * (lambda + mu) - lambda).abs() <= 1e-12 * (1.0 + lambda));
        prop_assert!((b * 12.0 * (1.0 - nu * nu) - s).abs() <= 1e-12 * s);
        prop_assert!((s / (2.0 * mu) - (1.0 + nu)).abs() <= 1e-12 * (1.0 + nu));
    }

    #[test]
    fn taylor_expansion_of_density(mat in material(), z in matrix3(1.0)) {
        let z = (z + z.transpose()) * 0.5;
        let half_q3 = 0.5 * mat.q3(&z);
        let scale = (mat.mu() + mat.lambda()) * (1.0 + z.norm()).powi(4);
        for h in [1e-2, 1e-3, 1e-4] {
            let w = mat.density(&(Matrix3::identity() + z * (h * h))) / h.powi(4);
            prop_assert!((w - half_q3).abs() <= 20.0 * scale * h * h, "h = {h}: {w} vs {half_q3}");
        }
    }

    #[test]
    fn limit_energy_is_shift_invariant(seed in any::<u64>(), c in prop::array::uniform3(-5.0f64..5.0)) {
        let p = tapered_problem(9);
        let d = random_displacement(*p.grid(), seed, 0.2);
        let base = energy_ig(&p, &d).unwrap();
        let mut moved = d.clone();
        moved.w = moved.w.map(|w| w + Vector2::new(c[0], c[1]));
        moved.v = moved.v.map(|v| v + c[2]);
        prop_assert!((energy_ig(&p, &moved).unwrap() - base).abs() <= 1e-12 * base.max(1e-300));
    }

    #[test]
    fn gauge_projection_preserves_energy(seed in any::<u64>()) {
        let p = tapered_problem(9);
        let d = random_displacement(*p.grid(), seed, 0.5);
        let mut x = d.to_flat();
        let before = energy_ig(&p, &d).unwrap();
        fix_gauge(&p, &mut x);
        let after = energy_ig(&p, &Displacement::from_flat(*p.grid(), &x).unwrap()).unwrap();
        prop_assert!((after - before).abs() <= 1e-12 * before);
    }

    #[test]
    fn limit_energy_is_nonnegative(seed in any::<u64>()) {
        let p = tapered_problem(9);
        let d = random_displacement(*p.grid(), seed, 1.0);
        prop_assert!(energy_ig(&p, &d).unwrap() >= 0.0);
    }

    #[test]
    fn bending_energy_scales_with_cube_of_thickness(c in 0.05f64..2.0) {
        let bend = growth(&[], &[(0, 0, "1 + 0.2*x2"), (1, 1, "0.5"), (0, 1, "0.3")]);
        let at = |half: f64| {
            let p = PlateProblem::new(
                Grid2D::unit_square(9).unwrap(),
                LameMaterial::new(1.0, 2.0).unwrap(),
                ThicknessPair::uniform(half),
                bend.clone(),
            )
            .unwrap();
            energy_ig(&p, &Displacement::zeros(*p.grid())).unwrap()
        };
        let ratio = at(c) / at(0.5);
        prop_assert!((ratio - (2.0 * c).powi(3)).abs() <= 1e-12 * (2.0 * c).powi(3));
    }

    #[test]
    fn recovery_energy_is_frame_indifferent(r in rotation(), t in prop::array::uniform3(-3.0f64..3.0)) {
        let p = tapered_problem(9);
        let d = smooth_displacement();
        let quad = Quadrature { n_inplane: 9, n_thickness: 3 };
        let plain = energy_3d(&p, &RecoveryDeformation::new(&p, &d, 0.08), quad).unwrap();
        let moved = RecoveryDeformation::new(&p, &d, 0.08).with_rigid_motion(r, Vector3::from(t));
        let rotated = energy_3d(&p, &moved, quad).unwrap();
        prop_assert!((rotated - plain).abs() <= 1e-12 * plain);
    }

    #[test]
    fn cofactor_inversion_round_trips(m in matrix2(5.0)) {
        let m = (m + m.transpose()) * 0.5;
        prop_assert_eq!(cof2(&cof2(&m)), m);
    }
}

#[test]
fn constant_thickness_removes_every_thickness_term() {
    for half in [0.3, 0.5, 1.7] {
        let p = PlateProblem::new(
            Grid2D::unit_square(17).unwrap(),
            LameMaterial::new(1.0, 1.0).unwrap(),
            ThicknessPair::uniform(half),
            sample_growth(),
        )
        .unwrap();
        let d = smooth_displacement().sample(p.grid()).unwrap();
        let phi = ScalarField::from_fn(*p.grid(), |x, y| (x * y).sin() + x.powi(4));
        for f in [zeta(&p, &phi), eta(&p, &d.v), xi(&p, &phi), omega_g(&p)] {
            assert_eq!(f.unwrap().max_abs(), 0.0);
        }
    }
}

#[test]
fn recovery_normalization_is_first_order() {
    let p = tapered_problem(9);
    let d = smooth_displacement();
    let sup = |h: f64| {
        let u = RecoveryDeformation::new(&p, &d, h);
        let mut worst = 0.0f64;
        for i in 0..=8 {
            for j in 0..=8 {
                let (x1, x2) = (i as f64 / 8.0, j as f64 / 8.0);
                for t in [-0.5, -0.25, 0.0, 0.25, 0.5] {
                    let x3 = s_map(&p, h, x1, x2, t);
                    let dev = u.deformation(x1, x2, x3) - Vector3::new(x1, x2, 0.0);
                    worst = worst.max(dev.norm());
                }
            }
        }
        worst
    };
    let devs: Vec<f64> = [0.08, 0.04, 0.02, 0.01].iter().map(|h| sup(*h)).collect();
    for (k, h) in [0.08, 0.04, 0.02, 0.01].iter().enumerate() {
        assert!(devs[k] / h < 2.0, "sup deviation {} at h = {h}", devs[k]);
    }
    for w in devs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order > 0.9, "normalization order {order}");
    }
}

#[test]
fn solves_are_deterministic_and_descending() {
    let p = tapered_problem(17);
    let cfg = SolveConfig {
        grad_tol: 1e-6,
        seed: 9,
        ..Default::default()
    };
    let a = minimize(&p, &cfg, InitialGuess::Random).unwrap();
    let b = minimize(&p, &cfg, InitialGuess::Random).unwrap();
    assert_eq!(a.energy_trace, b.energy_trace);
    assert_eq!(a.grad_norm_trace, b.grad_norm_trace);
    assert_eq!(a.displacement, b.displacement);
    assert_eq!(a.stationarity, b.stationarity);
    for w in a.energy_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-14 * w[0].abs());
    }
}

#[test]
fn stationarity_tracks_the_gradient_tolerance() {
    let p = tapered_problem(17);
    let mut ratios = Vec::new();
    for tol in [1e-4, 1e-5, 1e-6] {
        let cfg = SolveConfig {
            grad_tol: tol,
            ..Default::default()
        };
        let r = minimize(&p, &cfg, InitialGuess::Random).unwrap();
        let stat = r.stationarity.max.unwrap();
        assert!(stat <= 10.0 * tol, "tol {tol:e}: stationarity {stat:e}");
        ratios.push(stat / r.final_grad_norm);
    }
    let (lo, hi) = ratios
        .iter()
        .fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(hi / lo < 10.0, "stationarity / gradient ratios {ratios:?}");
}

#[test]
fn random_states_are_visibly_non_stationary() {
    let p = tapered_problem(17);
    let d = random_displacement(*p.grid(), 4, 0.3);
    let s = stationarity_report(&p, &d, 20, 1).unwrap();
    assert!(s.max.unwrap() >= 1e-2);
    assert!(stationarity_report(&p, &d, 0, 1).unwrap().max.is_none());
}

#[test]
fn laplacian_and_biharmonic_are_exact_on_low_degree_polynomials() {
    let grid = Grid2D::unit_square(9).unwrap();
    let f = ScalarField::from_fn(grid, |x, y| x.powi(4) + x * x * y * y);
    let bih = ops::biharmonic(&f).unwrap();
    for v in bih.values {
        assert!((v - 32.0).abs() < 1e-8, "{v}");
    }
}
