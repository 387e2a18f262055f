//! Minimization of the discrete limit energy by preconditioned L-BFGS, and
//! stationarity diagnostics of the result.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::airy::airy_from_displacement;
use crate::el::{
    boundary_residuals_with, el_residuals_with, interior_l2, BoundaryResiduals, ElSystem, INTERIOR_MARGIN,
};
use crate::energy::{energy_and_gradient_flat, energy_flat, weak_residual_fields};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linalg::{BandedCholesky, BandedSpd};
use crate::problem::{Displacement, PlateProblem};
use crate::stencil::DiffOp;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveConfig {
    pub max_iters: usize,
    /// Stop once the Euclidean norm of the nodal gradient drops below this.
    pub grad_tol: f64,
    /// Number of stored secant pairs.
    pub memory: usize,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo: f64,
    /// Step reduction factor of the backtracking search.
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub seed: u64,
    /// Amplitude of the uniform random initial state.
    pub init_amplitude: f64,
    /// Mass shift added to the preconditioner, relative to the nodal weights.
    pub precond_shift: f64,
    /// Random polynomial test pairs used by the final stationarity report.
    pub n_tests: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-8,
            memory: 10,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            seed: 0,
            init_amplitude: 1e-2,
            precond_shift: 1.0,
            n_tests: 20,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad(format!("backtrack must lie in (0, 1), got {}", self.backtrack));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad(format!("armijo must lie in (0, 1), got {}", self.armijo));
        }
        if self.memory < 1 {
            return bad("memory must be at least 1".into());
        }
        if !(self.precond_shift > 0.0) {
            return bad(format!("precond_shift must be positive, got {}", self.precond_shift));
        }
        if !(self.init_amplitude >= 0.0) {
            return bad(format!(
                "init_amplitude must be nonnegative, got {}",
                self.init_amplitude
            ));
        }
        Ok(())
    }
}

/// Starting point of a solve.
#[derive(Clone, Debug)]
pub enum InitialGuess {
    /// Uniform random nodal values of amplitude `init_amplitude`, seeded by `seed`.
    Random,
    Given(Displacement),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    MaxIters,
}

/// Weak residuals against random cubic test pairs, each normalized by the
/// Euclidean norm of the nodal test values.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StationaritySummary {
    /// `(|r1| / ‖ψ‖, |r2| / ‖φ‖)` per test pair.
    pub samples: Vec<(f64, f64)>,
    pub max_r1: Option<f64>,
    pub max_r2: Option<f64>,
    pub max: Option<f64>,
}

/// Strong-form and boundary diagnostics of a state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongDiagnostics {
    pub el_r1_l2: f64,
    pub el_r2_l2: f64,
    pub boundary: BoundaryResiduals,
    pub airy_ls_residual: f64,
    pub airy_cg_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub displacement: Displacement,
    /// Energy of the initial state followed by one entry per accepted step.
    pub energy_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
    pub final_energy: f64,
    pub final_grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub stationarity: StationaritySummary,
    pub strong: StrongDiagnostics,
}

/// Block preconditioner: the zero-state Gauss–Newton Hessian of the in-plane
/// and out-of-plane parts, each plus a mass shift, factored by banded Cholesky.
struct Preconditioner {
    n: usize,
    w_block: BandedCholesky,
    v_block: BandedCholesky,
}

/// Accumulates `Σ M_ab (s_a·x)(s_b·x)` for sparse rows `s_a`.
struct QuadraticAssembler {
    entries: Vec<(usize, usize, f64)>,
    bw: usize,
}

impl QuadraticAssembler {
    fn new() -> Self {
        Self {
            entries: Vec::new(),
            bw: 0,
        }
    }

    fn add(&mut self, rows: &[Vec<(usize, f64)>], m: &[[f64; 3]; 3]) {
        for (a, ra) in rows.iter().enumerate() {
            for (b, rb) in rows.iter().enumerate() {
                if m[a][b] == 0.0 {
                    continue;
                }
                for &(i, wi) in ra {
                    for &(j, wj) in rb {
                        if i >= j {
                            self.bw = self.bw.max(i - j);
                            self.entries.push((i, j, m[a][b] * wi * wj));
                        }
                    }
                }
            }
        }
    }

    fn finish(self, n: usize, diag_shift: &[f64]) -> Result<BandedCholesky> {
        let mut h = BandedSpd::zeros(n, self.bw);
        for (i, j, v) in self.entries {
            h.add(i, j, v);
        }
        for (i, s) in diag_shift.iter().enumerate() {
            h.add(i, i, *s);
        }
        h.cholesky()
    }
}

fn row_on(op: &DiffOp, r: usize, stride: usize, offset: usize, scale: f64) -> Vec<(usize, f64)> {
    op.row(r).map(|(c, w)| (stride * c + offset, scale * w)).collect()
}

impl Preconditioner {
    fn new(p: &PlateProblem, shift: f64) -> Result<Self> {
        let n = p.grid().len();
        let ops = p.ops();
        let mat = p.material();
        let (two_mu, k) = (2.0 * mat.mu(), mat.plane_trace_modulus());
        let form = |c: f64| {
            [
                [c * (two_mu + k), 0.0, c * k],
                [0.0, c * 2.0 * two_mu, 0.0],
                [c * k, 0.0, c * (two_mu + k)],
            ]
        };
        let g = p.total_thickness();
        let om = p.weights();

        let mut w = QuadraticAssembler::new();
        let mut v = QuadraticAssembler::new();
        for r in 0..n {
            let e11 = row_on(&ops.d1, r, 2, 0, 1.0);
            let e22 = row_on(&ops.d2, r, 2, 1, 1.0);
            let mut e12 = row_on(&ops.d2, r, 2, 0, 0.5);
            e12.extend(row_on(&ops.d1, r, 2, 1, 0.5));
            w.add(&[e11, e12, e22], &form(om[r] * g[r]));

            let k12 = row_on(&ops.d12, r, 1, 0, 1.0);
            v.add(
                &[row_on(&ops.d11, r, 1, 0, 1.0), k12, row_on(&ops.d22, r, 1, 0, 1.0)],
                &form(om[r] * g[r].powi(3) / 12.0),
            );
            // Linear part ½ sym(∇v ⊗ ∇(g2−g1)) of the stretching strain.
            let dd = p.offset_grad()[r];
            if dd != Vector2::zeros() {
                let d1 = row_on(&ops.d1, r, 1, 0, 1.0);
                let d2 = row_on(&ops.d2, r, 1, 0, 1.0);
                let scaled = |row: &[(usize, f64)], s: f64| row.iter().map(|&(c, x)| (c, s * x)).collect::<Vec<_>>();
                let mut s12 = scaled(&d1, 0.25 * dd[1]);
                s12.extend(scaled(&d2, 0.25 * dd[0]));
                v.add(
                    &[scaled(&d1, 0.5 * dd[0]), s12, scaled(&d2, 0.5 * dd[1])],
                    &form(om[r] * g[r]),
                );
            }
        }
        let w_shift: Vec<f64> = (0..2 * n).map(|i| shift * om[i / 2]).collect();
        let v_shift: Vec<f64> = om.iter().map(|o| shift * o).collect();
        Ok(Self {
            n,
            w_block: w.finish(2 * n, &w_shift)?,
            v_block: v.finish(n, &v_shift)?,
        })
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut rw = vec![0.0; 2 * n];
        for k in 0..n {
            rw[2 * k] = r[k];
            rw[2 * k + 1] = r[n + k];
        }
        let zw = self.w_block.solve(&rw);
        let zv = self.v_block.solve(&r[2 * n..]);
        let mut z = vec![0.0; 3 * n];
        for k in 0..n {
            z[k] = zw[2 * k];
            z[n + k] = zw[2 * k + 1];
        }
        z[2 * n..].copy_from_slice(&zv);
        z
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Removes the weighted means of `w1`, `w2` and `v`, which the energy cannot see.
pub fn fix_gauge(p: &PlateProblem, x: &mut [f64]) {
    let n = p.grid().len();
    let om = p.weights();
    let total: f64 = om.iter().sum();
    for block in x.chunks_mut(n) {
        let mean = dot(block, om) / total;
        block.iter_mut().for_each(|v| *v -= mean);
    }
}

pub fn minimize(p: &PlateProblem, cfg: &SolveConfig, init: InitialGuess) -> Result<SolveReport> {
    cfg.validate()?;
    let grid = *p.grid();
    let n = grid.len();
    let mut x = match init {
        InitialGuess::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..3 * n)
                .map(|_| cfg.init_amplitude * rng.gen_range(-1.0..=1.0))
                .collect()
        }
        InitialGuess::Given(d) => {
            grid.same_as(&d.grid())?;
            d.to_flat()
        }
    };
    fix_gauge(p, &mut x);
    let precond = Preconditioner::new(p, cfg.precond_shift)?;

    let (mut f, mut g) = energy_and_gradient_flat(p, &x);
    if !f.is_finite() {
        return Err(Error::NonFiniteEnergy { iteration: 0 });
    }
    let mut energy_trace = vec![f];
    let mut grad_norm_trace = vec![norm(&g)];
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(cfg.memory);
    let mut iterations = 0;
    let mut termination = Termination::MaxIters;

    while iterations < cfg.max_iters {
        if norm(&g) <= cfg.grad_tol {
            termination = Termination::GradTol;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        // A failed search along the quasi-Newton direction is retried once
        // along the preconditioned gradient with the memory cleared.
        for attempt in 0..2 {
            if attempt == 1 {
                history.clear();
            }
            let dir = lbfgs_direction(&g, &history, &precond);
            let slope = dot(&g, &dir);
            if !(slope < 0.0) {
                continue;
            }
            if let Some(step) = backtrack(p, cfg, &x, f, slope, &dir, iterations)? {
                accepted = Some(step);
                break;
            }
        }
        let Some((x_new, f_new)) = accepted else {
            return Err(Error::LineSearchFailed {
                iteration: iterations,
                grad_norm: norm(&g),
            });
        };
        let mut x_new = x_new;
        fix_gauge(p, &mut x_new);
        let (f_new, g_new) = {
            let (fe, ge) = energy_and_gradient_flat(p, &x_new);
            (if fe.is_finite() { fe } else { f_new }, ge)
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == cfg.memory {
                history.remove(0);
            }
            history.push((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
        energy_trace.push(f);
        grad_norm_trace.push(norm(&g));
    }
    if termination == Termination::MaxIters && norm(&g) <= cfg.grad_tol {
        termination = Termination::GradTol;
    }

    let displacement = Displacement::from_flat(grid, &x)?;
    let stationarity = stationarity_report(p, &displacement, cfg.n_tests, cfg.seed)?;
    let strong = strong_diagnostics(p, &displacement)?;
    Ok(SolveReport {
        displacement,
        final_energy: f,
        final_grad_norm: norm(&g),
        energy_trace,
        grad_norm_trace,
        iterations,
        termination,
        stationarity,
        strong,
    })
}

/// Two-loop recursion with the block preconditioner as initial inverse Hessian.
fn lbfgs_direction(g: &[f64], history: &[(Vec<f64>, Vec<f64>, f64)], precond: &Preconditioner) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    let mut r = precond.apply(&q);
    if let Some((s, y, _)) = history.last() {
        let hy = precond.apply(y);
        let gamma = dot(s, y) / dot(y, &hy);
        if gamma.is_finite() && gamma > 0.0 {
            r.iter_mut().for_each(|v| *v *= gamma);
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &r);
        r.iter_mut().zip(s).for_each(|(ri, si)| *ri += (a - b) * si);
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

/// Armijo backtracking from a unit step. Returns `None` when no step gives
/// sufficient decrease.
fn backtrack(
    p: &PlateProblem,
    cfg: &SolveConfig,
    x: &[f64],
    f: f64,
    slope: f64,
    dir: &[f64],
    iteration: usize,
) -> Result<Option<(Vec<f64>, f64)>> {
    let slack = 1e-14 * f.abs();
    let mut alpha = 1.0;
    for _ in 0..cfg.max_backtracks {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + alpha * d).collect();
        let ft = energy_flat(p, &trial);
        if ft.is_finite() && ft <= f + cfg.armijo * alpha * slope + slack && ft < f + slack {
            return Ok(Some((trial, ft)));
        }
        if ft.is_nan() && alpha < 1e-12 {
            return Err(Error::NonFiniteEnergy { iteration });
        }
        alpha *= cfg.backtrack;
    }
    Ok(None)
}

/// Random polynomial of total degree at most 3 with coefficients in `[-1, 1]`,
/// sampled at the nodes of `p`'s grid.
fn random_cubic(p: &PlateProblem, rng: &mut ChaCha8Rng) -> ScalarField {
    let coef: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    ScalarField::from_fn(*p.grid(), |x, y| {
        let mono = [
            1.0,
            x,
            y,
            x * x,
            x * y,
            y * y,
            x * x * x,
            x * x * y,
            x * y * y,
            y * y * y,
        ];
        mono.iter().zip(&coef).map(|(m, c)| m * c).sum()
    })
}

/// Weak residuals against `n_tests` random cubic test pairs.
pub fn stationarity_report(
    p: &PlateProblem,
    d: &Displacement,
    n_tests: usize,
    seed: u64,
) -> Result<StationaritySummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7e57);
    let mut samples = Vec::with_capacity(n_tests);
    for _ in 0..n_tests {
        let a = random_cubic(p, &mut rng);
        let b = random_cubic(p, &mut rng);
        let psi = a.zip_map(&b, |x, y| Vector2::new(*x, *y))?;
        let phi = random_cubic(p, &mut rng);
        let (r1, r2) = weak_residual_fields(p, d, &psi, &phi)?;
        let psi_norm = (dot(&a.values, &a.values) + dot(&b.values, &b.values)).sqrt();
        let phi_norm = norm(&phi.values);
        samples.push((r1.abs() / psi_norm, r2.abs() / phi_norm));
    }
    let max_of = |f: fn(&(f64, f64)) -> f64| samples.iter().map(f).reduce(f64::max);
    let max_r1 = max_of(|s| s.0);
    let max_r2 = max_of(|s| s.1);
    Ok(StationaritySummary {
        max: max_r1.zip(max_r2).map(|(a, b)| a.max(b)),
        samples,
        max_r1,
        max_r2,
    })
}

/// Interior strong residual norms, boundary residuals and Airy fit quality.
pub fn strong_diagnostics(p: &PlateProblem, d: &Displacement) -> Result<StrongDiagnostics> {
    let airy = airy_from_displacement(p, d)?;
    let boundary = boundary_residuals_with(p, d, &airy)?;
    let (airy_ls_residual, airy_cg_iterations) = (airy.ls_residual, airy.cg_iterations);
    let el = el_residuals_with(p, d, airy, ElSystem::Consistent)?;
    Ok(StrongDiagnostics {
        el_r1_l2: interior_l2(&el.r1, INTERIOR_MARGIN),
        el_r2_l2: interior_l2(&el.r2, INTERIOR_MARGIN),
        boundary,
        airy_ls_residual,
        airy_cg_iterations,
    })
}
