//! Projected Landweber iteration and operator-norm machinery for the linear
//! inversion step.
//!
//! The iteration is written against the [`LandweberOperator`] abstraction —
//! a real-linear map from a real solution vector to complex data — so the
//! same loop drives both the masked Fourier-grid operator used by the imaging
//! pipeline and small dense systems used as oracles in tests. From `x₀ = 0`
//! the unconstrained iteration is linear in the data and converges to the
//! minimum-norm least-squares solution for step sizes `0 < ω < 2/‖A‖²`;
//! early stopping (the iteration count) is the regularization parameter.

use ndarray::Array2;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{
    grid_adjoint, grid_forward, operator_norm_sq, FrequencyGrid, ImageGrid, POWER_ITER_CAP,
    POWER_ITER_RTOL,
};

/// Landweber configuration. `max_iters` doubles as the regularization
/// parameter; `positivity` switches on the nonnegativity projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandweberConfig {
    /// Relaxation step ω; must satisfy `0 < ω < 2/‖A‖²`.
    pub step: f64,
    /// Iteration budget (and regularization strength).
    pub max_iters: usize,
    /// Clamp the iterate at zero after every step.
    pub positivity: bool,
    /// Stop early when the relative update drops below this; 0 disables
    /// early stopping.
    pub stop_rtol: f64,
}

impl LandweberConfig {
    /// Default parameters for a given operator norm: `ω = 1/‖A‖²`,
    /// 200 iterations, positivity on, early-stop tolerance 1e-6.
    pub fn for_norm_sq(norm_sq: f64) -> Self {
        LandweberConfig { step: 1.0 / norm_sq, max_iters: 200, positivity: true, stop_rtol: 1e-6 }
    }

    /// Check `0 < ω < 2/norm_sq` (with a 1e-12 relative margin).
    pub fn validate_step(&self, norm_sq: f64) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if norm_sq > 0.0 && self.step * norm_sq >= 2.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidConfig(format!(
                "step {} violates omega < 2/||A||^2 = {}",
                self.step,
                2.0 / norm_sq
            )));
        }
        Ok(())
    }
}

/// A real-linear forward map `A : R^x_len → C^y_len` together with its
/// adjoint with respect to `Re⟨·,·⟩` on the data side.
pub trait LandweberOperator {
    fn x_len(&self) -> usize;
    fn y_len(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<Complex64>;
    fn apply_adjoint(&self, y: &[Complex64]) -> Vec<f64>;
}

/// Result of a Landweber run.
#[derive(Debug, Clone)]
pub struct LandweberSolve {
    /// Final iterate.
    pub x: Vec<f64>,
    /// Iterations actually performed.
    pub iterations: usize,
    /// Data-space residual norm `‖y − A x_k‖` recorded before every update.
    pub residual_norms: Vec<f64>,
}

fn l2_complex(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn l2_real(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Number of iterations a residual comparison spans in the divergence check.
const DIVERGENCE_WINDOW: usize = 50;
const DIVERGENCE_FACTOR: f64 = 10.0;

fn iterate(
    op: &dyn LandweberOperator,
    y: &[Complex64],
    cfg: &LandweberConfig,
    check_divergence: bool,
) -> Result<LandweberSolve> {
    assert_eq!(y.len(), op.y_len(), "data length mismatch");
    let mut x = vec![0.0; op.x_len()];
    let mut residual_norms = Vec::with_capacity(cfg.max_iters);
    let mut iterations = 0;

    for k in 0..cfg.max_iters {
        let ax = op.apply(&x);
        let r: Vec<Complex64> = y.iter().zip(&ax).map(|(yi, ai)| yi - ai).collect();
        let res_norm = l2_complex(&r);
        residual_norms.push(res_norm);
        if check_divergence && k >= DIVERGENCE_WINDOW {
            let earlier = residual_norms[k - DIVERGENCE_WINDOW];
            if res_norm > DIVERGENCE_FACTOR * earlier {
                return Err(Error::DivergenceDetected { iteration: k });
            }
        }

        let g = op.apply_adjoint(&r);
        let mut delta_sq = 0.0;
        let mut x_norm_sq = 0.0;
        for (xi, gi) in x.iter_mut().zip(&g) {
            let next = if cfg.positivity {
                (*xi + cfg.step * gi).max(0.0)
            } else {
                *xi + cfg.step * gi
            };
            let d = next - *xi;
            delta_sq += d * d;
            x_norm_sq += next * next;
            *xi = next;
        }
        iterations = k + 1;
        if cfg.stop_rtol > 0.0 && delta_sq.sqrt() <= cfg.stop_rtol * x_norm_sq.sqrt().max(1e-300) {
            break;
        }
    }

    Ok(LandweberSolve { x, iterations, residual_norms })
}

/// Run the (projected) Landweber iteration `x ← P₊(x + ω·A*(y − A x))` from
/// `x₀ = 0`. Fails with `DivergenceDetected` when the residual norm grows by
/// more than 10× over any 50-iteration window.
pub fn landweber_run(
    op: &dyn LandweberOperator,
    y: &[Complex64],
    cfg: &LandweberConfig,
) -> Result<LandweberSolve> {
    iterate(op, y, cfg, true)
}

/// The linear regularization map `R : y ↦ x` after exactly `max_iters`
/// unconstrained iterations (no early stopping, no projection).
pub fn apply_regularizer(
    op: &dyn LandweberOperator,
    y: &[Complex64],
    cfg: &LandweberConfig,
) -> Result<Vec<f64>> {
    let linear = LandweberConfig { positivity: false, stop_rtol: 0.0, ..*cfg };
    Ok(iterate(op, y, &linear, false)?.x)
}

/// Adjoint of [`apply_regularizer`]: with `R = ω·Σ_j (I − ωA*A)^j A*`, the
/// adjoint is `R* = ω·A·Σ_j (I − ωA*A)^j`.
fn apply_regularizer_adjoint(
    op: &dyn LandweberOperator,
    x: &[f64],
    cfg: &LandweberConfig,
) -> Vec<Complex64> {
    if cfg.max_iters == 0 {
        return vec![Complex64::ZERO; op.y_len()];
    }
    let mut v = x.to_vec();
    let mut sum = v.clone();
    for _ in 1..cfg.max_iters {
        let av = op.apply(&v);
        let aav = op.apply_adjoint(&av);
        for (vi, gi) in v.iter_mut().zip(&aav) {
            *vi -= cfg.step * gi;
        }
        for (si, vi) in sum.iter_mut().zip(&v) {
            *si += vi;
        }
    }
    for s in sum.iter_mut() {
        *s *= cfg.step;
    }
    op.apply(&sum)
}

/// Operator norm of the unconstrained `max_iters`-step Landweber map,
/// estimated by power iteration on `R Rᵀ` over the solution space.
/// Requires `positivity = false` (the norm of the linear map).
pub fn regularizer_norm(op: &dyn LandweberOperator, cfg: &LandweberConfig) -> Result<f64> {
    if cfg.positivity {
        return Err(Error::InvalidConfig(
            "regularizer norm is defined for the linear (positivity off) map".into(),
        ));
    }
    if cfg.max_iters == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b57);
    let mut u: Vec<f64> = (0..op.x_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n0 = l2_real(&u);
    for ui in u.iter_mut() {
        *ui /= n0;
    }

    let mut lambda_prev = f64::INFINITY;
    for _ in 0..POWER_ITER_CAP {
        let w = apply_regularizer_adjoint(op, &u, cfg);
        let t = apply_regularizer(op, &w, cfg)?;
        let lambda: f64 = u.iter().zip(&t).map(|(a, b)| a * b).sum();
        let tn = l2_real(&t);
        if tn == 0.0 {
            return Ok(0.0);
        }
        if (lambda - lambda_prev).abs() <= POWER_ITER_RTOL * lambda.abs() {
            return Ok(lambda.max(0.0).sqrt());
        }
        lambda_prev = lambda;
        u = t.into_iter().map(|x| x / tn).collect();
    }
    Err(Error::NoConvergence(POWER_ITER_CAP))
}

/// The masked Fourier-grid operator as a [`LandweberOperator`]: solution
/// vectors are flattened M×M images, data vectors are the unmasked lattice
/// values in row-major order.
pub struct GridOperator<'a> {
    grid: &'a FrequencyGrid,
    masked: Vec<(usize, usize)>,
}

impl<'a> GridOperator<'a> {
    pub fn new(grid: &'a FrequencyGrid) -> Self {
        let masked = grid.masked_indices();
        GridOperator { grid, masked }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        self.grid
    }

    /// Extract the masked entries of a full visibility grid in the
    /// operator's data ordering.
    pub fn gather(&self, vis: &Array2<Complex64>) -> Vec<Complex64> {
        self.masked.iter().map(|&(k, l)| vis[[k, l]]).collect()
    }

    fn scatter(&self, y: &[Complex64]) -> Array2<Complex64> {
        let m = self.grid.size();
        let mut vis = Array2::from_elem((m, m), Complex64::ZERO);
        for (&(k, l), &v) in self.masked.iter().zip(y) {
            vis[[k, l]] = v;
        }
        vis
    }

    fn unflatten(&self, x: &[f64]) -> ImageGrid {
        let m = self.grid.size();
        let pixels = Array2::from_shape_fn((m, m), |(a, b)| x[a * m + b]);
        ImageGrid::new(pixels, self.grid.pixel_size()).expect("internal image shape")
    }

    pub fn image_from_vec(&self, x: Vec<f64>) -> ImageGrid {
        self.unflatten(&x)
    }
}

impl LandweberOperator for GridOperator<'_> {
    fn x_len(&self) -> usize {
        self.grid.size() * self.grid.size()
    }

    fn y_len(&self) -> usize {
        self.masked.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<Complex64> {
        let image = self.unflatten(x);
        let vis = grid_forward(&image, self.grid).expect("conjugate grids");
        self.gather(&vis)
    }

    fn apply_adjoint(&self, y: &[Complex64]) -> Vec<f64> {
        let vis = self.scatter(y);
        let image = grid_adjoint(&vis, self.grid).expect("conjugate grids");
        let m = self.grid.size();
        let mut out = vec![0.0; m * m];
        for ((a, b), v) in image.pixels().indexed_iter() {
            out[a * m + b] = *v;
        }
        out
    }
}

/// Outcome of a grid-space Landweber reconstruction.
#[derive(Debug, Clone)]
pub struct LandweberOutcome {
    pub image: ImageGrid,
    pub iterations: usize,
    pub final_residual: f64,
}

/// Reconstruct an image from a masked visibility grid with projected
/// Landweber. `vis` entries outside the grid mask are ignored.
pub fn landweber(
    vis: &Array2<Complex64>,
    grid: &FrequencyGrid,
    cfg: &LandweberConfig,
) -> Result<LandweberOutcome> {
    let norm_sq = operator_norm_sq(grid)?;
    cfg.validate_step(norm_sq)?;
    let op = GridOperator::new(grid);
    let y = op.gather(vis);
    let solve = landweber_run(&op, &y, cfg)?;
    let final_residual = {
        let ax = op.apply(&solve.x);
        l2_complex(&y.iter().zip(&ax).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    Ok(LandweberOutcome {
        image: op.image_from_vec(solve.x),
        iterations: solve.iterations,
        final_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    /// Dense complex system embedded as a real-linear operator: the solution
    /// is a complex vector stored as interleaved (re, im) pairs.
    pub struct DenseComplexOperator {
        pub a: DMatrix<Complex64>,
    }

    impl LandweberOperator for DenseComplexOperator {
        fn x_len(&self) -> usize {
            2 * self.a.ncols()
        }

        fn y_len(&self) -> usize {
            self.a.nrows()
        }

        fn apply(&self, x: &[f64]) -> Vec<Complex64> {
            let n = self.a.ncols();
            (0..self.a.nrows())
                .map(|i| {
                    let mut acc = Complex64::ZERO;
                    for j in 0..n {
                        let xj = Complex64::new(x[2 * j], x[2 * j + 1]);
                        acc += self.a[(i, j)] * xj;
                    }
                    acc
                })
                .collect()
        }

        fn apply_adjoint(&self, y: &[Complex64]) -> Vec<f64> {
            let n = self.a.ncols();
            let mut out = vec![0.0; 2 * n];
            for j in 0..n {
                let mut acc = Complex64::ZERO;
                for (i, yi) in y.iter().enumerate() {
                    acc += self.a[(i, j)].conj() * yi;
                }
                out[2 * j] = acc.re;
                out[2 * j + 1] = acc.im;
            }
            out
        }
    }

    fn random_dense(rows: usize, cols: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_y(len: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn spectral_norm_sq(a: &DMatrix<Complex64>) -> f64 {
        a.clone().svd(false, false).singular_values[0].powi(2)
    }

    #[test]
    fn zero_data_stays_at_zero() {
        let op = DenseComplexOperator { a: random_dense(6, 4, 1) };
        let cfg = LandweberConfig {
            step: 0.1,
            max_iters: 50,
            positivity: false,
            stop_rtol: 0.0,
        };
        let solve = landweber_run(&op, &vec![Complex64::ZERO; 6], &cfg).unwrap();
        assert!(solve.x.iter().all(|&v| v == 0.0));
        assert!(solve.residual_norms.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn unconstrained_converges_to_pseudoinverse() {
        let a = random_dense(20, 10, 2);
        let y = random_y(20, 3);
        let op = DenseComplexOperator { a: a.clone() };
        let cfg = LandweberConfig {
            step: 1.0 / spectral_norm_sq(&a),
            max_iters: 5000,
            positivity: false,
            stop_rtol: 0.0,
        };
        let solve = landweber_run(&op, &y, &cfg).unwrap();

        let pinv = a.svd(true, true).pseudo_inverse(1e-12).unwrap();
        let yv = nalgebra::DVector::from_vec(y.clone());
        let want = &pinv * yv;
        let got: Vec<Complex64> = (0..10)
            .map(|j| Complex64::new(solve.x[2 * j], solve.x[2 * j + 1]))
            .collect();
        let err: f64 = got
            .iter()
            .zip(want.iter())
            .map(|(g, w)| (g - w).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale: f64 = want.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
        assert!(err <= 1e-4 * scale, "relative error {}", err / scale);
    }

    #[test]
    fn residual_norm_is_monotone_for_valid_step() {
        let a = random_dense(12, 7, 4);
        let y = random_y(12, 5);
        let op = DenseComplexOperator { a: a.clone() };
        let cfg = LandweberConfig {
            step: 1.5 / spectral_norm_sq(&a),
            max_iters: 400,
            positivity: false,
            stop_rtol: 0.0,
        };
        let solve = landweber_run(&op, &y, &cfg).unwrap();
        for w in solve.residual_norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "residual grew: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn unconstrained_map_is_linear() {
        let a = random_dense(10, 6, 6);
        let op = DenseComplexOperator { a: a.clone() };
        let cfg = LandweberConfig {
            step: 1.0 / spectral_norm_sq(&a),
            max_iters: 120,
            positivity: false,
            stop_rtol: 0.0,
        };
        let y1 = random_y(10, 7);
        let y2 = random_y(10, 8);
        let alpha = -0.83;
        let combo: Vec<Complex64> = y1.iter().zip(&y2).map(|(a, b)| a * alpha + b).collect();
        let r1 = apply_regularizer(&op, &y1, &cfg).unwrap();
        let r2 = apply_regularizer(&op, &y2, &cfg).unwrap();
        let rc = apply_regularizer(&op, &combo, &cfg).unwrap();
        let scale = l2_real(&rc).max(1.0);
        for i in 0..rc.len() {
            let want = alpha * r1[i] + r2[i];
            assert!((rc[i] - want).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn divergence_is_detected_for_bad_step() {
        let a = random_dense(8, 5, 9);
        let op = DenseComplexOperator { a: a.clone() };
        let cfg = LandweberConfig {
            step: 4.0 / spectral_norm_sq(&a), // > 2/||A||^2: diverges
            max_iters: 2000,
            positivity: false,
            stop_rtol: 0.0,
        };
        match landweber_run(&op, &random_y(8, 10), &cfg) {
            Err(Error::DivergenceDetected { .. }) => {}
            other => panic!("expected DivergenceDetected, got {other:?}"),
        }
    }

    /// Dense matrix of the regularizer map, built column by column from the
    /// real basis of the data space.
    fn dense_regularizer(op: &dyn LandweberOperator, cfg: &LandweberConfig) -> DMatrix<f64> {
        let m = op.y_len();
        let n = op.x_len();
        let mut mat = DMatrix::zeros(n, 2 * m);
        for j in 0..m {
            for (part, offset) in [(Complex64::new(1.0, 0.0), 0), (Complex64::new(0.0, 1.0), 1)] {
                let mut y = vec![Complex64::ZERO; m];
                y[j] = part;
                let x = apply_regularizer(op, &y, cfg).unwrap();
                for i in 0..n {
                    mat[(i, 2 * j + offset)] = x[i];
                }
            }
        }
        mat
    }

    #[test]
    fn regularizer_norm_zero_iterations_is_zero() {
        let op = DenseComplexOperator { a: random_dense(6, 4, 11) };
        let cfg = LandweberConfig { step: 0.1, max_iters: 0, positivity: false, stop_rtol: 0.0 };
        assert_eq!(regularizer_norm(&op, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn regularizer_norm_single_step_matches_dense_oracle() {
        let grid = FrequencyGrid::conjugate_to(8, 1.0, 0.3).unwrap();
        let op = GridOperator::new(&grid);
        let norm_sq = operator_norm_sq(&grid).unwrap();
        let cfg = LandweberConfig {
            step: 1.0 / norm_sq,
            max_iters: 1,
            positivity: false,
            stop_rtol: 0.0,
        };
        let got = regularizer_norm(&op, &cfg).unwrap();
        let dense = dense_regularizer(&op, &cfg);
        let want = dense.svd(false, false).singular_values[0];
        assert_relative_eq!(got, want, max_relative = 0.01);
    }

    #[test]
    fn regularizer_norm_many_steps_approaches_inverse_norm() {
        // On a well-posed dense instance R_K → A⁺, so ‖R_K‖ → 1/σ_min.
        let a = random_dense(8, 4, 12);
        let op = DenseComplexOperator { a: a.clone() };
        let svd = a.clone().svd(false, false);
        let sv = &svd.singular_values;
        let cfg = LandweberConfig {
            step: 1.0 / (sv[0] * sv[0]),
            max_iters: 20_000,
            positivity: false,
            stop_rtol: 0.0,
        };
        let got = regularizer_norm(&op, &cfg).unwrap();
        let want = 1.0 / sv[sv.len() - 1];
        assert_relative_eq!(got, want, max_relative = 0.02);
    }

    #[test]
    fn regularizer_norm_rejects_positivity() {
        let op = DenseComplexOperator { a: random_dense(4, 3, 13) };
        let cfg = LandweberConfig { step: 0.1, max_iters: 10, positivity: true, stop_rtol: 0.0 };
        assert!(regularizer_norm(&op, &cfg).is_err());
    }

    #[test]
    fn grid_landweber_recovers_exact_data_on_full_mask() {
        // Noiseless data from a nonnegative truth with a full mask: A*A is a
        // multiple of the identity, so the projected iteration recovers the
        // image essentially immediately.
        let m = 16;
        let pixel = 1.0f64;
        let grid = FrequencyGrid::full(m, pixel).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut truth = ImageGrid::zeros(m, pixel).unwrap();
        for a in 0..m {
            for b in 0..m {
                truth.pixels_mut()[[a, b]] = rng.random_range(0.0..1.0);
            }
        }
        let vis = grid_forward(&truth, &grid).unwrap();
        let norm_sq = operator_norm_sq(&grid).unwrap();
        let cfg = LandweberConfig {
            step: 1.0 / norm_sq,
            max_iters: 500,
            positivity: true,
            stop_rtol: 1e-12,
        };
        let out = landweber(&vis, &grid, &cfg).unwrap();

        let num: f64 = out
            .image
            .pixels()
            .iter()
            .zip(truth.pixels().iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let den: f64 = truth.pixels().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den <= 1e-3, "relative image error {}", num / den);
    }

    #[test]
    fn grid_landweber_zero_data_gives_zero_image() {
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.3).unwrap();
        let vis = Array2::from_elem((16, 16), Complex64::ZERO);
        let norm_sq = operator_norm_sq(&grid).unwrap();
        let out = landweber(&vis, &grid, &LandweberConfig::for_norm_sq(norm_sq)).unwrap();
        assert!(out.image.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_validation() {
        let cfg = LandweberConfig { step: 0.5, max_iters: 10, positivity: false, stop_rtol: 0.0 };
        assert!(cfg.validate_step(1.0).is_ok());
        assert!(cfg.validate_step(4.1).is_err()); // 0.5 >= 2/4.1
        let bad = LandweberConfig { step: -0.1, ..cfg };
        assert!(bad.validate_step(1.0).is_err());
    }
}
