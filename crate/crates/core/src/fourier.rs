//! Forward Fourier (visibility) operator and its adjoint.
//!
//! Convention, shared by every component: a flux image `x` on an M×M grid of
//! pixel centers `p_ab = ((a − M/2)·Δp, (b − M/2)·Δp)` maps to
//!
//! ```text
//! y(ξ) = Δp² · Σ_ab x[a,b] · exp(−2πi ξ·p_ab)
//! ```
//!
//! [`ndft_forward`] evaluates this sum at arbitrary scattered frequencies.
//! [`grid_forward`] evaluates it on the conjugate uniform frequency lattice
//! `ξ_kl = ((k − M/2)·Δξ, (l − M/2)·Δξ)` with `Δξ = 1/(M·Δp)`, restricted to
//! a disk mask; on that lattice the sum reduces to an FFT with checkerboard
//! phase factors. Outputs of real images are Hermitian-symmetrized bit-exactly,
//! and [`grid_adjoint`] is the exact adjoint of the full masked chain.

use std::cell::RefCell;

use ndarray::Array2;
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// An M×M real flux image with square pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pixels: Array2<f64>,
    pixel_size: f64,
}

impl ImageGrid {
    /// Wrap pixel data. The grid must be square with an even side of at
    /// least 4 pixels, a positive pixel size, and finite values.
    pub fn new(pixels: Array2<f64>, pixel_size: f64) -> Result<Self> {
        let (rows, cols) = pixels.dim();
        if rows != cols || rows < 4 || rows % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "image grid must be square with an even side >= 4, got {rows}x{cols}"
            )));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("image contains non-finite values".into()));
        }
        Ok(ImageGrid { pixels, pixel_size })
    }

    pub fn zeros(size: usize, pixel_size: f64) -> Result<Self> {
        Self::new(Array2::zeros((size, size)), pixel_size)
    }

    pub fn size(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut Array2<f64> {
        &mut self.pixels
    }

    /// Coordinate of the pixel center at index `i` along either axis.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.size() / 2) as f64) * self.pixel_size
    }

    /// Sum of pixels times pixel area: the discrete integral of the image.
    pub fn total_flux(&self) -> f64 {
        self.pixels.sum() * self.pixel_size * self.pixel_size
    }
}

/// The uniform frequency lattice conjugate to an M×M image, with a disk mask
/// `|ξ| ≤ r_max`. The lattice spacing is `1/(M·pixel_size)`.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    size: usize,
    pixel_size: f64,
    spacing: f64,
    r_max: f64,
    mask: Array2<bool>,
}

impl FrequencyGrid {
    /// Build the lattice conjugate to an image of side `size` and the given
    /// pixel size, masked to the disk `|ξ| ≤ r_max`. A radius at or beyond
    /// the lattice corner (`√2·(size/2)·spacing`) yields a full mask.
    pub fn conjugate_to(size: usize, pixel_size: f64, r_max: f64) -> Result<Self> {
        if size < 4 || size % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "frequency grid side must be even and >= 4, got {size}"
            )));
        }
        if !(pixel_size > 0.0 && pixel_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "pixel size must be positive, got {pixel_size}"
            )));
        }
        let spacing = 1.0 / (size as f64 * pixel_size);
        if !(r_max >= 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "mask radius must be finite and nonnegative, got {r_max}"
            )));
        }
        let mut mask = Array2::from_elem((size, size), false);
        for k in 0..size {
            for l in 0..size {
                let xi = freq_coord(k, size, spacing).hypot(freq_coord(l, size, spacing));
                mask[[k, l]] = xi <= r_max;
            }
        }
        Ok(FrequencyGrid { size, pixel_size, spacing, r_max, mask })
    }

    /// Conjugate lattice with every point unmasked.
    pub fn full(size: usize, pixel_size: f64) -> Result<Self> {
        let spacing = 1.0 / (size as f64 * pixel_size);
        let half = (size / 2) as f64 * spacing;
        Self::conjugate_to(size, pixel_size, half.hypot(half))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    /// Frequency coordinates of lattice index `(k, l)`.
    pub fn freq_at(&self, k: usize, l: usize) -> Point2 {
        Point2::new(
            freq_coord(k, self.size, self.spacing),
            freq_coord(l, self.size, self.spacing),
        )
    }

    /// Lattice index of `−ξ_kl` (the grid is periodic, so index 0 is its own
    /// mirror).
    pub fn mirror(&self, k: usize, l: usize) -> (usize, usize) {
        ((self.size - k) % self.size, (self.size - l) % self.size)
    }

    /// Indices of unmasked lattice points, in row-major order.
    pub fn masked_indices(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for k in 0..self.size {
            for l in 0..self.size {
                if self.mask[[k, l]] {
                    out.push((k, l));
                }
            }
        }
        out
    }

    /// Frequencies of unmasked lattice points, in row-major order.
    pub fn masked_frequencies(&self) -> Vec<Point2> {
        self.masked_indices().into_iter().map(|(k, l)| self.freq_at(k, l)).collect()
    }
}

fn freq_coord(i: usize, size: usize, spacing: f64) -> f64 {
    (i as f64 - (size / 2) as f64) * spacing
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> std::sync::Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// In-place 2-D FFT over both axes of a square array.
fn fft2_inplace(data: &mut Array2<Complex64>, direction: FftDirection) {
    let m = data.nrows();
    let fft = plan(m, direction);
    let mut scratch = vec![Complex64::ZERO; fft.get_inplace_scratch_len()];
    for mut row in data.rows_mut() {
        fft.process_with_scratch(row.as_slice_mut().expect("contiguous row"), &mut scratch);
    }
    let mut column = vec![Complex64::ZERO; m];
    for l in 0..m {
        for k in 0..m {
            column[k] = data[[k, l]];
        }
        fft.process_with_scratch(&mut column, &mut scratch);
        for k in 0..m {
            data[[k, l]] = column[k];
        }
    }
}

fn parity_sign(i: usize, j: usize) -> f64 {
    if (i + j) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Enforce Hermitian symmetry `z[−k] = conj(z[k])` bit-exactly by averaging
/// each lattice point with the conjugate of its mirror.
fn hermitianize(data: &mut Array2<Complex64>) {
    let m = data.nrows();
    for k in 0..m {
        for l in 0..m {
            let (mk, ml) = ((m - k) % m, (m - l) % m);
            if (mk, ml) < (k, l) {
                continue; // pair already handled
            }
            let avg = (data[[k, l]] + data[[mk, ml]].conj()) * 0.5;
            data[[k, l]] = avg;
            data[[mk, ml]] = avg.conj();
        }
    }
}

fn check_conjugate(image: &ImageGrid, grid: &FrequencyGrid) -> Result<()> {
    if image.size() != grid.size() || image.pixel_size() != grid.pixel_size() {
        return Err(Error::InvalidConfig(format!(
            "image ({}px @ {}) is not conjugate to the frequency grid ({}px @ {})",
            image.size(),
            image.pixel_size(),
            grid.size(),
            grid.pixel_size()
        )));
    }
    Ok(())
}

/// Evaluate the forward operator at one scattered frequency by direct
/// summation with per-axis phase tables; the summation order is fixed.
fn ndft_single(pixels: &Array2<f64>, pixel_size: f64, xi: Point2) -> Complex64 {
    let m = pixels.nrows();
    let half = (m / 2) as f64;
    let table = |freq: f64| -> Vec<Complex64> {
        (0..m)
            .map(|i| {
                let angle =
                    -2.0 * std::f64::consts::PI * freq * ((i as f64 - half) * pixel_size);
                let (s, c) = angle.sin_cos();
                Complex64::new(c, s)
            })
            .collect()
    };
    let eu = table(xi.x);
    let ev = table(xi.y);
    let mut acc = Complex64::ZERO;
    for (a, row) in pixels.rows().into_iter().enumerate() {
        let mut inner = Complex64::ZERO;
        for (b, &v) in row.iter().enumerate() {
            inner += ev[b] * v;
        }
        acc += eu[a] * inner;
    }
    acc * (pixel_size * pixel_size)
}

/// Forward operator at scattered frequencies: `y(ξ) = Δp²·Σ x(p)·e^{−2πi ξ·p}`.
/// Frequencies are evaluated independently (and in parallel for large
/// batches), so results do not depend on the degree of parallelism.
pub fn ndft_forward(image: &ImageGrid, freqs: &[Point2]) -> Vec<Complex64> {
    let pixels = image.pixels();
    let dp = image.pixel_size();
    if freqs.len() < 16 {
        freqs.iter().map(|&xi| ndft_single(pixels, dp, xi)).collect()
    } else {
        freqs.par_iter().map(|&xi| ndft_single(pixels, dp, xi)).collect()
    }
}

/// Forward operator on the conjugate frequency lattice, masked to the grid's
/// disk. Entries outside the mask are zero; the result is exactly Hermitian.
pub fn grid_forward(image: &ImageGrid, grid: &FrequencyGrid) -> Result<Array2<Complex64>> {
    check_conjugate(image, grid)?;
    let m = grid.size();
    let area = image.pixel_size() * image.pixel_size();
    let mut data = Array2::from_shape_fn((m, m), |(a, b)| {
        Complex64::new(image.pixels()[[a, b]] * parity_sign(a, b), 0.0)
    });
    fft2_inplace(&mut data, FftDirection::Forward);
    for k in 0..m {
        for l in 0..m {
            data[[k, l]] = if grid.mask()[[k, l]] {
                data[[k, l]] * (parity_sign(k, l) * area)
            } else {
                Complex64::ZERO
            };
        }
    }
    hermitianize(&mut data);
    Ok(data)
}

/// Exact adjoint of [`grid_forward`] with respect to the complex inner
/// product on the grid and the real inner product on images.
pub fn grid_adjoint(vis: &Array2<Complex64>, grid: &FrequencyGrid) -> Result<ImageGrid> {
    let m = grid.size();
    if vis.dim() != (m, m) {
        return Err(Error::InvalidConfig(format!(
            "visibility grid {:?} does not match frequency grid {m}x{m}",
            vis.dim()
        )));
    }
    let mut data = vis.clone();
    hermitianize(&mut data);
    for k in 0..m {
        for l in 0..m {
            data[[k, l]] = if grid.mask()[[k, l]] {
                data[[k, l]] * parity_sign(k, l)
            } else {
                Complex64::ZERO
            };
        }
    }
    fft2_inplace(&mut data, FftDirection::Inverse);
    let area = grid.pixel_size() * grid.pixel_size();
    let pixels =
        Array2::from_shape_fn((m, m), |(a, b)| data[[a, b]].re * parity_sign(a, b) * area);
    ImageGrid::new(pixels, grid.pixel_size())
}

/// Iteration cap for power iterations.
pub const POWER_ITER_CAP: usize = 500;
/// Relative change of the Rayleigh quotient at which power iteration stops.
pub const POWER_ITER_RTOL: f64 = 1e-6;

/// Estimate `‖A‖²` (the largest eigenvalue of `A*A`) for the masked grid
/// operator by power iteration. Deterministic: the start vector comes from a
/// fixed-seed generator.
pub fn operator_norm_sq(grid: &FrequencyGrid) -> Result<f64> {
    let m = grid.size();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let pixels = Array2::from_shape_fn((m, m), |_| rng.random_range(-1.0..1.0f64));
    let mut v = ImageGrid::new(pixels, grid.pixel_size())?;

    let norm = |img: &ImageGrid| img.pixels().iter().map(|x| x * x).sum::<f64>().sqrt();
    let n0 = norm(&v);
    v.pixels_mut().mapv_inplace(|x| x / n0);

    let mut lambda_prev = f64::INFINITY;
    for _ in 0..POWER_ITER_CAP {
        let w = grid_adjoint(&grid_forward(&v, grid)?, grid)?;
        let lambda: f64 = v
            .pixels()
            .iter()
            .zip(w.pixels().iter())
            .map(|(a, b)| a * b)
            .sum();
        let wn = norm(&w);
        if wn == 0.0 {
            return Ok(0.0);
        }
        if (lambda - lambda_prev).abs() <= POWER_ITER_RTOL * lambda.abs() {
            return Ok(lambda);
        }
        lambda_prev = lambda;
        let mut next = w;
        next.pixels_mut().mapv_inplace(|x| x / wn);
        v = next;
    }
    Err(Error::NoConvergence(POWER_ITER_CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn random_image(m: usize, pixel: f64, seed: u64) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::new(
            Array2::from_shape_fn((m, m), |_| rng.random_range(-1.0..1.0f64)),
            pixel,
        )
        .unwrap()
    }

    fn random_vis(m: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, m), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Direct-summation oracle: one exp per pixel, no phase tables, no FFT.
    fn direct_forward_at(image: &ImageGrid, xi: Point2) -> Complex64 {
        let m = image.size();
        let mut acc = Complex64::ZERO;
        for a in 0..m {
            for b in 0..m {
                let phase = -2.0
                    * std::f64::consts::PI
                    * (xi.x * image.coord(a) + xi.y * image.coord(b));
                acc += image.pixels()[[a, b]] * Complex64::new(phase.cos(), phase.sin());
            }
        }
        acc * image.pixel_size() * image.pixel_size()
    }

    #[test]
    fn ndft_zero_image_is_zero() {
        let image = ImageGrid::zeros(16, 1.0).unwrap();
        let out = ndft_forward(&image, &[Point2::new(0.1, 0.0), Point2::new(-0.2, 0.3)]);
        assert!(out.iter().all(|v| *v == Complex64::ZERO));
    }

    #[test]
    fn ndft_center_pixel_has_flat_transform() {
        let m = 16;
        let mut image = ImageGrid::zeros(m, 2.0).unwrap();
        image.pixels_mut()[[m / 2, m / 2]] = 1.0; // pixel at (0, 0)
        let freqs = [Point2::new(0.07, -0.02), Point2::new(0.0, 0.11), Point2::new(0.2, 0.2)];
        for v in ndft_forward(&image, &freqs) {
            assert_relative_eq!(v.re, 4.0, max_relative = 1e-12); // pixel area
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ndft_gaussian_matches_analytic_transform() {
        // A centered Gaussian of FWHM w transforms to flux·e^{−2π²s²|ξ|²},
        // s = w/(2√(2 ln 2)). Discretization error is far below 1e-3.
        let m = 128;
        let pixel = 1.0;
        let fwhm: f64 = 10.0;
        let s = fwhm / (2.0 * (2.0 * (2.0f64).ln()).sqrt());
        let flux = 3.0;
        let pixels = Array2::from_shape_fn((m, m), |(a, b)| {
            let x = (a as f64 - 64.0) * pixel;
            let y = (b as f64 - 64.0) * pixel;
            flux / (2.0 * std::f64::consts::PI * s * s)
                * (-(x * x + y * y) / (2.0 * s * s)).exp()
        });
        let image = ImageGrid::new(pixels, pixel).unwrap();
        for r in [0.01, 0.05, 0.1] {
            let xi = Point2::new(r, 0.0);
            let got = ndft_forward(&image, &[xi])[0];
            let want = flux * (-2.0 * std::f64::consts::PI.powi(2) * s * s * r * r).exp();
            assert_relative_eq!(got.re, want, max_relative = 1e-3);
            assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-10 * flux);
        }
    }

    #[test]
    fn ndft_is_linear() {
        let x1 = random_image(16, 1.0, 1);
        let x2 = random_image(16, 1.0, 2);
        let alpha = 1.7;
        let combo = ImageGrid::new(x1.pixels() * alpha + x2.pixels(), 1.0).unwrap();
        let freqs = [Point2::new(0.12, -0.31), Point2::new(0.0, 0.05)];
        let y1 = ndft_forward(&x1, &freqs);
        let y2 = ndft_forward(&x2, &freqs);
        let yc = ndft_forward(&combo, &freqs);
        for i in 0..freqs.len() {
            let want = y1[i] * alpha + y2[i];
            assert!((yc[i] - want).norm() <= 1e-10 * want.norm().max(1.0));
        }
    }

    #[test]
    fn ndft_hermitian_within_tolerance() {
        let image = random_image(16, 1.0, 3);
        let xi = Point2::new(0.13, -0.22);
        let minus = Point2::new(-0.13, 0.22);
        let out = ndft_forward(&image, &[xi, minus]);
        let scale = out[0].norm().max(1.0);
        assert!((out[1] - out[0].conj()).norm() <= 1e-10 * scale);
    }

    #[test]
    fn grid_forward_zero_image() {
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.3).unwrap();
        let image = ImageGrid::zeros(16, 1.0).unwrap();
        let out = grid_forward(&image, &grid).unwrap();
        assert!(out.iter().all(|v| *v == Complex64::ZERO));
    }

    #[test]
    fn grid_forward_degenerate_mask() {
        // r_max = 0 keeps only the DC point.
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.0).unwrap();
        let image = random_image(16, 1.0, 4);
        let out = grid_forward(&image, &grid).unwrap();
        let nonzero: Vec<_> = out
            .indexed_iter()
            .filter(|(_, v)| **v != Complex64::ZERO)
            .map(|(idx, _)| idx)
            .collect();
        assert!(nonzero.len() <= 1, "only the DC entry may survive, got {nonzero:?}");
    }

    #[test]
    fn grid_forward_matches_direct_summation() {
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.4).unwrap();
        let image = random_image(16, 1.0, 5);
        let out = grid_forward(&image, &grid).unwrap();
        let scale = out.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (k, l) in grid.masked_indices() {
            let want = direct_forward_at(&image, grid.freq_at(k, l));
            assert!(
                (out[[k, l]] - want).norm() <= 1e-10 * scale,
                "lattice ({k},{l}): {} vs {want}",
                out[[k, l]]
            );
        }
    }

    #[test]
    fn grid_forward_agrees_with_ndft_path() {
        let grid = FrequencyGrid::conjugate_to(32, 0.7, 0.2).unwrap();
        let image = random_image(32, 0.7, 6);
        let out = grid_forward(&image, &grid).unwrap();
        let freqs = grid.masked_frequencies();
        let nd = ndft_forward(&image, &freqs);
        let scale = nd.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for ((k, l), want) in grid.masked_indices().into_iter().zip(nd) {
            assert!((out[[k, l]] - want).norm() <= 1e-10 * scale);
        }
    }

    #[test]
    fn grid_forward_is_exactly_hermitian() {
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.4).unwrap();
        let image = random_image(16, 1.0, 7);
        let out = grid_forward(&image, &grid).unwrap();
        for k in 0..16 {
            for l in 0..16 {
                let (mk, ml) = grid.mirror(k, l);
                // Bitwise equality, not approximate.
                assert_eq!(out[[k, l]], out[[mk, ml]].conj());
            }
        }
    }

    #[test]
    fn mask_is_mirror_symmetric() {
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.35).unwrap();
        for k in 0..16 {
            for l in 0..16 {
                let (mk, ml) = grid.mirror(k, l);
                assert_eq!(grid.mask()[[k, l]], grid.mask()[[mk, ml]]);
            }
        }
    }

    #[test]
    fn adjoint_zero_visibilities() {
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.3).unwrap();
        let vis = Array2::from_elem((16, 16), Complex64::ZERO);
        let img = grid_adjoint(&vis, &grid).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_ignores_masked_out_entries() {
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.1).unwrap();
        let mut vis = Array2::from_elem((16, 16), Complex64::ZERO);
        // Put data on a masked-out entry.
        assert!(!grid.mask()[[1, 1]]);
        vis[[1, 1]] = Complex64::new(5.0, -3.0);
        let img = grid_adjoint(&vis, &grid).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_identity_holds() {
        let grid = FrequencyGrid::conjugate_to(16, 1.0, 0.4).unwrap();
        for seed in 0..20 {
            let x = random_image(16, 1.0, 100 + seed);
            let v = random_vis(16, 200 + seed);
            let ax = grid_forward(&x, &grid).unwrap();
            let atv = grid_adjoint(&v, &grid).unwrap();
            let lhs: Complex64 = ax.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum();
            let rhs: f64 = x
                .pixels()
                .iter()
                .zip(atv.pixels().iter())
                .map(|(a, b)| a * b)
                .sum();
            assert!(
                (lhs.re - rhs).abs() <= 1e-10 * lhs.re.abs().max(1.0),
                "seed {seed}: Re<Ax,v> = {} vs <x,A*v> = {rhs}",
                lhs.re
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn adjoint_identity_proptest(seed in 0u64..10_000) {
            let grid = FrequencyGrid::conjugate_to(8, 1.0, 0.2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = ImageGrid::new(
                Array2::from_shape_fn((8, 8), |_| rng.random_range(-1.0..1.0f64)), 1.0).unwrap();
            let v = Array2::from_shape_fn((8, 8), |_| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let ax = grid_forward(&x, &grid).unwrap();
            let atv = grid_adjoint(&v, &grid).unwrap();
            let lhs: Complex64 = ax.iter().zip(v.iter()).map(|(a, b)| a * b.conj()).sum();
            let rhs: f64 = x.pixels().iter().zip(atv.pixels().iter()).map(|(a, b)| a * b).sum();
            prop_assert!((lhs.re - rhs).abs() <= 1e-10 * lhs.re.abs().max(1.0));
        }
    }

    /// Dense real matrix of the masked forward operator: maps the M² image
    /// pixels to stacked (Re, Im) pairs of the masked lattice values.
    fn dense_forward_matrix(grid: &FrequencyGrid) -> DMatrix<f64> {
        let m = grid.size();
        let idx = grid.masked_indices();
        let mut mat = DMatrix::zeros(2 * idx.len(), m * m);
        for col in 0..m * m {
            let mut image = ImageGrid::zeros(m, grid.pixel_size()).unwrap();
            image.pixels_mut()[[col / m, col % m]] = 1.0;
            let out = grid_forward(&image, grid).unwrap();
            for (row, &(k, l)) in idx.iter().enumerate() {
                mat[(2 * row, col)] = out[[k, l]].re;
                mat[(2 * row + 1, col)] = out[[k, l]].im;
            }
        }
        mat
    }

    #[test]
    fn operator_norm_full_mask_matches_normalization() {
        // With every lattice point unmasked, A*A = Δp⁴·M²·I: the norm is the
        // normalization constant exactly, and the dense SVD agrees.
        let m = 8;
        let pixel = 1.5f64;
        let grid = FrequencyGrid::full(m, pixel).unwrap();
        assert!(grid.mask().iter().all(|&b| b));
        let got = operator_norm_sq(&grid).unwrap();
        let want = pixel.powi(4) * (m * m) as f64;
        assert_relative_eq!(got, want, max_relative = 0.01);
        let dense = dense_forward_matrix(&grid);
        let svd = dense.svd(false, false).singular_values[0].powi(2);
        assert_relative_eq!(got, svd, max_relative = 0.01);
    }

    #[test]
    fn operator_norm_degenerate_mask() {
        let grid = FrequencyGrid::conjugate_to(8, 1.0, 0.0).unwrap();
        let got = operator_norm_sq(&grid).unwrap();
        let dense = dense_forward_matrix(&grid);
        let want = dense.svd(false, false).singular_values[0].powi(2);
        assert_relative_eq!(got, want, max_relative = 0.01);
    }

    #[test]
    fn operator_norm_matches_dense_svd_on_disk_mask() {
        let grid = FrequencyGrid::conjugate_to(8, 1.0, 0.3).unwrap();
        let got = operator_norm_sq(&grid).unwrap();
        let dense = dense_forward_matrix(&grid);
        let want = dense.svd(false, false).singular_values[0].powi(2);
        assert_relative_eq!(got, want, max_relative = 0.01);
    }

    #[test]
    fn image_grid_validation() {
        assert!(ImageGrid::zeros(15, 1.0).is_err()); // odd
        assert!(ImageGrid::zeros(2, 1.0).is_err()); // too small
        assert!(ImageGrid::zeros(16, 0.0).is_err()); // bad pixel size
        let mut bad = Array2::zeros((16, 16));
        bad[[0, 0]] = f64::NAN;
        assert!(ImageGrid::new(bad, 1.0).is_err());
    }

    #[test]
    fn frequency_grid_radius_validation() {
        assert!(FrequencyGrid::conjugate_to(16, 1.0, -0.1).is_err());
        assert!(FrequencyGrid::conjugate_to(16, 1.0, f64::NAN).is_err());
        assert!(FrequencyGrid::conjugate_to(16, 1.0, 0.4375).is_ok());
        // Beyond the lattice corner the mask saturates.
        let full = FrequencyGrid::conjugate_to(16, 1.0, 10.0).unwrap();
        assert!(full.mask().iter().all(|&b| b));
    }
}
