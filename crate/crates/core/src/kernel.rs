//! Positive-definite radial kernels and the interpolation machinery built on
//! them: kernel matrix assembly, interpolation solves, the cardinal (Lagrange)
//! basis, the Lebesgue function, the power function and native-space norms.
//!
//! All kernels are normalized so that `κ(ξ, ξ) = 1`. Complex data are handled
//! by interpolating real and imaginary parts independently with one shared
//! factorization; the error indicators (power function, Lebesgue function)
//! are data-independent and therefore component-agnostic.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{min_separation, Point2};

/// Diagonal regularization added to every kernel matrix. Escalated by
/// factors of 10 up to [`MAX_JITTER`] when the Cholesky factorization fails.
pub const BASE_JITTER: f64 = 1e-12;
/// Largest jitter tried before giving up with `SingularMatrix`.
pub const MAX_JITTER: f64 = 1e-6;
/// Nodes closer than this are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

const SQRT_3: f64 = 1.732_050_807_568_877_2;
const SQRT_5: f64 = 2.236_067_977_499_79;
/// Iterative-refinement steps applied after each triangular solve so that
/// solutions target the unjittered kernel matrix.
const MAX_REFINE_STEPS: usize = 5;

/// Radial profile `φ` of the kernel, `κ(a, b) = φ(ε·‖a − b‖)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    Matern12,
    Matern32,
    Matern52,
}

impl KernelFamily {
    /// Evaluate the radial profile at scaled distance `t = ε·r`. All
    /// families satisfy `φ(0) = 1` and `0 < φ(t) ≤ 1`.
    pub fn profile(&self, t: f64) -> f64 {
        match self {
            KernelFamily::Gaussian => (-t * t).exp(),
            KernelFamily::Matern12 => (-t).exp(),
            KernelFamily::Matern32 => {
                let s = SQRT_3 * t;
                (1.0 + s) * (-s).exp()
            }
            KernelFamily::Matern52 => {
                let s = SQRT_5 * t;
                (1.0 + s + s * s / 3.0) * (-s).exp()
            }
        }
    }
}

/// Scale function `ψ_s : R² → R` for variably scaled kernels. When present,
/// points are lifted to `(ξ, ψ_s(ξ)) ∈ R³` before distances are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VskScale {
    /// `ψ_s(ξ) = gain · |ξ|`
    Radial { gain: f64 },
    /// `ψ_s(ξ) = amplitude · exp(−|ξ|² / (2·width²))`
    Bump { amplitude: f64, width: f64 },
}

impl VskScale {
    pub fn eval(&self, p: Point2) -> f64 {
        match self {
            VskScale::Radial { gain } => gain * p.norm(),
            VskScale::Bump { amplitude, width } => {
                amplitude * (-(p.x * p.x + p.y * p.y) / (2.0 * width * width)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            VskScale::Radial { gain } => gain.is_finite(),
            VskScale::Bump { amplitude, width } => {
                amplitude.is_finite() && width.is_finite() && *width > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("vsk scale parameters must be finite (bump width > 0)".into()))
        }
    }
}

/// A radial kernel: family, inverse length scale, optional VSK lift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    /// Inverse length scale ε (units of 1/frequency); must be positive.
    pub shape: f64,
    /// Optional variably-scaled-kernel augmentation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vsk: Option<VskScale>,
}

impl KernelConfig {
    pub fn new(family: KernelFamily, shape: f64) -> Self {
        KernelConfig { family, shape, vsk: None }
    }

    pub fn gaussian(shape: f64) -> Self {
        Self::new(KernelFamily::Gaussian, shape)
    }

    pub fn with_vsk(mut self, vsk: VskScale) -> Self {
        self.vsk = Some(vsk);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0 && self.shape.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "kernel shape must be a positive real, got {}",
                self.shape
            )));
        }
        if let Some(vsk) = &self.vsk {
            vsk.validate()?;
        }
        Ok(())
    }
}

/// Evaluate `κ(a, b) = φ(ε·‖T(a) − T(b)‖)`, where `T` is the identity or the
/// VSK lift. Exactly symmetric in its arguments; values lie in `(0, 1]`.
pub fn kernel_eval(cfg: &KernelConfig, a: Point2, b: Point2) -> f64 {
    let mut d2 = a.dist_sq(&b);
    if let Some(vsk) = &cfg.vsk {
        let dz = vsk.eval(a) - vsk.eval(b);
        d2 += dz * dz;
    }
    cfg.family.profile(cfg.shape * d2.sqrt())
}

/// An ordered set of pairwise-distinct 2-D points; each point remembers its
/// index into the parent sample set it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSet {
    points: Vec<Point2>,
    indices: Vec<usize>,
}

impl NodeSet {
    /// Node set over fresh points, indexed 0..n.
    pub fn new(points: Vec<Point2>) -> Self {
        let indices = (0..points.len()).collect();
        NodeSet { points, indices }
    }

    /// Node set carrying explicit parent indices.
    pub fn from_indexed(points: Vec<Point2>, indices: Vec<usize>) -> Result<Self> {
        if points.len() != indices.len() {
            return Err(Error::InvalidConfig(format!(
                "node set: {} points but {} indices",
                points.len(),
                indices.len()
            )));
        }
        Ok(NodeSet { points, indices })
    }

    /// The sub-node-set at the given positions, keeping parent indices.
    pub fn subset(&self, positions: &[usize]) -> NodeSet {
        NodeSet {
            points: positions.iter().map(|&i| self.points[i]).collect(),
            indices: positions.iter().map(|&i| self.indices[i]).collect(),
        }
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn build_matrix(cfg: &KernelConfig, points: &[Point2]) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel_eval(cfg, points[i], points[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn check_separation(points: &[Point2]) -> Result<()> {
    let sep = min_separation(points);
    if sep < DUPLICATE_TOL {
        return Err(Error::DuplicateNodes { min_dist: sep });
    }
    Ok(())
}

/// Assemble the regularized kernel matrix `Φ_ij = κ(ξ_i, ξ_j) + jitter·δ_ij`.
pub fn assemble_kernel_matrix(cfg: &KernelConfig, nodes: &NodeSet) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    check_separation(nodes.points())?;
    let mut m = build_matrix(cfg, nodes.points());
    for i in 0..nodes.len() {
        m[(i, i)] += BASE_JITTER;
    }
    Ok(m)
}

/// A factorized kernel interpolation system over a fixed node set.
///
/// Holds the unjittered kernel matrix alongside the Cholesky factorization of
/// its jittered counterpart; solves are refined against the unjittered matrix
/// so that interpolation residuals at the nodes stay at rounding level.
#[derive(Debug, Clone)]
pub struct KernelSystem {
    cfg: KernelConfig,
    nodes: NodeSet,
    matrix: DMatrix<f64>,
    factor: Option<Cholesky<f64, Dyn>>,
    jitter: f64,
}

const JITTER_LADDER: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky-factorize `matrix + jitter·I`, escalating the jitter by factors
/// of 10 from [`BASE_JITTER`] to [`MAX_JITTER`] until a factorization
/// succeeds. Returns the factorization and the jitter that was used.
fn factorize_with_escalation(matrix: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = matrix.nrows();
    for &jitter in &JITTER_LADDER {
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(factor) = Cholesky::new(m) {
            return Ok((factor, jitter));
        }
    }
    Err(Error::SingularMatrix { jitter: MAX_JITTER })
}

impl KernelSystem {
    pub fn new(cfg: KernelConfig, nodes: NodeSet) -> Result<Self> {
        cfg.validate()?;
        check_separation(nodes.points())?;
        let matrix = build_matrix(&cfg, nodes.points());
        if nodes.is_empty() {
            return Ok(KernelSystem { cfg, nodes, matrix, factor: None, jitter: 0.0 });
        }
        let (factor, jitter) = factorize_with_escalation(&matrix)?;
        Ok(KernelSystem { cfg, nodes, matrix, factor: Some(factor), jitter })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.nodes
    }

    /// The diagonal jitter actually used by the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Kernel column `b(ξ) = (κ(ξ, ξ_1), …, κ(ξ, ξ_n))ᵀ`.
    pub fn kernel_column(&self, query: Point2) -> DVector<f64> {
        DVector::from_iterator(
            self.nodes.len(),
            self.nodes.points().iter().map(|&p| kernel_eval(&self.cfg, query, p)),
        )
    }

    /// Solve `Φ u = rhs` with the cached factorization, then refine against
    /// the unjittered matrix until the residual reaches rounding level.
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let factor = match &self.factor {
            Some(f) => f,
            None => return DVector::zeros(0),
        };
        let scale = 1.0 + rhs.amax();
        let mut u = factor.solve(rhs);
        let mut best = u.clone();
        let mut best_res = f64::INFINITY;
        for _ in 0..MAX_REFINE_STEPS {
            let r = rhs - &self.matrix * &u;
            let rn = r.amax();
            if rn < best_res {
                best_res = rn;
                best.copy_from(&u);
            }
            if rn <= 1e-14 * scale {
                break;
            }
            u += factor.solve(&r);
        }
        best
    }

    /// Cardinal basis values `(ψ_1(ξ), …, ψ_n(ξ))`, obtained as `Φ⁻¹ b(ξ)`.
    /// At `ξ = ξ_i` this is the i-th standard basis vector.
    pub fn cardinal_values(&self, query: Point2) -> Vec<f64> {
        self.solve(&self.kernel_column(query)).data.into()
    }

    /// Lebesgue function `λ(ξ) = Σ_i |ψ_i(ξ)|`.
    pub fn lebesgue(&self, query: Point2) -> f64 {
        self.cardinal_values(query).iter().map(|v| v.abs()).sum()
    }

    /// Power function `𝓟(ξ) = √(κ(ξ,ξ) − b(ξ)ᵀ Φ⁻¹ b(ξ))`, clamped at zero
    /// against round-off. An empty node set gives `√κ(ξ,ξ) = 1`.
    pub fn power(&self, query: Point2) -> Result<f64> {
        let diag = kernel_eval(&self.cfg, query, query);
        if self.nodes.is_empty() {
            return Ok(diag.sqrt());
        }
        let b = self.kernel_column(query);
        let u = self.solve(&b);
        let p2 = diag - b.dot(&u);
        if p2 < -1e-10 {
            return Err(Error::NumericalBreakdown(format!(
                "power function squared evaluated to {p2:e}, far below round-off"
            )));
        }
        Ok(p2.max(0.0).sqrt())
    }
}

/// A fitted kernel interpolant of complex samples: real and imaginary parts
/// share one factorization. Immutable once built; evaluation is read-only.
#[derive(Debug, Clone)]
pub struct InterpolationModel {
    system: KernelSystem,
    values: Vec<Complex64>,
    coeffs_re: DVector<f64>,
    coeffs_im: DVector<f64>,
}

/// Per-component native-space norms of an interpolant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NativeNorms {
    pub re: f64,
    pub im: f64,
}

/// Solve the interpolation system `Φ c = y` for complex samples `y`.
pub fn fit_interpolant(
    cfg: &KernelConfig,
    nodes: &NodeSet,
    values: &[Complex64],
) -> Result<InterpolationModel> {
    if values.len() != nodes.len() {
        return Err(Error::InvalidConfig(format!(
            "{} values for {} nodes",
            values.len(),
            nodes.len()
        )));
    }
    let system = KernelSystem::new(*cfg, nodes.clone())?;
    let rhs_re = DVector::from_iterator(values.len(), values.iter().map(|v| v.re));
    let rhs_im = DVector::from_iterator(values.len(), values.iter().map(|v| v.im));
    let coeffs_re = system.solve(&rhs_re);
    let coeffs_im = system.solve(&rhs_im);
    Ok(InterpolationModel { system, values: values.to_vec(), coeffs_re, coeffs_im })
}

impl InterpolationModel {
    pub fn system(&self) -> &KernelSystem {
        &self.system
    }

    pub fn nodes(&self) -> &NodeSet {
        &self.system.nodes
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.system.cfg
    }

    pub fn sample_values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn coefficients(&self) -> (&[f64], &[f64]) {
        (self.coeffs_re.as_slice(), self.coeffs_im.as_slice())
    }

    /// Evaluate `Πy(ξ) = Σ_i c_i κ(ξ, ξ_i)` at one query point.
    pub fn evaluate_one(&self, query: Point2) -> Complex64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, &p) in self.system.nodes.points().iter().enumerate() {
            let k = kernel_eval(&self.system.cfg, query, p);
            re += self.coeffs_re[i] * k;
            im += self.coeffs_im[i] * k;
        }
        Complex64::new(re, im)
    }

    /// Evaluate the interpolant at a batch of query points. Queries are
    /// independent, so the batch is parallelized; within each query the
    /// summation order is fixed.
    pub fn evaluate(&self, queries: &[Point2]) -> Vec<Complex64> {
        if queries.len() < 64 {
            queries.iter().map(|&q| self.evaluate_one(q)).collect()
        } else {
            queries.par_iter().map(|&q| self.evaluate_one(q)).collect()
        }
    }

    /// Per-component native norms `√(yᵀ Φ⁻¹ y) = √(yᵀ c)`, clamped at zero.
    pub fn native_norm(&self) -> NativeNorms {
        let mut quad_re = 0.0;
        let mut quad_im = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            quad_re += v.re * self.coeffs_re[i];
            quad_im += v.im * self.coeffs_im[i];
        }
        NativeNorms { re: quad_re.max(0.0).sqrt(), im: quad_im.max(0.0).sqrt() }
    }
}

/// Cardinal basis values at `query` for the given kernel and nodes.
pub fn cardinal_values(cfg: &KernelConfig, nodes: &NodeSet, query: Point2) -> Result<Vec<f64>> {
    Ok(KernelSystem::new(*cfg, nodes.clone())?.cardinal_values(query))
}

/// Lebesgue function `λ(ξ)` at `query`.
pub fn lebesgue_function(cfg: &KernelConfig, nodes: &NodeSet, query: Point2) -> Result<f64> {
    Ok(KernelSystem::new(*cfg, nodes.clone())?.lebesgue(query))
}

/// Power function `𝓟(ξ)` at `query`.
pub fn power_function(cfg: &KernelConfig, nodes: &NodeSet, query: Point2) -> Result<f64> {
    KernelSystem::new(*cfg, nodes.clone())?.power(query)
}

/// The Lebesgue function maximized over a finite candidate set. The true
/// operator norm takes a supremum over all of R²; over a compact candidate
/// set this is a lower estimate of it.
#[derive(Debug, Clone)]
pub struct LebesgueEstimate {
    /// `Λ = max_{ξ ∈ candidates} λ(ξ)`.
    pub lambda_max: f64,
    /// The candidate set the maximum was taken over.
    pub eval_points: Vec<Point2>,
}

/// Maximize the Lebesgue function over `candidates`.
pub fn lebesgue_constant(
    cfg: &KernelConfig,
    nodes: &NodeSet,
    candidates: &[Point2],
) -> Result<LebesgueEstimate> {
    let system = KernelSystem::new(*cfg, nodes.clone())?;
    let lambda_max = candidates
        .iter()
        .map(|&q| system.lebesgue(q))
        .fold(0.0, f64::max);
    Ok(LebesgueEstimate { lambda_max, eval_points: candidates.to_vec() })
}
