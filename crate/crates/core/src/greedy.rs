//! Greedy selection of measurement subsets.
//!
//! Two strategies are provided. Residual-based selection repeatedly adds the
//! sample whose predicted value disagrees most with the measurement, refitting
//! the supplied forward model after every addition; it is target-dependent.
//! Error-based selection is the P-greedy rule: it adds the point maximizing
//! the current power function and never looks at measured values, so the
//! chosen subset depends only on the point geometry and the kernel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::kernel::{kernel_eval, KernelConfig, NodeSet};
use crate::simulate::FrequencySample;

/// Which greedy rule drove a selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    ResidualBased,
    ErrorBased,
}

/// Stopping rule: an indicator tolerance, a target cardinality, or both
/// (whichever triggers first).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
}

impl StopRule {
    pub fn tolerance(tau: f64) -> Self {
        StopRule { tolerance: Some(tau), cardinality: None }
    }

    pub fn cardinality(n: usize) -> Self {
        StopRule { tolerance: None, cardinality: Some(n) }
    }

    pub fn either(tau: f64, n: usize) -> Self {
        StopRule { tolerance: Some(tau), cardinality: Some(n) }
    }

    pub fn validate(&self, total: usize) -> Result<()> {
        if self.tolerance.is_none() && self.cardinality.is_none() {
            return Err(Error::InvalidConfig(
                "stop rule needs a tolerance or a cardinality".into(),
            ));
        }
        if let Some(tau) = self.tolerance {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(Error::InvalidConfig(format!("tolerance must be > 0, got {tau}")));
            }
        }
        if let Some(n) = self.cardinality {
            if n == 0 {
                return Err(Error::InvalidConfig("cardinality must be >= 1".into()));
            }
            if n > total {
                return Err(Error::InvalidConfig(format!(
                    "cardinality {n} exceeds the {total} available samples"
                )));
            }
        }
        Ok(())
    }

    fn max_points(&self, total: usize) -> usize {
        self.cardinality.map_or(total, |n| n.min(total))
    }
}

/// Configuration of a greedy run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub mode: SelectionMode,
    pub stop: StopRule,
    /// Index of the first selected point. Defaults to the sample closest to
    /// the origin of the frequency plane.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_index: Option<usize>,
}

impl GreedyConfig {
    pub fn error_based(stop: StopRule) -> Self {
        GreedyConfig { mode: SelectionMode::ErrorBased, stop, initial_index: None }
    }

    pub fn residual_based(stop: StopRule) -> Self {
        GreedyConfig { mode: SelectionMode::ResidualBased, stop, initial_index: None }
    }

    fn resolve_initial(&self, points: &[Point2]) -> Result<usize> {
        match self.initial_index {
            Some(i) if i < points.len() => Ok(i),
            Some(i) => Err(Error::InvalidConfig(format!(
                "initial index {i} out of range for {} samples",
                points.len()
            ))),
            None => {
                // Lowest frequency first; ties broken by lowest index.
                let mut best = 0;
                for (i, p) in points.iter().enumerate() {
                    if p.norm() < points[best].norm() {
                        best = i;
                    }
                }
                Ok(best)
            }
        }
    }
}

/// Ordered result of a greedy run: selected indices into the parent sample
/// set and the per-step indicator values (residual magnitude or maximum
/// power function) that drove each selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub mode: SelectionMode,
    /// Kernel used by the error indicator, when the rule has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    pub order: Vec<usize>,
    pub indicator_trace: Vec<f64>,
}

impl SelectionResult {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Pivot floor below which an incremental power-function update is considered
/// degenerate (the new node nearly duplicates the span of the current ones).
pub const POWER_PIVOT_FLOOR: f64 = 1e-20;

/// Incrementally maintained power-function values over a fixed candidate set.
///
/// Internally this grows a Newton basis: adding a node costs O(N·n) instead
/// of a full refactorization, and the resulting values agree with a
/// from-scratch power-function evaluation to rounding level.
#[derive(Debug, Clone)]
pub struct PowerState {
    cfg: KernelConfig,
    points: Vec<Point2>,
    /// Newton basis values, one inner vector of length N per selected node.
    basis: Vec<Vec<f64>>,
    /// Current squared power function at every candidate.
    power_sq: Vec<f64>,
    selected: Vec<usize>,
}

impl PowerState {
    /// Start from the empty node set: `𝓟²(ξ) = κ(ξ, ξ) = 1` everywhere.
    pub fn new(cfg: KernelConfig, candidates: &NodeSet) -> Result<Self> {
        cfg.validate()?;
        let points = candidates.points().to_vec();
        let power_sq = points.iter().map(|&p| kernel_eval(&cfg, p, p)).collect();
        Ok(PowerState { cfg, points, basis: Vec::new(), power_sq, selected: Vec::new() })
    }

    pub fn power_sq(&self) -> &[f64] {
        &self.power_sq
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Add the candidate at `pivot_index` to the node set and update all
    /// power values. Fails with `NumericalBreakdown` when the pivot power is
    /// below [`POWER_PIVOT_FLOOR`], which happens when the new node is nearly
    /// a duplicate of the span of the current ones.
    pub fn add_node(&mut self, pivot_index: usize) -> Result<()> {
        let n = self.points.len();
        assert!(pivot_index < n, "pivot index out of range");
        let p2 = self.power_sq[pivot_index];
        if p2 < POWER_PIVOT_FLOOR {
            return Err(Error::NumericalBreakdown(format!(
                "power-function pivot {p2:e} at candidate {pivot_index} is below {POWER_PIVOT_FLOOR:e}"
            )));
        }
        let pivot = p2.sqrt();
        let pivot_point = self.points[pivot_index];

        // Newton basis column: v(ξ) = (κ(ξ, ξ*) − Σ_k v_k(ξ)·v_k(ξ*)) / 𝓟(ξ*)
        let mut column = Vec::with_capacity(n);
        for (i, &p) in self.points.iter().enumerate() {
            let mut v = kernel_eval(&self.cfg, p, pivot_point);
            for prev in &self.basis {
                v -= prev[i] * prev[pivot_index];
            }
            column.push(v / pivot);
        }
        for (i, v) in column.iter().enumerate() {
            self.power_sq[i] = (self.power_sq[i] - v * v).max(0.0);
        }
        // The pivot itself is now interpolated exactly.
        self.power_sq[pivot_index] = 0.0;
        self.basis.push(column);
        self.selected.push(pivot_index);
        Ok(())
    }

    /// Maximum power over unselected candidates, with lowest-index
    /// tie-breaking. `None` once every candidate is selected.
    fn argmax_unselected(&self, taken: &[bool]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &p2) in self.power_sq.iter().enumerate() {
            if taken[i] {
                continue;
            }
            match best {
                Some((_, bp)) if p2 <= bp => {}
                _ => best = Some((i, p2)),
            }
        }
        best.map(|(i, p2)| (i, p2.sqrt()))
    }
}

/// Error-based (P-greedy) selection over the full candidate set `points`.
///
/// The output depends only on the point geometry and the kernel, never on
/// measured values. The indicator trace records the maximum power function
/// over unselected candidates at the moment each point was chosen; the entry
/// for the initial point is the power of the empty node set, `√κ(ξ,ξ) = 1`.
pub fn select_error_based(
    points: &NodeSet,
    kernel: &KernelConfig,
    cfg: &GreedyConfig,
) -> Result<SelectionResult> {
    if cfg.mode != SelectionMode::ErrorBased {
        return Err(Error::InvalidConfig("config mode is not ErrorBased".into()));
    }
    let n_total = points.len();
    cfg.stop.validate(n_total)?;
    if n_total == 0 {
        return Err(Error::InvalidConfig("empty candidate set".into()));
    }

    let initial = cfg.resolve_initial(points.points())?;
    let mut state = PowerState::new(*kernel, points)?;
    let mut taken = vec![false; n_total];
    let mut result = SelectionResult {
        mode: SelectionMode::ErrorBased,
        kernel: Some(*kernel),
        order: Vec::new(),
        indicator_trace: Vec::new(),
    };

    let initial_power = state.power_sq[initial].max(0.0).sqrt();
    state.add_node(initial)?;
    taken[initial] = true;
    result.order.push(initial);
    result.indicator_trace.push(initial_power);

    let max_points = cfg.stop.max_points(n_total);
    while result.order.len() < max_points {
        let Some((next, indicator)) = state.argmax_unselected(&taken) else {
            break;
        };
        if let Some(tau) = cfg.stop.tolerance {
            if indicator <= tau {
                break;
            }
        }
        state.add_node(next)?;
        taken[next] = true;
        result.order.push(next);
        result.indicator_trace.push(indicator);
    }

    Ok(result)
}

/// Forward model used by residual-based selection: fit whatever reconstruction
/// the caller wants on a measurement subset, then predict data values at
/// query frequencies.
pub trait ResidualForward {
    fn predict(
        &mut self,
        subset: &[FrequencySample],
        queries: &[Point2],
    ) -> std::result::Result<Vec<Complex64>, String>;
}

impl<F> ResidualForward for F
where
    F: FnMut(&[FrequencySample], &[Point2]) -> std::result::Result<Vec<Complex64>, String>,
{
    fn predict(
        &mut self,
        subset: &[FrequencySample],
        queries: &[Point2],
    ) -> std::result::Result<Vec<Complex64>, String> {
        self(subset, queries)
    }
}

/// Residual-based greedy selection.
///
/// At each step the forward model is rebuilt on the current subset and the
/// sample with the largest residual modulus `|y(ξ) − prediction(ξ)|` among
/// the unselected ones is added (ties broken by lowest index). Stops when the
/// maximum residual drops to the tolerance, the cardinality is reached, or
/// the candidates are exhausted. A forward-model failure is reported with the
/// partial selection attached.
pub fn select_residual(
    samples: &[FrequencySample],
    forward: &mut dyn ResidualForward,
    cfg: &GreedyConfig,
) -> Result<SelectionResult> {
    if cfg.mode != SelectionMode::ResidualBased {
        return Err(Error::InvalidConfig("config mode is not ResidualBased".into()));
    }
    let n_total = samples.len();
    cfg.stop.validate(n_total)?;
    if n_total == 0 {
        return Err(Error::InvalidConfig("empty sample set".into()));
    }

    let points: Vec<Point2> = samples.iter().map(|s| s.xi).collect();
    let initial = cfg.resolve_initial(&points)?;
    let mut taken = vec![false; n_total];
    taken[initial] = true;
    let mut result = SelectionResult {
        mode: SelectionMode::ResidualBased,
        kernel: None,
        order: vec![initial],
        // Residual of the initial point against the empty model (prediction 0).
        indicator_trace: vec![samples[initial].value.norm()],
    };

    let max_points = cfg.stop.max_points(n_total);
    while result.order.len() < max_points {
        let subset: Vec<FrequencySample> =
            result.order.iter().map(|&i| samples[i].clone()).collect();
        let remaining: Vec<usize> = (0..n_total).filter(|&i| !taken[i]).collect();
        if remaining.is_empty() {
            break;
        }
        let queries: Vec<Point2> = remaining.iter().map(|&i| points[i]).collect();
        let predicted = forward.predict(&subset, &queries).map_err(|message| {
            Error::ReconstructorFailure { message, partial: Box::new(result.clone()) }
        })?;

        let mut best_pos = 0;
        let mut best_res = f64::NEG_INFINITY;
        for (pos, (&i, pred)) in remaining.iter().zip(&predicted).enumerate() {
            let r = (samples[i].value - pred).norm();
            if r > best_res {
                best_res = r;
                best_pos = pos;
            }
        }
        if let Some(tau) = cfg.stop.tolerance {
            if best_res <= tau {
                break;
            }
        }
        let chosen = remaining[best_pos];
        taken[chosen] = true;
        result.order.push(chosen);
        result.indicator_trace.push(best_res);
    }

    Ok(result)
}
