//! Gradient-ratio bookkeeping and the ratio-to-weight mapping.
//!
//! For every category `j` the trainer accumulates, across all iterations so
//! far, the magnitudes of the batch-mean positive (encouraging) and negative
//! (suppressing) gradients reaching that category's logit. Their ratio
//!
//! ```text
//! g_j = pos_sum_j / (neg_sum_j + epsilon)
//! ```
//!
//! measures how balanced training has been for that category: a head
//! category sits near 1, a starved tail category sits far below. A smooth
//! mapping squashes the ratio into `(0, 1)`:
//!
//! ```text
//! f(x) = 1 / (1 + exp(-gamma * (x - mu)))
//! ```
//!
//! and the per-category loss weights are derived from it:
//!
//! ```text
//! q_j = 1 + alpha * (1 - f(g_j))    (positive-gradient amplifier, in [1, 1+alpha))
//! r_j = f(g_j)                      (negative-gradient damper,    in (0, 1])
//! ```
//!
//! An imbalanced category (small `g_j`) gets its positives amplified by up
//! to `1 + alpha` and its negatives damped toward zero; a balanced one is
//! left nearly untouched. Because the weights change the gradients that are
//! accumulated next, the scheme is a closed loop that drives every `g_j`
//! toward the neighbourhood of `mu`.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominator guard used in the gradient ratio. Small enough to never
/// matter once real gradient mass has accumulated, large enough to keep the
/// ratio finite on the first iteration.
pub const RATIO_EPSILON: f64 = 1e-10;

/// Ratio reported before any gradients have been accumulated. Starting at
/// 1.0 (perfectly balanced) means the first iteration applies near-neutral
/// weights instead of the full correction.
pub const INITIAL_RATIO: f64 = 1.0;

/// Parameters of the mapping from gradient ratio to loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingParams {
    /// Steepness of the sigmoid transition. Larger values make the switch
    /// from "boost" to "leave alone" sharper. Must be positive.
    pub gamma: f64,
    /// Center of the transition: the ratio at which `f(x) = 0.5`. The
    /// closed loop drives each category's ratio toward this value.
    pub mu: f64,
    /// Strength of positive-gradient amplification. `alpha = 0` disables
    /// the amplifier (`q_j = 1` for all categories) while the negative
    /// damper `r_j` still applies. Must be non-negative.
    pub alpha: f64,
}

impl Default for MappingParams {
    fn default() -> Self {
        MappingParams {
            gamma: 12.0,
            mu: 0.8,
            alpha: 4.0,
        }
    }
}

impl MappingParams {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mapping gamma must be finite and positive, got {}",
                self.gamma
            )));
        }
        if !self.mu.is_finite() || !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidConfig(format!(
                "mapping mu must lie in [0, 1], got {}",
                self.mu
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "mapping alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Numerically stable logistic function. Never overflows: the exponential
/// is always taken of a non-positive argument.
pub(crate) fn stable_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Maps a gradient ratio through the squashing sigmoid: `f(x) = 1 / (1 +
/// exp(-gamma * (x - mu)))`.
///
/// Strictly increasing in `x` (for positive `gamma`), with `f(mu) = 0.5`
/// exactly. Output lies in `(0, 1)` mathematically; in floating point it
/// saturates to exactly 0.0 or 1.0 once `gamma * |x - mu|` exceeds roughly
/// 745 (underflow) or 37 (rounding), which downstream weights tolerate.
pub fn map_ratio(x: f64, params: &MappingParams) -> f64 {
    stable_sigmoid(params.gamma * (x - params.mu))
}

/// Per-category loss weights derived from the gradient ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskWeights {
    /// Positive-gradient amplifiers, one per category, each in `[1, 1 + alpha]`.
    pub q: Array1<f64>,
    /// Negative-gradient dampers, one per category, each in `[0, 1]`.
    pub r: Array1<f64>,
}

impl TaskWeights {
    /// Identity weights (`q = r = 1`): reweighting disabled. Training with
    /// these is exactly the plain sigmoid baseline.
    pub fn unit(num_categories: usize) -> Self {
        TaskWeights {
            q: Array1::ones(num_categories),
            r: Array1::ones(num_categories),
        }
    }

    pub fn num_categories(&self) -> usize {
        self.q.len()
    }
}

/// Running per-category totals of gradient magnitude, and the ratio derived
/// from them.
///
/// The sums only ever grow; the ratio is recomputed after every
/// [`accumulate`](GradAccumulator::accumulate) call. Totals accumulate
/// *post-reweighting* magnitudes — the ratio tracks the gradients the
/// parameters actually receive, so the closed loop sees the effect of its
/// own corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct GradAccumulator {
    pos_sum: Array1<f64>,
    neg_sum: Array1<f64>,
    ratio: Array1<f64>,
    epsilon: f64,
    initial_ratio: f64,
}

impl GradAccumulator {
    /// Fresh accumulator for `num_categories` categories with the default
    /// epsilon and initial ratio.
    pub fn new(num_categories: usize) -> Self {
        Self::with_options(num_categories, RATIO_EPSILON, INITIAL_RATIO)
    }

    /// Fresh accumulator with explicit denominator guard and pre-data ratio.
    pub fn with_options(num_categories: usize, epsilon: f64, initial_ratio: f64) -> Self {
        GradAccumulator {
            pos_sum: Array1::zeros(num_categories),
            neg_sum: Array1::zeros(num_categories),
            ratio: Array1::from_elem(num_categories, initial_ratio),
            epsilon,
            initial_ratio,
        }
    }

    pub fn num_categories(&self) -> usize {
        self.pos_sum.len()
    }

    /// Accumulated positive-gradient magnitude per category.
    pub fn pos_sum(&self) -> &Array1<f64> {
        &self.pos_sum
    }

    /// Accumulated negative-gradient magnitude per category.
    pub fn neg_sum(&self) -> &Array1<f64> {
        &self.neg_sum
    }

    /// Current accumulated gradient ratio `g_j` per category. Equals the
    /// initial ratio until the first `accumulate` call.
    pub fn ratio(&self) -> &Array1<f64> {
        &self.ratio
    }

    /// Adds one iteration's batch-mean gradient magnitudes to the running
    /// totals and refreshes the ratios.
    ///
    /// Magnitudes must be non-negative and finite, and both vectors must
    /// have exactly `num_categories` entries.
    pub fn accumulate(&mut self, pos_mag: &Array1<f64>, neg_mag: &Array1<f64>) -> Result<()> {
        if pos_mag.len() != self.num_categories() {
            return Err(Error::DimensionMismatch {
                context: "GradAccumulator::accumulate pos_mag",
                expected: self.num_categories(),
                actual: pos_mag.len(),
            });
        }
        if neg_mag.len() != self.num_categories() {
            return Err(Error::DimensionMismatch {
                context: "GradAccumulator::accumulate neg_mag",
                expected: self.num_categories(),
                actual: neg_mag.len(),
            });
        }
        for (j, (&p, &n)) in pos_mag.iter().zip(neg_mag.iter()).enumerate() {
            if !(p.is_finite() && n.is_finite() && p >= 0.0 && n >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "gradient magnitudes must be finite and non-negative; \
                     category {j} got pos {p}, neg {n}"
                )));
            }
        }
        self.pos_sum += pos_mag;
        self.neg_sum += neg_mag;
        for j in 0..self.num_categories() {
            self.ratio[j] = self.pos_sum[j] / (self.neg_sum[j] + self.epsilon);
        }
        Ok(())
    }

    /// Clears the totals and restores the pre-data ratio, as at construction.
    pub fn reset(&mut self) {
        self.pos_sum.fill(0.0);
        self.neg_sum.fill(0.0);
        self.ratio.fill(self.initial_ratio);
    }
}

/// Derives the per-category loss weights from the accumulator's current
/// ratios: `q_j = 1 + alpha * (1 - f(g_j))`, `r_j = f(g_j)`.
///
/// The two weights are tied by the affine identity `q_j + alpha * r_j = 1 +
/// alpha`: amplification of positives and damping of negatives are two ends
/// of the same dial.
pub fn compute_weights(acc: &GradAccumulator, params: &MappingParams) -> TaskWeights {
    let f = acc.ratio.mapv(|g| map_ratio(g, params));
    TaskWeights {
        q: f.mapv(|fj| 1.0 + params.alpha * (1.0 - fj)),
        r: f,
    }
}
