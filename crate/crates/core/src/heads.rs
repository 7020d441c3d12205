//! Classification heads and per-method loss gradients.
//!
//! A head turns the model's raw logits into per-category probabilities:
//!
//! - **C-sigmoid**: one logit per category, squashed independently. The
//!   standard one-vs-rest multi-label head.
//! - **2C-softmax**: two logits per category, softmaxed as a pair; the
//!   first component is the category probability. Algebraically the pair
//!   softmax collapses to `sigmoid(z - z')`, so this head is an
//!   over-parameterized sigmoid and the two heads can be compared on equal
//!   footing.
//! - **softmax with background**: a single `(C+1)`-way softmax whose extra
//!   column absorbs background rows. Only used by the softmax baseline.
//!
//! Each training method supplies a `*_backward` function that consumes
//! probabilities and labels and produces *per-sample* logit gradients
//! (callers divide by the batch size), the batch-mean positive/negative
//! gradient magnitudes that feed the ratio accumulator, and the scalar loss
//! for monitoring. All gradients here are analytic; the finite-difference
//! suite in the test tree checks every one of them against the returned
//! loss.
//!
//! Sign conventions, per sample and category: a positive label contributes
//! `p - 1 <= 0` (encouraging — pushes the logit up when descended), a
//! negative label contributes `p >= 0` (suppressing). The per-category
//! batch means of the two parts are what the rebalancing mechanism
//! accumulates.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::balance::{stable_sigmoid, MappingParams, TaskWeights};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` inside the
/// monitoring loss only; gradients are computed from the unclamped values.
pub const PROB_FLOOR: f64 = 1e-12;

/// Default frequency threshold below which the negative-gradient mask
/// treats a category as tail.
pub const DEFAULT_EQL_LAMBDA: f64 = 1.1e-3;

/// Which probability head sits on top of the classifier logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// One logit per category, independent sigmoids.
    #[serde(rename = "c_sigmoid")]
    CSigmoid,
    /// Two logits per category, softmax over each pair.
    #[serde(rename = "twoc_softmax")]
    TwoCSoftmax,
}

/// Training method: how label gradients are shaped before they reach the
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// `(C+1)`-way softmax cross-entropy with a background column.
    #[serde(rename = "softmax_baseline")]
    SoftmaxBaseline,
    /// Plain per-category binary cross-entropy.
    #[serde(rename = "sigmoid_baseline")]
    SigmoidBaseline,
    /// Binary cross-entropy with the negative term *dropped* for
    /// categories rarer than a frequency threshold.
    #[serde(rename = "eql_v1")]
    EqlV1,
    /// Gradient-guided reweighting: positive terms amplified and negative
    /// terms damped per category, driven by the accumulated gradient ratio.
    #[serde(rename = "eql_v2")]
    EqlV2,
}

impl Method {
    /// Stable identifier used in config files and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            Method::SoftmaxBaseline => "softmax_baseline",
            Method::SigmoidBaseline => "sigmoid_baseline",
            Method::EqlV1 => "eql_v1",
            Method::EqlV2 => "eql_v2",
        }
    }
}

/// Full description of how a model is trained: method, head, and the
/// knobs the method needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodConfig {
    pub method: Method,
    /// Probability head. Ignored by `softmax_baseline`, which always uses
    /// its own `(C+1)`-way softmax.
    pub head: HeadKind,
    /// Ratio-to-weight mapping parameters. Only `eql_v2` consults these.
    pub mapping: MappingParams,
    /// Frequency threshold for `eql_v1`'s negative-gradient mask.
    pub eql_lambda: f64,
    /// Train the auxiliary foreground/background objectness output and
    /// multiply it into category probabilities at evaluation time. Applies
    /// to the sigmoid-family methods; `softmax_baseline` has a background
    /// column instead and ignores this flag.
    pub use_objectness: bool,
    /// Diagnostic switch: run the full `eql_v2` machinery but pin the loss
    /// weights at `q = r = 1`. Training then matches `sigmoid_baseline`
    /// bit for bit. Ignored by the other methods.
    pub force_unit_weights: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        MethodConfig {
            method: Method::EqlV2,
            head: HeadKind::CSigmoid,
            mapping: MappingParams::default(),
            eql_lambda: DEFAULT_EQL_LAMBDA,
            use_objectness: true,
            force_unit_weights: false,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        self.mapping.validate()?;
        if !self.eql_lambda.is_finite() || !(0.0..1.0).contains(&self.eql_lambda) {
            return Err(Error::InvalidConfig(format!(
                "eql_lambda must lie in [0, 1), got {}",
                self.eql_lambda
            )));
        }
        Ok(())
    }
}

/// A batch of raw classifier outputs, shape `(batch, width)`. The width is
/// `C` for the sigmoid head, `2C` for the paired-softmax head, and `C+1`
/// for the softmax baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch {
    values: Array2<f64>,
}

impl LogitBatch {
    /// Wraps raw logits, rejecting non-finite entries and empty batches.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput("logit batch must be non-empty".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(
                "logit batch contains non-finite values".into(),
            ));
        }
        Ok(LogitBatch { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn batch_size(&self) -> usize {
        self.values.nrows()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// A batch of multi-label targets: a `(batch, C)` one-hot matrix in which
/// foreground rows have exactly one `1.0` and background rows are all
/// zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelBatch {
    onehot: Array2<f64>,
    is_foreground: Vec<bool>,
}

impl LabelBatch {
    /// Validates and wraps a one-hot label matrix. Every entry must be
    /// exactly 0.0 or 1.0 and every row must sum to 0 (background) or 1
    /// (foreground).
    pub fn new(onehot: Array2<f64>) -> Result<Self> {
        if onehot.nrows() == 0 || onehot.ncols() == 0 {
            return Err(Error::InvalidInput("label batch must be non-empty".into()));
        }
        let mut is_foreground = Vec::with_capacity(onehot.nrows());
        for (i, row) in onehot.rows().into_iter().enumerate() {
            let mut ones = 0usize;
            for &v in row.iter() {
                if v == 1.0 {
                    ones += 1;
                } else if v != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "label row {i} contains {v}; entries must be exactly 0 or 1"
                    )));
                }
            }
            if ones > 1 {
                return Err(Error::InvalidInput(format!(
                    "label row {i} has {ones} positive categories; at most one is allowed"
                )));
            }
            is_foreground.push(ones == 1);
        }
        Ok(LabelBatch {
            onehot,
            is_foreground,
        })
    }

    pub fn onehot(&self) -> &Array2<f64> {
        &self.onehot
    }

    /// `true` for rows that carry a category, `false` for background rows.
    pub fn is_foreground(&self) -> &[bool] {
        &self.is_foreground
    }

    pub fn batch_size(&self) -> usize {
        self.onehot.nrows()
    }

    pub fn num_categories(&self) -> usize {
        self.onehot.ncols()
    }

    /// The labelled category per row, or `None` for background.
    pub fn category_of(&self, row: usize) -> Option<usize> {
        if !self.is_foreground[row] {
            return None;
        }
        self.onehot.row(row).iter().position(|&v| v == 1.0)
    }
}

/// Per-category decomposition of the raw sigmoid cross-entropy gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradSplit {
    /// Batch-mean encouraging part, `pos_j = (1/B) * sum_i y * (p - 1)`.
    /// Every entry is `<= 0`.
    pub pos: Array1<f64>,
    /// Batch-mean suppressing part, `neg_j = (1/B) * sum_i (1 - y) * p`.
    /// Every entry is `>= 0`.
    pub neg: Array1<f64>,
    /// Unscaled per-sample logit gradients, `y * (p - 1) + (1 - y) * p`,
    /// shape `(batch, C)`. The batch mean of each column equals
    /// `pos + neg` for that column.
    pub per_sample: Array2<f64>,
}

/// What every method's backward pass hands to the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardOutput {
    /// Per-sample gradients with respect to the logits the method consumed
    /// (shape matches those logits). Callers apply the `1/B` batch mean.
    pub logit_grads: Array2<f64>,
    /// Magnitude of the batch-mean encouraging gradient per category,
    /// *after* any reweighting — this is what the ratio accumulator sees.
    pub pos_mag: Array1<f64>,
    /// Magnitude of the batch-mean suppressing gradient per category,
    /// after any reweighting.
    pub neg_mag: Array1<f64>,
    /// Batch-mean loss, for monitoring and gradient checking.
    pub loss: f64,
}

fn check_probs_shape(probs: &Array2<f64>, labels: &LabelBatch) -> Result<()> {
    if probs.nrows() != labels.batch_size() {
        return Err(Error::DimensionMismatch {
            context: "probability batch rows",
            expected: labels.batch_size(),
            actual: probs.nrows(),
        });
    }
    if probs.ncols() != labels.num_categories() {
        return Err(Error::DimensionMismatch {
            context: "probability batch columns",
            expected: labels.num_categories(),
            actual: probs.ncols(),
        });
    }
    Ok(())
}

fn log_prob(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// `ln(1 - p)` computed without cancellation; clamped for `p` within
/// `PROB_FLOOR` of 1.
fn log_one_minus(p: f64) -> f64 {
    if 1.0 - p < PROB_FLOOR {
        PROB_FLOOR.ln()
    } else {
        (-p).ln_1p()
    }
}

/// Applies the sigmoid elementwise: one independent probability per logit.
pub fn sigmoid_probs(logits: &LogitBatch) -> Array2<f64> {
    logits.values().mapv(stable_sigmoid)
}

/// Softmax over each adjacent pair of columns `(2j, 2j+1)`, keeping the
/// first component as category `j`'s probability. The pair softmax reduces
/// exactly to `sigmoid(z_2j - z_2j+1)`, which is how it is computed — the
/// identity with [`sigmoid_probs`] on the logit difference is bitwise.
pub fn softmax2c_probs(logits: &LogitBatch) -> Result<Array2<f64>> {
    if logits.width() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "paired-softmax head needs an even logit width, got {}",
            logits.width()
        )));
    }
    let z = logits.values();
    let (b, c) = (z.nrows(), z.ncols() / 2);
    Ok(Array2::from_shape_fn((b, c), |(i, j)| {
        stable_sigmoid(z[[i, 2 * j]] - z[[i, 2 * j + 1]])
    }))
}

/// Decomposes the plain sigmoid cross-entropy gradient into its
/// encouraging and suppressing parts.
pub fn split_gradients(probs: &Array2<f64>, labels: &LabelBatch) -> Result<GradSplit> {
    check_probs_shape(probs, labels)?;
    let (b, c) = (probs.nrows(), probs.ncols());
    let mut pos = Array1::zeros(c);
    let mut neg = Array1::zeros(c);
    let mut per_sample = Array2::zeros((b, c));
    for i in 0..b {
        for j in 0..c {
            let p = probs[[i, j]];
            let y = labels.onehot()[[i, j]];
            let enc = y * (p - 1.0);
            let sup = (1.0 - y) * p;
            pos[j] += enc;
            neg[j] += sup;
            per_sample[[i, j]] = enc + sup;
        }
    }
    let scale = 1.0 / b as f64;
    pos *= scale;
    neg *= scale;
    Ok(GradSplit {
        pos,
        neg,
        per_sample,
    })
}

/// Weighted sigmoid cross-entropy backward: the shared kernel behind the
/// sigmoid baseline (`q = r = 1`) and the gradient-guided reweighting.
fn weighted_sigmoid_backward(
    probs: &Array2<f64>,
    labels: &LabelBatch,
    weights: &TaskWeights,
) -> Result<BackwardOutput> {
    check_probs_shape(probs, labels)?;
    if weights.num_categories() != labels.num_categories() {
        return Err(Error::DimensionMismatch {
            context: "task weight count",
            expected: labels.num_categories(),
            actual: weights.num_categories(),
        });
    }
    let (b, c) = (probs.nrows(), probs.ncols());
    let mut grads = Array2::zeros((b, c));
    let mut pos: Array1<f64> = Array1::zeros(c);
    let mut neg: Array1<f64> = Array1::zeros(c);
    let mut loss = 0.0;
    for i in 0..b {
        for j in 0..c {
            let p = probs[[i, j]];
            let y = labels.onehot()[[i, j]];
            let q = weights.q[j];
            let r = weights.r[j];
            let enc = y * (p - 1.0);
            let sup = (1.0 - y) * p;
            grads[[i, j]] = q * enc + r * sup;
            pos[j] += enc;
            neg[j] += sup;
            loss -= q * y * log_prob(p) + r * (1.0 - y) * log_one_minus(p);
        }
    }
    let scale = 1.0 / b as f64;
    let pos_mag = Array1::from_shape_fn(c, |j| (weights.q[j] * pos[j] * scale).abs());
    let neg_mag = Array1::from_shape_fn(c, |j| (weights.r[j] * neg[j] * scale).abs());
    Ok(BackwardOutput {
        logit_grads: grads,
        pos_mag,
        neg_mag,
        loss: loss * scale,
    })
}

/// Plain per-category binary cross-entropy backward.
pub fn sigmoid_baseline_backward(
    probs: &Array2<f64>,
    labels: &LabelBatch,
) -> Result<BackwardOutput> {
    weighted_sigmoid_backward(probs, labels, &TaskWeights::unit(labels.num_categories()))
}

/// Gradient-guided reweighting backward: encouraging terms scaled by `q_j`,
/// suppressing terms by `r_j`. The reported magnitudes are post-reweighting
/// so the ratio accumulator tracks the gradients the parameters actually
/// receive.
pub fn eqlv2_backward(
    probs: &Array2<f64>,
    labels: &LabelBatch,
    weights: &TaskWeights,
) -> Result<BackwardOutput> {
    weighted_sigmoid_backward(probs, labels, weights)
}

/// Negative-gradient masking backward: categories with training frequency
/// below `lambda` receive no suppressing gradient at all (and no
/// suppressing loss term). With every frequency at or above `lambda` this
/// is exactly the sigmoid baseline.
pub fn eql_v1_backward(
    probs: &Array2<f64>,
    labels: &LabelBatch,
    frequencies: &Array1<f64>,
    lambda: f64,
) -> Result<BackwardOutput> {
    check_probs_shape(probs, labels)?;
    if frequencies.len() != labels.num_categories() {
        return Err(Error::DimensionMismatch {
            context: "category frequency count",
            expected: labels.num_categories(),
            actual: frequencies.len(),
        });
    }
    let keep = frequencies.mapv(|f| if f >= lambda { 1.0 } else { 0.0 });
    weighted_sigmoid_backward(
        probs,
        labels,
        &TaskWeights {
            q: Array1::ones(labels.num_categories()),
            r: keep,
        },
    )
}

/// `(C+1)`-way softmax cross-entropy backward. Background rows target the
/// extra final column. The reported per-category magnitudes cover the `C`
/// category columns only; the background column is bookkeeping, not a
/// category.
pub fn softmax_baseline_backward(
    logits: &LogitBatch,
    labels: &LabelBatch,
) -> Result<BackwardOutput> {
    let c = labels.num_categories();
    if logits.width() != c + 1 {
        return Err(Error::DimensionMismatch {
            context: "softmax baseline logit width",
            expected: c + 1,
            actual: logits.width(),
        });
    }
    if logits.batch_size() != labels.batch_size() {
        return Err(Error::DimensionMismatch {
            context: "softmax baseline batch rows",
            expected: labels.batch_size(),
            actual: logits.batch_size(),
        });
    }
    let z = logits.values();
    let b = z.nrows();
    let mut grads = Array2::zeros((b, c + 1));
    let mut pos: Array1<f64> = Array1::zeros(c);
    let mut neg: Array1<f64> = Array1::zeros(c);
    let mut loss = 0.0;
    for i in 0..b {
        let row = z.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let target = labels.category_of(i).unwrap_or(c);
        for j in 0..=c {
            let p = exps[j] / sum;
            let y = if j == target { 1.0 } else { 0.0 };
            grads[[i, j]] = p - y;
            if j < c {
                if j == target {
                    pos[j] += p - 1.0;
                } else {
                    neg[j] += p;
                }
            }
            if j == target {
                loss -= log_prob(p);
            }
        }
    }
    let scale = 1.0 / b as f64;
    Ok(BackwardOutput {
        logit_grads: grads,
        pos_mag: pos.mapv(|v| (v * scale).abs()),
        neg_mag: neg.mapv(|v| (v * scale).abs()),
        loss: loss * scale,
    })
}

/// Expands per-category gradients to the paired-softmax logit layout: the
/// gradient with respect to `z_2j` is `g_j` and with respect to `z_2j+1`
/// is `-g_j`, because the category probability depends on the logits only
/// through their difference.
pub fn pair_expand(grads: &Array2<f64>) -> Array2<f64> {
    let (b, c) = (grads.nrows(), grads.ncols());
    Array2::from_shape_fn((b, 2 * c), |(i, k)| {
        let g = grads[[i, k / 2]];
        if k % 2 == 0 {
            g
        } else {
            -g
        }
    })
}

/// Multiplies the auxiliary objectness probability into every category
/// probability of its row: the model only claims a category as confidently
/// as it claims "this is foreground at all".
pub fn objectness_combine(probs: &Array2<f64>, obj_probs: &Array1<f64>) -> Result<Array2<f64>> {
    if obj_probs.len() != probs.nrows() {
        return Err(Error::DimensionMismatch {
            context: "objectness probability count",
            expected: probs.nrows(),
            actual: obj_probs.len(),
        });
    }
    let mut combined = probs.clone();
    for (i, mut row) in combined.rows_mut().into_iter().enumerate() {
        row *= obj_probs[i];
    }
    Ok(combined)
}

/// Binary cross-entropy backward for the objectness output: target 1 for
/// foreground rows, 0 for background. Returns unscaled per-sample logit
/// gradients `sigmoid(z) - target` and the batch-mean loss. This output is
/// deliberately *not* routed through any reweighting: foreground versus
/// background is a balanced task and stays untouched.
pub fn objectness_backward(
    obj_logits: &Array1<f64>,
    is_foreground: &[bool],
) -> Result<(Array1<f64>, f64)> {
    if obj_logits.len() != is_foreground.len() {
        return Err(Error::DimensionMismatch {
            context: "objectness logit count",
            expected: is_foreground.len(),
            actual: obj_logits.len(),
        });
    }
    if obj_logits.is_empty() {
        return Err(Error::InvalidInput("objectness batch is empty".into()));
    }
    let mut grads = Array1::zeros(obj_logits.len());
    let mut loss = 0.0;
    for (i, &z) in obj_logits.iter().enumerate() {
        let p = stable_sigmoid(z);
        if is_foreground[i] {
            grads[i] = p - 1.0;
            loss -= log_prob(p);
        } else {
            grads[i] = p;
            loss -= log_one_minus(p);
        }
    }
    Ok((grads, loss / obj_logits.len() as f64))
}
