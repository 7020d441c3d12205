//! The classifier: a small MLP, its analytic parameter gradients, and
//! momentum SGD with weight decay.
//!
//! The network is `features -> [tanh hidden layer] -> linear output`. The
//! output width depends on the training method: `C` logits for the sigmoid
//! head, `2C` for the paired-softmax head, `C + 1` for the softmax baseline
//! (whose last column is the background class), plus one trailing
//! objectness logit for sigmoid-family methods that train it.
//!
//! [`ClassifierModel::backward_params`] turns per-logit gradients into
//! parameter gradients by plain chain rule; nothing here knows which loss
//! produced the logit gradients, which is what lets every method share one
//! model implementation.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{HeadKind, Method, MethodConfig};

/// Initial bias for category outputs of the sigmoid-family heads. A small
/// positive constant keeps the initial probabilities marginally above one
/// half so the very first suppressing gradients are informative rather
/// than symmetric noise.
pub const CATEGORY_BIAS_INIT: f64 = 0.001;

/// Architecture knobs independent of the training method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the single tanh hidden layer; `0` removes the hidden layer
    /// and makes the classifier linear.
    pub hidden_width: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden_width: 64 }
    }
}

/// How the output columns are laid out and interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputLayout {
    /// One sigmoid logit per category.
    CSigmoid,
    /// Two softmax-paired logits per category, columns `(2j, 2j + 1)`.
    TwoCSoftmax,
    /// `C` category logits plus a trailing background logit under a single
    /// softmax.
    SoftmaxBackground,
}

impl OutputLayout {
    /// Layout and objectness flag implied by a method configuration.
    pub fn for_method(cfg: &MethodConfig) -> (OutputLayout, bool) {
        match cfg.method {
            Method::SoftmaxBaseline => (OutputLayout::SoftmaxBackground, false),
            _ => {
                let layout = match cfg.head {
                    HeadKind::CSigmoid => OutputLayout::CSigmoid,
                    HeadKind::TwoCSoftmax => OutputLayout::TwoCSoftmax,
                };
                (layout, cfg.use_objectness)
            }
        }
    }

    /// Number of output columns consumed by category scores (excluding any
    /// objectness column).
    pub fn category_columns(&self, num_categories: usize) -> usize {
        match self {
            OutputLayout::CSigmoid => num_categories,
            OutputLayout::TwoCSoftmax => 2 * num_categories,
            OutputLayout::SoftmaxBackground => num_categories + 1,
        }
    }
}

/// One named set of tensors with the model's shapes. Used for the
/// parameters themselves, for their gradients, and for the SGD velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    /// Hidden layer weights, `(hidden, feature_dim)`; `None` for a linear
    /// model.
    pub hidden_weight: Option<Array2<f64>>,
    /// Hidden layer biases, `(hidden,)`.
    pub hidden_bias: Option<Array1<f64>>,
    /// Output weights, `(out, hidden)` — or `(out, feature_dim)` for a
    /// linear model.
    pub cls_weight: Array2<f64>,
    /// Output biases, `(out,)`.
    pub cls_bias: Array1<f64>,
}

impl ParamSet {
    /// A set of zero tensors with the same shapes — the initial velocity.
    pub fn zeros_like(&self) -> ParamSet {
        ParamSet {
            hidden_weight: self.hidden_weight.as_ref().map(|w| Array2::zeros(w.dim())),
            hidden_bias: self.hidden_bias.as_ref().map(|b| Array1::zeros(b.len())),
            cls_weight: Array2::zeros(self.cls_weight.dim()),
            cls_bias: Array1::zeros(self.cls_bias.len()),
        }
    }
}

/// Gradients with respect to every parameter, shaped like the parameters.
pub type ParamGrads = ParamSet;

/// Momentum buffers, shaped like the parameters.
pub type Velocity = ParamSet;

/// Activations remembered by the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Post-tanh hidden activations, `(batch, hidden)`; `None` for a
    /// linear model.
    pub hidden_act: Option<Array2<f64>>,
}

/// The classifier network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub num_categories: usize,
    pub feature_dim: usize,
    pub layout: OutputLayout,
    /// Whether the last output column is the auxiliary objectness logit.
    pub has_objectness: bool,
    pub params: ParamSet,
}

impl ClassifierModel {
    /// Initializes a model for the given method: Gaussian weights scaled
    /// by `1/sqrt(fan_in)`, zero biases — except the category outputs of
    /// sigmoid-family heads, which start at [`CATEGORY_BIAS_INIT`].
    ///
    /// Weights are drawn from `rng` in a fixed order (hidden weights
    /// row-major, then output weights row-major), so a seeded generator
    /// reproduces the initialization exactly.
    pub fn init(
        feature_dim: usize,
        num_categories: usize,
        method: &MethodConfig,
        model_cfg: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Result<ClassifierModel> {
        if feature_dim == 0 || num_categories == 0 {
            return Err(Error::InvalidConfig(
                "model needs at least one feature and one category".into(),
            ));
        }
        let (layout, has_objectness) = OutputLayout::for_method(method);
        let cat_cols = layout.category_columns(num_categories);
        let out = cat_cols + has_objectness as usize;

        let mut gaussian = |rows: usize, cols: usize| -> Array2<f64> {
            let scale = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| {
                let z: f64 = rng.sample(StandardNormal);
                z * scale
            })
        };

        let (hidden_weight, hidden_bias, cls_in) = if model_cfg.hidden_width > 0 {
            let h = model_cfg.hidden_width;
            (Some(gaussian(h, feature_dim)), Some(Array1::zeros(h)), h)
        } else {
            (None, None, feature_dim)
        };
        let cls_weight = gaussian(out, cls_in);
        let mut cls_bias = Array1::zeros(out);
        if layout != OutputLayout::SoftmaxBackground {
            for j in 0..cat_cols {
                cls_bias[j] = CATEGORY_BIAS_INIT;
            }
        }

        Ok(ClassifierModel {
            num_categories,
            feature_dim,
            layout,
            has_objectness,
            params: ParamSet {
                hidden_weight,
                hidden_bias,
                cls_weight,
                cls_bias,
            },
        })
    }

    /// Total output width: category columns plus the objectness column.
    pub fn out_dim(&self) -> usize {
        self.layout.category_columns(self.num_categories) + self.has_objectness as usize
    }

    /// Number of leading output columns that carry category scores.
    pub fn category_columns(&self) -> usize {
        self.layout.category_columns(self.num_categories)
    }

    /// Index of the objectness column, if the model has one.
    pub fn objectness_column(&self) -> Option<usize> {
        self.has_objectness.then(|| self.category_columns())
    }

    /// The output-weight row that scores category `j` — the primary pair
    /// member for the paired-softmax layout.
    pub fn category_weight_row(&self, j: usize) -> ArrayView1<'_, f64> {
        let row = match self.layout {
            OutputLayout::TwoCSoftmax => 2 * j,
            _ => j,
        };
        self.params.cls_weight.row(row)
    }

    fn check_features(&self, features: &Array2<f64>) -> Result<()> {
        if features.ncols() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                context: "feature columns",
                expected: self.feature_dim,
                actual: features.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass returning logits and the cache needed by
    /// [`backward_params`](Self::backward_params).
    pub fn forward_cached(&self, features: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_features(features)?;
        let (input, hidden_act) = match (&self.params.hidden_weight, &self.params.hidden_bias) {
            (Some(w), Some(b)) => {
                let act = (features.dot(&w.t()) + b).mapv(f64::tanh);
                (act.clone(), Some(act))
            }
            _ => (features.clone(), None),
        };
        let logits = input.dot(&self.params.cls_weight.t()) + &self.params.cls_bias;
        Ok((logits, ForwardCache { hidden_act }))
    }

    /// Forward pass without the cache, for evaluation.
    pub fn forward(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(features)?.0)
    }

    /// Chains per-logit gradients back to every parameter.
    ///
    /// `logit_grads` must already carry whatever batch scaling the caller
    /// wants in the parameter gradients (the trainer passes batch means).
    pub fn backward_params(
        &self,
        features: &Array2<f64>,
        cache: &ForwardCache,
        logit_grads: &Array2<f64>,
    ) -> Result<ParamGrads> {
        self.check_features(features)?;
        if logit_grads.nrows() != features.nrows() {
            return Err(Error::DimensionMismatch {
                context: "logit gradient rows",
                expected: features.nrows(),
                actual: logit_grads.nrows(),
            });
        }
        if logit_grads.ncols() != self.out_dim() {
            return Err(Error::DimensionMismatch {
                context: "logit gradient columns",
                expected: self.out_dim(),
                actual: logit_grads.ncols(),
            });
        }
        match (&self.params.hidden_weight, &cache.hidden_act) {
            (Some(_), None) => {
                return Err(Error::InvalidInput(
                    "forward cache is missing hidden activations".into(),
                ))
            }
            (Some(w), Some(act)) => {
                let cls_weight = logit_grads.t().dot(act);
                let cls_bias = logit_grads.sum_axis(Axis(0));
                // d(tanh)/d(pre) = 1 - act^2, applied to the gradient
                // flowing back through the output weights.
                let dact = logit_grads.dot(&self.params.cls_weight);
                let dpre = &dact * &act.mapv(|a| 1.0 - a * a);
                let hidden_weight = dpre.t().dot(features);
                let hidden_bias = dpre.sum_axis(Axis(0));
                debug_assert_eq!(hidden_weight.dim(), w.dim());
                Ok(ParamSet {
                    hidden_weight: Some(hidden_weight),
                    hidden_bias: Some(hidden_bias),
                    cls_weight,
                    cls_bias,
                })
            }
            (None, _) => Ok(ParamSet {
                hidden_weight: None,
                hidden_bias: None,
                cls_weight: logit_grads.t().dot(features),
                cls_bias: logit_grads.sum_axis(Axis(0)),
            }),
        }
    }
}

/// Optimizer settings and the training-loop shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SGDConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for model initialization and batch shuffling.
    pub seed: u64,
    /// Learning-rate multipliers as `(epoch, factor)` pairs: from `epoch`
    /// onward the rate is multiplied by `factor` (cumulatively across
    /// entries). `None` picks the default decay — a tenth at 60% and again
    /// at 87% of the epochs; an explicit empty list keeps the rate
    /// constant.
    pub schedule: Option<Vec<(usize, f64)>>,
}

impl Default for SGDConfig {
    fn default() -> Self {
        SGDConfig {
            learning_rate: 0.2,
            momentum: 0.9,
            weight_decay: 2e-3,
            epochs: 30,
            batch_size: 64,
            seed: 1,
            schedule: None,
        }
    }
}

impl SGDConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and positive, got {}",
                self.learning_rate
            )));
        }
        if !self.momentum.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "weight_decay must be finite and non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if let Some(steps) = &self.schedule {
            let mut prev: Option<usize> = None;
            for &(epoch, factor) in steps {
                if epoch >= self.epochs {
                    return Err(Error::InvalidConfig(format!(
                        "schedule epoch {epoch} is out of range for {} epochs",
                        self.epochs
                    )));
                }
                if prev.is_some_and(|p| p >= epoch) {
                    return Err(Error::InvalidConfig(
                        "schedule epochs must be strictly increasing".into(),
                    ));
                }
                if !factor.is_finite() || factor <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "schedule factor must be finite and positive, got {factor}"
                    )));
                }
                prev = Some(epoch);
            }
        }
        Ok(())
    }

    /// The schedule actually applied: the explicit one, or the default
    /// tenth-at-60%-and-87% decay.
    pub fn resolved_schedule(&self) -> Vec<(usize, f64)> {
        if let Some(steps) = &self.schedule {
            return steps.clone();
        }
        if self.epochs == 0 {
            return Vec::new();
        }
        let first = (0.6 * self.epochs as f64).floor() as usize;
        let second = (0.87 * self.epochs as f64).floor() as usize;
        if first == second {
            vec![(first, 0.01)]
        } else {
            vec![(first, 0.1), (second, 0.1)]
        }
    }

    /// Learning rate in force during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.resolved_schedule()
            .iter()
            .filter(|&&(e, _)| e <= epoch)
            .fold(self.learning_rate, |lr, &(_, f)| lr * f)
    }
}

/// One momentum-SGD update with coupled weight decay:
///
/// ```text
/// v <- momentum * v + grad + weight_decay * param
/// param <- param - learning_rate * v
/// ```
pub fn sgd_step(
    params: &mut ParamSet,
    grads: &ParamGrads,
    velocity: &mut Velocity,
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
) {
    fn step(p: &mut [f64], g: &[f64], v: &mut [f64], lr: f64, m: f64, wd: f64) {
        debug_assert!(p.len() == g.len() && g.len() == v.len());
        for i in 0..p.len() {
            v[i] = m * v[i] + g[i] + wd * p[i];
            p[i] -= lr * v[i];
        }
    }
    // All tensors are constructed in standard layout; the slice views are
    // guaranteed to exist.
    if let (Some(pw), Some(gw), Some(vw)) = (
        params.hidden_weight.as_mut(),
        grads.hidden_weight.as_ref(),
        velocity.hidden_weight.as_mut(),
    ) {
        step(
            pw.as_slice_mut().expect("standard layout"),
            gw.as_slice().expect("standard layout"),
            vw.as_slice_mut().expect("standard layout"),
            learning_rate,
            momentum,
            weight_decay,
        );
    }
    if let (Some(pb), Some(gb), Some(vb)) = (
        params.hidden_bias.as_mut(),
        grads.hidden_bias.as_ref(),
        velocity.hidden_bias.as_mut(),
    ) {
        step(
            pb.as_slice_mut().expect("standard layout"),
            gb.as_slice().expect("standard layout"),
            vb.as_slice_mut().expect("standard layout"),
            learning_rate,
            momentum,
            weight_decay,
        );
    }
    step(
        params.cls_weight.as_slice_mut().expect("standard layout"),
        grads.cls_weight.as_slice().expect("standard layout"),
        velocity.cls_weight.as_slice_mut().expect("standard layout"),
        learning_rate,
        momentum,
        weight_decay,
    );
    step(
        params.cls_bias.as_slice_mut().expect("standard layout"),
        grads.cls_bias.as_slice().expect("standard layout"),
        velocity.cls_bias.as_slice_mut().expect("standard layout"),
        learning_rate,
        momentum,
        weight_decay,
    );
}
