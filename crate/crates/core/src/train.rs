//! The training driver.
//!
//! One function, [`train_run`], owns the whole loop: seeded model
//! initialization, epoch shuffling, the per-batch forward/backward through
//! the configured method, the gradient-ratio accumulator, momentum SGD
//! with the learning-rate schedule, and trace recording.
//!
//! Two ordering details matter for reproducing the rebalancing behaviour:
//!
//! - The reweighting consumes the accumulator state from *before* the
//!   current batch (weights at iteration `t` come from gradients up to
//!   `t - 1`), then the batch's post-reweighting magnitudes are added.
//!   The very first batch therefore runs at the near-neutral weights
//!   implied by the initial ratio.
//! - The accumulator is fed for every method, including the baselines —
//!   that is what lets a baseline run *show* tail gradient starvation in
//!   its ratio trace even though nothing feeds back into its loss.
//!
//! All randomness comes from one seeded generator (initialization first,
//! then batch shuffling), so a run is a pure function of dataset and
//! configuration.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::balance::{compute_weights, GradAccumulator, TaskWeights};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::heads::{
    eql_v1_backward, eqlv2_backward, objectness_backward, pair_expand, sigmoid_baseline_backward,
    sigmoid_probs, softmax2c_probs, softmax_baseline_backward, HeadKind, LabelBatch, LogitBatch,
    Method, MethodConfig,
};
use crate::metrics::{evaluate, weight_norms, GroupAccuracy, WeightNormReport};
use crate::model::{sgd_step, ClassifierModel, ModelConfig, SGDConfig};

/// The accumulator state is recorded every this many iterations (and at
/// the final iteration).
pub const SNAPSHOT_INTERVAL: u64 = 50;

/// Accumulator state at one recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSnapshot {
    /// 1-based count of completed training iterations.
    pub iteration: u64,
    pub pos_sum: Vec<f64>,
    pub neg_sum: Vec<f64>,
    /// Accumulated gradient ratio `g_j` per category.
    pub ratio: Vec<f64>,
}

/// Everything a run records besides the final model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub num_categories: usize,
    /// Accumulator snapshots every [`SNAPSHOT_INTERVAL`] iterations plus
    /// the final iteration.
    pub ratio_snapshots: Vec<RatioSnapshot>,
    /// Batch loss per iteration (kept in memory, not exported to CSV).
    pub loss_curve: Vec<f64>,
    /// Held-out accuracy after every epoch.
    pub epoch_metrics: Vec<GroupAccuracy>,
    /// Weight-norm statistics of the final model.
    pub final_weight_norms: WeightNormReport,
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    pub trace: RunTrace,
}

fn check_dataset(dataset: &Dataset) -> Result<()> {
    let rows = dataset.features.nrows();
    if dataset.labels.batch_size() != rows || dataset.eval_mask.len() != rows {
        return Err(Error::InvalidInput(
            "dataset features, labels, and eval mask disagree on row count".into(),
        ));
    }
    if dataset.labels.num_categories() != dataset.counts.len()
        || dataset.groups.len() != dataset.counts.len()
    {
        return Err(Error::InvalidInput(
            "dataset labels, counts, and groups disagree on category count".into(),
        ));
    }
    Ok(())
}

/// Trains a fresh model on the dataset's training split.
///
/// With `epochs = 0` the model is returned at initialization with an
/// empty trace (final weight norms are still reported).
pub fn train_run(
    dataset: &Dataset,
    method: &MethodConfig,
    sgd: &SGDConfig,
    model_cfg: &ModelConfig,
) -> Result<TrainOutcome> {
    method.validate()?;
    sgd.validate()?;
    check_dataset(dataset)?;

    let c = dataset.num_categories();
    let mut rng = ChaCha8Rng::seed_from_u64(sgd.seed);
    let mut model =
        ClassifierModel::init(dataset.spec.feature_dim, c, method, model_cfg, &mut rng)?;
    let mut velocity = model.params.zeros_like();
    let mut acc = GradAccumulator::new(c);
    let frequencies = dataset.frequencies();
    let unit_weights = TaskWeights::unit(c);

    let mut train_rows = dataset.train_indices();
    if train_rows.is_empty() && sgd.epochs > 0 {
        return Err(Error::InvalidInput("dataset has no training rows".into()));
    }

    let mut trace = RunTrace {
        num_categories: c,
        ratio_snapshots: Vec::new(),
        loss_curve: Vec::new(),
        epoch_metrics: Vec::new(),
        final_weight_norms: weight_norms(&model),
    };
    let mut iteration: u64 = 0;

    for epoch in 0..sgd.epochs {
        let lr = sgd.learning_rate_at(epoch);
        train_rows.shuffle(&mut rng);
        for chunk in train_rows.chunks(sgd.batch_size) {
            let feats = dataset.features.select(Axis(0), chunk);
            let labels = LabelBatch::new(dataset.labels.onehot().select(Axis(0), chunk))?;
            let batch = chunk.len() as f64;

            let (logits, cache) = model.forward_cached(&feats)?;
            if !logits.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    iteration,
                    value: f64::NAN,
                });
            }
            let cat_cols = model.category_columns();
            let cat_logits =
                LogitBatch::new(logits.slice(ndarray::s![.., 0..cat_cols]).to_owned())?;

            // Per-method backward over the category columns. `out`
            // carries raw per-sample gradients in the *category logit*
            // space of the respective head.
            let (out, expand_pairs) = match method.method {
                Method::SoftmaxBaseline => {
                    (softmax_baseline_backward(&cat_logits, &labels)?, false)
                }
                Method::SigmoidBaseline | Method::EqlV1 | Method::EqlV2 => {
                    let (probs, expand) = match method.head {
                        HeadKind::CSigmoid => (sigmoid_probs(&cat_logits), false),
                        HeadKind::TwoCSoftmax => (softmax2c_probs(&cat_logits)?, true),
                    };
                    let out = match method.method {
                        Method::SigmoidBaseline => sigmoid_baseline_backward(&probs, &labels)?,
                        Method::EqlV1 => {
                            eql_v1_backward(&probs, &labels, &frequencies, method.eql_lambda)?
                        }
                        Method::EqlV2 => {
                            // Weights from the accumulator as of the
                            // previous iteration.
                            let weights = if method.force_unit_weights {
                                unit_weights.clone()
                            } else {
                                compute_weights(&acc, &method.mapping)
                            };
                            eqlv2_backward(&probs, &labels, &weights)?
                        }
                        Method::SoftmaxBaseline => unreachable!(),
                    };
                    (out, expand)
                }
            };
            acc.accumulate(&out.pos_mag, &out.neg_mag)?;

            // Assemble the full per-logit gradient matrix, batch-mean
            // scaled, in the model's output layout.
            let cat_grads = if expand_pairs {
                pair_expand(&out.logit_grads)
            } else {
                out.logit_grads
            };
            let mut grads = Array2::zeros((chunk.len(), model.out_dim()));
            grads
                .slice_mut(ndarray::s![.., 0..cat_grads.ncols()])
                .assign(&cat_grads);
            let mut loss = out.loss;
            if let Some(oc) = model.objectness_column() {
                let obj_logits = logits.column(oc).to_owned();
                let (obj_grads, obj_loss) =
                    objectness_backward(&obj_logits, labels.is_foreground())?;
                grads.column_mut(oc).assign(&obj_grads);
                loss += obj_loss;
            }
            grads.mapv_inplace(|g| g / batch);

            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration,
                    value: loss,
                });
            }
            trace.loss_curve.push(loss);

            let param_grads = model.backward_params(&feats, &cache, &grads)?;
            sgd_step(
                &mut model.params,
                &param_grads,
                &mut velocity,
                lr,
                sgd.momentum,
                sgd.weight_decay,
            );

            iteration += 1;
            if iteration % SNAPSHOT_INTERVAL == 0 {
                trace.ratio_snapshots.push(snapshot(iteration, &acc));
            }
        }
        trace.epoch_metrics.push(evaluate(&model, dataset)?);
    }

    if iteration > 0 && iteration % SNAPSHOT_INTERVAL != 0 {
        trace.ratio_snapshots.push(snapshot(iteration, &acc));
    }
    trace.final_weight_norms = weight_norms(&model);

    Ok(TrainOutcome { model, trace })
}

fn snapshot(iteration: u64, acc: &GradAccumulator) -> RatioSnapshot {
    RatioSnapshot {
        iteration,
        pos_sum: acc.pos_sum().to_vec(),
        neg_sum: acc.neg_sum().to_vec(),
        ratio: acc.ratio().to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, LongTailSpec};
    use crate::heads::MethodConfig;

    /// Small, cleanly separable dataset whose three categories land one in
    /// each frequency group so no group metric is NaN (NaN breaks the
    /// bitwise trace comparisons below).
    fn toy_spec() -> LongTailSpec {
        LongTailSpec {
            num_categories: 3,
            total_foreground: 90,
            zipf_exponent: 0.8,
            feature_dim: 4,
            cluster_separation: 4.0,
            background_fraction: 0.2,
            seed: 5,
            rare_max: 20,
            common_max: 30,
        }
    }

    fn quick_sgd(epochs: usize) -> SGDConfig {
        SGDConfig {
            learning_rate: 0.2,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs,
            batch_size: 16,
            seed: 11,
            schedule: Some(vec![]),
        }
    }

    fn small_model() -> ModelConfig {
        ModelConfig { hidden_width: 8 }
    }

    #[test]
    fn runs_are_deterministic() {
        let ds = generate(&toy_spec()).unwrap();
        let method = MethodConfig::default();
        let a = train_run(&ds, &method, &quick_sgd(3), &small_model()).unwrap();
        let b = train_run(&ds, &method, &quick_sgd(3), &small_model()).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.trace, b.trace);
        let c = train_run(
            &ds,
            &method,
            &SGDConfig {
                seed: 12,
                ..quick_sgd(3)
            },
            &small_model(),
        )
        .unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = generate(&toy_spec()).unwrap();
        let method = MethodConfig::default();
        let out = train_run(&ds, &method, &quick_sgd(0), &small_model()).unwrap();
        assert!(out.trace.ratio_snapshots.is_empty());
        assert!(out.trace.loss_curve.is_empty());
        assert!(out.trace.epoch_metrics.is_empty());
        // The model must equal a fresh initialization under the same seed.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fresh = ClassifierModel::init(4, 3, &method, &small_model(), &mut rng).unwrap();
        assert_eq!(out.model, fresh);
    }

    #[test]
    fn snapshot_cadence_covers_interval_and_final() {
        let ds = generate(&toy_spec()).unwrap();
        let train_count = ds.train_indices().len();
        let per_epoch = train_count.div_ceil(16) as u64;
        let epochs = 9;
        let out = train_run(
            &ds,
            &MethodConfig::default(),
            &quick_sgd(epochs),
            &small_model(),
        )
        .unwrap();
        let total = per_epoch * epochs as u64;
        assert_eq!(out.trace.loss_curve.len() as u64, total);
        let snaps = &out.trace.ratio_snapshots;
        let expected: Vec<u64> = (1..=total)
            .filter(|i| i % SNAPSHOT_INTERVAL == 0)
            .chain(if total % SNAPSHOT_INTERVAL != 0 {
                Some(total)
            } else {
                None
            })
            .collect();
        assert_eq!(
            snaps.iter().map(|s| s.iteration).collect::<Vec<_>>(),
            expected
        );
        assert_eq!(out.trace.epoch_metrics.len(), epochs);
    }

    #[test]
    fn every_method_learns_the_separable_toy_problem() {
        let ds = generate(&toy_spec()).unwrap();
        let configs = [
            MethodConfig {
                method: Method::SoftmaxBaseline,
                ..MethodConfig::default()
            },
            MethodConfig {
                method: Method::SigmoidBaseline,
                ..MethodConfig::default()
            },
            MethodConfig {
                method: Method::EqlV1,
                ..MethodConfig::default()
            },
            MethodConfig {
                method: Method::EqlV2,
                ..MethodConfig::default()
            },
            MethodConfig {
                method: Method::EqlV2,
                head: HeadKind::TwoCSoftmax,
                ..MethodConfig::default()
            },
            MethodConfig {
                method: Method::SigmoidBaseline,
                use_objectness: false,
                ..MethodConfig::default()
            },
        ];
        for cfg in configs {
            let out = train_run(&ds, &cfg, &quick_sgd(12), &small_model()).unwrap();
            let losses = &out.trace.loss_curve;
            let head_loss = losses[0];
            let tail_loss: f64 = losses[losses.len() - 5..].iter().sum::<f64>() / 5.0;
            assert!(
                tail_loss < 0.5 * head_loss,
                "{:?}/{:?}: loss failed to drop ({head_loss} -> {tail_loss})",
                cfg.method,
                cfg.head,
            );
            let final_acc = out.trace.epoch_metrics.last().unwrap();
            assert!(
                final_acc.overall > 0.7,
                "{:?}/{:?}: final accuracy {}",
                cfg.method,
                cfg.head,
                final_acc.overall
            );
        }
    }

    #[test]
    fn forced_unit_weights_match_baseline_exactly() {
        let ds = generate(&toy_spec()).unwrap();
        let baseline = train_run(
            &ds,
            &MethodConfig {
                method: Method::SigmoidBaseline,
                ..MethodConfig::default()
            },
            &quick_sgd(4),
            &small_model(),
        )
        .unwrap();
        let pinned = train_run(
            &ds,
            &MethodConfig {
                method: Method::EqlV2,
                force_unit_weights: true,
                ..MethodConfig::default()
            },
            &quick_sgd(4),
            &small_model(),
        )
        .unwrap();
        // Bit-for-bit: same parameters, same traces.
        assert_eq!(baseline.model, pinned.model);
        assert_eq!(baseline.trace, pinned.trace);
    }

    #[test]
    fn accumulator_trace_is_monotone_in_sums() {
        let ds = generate(&toy_spec()).unwrap();
        let out = train_run(
            &ds,
            &MethodConfig::default(),
            &quick_sgd(20),
            &small_model(),
        )
        .unwrap();
        let snaps = &out.trace.ratio_snapshots;
        assert!(snaps.len() >= 2);
        for w in snaps.windows(2) {
            for j in 0..3 {
                assert!(w[1].pos_sum[j] >= w[0].pos_sum[j]);
                assert!(w[1].neg_sum[j] >= w[0].neg_sum[j]);
            }
        }
    }

    #[test]
    fn non_finite_features_are_reported_as_divergence() {
        let mut ds = generate(&toy_spec()).unwrap();
        ds.features[[0, 0]] = f64::NAN;
        let err =
            train_run(&ds, &MethodConfig::default(), &quick_sgd(1), &small_model()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn empty_training_split_is_rejected() {
        let mut ds = generate(&toy_spec()).unwrap();
        ds.eval_mask = vec![true; ds.num_rows()];
        assert!(train_run(&ds, &MethodConfig::default(), &quick_sgd(1), &small_model()).is_err());
    }
}
