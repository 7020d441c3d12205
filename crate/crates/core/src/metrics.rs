//! Evaluation metrics, weight-norm statistics, and CSV emission.
//!
//! Accuracy is reported as the micro average over held-out foreground rows
//! plus macro (per-category-averaged) accuracy within each frequency group,
//! so a method cannot hide tail collapse behind head performance.
//! Categories without held-out rows are excluded from every denominator
//! and listed explicitly.

use ndarray::{Array1, Array2, Axis};
use std::fmt::Write as _;
use std::path::Path;

use crate::balance::stable_sigmoid;
use crate::datagen::{Dataset, Group};
use crate::error::{Error, Result};
use crate::io::{atomic_write, fmt_float};
use crate::model::{ClassifierModel, OutputLayout};
use crate::train::RunTrace;

/// Held-out accuracy, overall and per frequency group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAccuracy {
    /// Micro accuracy over all evaluated foreground rows.
    pub overall: f64,
    /// Macro accuracy over rare categories (NaN if none are evaluable).
    pub rare: f64,
    /// Macro accuracy over common categories.
    pub common: f64,
    /// Macro accuracy over frequent categories.
    pub frequent: f64,
    /// Per-category accuracy; NaN for categories with no held-out rows.
    pub per_category: Vec<f64>,
    /// Categories excluded from the macro averages for lack of held-out
    /// rows.
    pub excluded: Vec<usize>,
}

/// Summary of per-category classifier weight norms.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightNormReport {
    /// L2 norm of each category's output-weight row.
    pub norms: Vec<f64>,
    /// Coefficient of variation (population std over mean) of the norms.
    /// A balanced classifier has similar norms across categories and a
    /// small value here.
    pub cv: f64,
    /// Set when the mean norm is zero and the coefficient of variation is
    /// meaningless (reported as 0).
    pub degenerate: bool,
}

/// Per-group medians of the final accumulated gradient ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub rare: f64,
    pub common: f64,
    pub frequent: f64,
}

/// Median of a slice (mean of the middle pair for even lengths); NaN for
/// an empty slice. Inputs must not contain NaN.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median input must not contain NaN"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    probs
}

/// Index of the row maximum, ties broken toward the lower index.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Scores the model on the dataset's held-out foreground rows.
///
/// Sigmoid-family models predict the argmax category probability (after
/// the objectness multiply, when the model trains one); the softmax
/// baseline predicts the argmax over all `C + 1` columns, so predicting
/// "background" for a foreground row counts as an error.
pub fn evaluate(model: &ClassifierModel, dataset: &Dataset) -> Result<GroupAccuracy> {
    if dataset.num_categories() != model.num_categories {
        return Err(Error::DimensionMismatch {
            context: "evaluate categories",
            expected: model.num_categories,
            actual: dataset.num_categories(),
        });
    }
    let rows: Vec<usize> = dataset
        .eval_indices()
        .into_iter()
        .filter(|&i| dataset.row_category(i).is_some())
        .collect();
    if rows.is_empty() {
        return Err(Error::InvalidInput(
            "dataset has no held-out foreground rows to evaluate".into(),
        ));
    }
    let feats = dataset.features.select(Axis(0), &rows);
    let logits = model.forward(&feats)?;
    let c = model.num_categories;

    // Predicted column per row, in a space where 0..C are categories and
    // C (softmax baseline only) is background.
    let predictions: Vec<usize> = match model.layout {
        OutputLayout::SoftmaxBackground => {
            let probs = softmax_rows(&logits);
            (0..rows.len())
                .map(|i| argmax(probs.row(i).as_slice().expect("standard layout")))
                .collect()
        }
        OutputLayout::CSigmoid | OutputLayout::TwoCSoftmax => {
            let mut probs = Array2::zeros((rows.len(), c));
            for i in 0..rows.len() {
                for j in 0..c {
                    let p = match model.layout {
                        OutputLayout::CSigmoid => stable_sigmoid(logits[[i, j]]),
                        OutputLayout::TwoCSoftmax => {
                            stable_sigmoid(logits[[i, 2 * j]] - logits[[i, 2 * j + 1]])
                        }
                        OutputLayout::SoftmaxBackground => unreachable!(),
                    };
                    probs[[i, j]] = p;
                }
            }
            if let Some(oc) = model.objectness_column() {
                for i in 0..rows.len() {
                    let obj = stable_sigmoid(logits[[i, oc]]);
                    for j in 0..c {
                        probs[[i, j]] *= obj;
                    }
                }
            }
            (0..rows.len())
                .map(|i| argmax(probs.row(i).as_slice().expect("standard layout")))
                .collect()
        }
    };

    let mut correct_per_cat = vec![0usize; c];
    let mut total_per_cat = vec![0usize; c];
    let mut correct = 0usize;
    for (k, &row) in rows.iter().enumerate() {
        let truth = dataset.row_category(row).expect("foreground rows only");
        total_per_cat[truth] += 1;
        if predictions[k] == truth {
            correct_per_cat[truth] += 1;
            correct += 1;
        }
    }

    let per_category: Vec<f64> = (0..c)
        .map(|j| {
            if total_per_cat[j] == 0 {
                f64::NAN
            } else {
                correct_per_cat[j] as f64 / total_per_cat[j] as f64
            }
        })
        .collect();
    let excluded: Vec<usize> = (0..c).filter(|&j| total_per_cat[j] == 0).collect();

    let group_mean = |group: Group| -> f64 {
        let vals: Vec<f64> = (0..c)
            .filter(|&j| dataset.groups[j] == group && total_per_cat[j] > 0)
            .map(|j| per_category[j])
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };

    Ok(GroupAccuracy {
        overall: correct as f64 / rows.len() as f64,
        rare: group_mean(Group::Rare),
        common: group_mean(Group::Common),
        frequent: group_mean(Group::Frequent),
        per_category,
        excluded,
    })
}

/// Per-category L2 norms of the output-weight rows, with their coefficient
/// of variation. Under naive long-tailed training the frequent categories
/// grow much larger rows than the rare ones; balanced training shrinks the
/// spread.
pub fn weight_norms(model: &ClassifierModel) -> WeightNormReport {
    let norms: Vec<f64> = (0..model.num_categories)
        .map(|j| {
            model
                .category_weight_row(j)
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    if mean == 0.0 {
        return WeightNormReport {
            norms,
            cv: 0.0,
            degenerate: true,
        };
    }
    let var = norms.iter().map(|n| (n - mean).powi(2)).sum::<f64>() / norms.len() as f64;
    WeightNormReport {
        norms,
        cv: var.sqrt() / mean,
        degenerate: false,
    }
}

/// Per-group medians of the accumulated gradient ratio at the end of a
/// run (the last recorded snapshot).
pub fn ratio_report(trace: &RunTrace, groups: &[Group]) -> Result<RatioReport> {
    let last = trace
        .ratio_snapshots
        .last()
        .ok_or_else(|| Error::InvalidInput("trace has no ratio snapshots to report".into()))?;
    if last.ratio.len() != groups.len() {
        return Err(Error::DimensionMismatch {
            context: "ratio_report groups",
            expected: last.ratio.len(),
            actual: groups.len(),
        });
    }
    let of_group = |g: Group| -> f64 {
        let vals: Vec<f64> = groups
            .iter()
            .zip(last.ratio.iter())
            .filter(|(grp, _)| **grp == g)
            .map(|(_, &r)| r)
            .collect();
        median(&vals)
    };
    Ok(RatioReport {
        rare: of_group(Group::Rare),
        common: of_group(Group::Common),
        frequent: of_group(Group::Frequent),
    })
}

/// Writes the accumulated-ratio trace: one row per (snapshot, category),
/// columns `iteration,category,pos_sum,neg_sum,g`.
pub fn write_ratios_csv(trace: &RunTrace, path: &Path) -> Result<()> {
    let mut out = String::from("iteration,category,pos_sum,neg_sum,g\n");
    for snap in &trace.ratio_snapshots {
        for j in 0..snap.ratio.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                snap.iteration,
                j,
                fmt_float(snap.pos_sum[j]),
                fmt_float(snap.neg_sum[j]),
                fmt_float(snap.ratio[j]),
            );
        }
    }
    atomic_write(path, out.as_bytes())
}

/// Writes per-epoch held-out accuracy, columns
/// `epoch,overall,rare,common,frequent` (epochs are 1-based).
pub fn write_metrics_csv(trace: &RunTrace, path: &Path) -> Result<()> {
    let mut out = String::from("epoch,overall,rare,common,frequent\n");
    for (idx, m) in trace.epoch_metrics.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            idx + 1,
            fmt_float(m.overall),
            fmt_float(m.rare),
            fmt_float(m.common),
            fmt_float(m.frequent),
        );
    }
    atomic_write(path, out.as_bytes())
}

/// Writes the final per-category weight norms, columns `category,norm`.
pub fn write_weight_norms_csv(report: &WeightNormReport, path: &Path) -> Result<()> {
    let mut out = String::from("category,norm\n");
    for (j, n) in report.norms.iter().enumerate() {
        let _ = writeln!(out, "{},{}", j, fmt_float(*n));
    }
    atomic_write(path, out.as_bytes())
}

/// Reconstructs per-category probabilities the way [`evaluate`] does, for
/// callers that need scores rather than accuracy (exposed for tests and
/// diagnostics).
pub fn category_probs(model: &ClassifierModel, features: &Array2<f64>) -> Result<Array2<f64>> {
    let logits = model.forward(features)?;
    let c = model.num_categories;
    let b = features.nrows();
    match model.layout {
        OutputLayout::SoftmaxBackground => {
            let full = softmax_rows(&logits);
            let mut probs = Array2::zeros((b, c));
            for i in 0..b {
                for j in 0..c {
                    probs[[i, j]] = full[[i, j]];
                }
            }
            Ok(probs)
        }
        OutputLayout::CSigmoid | OutputLayout::TwoCSoftmax => {
            let mut probs = Array2::zeros((b, c));
            for i in 0..b {
                for j in 0..c {
                    probs[[i, j]] = match model.layout {
                        OutputLayout::CSigmoid => stable_sigmoid(logits[[i, j]]),
                        _ => stable_sigmoid(logits[[i, 2 * j]] - logits[[i, 2 * j + 1]]),
                    };
                }
            }
            if let Some(oc) = model.objectness_column() {
                for i in 0..b {
                    let obj = stable_sigmoid(logits[[i, oc]]);
                    for j in 0..c {
                        probs[[i, j]] *= obj;
                    }
                }
            }
            Ok(probs)
        }
    }
}

/// Per-row objectness probabilities, for models that train the auxiliary
/// output.
pub fn objectness_probs(model: &ClassifierModel, features: &Array2<f64>) -> Result<Array1<f64>> {
    let oc = model
        .objectness_column()
        .ok_or_else(|| Error::InvalidInput("model has no objectness output".into()))?;
    let logits = model.forward(features)?;
    Ok(logits.column(oc).mapv(stable_sigmoid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{assign_groups, LongTailSpec};
    use crate::heads::{LabelBatch, Method, MethodConfig};
    use crate::model::{ModelConfig, ParamSet};
    use crate::train::RatioSnapshot;
    use approx::assert_relative_eq;
    use ndarray::array;
    use rand::SeedableRng;

    /// A linear 2-feature, 2-category model with handpicked weights: it
    /// predicts category 0 when f0 > f1 and category 1 otherwise. No
    /// hidden layer, no objectness.
    fn toy_model() -> ClassifierModel {
        let cfg = MethodConfig {
            use_objectness: false,
            ..MethodConfig::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut m =
            ClassifierModel::init(2, 2, &cfg, &ModelConfig { hidden_width: 0 }, &mut rng).unwrap();
        m.params = ParamSet {
            hidden_weight: None,
            hidden_bias: None,
            cls_weight: array![[1.0, 0.0], [0.0, 1.0]],
            cls_bias: array![0.0, 0.0],
        };
        m
    }

    /// Four foreground rows (two per category, all held out) plus one
    /// training-only background row.
    fn toy_dataset() -> Dataset {
        let features = array![
            [2.0, 0.0], // cat 0, predicted 0 (correct)
            [0.0, 2.0], // cat 0, predicted 1 (wrong)
            [0.0, 3.0], // cat 1, predicted 1 (correct)
            [1.0, 3.0], // cat 1, predicted 1 (correct)
            [0.0, 0.0], // background
        ];
        let labels = LabelBatch::new(array![
            [1.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [0.0, 1.0],
            [0.0, 0.0],
        ])
        .unwrap();
        let counts = vec![2, 2];
        Dataset {
            spec: LongTailSpec {
                num_categories: 2,
                total_foreground: 4,
                feature_dim: 2,
                rare_max: 2,
                common_max: 3,
                ..LongTailSpec::default()
            },
            features,
            labels,
            groups: assign_groups(&counts, 2, 3),
            counts,
            eval_mask: vec![true, true, true, true, false],
        }
    }

    #[test]
    fn evaluate_counts_correct_predictions() {
        let acc = evaluate(&toy_model(), &toy_dataset()).unwrap();
        assert_relative_eq!(acc.overall, 0.75);
        assert_relative_eq!(acc.per_category[0], 0.5);
        assert_relative_eq!(acc.per_category[1], 1.0);
        // Both categories have 2 rows and rare_max = 2: both are rare.
        assert_relative_eq!(acc.rare, 0.75);
        assert!(acc.common.is_nan());
        assert!(acc.frequent.is_nan());
        assert!(acc.excluded.is_empty());
    }

    #[test]
    fn evaluate_excludes_categories_without_eval_rows() {
        let mut ds = toy_dataset();
        // Pull category 1's rows out of the eval split.
        ds.eval_mask = vec![true, true, false, false, false];
        let acc = evaluate(&toy_model(), &ds).unwrap();
        assert_eq!(acc.excluded, vec![1]);
        assert!(acc.per_category[1].is_nan());
        assert_relative_eq!(acc.overall, 0.5);
        assert_relative_eq!(acc.rare, 0.5);
    }

    #[test]
    fn evaluate_requires_eval_rows() {
        let mut ds = toy_dataset();
        ds.eval_mask = vec![false; 5];
        assert!(evaluate(&toy_model(), &ds).is_err());
    }

    #[test]
    fn objectness_multiply_does_not_change_argmax() {
        // The objectness probability scales a whole row, so rankings are
        // preserved; accuracy must be identical with and without it.
        let without = toy_model();
        let cfg = MethodConfig::default();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut with =
            ClassifierModel::init(2, 2, &cfg, &ModelConfig { hidden_width: 0 }, &mut rng).unwrap();
        with.params = ParamSet {
            hidden_weight: None,
            hidden_bias: None,
            cls_weight: array![[1.0, 0.0], [0.0, 1.0], [-0.3, 0.9]],
            cls_bias: array![0.0, 0.0, 0.2],
        };
        let ds = toy_dataset();
        let a = evaluate(&without, &ds).unwrap();
        let b = evaluate(&with, &ds).unwrap();
        assert_eq!(a.overall, b.overall);
        assert_eq!(a.per_category, b.per_category);
    }

    #[test]
    fn softmax_background_prediction_counts_as_error() {
        let cfg = MethodConfig {
            method: Method::SoftmaxBaseline,
            ..MethodConfig::default()
        };

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut m =
            ClassifierModel::init(2, 2, &cfg, &ModelConfig { hidden_width: 0 }, &mut rng).unwrap();
        // The background row (last) dominates every input: all foreground
        // rows are predicted background and scored wrong.
        m.params.cls_weight = array![[0.1, 0.0], [0.0, 0.1], [5.0, 5.0]];
        m.params.cls_bias = array![0.0, 0.0, 10.0];
        let acc = evaluate(&m, &toy_dataset()).unwrap();
        assert_eq!(acc.overall, 0.0);
    }

    #[test]
    fn weight_norm_spread() {
        let mut m = toy_model();
        m.params.cls_weight = array![[3.0, 0.0], [0.0, 4.0]];
        let report = weight_norms(&m);
        assert_eq!(report.norms, vec![3.0, 4.0]);
        // mean 3.5, population std 0.5.
        assert_relative_eq!(report.cv, 0.5 / 3.5, max_relative = 1e-15);
        assert!(!report.degenerate);
    }

    #[test]
    fn weight_norms_zero_model_is_degenerate() {
        let mut m = toy_model();
        m.params.cls_weight = array![[0.0, 0.0], [0.0, 0.0]];
        let report = weight_norms(&m);
        assert_eq!(report.cv, 0.0);
        assert!(report.degenerate);
    }

    #[test]
    fn paired_layout_uses_primary_rows_for_norms() {
        let cfg = MethodConfig {
            head: crate::heads::HeadKind::TwoCSoftmax,
            use_objectness: false,
            ..MethodConfig::default()
        };

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut m =
            ClassifierModel::init(2, 2, &cfg, &ModelConfig { hidden_width: 0 }, &mut rng).unwrap();
        m.params.cls_weight = array![
            [3.0, 0.0], // category 0 primary
            [9.0, 9.0],
            [0.0, 4.0], // category 1 primary
            [9.0, 9.0],
        ];
        let report = weight_norms(&m);
        assert_eq!(report.norms, vec![3.0, 4.0]);
    }

    #[test]
    fn median_evenness_and_order() {
        assert_relative_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_relative_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_relative_eq!(median(&[7.0]), 7.0);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn ratio_report_takes_final_snapshot_medians() {
        let trace = RunTrace {
            num_categories: 3,
            ratio_snapshots: vec![
                RatioSnapshot {
                    iteration: 50,
                    pos_sum: vec![0.0; 3],
                    neg_sum: vec![0.0; 3],
                    ratio: vec![9.0, 9.0, 9.0],
                },
                RatioSnapshot {
                    iteration: 100,
                    pos_sum: vec![0.0; 3],
                    neg_sum: vec![0.0; 3],
                    ratio: vec![0.2, 0.4, 0.9],
                },
            ],
            loss_curve: vec![],
            epoch_metrics: vec![],
            final_weight_norms: WeightNormReport {
                norms: vec![],
                cv: 0.0,
                degenerate: false,
            },
        };
        let groups = vec![Group::Rare, Group::Rare, Group::Frequent];
        let report = ratio_report(&trace, &groups).unwrap();
        assert_relative_eq!(report.rare, 0.3);
        assert!(report.common.is_nan());
        assert_relative_eq!(report.frequent, 0.9);
        assert!(ratio_report(&trace, &groups[..2]).is_err());
    }

    #[test]
    fn csv_golden_output() {
        let dir = tempfile::tempdir().unwrap();
        let trace = RunTrace {
            num_categories: 2,
            ratio_snapshots: vec![RatioSnapshot {
                iteration: 50,
                pos_sum: vec![0.5, 0.25],
                neg_sum: vec![1.0, 2.0],
                ratio: vec![0.5, 0.125],
            }],
            loss_curve: vec![1.0],
            epoch_metrics: vec![GroupAccuracy {
                overall: 0.75,
                rare: 0.5,
                common: f64::NAN,
                frequent: 1.0,
                per_category: vec![0.5, 1.0],
                excluded: vec![],
            }],
            final_weight_norms: WeightNormReport {
                norms: vec![3.0, 4.0],
                cv: 1.0 / 7.0,
                degenerate: false,
            },
        };
        let ratios = dir.path().join("ratios.csv");
        write_ratios_csv(&trace, &ratios).unwrap();
        assert_eq!(
            std::fs::read_to_string(&ratios).unwrap(),
            "iteration,category,pos_sum,neg_sum,g\n\
             50,0,5.00000000e-1,1.00000000e0,5.00000000e-1\n\
             50,1,2.50000000e-1,2.00000000e0,1.25000000e-1\n"
        );
        let metrics = dir.path().join("metrics.csv");
        write_metrics_csv(&trace, &metrics).unwrap();
        assert_eq!(
            std::fs::read_to_string(&metrics).unwrap(),
            "epoch,overall,rare,common,frequent\n\
             1,7.50000000e-1,5.00000000e-1,NaN,1.00000000e0\n"
        );
        let norms = dir.path().join("weight_norms.csv");
        write_weight_norms_csv(&trace.final_weight_norms, &norms).unwrap();
        assert_eq!(
            std::fs::read_to_string(&norms).unwrap(),
            "category,norm\n0,3.00000000e0\n1,4.00000000e0\n"
        );
    }
}
