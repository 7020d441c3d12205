//! Synthetic long-tailed datasets.
//!
//! Each dataset is a mixture of Gaussian clusters, one per category, whose
//! sizes follow a Zipf power law — a handful of frequent categories own
//! most of the foreground rows while a long tail of rare categories get a
//! few samples each. A configurable fraction of *background* rows (drawn
//! from a broad zero-mean Gaussian, labelled all-zeros) stands in for the
//! negative proposals a detector sees: they contribute suppressing gradient
//! to every category and are the main driver of the imbalance under study.
//!
//! Categories are binned into three groups by training-sample count —
//! rare, common, frequent — so metrics can be reported per group. Rows are
//! split 80/20 into train/eval within every category (and within the
//! background block), keeping at least one training row per category;
//! single-sample categories stay train-only and are excluded from
//! evaluation denominators downstream.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::heads::LabelBatch;
use crate::io::atomic_write;

/// Recipe for a synthetic long-tailed dataset. The default value is the
/// reference configuration used throughout the integration tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongTailSpec {
    /// Number of foreground categories `C`.
    pub num_categories: usize,
    /// Total number of foreground rows `N`, distributed across categories
    /// by the Zipf law.
    pub total_foreground: usize,
    /// Zipf exponent `s`: category `j` (0-based) receives a share
    /// proportional to `(j + 1)^-s`. Zero gives a uniform distribution;
    /// larger values give a heavier head and a longer tail.
    pub zipf_exponent: f64,
    /// Feature dimensionality.
    pub feature_dim: usize,
    /// Distance of every cluster center from the origin. Within-cluster
    /// noise is unit Gaussian, so this directly controls separability.
    pub cluster_separation: f64,
    /// Fraction of *total* rows that are background. The generator adds
    /// `ceil(beta / (1 - beta) * N)` background rows.
    pub background_fraction: f64,
    /// Seed for all randomness in generation.
    pub seed: u64,
    /// Categories with at most this many rows are `Rare`.
    pub rare_max: usize,
    /// Categories with more than `rare_max` and at most this many rows are
    /// `Common`; anything larger is `Frequent`.
    pub common_max: usize,
}

impl Default for LongTailSpec {
    fn default() -> Self {
        LongTailSpec {
            num_categories: 100,
            total_foreground: 20_000,
            zipf_exponent: 1.2,
            feature_dim: 32,
            cluster_separation: 3.0,
            background_fraction: 0.2,
            seed: 7,
            rare_max: 35,
            common_max: 200,
        }
    }
}

impl LongTailSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_categories == 0 {
            return Err(Error::InvalidConfig(
                "num_categories must be at least 1".into(),
            ));
        }
        if self.total_foreground < self.num_categories {
            return Err(Error::InvalidConfig(format!(
                "total_foreground ({}) must be at least num_categories ({}) \
                 so every category gets a row",
                self.total_foreground, self.num_categories
            )));
        }
        if !self.zipf_exponent.is_finite() || self.zipf_exponent < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "zipf_exponent must be finite and non-negative, got {}",
                self.zipf_exponent
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig(
                "feature_dim must be at least 1".into(),
            ));
        }
        if !self.cluster_separation.is_finite() || self.cluster_separation <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "cluster_separation must be finite and positive, got {}",
                self.cluster_separation
            )));
        }
        if !self.background_fraction.is_finite() || !(0.0..1.0).contains(&self.background_fraction)
        {
            return Err(Error::InvalidConfig(format!(
                "background_fraction must lie in [0, 1), got {}",
                self.background_fraction
            )));
        }
        if self.rare_max == 0 || self.rare_max > self.common_max {
            return Err(Error::InvalidConfig(format!(
                "group thresholds must satisfy 1 <= rare_max <= common_max, \
                 got rare_max {} common_max {}",
                self.rare_max, self.common_max
            )));
        }
        Ok(())
    }

    /// Number of background rows implied by `background_fraction`, rounded
    /// up so any positive fraction yields at least one row.
    pub fn num_background(&self) -> usize {
        let beta = self.background_fraction;
        (beta / (1.0 - beta) * self.total_foreground as f64).ceil() as usize
    }
}

/// Frequency bin of a category, assigned from its generated row count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Rare,
    Common,
    Frequent,
}

/// Bins categories by row count against the two group thresholds.
pub fn assign_groups(counts: &[usize], rare_max: usize, common_max: usize) -> Vec<Group> {
    counts
        .iter()
        .map(|&n| {
            if n <= rare_max {
                Group::Rare
            } else if n <= common_max {
                Group::Common
            } else {
                Group::Frequent
            }
        })
        .collect()
}

/// Integer category sizes following the Zipf law: `n_j` proportional to
/// `(j + 1)^-s`, summing exactly to `total_foreground`, non-increasing,
/// with every category getting at least one row.
///
/// Real-valued shares are apportioned by largest remainder (ties broken
/// toward the more frequent category); zero counts are then bumped to one,
/// paid for by decrementing the largest counts.
pub fn zipf_counts(spec: &LongTailSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let c = spec.num_categories;
    let n = spec.total_foreground;
    let shares: Vec<f64> = (0..c)
        .map(|j| ((j + 1) as f64).powf(-spec.zipf_exponent))
        .collect();
    let total: f64 = shares.iter().sum();
    let ideals: Vec<f64> = shares.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = ideals.iter().map(|&x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();

    // Hand out the rounding leftovers by largest fractional remainder;
    // ties go to the lower index so the sequence stays non-increasing.
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        let fa = ideals[a] - ideals[a].floor();
        let fb = ideals[b] - ideals[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &j in order.iter().take(n - assigned) {
        counts[j] += 1;
    }

    // Guarantee a minimum of one row per category, taking the surplus from
    // the rightmost maximum so the non-increasing order is preserved.
    let mut deficit = counts.iter().filter(|&&x| x == 0).count();
    for x in counts.iter_mut() {
        if *x == 0 {
            *x = 1;
        }
    }
    while deficit > 0 {
        let max = *counts.iter().max().expect("non-empty counts");
        debug_assert!(
            max > 1,
            "total_foreground >= num_categories makes this feasible"
        );
        let j = counts.iter().rposition(|&x| x == max).expect("max exists");
        counts[j] -= 1;
        deficit -= 1;
    }
    Ok(counts)
}

/// A generated dataset: features, labels, and the bookkeeping needed by
/// training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// The recipe this dataset was generated from.
    pub spec: LongTailSpec,
    /// Row-major features, `(rows, feature_dim)`. Category rows come first
    /// in category order, background rows last.
    pub features: Array2<f64>,
    /// One-hot labels over the categories; background rows are all zeros.
    pub labels: LabelBatch,
    /// Rows per category, as produced by [`zipf_counts`].
    pub counts: Vec<usize>,
    /// Frequency bin per category.
    pub groups: Vec<Group>,
    /// `true` where a row belongs to the held-out evaluation split.
    pub eval_mask: Vec<bool>,
}

impl Dataset {
    pub fn num_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_categories(&self) -> usize {
        self.counts.len()
    }

    /// Indices of training rows, in row order.
    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.num_rows())
            .filter(|&i| !self.eval_mask[i])
            .collect()
    }

    /// Indices of held-out rows, in row order.
    pub fn eval_indices(&self) -> Vec<usize> {
        (0..self.num_rows())
            .filter(|&i| self.eval_mask[i])
            .collect()
    }

    /// Category of each row (`None` for background).
    pub fn row_category(&self, row: usize) -> Option<usize> {
        self.labels.category_of(row)
    }

    /// Per-category share of foreground rows, `n_j / N`. This is the
    /// frequency the negative-gradient mask thresholds against.
    pub fn frequencies(&self) -> Array1<f64> {
        let n: usize = self.counts.iter().sum();
        Array1::from_iter(self.counts.iter().map(|&c| c as f64 / n as f64))
    }

    /// Writes the dataset as CSV: feature columns, the category index
    /// (`-1` for background), and the split name. Floats are written in
    /// shortest round-trip form, so import reproduces them bit for bit.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let d = self.spec.feature_dim;
        let mut out = String::new();
        for k in 0..d {
            let _ = write!(out, "f{k},");
        }
        out.push_str("category,split\n");
        for i in 0..self.num_rows() {
            for k in 0..d {
                let _ = write!(out, "{},", self.features[[i, k]]);
            }
            let cat = self.row_category(i).map_or(-1, |c| c as i64);
            let split = if self.eval_mask[i] { "eval" } else { "train" };
            let _ = writeln!(out, "{cat},{split}");
        }
        atomic_write(path, out.as_bytes())
    }

    /// Reads a dataset back from [`export_csv`](Self::export_csv) output.
    ///
    /// The generative fields of the returned spec (seed, Zipf exponent,
    /// separation, background fraction) are not stored in the CSV and come
    /// back as zeros; counts, groups and the split are reconstructed from
    /// the rows themselves.
    pub fn import_csv(path: &Path, rare_max: usize, common_max: usize) -> Result<Dataset> {
        let err = |message: String| Error::Csv {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| err("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[cols.len() - 2] != "category" || cols[cols.len() - 1] != "split" {
            return Err(err(
                "header must end with `category,split` after the feature columns".into(),
            ));
        }
        let d = cols.len() - 2;

        let mut features: Vec<f64> = Vec::new();
        let mut categories: Vec<i64> = Vec::new();
        let mut eval_mask: Vec<bool> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d + 2 {
                return Err(err(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    d + 2,
                    fields.len()
                )));
            }
            for f in &fields[..d] {
                features.push(
                    f.parse::<f64>()
                        .map_err(|e| err(format!("line {}: bad float {f:?}: {e}", lineno + 2)))?,
                );
            }
            categories.push(
                fields[d]
                    .parse::<i64>()
                    .map_err(|e| err(format!("line {}: bad category: {e}", lineno + 2)))?,
            );
            eval_mask.push(match fields[d + 1] {
                "train" => false,
                "eval" => true,
                other => {
                    return Err(err(format!(
                        "line {}: split must be `train` or `eval`, got {other:?}",
                        lineno + 2
                    )))
                }
            });
        }
        let rows = categories.len();
        if rows == 0 {
            return Err(err("no data rows".into()));
        }
        let num_categories = categories
            .iter()
            .filter(|&&c| c >= 0)
            .map(|&c| c as usize + 1)
            .max()
            .ok_or_else(|| err("no foreground rows".into()))?;
        let mut counts = vec![0usize; num_categories];
        let mut onehot = Array2::zeros((rows, num_categories));
        for (i, &c) in categories.iter().enumerate() {
            if c >= 0 {
                counts[c as usize] += 1;
                onehot[[i, c as usize]] = 1.0;
            }
        }
        if counts.iter().any(|&n| n == 0) {
            return Err(err("category indices must be contiguous from 0".into()));
        }
        let total_foreground: usize = counts.iter().sum();
        let features = Array2::from_shape_vec((rows, d), features)
            .expect("row-major feature buffer matches dimensions");
        Ok(Dataset {
            spec: LongTailSpec {
                num_categories,
                total_foreground,
                zipf_exponent: 0.0,
                feature_dim: d,
                cluster_separation: 0.0,
                background_fraction: 0.0,
                seed: 0,
                rare_max,
                common_max,
            },
            features,
            labels: LabelBatch::new(onehot)?,
            groups: assign_groups(&counts, rare_max, common_max),
            counts,
            eval_mask,
        })
    }
}

/// Number of held-out rows for a block of `n` rows: a rounded 20%, at
/// least one whenever a holdout is possible at all, and never the whole
/// block. Single-row blocks get no holdout.
fn eval_rows_for(n: usize) -> usize {
    if n <= 1 {
        return 0;
    }
    ((n as f64) * 0.2).round().max(1.0).min((n - 1) as f64) as usize
}

/// Generates the dataset described by `spec`. Deterministic: the same spec
/// (including seed) produces bitwise-identical features.
pub fn generate(spec: &LongTailSpec) -> Result<Dataset> {
    let counts = zipf_counts(spec)?;
    let d = spec.feature_dim;
    let num_bg = spec.num_background();
    let rows = spec.total_foreground + num_bg;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut features = Array2::zeros((rows, d));
    let mut onehot = Array2::zeros((rows, spec.num_categories));
    let mut eval_mask = vec![false; rows];
    let mut row = 0usize;
    for (j, &n_j) in counts.iter().enumerate() {
        // Cluster center: a uniformly random direction at the configured
        // distance from the origin.
        let mut center: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = center.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in center.iter_mut() {
                *v *= spec.cluster_separation / norm;
            }
        } else {
            center[0] = spec.cluster_separation;
        }
        let holdout = eval_rows_for(n_j);
        for i in 0..n_j {
            for k in 0..d {
                let noise: f64 = rng.sample(StandardNormal);
                features[[row, k]] = center[k] + noise;
            }
            onehot[[row, j]] = 1.0;
            eval_mask[row] = i >= n_j - holdout;
            row += 1;
        }
    }
    // Background rows: broad zero-mean noise at the cluster-radius scale,
    // overlapping every cluster.
    let bg_holdout = eval_rows_for(num_bg);
    for i in 0..num_bg {
        for k in 0..d {
            let noise: f64 = rng.sample(StandardNormal);
            features[[row, k]] = spec.cluster_separation * noise;
        }
        eval_mask[row] = i >= num_bg - bg_holdout;
        row += 1;
    }
    debug_assert_eq!(row, rows);

    Ok(Dataset {
        spec: *spec,
        features,
        labels: LabelBatch::new(onehot)?,
        groups: assign_groups(&counts, spec.rare_max, spec.common_max),
        counts,
        eval_mask,
    })
}

/// Integer label statistics per category.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelStats {
    /// Rows labelled with the category: `m_pos_j = n_j`.
    pub pos: Vec<u64>,
    /// Rows not labelled with it (other categories and background).
    pub neg: Vec<u64>,
    /// `pos / neg` as floating point — the label-level imbalance each
    /// category's logit experiences before any reweighting.
    pub ratio: Vec<f64>,
}

/// Counts positive and negative label occurrences per category by walking
/// the label matrix.
pub fn label_stats(dataset: &Dataset) -> LabelStats {
    let c = dataset.num_categories();
    let rows = dataset.num_rows() as u64;
    let mut pos = vec![0u64; c];
    for i in 0..dataset.num_rows() {
        if let Some(j) = dataset.row_category(i) {
            pos[j] += 1;
        }
    }
    let neg: Vec<u64> = pos.iter().map(|&p| rows - p).collect();
    let ratio = pos
        .iter()
        .zip(neg.iter())
        .map(|(&p, &n)| p as f64 / n as f64)
        .collect();
    LabelStats { pos, neg, ratio }
}
