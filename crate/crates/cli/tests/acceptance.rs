//! The acceptance gate: one test per shipping criterion, each printing a
//! single `criterion NN: PASS/FAIL — …` line (visible with
//! `cargo test -p gradbal-cli --test acceptance -- --nocapture`).
//!
//! The expensive part — training the four reference configurations over
//! five seed pairs — runs once and is shared by every criterion that
//! consumes it.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use gradbal::balance::map_ratio;
use gradbal::datagen::{generate, label_stats, LongTailSpec};
use gradbal::heads::{
    eql_v1_backward, eqlv2_backward, objectness_backward, pair_expand, sigmoid_baseline_backward,
    sigmoid_probs, softmax2c_probs, softmax_baseline_backward, HeadKind, LabelBatch, LogitBatch,
    Method, MethodConfig,
};
use gradbal::metrics::median;
use gradbal::model::{ModelConfig, ParamSet, SGDConfig};
use gradbal::train::train_run;
use gradbal::{compute_weights, GradAccumulator, MappingParams, TaskWeights};

/// Prints the verdict line for a criterion and fails the test if it did
/// not hold.
fn report(criterion: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion}: {verdict} — {detail}");
    assert!(ok, "criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------------
// Shared reference runs
// ---------------------------------------------------------------------

const SEEDS: u64 = 5;

/// What the criteria consume from one trained configuration.
struct MethodRun {
    overall: f64,
    rare: f64,
    frequent: f64,
    /// Median final accumulated ratio over the rarest third of categories.
    tercile_g: f64,
    /// Coefficient of variation of the final per-category weight norms.
    weight_cv: f64,
}

struct SeedRuns {
    baseline: MethodRun,
    eqlv2: MethodRun,
    alpha0: MethodRun,
    paired: MethodRun,
}

fn tercile_median(ratios: &[f64]) -> f64 {
    let c = ratios.len();
    median(&ratios[(2 * c) / 3..])
}

fn run_method(dataset: &gradbal::Dataset, sgd: &SGDConfig, method: &MethodConfig) -> MethodRun {
    let outcome = train_run(dataset, method, sgd, &ModelConfig::default()).expect("run trains");
    let trace = outcome.trace;
    let last_metrics = trace.epoch_metrics.last().expect("epochs recorded");
    let last_snapshot = trace.ratio_snapshots.last().expect("snapshots recorded");
    MethodRun {
        overall: last_metrics.overall,
        rare: last_metrics.rare,
        frequent: last_metrics.frequent,
        tercile_g: tercile_median(&last_snapshot.ratio),
        weight_cv: trace.final_weight_norms.cv,
    }
}

/// Trains the four compared configurations on seed pair `k`: the plain
/// sigmoid baseline, the reweighted run, its `alpha = 0` ablation, and
/// the paired-softmax head variant.
fn run_seed(k: u64) -> SeedRuns {
    let spec = LongTailSpec {
        seed: 7 + k,
        ..LongTailSpec::default()
    };
    let dataset = generate(&spec).expect("reference dataset generates");
    let sgd = SGDConfig {
        seed: 1 + k,
        ..SGDConfig::default()
    };
    let baseline = MethodConfig {
        method: Method::SigmoidBaseline,
        ..MethodConfig::default()
    };
    let eqlv2 = MethodConfig::default();
    let alpha0 = MethodConfig {
        mapping: MappingParams {
            alpha: 0.0,
            ..MappingParams::default()
        },
        ..MethodConfig::default()
    };
    let paired = MethodConfig {
        head: HeadKind::TwoCSoftmax,
        ..MethodConfig::default()
    };
    SeedRuns {
        baseline: run_method(&dataset, &sgd, &baseline),
        eqlv2: run_method(&dataset, &sgd, &eqlv2),
        alpha0: run_method(&dataset, &sgd, &alpha0),
        paired: run_method(&dataset, &sgd, &paired),
    }
}

fn reference_runs() -> &'static [SeedRuns] {
    static RUNS: OnceLock<Vec<SeedRuns>> = OnceLock::new();
    RUNS.get_or_init(|| (0..SEEDS).map(run_seed).collect())
}

// ---------------------------------------------------------------------
// Criterion 1: analytic gradients match finite differences
// ---------------------------------------------------------------------

const FD_STEP: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-6;
const FD_INSTANCES: usize = 100;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Random logits and labels: up to 8 rows, up to 6 categories, roughly a
/// third of the rows background.
fn random_instance(rng: &mut ChaCha8Rng, width_per_category: usize) -> (Array2<f64>, LabelBatch) {
    let b = rng.random_range(1..=8);
    let c = rng.random_range(1..=6);
    let normal: Normal<f64> = Normal::new(0.0, 2.0).unwrap();
    let logits = Array2::from_shape_fn((b, c * width_per_category), |_| {
        normal.sample(rng).clamp(-8.0, 8.0)
    });
    let mut onehot = Array2::zeros((b, c));
    for i in 0..b {
        if !rng.random_bool(0.3) {
            onehot[[i, rng.random_range(0..c)]] = 1.0;
        }
    }
    (logits, LabelBatch::new(onehot).unwrap())
}

/// Central finite differences on every logit coordinate against the
/// analytic batch-mean gradient. Returns the number of coordinates
/// checked.
fn fd_check(
    logits: &Array2<f64>,
    analytic: &Array2<f64>,
    loss_of: &dyn Fn(&Array2<f64>) -> f64,
    context: &str,
) -> usize {
    let mut checked = 0;
    for i in 0..logits.nrows() {
        for j in 0..logits.ncols() {
            let mut plus = logits.clone();
            plus[[i, j]] += FD_STEP;
            let mut minus = logits.clone();
            minus[[i, j]] -= FD_STEP;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * FD_STEP);
            let err = rel_err(analytic[[i, j]], numeric);
            assert!(
                err <= FD_TOLERANCE,
                "{context}: coordinate ({i}, {j}) analytic {} vs numeric {numeric} (rel err {err:.3e})",
                analytic[[i, j]],
            );
            checked += 1;
        }
    }
    checked
}

fn random_weights(rng: &mut ChaCha8Rng, c: usize) -> TaskWeights {
    TaskWeights {
        q: Array1::from_shape_fn(c, |_| rng.random_range(1.0..5.0)),
        r: Array1::from_shape_fn(c, |_| rng.random_range(0.0..1.0)),
    }
}

#[test]
fn criterion_01_analytic_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut coords = 0usize;

    for _ in 0..FD_INSTANCES {
        let (logits, labels) = random_instance(&mut rng, 1);
        let probs = |z: &Array2<f64>| sigmoid_probs(&LogitBatch::new(z.clone()).unwrap());
        let scale = 1.0 / logits.nrows() as f64;

        // Plain sigmoid baseline.
        let out = sigmoid_baseline_backward(&probs(&logits), &labels).unwrap();
        coords += fd_check(
            &logits,
            &(out.logit_grads.clone() * scale),
            &|z| sigmoid_baseline_backward(&probs(z), &labels).unwrap().loss,
            "sigmoid baseline",
        );

        // Reweighted sigmoid with arbitrary per-category weights.
        let weights = random_weights(&mut rng, labels.num_categories());
        let out = eqlv2_backward(&probs(&logits), &labels, &weights).unwrap();
        coords += fd_check(
            &logits,
            &(out.logit_grads.clone() * scale),
            &|z| eqlv2_backward(&probs(z), &labels, &weights).unwrap().loss,
            "reweighted sigmoid",
        );

        // Negative-gradient masking.
        let freqs = Array1::from_shape_fn(labels.num_categories(), |_| rng.random_range(0.0..1.0));
        let out = eql_v1_backward(&probs(&logits), &labels, &freqs, 0.5).unwrap();
        coords += fd_check(
            &logits,
            &(out.logit_grads.clone() * scale),
            &|z| {
                eql_v1_backward(&probs(z), &labels, &freqs, 0.5)
                    .unwrap()
                    .loss
            },
            "masked sigmoid",
        );
    }

    for _ in 0..FD_INSTANCES {
        // (C+1)-way softmax with a background column: widen the logits by
        // hand since width depends on C, not a multiplier.
        let (narrow, labels) = random_instance(&mut rng, 1);
        let normal: Normal<f64> = Normal::new(0.0, 2.0).unwrap();
        let extra =
            Array1::from_shape_fn(narrow.nrows(), |_| normal.sample(&mut rng).clamp(-8.0, 8.0));
        let mut logits = Array2::zeros((narrow.nrows(), narrow.ncols() + 1));
        for i in 0..narrow.nrows() {
            for j in 0..narrow.ncols() {
                logits[[i, j]] = narrow[[i, j]];
            }
            logits[[i, narrow.ncols()]] = extra[i];
        }
        let scale = 1.0 / logits.nrows() as f64;
        let out =
            softmax_baseline_backward(&LogitBatch::new(logits.clone()).unwrap(), &labels).unwrap();
        coords += fd_check(
            &logits,
            &(out.logit_grads.clone() * scale),
            &|z| {
                softmax_baseline_backward(&LogitBatch::new(z.clone()).unwrap(), &labels)
                    .unwrap()
                    .loss
            },
            "softmax baseline",
        );
    }

    for _ in 0..FD_INSTANCES {
        // Paired-softmax head: the weighted loss as a function of all 2C
        // logits, analytic gradients expanded to the pair layout.
        let (logits, labels) = random_instance(&mut rng, 2);
        let weights = random_weights(&mut rng, labels.num_categories());
        let scale = 1.0 / logits.nrows() as f64;
        let loss_of = |z: &Array2<f64>| {
            let probs = softmax2c_probs(&LogitBatch::new(z.clone()).unwrap()).unwrap();
            eqlv2_backward(&probs, &labels, &weights).unwrap().loss
        };
        let probs = softmax2c_probs(&LogitBatch::new(logits.clone()).unwrap()).unwrap();
        let out = eqlv2_backward(&probs, &labels, &weights).unwrap();
        coords += fd_check(
            &logits,
            &(pair_expand(&out.logit_grads) * scale),
            &loss_of,
            "paired softmax",
        );
    }

    for _ in 0..FD_INSTANCES {
        // Objectness: a single logit per row against the foreground flag.
        let (logits, labels) = random_instance(&mut rng, 1);
        let column: Array1<f64> = logits.column(0).to_owned();
        let scale = 1.0 / column.len() as f64;
        let (grads, _) = objectness_backward(&column, labels.is_foreground()).unwrap();
        let as_matrix = Array2::from_shape_fn((column.len(), 1), |(i, _)| grads[i] * scale);
        let matrix_logits = Array2::from_shape_fn((column.len(), 1), |(i, _)| column[i]);
        coords += fd_check(
            &matrix_logits,
            &as_matrix,
            &|z| {
                let col: Array1<f64> = z.column(0).to_owned();
                objectness_backward(&col, labels.is_foreground()).unwrap().1
            },
            "objectness",
        );
    }

    let elapsed = started.elapsed();
    let ok = elapsed.as_secs_f64() < 10.0;
    report(
        "01",
        ok,
        &format!(
            "six backward ops, {FD_INSTANCES} instances each, {coords} coordinates within \
             rel err {FD_TOLERANCE:.0e} of central differences in {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 2: mapping and weight algebra on a parameter grid
// ---------------------------------------------------------------------

#[test]
fn criterion_02_mapping_and_weight_algebra_on_grid() {
    let started = Instant::now();
    let gammas: Vec<f64> = (0..10).map(|i| 0.5 + i as f64 * 12.0 / 9.0).collect();
    let mus: Vec<f64> = (0..10).map(|i| 0.1 + i as f64 * 0.8 / 9.0).collect();
    let alphas: Vec<f64> = (0..10).map(|i| i as f64 * 8.0 / 9.0).collect();
    let gs: Vec<f64> = (0..10).map(|i| i as f64 * 2.0 / 9.0).collect();

    // One accumulator whose per-category ratios sweep the g grid, so the
    // affine identity is checked through the real weight computation.
    let mut acc = GradAccumulator::new(gs.len());
    acc.accumulate(
        &Array1::from_vec(gs.clone()),
        &Array1::from_elem(gs.len(), 1.0),
    )
    .unwrap();

    let mut points = 0usize;
    let mut worst = 0.0f64;
    for &gamma in &gammas {
        for &mu in &mus {
            for &alpha in &alphas {
                let params = MappingParams { gamma, mu, alpha };
                assert_eq!(
                    map_ratio(mu, &params),
                    0.5,
                    "f(mu) must be exactly one half (gamma {gamma}, mu {mu})"
                );
                let weights = compute_weights(&acc, &params);
                for j in 0..gs.len() {
                    let identity = weights.q[j] + alpha * weights.r[j];
                    worst = worst.max((identity - (1.0 + alpha)).abs());
                    points += 1;
                }
                let mapped: Vec<f64> = gs.iter().map(|&g| map_ratio(g, &params)).collect();
                for pair in mapped.windows(2) {
                    assert!(
                        pair[0] < pair[1],
                        "mapping must be strictly increasing (gamma {gamma}, mu {mu})"
                    );
                }
            }
        }
    }
    let elapsed = started.elapsed();
    let ok = points >= 1000 && worst <= 1e-12 && elapsed.as_secs_f64() < 1.0;
    report(
        "02",
        ok,
        &format!(
            "center exact, strictly monotone, |q + alpha*r - (1 + alpha)| <= {worst:.2e} \
             across {points} grid points in {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 3: counted label ratios without background
// ---------------------------------------------------------------------

#[test]
fn criterion_03_label_ratio_formula_by_integer_counting() {
    let started = Instant::now();
    let mut datasets = 0usize;
    let mut categories = 0usize;
    for (num_categories, total) in [(6usize, 300usize), (10, 1000), (100, 20_000)] {
        for seed in [1u64, 2] {
            let spec = LongTailSpec {
                num_categories,
                total_foreground: total,
                background_fraction: 0.0,
                seed,
                ..LongTailSpec::default()
            };
            let dataset = generate(&spec).unwrap();
            assert_eq!(dataset.num_rows(), total, "no background rows requested");
            let stats = label_stats(&dataset);
            let n = total as u64;
            for (j, &count) in dataset.counts.iter().enumerate() {
                let n_j = count as u64;
                assert_eq!(stats.pos[j], n_j, "counted positives are the category size");
                assert_eq!(stats.neg[j], n - n_j, "counted negatives are the remainder");
                // pos/neg == 1 / (N/n_j - 1) as exact rationals.
                assert_eq!(stats.pos[j] * (n - n_j), stats.neg[j] * n_j);
                categories += 1;
            }
            datasets += 1;
        }
    }
    let elapsed = started.elapsed();
    let ok = elapsed.as_secs_f64() < 1.0;
    report(
        "03",
        ok,
        &format!(
            "counted pos/neg ratios match 1/(N/n_j - 1) exactly for {categories} categories \
             across {datasets} background-free datasets in {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 4: accumulated-ratio separation on the reference runs
// ---------------------------------------------------------------------

/// Regression values for the tercile medians, pinned from the oracle runs
/// that validated the thresholds. The tolerance absorbs low-level math
/// library drift across toolchains without letting a logic change slip
/// through.
const PINNED_BASELINE_TERCILE: [f64; 5] = [
    0.286998532,
    0.306165230,
    0.315694152,
    0.306912458,
    0.294419033,
];
const PINNED_EQLV2_TERCILE: [f64; 5] = [
    0.646561353,
    0.644454892,
    0.649764600,
    0.643045814,
    0.650322661,
];
const PINNED_TOLERANCE: f64 = 0.02;

#[test]
fn criterion_04_tail_ratio_at_least_twice_the_baseline() {
    let runs = reference_runs();
    let mut detail = String::new();
    let mut ok = true;
    for (k, run) in runs.iter().enumerate() {
        let ratio = run.eqlv2.tercile_g / run.baseline.tercile_g;
        ok &= ratio >= 2.0;
        ok &= (run.baseline.tercile_g - PINNED_BASELINE_TERCILE[k]).abs() <= PINNED_TOLERANCE;
        ok &= (run.eqlv2.tercile_g - PINNED_EQLV2_TERCILE[k]).abs() <= PINNED_TOLERANCE;
        let _ = write!(
            detail,
            "{}seed {k}: {:.9}/{:.9} = {ratio:.2}x",
            if k == 0 { "" } else { "; " },
            run.eqlv2.tercile_g,
            run.baseline.tercile_g,
        );
    }
    report(
        "04",
        ok,
        &format!("rarest-tercile median ratio >= 2x on every seed ({detail})"),
    );
}

// ---------------------------------------------------------------------
// Criterion 5: rare accuracy gain without a frequent collapse
// ---------------------------------------------------------------------

#[test]
fn criterion_05_rare_gain_with_frequent_guard() {
    let runs = reference_runs();
    let mean = |f: &dyn Fn(&SeedRuns) -> f64| -> f64 {
        runs.iter().map(f).sum::<f64>() / runs.len() as f64
    };
    let rare_gain = mean(&|r| r.eqlv2.rare - r.baseline.rare);
    let frequent_drop = mean(&|r| r.baseline.frequent - r.eqlv2.frequent);
    let ok = rare_gain >= 0.10 && frequent_drop <= 0.02;
    report(
        "05",
        ok,
        &format!(
            "rare-group accuracy gain {:.1} points (>= 10), frequent-group change {:+.1} \
             points (drop <= 2), means over {} seeds",
            rare_gain * 100.0,
            -frequent_drop * 100.0,
            runs.len()
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 6: weight-norm balance on every seed
// ---------------------------------------------------------------------

#[test]
fn criterion_06_weight_norm_cv_strictly_lower_every_seed() {
    let runs = reference_runs();
    let mut detail = String::new();
    let mut ok = true;
    for (k, run) in runs.iter().enumerate() {
        ok &= run.eqlv2.weight_cv < run.baseline.weight_cv;
        let _ = write!(
            detail,
            "{}seed {k}: {:.3} < {:.3}",
            if k == 0 { "" } else { "; " },
            run.eqlv2.weight_cv,
            run.baseline.weight_cv,
        );
    }
    report(
        "06",
        ok,
        &format!("weight-norm coefficient of variation lower on every seed ({detail})"),
    );
}

// ---------------------------------------------------------------------
// Criterion 7: the paired-softmax head is the same game
// ---------------------------------------------------------------------

#[test]
fn criterion_07_paired_softmax_identity_and_end_to_end_parity() {
    // Identity: softmax over (z, 0) equals sigmoid(z) across a dense grid.
    let points = 10_000usize;
    let zs: Vec<f64> = (0..points)
        .map(|i| -30.0 + 60.0 * i as f64 / (points - 1) as f64)
        .collect();
    let paired = Array2::from_shape_fn((points, 2), |(i, j)| if j == 0 { zs[i] } else { 0.0 });
    let single = Array2::from_shape_fn((points, 1), |(i, _)| zs[i]);
    let via_pair = softmax2c_probs(&LogitBatch::new(paired).unwrap()).unwrap();
    let via_sigmoid = sigmoid_probs(&LogitBatch::new(single).unwrap());
    let mut worst = 0.0f64;
    for i in 0..points {
        worst = worst.max((via_pair[[i, 0]] - via_sigmoid[[i, 0]]).abs());
    }

    // End to end: the paired-head run lands within one point overall.
    let runs = reference_runs();
    let gaps: Vec<f64> = runs
        .iter()
        .map(|r| (r.paired.overall - r.eqlv2.overall).abs())
        .collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let gap_list = gaps
        .iter()
        .map(|g| format!("{:.1}", g * 100.0))
        .collect::<Vec<_>>()
        .join("/");
    let ok = worst <= 1e-12 && mean_gap <= 0.01;
    report(
        "07",
        ok,
        &format!(
            "pair probabilities match sigmoid within {worst:.1e} on {points} logits; \
             overall-accuracy gap {:.2} points mean (per seed {gap_list})",
            mean_gap * 100.0
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: unit weights degenerate to the baseline, bit for bit
// ---------------------------------------------------------------------

fn max_param_diff(a: &ParamSet, b: &ParamSet) -> f64 {
    let mut worst = 0.0f64;
    let mut scan = |x: &[f64], y: &[f64]| {
        for (u, v) in x.iter().zip(y) {
            worst = worst.max((u - v).abs());
        }
    };
    match (&a.hidden_weight, &b.hidden_weight) {
        (Some(x), Some(y)) => scan(x.as_slice().unwrap(), y.as_slice().unwrap()),
        (None, None) => {}
        _ => panic!("models disagree on having a hidden layer"),
    }
    if let (Some(x), Some(y)) = (&a.hidden_bias, &b.hidden_bias) {
        scan(x.as_slice().unwrap(), y.as_slice().unwrap());
    }
    scan(
        a.cls_weight.as_slice().unwrap(),
        b.cls_weight.as_slice().unwrap(),
    );
    scan(
        a.cls_bias.as_slice().unwrap(),
        b.cls_bias.as_slice().unwrap(),
    );
    worst
}

#[test]
fn criterion_08_unit_weights_match_baseline_bit_for_bit() {
    let spec = LongTailSpec::default();
    let dataset = generate(&spec).unwrap();
    let sgd = SGDConfig {
        epochs: 1,
        schedule: Some(vec![]),
        ..SGDConfig::default()
    };
    let iterations = dataset.train_indices().len().div_ceil(sgd.batch_size);
    assert!(
        iterations >= 200,
        "need at least 200 iterations, got {iterations}"
    );

    let baseline = MethodConfig {
        method: Method::SigmoidBaseline,
        use_objectness: false,
        ..MethodConfig::default()
    };
    let pinned = MethodConfig {
        force_unit_weights: true,
        use_objectness: false,
        ..MethodConfig::default()
    };
    let base_run = train_run(&dataset, &baseline, &sgd, &ModelConfig::default()).unwrap();
    let pinned_run = train_run(&dataset, &pinned, &sgd, &ModelConfig::default()).unwrap();
    let drift = max_param_diff(&base_run.model.params, &pinned_run.model.params);
    let ok = drift <= 1e-12;
    report(
        "08",
        ok,
        &format!(
            "parameter drift {drift:.1e} after {iterations} iterations with q = r = 1 \
             and objectness off (<= 1e-12)"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 9: identical seeds, identical bytes, through the binary
// ---------------------------------------------------------------------

#[test]
fn criterion_09_repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("experiment.toml");
    std::fs::write(
        &config_path,
        "repeats = 1\n\
         [dataset]\n\
         num_categories = 20\n\
         total_foreground = 2000\n\
         feature_dim = 16\n\
         seed = 3\n\
         [model]\n\
         hidden_width = 32\n\
         [sgd]\n\
         epochs = 4\n\
         batch_size = 32\n",
    )
    .unwrap();

    let run = |dir: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_gradbal"))
            .arg("run")
            .arg("--config")
            .arg(&config_path)
            .arg("--output-dir")
            .arg(dir)
            .status()
            .expect("binary spawns");
        assert!(status.success(), "run failed");
    };
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    run(&first);
    run(&second);

    let mut compared = Vec::new();
    let mut ok = true;
    for name in [
        "config.toml",
        "ratios.csv",
        "metrics.csv",
        "weight_norms.csv",
    ] {
        let a = std::fs::read(first.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        ok &= a == b;
        compared.push(name);
    }
    report(
        "09",
        ok,
        &format!(
            "two seeded runs of the binary produced byte-identical {}",
            compared.join(", ")
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 10: amplification is what rescues the tail
// ---------------------------------------------------------------------

#[test]
fn criterion_10_alpha_amplification_beats_alpha_zero_every_seed() {
    let runs = reference_runs();
    let mut detail = String::new();
    let mut ok = true;
    for (k, run) in runs.iter().enumerate() {
        ok &= run.eqlv2.rare > run.alpha0.rare;
        let _ = write!(
            detail,
            "{}seed {k}: {:.3} > {:.3}",
            if k == 0 { "" } else { "; " },
            run.eqlv2.rare,
            run.alpha0.rare,
        );
    }
    report(
        "10",
        ok,
        &format!("rare-group accuracy at alpha 4 beats alpha 0 on every seed ({detail})"),
    );
}
