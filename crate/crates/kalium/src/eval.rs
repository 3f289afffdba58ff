//! Cross-validation harness, regression error metrics, and three-class
//! classification metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anfis::{predict, train, TrainConfig, TrainHistory, Variant};
use crate::error::{Error, Result};
use crate::fuzzy::TskModel;
use crate::pipeline::{Label, HYPER_BOUND_MM, HYPO_BOUND_MM};
use crate::stats::pearson_r;

/// Fold index per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// `folds[i]` is the fold (0..k) holding sample `i` as test data.
    pub folds: Vec<usize>,
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    /// Classes too small to appear in every fold.
    pub warnings: Vec<String>,
}

/// Seeded k-fold split. Stratified assignment shuffles each class and deals
/// it round-robin, carrying the fold cursor across classes so overall fold
/// sizes stay within one of each other too.
pub fn kfold(labels: &[Label], k: usize, seed: u64, stratified: bool) -> Result<FoldAssignment> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("k-fold needs n >= k, got n = {n}, k = {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0usize; n];
    let mut warnings = Vec::new();
    if stratified {
        let mut cursor = 0usize;
        for label in Label::ALL {
            let mut idx: Vec<usize> = (0..n).filter(|&i| labels[i] == label).collect();
            if idx.is_empty() {
                continue;
            }
            if idx.len() < k {
                warnings.push(format!(
                    "class {label} has {} samples for {k} folds; some folds will lack it",
                    idx.len()
                ));
            }
            idx.shuffle(&mut rng);
            for i in idx {
                folds[i] = cursor % k;
                cursor += 1;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    Ok(FoldAssignment {
        folds,
        k,
        seed,
        stratified,
        warnings,
    })
}

/// Mean absolute percentage error: `(100/n) * sum |(est - y) / y|`.
pub fn mape(y: &[f64], estimates: &[f64]) -> Result<f64> {
    if y.is_empty() || y.len() != estimates.len() {
        return Err(Error::invalid("mape needs equal-length, non-empty inputs"));
    }
    let mut total = 0.0;
    for (&yi, &ei) in y.iter().zip(estimates) {
        if !yi.is_finite() || !ei.is_finite() {
            return Err(Error::invalid("mape inputs must be finite"));
        }
        if yi == 0.0 {
            return Err(Error::invalid("mape undefined: a reference value is 0"));
        }
        total += ((ei - yi) / yi).abs();
    }
    Ok(total / y.len() as f64 * 100.0)
}

/// Signed and absolute error summaries (mM). Standard deviations use the
/// sample (n-1) convention and are missing for n < 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub error_mean: f64,
    pub error_sd: Option<f64>,
    pub abs_error_mean: f64,
    pub abs_error_sd: Option<f64>,
}

fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, Some((ss / (n - 1.0)).sqrt()))
}

/// Error statistics of estimates against reference values (error = est - y).
pub fn error_stats(y: &[f64], estimates: &[f64]) -> Result<ErrorStats> {
    if y.is_empty() || y.len() != estimates.len() {
        return Err(Error::invalid("error stats need equal-length, non-empty inputs"));
    }
    let errors: Vec<f64> = estimates.iter().zip(y).map(|(e, y)| e - y).collect();
    if errors.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("error stats inputs must be finite"));
    }
    let abs_errors: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let (error_mean, error_sd) = mean_sd(&errors);
    let (abs_error_mean, abs_error_sd) = mean_sd(&abs_errors);
    Ok(ErrorStats {
        n: y.len(),
        error_mean,
        error_sd,
        abs_error_mean,
        abs_error_sd,
    })
}

/// Class of an estimated potassium value, using the same thresholds as
/// `label_potassium`. Estimates are model outputs, so any finite value is
/// accepted (a negative estimate is simply far into the Hypo range).
pub fn classify_estimate(estimate_mm: f64) -> Result<Label> {
    if !estimate_mm.is_finite() {
        return Err(Error::invalid(format!("estimate must be finite, got {estimate_mm}")));
    }
    Ok(if estimate_mm < HYPO_BOUND_MM {
        Label::Hypo
    } else if estimate_mm <= HYPER_BOUND_MM {
        Label::Normal
    } else {
        Label::Hyper
    })
}

/// One-vs-rest metrics for a single class; missing when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: Label,
    /// TP / (TP + FN); missing if the class never occurs in `actual`.
    pub sensitivity: Option<f64>,
    /// TN / (TN + FP); missing if every sample is of this class.
    pub specificity: Option<f64>,
}

/// 3x3 confusion matrix (rows = actual, columns = predicted, order
/// Hypo/Normal/Hyper) and the derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub matrix: [[usize; 3]; 3],
    pub total: usize,
    /// Trace / total.
    pub accuracy: f64,
    pub per_class: [ClassMetrics; 3],
}

impl ConfusionMetrics {
    /// CSV rendering: rows are actual classes, columns predicted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("actual\\predicted,hypo,normal,hyper\n");
        for (label, row) in Label::ALL.iter().zip(&self.matrix) {
            out.push_str(&format!("{label},{},{},{}\n", row[0], row[1], row[2]));
        }
        out
    }
}

/// Build the confusion matrix and one-vs-rest sensitivity/specificity for
/// the three classes, plus overall accuracy.
pub fn confusion_and_metrics(actual: &[Label], predicted: &[Label]) -> Result<ConfusionMetrics> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::invalid(
            "confusion metrics need equal-length, non-empty label lists",
        ));
    }
    let mut matrix = [[0usize; 3]; 3];
    for (a, p) in actual.iter().zip(predicted) {
        matrix[a.index()][p.index()] += 1;
    }
    let total = actual.len();
    let trace: usize = (0..3).map(|i| matrix[i][i]).sum();
    let per_class = std::array::from_fn(|c| {
        let tp = matrix[c][c];
        let row_sum: usize = matrix[c].iter().sum();
        let col_sum: usize = (0..3).map(|r| matrix[r][c]).sum();
        let fp = col_sum - tp;
        let rest = total - row_sum; // TN + FP
        ClassMetrics {
            label: Label::ALL[c],
            sensitivity: (row_sum > 0).then(|| tp as f64 / row_sum as f64),
            specificity: (rest > 0).then(|| (rest - fp) as f64 / rest as f64),
        }
    });
    Ok(ConfusionMetrics {
        matrix,
        total,
        accuracy: trace as f64 / total as f64,
        per_class,
    })
}

/// Cross-validation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    /// Fold count (default 10).
    pub k: usize,
    pub seed: u64,
    /// Stratify folds by class (default true).
    pub stratified: bool,
    pub train: TrainConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            seed: 0,
            stratified: true,
            train: TrainConfig::default(),
        }
    }
}

/// Regression metrics for one fold's held-out samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub error: ErrorStats,
    pub mape: f64,
    /// Pearson correlation of estimates vs actual; missing when undefined
    /// (single sample or zero variance).
    pub r: Option<f64>,
    /// Last training RMSE recorded by the fold's model.
    pub final_train_rmse: f64,
}

/// Full cross-validation report: per-fold and pooled out-of-fold metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub n: usize,
    pub input_names: Vec<String>,
    pub fold_warnings: Vec<String>,
    pub per_fold: Vec<FoldMetrics>,
    pub pooled_error: ErrorStats,
    pub pooled_mape: f64,
    pub pooled_r: Option<f64>,
    pub confusion: ConfusionMetrics,
}

fn fmt_opt(v: Option<f64>, scale: f64, suffix: &str) -> String {
    match v {
        Some(v) => format!("{:.4}{suffix}", v * scale),
        None => "n/a".to_string(),
    }
}

impl EvalReport {
    /// Plain-text rendering of the pooled metrics and confusion matrix.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "variant: {} | folds: {} | seed: {} | stratified: {} | n: {}\n",
            self.variant, self.k, self.seed, self.stratified, self.n
        ));
        let e = &self.pooled_error;
        out.push_str(&format!(
            "pooled error: {:.4} mM (sd {}) | abs error: {:.4} mM (sd {})\n",
            e.error_mean,
            fmt_opt(e.error_sd, 1.0, ""),
            e.abs_error_mean,
            fmt_opt(e.abs_error_sd, 1.0, ""),
        ));
        out.push_str(&format!(
            "pooled MAPE: {:.4}% | pooled r: {}\n",
            self.pooled_mape,
            fmt_opt(self.pooled_r, 1.0, ""),
        ));
        out.push_str(&format!(
            "accuracy: {:.2}% ({}/{})\n",
            self.confusion.accuracy * 100.0,
            (0..3).map(|i| self.confusion.matrix[i][i]).sum::<usize>(),
            self.confusion.total
        ));
        out.push_str("class   sensitivity  specificity\n");
        for c in &self.confusion.per_class {
            out.push_str(&format!(
                "{:<7} {:<12} {}\n",
                c.label.to_string(),
                fmt_opt(c.sensitivity, 100.0, "%"),
                fmt_opt(c.specificity, 100.0, "%"),
            ));
        }
        out.push_str("confusion matrix (rows actual, columns predicted; hypo/normal/hyper):\n");
        for row in &self.confusion.matrix {
            out.push_str(&format!("  {:>3} {:>3} {:>3}\n", row[0], row[1], row[2]));
        }
        out
    }
}

/// Everything produced by one cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub report: EvalReport,
    /// One trained model per fold, in fold order.
    pub models: Vec<TskModel>,
    /// Per-fold training history (validation column = that fold's test set).
    pub histories: Vec<TrainHistory>,
    /// Out-of-fold estimate per input sample, in input order.
    pub predictions: Vec<f64>,
    /// Fold that held each sample out, in input order.
    pub fold_of: Vec<usize>,
}

/// Run seeded k-fold cross-validation: train one model per fold on the
/// remaining samples, evaluate it on the held-out fold, and pool the
/// out-of-fold estimates into a single report. Targets are potassium values;
/// classes are derived from them.
pub fn cross_validate(
    input_names: &[String],
    x: &[Vec<f64>],
    y: &[f64],
    config: &CvConfig,
) -> Result<CvOutcome> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::invalid(format!("{n} inputs for {} targets", y.len())));
    }
    let labels = y
        .iter()
        .map(|&k| crate::pipeline::label_potassium(k))
        .collect::<Result<Vec<_>>>()?;
    let assignment = kfold(&labels, config.k, config.seed, config.stratified)?;

    let mut models = Vec::with_capacity(config.k);
    let mut histories = Vec::with_capacity(config.k);
    let mut per_fold = Vec::with_capacity(config.k);
    let mut predictions = vec![f64::NAN; n];

    for fold in 0..config.k {
        let train_idx: Vec<usize> = (0..n).filter(|&i| assignment.folds[i] != fold).collect();
        let test_idx: Vec<usize> = (0..n).filter(|&i| assignment.folds[i] == fold).collect();
        let tx: Vec<Vec<f64>> = train_idx.iter().map(|&i| x[i].clone()).collect();
        let ty: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let vx: Vec<Vec<f64>> = test_idx.iter().map(|&i| x[i].clone()).collect();
        let vy: Vec<f64> = test_idx.iter().map(|&i| y[i]).collect();

        let wrap = |e: Error| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let out = train(input_names, &tx, &ty, &config.train, Some((&vx, &vy))).map_err(wrap)?;
        let estimates: Vec<f64> = predict(&out.model, &vx)
            .map_err(wrap)?
            .into_iter()
            .map(|o| o.estimate)
            .collect();
        for (&i, &est) in test_idx.iter().zip(&estimates) {
            predictions[i] = est;
        }
        per_fold.push(FoldMetrics {
            fold,
            n_test: test_idx.len(),
            error: error_stats(&vy, &estimates)?,
            mape: mape(&vy, &estimates)?,
            r: pearson_r(&estimates, &vy).ok(),
            final_train_rmse: *out
                .history
                .train_rmse
                .last()
                .expect("training always records at least one epoch"),
        });
        models.push(out.model);
        histories.push(out.history);
    }

    let predicted_labels = predictions
        .iter()
        .map(|&e| classify_estimate(e))
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport {
        variant: config.train.variant,
        k: config.k,
        seed: config.seed,
        stratified: config.stratified,
        n,
        input_names: input_names.to_vec(),
        fold_warnings: assignment.warnings.clone(),
        per_fold,
        pooled_error: error_stats(y, &predictions)?,
        pooled_mape: mape(y, &predictions)?,
        pooled_r: pearson_r(&predictions, y).ok(),
        confusion: confusion_and_metrics(&labels, &predicted_labels)?,
    };
    Ok(CvOutcome {
        report,
        models,
        histories,
        predictions,
        fold_of: assignment.folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{generate_synthetic, join_cohort, label_potassium};
    use approx::assert_relative_eq;

    fn labels_10_27_5() -> Vec<Label> {
        let mut labels = vec![Label::Hypo; 10];
        labels.extend(vec![Label::Normal; 27]);
        labels.extend(vec![Label::Hyper; 5]);
        labels
    }

    #[test]
    fn kfold_42_by_10_gives_two_fives_and_eight_fours() {
        let assignment = kfold(&labels_10_27_5(), 10, 0, true).unwrap();
        let mut sizes = vec![0usize; 10];
        for &f in &assignment.folds {
            sizes[f] += 1;
        }
        let mut sorted = sizes.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![4, 4, 4, 4, 4, 4, 4, 4, 5, 5], "fold sizes {sizes:?}");

        // per-class spread at most 1
        let labels = labels_10_27_5();
        for label in Label::ALL {
            let mut counts = vec![0usize; 10];
            for (i, &f) in assignment.folds.iter().enumerate() {
                if labels[i] == label {
                    counts[f] += 1;
                }
            }
            let max = counts.iter().max().unwrap();
            let min = counts.iter().min().unwrap();
            assert!(max - min <= 1, "class {label} fold counts {counts:?}");
        }
        // the 5-sample class cannot reach all 10 folds
        assert!(!assignment.warnings.is_empty());
    }

    #[test]
    fn leave_one_out_folds_each_hold_one_sample() {
        let labels = vec![Label::Normal; 12];
        let assignment = kfold(&labels, 12, 3, true).unwrap();
        let mut sizes = vec![0usize; 12];
        for &f in &assignment.folds {
            sizes[f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn kfold_is_deterministic_per_seed() {
        let labels = labels_10_27_5();
        let a = kfold(&labels, 10, 5, true).unwrap();
        let b = kfold(&labels, 10, 5, true).unwrap();
        assert_eq!(a, b);
        let c = kfold(&labels, 10, 6, true).unwrap();
        assert_ne!(a.folds, c.folds);
    }

    #[test]
    fn unstratified_folds_are_still_balanced() {
        let assignment = kfold(&labels_10_27_5(), 10, 1, false).unwrap();
        let mut sizes = vec![0usize; 10];
        for &f in &assignment.folds {
            sizes[f] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 4 || s == 5), "{sizes:?}");
    }

    #[test]
    fn kfold_rejects_bad_shapes() {
        assert!(kfold(&vec![Label::Normal; 5], 10, 0, true).is_err());
        assert!(kfold(&vec![Label::Normal; 5], 1, 0, true).is_err());
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[4.0, 5.0], &[4.0, 5.0]).unwrap(), 0.0);
        assert_relative_eq!(
            mape(&[4.0, 5.0], &[4.4, 4.5]).unwrap(),
            10.0,
            epsilon = 1e-12
        );
        assert!(mape(&[4.0, 0.0], &[4.0, 1.0]).is_err());
        assert!(mape(&[], &[]).is_err());
    }

    #[test]
    fn mape_matches_brute_force_on_many_pairs() {
        let mut y = Vec::new();
        let mut est = Vec::new();
        for i in 0..1000 {
            let t = i as f64;
            y.push(3.0 + (t * 0.37).sin().abs() + 0.5);
            est.push(3.2 + (t * 0.53).cos());
        }
        let brute: f64 = y
            .iter()
            .zip(&est)
            .map(|(yi, ei)| ((ei - yi) / yi).abs())
            .sum::<f64>()
            / y.len() as f64
            * 100.0;
        assert_relative_eq!(mape(&y, &est).unwrap(), brute, max_relative = 1e-12);
    }

    #[test]
    fn error_stats_two_point_example() {
        let stats = error_stats(&[4.0, 4.0], &[3.5, 4.5]).unwrap();
        assert_relative_eq!(stats.error_mean, 0.0, epsilon = 1e-15);
        assert_relative_eq!(stats.error_sd.unwrap(), 0.5_f64.powi(2).mul_add(2.0, 0.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(stats.error_sd.unwrap(), 0.7071067811865476, epsilon = 1e-12);
        assert_relative_eq!(stats.abs_error_mean, 0.5, epsilon = 1e-15);
        assert_relative_eq!(stats.abs_error_sd.unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn error_stats_exact_and_single_sample() {
        let exact = error_stats(&[4.0, 5.0], &[4.0, 5.0]).unwrap();
        assert_eq!(exact.error_mean, 0.0);
        assert_eq!(exact.abs_error_mean, 0.0);
        assert_eq!(exact.error_sd.unwrap(), 0.0);
        let single = error_stats(&[4.0], &[4.3]).unwrap();
        assert!(single.error_sd.is_none());
        assert!(single.abs_error_sd.is_none());
        assert_relative_eq!(single.error_mean, 0.3, epsilon = 1e-12);
    }

    #[test]
    fn classify_estimate_matches_label_thresholds() {
        assert_eq!(classify_estimate(3.5).unwrap(), Label::Normal);
        assert_eq!(classify_estimate(5.0).unwrap(), Label::Normal);
        assert_eq!(classify_estimate(5.000001).unwrap(), Label::Hyper);
        assert_eq!(classify_estimate(3.499).unwrap(), Label::Hypo);
        // estimates may undershoot zero; they stay Hypo
        assert_eq!(classify_estimate(-0.5).unwrap(), Label::Hypo);
        assert!(classify_estimate(f64::NAN).is_err());

        for i in 0..10_000 {
            let k = 0.01 + i as f64 * 1e-3;
            assert_eq!(
                classify_estimate(k).unwrap(),
                label_potassium(k).unwrap(),
                "disagreement at {k}"
            );
        }
    }

    /// The unique matrix consistent with the published pooled metrics:
    /// diagonal 6/26/4 over actual counts 10/27/5.
    #[test]
    fn derived_confusion_matrix_reproduces_published_metrics() {
        let mut actual = Vec::new();
        let mut predicted = Vec::new();
        let matrix = [[6, 4, 0], [0, 26, 1], [0, 1, 4]];
        for (a, row) in Label::ALL.iter().enumerate() {
            for (p, &count) in matrix[a].iter().enumerate() {
                for _ in 0..count {
                    actual.push(*row);
                    predicted.push(Label::ALL[p]);
                }
            }
        }
        let m = confusion_and_metrics(&actual, &predicted).unwrap();
        assert_eq!(m.matrix, matrix);
        assert_eq!(m.total, 42);
        assert_relative_eq!(m.accuracy, 36.0 / 42.0, epsilon = 1e-12);
        assert!((m.accuracy * 100.0 - 85.71).abs() < 0.01);
        assert_relative_eq!(m.per_class[0].sensitivity.unwrap(), 0.6, epsilon = 1e-12);
        assert_relative_eq!(m.per_class[2].sensitivity.unwrap(), 0.8, epsilon = 1e-12);
        assert_relative_eq!(m.per_class[0].specificity.unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(m.per_class[2].specificity.unwrap(), 36.0 / 37.0, epsilon = 1e-12);
        assert!((m.per_class[2].specificity.unwrap() * 100.0 - 97.30).abs() < 0.03);
    }

    #[test]
    fn degenerate_all_normal_predictor() {
        let actual = labels_10_27_5();
        let predicted = vec![Label::Normal; 42];
        let m = confusion_and_metrics(&actual, &predicted).unwrap();
        assert_relative_eq!(m.accuracy, 27.0 / 42.0, epsilon = 1e-12);
        assert!((m.accuracy * 100.0 - 64.29).abs() < 0.01);
        assert_eq!(m.per_class[0].sensitivity, Some(0.0));
        assert_eq!(m.per_class[2].sensitivity, Some(0.0));
        assert_eq!(m.per_class[0].specificity, Some(1.0));
        assert_eq!(m.per_class[2].specificity, Some(1.0));
    }

    #[test]
    fn perfect_prediction_metrics() {
        let actual = labels_10_27_5();
        let m = confusion_and_metrics(&actual, &actual).unwrap();
        assert_eq!(m.accuracy, 1.0);
        for c in &m.per_class {
            assert_eq!(c.sensitivity, Some(1.0));
            assert_eq!(c.specificity, Some(1.0));
        }
    }

    #[test]
    fn absent_class_metrics_are_missing_not_zero() {
        let actual = vec![Label::Normal; 6];
        let predicted = vec![
            Label::Normal,
            Label::Normal,
            Label::Hyper,
            Label::Normal,
            Label::Normal,
            Label::Normal,
        ];
        let m = confusion_and_metrics(&actual, &predicted).unwrap();
        assert_eq!(m.per_class[0].sensitivity, None);
        assert_eq!(m.per_class[2].sensitivity, None);
        // every sample is Normal, so Normal has no negatives
        assert_eq!(m.per_class[1].specificity, None);
        assert!(m.per_class[1].sensitivity.is_some());
    }

    #[test]
    fn confusion_row_and_column_sums_match_counts() {
        let actual = labels_10_27_5();
        // rotate every label one class up: Hypo->Normal->Hyper->Hypo
        let predicted: Vec<Label> = actual
            .iter()
            .map(|l| Label::ALL[(l.index() + 1) % 3])
            .collect();
        let m = confusion_and_metrics(&actual, &predicted).unwrap();
        let row_sums: Vec<usize> = m.matrix.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(row_sums, vec![10, 27, 5]);
        let col_sums: Vec<usize> = (0..3).map(|c| (0..3).map(|r| m.matrix[r][c]).sum()).collect();
        assert_eq!(col_sums, vec![5, 10, 27]);
        let cells: usize = m.matrix.iter().flatten().sum();
        assert_eq!(cells, 42);
        assert_eq!(m.accuracy, 0.0);
    }

    #[test]
    fn confusion_csv_shape() {
        let m = confusion_and_metrics(&labels_10_27_5(), &labels_10_27_5()).unwrap();
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("hypo,10,0,0"));
        assert!(lines[3].starts_with("hyper,0,0,5"));
    }

    fn synthetic_xy() -> (Vec<Vec<f64>>, Vec<f64>) {
        let (ecgs, labs) = generate_synthetic(42, 12.0, 4).unwrap();
        let cohort = join_cohort(&ecgs, &labs, 300).unwrap();
        let x: Vec<Vec<f64>> = cohort
            .iter()
            .map(|s| vec![s.feature("t_axis_deg").unwrap()])
            .collect();
        let y: Vec<f64> = cohort.iter().map(|s| s.potassium_mm).collect();
        (x, y)
    }

    #[test]
    fn cross_validation_pools_every_sample_once() {
        let (x, y) = synthetic_xy();
        let config = CvConfig {
            train: TrainConfig {
                epochs: 8,
                phase_split: 4,
                variant: Variant::FcmAnfis,
                ..TrainConfig::default()
            },
            ..CvConfig::default()
        };
        let names = vec!["t_axis_deg".to_string()];
        let outcome = cross_validate(&names, &x, &y, &config).unwrap();
        let report = &outcome.report;

        assert_eq!(report.per_fold.len(), 10);
        assert_eq!(outcome.models.len(), 10);
        assert_eq!(outcome.predictions.len(), 42);
        assert!(outcome.predictions.iter().all(|p| p.is_finite()));
        assert_eq!(report.confusion.total, 42);
        let trace: usize = (0..3).map(|i| report.confusion.matrix[i][i]).sum();
        assert_relative_eq!(report.confusion.accuracy, trace as f64 / 42.0, epsilon = 1e-15);
        let covered: usize = report.per_fold.iter().map(|f| f.n_test).sum();
        assert_eq!(covered, 42);

        // pooled metrics equal metrics over the concatenated per-fold slices
        let mut concat_y = Vec::new();
        let mut concat_est = Vec::new();
        for fold in 0..10 {
            for i in 0..42 {
                if outcome.fold_of[i] == fold {
                    concat_y.push(y[i]);
                    concat_est.push(outcome.predictions[i]);
                }
            }
        }
        assert_relative_eq!(
            report.pooled_mape,
            mape(&concat_y, &concat_est).unwrap(),
            max_relative = 1e-12
        );

        // every fold's history tracked its validation split
        for (fold, history) in outcome.histories.iter().enumerate() {
            let val = history.val_rmse.as_ref().unwrap();
            assert_eq!(val.len(), 8, "fold {fold}");
        }
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let (x, y) = synthetic_xy();
        let config = CvConfig {
            train: TrainConfig {
                epochs: 6,
                phase_split: 3,
                variant: Variant::FcmAnfis,
                ..TrainConfig::default()
            },
            ..CvConfig::default()
        };
        let names = vec!["t_axis_deg".to_string()];
        let a = cross_validate(&names, &x, &y, &config).unwrap();
        let b = cross_validate(&names, &x, &y, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a.report).unwrap(),
            serde_json::to_string(&b.report).unwrap()
        );
    }

    #[test]
    fn report_renders_text_and_is_json_serializable() {
        let (x, y) = synthetic_xy();
        let config = CvConfig {
            train: TrainConfig {
                epochs: 4,
                mfs_per_dim: 3,
                variant: Variant::Conventional,
                ..TrainConfig::default()
            },
            ..CvConfig::default()
        };
        let names = vec!["t_axis_deg".to_string()];
        let outcome = cross_validate(&names, &x, &y, &config).unwrap();
        let text = outcome.report.render_text();
        assert!(text.contains("accuracy:"));
        assert!(text.contains("pooled MAPE:"));
        let json = serde_json::to_string_pretty(&outcome.report).unwrap();
        let parsed: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, outcome.report);
    }
}
