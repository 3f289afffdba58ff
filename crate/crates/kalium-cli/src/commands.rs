//! Subcommand implementations. Each command reads its inputs, writes all
//! artifacts plus a manifest under the output directory, and prints a short
//! summary to stdout; warnings go to stderr.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use kalium::anfis::Variant;
use kalium::eval::{classify_estimate, cross_validate, CvOutcome, EvalReport};
use kalium::fuzzy::TskModel;
use kalium::pipeline::{
    class_counts, join_cohort, read_ecg_csv, read_labs_csv, select_features, write_cohort_csv,
    CohortDocument, CohortSample, Label,
};
use kalium::stats::{boxplot_stats, BoxStats};
use kalium::{Error, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::Manifest;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::invalid(format!("output is not serializable: {e}")))?;
    write_text(path, &(text + "\n"))
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

fn print_warnings(warnings: &[String]) {
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
}

/// Read both CSVs and join them into the labeled cohort.
fn load_cohort(config: &RunConfig) -> Result<Vec<CohortSample>> {
    let (ecgs, ecg_warnings) = read_ecg_csv(config.ecg_path()?)?;
    print_warnings(&ecg_warnings);
    let (labs, lab_warnings) = read_labs_csv(config.labs_path()?)?;
    print_warnings(&lab_warnings);
    join_cohort(&ecgs, &labs, config.window_s)
}

fn cohort_summary(samples: &[CohortSample]) -> String {
    let [hypo, normal, hyper] = class_counts(samples);
    format!(
        "{} samples: {hypo} hypo / {normal} normal / {hyper} hyper",
        samples.len()
    )
}

/// Join ECG features to potassium labs; write the labeled cohort and print
/// its class counts.
pub fn cmd_cohort(config: &RunConfig) -> Result<()> {
    let samples = load_cohort(config)?;
    ensure_out_dir(&config.out_dir)?;
    write_cohort_csv(&config.out_dir.join("cohort.csv"), &samples)?;
    write_json(
        &config.out_dir.join("cohort.json"),
        &CohortDocument::new(&samples),
    )?;
    let mut manifest = Manifest::new("cohort", config)?;
    manifest.add_input("ecg", config.ecg_path()?)?;
    manifest.add_input("labs", config.labs_path()?)?;
    manifest.write(&config.out_dir)?;
    println!("{}", cohort_summary(&samples));
    Ok(())
}

/// Per-class distribution summary of one feature, for box plotting.
#[derive(Debug, Serialize)]
struct BoxplotGroup {
    label: Label,
    n: usize,
    /// Missing when the class has no samples.
    stats: Option<BoxStats>,
}

/// Plot-ready distribution data for one significant feature.
#[derive(Debug, Serialize)]
struct FeatureBoxplots {
    feature: String,
    /// Always one group per class, in hypo/normal/hyper order.
    groups: Vec<BoxplotGroup>,
}

/// Rank features across the classes; write the report and per-class
/// distribution data for every significant feature.
pub fn cmd_features(config: &RunConfig) -> Result<()> {
    let samples = load_cohort(config)?;
    let report = select_features(&samples, config.alpha)?;
    print_warnings(&report.warnings);

    let mut boxplots = Vec::new();
    for row in report.rows.iter().filter(|r| r.significant) {
        let groups = Label::ALL
            .iter()
            .map(|&label| {
                let values: Vec<f64> = samples
                    .iter()
                    .filter(|s| s.label == label)
                    .map(|s| s.feature(&row.name).expect("report rows use known names"))
                    .collect();
                BoxplotGroup {
                    label,
                    n: values.len(),
                    stats: boxplot_stats(&values).ok(),
                }
            })
            .collect();
        boxplots.push(FeatureBoxplots {
            feature: row.name.clone(),
            groups,
        });
    }

    ensure_out_dir(&config.out_dir)?;
    write_json(&config.out_dir.join("feature_report.json"), &report)?;
    write_json(&config.out_dir.join("boxplots.json"), &boxplots)?;
    let mut manifest = Manifest::new("features", config)?;
    manifest.add_input("ecg", config.ecg_path()?)?;
    manifest.add_input("labs", config.labs_path()?)?;
    manifest.write(&config.out_dir)?;

    println!("{}", cohort_summary(&samples));
    let significant: Vec<&str> = report
        .rows
        .iter()
        .filter(|r| r.significant)
        .map(|r| r.name.as_str())
        .collect();
    if significant.is_empty() {
        println!("no feature is significant at alpha {}", report.alpha);
    } else {
        for row in report.rows.iter().filter(|r| r.significant) {
            println!(
                "significant: {} (H {:.2}, p {:.4}{})",
                row.name,
                row.h,
                row.p,
                match row.r_vs_potassium {
                    Some(r) => format!(", r {r:.2}"),
                    None => String::new(),
                }
            );
        }
    }
    Ok(())
}

/// The model input names: an explicit list if configured, otherwise every
/// feature found significant at the configured alpha.
fn input_features(config: &RunConfig, samples: &[CohortSample]) -> Result<Vec<String>> {
    if let Some(features) = &config.features {
        return Ok(features.clone());
    }
    let report = select_features(samples, config.alpha)?;
    print_warnings(&report.warnings);
    let significant: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.significant)
        .map(|r| r.name.clone())
        .collect();
    if significant.is_empty() {
        return Err(Error::degenerate(format!(
            "no feature is significant at alpha {}; pass --features to choose inputs",
            config.alpha
        )));
    }
    Ok(significant)
}

fn feature_matrix(samples: &[CohortSample], names: &[String]) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            names
                .iter()
                .map(|n| s.feature(n).expect("names are validated"))
                .collect()
        })
        .collect()
}

/// CSV of per-epoch training and validation RMSE.
fn history_csv(history: &kalium::anfis::TrainHistory) -> String {
    let mut out = String::from("epoch,train_rmse,val_rmse\n");
    for (i, train) in history.train_rmse.iter().enumerate() {
        let val = history
            .val_rmse
            .as_ref()
            .map(|v| v[i].to_string())
            .unwrap_or_default();
        out.push_str(&format!("{},{train},{val}\n", i + 1));
    }
    out
}

/// CSV of out-of-fold estimates, one row per input sample.
fn predictions_csv(samples: &[CohortSample], outcome: &CvOutcome) -> Result<String> {
    let mut out = String::from("patient_id,fold,potassium_mmol_l,label,estimate_mmol_l,predicted_label\n");
    for (i, sample) in samples.iter().enumerate() {
        let estimate = outcome.predictions[i];
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            sample.patient_id,
            outcome.fold_of[i],
            sample.potassium_mm,
            sample.label,
            estimate,
            classify_estimate(estimate)?,
        ));
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(v) => format!("{v:.precision$}"),
        None => "n/a".to_string(),
    }
}

/// Side-by-side text table of pooled metrics, one column per variant.
fn comparison_text(reports: &[&EvalReport]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        ("pooled MAPE (%)".into(), vec![]),
        ("abs error mean (mM)".into(), vec![]),
        ("abs error sd (mM)".into(), vec![]),
        ("error mean (mM)".into(), vec![]),
        ("error sd (mM)".into(), vec![]),
        ("pooled r".into(), vec![]),
        ("accuracy (%)".into(), vec![]),
        ("hypo sensitivity (%)".into(), vec![]),
        ("hyper sensitivity (%)".into(), vec![]),
        ("hypo specificity (%)".into(), vec![]),
        ("hyper specificity (%)".into(), vec![]),
    ];
    for report in reports {
        let e = &report.pooled_error;
        let pct = |v: Option<f64>| fmt_opt(v.map(|x| x * 100.0), 2);
        let hypo = &report.confusion.per_class[Label::Hypo.index()];
        let hyper = &report.confusion.per_class[Label::Hyper.index()];
        let values = [
            format!("{:.2}", report.pooled_mape),
            format!("{:.4}", e.abs_error_mean),
            fmt_opt(e.abs_error_sd, 4),
            format!("{:.4}", e.error_mean),
            fmt_opt(e.error_sd, 4),
            fmt_opt(report.pooled_r, 4),
            format!("{:.2}", report.confusion.accuracy * 100.0),
            pct(hypo.sensitivity),
            pct(hyper.sensitivity),
            pct(hypo.specificity),
            pct(hyper.specificity),
        ];
        for (row, value) in rows.iter_mut().zip(values) {
            row.1.push(value);
        }
    }
    let mut out = format!("{:<24}", "metric");
    for report in reports {
        out.push_str(&format!("{:>14}", report.variant.to_string()));
    }
    out.push('\n');
    for (name, values) in rows {
        out.push_str(&format!("{name:<24}"));
        for value in values {
            out.push_str(&format!("{value:>14}"));
        }
        out.push('\n');
    }
    out
}

/// Cross-validate the configured model families on the cohort; write models,
/// training histories, evaluation reports, and (for `both`) a comparison.
pub fn cmd_train_eval(config: &RunConfig) -> Result<()> {
    let samples = load_cohort(config)?;
    let names = input_features(config, &samples)?;
    let x = feature_matrix(&samples, &names);
    let y: Vec<f64> = samples.iter().map(|s| s.potassium_mm).collect();

    ensure_out_dir(&config.out_dir)?;
    let mut outcomes: Vec<(Variant, CvOutcome)> = Vec::new();
    for variant in config.variant.variants() {
        let outcome = cross_validate(&names, &x, &y, &config.cv_config(variant))?;
        print_warnings(&outcome.report.fold_warnings);

        write_json(
            &config.out_dir.join(format!("eval_{variant}.json")),
            &outcome.report,
        )?;
        write_text(
            &config.out_dir.join(format!("eval_{variant}.txt")),
            &outcome.report.render_text(),
        )?;
        write_text(
            &config.out_dir.join(format!("confusion_{variant}.csv")),
            &outcome.report.confusion.to_csv(),
        )?;
        write_text(
            &config.out_dir.join(format!("predictions_{variant}.csv")),
            &predictions_csv(&samples, &outcome)?,
        )?;
        for (fold, model) in outcome.models.iter().enumerate() {
            write_text(
                &config.out_dir.join(format!("model_{variant}_fold{fold:02}.json")),
                &(model.to_json() + "\n"),
            )?;
        }
        for (fold, history) in outcome.histories.iter().enumerate() {
            write_text(
                &config.out_dir.join(format!("history_{variant}_fold{fold:02}.csv")),
                &history_csv(history),
            )?;
        }

        let report = &outcome.report;
        println!(
            "{variant}: MAPE {:.2}% | abs error {:.3} mM (sd {}) | r {} | accuracy {:.1}%",
            report.pooled_mape,
            report.pooled_error.abs_error_mean,
            fmt_opt(report.pooled_error.abs_error_sd, 3),
            fmt_opt(report.pooled_r, 3),
            report.confusion.accuracy * 100.0,
        );
        outcomes.push((variant, outcome));
    }

    if outcomes.len() > 1 {
        let reports: Vec<&EvalReport> = outcomes.iter().map(|(_, o)| &o.report).collect();
        write_text(&config.out_dir.join("comparison.txt"), &comparison_text(&reports))?;
        let by_variant: BTreeMap<String, &EvalReport> = outcomes
            .iter()
            .map(|(v, o)| (v.to_string(), &o.report))
            .collect();
        write_json(&config.out_dir.join("comparison.json"), &by_variant)?;
        print!("{}", comparison_text(&reports));
    }

    let mut manifest = Manifest::new("train-eval", config)?;
    manifest.add_input("ecg", config.ecg_path()?)?;
    manifest.add_input("labs", config.labs_path()?)?;
    manifest.write(&config.out_dir)?;
    Ok(())
}

/// Resolved settings of a prediction run, recorded in its manifest.
#[derive(Debug, Clone, Serialize)]
pub struct PredictConfig {
    pub model: PathBuf,
    pub input: Option<PathBuf>,
    pub set: Vec<String>,
    pub out_dir: PathBuf,
}

/// One rule's contribution to an estimate.
#[derive(Debug, Serialize)]
struct RuleTrace {
    /// 1-based rule number, in model order.
    rule: usize,
    firing: f64,
    /// Normalized firing strength (the rule's weight in the estimate).
    weight: f64,
    /// The rule's own linear estimate at this input.
    consequent_mm: f64,
}

/// One input row's estimate with its per-rule explanation.
#[derive(Debug, Serialize)]
struct Prediction {
    inputs: BTreeMap<String, f64>,
    estimate_mm: f64,
    class: Label,
    /// True when no rule fired and the nearest-rule fallback was used.
    zero_firing: bool,
    rules: Vec<RuleTrace>,
}

/// Parse `name=value` pairs into a single input row in model order.
fn row_from_pairs(model: &TskModel, pairs: &[String]) -> Result<Vec<f64>> {
    let mut values: BTreeMap<&str, f64> = BTreeMap::new();
    for pair in pairs {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("expected NAME=VALUE, got {pair:?}")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("{name}: expected a number, got {value:?}")))?;
        if values.insert(name.trim(), value).is_some() {
            return Err(Error::invalid(format!("{name} was set twice")));
        }
    }
    model
        .input_names
        .iter()
        .map(|name| {
            values
                .get(name.as_str())
                .copied()
                .ok_or_else(|| Error::SchemaMismatch(format!("input missing column {name}")))
        })
        .collect()
}

/// Read input rows from a CSV whose header contains every model input.
fn rows_from_csv(model: &TskModel, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => {
            let source = match e.into_kind() {
                csv::ErrorKind::Io(io) => io,
                _ => unreachable!("kind checked above"),
            };
            Error::Io {
                path: path.display().to_string(),
                source,
            }
        }
        _ => Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        },
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let columns: Vec<usize> = model
        .input_names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::SchemaMismatch(format!("input missing column {name}")))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = (i + 2) as u64;
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let row: Vec<f64> = columns
            .iter()
            .zip(&model.input_names)
            .map(|(&col, name)| {
                let cell = record
                    .get(col)
                    .ok_or_else(|| parse_err(format!("{name}: missing value")))?;
                let value: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("{name}: expected a number, got {cell:?}")))?;
                if !value.is_finite() {
                    return Err(parse_err(format!("{name}: value must be finite, got {cell}")));
                }
                Ok(value)
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::degenerate(format!(
            "{} contains no data rows",
            path.display()
        )));
    }
    Ok(rows)
}

/// Apply a trained model to feature rows; print each estimate with its
/// per-rule breakdown and write the full trace as JSON.
pub fn cmd_predict(config: &PredictConfig) -> Result<()> {
    let text = std::fs::read_to_string(&config.model).map_err(io_err(&config.model))?;
    let model = TskModel::from_json(&text)?;

    let rows = match (&config.input, config.set.is_empty()) {
        (Some(path), true) => rows_from_csv(&model, path)?,
        (None, false) => vec![row_from_pairs(&model, &config.set)?],
        (Some(_), false) => {
            return Err(Error::invalid("pass either --input or --set values, not both"))
        }
        (None, true) => {
            return Err(Error::invalid("pass an --input CSV or --set NAME=VALUE pairs"))
        }
    };

    let outputs = kalium::anfis::predict(&model, &rows)?;
    let mut predictions = Vec::with_capacity(rows.len());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (i, (row, inferred)) in rows.iter().zip(&outputs).enumerate() {
        let class = classify_estimate(inferred.estimate)?;
        let rules: Vec<RuleTrace> = model
            .rules
            .iter()
            .enumerate()
            .map(|(r, rule)| RuleTrace {
                rule: r + 1,
                firing: inferred.firing[r],
                weight: inferred.normalized[r],
                consequent_mm: rule.consequent_at(row),
            })
            .collect();

        writeln!(
            out,
            "row {}: estimate {:.4} mM, class {class}{}",
            i + 1,
            inferred.estimate,
            if inferred.zero_firing {
                " (no rule fired; nearest rule used)"
            } else {
                ""
            }
        )
        .map_err(|e| Error::Io {
            path: "stdout".to_string(),
            source: e,
        })?;
        for trace in &rules {
            writeln!(
                out,
                "  rule {}: firing {:.6}, weight {:.6}, consequent {:.4} mM",
                trace.rule, trace.firing, trace.weight, trace.consequent_mm
            )
            .map_err(|e| Error::Io {
                path: "stdout".to_string(),
                source: e,
            })?;
        }

        predictions.push(Prediction {
            inputs: model
                .input_names
                .iter()
                .cloned()
                .zip(row.iter().copied())
                .collect(),
            estimate_mm: inferred.estimate,
            class,
            zero_firing: inferred.zero_firing,
            rules,
        });
    }

    ensure_out_dir(&config.out_dir)?;
    write_json(&config.out_dir.join("predictions.json"), &predictions)?;
    let mut manifest = Manifest::new("predict", config)?;
    manifest.add_input("model", &config.model)?;
    if let Some(input) = &config.input {
        manifest.add_input("input", input)?;
    }
    manifest.write(&config.out_dir)?;
    Ok(())
}
