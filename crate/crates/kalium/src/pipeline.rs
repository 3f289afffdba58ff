//! Data ingestion, cohort joining, labeling, feature selection, and the
//! synthetic-data generator used by the test harness.
//!
//! Input is two headered UTF-8 CSV files. `ecg.csv` columns: `patient_id`,
//! `timestamp`, the nine feature columns named in [`FEATURE_NAMES`];
//! `labs.csv` columns: `patient_id`, `timestamp`, `potassium_mmol_l`.
//! Timestamps are ISO-8601 (`2024-01-02T03:04:05`, with or without a UTC
//! offset).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{kruskal_wallis, pearson_r};

/// The nine model features, in canonical column order.
pub const FEATURE_NAMES: [&str; 9] = [
    "rr_ms",
    "pr_ms",
    "qrs_ms",
    "qt_ms",
    "qtc_ms",
    "p_axis_deg",
    "qrs_axis_deg",
    "t_axis_deg",
    "acci",
];

/// Position of a feature in [`FEATURE_NAMES`], if it is one.
pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&f| f == name)
}

/// Potassium below 3.5 mM is hypokalemia.
pub const HYPO_BOUND_MM: f64 = 3.5;
/// Potassium above 5.0 mM is hyperkalemia.
pub const HYPER_BOUND_MM: f64 = 5.0;

/// Dyskalemia class. The declaration order (Hypo, Normal, Hyper) is the row
/// and column order of every confusion matrix in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Hypo,
    Normal,
    Hyper,
}

impl Label {
    /// All labels in canonical order.
    pub const ALL: [Label; 3] = [Label::Hypo, Label::Normal, Label::Hyper];

    /// Canonical index: Hypo 0, Normal 1, Hyper 2.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Label::Hypo => write!(f, "hypo"),
            Label::Normal => write!(f, "normal"),
            Label::Hyper => write!(f, "hyper"),
        }
    }
}

/// Class of a measured potassium value (mM). The boundaries 3.5 and 5.0 both
/// belong to Normal.
pub fn label_potassium(k_mm: f64) -> Result<Label> {
    if !k_mm.is_finite() || k_mm <= 0.0 {
        return Err(Error::invalid(format!(
            "potassium must be a finite positive concentration, got {k_mm}"
        )));
    }
    Ok(if k_mm < HYPO_BOUND_MM {
        Label::Hypo
    } else if k_mm <= HYPER_BOUND_MM {
        Label::Normal
    } else {
        Label::Hyper
    })
}

/// One ECG measurement. Any feature may be missing; a record missing any of
/// the nine is excluded from cohort joining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    pub patient_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub rr_ms: Option<f64>,
    pub pr_ms: Option<f64>,
    pub qrs_ms: Option<f64>,
    pub qt_ms: Option<f64>,
    pub qtc_ms: Option<f64>,
    pub p_axis_deg: Option<f64>,
    pub qrs_axis_deg: Option<f64>,
    pub t_axis_deg: Option<f64>,
    pub acci: Option<f64>,
}

impl EcgRecord {
    /// The nine features in canonical order, or `None` if any is missing.
    pub fn features(&self) -> Option<[f64; 9]> {
        Some([
            self.rr_ms?,
            self.pr_ms?,
            self.qrs_ms?,
            self.qt_ms?,
            self.qtc_ms?,
            self.p_axis_deg?,
            self.qrs_axis_deg?,
            self.t_axis_deg?,
            self.acci?,
        ])
    }
}

/// One potassium lab measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRecord {
    pub patient_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub potassium_mm: f64,
}

/// One joined (ECG, lab) pair: the model's unit of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSample {
    pub patient_id: String,
    /// Feature values parallel to [`FEATURE_NAMES`].
    pub features: [f64; 9],
    pub potassium_mm: f64,
    pub label: Label,
    /// Signed seconds from lab draw to ECG recording.
    pub delta_t_s: i64,
}

impl CohortSample {
    /// Value of a named feature.
    pub fn feature(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.features[i])
    }
}

fn parse_timestamp(text: &str) -> Option<i64> {
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(text) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = chrono::NaiveDateTime::parse_from_str(text, fmt) {
            return Some(naive.and_utc().timestamp());
        }
    }
    None
}

fn format_timestamp(ts: i64) -> String {
    chrono::DateTime::from_timestamp(ts, 0)
        .map(|dt| dt.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string())
        .unwrap_or_else(|| ts.to_string())
}

/// Header lookup that reports a missing column as a parse error on line 1.
struct Columns {
    index: BTreeMap<String, usize>,
    path: String,
}

impl Columns {
    fn new(path: &str, headers: &csv::StringRecord) -> Columns {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, name)| (name.trim().to_string(), i))
            .collect();
        Columns {
            index,
            path: path.to_string(),
        }
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 1,
            message: format!("missing column '{name}'"),
        })
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn field<'a>(record: &'a csv::StringRecord, idx: usize) -> &'a str {
    record.get(idx).unwrap_or("").trim()
}

/// Empty string means missing; anything else must be a finite number.
fn parse_optional_number(text: &str, what: &str) -> std::result::Result<Option<f64>, String> {
    if text.is_empty() {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(format!("{what} is not a finite number: '{text}'")),
    }
}

/// Read `ecg.csv`. Malformed rows are skipped and described (with their line
/// number) in the returned warning list.
pub fn read_ecg_csv(path: &Path) -> Result<(Vec<EcgRecord>, Vec<String>)> {
    let mut reader = open_reader(path)?;
    let path_str = path.display().to_string();
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path_str.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols = Columns::new(&path_str, &headers);
    let id_col = cols.require("patient_id")?;
    let ts_col = cols.require("timestamp")?;
    let feature_cols: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|name| cols.require(name))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let line = (row_idx + 2) as u64; // 1-based, after the header
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                warnings.push(format!("{path_str}:{line}: unreadable row skipped ({e})"));
                continue;
            }
        };
        match parse_ecg_row(&row, id_col, ts_col, &feature_cols) {
            Ok(record) => records.push(record),
            Err(message) => warnings.push(format!("{path_str}:{line}: row skipped: {message}")),
        }
    }
    Ok((records, warnings))
}

fn parse_ecg_row(
    row: &csv::StringRecord,
    id_col: usize,
    ts_col: usize,
    feature_cols: &[usize],
) -> std::result::Result<EcgRecord, String> {
    let patient_id = field(row, id_col).to_string();
    if patient_id.is_empty() {
        return Err("empty patient_id".to_string());
    }
    let ts_text = field(row, ts_col);
    let timestamp =
        parse_timestamp(ts_text).ok_or_else(|| format!("bad timestamp '{ts_text}'"))?;

    let mut values = [None; 9];
    for (i, (&col, name)) in feature_cols.iter().zip(FEATURE_NAMES).enumerate() {
        values[i] = parse_optional_number(field(row, col), name)?;
    }
    // Interval durations must be positive when present.
    for (i, name) in FEATURE_NAMES.iter().enumerate().take(5) {
        if let Some(v) = values[i] {
            if v <= 0.0 {
                return Err(format!("{name} must be > 0 ms, got {v}"));
            }
        }
    }
    // The comorbidity index is a non-negative integer score.
    if let Some(a) = values[8] {
        if a < 0.0 || a.fract() != 0.0 {
            return Err(format!("acci must be a non-negative integer, got {a}"));
        }
    }
    Ok(EcgRecord {
        patient_id,
        timestamp,
        rr_ms: values[0],
        pr_ms: values[1],
        qrs_ms: values[2],
        qt_ms: values[3],
        qtc_ms: values[4],
        p_axis_deg: values[5],
        qrs_axis_deg: values[6],
        t_axis_deg: values[7],
        acci: values[8],
    })
}

/// Read `labs.csv`. Rows with implausible potassium (outside [1, 10] mM) are
/// gated out with a warning, like malformed rows.
pub fn read_labs_csv(path: &Path) -> Result<(Vec<LabRecord>, Vec<String>)> {
    let mut reader = open_reader(path)?;
    let path_str = path.display().to_string();
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path_str.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols = Columns::new(&path_str, &headers);
    let id_col = cols.require("patient_id")?;
    let ts_col = cols.require("timestamp")?;
    let k_col = cols.require("potassium_mmol_l")?;

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let line = (row_idx + 2) as u64;
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                warnings.push(format!("{path_str}:{line}: unreadable row skipped ({e})"));
                continue;
            }
        };
        let patient_id = field(&row, id_col).to_string();
        let ts_text = field(&row, ts_col);
        let k_text = field(&row, k_col);
        let parsed = (|| -> std::result::Result<LabRecord, String> {
            if patient_id.is_empty() {
                return Err("empty patient_id".to_string());
            }
            let timestamp =
                parse_timestamp(ts_text).ok_or_else(|| format!("bad timestamp '{ts_text}'"))?;
            let potassium_mm = parse_optional_number(k_text, "potassium_mmol_l")?
                .ok_or_else(|| "potassium_mmol_l is required".to_string())?;
            if !(1.0..=10.0).contains(&potassium_mm) {
                return Err(format!(
                    "potassium {potassium_mm} mM outside plausible range [1, 10]"
                ));
            }
            Ok(LabRecord {
                patient_id,
                timestamp,
                potassium_mm,
            })
        })();
        match parsed {
            Ok(record) => records.push(record),
            Err(message) => warnings.push(format!("{path_str}:{line}: row skipped: {message}")),
        }
    }
    Ok((records, warnings))
}

/// Join ECGs to labs: per patient, keep the single complete-feature pair with
/// the smallest |ECG time − lab time| within `window_s` seconds (ties broken
/// by earlier lab, then earlier ECG). Output is sorted by patient id; at most
/// one sample per patient.
pub fn join_cohort(
    ecgs: &[EcgRecord],
    labs: &[LabRecord],
    window_s: i64,
) -> Result<Vec<CohortSample>> {
    if window_s < 0 {
        return Err(Error::invalid(format!("join window must be >= 0 s, got {window_s}")));
    }
    let mut ecg_by_patient: BTreeMap<&str, Vec<&EcgRecord>> = BTreeMap::new();
    for ecg in ecgs {
        if ecg.features().is_some() {
            ecg_by_patient.entry(&ecg.patient_id).or_default().push(ecg);
        }
    }
    let mut labs_by_patient: BTreeMap<&str, Vec<&LabRecord>> = BTreeMap::new();
    for lab in labs {
        labs_by_patient.entry(&lab.patient_id).or_default().push(lab);
    }

    let mut samples = Vec::new();
    for (patient_id, patient_labs) in &labs_by_patient {
        let Some(patient_ecgs) = ecg_by_patient.get(patient_id) else {
            continue;
        };
        // (|dt|, lab timestamp, ecg timestamp) — minimize lexicographically
        let mut best: Option<((i64, i64, i64), &LabRecord, &EcgRecord)> = None;
        for lab in patient_labs {
            for ecg in patient_ecgs {
                let dt = ecg.timestamp - lab.timestamp;
                if dt.abs() > window_s {
                    continue;
                }
                let key = (dt.abs(), lab.timestamp, ecg.timestamp);
                if best.as_ref().is_none_or(|(k, _, _)| key < *k) {
                    best = Some((key, lab, ecg));
                }
            }
        }
        if let Some((_, lab, ecg)) = best {
            samples.push(CohortSample {
                patient_id: patient_id.to_string(),
                features: ecg.features().expect("only complete records are indexed"),
                potassium_mm: lab.potassium_mm,
                label: label_potassium(lab.potassium_mm)?,
                delta_t_s: ecg.timestamp - lab.timestamp,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::degenerate(
            "no (ECG, lab) pair with complete features fell inside the join window",
        ));
    }
    Ok(samples)
}

/// Count of samples per class, in canonical label order.
pub fn class_counts(samples: &[CohortSample]) -> [usize; 3] {
    let mut counts = [0; 3];
    for s in samples {
        counts[s.label.index()] += 1;
    }
    counts
}

/// Rank-test result for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub name: String,
    /// Kruskal-Wallis H (tie-corrected).
    pub h: f64,
    pub df: usize,
    pub p: f64,
    pub tie_correction: f64,
    pub significant: bool,
    /// Pearson correlation against potassium; only computed for significant
    /// features, and missing if undefined (zero variance).
    pub r_vs_potassium: Option<f64>,
}

/// Feature ranking across the label groups, highest H first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub alpha: f64,
    pub rows: Vec<FeatureRow>,
    pub warnings: Vec<String>,
}

/// Rank all nine features by Kruskal-Wallis H across the classes present in
/// the cohort. Features with `p < alpha` are flagged significant and get a
/// Pearson correlation against potassium.
pub fn select_features(samples: &[CohortSample], alpha: f64) -> Result<FeatureReport> {
    if !(0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let counts = class_counts(samples);
    let mut warnings = Vec::new();
    let present: Vec<Label> = Label::ALL
        .into_iter()
        .filter(|label| {
            if counts[label.index()] == 0 {
                warnings.push(format!("class {label} has no samples; excluded from the rank test"));
                false
            } else {
                true
            }
        })
        .collect();
    if present.len() < 2 {
        return Err(Error::degenerate(format!(
            "feature selection needs >= 2 classes, found {}",
            present.len()
        )));
    }

    let potassium: Vec<f64> = samples.iter().map(|s| s.potassium_mm).collect();
    let mut rows = Vec::with_capacity(FEATURE_NAMES.len());
    for (i, name) in FEATURE_NAMES.iter().enumerate() {
        let groups: Vec<Vec<f64>> = present
            .iter()
            .map(|label| {
                samples
                    .iter()
                    .filter(|s| s.label == *label)
                    .map(|s| s.features[i])
                    .collect()
            })
            .collect();
        let kw = kruskal_wallis(&groups)?;
        let significant = kw.p < alpha;
        let values: Vec<f64> = samples.iter().map(|s| s.features[i]).collect();
        let r_vs_potassium = if significant {
            pearson_r(&values, &potassium).ok()
        } else {
            None
        };
        rows.push(FeatureRow {
            name: name.to_string(),
            h: kw.h,
            df: kw.df,
            p: kw.p,
            tie_correction: kw.tie_correction,
            significant,
            r_vs_potassium,
        });
    }
    rows.sort_by(|a, b| b.h.total_cmp(&a.h).then_with(|| a.name.cmp(&b.name)));
    Ok(FeatureReport {
        alpha,
        rows,
        warnings,
    })
}

/// Generate a synthetic (ECG, labs) table pair shaped like a small clinical cohort:
/// class proportions 10/27/5 scaled to `n`, T axis affine in potassium plus
/// Gaussian noise of `noise_sd` degrees, every other feature independent of
/// the label, and every pair joinable within the 300 s window.
pub fn generate_synthetic(
    n: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(Vec<EcgRecord>, Vec<LabRecord>)> {
    if n < 10 {
        return Err(Error::invalid(format!("synthetic cohort needs n >= 10, got {n}")));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::invalid(format!("noise_sd must be finite and >= 0, got {noise_sd}")));
    }
    let n_hypo = ((n as f64) * 10.0 / 42.0).round() as usize;
    let n_hyper = ((n as f64) * 5.0 / 42.0).round() as usize;
    let n_normal = n - n_hypo - n_hyper;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_hypo = Uniform::new_inclusive(3.0, 3.45);
    let k_normal = Uniform::new_inclusive(3.5, 5.0);
    let k_hyper = Uniform::new_inclusive(5.05, 6.2);
    let t_noise = rand_distr::Normal::new(0.0, noise_sd)
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
    let rr = Uniform::new_inclusive(600.0, 1200.0);
    let pr = Uniform::new_inclusive(120.0, 200.0);
    let qrs = Uniform::new_inclusive(70.0, 110.0);
    let qt = Uniform::new_inclusive(320.0, 440.0);
    let qtc = Uniform::new_inclusive(380.0, 460.0);
    let p_axis = Uniform::new_inclusive(0.0, 75.0);
    let qrs_axis = Uniform::new_inclusive(-30.0, 90.0);
    let acci = Uniform::new_inclusive(0u32, 8u32);
    let offset = Uniform::new_inclusive(-240i64, 240i64);

    let base_ts = 1_700_000_000i64;
    let mut ecgs = Vec::with_capacity(n);
    let mut labs = Vec::with_capacity(n);
    let classes = [(n_hypo, k_hypo), (n_normal, k_normal), (n_hyper, k_hyper)];
    let mut patient = 0usize;
    for (count, k_dist) in classes {
        for _ in 0..count {
            patient += 1;
            let patient_id = format!("P{patient:04}");
            let k = k_dist.sample(&mut rng);
            let t_axis = -40.0 + 20.0 * k + t_noise.sample(&mut rng);
            let lab_ts = base_ts + patient as i64 * 3600;
            let ecg_ts = lab_ts + offset.sample(&mut rng);
            labs.push(LabRecord {
                patient_id: patient_id.clone(),
                timestamp: lab_ts,
                potassium_mm: k,
            });
            ecgs.push(EcgRecord {
                patient_id,
                timestamp: ecg_ts,
                rr_ms: Some(rr.sample(&mut rng)),
                pr_ms: Some(pr.sample(&mut rng)),
                qrs_ms: Some(qrs.sample(&mut rng)),
                qt_ms: Some(qt.sample(&mut rng)),
                qtc_ms: Some(qtc.sample(&mut rng)),
                p_axis_deg: Some(p_axis.sample(&mut rng)),
                qrs_axis_deg: Some(qrs_axis.sample(&mut rng)),
                t_axis_deg: Some(t_axis),
                acci: Some(acci.sample(&mut rng) as f64),
            });
        }
    }
    Ok((ecgs, labs))
}

fn create_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write `ecg.csv` in the layout [`read_ecg_csv`] expects.
pub fn write_ecg_csv(path: &Path, ecgs: &[EcgRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(create_file(path)?);
    writeln!(out, "patient_id,timestamp,{}", FEATURE_NAMES.join(","))
        .map_err(|e| io_err(path, e))?;
    for ecg in ecgs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            ecg.patient_id,
            format_timestamp(ecg.timestamp),
            fmt_opt(ecg.rr_ms),
            fmt_opt(ecg.pr_ms),
            fmt_opt(ecg.qrs_ms),
            fmt_opt(ecg.qt_ms),
            fmt_opt(ecg.qtc_ms),
            fmt_opt(ecg.p_axis_deg),
            fmt_opt(ecg.qrs_axis_deg),
            fmt_opt(ecg.t_axis_deg),
            fmt_opt(ecg.acci),
        )
        .map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

/// Write `labs.csv` in the layout [`read_labs_csv`] expects.
pub fn write_labs_csv(path: &Path, labs: &[LabRecord]) -> Result<()> {
    let mut out = std::io::BufWriter::new(create_file(path)?);
    writeln!(out, "patient_id,timestamp,potassium_mmol_l").map_err(|e| io_err(path, e))?;
    for lab in labs {
        writeln!(
            out,
            "{},{},{}",
            lab.patient_id,
            format_timestamp(lab.timestamp),
            lab.potassium_mm
        )
        .map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

/// Write the joined cohort as CSV: id, features, potassium, label, delta t.
pub fn write_cohort_csv(path: &Path, samples: &[CohortSample]) -> Result<()> {
    let mut out = std::io::BufWriter::new(create_file(path)?);
    writeln!(
        out,
        "patient_id,{},potassium_mmol_l,label,delta_t_s",
        FEATURE_NAMES.join(",")
    )
    .map_err(|e| io_err(path, e))?;
    for s in samples {
        let features: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{},{}",
            s.patient_id,
            features.join(","),
            s.potassium_mm,
            s.label,
            s.delta_t_s
        )
        .map_err(|e| io_err(path, e))?;
    }
    out.flush().map_err(|e| io_err(path, e))
}

/// Cohort JSON document: feature names once, then the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortDocument {
    pub feature_names: Vec<String>,
    pub samples: Vec<CohortSample>,
}

impl CohortDocument {
    pub fn new(samples: &[CohortSample]) -> CohortDocument {
        CohortDocument {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            samples: samples.to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ecg(patient: &str, ts: i64, t_axis: f64) -> EcgRecord {
        EcgRecord {
            patient_id: patient.to_string(),
            timestamp: ts,
            rr_ms: Some(800.0),
            pr_ms: Some(160.0),
            qrs_ms: Some(90.0),
            qt_ms: Some(380.0),
            qtc_ms: Some(420.0),
            p_axis_deg: Some(45.0),
            qrs_axis_deg: Some(30.0),
            t_axis_deg: Some(t_axis),
            acci: Some(2.0),
        }
    }

    fn lab(patient: &str, ts: i64, k: f64) -> LabRecord {
        LabRecord {
            patient_id: patient.to_string(),
            timestamp: ts,
            potassium_mm: k,
        }
    }

    #[test]
    fn labeling_boundaries() {
        assert_eq!(label_potassium(3.5).unwrap(), Label::Normal);
        assert_eq!(label_potassium(5.0).unwrap(), Label::Normal);
        assert_eq!(label_potassium(5.000001).unwrap(), Label::Hyper);
        assert_eq!(label_potassium(3.499).unwrap(), Label::Hypo);
        assert_eq!(label_potassium(0.1).unwrap(), Label::Hypo);
        assert!(label_potassium(0.0).is_err());
        assert!(label_potassium(-1.0).is_err());
        assert!(label_potassium(f64::NAN).is_err());
    }

    /// Every positive concentration gets exactly one label, and the label is
    /// monotone in the concentration.
    #[test]
    fn labels_partition_the_positive_axis() {
        let mut last = Label::Hypo;
        for i in 1..=10_000 {
            let k = i as f64 * 1e-3;
            let label = label_potassium(k).unwrap();
            assert!(label.index() >= last.index(), "label regressed at k={k}");
            last = label;
        }
        assert_eq!(last, Label::Hyper);
    }

    #[test]
    fn join_keeps_the_closest_ecg() {
        let ecgs = vec![ecg("a", 1000 - 240, 10.0), ecg("a", 1000 + 60, 20.0)];
        let labs = vec![lab("a", 1000, 4.2)];
        let cohort = join_cohort(&ecgs, &labs, 300).unwrap();
        assert_eq!(cohort.len(), 1);
        assert_eq!(cohort[0].delta_t_s, 60);
        assert_eq!(cohort[0].feature("t_axis_deg"), Some(20.0));
        assert_eq!(cohort[0].label, Label::Normal);
    }

    #[test]
    fn join_window_is_inclusive_at_300() {
        let labs = vec![lab("a", 1000, 4.2)];
        assert!(join_cohort(&[ecg("a", 1301, 10.0)], &labs, 300).is_err());
        let cohort = join_cohort(&[ecg("a", 1300, 10.0)], &labs, 300).unwrap();
        assert_eq!(cohort[0].delta_t_s, 300);
    }

    #[test]
    fn join_tie_breaks_on_earlier_lab_then_earlier_ecg() {
        // two labs equidistant from one ECG: earlier lab wins
        let ecgs = vec![ecg("a", 1000, 10.0)];
        let labs = vec![lab("a", 1060, 5.5), lab("a", 940, 4.0)];
        let cohort = join_cohort(&ecgs, &labs, 300).unwrap();
        assert_eq!(cohort[0].potassium_mm, 4.0);
        assert_eq!(cohort[0].delta_t_s, 60);

        // two ECGs equidistant from one lab: earlier ECG wins
        let ecgs = vec![ecg("b", 1060, 1.0), ecg("b", 940, 2.0)];
        let labs = vec![lab("b", 1000, 4.0)];
        let cohort = join_cohort(&ecgs, &labs, 300).unwrap();
        assert_eq!(cohort[0].delta_t_s, -60);
        assert_eq!(cohort[0].feature("t_axis_deg"), Some(2.0));
    }

    #[test]
    fn join_emits_one_sample_per_patient_sorted() {
        let ecgs = vec![
            ecg("b", 1000, 1.0),
            ecg("b", 1100, 2.0),
            ecg("a", 2000, 3.0),
        ];
        let labs = vec![lab("b", 1010, 4.0), lab("b", 1500, 3.0), lab("a", 2000, 5.5)];
        let cohort = join_cohort(&ecgs, &labs, 300).unwrap();
        assert_eq!(cohort.len(), 2);
        assert_eq!(cohort[0].patient_id, "a");
        assert_eq!(cohort[1].patient_id, "b");
        assert_eq!(cohort[1].delta_t_s, -10);
    }

    #[test]
    fn incomplete_ecg_records_are_excluded() {
        let mut incomplete = ecg("a", 1000, 10.0);
        incomplete.qtc_ms = None;
        let labs = vec![lab("a", 1000, 4.2)];
        assert!(join_cohort(&[incomplete], &labs, 300).is_err());
    }

    #[test]
    fn synthetic_cohort_has_expected_class_counts() {
        let (ecgs, labs) = generate_synthetic(42, 15.0, 7).unwrap();
        assert_eq!(ecgs.len(), 42);
        assert_eq!(labs.len(), 42);
        let cohort = join_cohort(&ecgs, &labs, 300).unwrap();
        assert_eq!(cohort.len(), 42);
        assert_eq!(class_counts(&cohort), [10, 27, 5]);
        for s in &cohort {
            assert!(s.delta_t_s.abs() <= 300);
            assert_eq!(s.label, label_potassium(s.potassium_mm).unwrap());
        }
    }

    #[test]
    fn noiseless_synthetic_t_axis_is_perfectly_correlated() {
        let (ecgs, labs) = generate_synthetic(42, 0.0, 3).unwrap();
        let cohort = join_cohort(&ecgs, &labs, 300).unwrap();
        let t: Vec<f64> = cohort.iter().map(|s| s.feature("t_axis_deg").unwrap()).collect();
        let k: Vec<f64> = cohort.iter().map(|s| s.potassium_mm).collect();
        assert_relative_eq!(pearson_r(&t, &k).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let a = generate_synthetic(42, 12.0, 99).unwrap();
        let b = generate_synthetic(42, 12.0, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(42, 12.0, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (ecgs, labs) = generate_synthetic(20, 10.0, 5).unwrap();
        let ecg_path = dir.path().join("ecg.csv");
        let labs_path = dir.path().join("labs.csv");
        write_ecg_csv(&ecg_path, &ecgs).unwrap();
        write_labs_csv(&labs_path, &labs).unwrap();

        let (ecgs2, warn_e) = read_ecg_csv(&ecg_path).unwrap();
        let (labs2, warn_l) = read_labs_csv(&labs_path).unwrap();
        assert!(warn_e.is_empty(), "{warn_e:?}");
        assert!(warn_l.is_empty(), "{warn_l:?}");
        assert_eq!(ecgs, ecgs2);
        assert_eq!(labs, labs2);

        let ecg_path2 = dir.path().join("ecg2.csv");
        write_ecg_csv(&ecg_path2, &ecgs2).unwrap();
        assert_eq!(
            std::fs::read(&ecg_path).unwrap(),
            std::fs::read(&ecg_path2).unwrap()
        );
    }

    #[test]
    fn malformed_rows_are_skipped_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ecg.csv");
        let header = format!("patient_id,timestamp,{}\n", FEATURE_NAMES.join(","));
        let good = "p1,2024-01-01T00:00:00,800,160,90,380,420,45,30,50,2\n";
        let bad_number = "p2,2024-01-01T00:00:00,800,160,90,380,420,45,30,oops,2\n";
        let bad_interval = "p3,2024-01-01T00:00:00,-5,160,90,380,420,45,30,50,2\n";
        let bad_ts = "p4,not-a-time,800,160,90,380,420,45,30,50,2\n";
        let missing_t_axis = "p5,2024-01-01T00:00:00,800,160,90,380,420,45,30,,2\n";
        std::fs::write(
            &path,
            format!("{header}{good}{bad_number}{bad_interval}{bad_ts}{missing_t_axis}"),
        )
        .unwrap();
        let (records, warnings) = read_ecg_csv(&path).unwrap();
        assert_eq!(records.len(), 2); // good + missing-feature rows parse
        assert!(records[1].t_axis_deg.is_none());
        assert_eq!(warnings.len(), 3);
        assert!(warnings[0].contains(":3:"), "{}", warnings[0]);
        assert!(warnings[1].contains(":4:"), "{}", warnings[1]);
        assert!(warnings[2].contains(":5:"), "{}", warnings[2]);
    }

    #[test]
    fn missing_column_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labs.csv");
        std::fs::write(&path, "patient_id,timestamp\np1,2024-01-01T00:00:00\n").unwrap();
        match read_labs_csv(&path).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 1);
                assert!(message.contains("potassium_mmol_l"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn implausible_potassium_is_gated_with_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labs.csv");
        std::fs::write(
            &path,
            "patient_id,timestamp,potassium_mmol_l\n\
             p1,2024-01-01T00:00:00,4.2\n\
             p2,2024-01-01T00:00:00,0.4\n\
             p3,2024-01-01T00:00:00,55\n",
        )
        .unwrap();
        let (records, warnings) = read_labs_csv(&path).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(warnings.len(), 2);
        assert!(warnings[0].contains("plausible range"));
    }

    #[test]
    fn missing_input_file_is_an_io_error() {
        let missing = Path::new("/nonexistent/labs.csv");
        assert!(matches!(read_labs_csv(missing), Err(Error::Io { .. })));
    }

    fn feature_equals_potassium_cohort() -> Vec<CohortSample> {
        let (ecgs, labs) = generate_synthetic(42, 0.0, 11).unwrap();
        let mut cohort = join_cohort(&ecgs, &labs, 300).unwrap();
        for s in &mut cohort {
            // make qt exactly equal to potassium: a perfect separator
            s.features[feature_index("qt_ms").unwrap()] = s.potassium_mm;
            // and make pr constant
            s.features[feature_index("pr_ms").unwrap()] = 160.0;
        }
        cohort
    }

    #[test]
    fn perfect_feature_ranks_first_and_constant_feature_is_insignificant() {
        let cohort = feature_equals_potassium_cohort();
        let report = select_features(&cohort, 0.05).unwrap();
        // qt (== potassium) separates the classes perfectly; t_axis is its
        // affine image here, so both carry the maximal H — qt must at least
        // tie for the top rank
        let top_h = report.rows[0].h;
        let qt = report.rows.iter().find(|r| r.name == "qt_ms").unwrap();
        assert_relative_eq!(qt.h, top_h, max_relative = 1e-12);
        assert!(qt.significant);
        assert!(qt.p < 1e-6, "p = {}", qt.p);
        assert_relative_eq!(qt.r_vs_potassium.unwrap(), 1.0, epsilon = 1e-12);

        let pr = report.rows.iter().find(|r| r.name == "pr_ms").unwrap();
        assert_eq!(pr.h, 0.0);
        assert_eq!(pr.p, 1.0);
        assert!(!pr.significant);
        assert!(pr.r_vs_potassium.is_none());
    }

    #[test]
    fn feature_ranking_ignores_sample_order() {
        let cohort = feature_equals_potassium_cohort();
        let mut reversed = cohort.clone();
        reversed.reverse();
        let a = select_features(&cohort, 0.05).unwrap();
        let b = select_features(&reversed, 0.05).unwrap();
        // same ranking and decisions; statistics equal up to summation order
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.name, rb.name);
            assert_eq!(ra.significant, rb.significant);
            assert_relative_eq!(ra.h, rb.h, max_relative = 1e-12);
            assert_relative_eq!(ra.p, rb.p, max_relative = 1e-9);
        }
    }

    #[test]
    fn single_class_cohort_rejected_for_feature_selection() {
        let (ecgs, labs) = generate_synthetic(42, 0.0, 11).unwrap();
        let cohort: Vec<CohortSample> = join_cohort(&ecgs, &labs, 300)
            .unwrap()
            .into_iter()
            .filter(|s| s.label == Label::Normal)
            .collect();
        assert!(select_features(&cohort, 0.05).is_err());
    }

    #[test]
    fn timestamp_formats_accepted() {
        assert_eq!(parse_timestamp("1970-01-01T00:00:00"), Some(0));
        assert_eq!(parse_timestamp("1970-01-01 00:01:00"), Some(60));
        assert_eq!(parse_timestamp("1970-01-01T00:00:00+00:00"), Some(0));
        assert_eq!(parse_timestamp("1970-01-01T01:00:00+01:00"), Some(0));
        assert_eq!(parse_timestamp("garbage"), None);
    }
}
