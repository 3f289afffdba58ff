//! Run configuration: built-in defaults, optional TOML config file, and
//! command-line flag overrides, applied in that order.

use std::path::{Path, PathBuf};

use kalium::anfis::{TrainConfig, Variant};
use kalium::eval::CvConfig;
use kalium::fcm::FcmConfig;
use kalium::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which model families a training run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantChoice {
    /// Grid-partitioned trapezoidal model only.
    Conventional,
    /// Cluster-initialized Gaussian model only.
    FcmAnfis,
    /// Both, with a side-by-side comparison.
    Both,
}

impl VariantChoice {
    /// The model families this choice expands to, in report order.
    pub fn variants(self) -> Vec<Variant> {
        match self {
            VariantChoice::Conventional => vec![Variant::Conventional],
            VariantChoice::FcmAnfis => vec![Variant::FcmAnfis],
            VariantChoice::Both => vec![Variant::Conventional, Variant::FcmAnfis],
        }
    }
}

/// Fully resolved settings for one run, recorded verbatim in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// ECG feature CSV.
    pub ecg: Option<PathBuf>,
    /// Potassium lab CSV.
    pub labs: Option<PathBuf>,
    /// Join window in seconds: a pair qualifies when |t_ecg - t_lab| <= window.
    pub window_s: i64,
    /// Significance level for the feature rank test.
    pub alpha: f64,
    pub variant: VariantChoice,
    pub epochs: usize,
    /// Antecedent learning rate.
    pub lr: f64,
    /// Membership functions per input (conventional variant).
    pub mfs_per_dim: usize,
    /// Cluster count (fcm-anfis variant).
    pub clusters: usize,
    /// Cluster fuzziness exponent.
    pub fuzziness: f64,
    /// Cluster convergence tolerance.
    pub tol: f64,
    /// Epochs spent with antecedents frozen (fcm-anfis variant).
    pub phase_split: usize,
    /// Cross-validation fold count.
    pub folds: usize,
    /// Stratify folds by class.
    pub stratified: bool,
    /// Seed for clustering and fold shuffling.
    pub seed: u64,
    /// Model input features; defaults to the significant ones.
    pub features: Option<Vec<String>>,
    /// Directory for all outputs and the manifest.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ecg: None,
            labs: None,
            window_s: 300,
            alpha: 0.05,
            variant: VariantChoice::Both,
            epochs: 200,
            lr: 0.01,
            mfs_per_dim: 5,
            clusters: 3,
            fuzziness: 2.0,
            tol: 1e-5,
            phase_split: 100,
            folds: 10,
            stratified: true,
            seed: 0,
            features: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Optional values read from a TOML config file; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub ecg: Option<PathBuf>,
    pub labs: Option<PathBuf>,
    pub window_s: Option<i64>,
    pub alpha: Option<f64>,
    pub variant: Option<VariantChoice>,
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub mfs_per_dim: Option<usize>,
    pub clusters: Option<usize>,
    pub fuzziness: Option<f64>,
    pub tol: Option<f64>,
    pub phase_split: Option<usize>,
    pub folds: Option<usize>,
    pub stratified: Option<bool>,
    pub seed: Option<u64>,
    pub features: Option<Vec<String>>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Defaults overlaid with the values present in a TOML config file.
    pub fn load(config_path: Option<&Path>) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            let file: FileConfig = toml::from_str(&text)
                .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))?;
            config.apply(file);
        }
        Ok(config)
    }

    /// Overlay every value present in `file` onto this configuration.
    pub fn apply(&mut self, file: FileConfig) {
        macro_rules! overlay {
            ($($field:ident),*) => {
                $(if let Some(v) = file.$field { self.$field = v; })*
            };
        }
        overlay!(
            window_s, alpha, variant, epochs, lr, mfs_per_dim, clusters, fuzziness, tol,
            phase_split, folds, stratified, seed, out_dir
        );
        for (target, value) in [
            (&mut self.ecg, file.ecg),
            (&mut self.labs, file.labs),
        ] {
            if value.is_some() {
                *target = value;
            }
        }
        if file.features.is_some() {
            self.features = file.features;
        }
    }

    /// Check every cross-field constraint the library does not check itself.
    pub fn validate(&self) -> Result<()> {
        if self.window_s < 0 {
            return Err(Error::invalid(format!(
                "join window must be >= 0 s, got {}",
                self.window_s
            )));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.folds < 2 {
            return Err(Error::invalid(format!(
                "cross-validation needs >= 2 folds, got {}",
                self.folds
            )));
        }
        if let Some(features) = &self.features {
            if features.is_empty() {
                return Err(Error::invalid("feature list must not be empty"));
            }
            for name in features {
                if kalium::pipeline::feature_index(name).is_none() {
                    return Err(Error::invalid(format!(
                        "unknown feature {name:?}; expected one of {}",
                        kalium::pipeline::FEATURE_NAMES.join(", ")
                    )));
                }
            }
        }
        for variant in self.variant.variants() {
            self.train_config(variant).validate()?;
        }
        Ok(())
    }

    /// Training hyperparameters for one model family.
    pub fn train_config(&self, variant: Variant) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            variant,
            mfs_per_dim: self.mfs_per_dim,
            clusters: self.clusters,
            fcm: FcmConfig {
                c: self.clusters,
                m: self.fuzziness,
                tol: self.tol,
                max_iter: self.phase_split,
                seed: self.seed,
            },
            phase_split: self.phase_split,
            seed: self.seed,
        }
    }

    /// Cross-validation settings for one model family.
    pub fn cv_config(&self, variant: Variant) -> CvConfig {
        CvConfig {
            k: self.folds,
            seed: self.seed,
            stratified: self.stratified,
            train: self.train_config(variant),
        }
    }

    /// The ECG path, or a validation error pointing at the missing flag.
    pub fn ecg_path(&self) -> Result<&Path> {
        self.ecg
            .as_deref()
            .ok_or_else(|| Error::invalid("an ECG feature CSV is required (--ecg or config `ecg`)"))
    }

    /// The labs path, or a validation error pointing at the missing flag.
    pub fn labs_path(&self) -> Result<&Path> {
        self.labs
            .as_deref()
            .ok_or_else(|| Error::invalid("a potassium lab CSV is required (--labs or config `labs`)"))
    }
}
