//! Hybrid training for TSK models: batch least squares for the rule
//! consequents plus gradient descent on the antecedent parameters, with a
//! two-phase schedule for the cluster-initialized variant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcm::{clusters_to_mfs, fcm_cluster, FcmConfig};
use crate::fuzzy::{grid_model, InferOutput, MembershipFunction, TskModel, TskRule};

/// Which model family to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Grid-partitioned trapezoidal antecedents, trained every epoch.
    Conventional,
    /// Gaussian antecedents placed by fuzzy c-means, frozen for the first
    /// `phase_split` epochs and fine-tuned afterwards.
    FcmAnfis,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Conventional => write!(f, "conventional"),
            Variant::FcmAnfis => write!(f, "fcm-anfis"),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Total epochs (default 200).
    pub epochs: usize,
    /// Antecedent learning rate, > 0 (default 0.01).
    pub lr: f64,
    pub variant: Variant,
    /// Membership functions per input dimension (Conventional, default 5).
    pub mfs_per_dim: usize,
    /// Cluster count (FcmAnfis, default 3).
    pub clusters: usize,
    /// Clustering parameters; `c`, `max_iter`, and `seed` are overridden by
    /// `clusters`, `phase_split`, and `seed` at train time.
    pub fcm: FcmConfig,
    /// FcmAnfis: epochs spent with antecedents frozen (default 100).
    pub phase_split: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.01,
            variant: Variant::Conventional,
            mfs_per_dim: 5,
            clusters: 3,
            fcm: FcmConfig::default(),
            phase_split: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("training needs at least 1 epoch"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("learning rate must be finite and > 0"));
        }
        match self.variant {
            Variant::Conventional => {
                if self.mfs_per_dim < 2 {
                    return Err(Error::invalid("conventional variant needs >= 2 MFs per dimension"));
                }
            }
            Variant::FcmAnfis => {
                if self.clusters < 2 {
                    return Err(Error::invalid("fcm-anfis needs >= 2 clusters"));
                }
                if self.phase_split == 0 || self.phase_split >= self.epochs {
                    return Err(Error::invalid(format!(
                        "phase_split must satisfy 1 <= phase_split < epochs, got {} of {}",
                        self.phase_split, self.epochs
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-epoch error trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Training RMSE recorded after each epoch's consequent solve.
    pub train_rmse: Vec<f64>,
    /// Validation RMSE per epoch, when a validation set was supplied.
    pub val_rmse: Option<Vec<f64>>,
}

/// Outcome of one consequent solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    /// Residual RMSE of the updated model on the solve data.
    pub rmse: f64,
    /// True when the design matrix was rank deficient and a ridge-regularized
    /// solution was used instead of the plain least-squares one.
    pub regularized: bool,
}

/// Outcome of one antecedent gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GradInfo {
    /// Count of non-finite gradient components that were zeroed.
    pub zeroed_nonfinite: usize,
    /// Samples excluded from the gradient because no rule fired there.
    pub skipped_zero_firing: usize,
}

/// A trained model together with its error history and numeric flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub model: TskModel,
    pub history: TrainHistory,
    /// Epochs whose consequent solve needed ridge regularization.
    pub regularized_solves: usize,
    /// Total non-finite gradient components zeroed across all epochs.
    pub zeroed_gradients: usize,
}

/// Replace every rule's consequent with the global least-squares optimum for
/// the current antecedents.
///
/// The design-matrix row for sample `i` is the concatenation over rules `r`
/// of `normalized_ir * (1, x_i)`, so the solution minimizes the squared error
/// of the full model output. A rank-deficient system falls back to a ridge
/// solve with `lambda = 1e-8 * mean diagonal of AtA` and is flagged.
pub fn solve_consequents(model: &mut TskModel, x: &[Vec<f64>], y: &[f64]) -> Result<SolveInfo> {
    if x.is_empty() {
        return Err(Error::degenerate("consequent solve needs at least one sample"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} inputs for {} targets",
            x.len(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("targets contain non-finite values"));
    }
    let n = x.len();
    let dim = model.input_dim();
    let r = model.rules.len();
    let cols = r * (dim + 1);

    let mut a = DMatrix::zeros(n, cols);
    for (i, xi) in x.iter().enumerate() {
        let out = model.infer(xi)?;
        for (rule, &w) in out.normalized.iter().enumerate() {
            let base = rule * (dim + 1);
            a[(i, base)] = w;
            for (d, &v) in xi.iter().enumerate() {
                a[(i, base + 1 + d)] = w * v;
            }
        }
    }
    let b = DVector::from_column_slice(y);

    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = s_max * f64::EPSILON * n.max(cols) as f64;
    let full_rank = s_max > 0.0 && svd.rank(eps) == cols;

    let (theta, regularized) = if full_rank {
        let sol = svd
            .solve(&b, eps)
            .map_err(|e| Error::degenerate(format!("least-squares solve failed: {e}")))?;
        (sol, false)
    } else {
        let ata = a.transpose() * &a;
        let lambda = 1e-8 * (ata.trace() / cols as f64).max(f64::MIN_POSITIVE);
        let reg = &ata + DMatrix::identity(cols, cols) * lambda;
        let atb = a.transpose() * &b;
        let sol = reg
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&atb))
            .or_else(|| reg.lu().solve(&atb))
            .ok_or_else(|| Error::degenerate("regularized consequent solve failed"))?;
        (sol, true)
    };

    for (rule_idx, rule) in model.rules.iter_mut().enumerate() {
        let base = rule_idx * (dim + 1);
        rule.bias = theta[base];
        for d in 0..dim {
            rule.coeffs[d] = theta[base + 1 + d];
        }
    }

    let mut sse = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let e = model.infer(xi)?.estimate - yi;
        sse += e * e;
    }
    Ok(SolveInfo {
        rmse: (sse / n as f64).sqrt(),
        regularized,
    })
}

/// Derivatives of one membership function's value at `x` with respect to its
/// parameters, in parameter order (`a, b, c, d` or `center, sigma`).
///
/// Trapezoid ramps are differentiated on their open interiors only; exactly
/// at a corner (and on plateaus or outside the support) the subgradient 0 is
/// used. A zero-width ramp contributes no gradient.
fn mf_param_derivs(mf: &MembershipFunction, x: f64) -> Vec<f64> {
    match *mf {
        MembershipFunction::Trapezoid { a, b, c, d } => {
            let mut g = vec![0.0; 4];
            if x > a && x < b {
                let w = b - a;
                if w > 0.0 {
                    g[0] = (x - b) / (w * w);
                    g[1] = (a - x) / (w * w);
                }
            } else if x > c && x < d {
                let w = d - c;
                if w > 0.0 {
                    g[2] = (d - x) / (w * w);
                    g[3] = (x - c) / (w * w);
                }
            }
            g
        }
        MembershipFunction::Gaussian { center, sigma } => {
            let mu = mf.eval(x);
            let z = x - center;
            vec![mu * z / (sigma * sigma), mu * z * z / (sigma * sigma * sigma)]
        }
    }
}

/// Gradient of `E = 1/2 sum_i (estimate_i - y_i)^2` with respect to every
/// antecedent parameter, laid out as `[rule][dim][param]`.
///
/// Samples where no rule fires take the nearest-rule fallback during
/// inference, which is not differentiable; they are skipped and counted.
/// Non-finite components are zeroed and counted.
pub fn antecedent_gradients(
    model: &TskModel,
    x: &[Vec<f64>],
    y: &[f64],
) -> Result<(Vec<Vec<Vec<f64>>>, GradInfo)> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "{} inputs for {} targets",
            x.len(),
            y.len()
        )));
    }
    let dim = model.input_dim();
    let mut grads: Vec<Vec<Vec<f64>>> = model
        .rules
        .iter()
        .map(|rule| {
            rule.antecedents
                .iter()
                .map(|mf| match mf {
                    MembershipFunction::Trapezoid { .. } => vec![0.0; 4],
                    MembershipFunction::Gaussian { .. } => vec![0.0; 2],
                })
                .collect()
        })
        .collect();
    let mut info = GradInfo::default();

    for (xi, &yi) in x.iter().zip(y) {
        let out = model.infer(xi)?;
        if out.zero_firing {
            info.skipped_zero_firing += 1;
            continue;
        }
        let total: f64 = out.firing.iter().sum();
        let err = out.estimate - yi;
        for (r, rule) in model.rules.iter().enumerate() {
            // d estimate / d firing_r, with all other firings held fixed
            let dy_df = (rule.consequent_at(xi) - out.estimate) / total;
            let mu: Vec<f64> = rule
                .antecedents
                .iter()
                .zip(xi)
                .map(|(mf, &v)| mf.eval(v))
                .collect();
            for d in 0..dim {
                // firing with dimension d left out
                let rest: f64 = (0..dim).filter(|&k| k != d).map(|k| mu[k]).product();
                let derivs = mf_param_derivs(&rule.antecedents[d], xi[d]);
                for (p, dmu) in derivs.into_iter().enumerate() {
                    grads[r][d][p] += err * dy_df * rest * dmu;
                }
            }
        }
    }

    for rule in &mut grads {
        for dim_grads in rule {
            for g in dim_grads {
                if !g.is_finite() {
                    *g = 0.0;
                    info.zeroed_nonfinite += 1;
                }
            }
        }
    }
    Ok((grads, info))
}

/// One gradient-descent step `p <- p - lr * dE/dp` on every antecedent
/// parameter, followed by invariant repair (trapezoid ordering restored by
/// clipping, Gaussian sigma floored at `1e-6 x` the per-dimension data range).
pub fn antecedent_gradient_step(
    model: &mut TskModel,
    x: &[Vec<f64>],
    y: &[f64],
    lr: f64,
) -> Result<GradInfo> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::invalid("learning rate must be finite and >= 0"));
    }
    let (grads, info) = antecedent_gradients(model, x, y)?;
    let floors = sigma_floors(x, model.input_dim());
    for (rule, rule_grads) in model.rules.iter_mut().zip(&grads) {
        for (d, (mf, mf_grads)) in rule.antecedents.iter_mut().zip(rule_grads).enumerate() {
            match mf {
                MembershipFunction::Trapezoid { a, b, c, d } => {
                    *a -= lr * mf_grads[0];
                    *b -= lr * mf_grads[1];
                    *c -= lr * mf_grads[2];
                    *d -= lr * mf_grads[3];
                }
                MembershipFunction::Gaussian { center, sigma } => {
                    *center -= lr * mf_grads[0];
                    *sigma -= lr * mf_grads[1];
                }
            }
            mf.repair(floors[d]);
        }
    }
    Ok(info)
}

/// `1e-6 x` data range per dimension, 1e-6 absolute for a constant column.
fn sigma_floors(x: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let min = x.iter().map(|row| row[d]).fold(f64::INFINITY, f64::min);
            let max = x.iter().map(|row| row[d]).fold(f64::NEG_INFINITY, f64::max);
            let range = max - min;
            if range > 0.0 {
                1e-6 * range
            } else {
                1e-6
            }
        })
        .collect()
}

/// Train a model with the hybrid schedule.
///
/// Conventional: grid-partition the per-feature training ranges, then per
/// epoch solve consequents and step the antecedents. FcmAnfis: cluster once
/// (the clustering iteration cap equals `phase_split`), hold the resulting
/// Gaussian antecedents fixed while solving consequents through epoch
/// `phase_split`, then alternate like the conventional variant. The recorded
/// RMSE for each epoch is the post-solve training RMSE; no gradient step runs
/// after the final solve, so the returned model attains the last recorded
/// value. Training aborts if RMSE exceeds 10x the first epoch's.
pub fn train(
    input_names: &[String],
    x: &[Vec<f64>],
    y: &[f64],
    config: &TrainConfig,
    validation: Option<(&[Vec<f64>], &[f64])>,
) -> Result<TrainOutput> {
    config.validate()?;
    let n = x.len();
    if n < 3 {
        return Err(Error::degenerate(format!("training needs at least 3 samples, got {n}")));
    }
    if n != y.len() {
        return Err(Error::invalid(format!("{n} inputs for {} targets", y.len())));
    }
    let dim = input_names.len();
    if dim == 0 {
        return Err(Error::invalid("training needs at least one input feature"));
    }
    for (i, row) in x.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::SchemaMismatch(format!(
                "sample {i} has {} features, expected {dim}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("sample {i} contains non-finite values")));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("targets contain non-finite values"));
    }

    let mut model = match config.variant {
        Variant::Conventional => {
            let ranges: Vec<(f64, f64)> = (0..dim)
                .map(|d| {
                    let min = x.iter().map(|row| row[d]).fold(f64::INFINITY, f64::min);
                    let max = x.iter().map(|row| row[d]).fold(f64::NEG_INFINITY, f64::max);
                    (min, max)
                })
                .collect();
            grid_model(input_names, &ranges, config.mfs_per_dim)?
        }
        Variant::FcmAnfis => {
            let fcm_config = FcmConfig {
                c: config.clusters,
                max_iter: config.phase_split,
                seed: config.seed,
                ..config.fcm.clone()
            };
            let clustering = fcm_cluster(x, &fcm_config)?;
            let mfs = clusters_to_mfs(&clustering, x, fcm_config.m)?;
            let rules = mfs
                .into_iter()
                .map(|antecedents| TskRule::new(antecedents, vec![0.0; dim], 0.0))
                .collect::<Result<Vec<_>>>()?;
            TskModel::new(input_names.to_vec(), rules)?
        }
    };

    let mut train_rmse = Vec::with_capacity(config.epochs);
    let mut val_rmse = validation.map(|_| Vec::with_capacity(config.epochs));
    let mut regularized_solves = 0;
    let mut zeroed_gradients = 0;

    for epoch in 1..=config.epochs {
        let info = solve_consequents(&mut model, x, y)?;
        if info.regularized {
            regularized_solves += 1;
        }
        train_rmse.push(info.rmse);
        if let (Some(track), Some((vx, vy))) = (val_rmse.as_mut(), validation) {
            track.push(rmse_on(&model, vx, vy)?);
        }

        let initial = train_rmse[0];
        if info.rmse > 10.0 * initial {
            return Err(Error::Divergence {
                epoch,
                rmse: info.rmse,
                initial,
            });
        }

        let frozen = config.variant == Variant::FcmAnfis && epoch <= config.phase_split;
        if !frozen && epoch < config.epochs {
            let grad_info = antecedent_gradient_step(&mut model, x, y, config.lr)?;
            zeroed_gradients += grad_info.zeroed_nonfinite;
        }
    }

    Ok(TrainOutput {
        model,
        history: TrainHistory {
            train_rmse,
            val_rmse,
        },
        regularized_solves,
        zeroed_gradients,
    })
}

/// Root-mean-square error of the model on a labelled set.
pub fn rmse_on(model: &TskModel, x: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::invalid("rmse needs equal-length, non-empty inputs"));
    }
    let mut sse = 0.0;
    for (xi, &yi) in x.iter().zip(y) {
        let e = model.infer(xi)?.estimate - yi;
        sse += e * e;
    }
    Ok((sse / x.len() as f64).sqrt())
}

/// Inference lifted over a batch; each element carries the full rule trace.
pub fn predict(model: &TskModel, x: &[Vec<f64>]) -> Result<Vec<InferOutput>> {
    x.iter().map(|xi| model.infer(xi)).collect()
}
