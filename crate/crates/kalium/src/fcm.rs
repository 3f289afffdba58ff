//! Fuzzy c-means clustering, used to place the antecedents of the
//! cluster-initialized model variant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fuzzy::MembershipFunction;

/// FCM hyperparameters. Defaults: 3 clusters, fuzziness 2, tolerance 1e-5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    /// Cluster count, >= 2.
    pub c: usize,
    /// Fuzziness exponent, > 1.
    pub m: f64,
    /// Convergence threshold on max |delta U|, > 0.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Seed for center initialization.
    pub seed: u64,
}

impl Default for FcmConfig {
    fn default() -> Self {
        FcmConfig {
            c: 3,
            m: 2.0,
            tol: 1e-5,
            max_iter: 100,
            seed: 0,
        }
    }
}

impl FcmConfig {
    fn validate(&self) -> Result<()> {
        if self.c < 2 {
            return Err(Error::invalid("fcm needs c >= 2 clusters"));
        }
        if !(self.m > 1.0) || !self.m.is_finite() {
            return Err(Error::invalid("fcm fuzziness m must be finite and > 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("fcm tolerance must be > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("fcm max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// Converged clustering: centers, fuzzy partition, and the objective trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmResult {
    /// c x D cluster centers.
    pub centers: Vec<Vec<f64>>,
    /// n x c partition matrix; each row sums to 1.
    pub u: Vec<Vec<f64>>,
    /// Objective J = sum u^m d^2 per iteration, entry 0 from the initial
    /// centers. Non-increasing.
    pub objective_history: Vec<f64>,
    /// Number of center updates performed.
    pub iterations: usize,
}

/// Standard FCM alternation with seeded initialization from `c` distinct
/// data points. Stops when `max |delta U| < tol` or at `max_iter`.
pub fn fcm_cluster(data: &[Vec<f64>], config: &FcmConfig) -> Result<FcmResult> {
    config.validate()?;
    let n = data.len();
    if n <= config.c {
        return Err(Error::degenerate(format!(
            "fcm needs more points than clusters: n = {n}, c = {}",
            config.c
        )));
    }
    let dim = data[0].len();
    if dim == 0 {
        return Err(Error::invalid("fcm data has zero dimensions"));
    }
    for (i, row) in data.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::invalid(format!(
                "fcm data row {i} has {} values, expected {dim}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("fcm data row {i} contains non-finite values")));
        }
    }

    // Distinct points only: initializing two centers on the same coordinates
    // would never separate them.
    let mut unique: Vec<usize> = Vec::new();
    for i in 0..n {
        if !unique.iter().any(|&j| data[j] == data[i]) {
            unique.push(i);
        }
    }
    if unique.len() < config.c {
        return Err(Error::degenerate(format!(
            "fcm needs at least {} distinct points, found {}",
            config.c,
            unique.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let picks = rand::seq::index::sample(&mut rng, unique.len(), config.c);
    let mut centers: Vec<Vec<f64>> = picks.iter().map(|k| data[unique[k]].clone()).collect();

    let mut u = partition_from_centers(data, &centers, config.m);
    let mut history = vec![objective(data, &u, &centers, config.m)];
    let mut iterations = 0;

    for iter in 1..=config.max_iter {
        centers = centers_from_partition(data, &u, config.m, &centers);
        let u_next = partition_from_centers(data, &centers, config.m);
        history.push(objective(data, &u_next, &centers, config.m));
        let delta = max_abs_delta(&u, &u_next);
        u = u_next;
        iterations = iter;
        if delta < config.tol {
            break;
        }
    }

    Ok(FcmResult {
        centers,
        u,
        objective_history: history,
        iterations,
    })
}

/// Membership update: `u_ik = 1 / sum_j (d_ik / d_ij)^(2/(m-1))`. A point
/// coinciding with one or more centers gets its membership split equally
/// among exactly those centers.
pub fn partition_from_centers(data: &[Vec<f64>], centers: &[Vec<f64>], m: f64) -> Vec<Vec<f64>> {
    let exponent = 1.0 / (m - 1.0);
    data.iter()
        .map(|x| {
            let d2: Vec<f64> = centers.iter().map(|c| sq_dist(x, c)).collect();
            let zeros: Vec<usize> = (0..d2.len()).filter(|&k| d2[k] == 0.0).collect();
            if !zeros.is_empty() {
                let share = 1.0 / zeros.len() as f64;
                let mut row = vec![0.0; d2.len()];
                for k in zeros {
                    row[k] = share;
                }
                return row;
            }
            (0..d2.len())
                .map(|k| {
                    let s: f64 = d2.iter().map(|&dj| (d2[k] / dj).powf(exponent)).sum();
                    1.0 / s
                })
                .collect()
        })
        .collect()
}

/// Center update: `u^m`-weighted mean per cluster. A cluster with zero total
/// weight keeps its previous center.
fn centers_from_partition(
    data: &[Vec<f64>],
    u: &[Vec<f64>],
    m: f64,
    previous: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let c = previous.len();
    let dim = previous[0].len();
    let mut centers = vec![vec![0.0; dim]; c];
    let mut weights = vec![0.0; c];
    for (x, row) in data.iter().zip(u) {
        for k in 0..c {
            let w = row[k].powf(m);
            weights[k] += w;
            for d in 0..dim {
                centers[k][d] += w * x[d];
            }
        }
    }
    for k in 0..c {
        if weights[k] > 0.0 {
            for d in 0..dim {
                centers[k][d] /= weights[k];
            }
        } else {
            centers[k] = previous[k].clone();
        }
    }
    centers
}

/// J = sum over points and clusters of `u^m d^2`.
fn objective(data: &[Vec<f64>], u: &[Vec<f64>], centers: &[Vec<f64>], m: f64) -> f64 {
    data.iter()
        .zip(u)
        .map(|(x, row)| {
            row.iter()
                .zip(centers)
                .map(|(&uik, c)| uik.powf(m) * sq_dist(x, c))
                .sum::<f64>()
        })
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn max_abs_delta(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}

/// One Gaussian antecedent per cluster per dimension: center at the cluster
/// center, width from the membership-weighted spread, floored at
/// `1e-6 x feature range` (1e-6 absolute for a constant feature) so the
/// resulting MF stays evaluable.
pub fn clusters_to_mfs(result: &FcmResult, data: &[Vec<f64>], m: f64) -> Result<Vec<Vec<MembershipFunction>>> {
    if result.u.len() != data.len() {
        return Err(Error::invalid(format!(
            "partition has {} rows for {} data points",
            result.u.len(),
            data.len()
        )));
    }
    let dim = result.centers.first().map_or(0, Vec::len);
    let mut sigma_floor = vec![1e-6; dim];
    for d in 0..dim {
        let min = data.iter().map(|x| x[d]).fold(f64::INFINITY, f64::min);
        let max = data.iter().map(|x| x[d]).fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        if range > 0.0 {
            sigma_floor[d] = 1e-6 * range;
        }
    }

    let mut mfs = Vec::with_capacity(result.centers.len());
    for (k, center) in result.centers.iter().enumerate() {
        let weight: f64 = result.u.iter().map(|row| row[k].powf(m)).sum();
        let mut per_dim = Vec::with_capacity(dim);
        for d in 0..dim {
            let spread: f64 = result
                .u
                .iter()
                .zip(data)
                .map(|(row, x)| row[k].powf(m) * (x[d] - center[d]).powi(2))
                .sum();
            let sigma = if weight > 0.0 {
                (spread / weight).sqrt()
            } else {
                0.0
            };
            let sigma = if sigma.is_finite() {
                sigma.max(sigma_floor[d])
            } else {
                sigma_floor[d]
            };
            per_dim.push(MembershipFunction::gaussian(center[d], sigma)?);
        }
        mfs.push(per_dim);
    }
    Ok(mfs)
}
