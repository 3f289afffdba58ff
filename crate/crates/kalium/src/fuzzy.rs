//! Membership functions and first-order Takagi-Sugeno inference.
//!
//! This is the forward pass shared by both model variants: grid-partitioned
//! trapezoids and FCM-derived Gaussians both end up as [`TskModel`]s and are
//! evaluated the same way.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Antecedent membership function. Evaluation is always in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MembershipFunction {
    /// Trapezoid with feet `a`, `d` and plateau `[b, c]`, `a <= b <= c <= d`.
    Trapezoid { a: f64, b: f64, c: f64, d: f64 },
    /// `exp(-(x - center)^2 / (2 sigma^2))`, `sigma > 0`.
    Gaussian { center: f64, sigma: f64 },
}

impl MembershipFunction {
    pub fn trapezoid(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite() && d.is_finite()) {
            return Err(Error::invalid("trapezoid parameters must be finite"));
        }
        if !(a <= b && b <= c && c <= d) {
            return Err(Error::invalid(format!(
                "trapezoid requires a <= b <= c <= d, got ({a}, {b}, {c}, {d})"
            )));
        }
        Ok(MembershipFunction::Trapezoid { a, b, c, d })
    }

    pub fn gaussian(center: f64, sigma: f64) -> Result<Self> {
        if !center.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "gaussian requires finite center and sigma > 0, got ({center}, {sigma})"
            )));
        }
        Ok(MembershipFunction::Gaussian { center, sigma })
    }

    /// Membership degree of `x`, in `[0, 1]`.
    ///
    /// The plateau test runs before the ramp tests, so a degenerate ramp
    /// (`a == b` or `c == d`) steps straight to the plateau value at the
    /// shared point instead of dividing by zero.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            MembershipFunction::Trapezoid { a, b, c, d } => {
                if x < a || x > d {
                    0.0
                } else if x >= b && x <= c {
                    1.0
                } else if x < b {
                    (x - a) / (b - a)
                } else {
                    (d - x) / (d - c)
                }
            }
            MembershipFunction::Gaussian { center, sigma } => {
                let t = (x - center) / sigma;
                (-0.5 * t * t).exp()
            }
        }
    }

    /// Location of peak membership: plateau midpoint or Gaussian center.
    pub fn center(&self) -> f64 {
        match *self {
            MembershipFunction::Trapezoid { b, c, .. } => 0.5 * (b + c),
            MembershipFunction::Gaussian { center, .. } => center,
        }
    }

    /// Restore invariants after an unconstrained parameter update: trapezoid
    /// ordering is re-imposed by clipping each corner up to its left
    /// neighbour, Gaussian sigma is floored at `sigma_floor`.
    pub(crate) fn repair(&mut self, sigma_floor: f64) {
        match self {
            MembershipFunction::Trapezoid { a, b, c, d } => {
                *b = b.max(*a);
                *c = c.max(*b);
                *d = d.max(*c);
            }
            MembershipFunction::Gaussian { sigma, .. } => {
                *sigma = sigma.max(sigma_floor);
            }
        }
    }
}

/// One first-order TSK rule: an antecedent MF per input dimension and a
/// linear consequent `bias + coeffs . x` (mM).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TskRule {
    pub antecedents: Vec<MembershipFunction>,
    pub coeffs: Vec<f64>,
    pub bias: f64,
}

impl TskRule {
    pub fn new(antecedents: Vec<MembershipFunction>, coeffs: Vec<f64>, bias: f64) -> Result<Self> {
        if antecedents.is_empty() {
            return Err(Error::invalid("rule needs at least one antecedent"));
        }
        if antecedents.len() != coeffs.len() {
            return Err(Error::invalid(format!(
                "rule has {} antecedents but {} consequent coefficients",
                antecedents.len(),
                coeffs.len()
            )));
        }
        Ok(TskRule {
            antecedents,
            coeffs,
            bias,
        })
    }

    /// Consequent output at `x`.
    pub fn consequent_at(&self, x: &[f64]) -> f64 {
        self.bias
            + self
                .coeffs
                .iter()
                .zip(x)
                .map(|(w, xi)| w * xi)
                .sum::<f64>()
    }

    /// Product t-norm over the per-dimension membership degrees.
    pub fn firing_strength(&self, x: &[f64]) -> f64 {
        self.antecedents
            .iter()
            .zip(x)
            .map(|(mf, &xi)| mf.eval(xi))
            .product()
    }
}

/// A first-order TSK fuzzy model. The t-norm is fixed to the product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TskModel {
    pub input_names: Vec<String>,
    pub rules: Vec<TskRule>,
}

/// Result of evaluating a [`TskModel`] on one input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferOutput {
    /// Estimated output (mM).
    pub estimate: f64,
    /// Raw firing strength per rule, in rule order.
    pub firing: Vec<f64>,
    /// Firing strengths normalized to sum to 1 (one-hot on fallback).
    pub normalized: Vec<f64>,
    /// True when no rule fired and the nearest-center fallback was used.
    pub zero_firing: bool,
}

impl TskModel {
    pub fn new(input_names: Vec<String>, rules: Vec<TskRule>) -> Result<Self> {
        if input_names.is_empty() {
            return Err(Error::invalid("model needs at least one input"));
        }
        if rules.is_empty() {
            return Err(Error::invalid("model needs at least one rule"));
        }
        let dim = input_names.len();
        for (i, rule) in rules.iter().enumerate() {
            if rule.antecedents.len() != dim || rule.coeffs.len() != dim {
                return Err(Error::invalid(format!(
                    "rule {i} has dimension {} but the model has {dim} inputs",
                    rule.antecedents.len()
                )));
            }
        }
        Ok(TskModel { input_names, rules })
    }

    pub fn input_dim(&self) -> usize {
        self.input_names.len()
    }

    /// Evaluate the model at `x`.
    ///
    /// Summation runs in an order keyed on the (firing, consequent) values
    /// themselves, so the estimate is bit-identical under any permutation of
    /// the rule list. When no rule fires (out-of-range input), the rule whose
    /// antecedent centers are nearest to `x` supplies the estimate and the
    /// output is flagged.
    pub fn infer(&self, x: &[f64]) -> Result<InferOutput> {
        if x.len() != self.input_dim() {
            return Err(Error::SchemaMismatch(format!(
                "input has {} values but the model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let n = self.rules.len();
        let firing: Vec<f64> = self.rules.iter().map(|r| r.firing_strength(x)).collect();
        let consequents: Vec<f64> = self.rules.iter().map(|r| r.consequent_at(x)).collect();

        // Value-keyed order makes the sums independent of rule storage order.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| {
            firing[i]
                .total_cmp(&firing[j])
                .then(consequents[i].total_cmp(&consequents[j]))
        });

        let total: f64 = order.iter().map(|&i| firing[i]).sum();
        if total <= 0.0 {
            let fallback = self.nearest_rule(x);
            let mut normalized = vec![0.0; n];
            normalized[fallback] = 1.0;
            return Ok(InferOutput {
                estimate: consequents[fallback],
                firing,
                normalized,
                zero_firing: true,
            });
        }

        let normalized: Vec<f64> = firing.iter().map(|f| f / total).collect();
        let estimate: f64 = order.iter().map(|&i| normalized[i] * consequents[i]).sum();
        Ok(InferOutput {
            estimate,
            firing,
            normalized,
            zero_firing: false,
        })
    }

    /// Rule whose antecedent centers are closest to `x` (squared Euclidean),
    /// ties broken by rule index.
    fn nearest_rule(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, rule) in self.rules.iter().enumerate() {
            let d: f64 = rule
                .antecedents
                .iter()
                .zip(x)
                .map(|(mf, &xi)| {
                    let dx = mf.center() - xi;
                    dx * dx
                })
                .sum();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Lossless JSON (serde_json emits shortest round-trip float forms).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TskModel = serde_json::from_str(text)
            .map_err(|e| Error::invalid(format!("model json: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    /// Re-check every construction invariant (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        let rebuilt = TskModel::new(self.input_names.clone(), self.rules.clone())?;
        for rule in &rebuilt.rules {
            for mf in &rule.antecedents {
                match *mf {
                    MembershipFunction::Trapezoid { a, b, c, d } => {
                        MembershipFunction::trapezoid(a, b, c, d)?;
                    }
                    MembershipFunction::Gaussian { center, sigma } => {
                        MembershipFunction::gaussian(center, sigma)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Evenly spaced, 50%-overlapping trapezoids over each input range.
///
/// With `k` functions per dimension the anchors sit `step = (max-min)/(k-1)`
/// apart and each trapezoid is `(c-3w, c-w, c+w, c+3w)` with `w = step/4`:
/// adjacent ramps are complementary, so total membership is exactly 1
/// everywhere in `[min, max]` (the coverage floor, up to f64 rounding), and
/// neighbouring functions cross at degree 0.5.
pub fn grid_partition(
    input_ranges: &[(f64, f64)],
    mfs_per_dim: usize,
) -> Result<Vec<Vec<MembershipFunction>>> {
    if input_ranges.is_empty() {
        return Err(Error::invalid("grid partition needs at least one dimension"));
    }
    if mfs_per_dim < 2 {
        return Err(Error::invalid("grid partition needs at least 2 MFs per dimension"));
    }
    let mut dims = Vec::with_capacity(input_ranges.len());
    for &(min, max) in input_ranges {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(Error::degenerate(format!(
                "grid partition range [{min}, {max}] is empty or degenerate"
            )));
        }
        let step = (max - min) / (mfs_per_dim - 1) as f64;
        let w = step / 4.0;
        let mfs = (0..mfs_per_dim)
            .map(|i| {
                let c = min + i as f64 * step;
                MembershipFunction::trapezoid(c - 3.0 * w, c - w, c + w, c + 3.0 * w)
            })
            .collect::<Result<Vec<_>>>()?;
        dims.push(mfs);
    }
    Ok(dims)
}

/// Build a zero-consequent TSK model whose rule base is the cross product of
/// the per-dimension grid partitions (`mfs_per_dim^D` rules).
pub fn grid_model(
    input_names: &[String],
    input_ranges: &[(f64, f64)],
    mfs_per_dim: usize,
) -> Result<TskModel> {
    if input_names.len() != input_ranges.len() {
        return Err(Error::invalid(format!(
            "{} input names for {} ranges",
            input_names.len(),
            input_ranges.len()
        )));
    }
    let dims = grid_partition(input_ranges, mfs_per_dim)?;
    let d = dims.len();
    let rule_count = mfs_per_dim.pow(d as u32);
    let mut rules = Vec::with_capacity(rule_count);
    // Odometer over MF indices, first dimension slowest.
    let mut idx = vec![0usize; d];
    loop {
        let antecedents: Vec<MembershipFunction> =
            idx.iter().enumerate().map(|(dim, &i)| dims[dim][i].clone()).collect();
        rules.push(TskRule::new(antecedents, vec![0.0; d], 0.0)?);
        let mut pos = d;
        loop {
            if pos == 0 {
                return TskModel::new(input_names.to_vec(), rules);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < mfs_per_dim {
                break;
            }
            idx[pos] = 0;
        }
    }
}
