//! Feature-selection statistics: mid-rank assignment, Kruskal-Wallis one-way
//! ANOVA on ranks with tie correction, chi-square tail probability, Pearson
//! correlation, and boxplot summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kruskal-Wallis test result. `h` is the rank statistic approximated as
/// chi-square with `df = groups - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwResult {
    pub h: f64,
    pub df: usize,
    pub p: f64,
    /// Tie-correction factor `1 - sum(t^3 - t) / (N^3 - N)` already applied to `h`.
    pub tie_correction: f64,
}

/// Five-number summary plus notch-style 95% CI of the median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Most extreme observations within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// `median -/+ 1.57 iqr / sqrt(n)` (McGill's notch convention).
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub outliers: Vec<f64>,
}

/// Ascending ranks `1..=n`; tied values receive the mean rank of their span.
pub fn rank_midties(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share the midpoint
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Kruskal-Wallis one-way ANOVA on ranks across `groups`, with tie correction.
///
/// When every pooled value is identical the tie correction factor is 0 and
/// there is no variation to test: `h = 0`, `p = 1`.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KwResult> {
    if groups.len() < 2 {
        return Err(Error::invalid("kruskal_wallis needs at least two groups"));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.is_empty() {
            return Err(Error::degenerate(format!("group {i} has zero samples")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("group {i} contains non-finite values")));
        }
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    if n < 3 {
        return Err(Error::invalid("kruskal_wallis needs at least 3 samples in total"));
    }

    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = rank_midties(&pooled);

    let nf = n as f64;
    let grand_mean = (nf + 1.0) / 2.0;
    let mut h = 0.0;
    let mut offset = 0;
    for g in groups {
        let len = g.len();
        let mean_rank: f64 = ranks[offset..offset + len].iter().sum::<f64>() / len as f64;
        h += len as f64 * (mean_rank - grand_mean) * (mean_rank - grand_mean);
        offset += len;
    }
    h *= 12.0 / (nf * (nf + 1.0));

    // tie correction over the pooled sample
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    let correction = 1.0 - tie_sum / (nf * nf * nf - nf);

    let df = groups.len() - 1;
    if correction <= 0.0 {
        // all pooled values identical
        return Ok(KwResult {
            h: 0.0,
            df,
            p: 1.0,
            tie_correction: correction,
        });
    }
    let h = h / correction;
    let p = chi2_sf(h, df)?;
    Ok(KwResult {
        h,
        df,
        p,
        tie_correction: correction,
    })
}

/// Upper-tail probability of the chi-square distribution with `df` degrees of
/// freedom: the regularized upper incomplete gamma function Q(df/2, x/2).
pub fn chi2_sf(x: f64, df: usize) -> Result<f64> {
    if df == 0 {
        return Err(Error::invalid("chi2_sf needs df >= 1"));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(Error::invalid(format!("chi2_sf needs finite x >= 0, got {x}")));
    }
    Ok(gamma_q(df as f64 / 2.0, x / 2.0))
}

const GAMMA_MAX_ITER: usize = 500;

/// Regularized upper incomplete gamma function Q(a, x) for a > 0, x >= 0.
/// Series expansion of P for x < a + 1, Lentz continued fraction for Q
/// otherwise; each converges to machine precision in its region.
fn gamma_q(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if log_prefactor < -745.0 {
        // prefactor underflows: the tail is 0 or 1 depending on the side
        return if x > a { 0.0 } else { 1.0 };
    }
    let prefactor = log_prefactor.exp();
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x, prefactor)
    } else {
        gamma_q_cf(a, x, prefactor)
    }
}

/// P(a, x) = prefactor * sum_{k>=0} x^k / (a (a+1) ... (a+k)).
fn gamma_p_series(a: f64, x: f64, prefactor: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut denom = a;
    for _ in 0..GAMMA_MAX_ITER {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    prefactor * sum
}

/// Q(a, x) via the continued fraction
/// x^a e^-x / Gamma(a) * 1/(x+1-a- 1(1-a)/(x+3-a- ...)), modified Lentz.
fn gamma_q_cf(a: f64, x: f64, prefactor: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut frac = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        frac *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    prefactor * frac
}

/// ln Gamma(z) for z > 0, Lanczos approximation (g = 7, n = 9).
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        // reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z)
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (z + (i + 1) as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid(format!(
            "pearson_r length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::invalid("pearson_r needs at least 2 samples"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::degenerate(
            "pearson_r undefined: an input has zero variance",
        ));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Boxplot summary with type-7 (linear interpolation) quartiles.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::invalid("boxplot_stats needs at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("boxplot_stats needs finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();

    let q1 = quantile_type7(&sorted, 0.25);
    let median = quantile_type7(&sorted, 0.5);
    let q3 = quantile_type7(&sorted, 0.75);
    let iqr = q3 - q1;

    let low_fence = q1 - 1.5 * iqr;
    let high_fence = q3 + 1.5 * iqr;
    // Whiskers reach the most extreme points inside the fences but never
    // cross into the box (they stop at the quartile when every point on that
    // side is an outlier — the usual boxplot convention).
    let whisker_low = sorted
        .iter()
        .copied()
        .find(|&v| v >= low_fence)
        .unwrap_or(sorted[0])
        .min(q1);
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= high_fence)
        .unwrap_or(sorted[n - 1])
        .max(q3);
    let outliers: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|&v| v < low_fence || v > high_fence)
        .collect();

    let notch = 1.57 * iqr / (n as f64).sqrt();
    Ok(BoxStats {
        n,
        median,
        q1,
        q3,
        iqr,
        whisker_low,
        whisker_high,
        ci95_low: median - notch,
        ci95_high: median + notch,
        outliers,
    })
}

/// Type-7 quantile: linear interpolation between order statistics at
/// position (n-1) p.
fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}
