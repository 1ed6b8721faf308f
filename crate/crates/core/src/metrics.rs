//! Evaluation metrics: MAE, feature-space ordinality, systematic bias at the
//! age distribution's tails, Pearson correlation, and Welch's t-test.
//!
//! The ordinality score asks whether embedding geometry mirrors label order:
//! group samples by age class, take each class's feature centroid, measure
//! Manhattan distances from the first (youngest) class's centroid to every
//! later one, and correlate those distances with the age offsets. A score
//! near 1 means the embedding spreads linearly with age. Note the score is
//! anchored at the first class only, so a perfectly order-reversed embedding
//! also scores 1; it is used here exactly as defined.
//!
//! Systematic bias quantifies regression to the mean: SB-L is the mean
//! prediction gap among samples more than one standard deviation below the
//! mean true age, SB-R the same above. Zero on both sides is ideal;
//! overestimation of the young (SB-L > 0) with underestimation of the old
//! (SB-R < 0) is the characteristic bias signature.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{lk_distance, Matrix};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input for {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("insufficient samples in the {tail} tail (true ages beyond one standard deviation)")]
    InsufficientSamples { tail: &'static str },
}

/// Mean absolute error in years.
pub fn mae(pred_ages: &[f64], true_ages: &[f64]) -> Result<f64, MetricsError> {
    if pred_ages.len() != true_ages.len() {
        return Err(MetricsError::LengthMismatch {
            left: pred_ages.len(),
            right: true_ages.len(),
        });
    }
    if pred_ages.is_empty() {
        return Err(MetricsError::EmptyInput("mae"));
    }
    let sum: f64 = pred_ages
        .iter()
        .zip(true_ages)
        .map(|(&p, &t)| (p - t).abs())
        .sum();
    Ok(sum / pred_ages.len() as f64)
}

/// Product-moment correlation. Errors on fewer than two points or zero
/// variance in either argument.
pub fn pearson_corr(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(MetricsError::DegenerateInput(
            "pearson correlation needs at least 2 points".into(),
        ));
    }
    let n = a.len() as f64;
    let mean_a: f64 = a.iter().sum::<f64>() / n;
    let mean_b: f64 = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(MetricsError::DegenerateInput(
            "pearson correlation undefined for zero-variance input".into(),
        ));
    }
    Ok(cov / (var_a.sqrt() * var_b.sqrt()))
}

/// Correlation between embedding-centroid distances and age offsets.
///
/// Samples are grouped by exact age value (callers pass integer classes when
/// class semantics are wanted). Classes are sorted ascending; distances are
/// Manhattan, measured from the first class's centroid.
pub fn ordinality_score(features: &Matrix, ages: &[f64]) -> Result<f64, MetricsError> {
    if features.rows() != ages.len() {
        return Err(MetricsError::LengthMismatch {
            left: features.rows(),
            right: ages.len(),
        });
    }
    if ages.is_empty() {
        return Err(MetricsError::EmptyInput("ordinality_score"));
    }
    if ages.iter().any(|a| !a.is_finite()) {
        return Err(MetricsError::DegenerateInput("non-finite age".into()));
    }
    // Group sample indices by exact age, ascending.
    let mut order: Vec<usize> = (0..ages.len()).collect();
    order.sort_by(|&i, &j| ages[i].partial_cmp(&ages[j]).expect("finite ages"));
    let mut classes: Vec<(f64, Vec<usize>)> = Vec::new();
    for idx in order {
        match classes.last_mut() {
            Some((age, members)) if *age == ages[idx] => members.push(idx),
            _ => classes.push((ages[idx], vec![idx])),
        }
    }
    if classes.len() < 3 {
        return Err(MetricsError::DegenerateInput(format!(
            "ordinality needs at least 3 distinct age classes, found {}",
            classes.len()
        )));
    }
    let d = features.cols();
    let centroids: Vec<Vec<f64>> = classes
        .iter()
        .map(|(_, members)| {
            let mut c = vec![0.0; d];
            for &idx in members {
                for (acc, &v) in c.iter_mut().zip(features.row(idx)) {
                    *acc += v;
                }
            }
            let inv = 1.0 / members.len() as f64;
            for v in &mut c {
                *v *= inv;
            }
            c
        })
        .collect();
    let first_age = classes[0].0;
    let mut dists = Vec::with_capacity(classes.len() - 1);
    let mut offsets = Vec::with_capacity(classes.len() - 1);
    for (i, (age, _)) in classes.iter().enumerate().skip(1) {
        let dist = lk_distance(&centroids[0], &centroids[i], 1.0)
            .expect("centroids share dimensions");
        dists.push(dist);
        offsets.push(age - first_age);
    }
    pearson_corr(&dists, &offsets)
}

/// Mean prediction gap in each one-standard-deviation tail of the true ages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystematicBias {
    /// Mean (pred - true) where true < mean - std.
    pub sb_left: f64,
    /// Mean (pred - true) where true > mean + std.
    pub sb_right: f64,
    pub n_left: usize,
    pub n_right: usize,
}

/// Population mean and standard deviation of the true ages set the tail
/// thresholds; both tails must be nonempty.
pub fn systematic_bias(pred_ages: &[f64], true_ages: &[f64]) -> Result<SystematicBias, MetricsError> {
    if pred_ages.len() != true_ages.len() {
        return Err(MetricsError::LengthMismatch {
            left: pred_ages.len(),
            right: true_ages.len(),
        });
    }
    if pred_ages.is_empty() {
        return Err(MetricsError::EmptyInput("systematic_bias"));
    }
    let n = true_ages.len() as f64;
    let mean: f64 = true_ages.iter().sum::<f64>() / n;
    let var: f64 = true_ages.iter().map(|&t| (t - mean) * (t - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let lo = mean - std;
    let hi = mean + std;
    let mut left_sum = 0.0;
    let mut right_sum = 0.0;
    let mut n_left = 0usize;
    let mut n_right = 0usize;
    for (&p, &t) in pred_ages.iter().zip(true_ages) {
        if t < lo {
            left_sum += p - t;
            n_left += 1;
        } else if t > hi {
            right_sum += p - t;
            n_right += 1;
        }
    }
    if n_left == 0 {
        return Err(MetricsError::InsufficientSamples { tail: "left" });
    }
    if n_right == 0 {
        return Err(MetricsError::InsufficientSamples { tail: "right" });
    }
    Ok(SystematicBias {
        sb_left: left_sum / n_left as f64,
        sb_right: right_sum / n_right as f64,
        n_left,
        n_right,
    })
}

/// Welch's unequal-variance t-test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTTest {
    pub t: f64,
    /// Welch-Satterthwaite degrees of freedom.
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Two-sided Welch's t-test with sample (n-1) variances.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<WelchTTest, MetricsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricsError::DegenerateInput(
            "welch t-test needs at least 2 samples per group".into(),
        ));
    }
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let mean_a = a.iter().sum::<f64>() / na;
    let mean_b = b.iter().sum::<f64>() / nb;
    let var_a = a.iter().map(|&x| (x - mean_a) * (x - mean_a)).sum::<f64>() / (na - 1.0);
    let var_b = b.iter().map(|&x| (x - mean_b) * (x - mean_b)).sum::<f64>() / (nb - 1.0);
    if var_a == 0.0 && var_b == 0.0 {
        return Err(MetricsError::DegenerateInput(
            "welch t-test undefined when both sample variances are zero".into(),
        ));
    }
    let sa = var_a / na;
    let sb = var_b / nb;
    let se = (sa + sb).sqrt();
    let t = (mean_a - mean_b) / se;
    let df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    // Two-sided p = I_{df/(df+t^2)}(df/2, 1/2).
    let p = regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
    Ok(WelchTTest { t, df, p })
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Pearson correlation between per-group mean gaps and severity ranks.
pub fn severity_correlation(group_means: &[f64], ranks: &[f64]) -> Result<f64, MetricsError> {
    if group_means.len() < 3 {
        return Err(MetricsError::DegenerateInput(
            "severity correlation needs at least 3 groups".into(),
        ));
    }
    pearson_corr(group_means, ranks)
}

const BETA_MAX_ITER: usize = 300;
const BETA_EPS: f64 = 1e-12;

/// Regularized incomplete beta `I_x(a, b)` via Lentz's continued fraction,
/// switching to the symmetric form when `x` is past the distribution bulk.
/// Converges to `1e-12` within a documented 300-iteration cap.
fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - (b * (1.0 - x).ln() + a * x.ln() - ln_beta(a, b)).exp()
            * beta_continued_fraction(1.0 - x, b, a)
            / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    let tiny = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < BETA_EPS {
            break;
        }
    }
    h
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lanczos approximation (g = 7, 9 coefficients).
fn ln_gamma(x: f64) -> f64 {
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
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, &c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Headline evaluation record for one trained model on one test set.
///
/// Metric preconditions can fail independently (a tail may be empty, the
/// test set may hold too few classes); failures land in `metric_errors`
/// without blocking the other fields.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub ordinality: Option<f64>,
    pub sb_left: Option<f64>,
    pub sb_right: Option<f64>,
    pub n_left: usize,
    pub n_right: usize,
    /// Sample count per rounded integer age.
    pub per_class_counts: BTreeMap<i64, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metric_errors: BTreeMap<String, String>,
}

/// Per-severity-group evaluation: mean prediction gaps, their correlation
/// with severity rank, and the pairwise Welch p-value matrix (symmetric,
/// unit diagonal).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GroupReport {
    /// Group labels in severity order.
    pub labels: Vec<String>,
    /// Mean (pred - true) per group, years.
    pub mean_gap: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub severity_correlation: Option<f64>,
    pub p_values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metric_errors: BTreeMap<String, String>,
}

/// Build a [`GroupReport`] from per-group prediction gaps listed in severity
/// order (rank 1 = least severe). Degenerate pairwise tests record an error
/// and report p = 1.
pub fn severity_report(groups: &[(String, Vec<f64>)]) -> Result<GroupReport, MetricsError> {
    if groups.is_empty() {
        return Err(MetricsError::EmptyInput("severity_report"));
    }
    let g = groups.len();
    let labels: Vec<String> = groups.iter().map(|(l, _)| l.clone()).collect();
    let mut errors = BTreeMap::new();
    let mut mean_gap = Vec::with_capacity(g);
    let mut group_sizes = Vec::with_capacity(g);
    for (label, gaps) in groups {
        if gaps.is_empty() {
            return Err(MetricsError::DegenerateInput(format!("group {label} is empty")));
        }
        mean_gap.push(gaps.iter().sum::<f64>() / gaps.len() as f64);
        group_sizes.push(gaps.len());
    }
    let ranks: Vec<f64> = (1..=g).map(|r| r as f64).collect();
    let corr = match severity_correlation(&mean_gap, &ranks) {
        Ok(c) => Some(c),
        Err(e) => {
            errors.insert("severity_correlation".into(), e.to_string());
            None
        }
    };
    let mut p_values = vec![vec![1.0; g]; g];
    for i in 0..g {
        for j in (i + 1)..g {
            let p = match welch_ttest(&groups[i].1, &groups[j].1) {
                Ok(res) => res.p,
                Err(e) => {
                    errors.insert(
                        format!("welch_ttest[{},{}]", labels[i], labels[j]),
                        e.to_string(),
                    );
                    1.0
                }
            };
            p_values[i][j] = p;
            p_values[j][i] = p;
        }
    }
    Ok(GroupReport {
        labels,
        mean_gap,
        group_sizes,
        severity_correlation: corr,
        p_values,
        metric_errors: errors,
    })
}
