//! Synthetic ordinal datasets, stratified splitting/oversampling, and the
//! CSV interchange format.
//!
//! Each sample's features encode a latent age through per-dimension
//! monotone response curves plus Gaussian noise; remaining dimensions are
//! unit-normal distractors. The signal dimensions come in pairs whose
//! saturating bends cancel, so while no single dimension is a linear
//! function of age, the Manhattan geometry of the clean signal block grows
//! exactly linearly with age. That keeps the task nonlinear per coordinate
//! while making embedding ordinality measurable without bias.
//!
//! Severity datasets model clinical groups as an additive latent-age offset:
//! features are generated from `chron_age + gap_offset`, so a good age model
//! should recover the configured gaps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::Matrix;
use crate::rng::RngState;

// Stream ids per generator purpose; severity groups get a block each.
const STREAM_SIGNAL_SHAPES: u64 = 1;
const STREAM_AGES: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SPLIT: u64 = 4;
const STREAM_SEVERITY_BASE: u64 = 100;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("empty dataset for {0}")]
    EmptyDataset(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// One observation: features, the supervised chronological age, the
/// generator's latent age (not serialized), and an optional severity group.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub chron_age: f64,
    pub brain_age: f64,
    pub group: Option<String>,
}

/// A uniform-dimension collection of samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub dim: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ages(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.chron_age).collect()
    }

    pub fn features_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.len() * self.dim);
        for s in &self.samples {
            data.extend_from_slice(&s.features);
        }
        Matrix::from_vec(self.len(), self.dim, data)
    }
}

/// How ages are distributed over the configured range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AgeDistribution {
    /// Uniform over the range; isolates tail effects from imbalance.
    #[default]
    Uniform,
    /// Mixture of normals mimicking pooled multi-site lifespan cohorts,
    /// resampled into the range.
    Skewed,
}

// (mean, std, weight) components for the skewed lifespan mixture.
const SKEWED_MIXTURE: [(f64, f64, f64); 5] = [
    (67.5, 10.8, 4132.0),
    (27.9, 20.7, 1432.0),
    (37.6, 15.4, 1101.0),
    (48.8, 16.5, 536.0),
    (26.1, 7.0, 176.0),
];

/// Generator settings for a lifespan-style cohort.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    /// Feature dimension.
    pub d: usize,
    /// Inclusive age range in years.
    pub age_range: (f64, f64),
    /// Standard deviation of the noise added to signal dimensions.
    pub noise_sigma: f64,
    /// Leading dimensions that carry age signal; the rest are distractors.
    pub signal_dims: usize,
    /// Fraction of samples keeping a fractional age (the rest are integers).
    pub non_integer_fraction: f64,
    /// Fraction of samples whose signal noise is drawn at `outlier_scale`
    /// times `noise_sigma` (heavy-tailed acquisition artifacts).
    pub outlier_fraction: f64,
    pub outlier_scale: f64,
    pub age_distribution: AgeDistribution,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            d: 32,
            age_range: (8.0, 95.0),
            noise_sigma: 0.1,
            signal_dims: 8,
            non_integer_fraction: 0.1,
            outlier_fraction: 0.1,
            outlier_scale: 8.0,
            age_distribution: AgeDistribution::Uniform,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n == 0 {
            return Err(DataError::InvalidConfig("n must be positive".into()));
        }
        if self.d == 0 || self.signal_dims == 0 || self.signal_dims > self.d {
            return Err(DataError::InvalidConfig(format!(
                "need 0 < signal_dims <= d, got signal_dims={} d={}",
                self.signal_dims, self.d
            )));
        }
        if !(self.age_range.0 < self.age_range.1) {
            return Err(DataError::InvalidConfig(format!(
                "age_range must satisfy lo < hi, got {:?}",
                self.age_range
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(DataError::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.non_integer_fraction) {
            return Err(DataError::InvalidConfig(
                "non_integer_fraction must be in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) || !(self.outlier_scale >= 1.0) {
            return Err(DataError::InvalidConfig(
                "outlier_fraction must be in [0, 1] and outlier_scale >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One severity group: label, sample count, and the latent-age offset in
/// years added on top of chronological age.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSpec {
    pub label: String,
    pub count: usize,
    pub gap_offset: f64,
}

/// Settings for a severity cohort: ordered groups (least to most severe)
/// over a base generator config. Offsets must be nondecreasing with rank.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeverityConfig {
    pub groups: Vec<GroupSpec>,
    pub base: SynthConfig,
}

impl SeverityConfig {
    /// Five groups with gaps 0/1/2/4/6 years over a late-life age range.
    pub fn default_groups(base: SynthConfig) -> Self {
        let groups = [
            ("hc", 200, 0.0),
            ("hc-mci", 120, 1.0),
            ("mci-stable", 160, 2.0),
            ("mci-ad", 120, 4.0),
            ("ad", 120, 6.0),
        ]
        .into_iter()
        .map(|(label, count, gap_offset)| GroupSpec {
            label: label.to_string(),
            count,
            gap_offset,
        })
        .collect();
        Self { groups, base }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.base.validate()?;
        if self.groups.is_empty() {
            return Err(DataError::InvalidConfig("severity needs groups".into()));
        }
        if self.groups.iter().any(|g| g.count == 0) {
            return Err(DataError::InvalidConfig("group counts must be positive".into()));
        }
        if self
            .groups
            .windows(2)
            .any(|w| w[0].gap_offset > w[1].gap_offset)
        {
            return Err(DataError::InvalidConfig(
                "gap offsets must be nondecreasing with severity rank".into(),
            ));
        }
        Ok(())
    }
}

// Monotone response curve for one signal dimension. Dimensions come in
// pairs sharing (scale, steepness, center, bend): one adds the saturating
// bend, the other subtracts it, so pair sums stay linear in age. bend < 1
// keeps both branches strictly increasing.
#[derive(Debug, Clone)]
struct SignalShape {
    offset: f64,
    scale: f64,
    steepness: f64,
    center: f64,
    bend: f64,
    bend_sign: f64,
}

impl SignalShape {
    fn eval(&self, age: f64, lo: f64, hi: f64) -> f64 {
        let t = (age - lo) / (hi - lo);
        let s = (self.bend / self.steepness) * (self.steepness * (t - self.center)).tanh();
        self.offset + self.scale * (t + self.bend_sign * s)
    }
}

fn signal_shapes(config: &SynthConfig) -> Vec<SignalShape> {
    let mut rng = RngState::new(config.seed, STREAM_SIGNAL_SHAPES).rng();
    let mut shapes = Vec::with_capacity(config.signal_dims);
    let pairs = config.signal_dims / 2;
    for _ in 0..pairs {
        let scale = rng.random_range(0.5..1.5);
        let steepness = rng.random_range(2.0..6.0);
        let center = rng.random_range(0.2..0.8);
        let bend = rng.random_range(0.1..0.9);
        let offset_a = rng.random_range(-0.5..0.5);
        let offset_b = rng.random_range(-0.5..0.5);
        shapes.push(SignalShape {
            offset: offset_a,
            scale,
            steepness,
            center,
            bend,
            bend_sign: 1.0,
        });
        shapes.push(SignalShape {
            offset: offset_b,
            scale,
            steepness,
            center,
            bend,
            bend_sign: -1.0,
        });
    }
    if config.signal_dims % 2 == 1 {
        shapes.push(SignalShape {
            offset: rng.random_range(-0.5..0.5),
            scale: rng.random_range(0.5..1.5),
            steepness: 1.0,
            center: 0.5,
            bend: 0.0,
            bend_sign: 1.0,
        });
    }
    shapes
}

fn draw_age(config: &SynthConfig, rng: &mut impl Rng) -> f64 {
    let (lo, hi) = config.age_range;
    let raw = match config.age_distribution {
        AgeDistribution::Uniform => rng.random_range(lo..hi),
        AgeDistribution::Skewed => {
            let total: f64 = SKEWED_MIXTURE.iter().map(|c| c.2).sum();
            loop {
                let mut pick = rng.random_range(0.0..total);
                let mut chosen = &SKEWED_MIXTURE[0];
                for comp in &SKEWED_MIXTURE {
                    if pick < comp.2 {
                        chosen = comp;
                        break;
                    }
                    pick -= comp.2;
                }
                let normal = Normal::new(chosen.0, chosen.1).expect("positive std");
                let v = normal.sample(rng);
                if (lo..=hi).contains(&v) {
                    break v;
                }
            }
        }
    };
    if rng.random_range(0.0..1.0) < config.non_integer_fraction {
        raw
    } else {
        raw.round().clamp(lo, hi)
    }
}

fn features_for(
    brain_age: f64,
    config: &SynthConfig,
    shapes: &[SignalShape],
    noise: &mut impl Rng,
) -> Vec<f64> {
    let (lo, hi) = config.age_range;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    // One heavy-tail draw per sample corrupts all its signal dimensions.
    let sigma = if config.noise_sigma > 0.0
        && config.outlier_fraction > 0.0
        && noise.random_range(0.0..1.0) < config.outlier_fraction
    {
        config.noise_sigma * config.outlier_scale
    } else {
        config.noise_sigma
    };
    let mut features = Vec::with_capacity(config.d);
    for shape in shapes {
        let clean = shape.eval(brain_age, lo, hi);
        let eps = if sigma > 0.0 {
            sigma * unit.sample(noise)
        } else {
            0.0
        };
        features.push(clean + eps);
    }
    for _ in config.signal_dims..config.d {
        features.push(unit.sample(noise));
    }
    features
}

/// Generate a healthy lifespan-style cohort: latent age equals
/// chronological age. Pure function of the config (including its seed).
pub fn generate_lifespan(config: &SynthConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let shapes = signal_shapes(config);
    let mut age_rng = RngState::new(config.seed, STREAM_AGES).rng();
    let mut noise_rng = RngState::new(config.seed, STREAM_NOISE).rng();
    let mut dataset = Dataset::new(config.d);
    for _ in 0..config.n {
        let age = draw_age(config, &mut age_rng);
        let features = features_for(age, config, &shapes, &mut noise_rng);
        dataset.samples.push(Sample {
            features,
            chron_age: age,
            brain_age: age,
            group: None,
        });
    }
    Ok(dataset)
}

/// Generate severity groups: per group, latent age is chronological age plus
/// the configured offset, and features are produced from the latent age with
/// the same response curves as [`generate_lifespan`] under the same seed.
pub fn generate_severity(config: &SeverityConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    let shapes = signal_shapes(&config.base);
    let mut dataset = Dataset::new(config.base.d);
    for (g, group) in config.groups.iter().enumerate() {
        let stream = STREAM_SEVERITY_BASE + 2 * g as u64;
        let mut age_rng = RngState::new(config.base.seed, stream).rng();
        let mut noise_rng = RngState::new(config.base.seed, stream + 1).rng();
        for _ in 0..group.count {
            let age = draw_age(&config.base, &mut age_rng);
            let brain_age = age + group.gap_offset;
            let features = features_for(brain_age, &config.base, &shapes, &mut noise_rng);
            dataset.samples.push(Sample {
                features,
                chron_age: age,
                brain_age,
                group: Some(group.label.clone()),
            });
        }
    }
    Ok(dataset)
}

/// Round half away from zero, the fixed integer-class rule.
pub fn rounded_age(age: f64) -> i64 {
    age.round() as i64
}

/// Four-year age bin index anchored at age 8 (8-12, 12-16, ...).
pub fn age_bin(age: f64) -> i64 {
    (((age - 8.0) / 4.0).floor() as i64).max(0)
}

/// All integer class ages spanning the rounded range of `ages`, inclusive,
/// even where intermediate integers have no samples.
pub fn integer_class_ages(ages: &[f64]) -> Result<Vec<f64>, DataError> {
    if ages.is_empty() {
        return Err(DataError::EmptyDataset("integer_class_ages"));
    }
    let lo = ages.iter().map(|&a| rounded_age(a)).min().expect("nonempty");
    let hi = ages.iter().map(|&a| rounded_age(a)).max().expect("nonempty");
    Ok((lo..=hi).map(|a| a as f64).collect())
}

/// Class index of an age given consecutive integer `class_ages`, clamped to
/// the valid range for out-of-range inputs.
pub fn class_index(age: f64, class_ages: &[f64]) -> usize {
    let lo = class_ages[0] as i64;
    let idx = rounded_age(age) - lo;
    idx.clamp(0, class_ages.len() as i64 - 1) as usize
}

/// Integer-age class labels for every sample plus the class-age vector
/// covering the rounded range.
pub fn round_to_classes(dataset: &Dataset) -> Result<(Vec<usize>, Vec<f64>), DataError> {
    let ages = dataset.ages();
    let class_ages = integer_class_ages(&ages)?;
    let labels = ages.iter().map(|&a| class_index(a, &class_ages)).collect();
    Ok((labels, class_ages))
}

/// Oversampling strata: integer-age classes for classification, four-year
/// age bins for regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OversampleMode {
    ByClass,
    ByAgeBin,
}

/// Split by per-bin apportioning: within each four-year age bin, samples are
/// shuffled (seeded) and divided by the largest-remainder rule, so the three
/// outputs partition the input exactly.
pub fn stratified_split(
    dataset: &Dataset,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset("stratified_split"));
    }
    let (ft, fv, fe) = fractions;
    if !(ft >= 0.0 && fv >= 0.0 && fe >= 0.0) {
        return Err(DataError::InvalidConfig("fractions must be nonnegative".into()));
    }
    if ((ft + fv + fe) - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidConfig(format!(
            "fractions must sum to 1, got {}",
            ft + fv + fe
        )));
    }
    let mut bins: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (idx, s) in dataset.samples.iter().enumerate() {
        bins.entry(age_bin(s.chron_age)).or_default().push(idx);
    }
    let mut rng = RngState::new(seed, STREAM_SPLIT).rng();
    let mut train = Dataset::new(dataset.dim);
    let mut val = Dataset::new(dataset.dim);
    let mut test = Dataset::new(dataset.dim);
    for indices in bins.values() {
        let mut indices = indices.clone();
        // Fisher-Yates with the shared stream keeps bin order deterministic.
        for i in (1..indices.len()).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        let n = indices.len();
        let counts = largest_remainder(n, &[ft, fv, fe]);
        let (a, b) = (counts[0], counts[0] + counts[1]);
        for &idx in &indices[..a] {
            train.samples.push(dataset.samples[idx].clone());
        }
        for &idx in &indices[a..b] {
            val.samples.push(dataset.samples[idx].clone());
        }
        for &idx in &indices[b..] {
            test.samples.push(dataset.samples[idx].clone());
        }
    }
    Ok((train, val, test))
}

// Apportion n into parts proportional to weights, exactly summing to n;
// remainders break ties toward earlier parts.
fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let ideals: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = ideals.iter().map(|&x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| {
        let ri = ideals[i] - ideals[i].floor();
        let rj = ideals[j] - ideals[j].floor();
        rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
    });
    for k in 0..(n - assigned) {
        counts[order[k % order.len()]] += 1;
    }
    counts
}

/// Resample every stratum with replacement up to the largest stratum's
/// count. Every original sample appears at least once; strata are emitted in
/// ascending key order, originals first.
pub fn stratified_oversample(
    dataset: &Dataset,
    mode: OversampleMode,
    rng: &mut impl Rng,
) -> Result<Dataset, DataError> {
    if dataset.is_empty() {
        return Err(DataError::EmptyDataset("stratified_oversample"));
    }
    let mut strata: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (idx, s) in dataset.samples.iter().enumerate() {
        let key = match mode {
            OversampleMode::ByClass => rounded_age(s.chron_age),
            OversampleMode::ByAgeBin => age_bin(s.chron_age),
        };
        strata.entry(key).or_default().push(idx);
    }
    let target = strata.values().map(Vec::len).max().expect("nonempty");
    let mut out = Dataset::new(dataset.dim);
    for indices in strata.values() {
        for &idx in indices {
            out.samples.push(dataset.samples[idx].clone());
        }
        for _ in indices.len()..target {
            let pick = indices[rng.random_range(0..indices.len())];
            out.samples.push(dataset.samples[pick].clone());
        }
    }
    Ok(out)
}

/// Serialize to the interchange CSV: header `age,group,f0,...`, empty group
/// for ungrouped samples, LF endings, round-trip float formatting.
pub fn dataset_to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    out.push_str("age,group");
    for j in 0..dataset.dim {
        let _ = write!(out, ",f{j}");
    }
    out.push('\n');
    for s in &dataset.samples {
        let _ = write!(out, "{}", s.chron_age);
        out.push(',');
        if let Some(g) = &s.group {
            out.push_str(g);
        }
        for v in &s.features {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    fs::write(path, dataset_to_csv(dataset))?;
    Ok(())
}

/// Parse the interchange CSV, rejecting ragged rows and malformed numbers
/// with the offending line number. Latent age is not stored in the format,
/// so it is read back equal to the chronological age.
pub fn dataset_from_csv(text: &str) -> Result<Dataset, DataError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::Csv {
        line: 1,
        message: "missing header".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "age" || cols[1] != "group" {
        return Err(DataError::Csv {
            line: 1,
            message: "header must be age,group,f0,...".into(),
        });
    }
    for (j, col) in cols[2..].iter().enumerate() {
        if *col != format!("f{j}") {
            return Err(DataError::Csv {
                line: 1,
                message: format!("expected column f{j}, found {col}"),
            });
        }
    }
    let dim = cols.len() - 2;
    let mut dataset = Dataset::new(dim);
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 2 {
            return Err(DataError::Csv {
                line: lineno,
                message: format!("expected {} fields, found {}", dim + 2, fields.len()),
            });
        }
        let age: f64 = fields[0].parse().map_err(|_| DataError::Csv {
            line: lineno,
            message: format!("bad age '{}'", fields[0]),
        })?;
        if !age.is_finite() {
            return Err(DataError::Csv {
                line: lineno,
                message: "non-finite age".into(),
            });
        }
        let group = if fields[1].is_empty() {
            None
        } else {
            Some(fields[1].to_string())
        };
        let mut features = Vec::with_capacity(dim);
        for f in &fields[2..] {
            let v: f64 = f.parse().map_err(|_| DataError::Csv {
                line: lineno,
                message: format!("bad feature '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Csv {
                    line: lineno,
                    message: "non-finite feature".into(),
                });
            }
            features.push(v);
        }
        dataset.samples.push(Sample {
            features,
            chron_age: age,
            brain_age: age,
            group,
        });
    }
    Ok(dataset)
}

pub fn read_csv(path: &Path) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path)?;
    dataset_from_csv(&text)
}
