//! Dense row-major matrices plus the handful of numeric primitives shared by
//! every other module: Minkowski (`L_k`) distances, batch max-norm feature
//! scaling, and an overflow-safe softmax.
//!
//! All arithmetic is `f64` and all reductions run in a fixed order, so every
//! operation here is bit-identical across repeated calls and thread counts.

use thiserror::Error;

/// Tolerance for algebraic identities checked in tests and contracts.
pub const ALGEBRA_TOL: f64 = 1e-12;

/// A norm at or below this is treated as zero when scaling a batch.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from a row-major buffer. Panics if the length does not match;
    /// shape errors at this level are programmer errors.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix buffer length {} does not match {}x{}",
            data.len(),
            rows,
            cols
        );
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged row in matrix construction");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    /// `self (n x k) * other (k x m)`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimension mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self^T (k x n)^T * other (n x m)` without materializing the transpose.
    pub fn transposed_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "transposed_matmul row mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for n in 0..self.rows {
            let arow = &self.data[n * self.cols..(n + 1) * self.cols];
            let brow = &other.data[n * other.cols..(n + 1) * other.cols];
            for (k, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[k * other.cols..(k + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(brow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self (n x m) * other^T (k x m)^T`.
    pub fn matmul_transposed(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_transposed column mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = &self.data[i * self.cols..(i + 1) * self.cols];
            for j in 0..other.rows {
                let brow = &other.data[j * self.cols..(j + 1) * self.cols];
                let mut acc = 0.0;
                for (&a, &b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (d, &s) in self.data.iter_mut().zip(&other.data) {
            *d += s;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for d in &mut self.data {
            *d *= factor;
        }
    }

    /// Sum over rows, yielding one value per column.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.iter_rows() {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Minkowski distance `(sum_i |x_i - y_i|^k)^(1/k)` for any `k > 0`.
///
/// `k = 1` is the Manhattan distance and is computed without `powf` so it is
/// exactly the sum of coordinate gaps. Distances for `k >= 1` are metrics;
/// fractional `k` still yields a symmetric, zero-iff-equal dissimilarity.
pub fn lk_distance(x: &[f64], y: &[f64], k: f64) -> Result<f64, NumericsError> {
    if x.len() != y.len() {
        return Err(NumericsError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(NumericsError::InvalidParameter {
            name: "dimension",
            value: 0.0,
        });
    }
    if !(k > 0.0) {
        return Err(NumericsError::InvalidParameter { name: "k", value: k });
    }
    if k == 1.0 {
        return Ok(x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum());
    }
    let s: f64 = x.iter().zip(y).map(|(a, b)| (a - b).abs().powf(k)).sum();
    Ok(s.powf(1.0 / k))
}

/// Largest row L2 norm, or `None` for an empty batch.
pub fn max_l2_norm<'a, I>(rows: I) -> Option<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut best: Option<f64> = None;
    for row in rows {
        let n = l2_norm(row);
        best = Some(best.map_or(n, |b| if n > b { n } else { b }));
    }
    best
}

/// Scale a batch of vectors by the reciprocal of its largest L2 norm.
///
/// After scaling every vector fits in the unit ball and at least one sits on
/// its surface. A batch whose largest norm is at or below [`NORM_FLOOR`] is
/// returned unchanged (the all-zero batch is a fixed point). The single
/// shared scalar preserves the batch geometry.
pub fn batch_max_l2_normalize(batch: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = max_l2_norm(batch.iter().map(Vec::as_slice)).unwrap_or(0.0);
    if m <= NORM_FLOOR {
        return batch.to_vec();
    }
    batch
        .iter()
        .map(|v| v.iter().map(|x| x / m).collect())
        .collect()
}

/// Softmax with the usual max-shift so logits up to about `1e4` in magnitude
/// never overflow. Adding a constant to every logit leaves the output
/// bit-identical.
pub fn stable_softmax(logits: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if logits.is_empty() {
        return Err(NumericsError::InvalidParameter {
            name: "dimension",
            value: 0.0,
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite { context: "softmax logits" });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Ok(out)
}

/// Log-softmax computed as `z - max - ln(sum exp(z - max))`.
pub fn stable_log_softmax(logits: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if logits.is_empty() {
        return Err(NumericsError::InvalidParameter {
            name: "dimension",
            value: 0.0,
        });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite { context: "softmax logits" });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits
        .iter()
        .map(|&z| (z - max).exp())
        .sum::<f64>()
        .ln();
    Ok(logits.iter().map(|&z| z - max - lse).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lk_identical_points_is_zero() {
        assert_eq!(lk_distance(&[1.0, 2.0], &[1.0, 2.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn lk_euclidean_three_four_five() {
        let d = lk_distance(&[0.0, 0.0], &[3.0, 4.0], 2.0).unwrap();
        assert!((d - 5.0).abs() < ALGEBRA_TOL);
    }

    #[test]
    fn lk_fractional_hand_value() {
        // (1^0.5 + 1^0.5)^2 = 4
        let d = lk_distance(&[0.0, 0.0], &[1.0, 1.0], 0.5).unwrap();
        assert!((d - 4.0).abs() < ALGEBRA_TOL);
    }

    #[test]
    fn lk_rejects_bad_inputs() {
        assert!(matches!(
            lk_distance(&[0.0], &[0.0, 1.0], 1.0),
            Err(NumericsError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            lk_distance(&[0.0], &[1.0], 0.0),
            Err(NumericsError::InvalidParameter { .. })
        ));
        assert!(matches!(
            lk_distance(&[0.0], &[1.0], -2.0),
            Err(NumericsError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn normalize_scales_by_largest_norm() {
        let out = batch_max_l2_normalize(&[vec![3.0, 4.0], vec![0.0, 0.0]]);
        assert_eq!(out[0], vec![0.6, 0.8]);
        assert_eq!(out[1], vec![0.0, 0.0]);

        let out = batch_max_l2_normalize(&[vec![1.0, 0.0], vec![0.0, 2.0]]);
        assert_eq!(out[0], vec![0.5, 0.0]);
        assert_eq!(out[1], vec![0.0, 1.0]);
    }

    #[test]
    fn normalize_zero_batch_is_fixed_point() {
        let out = batch_max_l2_normalize(&[vec![0.0, 0.0]]);
        assert_eq!(out, vec![vec![0.0, 0.0]]);
    }

    #[test]
    fn softmax_symmetry() {
        assert_eq!(stable_softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let p = stable_softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!((p[0] - 1.0).abs() < ALGEBRA_TOL);
        assert!(p[1].abs() < ALGEBRA_TOL);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < ALGEBRA_TOL);
    }

    #[test]
    fn softmax_hand_values() {
        let p = stable_softmax(&[1.0, 2.0, 3.0]).unwrap();
        assert!((p[0] - 0.09003057317038046).abs() < 1e-12);
        assert!((p[1] - 0.24472847105479767).abs() < 1e-12);
        assert!((p[2] - 0.6652409557748219).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_nan() {
        assert!(matches!(
            stable_softmax(&[f64::NAN, 0.0]),
            Err(NumericsError::NonFinite { .. })
        ));
        assert!(matches!(
            stable_softmax(&[f64::INFINITY, 0.0]),
            Err(NumericsError::NonFinite { .. })
        ));
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let logits = [0.3, -1.2, 4.0, 2.2];
        let p = stable_softmax(&logits).unwrap();
        let lp = stable_log_softmax(&logits).unwrap();
        for (a, b) in p.iter().zip(&lp) {
            assert!((a.ln() - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_shapes_and_values() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.as_slice(), &[58.0, 64.0, 139.0, 154.0]);

        // a^T * a via transposed_matmul equals explicit transpose product.
        let ata = a.transposed_matmul(&a);
        assert_eq!(ata.rows(), 3);
        assert_eq!(ata.get(0, 0), 17.0);

        // a * a^T via matmul_transposed.
        let aat = a.matmul_transposed(&a);
        assert_eq!(aat.get(0, 0), 14.0);
        assert_eq!(aat.get(0, 1), 32.0);
    }

    #[test]
    fn column_sums_work() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.column_sums(), vec![4.0, 6.0]);
    }
}
