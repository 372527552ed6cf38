//! Empirical principal component analysis of simulator output samples.
//!
//! The spectrum is obtained from a thin SVD of the centered sample matrix,
//! `lambda_i = s_i^2 / (K - 1)`; the covariance matrix itself is never formed.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{b64_matrix, b64_vec};

/// Eigenvalues below this fraction of the largest are treated as zero.
const CLAMP_RELATIVE: f64 = 1e-12;

/// Mean, leading eigenvectors and full spectrum of a sample covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedBasis {
    #[serde(with = "b64_vec")]
    pub mean: Vec<f64>,
    /// `(T+1) x retained`, orthonormal columns.
    #[serde(with = "b64_matrix")]
    pub eigvecs: DMatrix<f64>,
    /// Descending, length `T+1`.
    #[serde(with = "b64_vec")]
    pub eigvals_all: Vec<f64>,
    pub retained: usize,
    pub explained_fraction: f64,
}

/// Principal component scores of a sample, `K x retained`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentScores {
    pub scores: DMatrix<f64>,
}

impl ComponentScores {
    pub fn component(&self, p: usize) -> Vec<f64> {
        self.scores.column(p).iter().copied().collect()
    }
}

impl ReducedBasis {
    /// Length `T+1` of the reconstructed output vector.
    pub fn output_len(&self) -> usize {
        self.mean.len()
    }

    pub fn eigvec(&self, p: usize) -> Vec<f64> {
        self.eigvecs.column(p).iter().copied().collect()
    }

    pub fn total_variance(&self) -> f64 {
        self.eigvals_all.iter().sum()
    }

    /// Retained eigenvalues.
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals_all[..self.retained]
    }

    /// Scores `Phi^T (y - mean)`.
    pub fn compress(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_len() {
            return Err(Error::shape(format!(
                "output vector has length {}, basis expects {}",
                y.len(),
                self.output_len()
            )));
        }
        let centered = DVector::from_iterator(y.len(), y.iter().zip(&self.mean).map(|(a, m)| a - m));
        Ok((self.eigvecs.tr_mul(&centered)).iter().copied().collect())
    }

    /// `mean + Phi z`.
    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.retained {
            return Err(Error::shape(format!(
                "score vector has length {}, basis retains {}",
                z.len(),
                self.retained
            )));
        }
        let mut out = self.mean.clone();
        for (p, &zp) in z.iter().enumerate() {
            for (o, &phi) in out.iter_mut().zip(self.eigvecs.column(p).iter()) {
                *o += zp * phi;
            }
        }
        Ok(out)
    }

    /// Scores of every row of a `K x (T+1)` sample.
    pub fn scores(&self, y: &DMatrix<f64>) -> Result<ComponentScores> {
        if y.ncols() != self.output_len() {
            return Err(Error::shape(format!(
                "sample has {} columns, basis expects {}",
                y.ncols(),
                self.output_len()
            )));
        }
        let mut centered = y.clone();
        for mut row in centered.row_iter_mut() {
            for (v, m) in row.iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        Ok(ComponentScores {
            scores: centered * &self.eigvecs,
        })
    }
}

/// Fits the reduced basis retaining the fewest components whose cumulative
/// eigenvalue share reaches `target_fraction`.
pub fn fit(y: &DMatrix<f64>, target_fraction: f64) -> Result<ReducedBasis> {
    let (k, n) = y.shape();
    if k < 2 {
        return Err(Error::invalid(format!("PCA needs at least 2 samples, got {k}")));
    }
    if n == 0 {
        return Err(Error::shape("sample has no output columns"));
    }
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "target fraction must be in (0, 1], got {target_fraction}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSample("sample contains non-finite values".into()));
    }

    let mean: Vec<f64> = y.column_iter().map(|c| c.sum() / k as f64).collect();
    let mut centered = y.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }

    let svd = SVD::new(centered, false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::DegenerateSample("SVD did not produce right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    // stable sort keeps the decomposition's order among ties
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let denom = (k - 1) as f64;
    let mut eigvals_all = vec![0.0; n];
    for (slot, &i) in order.iter().enumerate() {
        eigvals_all[slot] = svd.singular_values[i].powi(2) / denom;
    }
    let largest = eigvals_all[0];
    if !(largest > 0.0) {
        return Err(Error::DegenerateSample("sample has zero total variance".into()));
    }
    for v in eigvals_all.iter_mut() {
        if *v < CLAMP_RELATIVE * largest {
            *v = 0.0;
        }
    }
    let total: f64 = eigvals_all.iter().sum();
    let threshold = target_fraction * total;
    let mut cum = 0.0;
    let mut retained = 0;
    for &v in &eigvals_all {
        cum += v;
        retained += 1;
        if cum >= threshold {
            break;
        }
    }

    let mut eigvecs = DMatrix::zeros(n, retained);
    for (p, &i) in order.iter().take(retained).enumerate() {
        let row = v_t.row(i);
        let mut best = 0.0f64;
        for &v in row.iter() {
            if v.abs() > best.abs() {
                best = v;
            }
        }
        let sign = if best < 0.0 { -1.0 } else { 1.0 };
        for (t, &v) in row.iter().enumerate() {
            eigvecs[(t, p)] = sign * v;
        }
    }

    Ok(ReducedBasis {
        mean,
        eigvecs,
        eigvals_all,
        retained,
        explained_fraction: cum / total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn covariance(y: &DMatrix<f64>) -> DMatrix<f64> {
        let k = y.nrows();
        let mut c = y.clone();
        for mut col in c.column_iter_mut() {
            let m = col.sum() / k as f64;
            col.add_scalar_mut(-m);
        }
        c.tr_mul(&c) / (k as f64 - 1.0)
    }

    #[test]
    fn two_point_pattern() {
        let y = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0]);
        let rb = fit(&y, 0.99).unwrap();
        assert_eq!(rb.retained, 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((rb.eigvecs[(0, 0)] - h).abs() < 1e-12);
        assert!((rb.eigvecs[(1, 0)] - h).abs() < 1e-12);
        // hand computation: 2x2 covariance [[4/3,4/3],[4/3,4/3]] has eigenvalues 8/3 and 0
        assert!((rb.eigvals_all[0] - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(rb.eigvals_all[1], 0.0);
    }

    #[test]
    fn full_fraction_retains_rank_and_round_trips() {
        // rank 2 data in 4 dimensions
        let mut y = DMatrix::zeros(6, 4);
        for k in 0..6 {
            let a = k as f64 * 0.7 - 1.0;
            let b = ((k * k) as f64).sin();
            for t in 0..4 {
                y[(k, t)] = 3.0 + a * (t as f64 + 1.0) + b * (t as f64).cos();
            }
        }
        let rb = fit(&y, 1.0).unwrap();
        assert_eq!(rb.retained, 2);
        for k in 0..6 {
            let row: Vec<f64> = y.row(k).iter().copied().collect();
            let back = rb.reconstruct(&rb.compress(&row).unwrap()).unwrap();
            for (a, b) in row.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_and_invalid_inputs() {
        let y = DMatrix::from_element(5, 3, 2.5);
        assert!(matches!(fit(&y, 0.9), Err(Error::DegenerateSample(_))));
        let one = DMatrix::from_element(1, 3, 1.0);
        assert!(matches!(fit(&one, 0.9), Err(Error::InvalidArgument(_))));
        let y = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(fit(&y, 0.0).is_err());
        assert!(fit(&y, 1.5).is_err());
    }

    #[test]
    fn compress_reconstruct_examples() {
        let y = DMatrix::from_fn(30, 5, |k, t| ((k * 7 + t * 3) as f64).sin() + t as f64);
        let rb = fit(&y, 1.0).unwrap();
        let z = rb.compress(&rb.mean).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let c = 2.5;
        let shifted: Vec<f64> = rb.mean.iter().zip(rb.eigvec(0)).map(|(m, p)| m + c * p).collect();
        let z = rb.compress(&shifted).unwrap();
        assert!((z[0] - c).abs() < 1e-12);
        assert!(z[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(rb.reconstruct(&vec![0.0; rb.retained]).unwrap(), rb.mean);
        let mut e = vec![0.0; rb.retained];
        e[1] = 1.0;
        let r = rb.reconstruct(&e).unwrap();
        for (t, v) in r.iter().enumerate() {
            assert!((v - rb.mean[t] - rb.eigvecs[(t, 1)]).abs() < 1e-15);
        }
        let z0 = vec![0.3, -1.0, 2.0, 0.1, 0.0];
        let z1 = rb.compress(&rb.reconstruct(&z0[..rb.retained]).unwrap()).unwrap();
        for (a, b) in z0.iter().zip(&z1) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(rb.compress(&[1.0]), Err(Error::Shape(_))));
        assert!(matches!(rb.reconstruct(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn largest_entry_is_positive() {
        let y = DMatrix::from_fn(40, 6, |k, t| ((k as f64) * 0.37 + (t as f64) * 1.3).cos() * (t as f64 + 1.0));
        let rb = fit(&y, 1.0).unwrap();
        for p in 0..rb.retained {
            let col = rb.eigvec(p);
            let big = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn diagonalizes_covariance() {
        let y = DMatrix::from_fn(50, 7, |k, t| ((k * 13 + t * 5) as f64 * 0.11).sin() * (1.0 + t as f64));
        let rb = fit(&y, 1.0).unwrap();
        let cov = covariance(&y);
        let d = rb.eigvecs.tr_mul(&(cov * &rb.eigvecs));
        let l0 = rb.eigvals_all[0];
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if i == j {
                    assert!((d[(i, i)] - rb.eigvals_all[i]).abs() <= 1e-8 * l0);
                } else {
                    assert!(d[(i, j)].abs() <= 1e-8 * l0);
                }
            }
        }
        let ortho = rb.eigvecs.tr_mul(&rb.eigvecs);
        assert!((ortho - DMatrix::identity(rb.retained, rb.retained)).amax() < 1e-10);
    }

    #[test]
    fn json_round_trip() {
        let y = DMatrix::from_fn(10, 3, |k, t| (k as f64 * 0.3 + t as f64).sin());
        let rb = fit(&y, 0.95).unwrap();
        let s = serde_json::to_string(&rb).unwrap();
        let back: ReducedBasis = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rb);
    }
}
