//! Least-squares refits and their analytic leave-one-out errors.
//!
//! For a linear-in-coefficients model with hat matrix `H`, the
//! leave-one-out residual of observation `k` is `(y_k - yhat_k) / (1 - h_k)`,
//! so no refitting is needed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Leverages at or above `1 - LEVERAGE_LIMIT` are refused.
const LEVERAGE_LIMIT: f64 = 1e-12;
/// Relative size of a diagonal entry of R below which columns are dependent.
const RANK_TOL: f64 = 1e-10;

/// Optional finite-sample inflation of the leave-one-out error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LooCorrection {
    #[default]
    None,
    /// `K/(K-P) * (1 + tr((Psi^T Psi / K)^-1) / K)`.
    Chapelle,
}

pub(crate) fn sample_variance(y: &[f64]) -> f64 {
    let k = y.len() as f64;
    let mean = y.iter().sum::<f64>() / k;
    y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
}

pub(crate) fn check_target(y: &[f64]) -> Result<f64> {
    if y.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 targets, got {}", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateTarget("targets contain non-finite values".into()));
    }
    let var = sample_variance(y);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    if !(var > (f64::EPSILON * mean).powi(2)) {
        return Err(Error::DegenerateTarget(format!("targets are constant (variance {var:e})")));
    }
    Ok(var)
}

/// Thin QR with a rank check.
fn qr_checked(cols: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (k, p) = cols.shape();
    if p == 0 || p > k {
        return Err(Error::IllConditioned(format!("{p} columns for {k} observations")));
    }
    let qr = cols.clone().qr();
    let r = qr.r();
    let rmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
    for i in 0..p {
        if !(r[(i, i)].abs() > RANK_TOL * rmax) {
            return Err(Error::IllConditioned(format!(
                "column {i} is linearly dependent on earlier columns"
            )));
        }
    }
    Ok((qr.q(), r))
}

/// Ordinary least-squares coefficients.
pub fn ols(cols: &DMatrix<f64>, targets: &[f64]) -> Result<Vec<f64>> {
    if cols.nrows() != targets.len() {
        return Err(Error::shape(format!(
            "{} design rows for {} targets",
            cols.nrows(),
            targets.len()
        )));
    }
    let (q, r) = qr_checked(cols)?;
    let y = DVector::from_column_slice(targets);
    let qty = q.tr_mul(&y);
    let coeffs = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::IllConditioned("singular triangular factor".into()))?;
    Ok(coeffs.iter().copied().collect())
}

/// Normalized analytic leave-one-out error of the least-squares fit on
/// `cols`: mean squared LOO residual divided by the sample variance of the
/// targets.
pub fn loo_error(cols: &DMatrix<f64>, targets: &[f64]) -> Result<f64> {
    loo_error_with(cols, targets, LooCorrection::None)
}

pub fn loo_error_with(cols: &DMatrix<f64>, targets: &[f64], correction: LooCorrection) -> Result<f64> {
    if cols.nrows() != targets.len() {
        return Err(Error::shape(format!(
            "{} design rows for {} targets",
            cols.nrows(),
            targets.len()
        )));
    }
    let var = check_target(targets)?;
    let (q, r) = qr_checked(cols)?;
    let y = DVector::from_column_slice(targets);
    let resid = &y - &q * q.tr_mul(&y);
    let mut acc = 0.0;
    for (i, row) in q.row_iter().enumerate() {
        let h = row.norm_squared();
        if h >= 1.0 - LEVERAGE_LIMIT {
            return Err(Error::LeverageSaturation { index: i, leverage: h });
        }
        acc += (resid[i] / (1.0 - h)).powi(2);
    }
    let loo = acc / targets.len() as f64 / var;
    Ok(match correction {
        LooCorrection::None => loo,
        LooCorrection::Chapelle => loo * chapelle_factor(&r, targets.len())?,
    })
}

fn chapelle_factor(r: &DMatrix<f64>, k: usize) -> Result<f64> {
    let p = r.ncols();
    if p >= k {
        return Err(Error::IllConditioned("correction needs more observations than terms".into()));
    }
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::IllConditioned("singular triangular factor".into()))?;
    let trace = rinv.norm_squared();
    Ok(k as f64 / (k - p) as f64 * (1.0 + trace))
}

/// Least-squares fit grown one column at a time by modified Gram-Schmidt
/// with reorthogonalization; tracks residuals and leverages so that the LOO
/// error of every nested model costs O(K) after each O(K s) column update.
pub(crate) struct IncrementalFit {
    basis: Vec<DVector<f64>>,
    resid: DVector<f64>,
    leverage: Vec<f64>,
    var: f64,
}

impl IncrementalFit {
    pub(crate) fn new(targets: &[f64], var: f64) -> Self {
        IncrementalFit {
            basis: Vec::new(),
            resid: DVector::from_column_slice(targets),
            leverage: vec![0.0; targets.len()],
            var,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.basis.len()
    }

    pub(crate) fn push(&mut self, col: &[f64]) -> Result<()> {
        let mut v = DVector::from_column_slice(col);
        let norm0 = v.norm();
        if norm0 == 0.0 {
            return Err(Error::IllConditioned("zero column".into()));
        }
        for _ in 0..2 {
            for q in &self.basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= RANK_TOL * norm0 {
            return Err(Error::IllConditioned(format!(
                "column {} is linearly dependent on the model",
                self.basis.len()
            )));
        }
        v /= norm;
        let c = v.dot(&self.resid);
        self.resid.axpy(-c, &v, 1.0);
        for (h, q) in self.leverage.iter_mut().zip(v.iter()) {
            *h += q * q;
        }
        self.basis.push(v);
        Ok(())
    }

    pub(crate) fn loo(&self) -> Result<f64> {
        let mut acc = 0.0;
        for (i, (&r, &h)) in self.resid.iter().zip(&self.leverage).enumerate() {
            if h >= 1.0 - LEVERAGE_LIMIT {
                return Err(Error::LeverageSaturation { index: i, leverage: h });
            }
            acc += (r / (1.0 - h)).powi(2);
        }
        Ok(acc / self.resid.len() as f64 / self.var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::stream_rng;

    // literal leave-one-out: drop row k, refit by normal equations, predict row k
    fn brute_force_loo(cols: &DMatrix<f64>, y: &[f64]) -> f64 {
        let (k, p) = cols.shape();
        let mut acc = 0.0;
        for out in 0..k {
            let keep: Vec<usize> = (0..k).filter(|&i| i != out).collect();
            let a = DMatrix::from_fn(k - 1, p, |r, c| cols[(keep[r], c)]);
            let b = DVector::from_iterator(k - 1, keep.iter().map(|&i| y[i]));
            let coef = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * b));
            let pred: f64 = (0..p).map(|c| cols[(out, c)] * coef[c]).sum();
            acc += (y[out] - pred).powi(2);
        }
        let mean = y.iter().sum::<f64>() / k as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        acc / k as f64 / var
    }

    #[test]
    fn analytic_matches_brute_force() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..5 {
            let cols = DMatrix::from_fn(30, 10, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
            let a = loo_error(&cols, &y).unwrap();
            let b = brute_force_loo(&cols, &y);
            assert!((a - b).abs() <= 1e-8 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn constant_model_closed_form() {
        let k = 40usize;
        let y: Vec<f64> = (0..k).map(|i| (i as f64 * 0.77).sin() * 3.0 + 1.0).collect();
        let ones = DMatrix::from_element(k, 1, 1.0);
        let kf = k as f64;
        // h_k = 1/K: LOO_norm = (K/(K-1))^2 * (1/K) sum (y - ybar)^2 / v with v = sample variance
        let mean = y.iter().sum::<f64>() / kf;
        let ss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let v = ss / (kf - 1.0);
        let expected = (kf / (kf - 1.0)).powi(2) * ss / kf / v;
        assert!((loo_error(&ones, &y).unwrap() - expected).abs() < 1e-12);
        assert!((expected - kf / (kf - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn exact_fit_has_zero_loo() {
        let cols = DMatrix::from_fn(20, 3, |r, c| (r as f64 * 0.1).powi(c as i32));
        let y: Vec<f64> = (0..20).map(|r| 1.0 + 2.0 * r as f64 * 0.1 - 0.5 * (r as f64 * 0.1).powi(2)).collect();
        assert!(loo_error(&cols, &y).unwrap() < 1e-12);
        let c = ols(&cols, &y).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-10 && (c[1] - 2.0).abs() < 1e-10 && (c[2] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn saturation_and_rank_errors() {
        let cols = DMatrix::from_fn(4, 4, |r, c| if r == c { 1.0 } else { 0.1 });
        let y = [1.0, 2.0, 0.0, 5.0];
        assert!(matches!(loo_error(&cols, &y), Err(Error::LeverageSaturation { .. })));
        let dep = DMatrix::from_fn(6, 2, |r, _| r as f64);
        assert!(matches!(loo_error(&dep, &[1.0, 2.0, 0.0, 5.0, 1.0, 1.0]), Err(Error::IllConditioned(_))));
        let ones = DMatrix::from_element(4, 1, 1.0);
        assert!(matches!(loo_error(&ones, &[5.0; 4]), Err(Error::DegenerateTarget(_))));
    }

    #[test]
    fn incremental_matches_dense() {
        let mut rng = stream_rng(3, 1);
        let cols = DMatrix::from_fn(25, 6, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let var = check_target(&y).unwrap();
        let mut inc = IncrementalFit::new(&y, var);
        for j in 0..6 {
            let col: Vec<f64> = cols.column(j).iter().copied().collect();
            inc.push(&col).unwrap();
            let dense = loo_error(&cols.columns(0, j + 1).into_owned(), &y).unwrap();
            assert!((inc.loo().unwrap() - dense).abs() < 1e-10 * dense.max(1.0));
        }
        assert_eq!(inc.len(), 6);
    }

    #[test]
    fn chapelle_inflates() {
        let mut rng = stream_rng(5, 0);
        let cols = DMatrix::from_fn(30, 5, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let plain = loo_error(&cols, &y).unwrap();
        let corrected = loo_error_with(&cols, &y, LooCorrection::Chapelle).unwrap();
        assert!(corrected > plain);
    }
}
