//! Gaussian likelihoods and the polynomial time discrepancy.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::polybasis::{PolyFamily, MAX_DEGREE};

fn check_lengths(y: &[f64], pred: &[f64]) -> Result<()> {
    if y.len() != pred.len() || y.is_empty() {
        return Err(Error::shape(format!(
            "data length {} vs prediction length {}",
            y.len(),
            pred.len()
        )));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("noise level must be positive, got {sigma}")))
    }
}

/// Independent Gaussian errors with standard deviation `sigma`.
pub fn log_likelihood_iid(y: &[f64], pred: &[f64], sigma: f64) -> Result<f64> {
    check_lengths(y, pred)?;
    check_sigma(sigma)?;
    let n = y.len() as f64;
    let ss: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(-0.5 * n * (2.0 * PI * sigma * sigma).ln() - ss / (2.0 * sigma * sigma))
}

/// Affine map of the time grid onto `[-1, 1]`.
fn unit_times(times: &[f64]) -> Vec<f64> {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    if t1 > t0 {
        times.iter().map(|t| (2.0 * (t - t0) / (t1 - t0) - 1.0).clamp(-1.0, 1.0)).collect()
    } else {
        vec![0.0; times.len()]
    }
}

/// Normalized Legendre polynomials of degree `0..=degree` evaluated on the
/// rescaled time grid; one row per time.
pub fn discrepancy_basis(times: &[f64], degree: usize) -> Result<DMatrix<f64>> {
    if times.is_empty() {
        return Err(Error::invalid("discrepancy needs a non-empty time grid"));
    }
    if degree > MAX_DEGREE {
        return Err(Error::DegreeOverflow {
            degree,
            max: MAX_DEGREE,
        });
    }
    let s = unit_times(times);
    let mut m = DMatrix::zeros(times.len(), degree + 1);
    let mut row = vec![0.0; degree + 1];
    for (i, &u) in s.iter().enumerate() {
        PolyFamily::Legendre.eval_upto(degree, u, &mut row)?;
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// `delta(t) = sum_a b_a psi_a(s(t))`.
pub fn discrepancy(b: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    if b.is_empty() {
        return Err(Error::invalid("discrepancy needs at least one coefficient"));
    }
    let basis = discrepancy_basis(times, b.len() - 1)?;
    Ok((basis * DVector::from_column_slice(b)).iter().copied().collect())
}

/// Gaussian residuals `r` with stationary AR(1) covariance
/// `sigma^2 rho^|i-j|`, evaluated through the innovations in O(n).
pub fn log_likelihood_ar1(r: &[f64], sigma: f64, rho: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::domain(format!("autocorrelation must lie in [0, 1), got {rho}")));
    }
    if r.is_empty() {
        return Err(Error::shape("empty residual vector"));
    }
    ar1_innovations(r, sigma, rho, 1.0 - rho * rho)
}

fn ar1_innovations(r: &[f64], sigma: f64, rho: f64, one_minus_rho2: f64) -> Result<f64> {
    let n = r.len() as f64;
    let s2 = sigma * sigma;
    let mut innov = 0.0;
    for w in r.windows(2) {
        innov += (w[1] - rho * w[0]).powi(2);
    }
    Ok(-0.5
        * (n * (2.0 * PI * s2).ln()
            + (n - 1.0) * one_minus_rho2.ln()
            + r[0] * r[0] / s2
            + innov / (s2 * one_minus_rho2)))
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("correlation length must be positive, got {tau}")))
    }
}

/// Gaussian errors with covariance `sigma^2 exp(-|t_i - t_j| / tau)`.
///
/// On a uniform grid this is AR(1) with `rho = exp(-dt / tau)` and costs
/// O(n); other grids fall back to a dense Cholesky factorization.
pub fn log_likelihood_corr(y: &[f64], pred_plus_delta: &[f64], sigma: f64, tau: f64, times: &[f64]) -> Result<f64> {
    check_lengths(y, pred_plus_delta)?;
    if times.len() != y.len() {
        return Err(Error::shape(format!("{} times for {} data points", times.len(), y.len())));
    }
    check_sigma(sigma)?;
    check_tau(tau)?;
    let r: Vec<f64> = y.iter().zip(pred_plus_delta).map(|(a, b)| a - b).collect();
    if crate::simulators::check_uniform_grid(times).is_ok() {
        let dt = if times.len() > 1 {
            (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
        } else {
            1.0
        };
        Ok(log_likelihood_ar1_dt(&r, sigma, tau, dt))
    } else {
        log::warn!("non-uniform time grid; using the dense O(n^3) likelihood");
        log_likelihood_dense(&r, sigma, tau, times)
    }
}

/// AR(1) form given the grid spacing; `1 - rho^2` is computed without
/// cancellation for long correlation lengths.
pub(crate) fn log_likelihood_ar1_dt(r: &[f64], sigma: f64, tau: f64, dt: f64) -> f64 {
    let rho = (-dt / tau).exp();
    let one_minus_rho2 = -(-2.0 * dt / tau).exp_m1();
    ar1_innovations(r, sigma, rho, one_minus_rho2).expect("validated inputs")
}

/// Dense multivariate-normal evaluation of the exponential-kernel model.
pub fn log_likelihood_dense(r: &[f64], sigma: f64, tau: f64, times: &[f64]) -> Result<f64> {
    check_sigma(sigma)?;
    check_tau(tau)?;
    if r.len() != times.len() || r.is_empty() {
        return Err(Error::shape(format!("{} residuals for {} times", r.len(), times.len())));
    }
    let n = r.len();
    let s2 = sigma * sigma;
    let cov = DMatrix::from_fn(n, n, |i, j| s2 * (-(times[i] - times[j]).abs() / tau).exp());
    let chol = Cholesky::new(cov).ok_or_else(|| Error::IllConditioned("covariance not positive definite".into()))?;
    let l = chol.l();
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let z = l
        .solve_lower_triangular(&DVector::from_column_slice(r))
        .ok_or_else(|| Error::IllConditioned("singular covariance factor".into()))?;
    Ok(-0.5 * (n as f64 * (2.0 * PI).ln() + logdet + z.norm_squared()))
}
