//! Bayesian calibration of simulator inputs against an observed series.
//!
//! Two error models are supported: independent Gaussian noise, and a
//! low-degree polynomial discrepancy in time plus exponentially correlated
//! Gaussian noise. Posteriors are explored by blocked random-walk
//! Metropolis ([`mcmc`]) and maximized by a multi-start simplex search
//! ([`map`]).

pub mod likelihood;
pub mod map;
pub mod mcmc;
pub mod prior;
pub mod summary;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pce::{CompiledSurrogate, MultiOutputSurrogate};
use crate::simulators::check_uniform_grid;

pub use likelihood::{
    discrepancy, discrepancy_basis, log_likelihood_ar1, log_likelihood_corr, log_likelihood_dense, log_likelihood_iid,
};
pub use map::{map_estimate, map_estimate_with_starts, MapEstimate};
pub use mcmc::{rwm_sample, Chain, SamplerConfig};
pub use prior::Prior;
pub use summary::{summarize, ParameterSummary, PosteriorSummary};

/// Deterministic map from inputs to a predicted series.
pub trait ForwardModel: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_len(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl ForwardModel for MultiOutputSurrogate {
    fn input_dim(&self) -> usize {
        MultiOutputSurrogate::input_dim(self)
    }

    fn output_len(&self) -> usize {
        MultiOutputSurrogate::output_len(self)
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_series(x)
    }
}

impl ForwardModel for CompiledSurrogate {
    fn input_dim(&self) -> usize {
        CompiledSurrogate::input_dim(self)
    }

    fn output_len(&self) -> usize {
        CompiledSurrogate::output_len(self)
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_series(x)
    }
}

/// `x -> offset + G x`.
#[derive(Clone, Debug)]
pub struct LinearModel {
    pub g: DMatrix<f64>,
    pub offset: Vec<f64>,
}

impl ForwardModel for LinearModel {
    fn input_dim(&self) -> usize {
        self.g.ncols()
    }

    fn output_len(&self) -> usize {
        self.g.nrows()
    }

    fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.g.ncols() {
            return Err(Error::shape(format!("{} inputs for {} columns", x.len(), self.g.ncols())));
        }
        let y = &self.g * DVector::from_column_slice(x);
        Ok(y.iter().zip(&self.offset).map(|(a, b)| a + b).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ErrorModel {
    /// Independent Gaussian noise of unknown level `sigma`.
    Iid { sigma: Prior },
    /// Independent Gaussian noise of known level; no noise parameter is
    /// inferred.
    IidKnown { sigma: f64 },
    /// Polynomial discrepancy of the given degree plus Gaussian noise with
    /// covariance `sigma^2 exp(-|t_i - t_j| / tau)`; `tau` in seconds and
    /// `b` in the units of the data. One prior is shared by all `b`.
    CorrDisc {
        sigma: Prior,
        tau: Prior,
        degree: usize,
        b: Prior,
    },
}

impl ErrorModel {
    /// `sigma ~ U(0, 100)`.
    pub fn iid_default() -> Self {
        ErrorModel::Iid {
            sigma: Prior::Uniform { lower: 0.0, upper: 100.0 },
        }
    }

    /// `sigma ~ U(0, 100)`, `tau ~ U(0, 100 * 120 s)`, degree 5,
    /// `b_a ~ Laplace(0, 10)`.
    pub fn corr_disc_default() -> Self {
        ErrorModel::CorrDisc {
            sigma: Prior::Uniform { lower: 0.0, upper: 100.0 },
            tau: Prior::Uniform {
                lower: 0.0,
                upper: 100.0 * 120.0,
            },
            degree: 5,
            b: Prior::Laplace {
                location: 0.0,
                scale: 10.0,
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ErrorModel::Iid { sigma } => sigma.validate(),
            ErrorModel::IidKnown { sigma } => {
                if *sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("known noise level must be positive, got {sigma}")))
                }
            }
            ErrorModel::CorrDisc { sigma, tau, degree, b } => {
                sigma.validate()?;
                tau.validate()?;
                b.validate()?;
                if *degree > crate::polybasis::MAX_DEGREE {
                    return Err(Error::invalid(format!("discrepancy degree {degree} too large")));
                }
                Ok(())
            }
        }
    }
}

/// Positions of the parameter groups inside the flat vector
/// `theta = (x, b, sigma, tau)` (absent groups are skipped).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_x: usize,
    pub n_b: usize,
    pub sigma: Option<usize>,
    pub tau: Option<usize>,
}

impl Layout {
    pub fn dim(&self) -> usize {
        self.n_x + self.n_b + self.sigma.is_some() as usize + self.tau.is_some() as usize
    }

    pub fn x(&self) -> std::ops::Range<usize> {
        0..self.n_x
    }

    pub fn b(&self) -> std::ops::Range<usize> {
        self.n_x..self.n_x + self.n_b
    }
}

/// Data, forward model, priors and error model of one calibration.
pub struct CalibrationProblem {
    model: Box<dyn ForwardModel>,
    data: Vec<f64>,
    times: Vec<f64>,
    x_names: Vec<String>,
    error_model: ErrorModel,
    priors: Vec<Prior>,
    layout: Layout,
    disc_basis: Option<DMatrix<f64>>,
    uniform_dt: Option<f64>,
}

impl std::fmt::Debug for CalibrationProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CalibrationProblem")
            .field("data_len", &self.data.len())
            .field("x_names", &self.x_names)
            .field("error_model", &self.error_model)
            .finish_non_exhaustive()
    }
}

/// Posterior value at a point plus the model prediction it used.
#[derive(Clone, Debug)]
pub(crate) struct Evaluation {
    pub log_posterior: f64,
    pub prediction: Option<Vec<f64>>,
}

impl CalibrationProblem {
    pub fn new(
        model: Box<dyn ForwardModel>,
        data: Vec<f64>,
        times: Vec<f64>,
        x_priors: Vec<Prior>,
        x_names: Vec<String>,
        error_model: ErrorModel,
    ) -> Result<Self> {
        if data.len() != model.output_len() {
            return Err(Error::shape(format!(
                "data length {} differs from model output length {}",
                data.len(),
                model.output_len()
            )));
        }
        if times.len() != data.len() {
            return Err(Error::shape(format!("{} times for {} data points", times.len(), data.len())));
        }
        if x_priors.len() != model.input_dim() || x_names.len() != model.input_dim() {
            return Err(Error::shape(format!(
                "{} priors and {} names for {} inputs",
                x_priors.len(),
                x_names.len(),
                model.input_dim()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("data contain non-finite values"));
        }
        for p in &x_priors {
            p.validate()?;
        }
        error_model.validate()?;

        let uniform = check_uniform_grid(&times);
        let uniform_dt = match (&error_model, &uniform) {
            (ErrorModel::CorrDisc { .. }, Err(e)) => {
                log::warn!("{e}; the correlated likelihood falls back to dense evaluation");
                None
            }
            (_, Err(e)) => return Err(Error::domain(e.to_string())),
            (_, Ok(())) if times.len() > 1 => Some((times[times.len() - 1] - times[0]) / (times.len() - 1) as f64),
            _ => Some(1.0),
        };

        let n_x = x_priors.len();
        let mut priors = x_priors;
        let (layout, disc_basis) = match &error_model {
            ErrorModel::Iid { sigma } => {
                priors.push(*sigma);
                (
                    Layout {
                        n_x,
                        n_b: 0,
                        sigma: Some(n_x),
                        tau: None,
                    },
                    None,
                )
            }
            ErrorModel::IidKnown { .. } => (
                Layout {
                    n_x,
                    n_b: 0,
                    sigma: None,
                    tau: None,
                },
                None,
            ),
            ErrorModel::CorrDisc { sigma, tau, degree, b } => {
                priors.extend(std::iter::repeat_n(*b, degree + 1));
                priors.push(*sigma);
                priors.push(*tau);
                let n_b = degree + 1;
                (
                    Layout {
                        n_x,
                        n_b,
                        sigma: Some(n_x + n_b),
                        tau: Some(n_x + n_b + 1),
                    },
                    Some(discrepancy_basis(&times, *degree)?),
                )
            }
        };
        Ok(CalibrationProblem {
            model,
            data,
            times,
            x_names,
            error_model,
            priors,
            layout,
            disc_basis,
            uniform_dt,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn error_model(&self) -> &ErrorModel {
        &self.error_model
    }

    /// Priors of every entry of `theta`, in layout order.
    pub fn priors(&self) -> &[Prior] {
        &self.priors
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.x_names.clone();
        names.extend(self.layout.b().enumerate().map(|(a, _)| format!("b{a}")));
        if self.layout.sigma.is_some() {
            names.push("sigma".into());
        }
        if self.layout.tau.is_some() {
            names.push("tau".into());
        }
        names
    }

    /// Model 1: `x` and `sigma` together. Model 2: `x`, then
    /// `(sigma, tau, b)`.
    pub fn default_blocks(&self) -> Vec<Vec<usize>> {
        match self.error_model {
            ErrorModel::CorrDisc { .. } => vec![self.layout.x().collect(), (self.layout.n_x..self.dim()).collect()],
            _ => vec![(0..self.dim()).collect()],
        }
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::shape(format!(
                "parameter vector of length {} (expected {})",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        Ok(self.priors.iter().zip(theta).map(|(p, &v)| p.log_density(v)).sum())
    }

    /// Forward prediction at the `x` part of `theta`.
    pub fn predict(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.model.predict(&theta[self.layout.x()])
    }

    /// Discrepancy series at the `b` part of `theta` (zeros for models
    /// without discrepancy).
    pub fn discrepancy(&self, theta: &[f64]) -> Vec<f64> {
        match &self.disc_basis {
            Some(basis) => (basis * DVector::from_column_slice(&theta[self.layout.b()])).iter().copied().collect(),
            None => vec![0.0; self.data.len()],
        }
    }

    /// Log-likelihood given the forward prediction at `theta`; `-inf` where
    /// the noise parameters sit on the boundary of their support.
    pub fn log_likelihood_given(&self, theta: &[f64], prediction: &[f64]) -> Result<f64> {
        self.check_dim(theta)?;
        match self.error_model {
            ErrorModel::IidKnown { sigma } => log_likelihood_iid(&self.data, prediction, sigma),
            ErrorModel::Iid { .. } => {
                let sigma = theta[self.layout.sigma.expect("iid has sigma")];
                if !(sigma > 0.0) {
                    return Ok(f64::NEG_INFINITY);
                }
                log_likelihood_iid(&self.data, prediction, sigma)
            }
            ErrorModel::CorrDisc { .. } => {
                let sigma = theta[self.layout.sigma.expect("model has sigma")];
                let tau = theta[self.layout.tau.expect("model has tau")];
                if !(sigma > 0.0 && tau > 0.0) {
                    return Ok(f64::NEG_INFINITY);
                }
                let delta = self.discrepancy(theta);
                let r: Vec<f64> = self
                    .data
                    .iter()
                    .zip(prediction)
                    .zip(&delta)
                    .map(|((y, m), d)| y - m - d)
                    .collect();
                match self.uniform_dt {
                    Some(dt) => Ok(likelihood::log_likelihood_ar1_dt(&r, sigma, tau, dt)),
                    None => log_likelihood_dense(&r, sigma, tau, &self.times),
                }
            }
        }
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> Result<f64> {
        let pred = self.predict(theta)?;
        self.log_likelihood_given(theta, &pred)
    }

    /// Unnormalized log-posterior; `-inf` outside the prior support.
    pub fn log_posterior(&self, theta: &[f64]) -> Result<f64> {
        Ok(self.evaluate(theta, None)?.log_posterior)
    }

    /// Evaluates the posterior, reusing `prediction` when the `x` part of
    /// `theta` is known not to have changed.
    pub(crate) fn evaluate(&self, theta: &[f64], prediction: Option<&[f64]>) -> Result<Evaluation> {
        let lp = self.log_prior(theta)?;
        if lp == f64::NEG_INFINITY {
            return Ok(Evaluation {
                log_posterior: lp,
                prediction: None,
            });
        }
        let pred = match prediction {
            Some(p) => p.to_vec(),
            None => self.predict(theta)?,
        };
        let ll = self.log_likelihood_given(theta, &pred)?;
        Ok(Evaluation {
            log_posterior: lp + ll,
            prediction: Some(pred),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_problem(error_model: ErrorModel) -> CalibrationProblem {
        let g = DMatrix::from_fn(5, 2, |r, c| (r + c) as f64 * 0.1 + 1.0);
        let model = LinearModel {
            g,
            offset: vec![0.0; 5],
        };
        let times: Vec<f64> = (0..5).map(|k| 120.0 * k as f64).collect();
        CalibrationProblem::new(
            Box::new(model),
            vec![1.0, 1.1, 1.3, 1.2, 1.4],
            times,
            vec![Prior::truncated_normal_for(0.0, 1.0); 2],
            vec!["x1".into(), "x2".into()],
            error_model,
        )
        .unwrap()
    }

    #[test]
    fn layouts() {
        let p = linear_problem(ErrorModel::iid_default());
        assert_eq!(p.param_names(), vec!["x1", "x2", "sigma"]);
        assert_eq!(p.default_blocks(), vec![vec![0, 1, 2]]);
        let q = linear_problem(ErrorModel::corr_disc_default());
        assert_eq!(
            q.param_names(),
            vec!["x1", "x2", "b0", "b1", "b2", "b3", "b4", "b5", "sigma", "tau"]
        );
        assert_eq!(q.default_blocks(), vec![vec![0, 1], (2..10).collect::<Vec<_>>()]);
    }

    #[test]
    fn prior_support_and_dimension() {
        let p = linear_problem(ErrorModel::iid_default());
        assert_eq!(p.log_prior(&[-0.1, 0.5, 10.0]).unwrap(), f64::NEG_INFINITY);
        assert!(p.log_prior(&[0.5, 0.5]).is_err());
        assert_eq!(p.log_posterior(&[0.5, 0.5, 0.0]).unwrap(), f64::NEG_INFINITY);
        assert!(p.log_posterior(&[0.5, 0.5, 1.0]).unwrap().is_finite());
    }

    #[test]
    fn corr_disc_posterior_decomposes() {
        let p = linear_problem(ErrorModel::corr_disc_default());
        let mut theta = vec![0.4, 0.6, 0.1, -0.2, 0.0, 0.0, 0.0, 0.0, 2.0, 300.0];
        let pred = p.predict(&theta).unwrap();
        let delta = p.discrepancy(&theta);
        let shifted: Vec<f64> = pred.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let ll = log_likelihood_corr(p.data(), &shifted, 2.0, 300.0, p.times()).unwrap();
        let lp = p.log_prior(&theta).unwrap();
        assert!((p.log_posterior(&theta).unwrap() - lp - ll).abs() < 1e-12);
        theta[9] = -1.0;
        assert_eq!(p.log_posterior(&theta).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_mismatched_data() {
        let model = LinearModel {
            g: DMatrix::zeros(3, 1),
            offset: vec![0.0; 3],
        };
        let r = CalibrationProblem::new(
            Box::new(model),
            vec![1.0; 4],
            vec![0.0, 1.0, 2.0, 3.0],
            vec![Prior::Uniform { lower: 0.0, upper: 1.0 }],
            vec!["x".into()],
            ErrorModel::iid_default(),
        );
        assert!(r.is_err());
    }
}
