//! Pipeline configuration: one JSON file drives every stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calib::{ErrorModel, Prior};
use crate::error::{Error, Result};
use crate::pce::{FitOptions, LooCorrection};
use crate::simulators::{self, Simulator, SIMULATORS};

/// JSON schema of the configuration file, as printed by `uq schema`.
pub const CONFIG_SCHEMA: &str = include_str!("../config.schema.json");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub simulator: SimulatorConfig,
    /// Overrides the simulator's parameter names, bounds and priors; must
    /// list every input in order.
    pub parameters: Option<Vec<ParameterConfig>>,
    pub design: DesignConfig,
    pub pca: PcaConfig,
    pub pce: PceConfig,
    pub sobol: SobolConfig,
    pub calibration: CalibrationConfig,
    pub paths: PathsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub name: String,
    /// `t,intensity` CSV for the toy catchment; the synthetic storm when
    /// absent.
    pub forcing: Option<PathBuf>,
    /// `[a, b]` for `ishigami`, the `a` vector for `g_function`.
    pub params: Option<Vec<f64>>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            name: "toy_catchment".into(),
            forcing: None,
            params: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterConfig {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Truncated normal on the bounds (midpoint, sixth of the range) when
    /// absent.
    #[serde(default)]
    pub prior: Option<Prior>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Sizes of the independent Latin hypercube chunks; K is their sum.
    pub chunks: Vec<usize>,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            chunks: vec![1024, 1024],
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub target_fraction: f64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig { target_fraction: 0.99 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PceConfig {
    /// Inclusive `[min, max]` total degree searched.
    pub degree_range: [usize; 2],
    pub max_candidates: usize,
    pub lasso: bool,
    pub loo_correction: LooCorrection,
    /// Fresh simulator runs compared against the surrogate after fitting.
    pub validation_runs: usize,
}

impl Default for PceConfig {
    fn default() -> Self {
        PceConfig {
            degree_range: [1, 10],
            max_candidates: 10_000,
            lasso: false,
            loo_correction: LooCorrection::None,
            validation_runs: 4,
        }
    }
}

impl PceConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            lasso: self.lasso,
            loo_correction: self.loo_correction,
            max_terms: None,
            max_candidates: self.max_candidates,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SobolConfig {
    /// Inputs for time-variant indices; all when absent.
    pub inputs: Option<Vec<String>>,
    pub time_variant: bool,
    /// Also export every non-empty subset index per component.
    pub subsets: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub error_model: ErrorModel,
    pub data: DataSource,
    pub iterations: usize,
    pub chains: usize,
    pub seed: u64,
    /// Parameter-name groups; the error model's defaults when absent.
    pub blocks: Option<Vec<Vec<String>>>,
    pub adapt_iterations: usize,
    /// Store every n-th iteration; chosen so at most 1e5 states are pooled
    /// when absent.
    pub record_every: Option<usize>,
    pub burn_in: f64,
    pub thin: usize,
    pub map_starts: usize,
    /// Posterior draws pushed through the surrogate for predictive bands.
    pub predictive_samples: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            error_model: ErrorModel::corr_disc_default(),
            data: DataSource::default(),
            iterations: 1_000_000,
            chains: 30,
            seed: 7,
            blocks: None,
            adapt_iterations: 2000,
            record_every: None,
            burn_in: 0.2,
            thin: 1,
            map_starts: 20,
            predictive_samples: 200,
        }
    }
}

impl CalibrationConfig {
    pub fn record_every(&self) -> usize {
        self.record_every
            .unwrap_or_else(|| (self.iterations * self.chains).div_ceil(100_000).max(1))
    }
}

/// Where the observed series comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// `t,y` CSV on the simulator's time grid.
    File(PathBuf),
    Synthetic(SyntheticData),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticData::default())
    }
}

/// Simulator run at `x` plus a Legendre discrepancy with coefficients `b`
/// plus AR(1) noise of marginal level `sigma` and lag-one correlation `rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticData {
    pub x: Option<Vec<f64>>,
    pub b: Vec<f64>,
    pub sigma: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for SyntheticData {
    fn default() -> Self {
        SyntheticData {
            x: None,
            b: vec![15.0, -10.0, 8.0],
            sigma: 20.0,
            rho: 0.3,
            seed: 99,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub workdir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            workdir: PathBuf::from("uq-work"),
        }
    }
}

/// Names of the files written into the work directory.
pub mod artifacts {
    pub const DESIGN: &str = "design.csv";
    pub const OUTPUTS: &str = "outputs.csv";
    pub const TIMES: &str = "times.csv";
    pub const SURROGATE: &str = "surrogate.json";
    pub const FIT_REPORT: &str = "fit_report.csv";
    pub const FIT_COMPONENTS: &str = "fit_components.csv";
    pub const PC_SCORES: &str = "pca_scores.csv";
    pub const VALIDATION: &str = "validation.csv";
    pub const PREDICTIONS: &str = "predictions.csv";
    pub const SOBOL: &str = "sobol.csv";
    pub const SOBOL_T: &str = "sobol_t.csv";
    pub const OBSERVATIONS: &str = "observations.csv";
    pub const CHAINS: &str = "chains.json";
    pub const MAP: &str = "map.json";
    pub const SUMMARY: &str = "posterior_summary.csv";
    pub const KDE: &str = "posterior_kde.csv";
    pub const MAP_FIT: &str = "map_prediction.csv";
    pub const PREDICTIVE: &str = "posterior_predictive.csv";
}

fn json_error(origin: &str, e: serde_json::Error) -> Error {
    Error::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column()))
}

impl PipelineConfig {
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| json_error(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = PipelineConfig::from_json(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.paths.workdir);
        if let Some(f) = cfg.simulator.forcing.as_mut() {
            resolve(f);
        }
        if let DataSource::File(f) = &mut cfg.calibration.data {
            resolve(f);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !SIMULATORS.contains(&self.simulator.name.as_str()) {
            return bad(format!(
                "unknown simulator `{}` (expected one of {})",
                self.simulator.name,
                SIMULATORS.join(", ")
            ));
        }
        if self.design.chunks.is_empty() || self.design.chunks.contains(&0) {
            return bad("design.chunks must be non-empty positive sizes".into());
        }
        let f = self.pca.target_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return bad(format!("pca.target_fraction {f} must lie in (0, 1]"));
        }
        let [lo, hi] = self.pce.degree_range;
        if lo == 0 || lo > hi || hi > crate::polybasis::MAX_DEGREE {
            return bad(format!(
                "pce.degree_range [{lo}, {hi}] must satisfy 1 <= min <= max <= {}",
                crate::polybasis::MAX_DEGREE
            ));
        }
        if self.pce.max_candidates == 0 {
            return bad("pce.max_candidates must be positive".into());
        }
        if let Some(params) = &self.parameters {
            for p in params {
                if !(p.lower < p.upper) {
                    return bad(format!("parameter {}: lower bound must be below upper bound", p.name));
                }
                if let Some(prior) = &p.prior {
                    prior.validate().map_err(|e| Error::Config(format!("parameter {}: {e}", p.name)))?;
                }
            }
        }
        let c = &self.calibration;
        if c.iterations == 0 || c.chains == 0 || c.thin == 0 || c.map_starts == 0 {
            return bad("calibration.iterations, chains, thin and map_starts must be positive".into());
        }
        if c.record_every == Some(0) {
            return bad("calibration.record_every must be positive".into());
        }
        if !(0.0..1.0).contains(&c.burn_in) {
            return bad(format!("calibration.burn_in {} must lie in [0, 1)", c.burn_in));
        }
        if let DataSource::Synthetic(s) = &c.data {
            if !(s.sigma >= 0.0) || !(0.0..1.0).contains(&s.rho) {
                return bad("synthetic data need sigma >= 0 and rho in [0, 1)".into());
            }
        }
        Ok(())
    }

    pub fn design_size(&self) -> usize {
        self.design.chunks.iter().sum()
    }

    pub fn build_simulator(&self) -> Result<Box<dyn Simulator>> {
        let forcing = match &self.simulator.forcing {
            Some(p) => Some(simulators::ForcingSeries::read(p)?),
            None => None,
        };
        simulators::build(&self.simulator.name, forcing, self.simulator.params.as_deref())
    }

    /// Names, bounds and priors of the inputs, from the config override or
    /// the simulator defaults.
    pub fn inputs(&self, sim: &dyn Simulator) -> Result<Vec<ParameterConfig>> {
        match &self.parameters {
            Some(p) if p.len() != sim.input_dim() => Err(Error::Config(format!(
                "{} parameters configured for a simulator with {} inputs",
                p.len(),
                sim.input_dim()
            ))),
            Some(p) => Ok(p.clone()),
            None => Ok(sim
                .input_names()
                .into_iter()
                .zip(sim.bounds())
                .map(|(name, (lower, upper))| ParameterConfig {
                    name,
                    lower,
                    upper,
                    prior: None,
                })
                .collect()),
        }
    }
}

impl ParameterConfig {
    pub fn prior(&self) -> Prior {
        self.prior
            .unwrap_or_else(|| Prior::truncated_normal_for(self.lower, self.upper))
    }
}
