//! The staged workflow behind the `uq` command: each stage reads the
//! artifacts of its predecessors from the work directory and writes its own.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calib::summary::{pooled_samples, quantile_sorted};
use crate::calib::{
    discrepancy, map_estimate_with_starts, rwm_sample, summarize, Chain, CalibrationProblem, ErrorModel, MapEstimate,
    PosteriorSummary, SamplerConfig,
};
use crate::config::{artifacts, DataSource, ParameterConfig, PipelineConfig, SyntheticData};
use crate::doe::{self, ExperimentalDesign};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_artifact, read_csv, write_artifact, write_csv, write_text, CsvTable};
use crate::pce::{fit_multi, CompiledSurrogate, FitReport, MultiOutputSurrogate};
use crate::rng::stream_rng;
use crate::simulators::{run_design, Simulator};
use crate::sobol::SobolReport;

const SURROGATE_KIND: &str = "surrogate";
const CHAINS_KIND: &str = "chains";
const MAP_KIND: &str = "map";
/// Separates the validation design from the training design.
const VALIDATION_SEED_OFFSET: u64 = 0x5eed;
/// Stream of the calibration seed used to pick posterior predictive draws;
/// chains use streams `0..chains`.
const PREDICTIVE_STREAM: u64 = 1 << 32;

/// Sampler output plus the names of the sampled parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainsFile {
    pub param_names: Vec<String>,
    pub chains: Vec<Chain>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapFile {
    pub param_names: Vec<String>,
    pub estimate: MapEstimate,
}

/// Observed series; `truth` holds the generating parameter vector for
/// synthetic data in the layout of the calibration problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub truth: Option<Vec<f64>>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    workdir: PathBuf,
    sim: Box<dyn Simulator>,
    inputs: Vec<ParameterConfig>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let sim = cfg.build_simulator()?;
        let inputs = cfg.inputs(sim.as_ref())?;
        Ok(Pipeline {
            workdir: cfg.paths.workdir.clone(),
            cfg,
            sim,
            inputs,
        })
    }

    pub fn with_workdir(mut self, workdir: PathBuf) -> Self {
        self.workdir = workdir;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    pub fn simulator(&self) -> &dyn Simulator {
        self.sim.as_ref()
    }

    pub fn path(&self, artifact: &str) -> PathBuf {
        self.workdir.join(artifact)
    }

    fn require(&self, artifact: &str, producer: &str) -> Result<PathBuf> {
        let p = self.path(artifact);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact {
                path: p.display().to_string(),
                producer: producer.into(),
            })
        }
    }

    pub fn input_names(&self) -> Vec<String> {
        self.inputs.iter().map(|p| p.name.clone()).collect()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.inputs.iter().map(|p| (p.lower, p.upper)).collect()
    }

    fn time_header(&self) -> Vec<String> {
        self.sim.times().iter().map(|&t| format!("t{}", fmt_f64(t))).collect()
    }

    // ---- design -------------------------------------------------------

    pub fn design(&self) -> Result<ExperimentalDesign> {
        let d = doe::generate(&self.bounds(), &self.cfg.design.chunks, self.cfg.design.seed)?;
        write_csv(&self.path(artifacts::DESIGN), &CsvTable::from_matrix(self.input_names(), &d.points))?;
        info!("design: {} points in {} dimensions", d.size(), d.dim());
        Ok(d)
    }

    pub fn load_design(&self) -> Result<ExperimentalDesign> {
        let table = read_csv(&self.require(artifacts::DESIGN, "design")?)?;
        if table.header != self.input_names() {
            return Err(Error::Config(format!(
                "design.csv columns {:?} do not match the configured inputs {:?}",
                table.header,
                self.input_names()
            )));
        }
        Ok(ExperimentalDesign {
            points: table.to_matrix(),
            bounds: self.bounds(),
            seed: self.cfg.design.seed,
            chunk_sizes: self.cfg.design.chunks.clone(),
        })
    }

    // ---- simulate -----------------------------------------------------

    pub fn simulate(&self) -> Result<DMatrix<f64>> {
        let d = self.load_design()?;
        let start = Instant::now();
        let y = run_design(self.sim.as_ref(), &d.points)?;
        info!(
            "simulate: {} runs of {} in {:.3} s",
            d.size(),
            self.sim.name(),
            start.elapsed().as_secs_f64()
        );
        write_csv(&self.path(artifacts::OUTPUTS), &CsvTable::from_matrix(self.time_header(), &y))?;
        let times = self.sim.times();
        write_csv(
            &self.path(artifacts::TIMES),
            &CsvTable {
                header: vec!["t".into()],
                rows: times.iter().map(|&t| vec![t]).collect(),
            },
        )?;
        Ok(y)
    }

    pub fn load_outputs(&self) -> Result<DMatrix<f64>> {
        let table = read_csv(&self.require(artifacts::OUTPUTS, "simulate")?)?;
        if table.header.len() != self.sim.output_len() {
            return Err(Error::shape(format!(
                "outputs.csv has {} columns, the simulator produces {}",
                table.header.len(),
                self.sim.output_len()
            )));
        }
        Ok(table.to_matrix())
    }

    // ---- fit ----------------------------------------------------------

    pub fn fit(&self) -> Result<(MultiOutputSurrogate, FitReport)> {
        let d = self.load_design()?;
        let y = self.load_outputs()?;
        let [lo, hi] = self.cfg.pce.degree_range;
        let (surr, report) = fit_multi(&d, &y, self.cfg.pca.target_fraction, (lo, hi), &self.cfg.pce.fit_options())?;
        info!("fit: {} components in {:.3} s", report.retained, report.seconds);
        for line in loo_table(&report, d.size()).lines() {
            info!("fit: {line}");
        }
        write_artifact(&self.path(artifacts::SURROGATE), SURROGATE_KIND, &surr)?;
        write_text(&self.path(artifacts::FIT_REPORT), &loo_table(&report, d.size()))?;
        write_text(&self.path(artifacts::FIT_COMPONENTS), &components_table(&report))?;

        let mut header = self.input_names();
        header.extend((0..report.retained).map(|p| format!("z{p}")));
        let scores = surr.rb.scores(&y)?.scores;
        let rows = (0..d.size())
            .map(|k| d.points.row(k).iter().chain(scores.row(k).iter()).copied().collect())
            .collect();
        write_csv(&self.path(artifacts::PC_SCORES), &CsvTable { header, rows })?;

        self.validate_surrogate(&surr)?;
        Ok((surr, report))
    }

    /// Compares fresh simulator runs with the surrogate and logs the cost
    /// ratio of the two.
    fn validate_surrogate(&self, surr: &MultiOutputSurrogate) -> Result<()> {
        let n = self.cfg.pce.validation_runs;
        if n == 0 {
            return Ok(());
        }
        let seed = self.cfg.design.seed.wrapping_add(VALIDATION_SEED_OFFSET);
        let d = doe::generate(&self.bounds(), &[n], seed)?;
        let fast = CompiledSurrogate::new(surr);
        let times = self.sim.times();
        let mut rows = Vec::with_capacity(n * times.len());
        let (mut sim_secs, mut surr_secs, mut surr_calls) = (0.0, 0.0, 0usize);
        for k in 0..n {
            let x = d.row(k);
            let start = Instant::now();
            let y = self.sim.run(&x)?;
            sim_secs += start.elapsed().as_secs_f64();
            let start = Instant::now();
            let mut yhat = fast.predict_series(&x)?;
            let mut calls = 1;
            while start.elapsed().as_secs_f64() < 0.01 {
                yhat = fast.predict_series(&x)?;
                calls += 1;
            }
            surr_secs += start.elapsed().as_secs_f64();
            surr_calls += calls;
            for (j, &t) in times.iter().enumerate() {
                rows.push(vec![k as f64, t, y[j], yhat[j]]);
            }
        }
        let per_sim = sim_secs / n as f64;
        let per_surr = surr_secs / surr_calls as f64;
        info!(
            "timing: simulator {:.3e} s/run, surrogate {:.3e} s/call, ratio {:.1}",
            per_sim,
            per_surr,
            per_sim / per_surr
        );
        write_csv(
            &self.path(artifacts::VALIDATION),
            &CsvTable {
                header: vec!["run".into(), "t".into(), "simulator".into(), "surrogate".into()],
                rows,
            },
        )
    }

    pub fn load_surrogate(&self) -> Result<MultiOutputSurrogate> {
        let surr: MultiOutputSurrogate = read_artifact(&self.require(artifacts::SURROGATE, "fit")?, SURROGATE_KIND)?;
        if surr.input_dim() != self.inputs.len() || surr.output_len() != self.sim.output_len() {
            return Err(Error::Config(
                "surrogate.json does not match the configured simulator; rerun `uq fit`".into(),
            ));
        }
        Ok(surr)
    }

    // ---- predict ------------------------------------------------------

    /// Surrogate traces at the rows of `points` (a CSV with the input
    /// names as header), or at the centre of the input box.
    pub fn predict(&self, points: Option<&Path>) -> Result<DMatrix<f64>> {
        let surr = self.load_surrogate()?;
        let x = match points {
            Some(p) => {
                let t = read_csv(p)?;
                if t.header != self.input_names() {
                    return Err(Error::Config(format!(
                        "{}: expected columns {:?}",
                        p.display(),
                        self.input_names()
                    )));
                }
                t.to_matrix()
            }
            None => DMatrix::from_fn(1, self.inputs.len(), |_, j| 0.5 * (self.inputs[j].lower + self.inputs[j].upper)),
        };
        let times = self.sim.times();
        let mut out = DMatrix::zeros(x.nrows(), times.len());
        let mut rows = Vec::new();
        for k in 0..x.nrows() {
            let xk: Vec<f64> = x.row(k).iter().copied().collect();
            let y = surr.predict_series(&xk)?;
            for (j, (&t, &v)) in times.iter().zip(&y).enumerate() {
                out[(k, j)] = v;
                rows.push(vec![k as f64, t, v]);
            }
        }
        write_csv(
            &self.path(artifacts::PREDICTIONS),
            &CsvTable {
                header: vec!["point".into(), "t".into(), "y".into()],
                rows,
            },
        )?;
        Ok(out)
    }

    // ---- sobol --------------------------------------------------------

    pub fn sobol(&self, time_variant: bool) -> Result<SobolReport> {
        let surr = self.load_surrogate()?;
        let names = self.input_names();
        let report = SobolReport::for_components(&surr, &names, self.cfg.sobol.subsets)?;
        write_text(&self.path(artifacts::SOBOL), &report.to_csv())?;
        if time_variant || self.cfg.sobol.time_variant {
            let inputs = self.sobol_inputs(&names)?;
            let times = self.sim.times();
            let (_, series) = SobolReport::for_times(&surr, &names, &inputs, &times)?;
            let mut out = String::from("t,input,S\n");
            for (j, t) in times.iter().enumerate() {
                for s in &series {
                    out.push_str(&format!("{},{},{}\n", fmt_f64(*t), names[s.input], fmt_f64(s.values[j])));
                }
            }
            write_text(&self.path(artifacts::SOBOL_T), &out)?;
            let undefined = series.iter().flat_map(|s| &s.values).filter(|v| v.is_nan()).count();
            if undefined > 0 {
                info!("sobol: {undefined} time-variant entries undefined (zero output variance), written as NaN");
            }
        }
        Ok(report)
    }

    fn sobol_inputs(&self, names: &[String]) -> Result<Vec<usize>> {
        match &self.cfg.sobol.inputs {
            None => Ok((0..names.len()).collect()),
            Some(sel) => sel
                .iter()
                .map(|s| {
                    names
                        .iter()
                        .position(|n| n == s)
                        .ok_or_else(|| Error::Config(format!("sobol.inputs: unknown input `{s}`")))
                })
                .collect(),
        }
    }

    // ---- calibrate ----------------------------------------------------

    /// Observations from the configured source; synthetic data are
    /// generated with the simulator itself, not the surrogate.
    pub fn observations(&self) -> Result<Observations> {
        let times = self.sim.times();
        match &self.cfg.calibration.data {
            DataSource::File(p) => {
                let t = read_csv(p)?;
                let (ts, y) = match (t.column("t"), t.column("y")) {
                    (Some(ts), Some(y)) => (ts, y),
                    _ => return Err(Error::Config(format!("{}: expected columns t,y", p.display()))),
                };
                let matches = ts.len() == times.len()
                    && ts.iter().zip(&times).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                if !matches {
                    return Err(Error::Config(format!(
                        "{}: time stamps differ from the simulator's output grid",
                        p.display()
                    )));
                }
                Ok(Observations { times, y, truth: None })
            }
            DataSource::Synthetic(s) => {
                synthetic_observations(self.sim.as_ref(), &self.bounds(), s, &self.cfg.calibration.error_model)
            }
        }
    }

    pub fn problem(&self, obs: &Observations) -> Result<CalibrationProblem> {
        let surr = self.load_surrogate()?;
        CalibrationProblem::new(
            Box::new(CompiledSurrogate::new(&surr)),
            obs.y.clone(),
            obs.times.clone(),
            self.inputs.iter().map(ParameterConfig::prior).collect(),
            self.input_names(),
            self.cfg.calibration.error_model.clone(),
        )
    }

    pub fn load_observations(&self) -> Result<Observations> {
        let t = read_csv(&self.require(artifacts::OBSERVATIONS, "calibrate")?)?;
        match (t.column("t"), t.column("y")) {
            (Some(times), Some(y)) => Ok(Observations { times, y, truth: None }),
            _ => Err(Error::Config("observations.csv must have columns t,y".into())),
        }
    }

    fn sampler_config(&self, problem: &CalibrationProblem) -> Result<SamplerConfig> {
        let c = &self.cfg.calibration;
        let blocks = match &c.blocks {
            None => None,
            Some(groups) => {
                let names = problem.param_names();
                let blocks = groups
                    .iter()
                    .map(|g| {
                        g.iter()
                            .map(|n| {
                                names.iter().position(|m| m == n).ok_or_else(|| {
                                    Error::Config(format!("calibration.blocks: unknown parameter `{n}`"))
                                })
                            })
                            .collect::<Result<Vec<usize>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(blocks)
            }
        };
        Ok(SamplerConfig {
            iterations: c.iterations,
            chains: c.chains,
            seed: c.seed,
            blocks,
            proposal_scales: None,
            adapt_iterations: c.adapt_iterations,
            record_every: c.record_every(),
        })
    }

    pub fn calibrate(&self) -> Result<ChainsFile> {
        let obs = self.observations()?;
        write_csv(
            &self.path(artifacts::OBSERVATIONS),
            &CsvTable {
                header: vec!["t".into(), "y".into()],
                rows: obs.times.iter().zip(&obs.y).map(|(&t, &y)| vec![t, y]).collect(),
            },
        )?;
        let problem = self.problem(&obs)?;
        let config = self.sampler_config(&problem)?;
        let start = Instant::now();
        let chains = rwm_sample(&problem, &config)?;
        info!(
            "calibrate: {} chains x {} iterations in {:.3} s",
            config.chains,
            config.iterations,
            start.elapsed().as_secs_f64()
        );
        for c in &chains {
            let rates: Vec<String> = (0..c.blocks.len()).map(|b| format!("{:.2}", c.acceptance_rate(b))).collect();
            info!("calibrate: chain {} acceptance {}", c.index, rates.join(" "));
        }
        let file = ChainsFile {
            param_names: problem.param_names(),
            chains,
        };
        write_artifact(&self.path(artifacts::CHAINS), CHAINS_KIND, &file)?;
        Ok(file)
    }

    pub fn load_chains(&self) -> Result<ChainsFile> {
        read_artifact(&self.require(artifacts::CHAINS, "calibrate")?, CHAINS_KIND)
    }

    // ---- map ----------------------------------------------------------

    /// Multi-start search seeded additionally with the best sampled state.
    pub fn map(&self) -> Result<MapFile> {
        let obs = self.load_observations()?;
        let problem = self.problem(&obs)?;
        let chains = self.load_chains()?;
        check_names(&chains.param_names, &problem.param_names())?;
        let best = chains
            .chains
            .iter()
            .flat_map(|c| c.log_posterior.iter().enumerate().map(move |(r, &lp)| (lp, c, r)))
            .filter(|(lp, _, _)| lp.is_finite())
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let extra: Vec<Vec<f64>> = best
            .map(|(_, c, r)| vec![c.samples.row(r).iter().copied().collect()])
            .unwrap_or_default();
        let c = &self.cfg.calibration;
        let estimate = map_estimate_with_starts(&problem, &extra, c.map_starts, c.seed)?;
        info!(
            "map: log-posterior {:.6} after {} evaluations",
            estimate.log_posterior, estimate.evaluations
        );
        let file = MapFile {
            param_names: problem.param_names(),
            estimate,
        };
        write_artifact(&self.path(artifacts::MAP), MAP_KIND, &file)?;
        Ok(file)
    }

    pub fn load_map(&self) -> Result<MapFile> {
        read_artifact(&self.require(artifacts::MAP, "map")?, MAP_KIND)
    }

    // ---- summarize ----------------------------------------------------

    pub fn summarize(&self) -> Result<PosteriorSummary> {
        let obs = self.load_observations()?;
        let problem = self.problem(&obs)?;
        let chains = self.load_chains()?;
        let names = problem.param_names();
        check_names(&chains.param_names, &names)?;
        let map = self.load_map()?;
        check_names(&map.param_names, &names)?;
        let c = &self.cfg.calibration;
        let mut summary = summarize(&chains.chains, &names, c.burn_in, c.thin)?;
        summary.map = Some(map.estimate.theta.clone());
        for p in &summary.params {
            if p.rhat > 1.1 {
                log::warn!("summarize: {} has split R-hat {:.3}", p.name, p.rhat);
            }
        }
        write_text(&self.path(artifacts::SUMMARY), &summary.to_csv())?;
        write_text(&self.path(artifacts::KDE), &summary.kde_csv())?;

        let theta = &map.estimate.theta;
        let pred = problem.predict(theta)?;
        let delta = problem.discrepancy(theta);
        let mut rows = Vec::with_capacity(obs.times.len());
        let mut negative = 0;
        for j in 0..obs.times.len() {
            let corrected = pred[j] + delta[j];
            let flag = if corrected < 0.0 { 1.0 } else { 0.0 };
            negative += flag as usize;
            rows.push(vec![obs.times[j], obs.y[j], pred[j], delta[j], corrected, flag]);
        }
        if negative > 0 {
            info!("summarize: corrected MAP prediction is negative at {negative} instants");
        }
        write_csv(
            &self.path(artifacts::MAP_FIT),
            &CsvTable {
                header: ["t", "observed", "model", "discrepancy", "corrected", "negative"]
                    .map(String::from)
                    .to_vec(),
                rows,
            },
        )?;
        self.posterior_predictive(&problem, &chains.chains, &obs.times)?;
        Ok(summary)
    }

    /// Pointwise bands of model plus discrepancy over posterior draws.
    fn posterior_predictive(&self, problem: &CalibrationProblem, chains: &[Chain], times: &[f64]) -> Result<()> {
        let c = &self.cfg.calibration;
        if c.predictive_samples == 0 {
            return Ok(());
        }
        let pooled = pooled_samples(chains, c.burn_in, c.thin)?;
        let mut rng = stream_rng(c.seed, PREDICTIVE_STREAM);
        let draws: Vec<Vec<f64>> = (0..c.predictive_samples)
            .map(|_| {
                let r = rng.random_range(0..pooled.nrows());
                let theta: Vec<f64> = pooled.row(r).iter().copied().collect();
                let pred = problem.predict(&theta)?;
                let delta = problem.discrepancy(&theta);
                Ok(pred.iter().zip(&delta).map(|(a, b)| a + b).collect())
            })
            .collect::<Result<_>>()?;
        let rows = (0..times.len())
            .map(|j| {
                let mut v: Vec<f64> = draws.iter().map(|d| d[j]).collect();
                v.sort_by(f64::total_cmp);
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                vec![
                    times[j],
                    mean,
                    quantile_sorted(&v, 0.025),
                    quantile_sorted(&v, 0.5),
                    quantile_sorted(&v, 0.975),
                ]
            })
            .collect();
        write_csv(
            &self.path(artifacts::PREDICTIVE),
            &CsvTable {
                header: ["t", "mean", "q2.5", "q50", "q97.5"].map(String::from).to_vec(),
                rows,
            },
        )
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<()> {
        self.design()?;
        self.simulate()?;
        self.fit()?;
        self.sobol(self.cfg.sobol.time_variant)?;
        self.calibrate()?;
        self.map()?;
        self.summarize()?;
        Ok(())
    }
}

fn check_names(found: &[String], expected: &[String]) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "artifact parameters {found:?} do not match the configuration {expected:?}; rerun `uq calibrate`"
        )))
    }
}

/// Normalized LOO errors, one column per component: `K,z0,z1,...`.
pub fn loo_table(report: &FitReport, k: usize) -> String {
    let mut header = vec!["K".to_string()];
    let mut row = vec![k.to_string()];
    for c in &report.components {
        header.push(format!("z{}", c.component));
        row.push(fmt_f64(c.loo_normalized));
    }
    format!("{}\n{}\n", header.join(","), row.join(","))
}

/// Per-component fit details, including every degree tried.
pub fn components_table(report: &FitReport) -> String {
    let mut out = String::from("component,eigenvalue,degree,loo,n_terms,n_candidates,selected\n");
    for c in &report.components {
        for &(degree, loo) in &c.loo_by_degree {
            let selected = degree == c.degree_selected;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.component,
                fmt_f64(c.eigenvalue),
                degree,
                fmt_f64(loo),
                if selected { c.n_terms.to_string() } else { String::new() },
                if selected { c.n_candidates.to_string() } else { String::new() },
                u8::from(selected)
            ));
        }
    }
    out
}

/// Simulator output at `x` plus a Legendre time discrepancy plus
/// stationary AR(1) noise.
///
/// `truth` is laid out for `error_model`: the discrepancy coefficients are
/// zero-padded to its degree and `tau` is the correlation length that
/// reproduces `rho` on the output grid.
pub fn synthetic_observations(
    sim: &dyn Simulator,
    bounds: &[(f64, f64)],
    s: &SyntheticData,
    error_model: &ErrorModel,
) -> Result<Observations> {
    let x = match &s.x {
        Some(x) if x.len() != bounds.len() => {
            return Err(Error::Config(format!(
                "synthetic x has {} entries for {} inputs",
                x.len(),
                bounds.len()
            )))
        }
        Some(x) => x.clone(),
        None => bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect(),
    };
    let times = sim.times();
    let mut y = sim.run(&x)?;
    if !s.b.is_empty() {
        for (v, d) in y.iter_mut().zip(discrepancy(&s.b, &times)?) {
            *v += d;
        }
    }
    let mut rng = stream_rng(s.seed, 0);
    let innovation = s.sigma * (1.0 - s.rho * s.rho).sqrt();
    let mut e = 0.0;
    for (j, v) in y.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(&mut rng);
        e = if j == 0 { s.sigma * z } else { s.rho * e + innovation * z };
        *v += e;
    }
    let truth = match error_model {
        ErrorModel::CorrDisc { degree, .. } if s.b.len() <= degree + 1 && times.len() > 1 && s.rho > 0.0 => {
            let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
            let mut t = x.clone();
            t.extend((0..=*degree).map(|a| s.b.get(a).copied().unwrap_or(0.0)));
            t.push(s.sigma);
            t.push(-dt / s.rho.ln());
            Some(t)
        }
        ErrorModel::Iid { .. } if s.b.iter().all(|&b| b == 0.0) && s.rho == 0.0 => {
            let mut t = x.clone();
            t.push(s.sigma);
            Some(t)
        }
        ErrorModel::IidKnown { .. } if s.b.iter().all(|&b| b == 0.0) && s.rho == 0.0 => Some(x.clone()),
        _ => None,
    };
    Ok(Observations { times, y, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators;

    #[test]
    fn synthetic_truth_layout() {
        let sim = simulators::build("toy_catchment", None, None).unwrap();
        let bounds = sim.bounds();
        let s = SyntheticData::default();
        let obs = synthetic_observations(sim.as_ref(), &bounds, &s, &ErrorModel::corr_disc_default()).unwrap();
        let truth = obs.truth.unwrap();
        assert_eq!(truth.len(), 8 + 6 + 2);
        assert_eq!(&truth[8..11], &s.b[..]);
        assert_eq!(&truth[11..14], &[0.0; 3]);
        assert_eq!(truth[14], 20.0);
        assert!(((-120.0 / truth[15]).exp() - 0.3).abs() < 1e-12);
        assert_eq!(obs.y.len(), 601);
    }

    #[test]
    fn synthetic_noise_statistics() {
        let sim = simulators::build("ishigami", None, None).unwrap();
        // a single-output simulator gives one draw per seed; use many seeds
        let s0 = SyntheticData {
            x: Some(vec![0.0; 3]),
            b: vec![],
            sigma: 2.0,
            rho: 0.0,
            seed: 0,
        };
        let draws: Vec<f64> = (0..4000)
            .map(|seed| {
                let s = SyntheticData { seed, ..s0.clone() };
                synthetic_observations(sim.as_ref(), &sim.bounds(), &s, &ErrorModel::iid_default()).unwrap().y[0]
            })
            .collect();
        let m = draws.iter().sum::<f64>() / 4000.0;
        let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / 3999.0;
        assert!(m.abs() < 4.0 * 2.0 / 4000f64.sqrt(), "{m}");
        assert!((v.sqrt() - 2.0).abs() < 0.1, "{v}");
    }

    #[test]
    fn tables() {
        let report = FitReport {
            retained: 2,
            explained_fraction: 0.99,
            components: (0..2)
                .map(|p| crate::pce::ComponentReport {
                    component: p,
                    eigenvalue: 1.0,
                    loo_by_degree: vec![(1, 0.5), (2, 0.25)],
                    degree_selected: 2,
                    loo_normalized: 0.25,
                    n_terms: 3,
                    n_candidates: 45,
                })
                .collect(),
            seconds: 0.0,
        };
        let q = fmt_f64(0.25);
        assert_eq!(loo_table(&report, 512), format!("K,z0,z1\n512,{q},{q}\n"));
        let t = components_table(&report);
        assert_eq!(t.lines().count(), 5);
        assert!(t.contains(&format!("0,{},2,{q},3,45,1\n", fmt_f64(1.0))));
    }
}
