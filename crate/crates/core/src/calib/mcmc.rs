//! Blocked Gaussian random-walk Metropolis.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CalibrationProblem, Evaluation};
use crate::error::{Error, Result};
use crate::io::{b64_matrix, b64_vec};
use crate::rng::{stream_rng, UqRng};

const INIT_ATTEMPTS: usize = 50;
/// Acceptance rate targeted by the optional adaptation phase.
const TARGET_ACCEPTANCE: f64 = 0.3;
/// Shortest first adaptation half from which per-parameter spreads are
/// estimated.
const MIN_SPREAD_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Recorded iterations per chain (each iteration updates every block).
    pub iterations: usize,
    pub chains: usize,
    pub seed: u64,
    /// Parameter groups updated jointly; `None` uses the problem defaults.
    pub blocks: Option<Vec<Vec<usize>>>,
    /// Proposal standard deviation per parameter; `None` uses a tenth of
    /// each prior standard deviation.
    pub proposal_scales: Option<Vec<f64>>,
    /// Length of the scale-adaptation phase run before recording: the first
    /// half tunes one factor per block, the second half restarts from
    /// per-parameter scales set by the spread seen in the first half. The
    /// adapted scales are then frozen.
    pub adapt_iterations: usize,
    /// Store every `record_every`-th iteration.
    pub record_every: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            iterations: 10_000,
            chains: 4,
            seed: 0,
            blocks: None,
            proposal_scales: None,
            adapt_iterations: 0,
            record_every: 1,
        }
    }
}

/// Recorded states of one chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chain {
    pub index: usize,
    pub seed: u64,
    pub blocks: Vec<Vec<usize>>,
    /// Proposal standard deviations used while recording.
    #[serde(with = "b64_vec")]
    pub scales: Vec<f64>,
    pub record_every: usize,
    /// One row per recorded iteration.
    #[serde(with = "b64_matrix")]
    pub samples: DMatrix<f64>,
    #[serde(with = "b64_vec")]
    pub log_posterior: Vec<f64>,
    /// Per block, over the recorded run.
    pub accepted: Vec<u64>,
    pub proposed: Vec<u64>,
}

impl Chain {
    pub fn acceptance_rate(&self, block: usize) -> f64 {
        self.accepted[block] as f64 / self.proposed[block].max(1) as f64
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }
}

struct State {
    theta: Vec<f64>,
    eval: Evaluation,
}

fn validate(problem: &CalibrationProblem, config: &SamplerConfig) -> Result<(Vec<Vec<usize>>, Vec<f64>)> {
    if config.iterations == 0 || config.chains == 0 || config.record_every == 0 {
        return Err(Error::invalid("iterations, chains and record_every must be positive"));
    }
    let dim = problem.dim();
    let blocks = config.blocks.clone().unwrap_or_else(|| problem.default_blocks());
    if blocks.iter().any(|b| b.is_empty() || b.iter().any(|&i| i >= dim)) {
        return Err(Error::invalid(format!("blocks {blocks:?} invalid for {dim} parameters")));
    }
    let scales = match &config.proposal_scales {
        Some(s) => s.clone(),
        None => problem.priors().iter().map(|p| p.sd() / 10.0).collect(),
    };
    if scales.len() != dim || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!("proposal scales must be {dim} positive numbers")));
    }
    Ok((blocks, scales))
}

fn initialize(problem: &CalibrationProblem, rng: &mut UqRng, chain: usize) -> Result<State> {
    for _ in 0..INIT_ATTEMPTS {
        let theta: Vec<f64> = problem
            .priors()
            .iter()
            .map(|p| {
                let z: f64 = StandardNormal.sample(rng);
                p.mean() + 0.1 * p.sd() * z
            })
            .collect();
        let eval = problem.evaluate(&theta, None)?;
        if eval.log_posterior.is_finite() {
            return Ok(State { theta, eval });
        }
    }
    Err(Error::CannotInitialize {
        chain,
        attempts: INIT_ATTEMPTS,
    })
}

/// One Metropolis update of `block`. A Gaussian step and a uniform are
/// always drawn, so the random stream does not depend on the target.
fn block_step(
    problem: &CalibrationProblem,
    state: &mut State,
    block: &[usize],
    scales: &[f64],
    factor: f64,
    rng: &mut UqRng,
) -> Result<bool> {
    let n_x = problem.layout().n_x;
    let mut proposal = state.theta.clone();
    for &j in block {
        let z: f64 = StandardNormal.sample(rng);
        proposal[j] += factor * scales[j] * z;
    }
    let u: f64 = rng.random();
    let reuse = if block.iter().any(|&j| j < n_x) {
        None
    } else {
        state.eval.prediction.as_deref()
    };
    let eval = problem.evaluate(&proposal, reuse)?;
    if u.ln() < eval.log_posterior - state.eval.log_posterior {
        state.theta = proposal;
        state.eval = eval;
        Ok(true)
    } else {
        Ok(false)
    }
}

fn run_chain(
    problem: &CalibrationProblem,
    config: &SamplerConfig,
    blocks: &[Vec<usize>],
    base_scales: &[f64],
    index: usize,
) -> Result<Chain> {
    let mut rng = stream_rng(config.seed, index as u64);
    let mut state = initialize(problem, &mut rng, index)?;

    // Robbins-Monro on the log of a per-block scale factor. Over the first
    // half the per-parameter spread is also collected; the second half
    // restarts from scales proportional to that spread.
    let mut base = base_scales.to_vec();
    let mut log_factor = vec![0.0f64; blocks.len()];
    let half = config.adapt_iterations / 2;
    let dim = problem.dim();
    let (mut m1, mut m2) = (vec![0.0f64; dim], vec![0.0f64; dim]);
    for it in 0..config.adapt_iterations {
        if it == half && half >= MIN_SPREAD_SAMPLES {
            for (b, block) in blocks.iter().enumerate() {
                let optimal = 2.38 / (block.len() as f64).sqrt();
                for &j in block {
                    let mean = m1[j] / half as f64;
                    let sd = (m2[j] / half as f64 - mean * mean).max(0.0).sqrt();
                    if sd > 0.0 && sd.is_finite() {
                        base[j] = optimal * sd;
                    }
                }
                log_factor[b] = 0.0;
            }
        }
        let t = if it < half { it } else { it - half };
        let gain = 1.0 / ((t + 1) as f64).powf(0.6);
        for (b, block) in blocks.iter().enumerate() {
            let acc = block_step(problem, &mut state, block, &base, log_factor[b].exp(), &mut rng)?;
            log_factor[b] += gain * (acc as u8 as f64 - TARGET_ACCEPTANCE);
        }
        if it < half {
            for (j, &v) in state.theta.iter().enumerate() {
                m1[j] += v;
                m2[j] += v * v;
            }
        }
    }
    let mut scales = base.clone();
    for (block, lf) in blocks.iter().zip(&log_factor) {
        for &j in block {
            scales[j] = base[j] * lf.exp();
        }
    }

    let n_rec = config.iterations / config.record_every;
    let mut samples = DMatrix::zeros(n_rec, dim);
    let mut log_posterior = Vec::with_capacity(n_rec);
    let mut accepted = vec![0u64; blocks.len()];
    let mut proposed = vec![0u64; blocks.len()];
    for it in 0..config.iterations {
        for (b, block) in blocks.iter().enumerate() {
            if block_step(problem, &mut state, block, &scales, 1.0, &mut rng)? {
                accepted[b] += 1;
            }
            proposed[b] += 1;
        }
        if (it + 1) % config.record_every == 0 {
            let row = log_posterior.len();
            for (j, v) in state.theta.iter().enumerate() {
                samples[(row, j)] = *v;
            }
            log_posterior.push(state.eval.log_posterior);
        }
    }
    Ok(Chain {
        index,
        seed: config.seed,
        blocks: blocks.to_vec(),
        scales,
        record_every: config.record_every,
        samples,
        log_posterior,
        accepted,
        proposed,
    })
}

/// Runs `config.chains` independent chains in parallel; chain `c` draws
/// from random stream `c` of `config.seed`. Chains start near the prior
/// means, jittered by a tenth of the prior standard deviation.
pub fn rwm_sample(problem: &CalibrationProblem, config: &SamplerConfig) -> Result<Vec<Chain>> {
    let (blocks, scales) = validate(problem, config)?;
    (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(problem, config, &blocks, &scales, c))
        .collect()
}
