//! Posterior summaries pooled over chains.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::mcmc::Chain;
use crate::error::{Error, Result};
use crate::io::fmt_f64;

pub const QUANTILE_LEVELS: [f64; 5] = [0.025, 0.25, 0.5, 0.75, 0.975];
pub const KDE_POINTS: usize = 512;
const MIN_SAMPLES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    /// At [`QUANTILE_LEVELS`].
    pub quantiles: [f64; 5],
    /// Split-chain potential scale reduction.
    pub rhat: f64,
    pub ess: f64,
    pub kde_grid: Vec<f64>,
    pub kde_density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_samples: usize,
    pub params: Vec<ParameterSummary>,
    /// Joint posterior mode, attached from the MAP search.
    pub map: Option<Vec<f64>>,
}

impl PosteriorSummary {
    /// `parameter,mean,mode,sd,q2.5,q25,q50,q75,q97.5,rhat,ess`; the mode
    /// is the joint MAP (`NaN` when not attached).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,mean,mode,sd,q2.5,q25,q50,q75,q97.5,rhat,ess\n");
        for (j, p) in self.params.iter().enumerate() {
            let mode = self.map.as_ref().map_or(f64::NAN, |m| m[j]);
            let mut fields = vec![p.name.clone(), fmt_f64(p.mean), fmt_f64(mode), fmt_f64(p.sd)];
            fields.extend(p.quantiles.iter().map(|&q| fmt_f64(q)));
            fields.push(fmt_f64(p.rhat));
            fields.push(fmt_f64(p.ess));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Long format `parameter,value,density`.
    pub fn kde_csv(&self) -> String {
        let mut out = String::from("parameter,value,density\n");
        for p in &self.params {
            for (x, d) in p.kde_grid.iter().zip(&p.kde_density) {
                out.push_str(&format!("{},{},{}\n", p.name, fmt_f64(*x), fmt_f64(*d)));
            }
        }
        out
    }

    pub fn param(&self, name: &str) -> Option<&ParameterSummary> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Post-burn-in, thinned rows of one chain.
fn kept_rows(chain: &Chain, burn_in_fraction: f64, thin: usize) -> Vec<usize> {
    let start = (burn_in_fraction * chain.len() as f64).floor() as usize;
    (start..chain.len()).step_by(thin).collect()
}

fn check_args(chains: &[Chain], burn_in_fraction: f64, thin: usize) -> Result<()> {
    if chains.is_empty() {
        return Err(Error::invalid("no chains to summarize"));
    }
    if !(0.0..1.0).contains(&burn_in_fraction) || thin == 0 {
        return Err(Error::invalid(format!(
            "burn-in fraction {burn_in_fraction} must lie in [0, 1) and thin {thin} be positive"
        )));
    }
    let dim = chains[0].samples.ncols();
    if chains.iter().any(|c| c.samples.ncols() != dim) {
        return Err(Error::shape("chains have different parameter counts"));
    }
    Ok(())
}

/// Pooled post-burn-in samples, one row per sample, chains in order.
pub fn pooled_samples(chains: &[Chain], burn_in_fraction: f64, thin: usize) -> Result<DMatrix<f64>> {
    check_args(chains, burn_in_fraction, thin)?;
    let dim = chains[0].samples.ncols();
    let mut rows: Vec<f64> = Vec::new();
    for c in chains {
        for r in kept_rows(c, burn_in_fraction, thin) {
            rows.extend(c.samples.row(r).iter());
        }
    }
    Ok(DMatrix::from_row_slice(rows.len() / dim, dim, &rows))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v)
}

/// Split-chain Gelman-Rubin statistic: each chain is halved and the halves
/// are compared as separate chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if n < 2 {
        return f64::NAN;
    }
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let off = c.len() - 2 * n;
            [&c[off..off + n], &c[off + n..]]
        })
        .collect();
    let stats: Vec<(f64, f64)> = halves.iter().map(|h| mean_var(h)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let b = n as f64 * mean_var(&means).1;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let nf = n as f64;
    (((nf - 1.0) / nf * w + b / nf) / w).sqrt()
}

/// Integrated autocorrelation time with Sokal's adaptive window
/// (smallest `M >= 5 tau(M)`).
pub fn integrated_autocorrelation_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    let (m, v) = mean_var(xs);
    if n < 4 || v == 0.0 {
        return 1.0;
    }
    let c0 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c: f64 = xs[..n - lag].iter().zip(&xs[lag..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>() / n as f64;
        tau += 2.0 * c / c0;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Gaussian kernel density with Silverman's bandwidth on a regular grid
/// spanning the sample range padded by three bandwidths.
pub fn kde(xs: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (_, v) = mean_var(xs);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { v.sqrt().min(iqr / 1.34) } else { v.sqrt() };
    let scale = sorted[sorted.len() - 1].abs().max(sorted[0].abs()).max(1.0);
    let h = (0.9 * spread * (xs.len() as f64).powf(-0.2)).max(1e-12 * scale);
    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[sorted.len() - 1] + 3.0 * h;
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..KDE_POINTS).map(|k| lo + k as f64 * step).collect();
    let norm = 1.0 / (xs.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    // kernels beyond 8 bandwidths contribute below 1e-14
    let density = grid
        .iter()
        .map(|&g| {
            let from = sorted.partition_point(|&x| x < g - 8.0 * h);
            let to = sorted.partition_point(|&x| x <= g + 8.0 * h);
            sorted[from..to].iter().map(|&x| (-0.5 * ((g - x) / h).powi(2)).exp()).sum::<f64>() * norm
        })
        .collect();
    (grid, density)
}

/// Pools post-burn-in samples (every `thin`-th) across chains and
/// summarizes each parameter.
pub fn summarize(chains: &[Chain], names: &[String], burn_in_fraction: f64, thin: usize) -> Result<PosteriorSummary> {
    check_args(chains, burn_in_fraction, thin)?;
    let dim = chains[0].samples.ncols();
    if names.len() != dim {
        return Err(Error::shape(format!("{} names for {dim} parameters", names.len())));
    }
    let kept: Vec<Vec<usize>> = chains.iter().map(|c| kept_rows(c, burn_in_fraction, thin)).collect();
    let total: usize = kept.iter().map(Vec::len).sum();
    if total < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            got: total,
            need: MIN_SAMPLES,
        });
    }
    let params = (0..dim)
        .map(|j| {
            let per_chain: Vec<Vec<f64>> = chains
                .iter()
                .zip(&kept)
                .map(|(c, rows)| rows.iter().map(|&r| c.samples[(r, j)]).collect())
                .collect();
            let pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
            let (mean, var) = mean_var(&pooled);
            let mut sorted = pooled.clone();
            sorted.sort_by(f64::total_cmp);
            let quantiles = QUANTILE_LEVELS.map(|q| quantile_sorted(&sorted, q));
            let ess = per_chain
                .iter()
                .filter(|c| !c.is_empty())
                .map(|c| c.len() as f64 / integrated_autocorrelation_time(c))
                .sum();
            let (kde_grid, kde_density) = kde(&pooled);
            ParameterSummary {
                name: names[j].clone(),
                mean,
                sd: var.sqrt(),
                quantiles,
                rhat: split_rhat(&per_chain),
                ess,
                kde_grid,
                kde_density,
            }
        })
        .collect();
    Ok(PosteriorSummary {
        n_samples: total,
        params,
        map: None,
    })
}
