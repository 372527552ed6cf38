//! Posterior mode by multi-start Nelder-Mead.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CalibrationProblem;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

const MAX_RESTARTS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapEstimate {
    pub theta: Vec<f64>,
    pub log_posterior: f64,
    /// Index of the start that produced the optimum.
    pub start: usize,
    pub evaluations: usize,
}

/// Folds `v` back into `[lo, hi]` by mirror reflection at the bounds.
fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let w = hi - lo;
            let y = (v - lo).rem_euclid(2.0 * w);
            lo + if y > w { 2.0 * w - y } else { y }
        }
        (true, false) if v < lo => 2.0 * lo - v,
        (false, true) if v > hi => 2.0 * hi - v,
        _ => v,
    }
}

struct Objective<'a> {
    problem: &'a CalibrationProblem,
    bounds: Vec<(f64, f64)>,
    evaluations: usize,
}

impl Objective<'_> {
    fn project(&self, theta: &mut [f64]) {
        for (v, &(lo, hi)) in theta.iter_mut().zip(&self.bounds) {
            *v = reflect(*v, lo, hi);
        }
    }

    /// Negative log-posterior; `+inf` outside the support.
    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        let lp = self.problem.log_posterior(theta)?;
        Ok(if lp.is_nan() { f64::INFINITY } else { -lp })
    }
}

/// Adaptive-parameter Nelder-Mead from `start` with initial edge lengths
/// `steps`; vertices are reflected into the box before evaluation.
fn nelder_mead(obj: &mut Objective, start: &[f64], steps: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = start.len();
    let nf = n as f64;
    let (alpha, gamma, rho, shrink) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(start.to_vec());
    for j in 0..n {
        let mut v = start.to_vec();
        v[j] += steps[j];
        obj.project(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| obj.value(v)).collect::<Result<_>>()?;
    let max_iter = 2000 * (n + 1);
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[n]);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).zip(steps).map(|((a, b), s)| (a - b).abs() / s))
            .fold(0.0f64, f64::max);
        if (worst - best).abs() <= 1e-14 * (1.0 + best.abs()) && diameter < 1e-9 {
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let mut xr = along(alpha);
        obj.project(&mut xr);
        let fr = obj.value(&xr)?;
        if fr < values[0] {
            let mut xe = along(alpha * gamma);
            obj.project(&mut xe);
            let fe = obj.value(&xe)?;
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (mut xc, outside) = if fr < values[n] { (along(alpha * rho), true) } else { (along(-rho), false) };
        obj.project(&mut xc);
        let fc = obj.value(&xc)?;
        if (outside && fc <= fr) || (!outside && fc < values[n]) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let mut v: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, x)| b + shrink * (x - b))
                .collect();
            obj.project(&mut v);
            values[i] = obj.value(&v)?;
            simplex[i] = v;
        }
    }
    let i = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("non-empty simplex");
    Ok((simplex[i].clone(), values[i]))
}

/// Restarts the simplex around the incumbent until it stops improving.
fn optimize_from(problem: &CalibrationProblem, start: &[f64]) -> Result<Option<(Vec<f64>, f64, usize)>> {
    let priors = problem.priors();
    let mut obj = Objective {
        problem,
        bounds: priors.iter().map(|p| p.support()).collect(),
        evaluations: 0,
    };
    let mut x = start.to_vec();
    obj.project(&mut x);
    let mut f = obj.value(&x)?;
    if !f.is_finite() {
        return Ok(None);
    }
    let mut steps: Vec<f64> = priors.iter().map(|p| 0.1 * p.sd()).collect();
    for _ in 0..MAX_RESTARTS {
        let (xn, fn_) = nelder_mead(&mut obj, &x, &steps)?;
        let improved = f - fn_ > 1e-12 * (1.0 + f.abs());
        if fn_ <= f {
            x = xn;
            f = fn_;
        }
        if !improved {
            break;
        }
        for s in &mut steps {
            *s *= 0.5;
        }
    }
    Ok(Some((x, f, obj.evaluations)))
}

/// Maximizes the log-posterior from `n_starts` prior draws (random stream
/// 0 of `seed`).
pub fn map_estimate(problem: &CalibrationProblem, n_starts: usize, seed: u64) -> Result<MapEstimate> {
    map_estimate_with_starts(problem, &[], n_starts, seed)
}

/// As [`map_estimate`], with additional caller-supplied starting points
/// tried before the prior draws.
pub fn map_estimate_with_starts(
    problem: &CalibrationProblem,
    extra_starts: &[Vec<f64>],
    n_starts: usize,
    seed: u64,
) -> Result<MapEstimate> {
    if n_starts + extra_starts.len() == 0 {
        return Err(Error::invalid("need at least one start"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut starts: Vec<Vec<f64>> = extra_starts.to_vec();
    for _ in 0..n_starts {
        starts.push(problem.priors().iter().map(|p| p.sample(&mut rng)).collect());
    }
    if let Some(s) = starts.iter().find(|s| s.len() != problem.dim()) {
        return Err(Error::shape(format!("start of length {} for {} parameters", s.len(), problem.dim())));
    }
    let results: Vec<Option<(Vec<f64>, f64, usize)>> = starts
        .par_iter()
        .map(|s| optimize_from(problem, s))
        .collect::<Result<_>>()?;
    let evaluations = results.iter().flatten().map(|r| r.2).sum();
    let (start, best) = results
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))
        .ok_or(Error::InfeasibleStarts(starts.len()))?;
    Ok(MapEstimate {
        theta: best.0,
        log_posterior: -best.1,
        start,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::{ErrorModel, ForwardModel, Prior};

    struct Flat(usize);

    impl ForwardModel for Flat {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn output_len(&self) -> usize {
            1
        }
        fn predict(&self, _x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }
    }

    #[test]
    fn reflection() {
        assert_eq!(reflect(1.2, 0.0, 1.0), 0.8);
        assert!((reflect(-0.3, 0.0, 1.0) - 0.3).abs() < 1e-15);
        assert!((reflect(2.3, 0.0, 1.0) - 0.3).abs() < 1e-15);
        assert_eq!(reflect(5.0, f64::NEG_INFINITY, f64::INFINITY), 5.0);
    }

    #[test]
    fn flat_likelihood_gives_prior_modes() {
        let bounds = [(0.5, 1.1), (0.5, 1.5), (1.0, 1.5)];
        let p = CalibrationProblem::new(
            Box::new(Flat(3)),
            vec![0.0],
            vec![0.0],
            bounds.iter().map(|&(a, b)| Prior::truncated_normal_for(a, b)).collect(),
            vec!["a".into(), "b".into(), "c".into()],
            ErrorModel::IidKnown { sigma: 1.0 },
        )
        .unwrap();
        let m = map_estimate(&p, 4, 3).unwrap();
        for (v, (a, b)) in m.theta.iter().zip(bounds) {
            assert!((v - 0.5 * (a + b)).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn infeasible_starts() {
        let p = CalibrationProblem::new(
            Box::new(Flat(1)),
            vec![0.0],
            vec![0.0],
            vec![Prior::Uniform { lower: 0.0, upper: 1.0 }],
            vec!["a".into()],
            ErrorModel::IidKnown { sigma: 1.0 },
        )
        .unwrap();
        assert!(map_estimate(&p, 0, 1).is_err());
    }
}
