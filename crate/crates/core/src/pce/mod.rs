//! Sparse polynomial chaos expansions.
//!
//! Each scalar target is fitted by hybrid least-angle regression: LAR picks
//! the order in which candidate terms enter, every model along the path is
//! refitted by ordinary least squares together with the constant term, and
//! the model with the smallest analytic leave-one-out error wins. The
//! multi-output surrogate fits one expansion per retained principal
//! component and recombines them through the reduced basis.

pub mod compiled;
pub mod lar;
pub mod loo;

use std::time::Instant;

use log::{debug, info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doe::ExperimentalDesign;
use crate::error::{Error, Result};
use crate::io::b64_vec;
use crate::pca::{self, ReducedBasis};
use crate::polybasis::{binomial, total_degree_set_capped, BasisSpec, MultiIndex};

pub use compiled::CompiledSurrogate;
pub use lar::{lar_path, standardize_columns, LarPath, PathEnd, PathPoint};
pub use loo::{loo_error, loo_error_with, ols, LooCorrection};

/// Path models whose LOO error is within this absolute distance of the
/// minimum are considered tied; the sparsest of them is kept.
const LOO_TIE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Apply the lasso modification (zero-crossing drops) on the LAR path.
    pub lasso: bool,
    pub loo_correction: LooCorrection,
    /// Upper bound on non-constant terms; `None` means `K - 2`.
    pub max_terms: Option<usize>,
    /// Degrees whose candidate set exceeds this size are skipped.
    pub max_candidates: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            lasso: false,
            loo_correction: LooCorrection::None,
            max_terms: None,
            max_candidates: 10_000,
        }
    }
}

/// A sparse expansion in an orthonormal tensor-product basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparsePce {
    pub spec: BasisSpec,
    pub active: Vec<MultiIndex>,
    #[serde(with = "b64_vec")]
    pub coeffs: Vec<f64>,
    pub loo_normalized: f64,
    pub degree_selected: usize,
}

impl SparsePce {
    pub fn new(spec: BasisSpec, active: Vec<MultiIndex>, coeffs: Vec<f64>) -> Result<Self> {
        if active.len() != coeffs.len() {
            return Err(Error::shape(format!(
                "{} multi-indices but {} coefficients",
                active.len(),
                coeffs.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for idx in &active {
            if idx.dim() != spec.dim() {
                return Err(Error::shape(format!("multi-index {idx} does not match basis dimension")));
            }
            if !seen.insert(idx) {
                return Err(Error::invalid(format!("duplicate multi-index {idx}")));
            }
        }
        let degree_selected = active.iter().map(|a| a.total_degree() as usize).max().unwrap_or(0);
        Ok(SparsePce {
            spec,
            active,
            coeffs,
            loo_normalized: 0.0,
            degree_selected,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.active.iter().zip(self.coeffs.iter().copied())
    }

    pub fn coeff(&self, idx: &MultiIndex) -> f64 {
        self.terms().find(|(a, _)| *a == idx).map(|(_, c)| c).unwrap_or(0.0)
    }

    /// Evaluates at a point already in the standard domain.
    pub fn predict_standard(&self, u: &[f64]) -> Result<f64> {
        self.predict_standard_with(u, false)
    }

    fn predict_standard_with(&self, u: &[f64], extrapolate: bool) -> Result<f64> {
        let table = self.spec.univariate_table_with(&self.active, u, extrapolate)?;
        Ok(self.terms().map(|(a, c)| c * table.term(a)).sum())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.predict_with(x, false)
    }

    /// With `extrapolate`, points outside the training box are evaluated
    /// instead of refused.
    pub fn predict_with(&self, x: &[f64], extrapolate: bool) -> Result<f64> {
        let u = self.spec.standardize_with(x, extrapolate)?;
        self.predict_standard_with(&u, extrapolate)
    }

    /// `(mean, variance)` read off the coefficients.
    pub fn moments(&self) -> (f64, f64) {
        let mut mean = 0.0;
        let mut var = 0.0;
        for (a, c) in self.terms() {
            if a.is_zero() {
                mean += c;
            } else {
                var += c * c;
            }
        }
        (mean, var)
    }
}

/// Free-function forms.
pub fn predict(pce: &SparsePce, x: &[f64]) -> Result<f64> {
    pce.predict(x)
}

pub fn moments(pce: &SparsePce) -> (f64, f64) {
    pce.moments()
}

/// Basis evaluations, one row per standardized point, one column per index.
pub fn design_matrix(spec: &BasisSpec, indices: &[MultiIndex], u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.ncols() != spec.dim() {
        return Err(Error::shape(format!(
            "design has {} columns, basis has dimension {}",
            u.ncols(),
            spec.dim()
        )));
    }
    let mut psi = DMatrix::zeros(u.nrows(), indices.len());
    let mut point = vec![0.0; spec.dim()];
    for k in 0..u.nrows() {
        for (d, v) in point.iter_mut().enumerate() {
            *v = u[(k, d)];
        }
        let table = spec.univariate_table(indices, &point)?;
        for (j, idx) in indices.iter().enumerate() {
            psi[(k, j)] = table.term(idx);
        }
    }
    Ok(psi)
}

/// Candidate basis evaluated on a design, shared by every target fitted on
/// that design.
pub struct CandidateDesign {
    spec: BasisSpec,
    candidates: Vec<MultiIndex>,
    degree: usize,
    psi: DMatrix<f64>,
    x_std: DMatrix<f64>,
    eligible: Vec<bool>,
    constant: usize,
}

impl CandidateDesign {
    pub fn new(spec: &BasisSpec, u: &DMatrix<f64>, candidates: Vec<MultiIndex>) -> Result<Self> {
        if u.nrows() < 2 {
            return Err(Error::invalid(format!("need at least 2 design points, got {}", u.nrows())));
        }
        if candidates.is_empty() {
            return Err(Error::invalid("candidate set is empty"));
        }
        let constant = candidates
            .iter()
            .position(|a| a.is_zero())
            .ok_or_else(|| Error::invalid("candidate set must contain the zero multi-index"))?;
        let psi = design_matrix(spec, &candidates, u)?;
        let (x_std, mut eligible) = standardize_columns(&psi);
        eligible[constant] = false;
        let degree = candidates.iter().map(|a| a.total_degree() as usize).max().unwrap_or(0);
        Ok(CandidateDesign {
            spec: spec.clone(),
            candidates,
            degree,
            psi,
            x_std,
            eligible,
            constant,
        })
    }

    pub fn size(&self) -> usize {
        self.candidates.len()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.psi.column(j).iter().copied().collect()
    }

    /// Hybrid-LAR fit of one target.
    pub fn fit(&self, targets: &[f64], options: &FitOptions) -> Result<SparsePce> {
        let k = self.psi.nrows();
        if targets.len() != k {
            return Err(Error::shape(format!("{} targets for {k} design points", targets.len())));
        }
        let var = loo::check_target(targets)?;
        let mut max_active = k.saturating_sub(2);
        if let Some(m) = options.max_terms {
            max_active = max_active.min(m);
        }
        let path = lar_path(&self.x_std, &self.eligible, targets, max_active, options.lasso);

        // point 0 is the constant-only model
        let mut models: Vec<(Vec<usize>, f64)> = Vec::with_capacity(path.points.len() + 1);
        let mut inc = loo::IncrementalFit::new(targets, var);
        inc.push(&self.column(self.constant))?;
        let mut current: Vec<usize> = Vec::new();
        let first = self.score(&inc, &current, targets, options)?;
        models.push((Vec::new(), first));
        for point in &path.points {
            let nested = point.active.len() == current.len() + 1 && point.active[..current.len()] == current[..];
            let grown = if nested {
                let j = *point.active.last().expect("non-empty");
                inc.push(&self.column(j)).map(|_| ())
            } else {
                let mut fresh = loo::IncrementalFit::new(targets, var);
                let mut res = fresh.push(&self.column(self.constant));
                for &j in &point.active {
                    if res.is_err() {
                        break;
                    }
                    res = fresh.push(&self.column(j));
                }
                inc = fresh;
                res
            };
            if let Err(e) = grown {
                debug!("path stopped at {} terms: {e}", point.active.len());
                break;
            }
            current = point.active.clone();
            match self.score(&inc, &current, targets, options) {
                Ok(v) => models.push((current.clone(), v)),
                Err(e) => {
                    debug!("path stopped at {} terms: {e}", current.len());
                    break;
                }
            }
        }

        let best = models.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        let (chosen, _) = models
            .iter()
            .find(|m| m.1 <= best + LOO_TIE)
            .expect("constant model always scored");

        let mut columns = vec![self.constant];
        columns.extend(chosen.iter().copied());
        columns.sort_unstable();
        let cols = self.psi.select_columns(columns.iter());
        let coeffs = ols(&cols, targets)?;
        let loo_normalized = loo_error_with(&cols, targets, options.loo_correction)?;
        Ok(SparsePce {
            spec: self.spec.clone(),
            active: columns.iter().map(|&j| self.candidates[j].clone()).collect(),
            coeffs,
            loo_normalized,
            degree_selected: self.degree,
        })
    }

    fn score(&self, inc: &loo::IncrementalFit, active: &[usize], targets: &[f64], options: &FitOptions) -> Result<f64> {
        match options.loo_correction {
            LooCorrection::None => inc.loo(),
            LooCorrection::Chapelle => {
                debug_assert_eq!(inc.len(), active.len() + 1);
                let mut columns = vec![self.constant];
                columns.extend_from_slice(active);
                let cols = self.psi.select_columns(columns.iter());
                loo_error_with(&cols, targets, LooCorrection::Chapelle)
            }
        }
    }
}

/// Sparse expansion of `targets` over `candidates` at the standardized
/// design `u`.
pub fn fit_lar(
    spec: &BasisSpec,
    u: &DMatrix<f64>,
    targets: &[f64],
    candidates: &[MultiIndex],
) -> Result<SparsePce> {
    fit_lar_with(spec, u, targets, candidates, &FitOptions::default())
}

pub fn fit_lar_with(
    spec: &BasisSpec,
    u: &DMatrix<f64>,
    targets: &[f64],
    candidates: &[MultiIndex],
    options: &FitOptions,
) -> Result<SparsePce> {
    loo::check_target(targets)?;
    CandidateDesign::new(spec, u, candidates.to_vec())?.fit(targets, options)
}

/// Standardizes every row of a physical design.
pub fn standardize_design(spec: &BasisSpec, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut u = DMatrix::zeros(x.nrows(), x.ncols());
    for k in 0..x.nrows() {
        let row: Vec<f64> = x.row(k).iter().copied().collect();
        for (d, v) in spec.standardize(&row)?.into_iter().enumerate() {
            u[(k, d)] = v;
        }
    }
    Ok(u)
}

/// Total-degree candidate designs for each degree in the inclusive range,
/// skipping degrees whose candidate set exceeds the cap.
fn candidate_designs<'a>(
    spec: &'a BasisSpec,
    u: &'a DMatrix<f64>,
    degrees: (usize, usize),
    options: &'a FitOptions,
) -> Result<impl Iterator<Item = Result<CandidateDesign>> + 'a> {
    let (lo, hi) = degrees;
    if lo > hi {
        return Err(Error::invalid(format!("empty degree range [{lo}, {hi}]")));
    }
    let m = spec.dim() as u64;
    let usable: Vec<usize> = (lo..=hi)
        .filter(|&p| {
            let n = binomial(m + p as u64, p as u64);
            if n > options.max_candidates as u128 {
                warn!("degree {p}: {n} candidates exceed the cap of {}, skipped", options.max_candidates);
                false
            } else {
                true
            }
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::BasisTooLarge {
            cardinality: binomial(m + lo as u64, lo as u64),
            cap: options.max_candidates,
        });
    }
    Ok(usable.into_iter().map(move |p| {
        let cands = total_degree_set_capped(spec.dim(), p, options.max_candidates)?;
        CandidateDesign::new(spec, u, cands)
    }))
}

/// Fits `targets` at every degree in range and keeps the lowest LOO error.
pub fn fit_degree_adaptive(
    spec: &BasisSpec,
    u: &DMatrix<f64>,
    targets: &[f64],
    degrees: (usize, usize),
    options: &FitOptions,
) -> Result<SparsePce> {
    loo::check_target(targets)?;
    let mut best: Option<SparsePce> = None;
    for design in candidate_designs(spec, u, degrees, options)? {
        let fit = design?.fit(targets, options)?;
        if best.as_ref().is_none_or(|b| fit.loo_normalized < b.loo_normalized) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one degree is usable"))
}

/// Principal-component surrogate of a vector-valued model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurrogateFile", into = "SurrogateFile")]
pub struct MultiOutputSurrogate {
    pub rb: ReducedBasis,
    pub pces: Vec<SparsePce>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurrogateFile {
    basis: BasisSpec,
    reduced_basis: ReducedBasis,
    components: Vec<ComponentFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentFile {
    active: Vec<MultiIndex>,
    #[serde(with = "b64_vec")]
    coeffs: Vec<f64>,
    loo_normalized: f64,
    degree_selected: usize,
}

impl From<MultiOutputSurrogate> for SurrogateFile {
    fn from(s: MultiOutputSurrogate) -> Self {
        let basis = s.pces[0].spec.clone();
        SurrogateFile {
            basis,
            reduced_basis: s.rb,
            components: s
                .pces
                .into_iter()
                .map(|p| ComponentFile {
                    active: p.active,
                    coeffs: p.coeffs,
                    loo_normalized: p.loo_normalized,
                    degree_selected: p.degree_selected,
                })
                .collect(),
        }
    }
}

impl TryFrom<SurrogateFile> for MultiOutputSurrogate {
    type Error = Error;

    fn try_from(f: SurrogateFile) -> Result<Self> {
        let pces = f
            .components
            .into_iter()
            .map(|c| {
                let mut p = SparsePce::new(f.basis.clone(), c.active, c.coeffs)?;
                p.loo_normalized = c.loo_normalized;
                p.degree_selected = c.degree_selected;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?;
        MultiOutputSurrogate::new(f.reduced_basis, pces)
    }
}

impl MultiOutputSurrogate {
    pub fn new(rb: ReducedBasis, pces: Vec<SparsePce>) -> Result<Self> {
        if pces.len() != rb.retained {
            return Err(Error::shape(format!(
                "{} expansions for {} retained components",
                pces.len(),
                rb.retained
            )));
        }
        if pces.is_empty() {
            return Err(Error::invalid("surrogate needs at least one component"));
        }
        if pces.iter().any(|p| p.spec != pces[0].spec) {
            return Err(Error::IncompatibleExpansions("components use different bases".into()));
        }
        Ok(MultiOutputSurrogate { rb, pces })
    }

    pub fn spec(&self) -> &BasisSpec {
        &self.pces[0].spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec().dim()
    }

    pub fn output_len(&self) -> usize {
        self.rb.output_len()
    }

    /// Predicted principal component scores.
    pub fn predict_scores(&self, x: &[f64], extrapolate: bool) -> Result<Vec<f64>> {
        let u = self.spec().standardize_with(x, extrapolate)?;
        self.pces.iter().map(|p| p.predict_standard_with(&u, extrapolate)).collect()
    }

    pub fn predict_series(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.predict_series_with(x, false)
    }

    pub fn predict_series_with(&self, x: &[f64], extrapolate: bool) -> Result<Vec<f64>> {
        self.rb.reconstruct(&self.predict_scores(x, extrapolate)?)
    }
}

pub fn predict_series(surr: &MultiOutputSurrogate, x: &[f64]) -> Result<Vec<f64>> {
    surr.predict_series(x)
}

/// Per-component outcome of [`fit_multi`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub component: usize,
    pub eigenvalue: f64,
    /// `(degree, normalized LOO)` for every degree tried.
    pub loo_by_degree: Vec<(usize, f64)>,
    pub degree_selected: usize,
    pub loo_normalized: f64,
    pub n_terms: usize,
    pub n_candidates: usize,
}

impl ComponentReport {
    /// Retained terms over candidate terms at the selected degree.
    pub fn sparsity_ratio(&self) -> f64 {
        self.n_terms as f64 / self.n_candidates as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub retained: usize,
    pub explained_fraction: f64,
    pub components: Vec<ComponentReport>,
    pub seconds: f64,
}

/// PCA of the training outputs followed by one degree-adaptive sparse
/// expansion per retained component.
pub fn fit_multi(
    design: &ExperimentalDesign,
    y: &DMatrix<f64>,
    target_fraction: f64,
    degrees: (usize, usize),
    options: &FitOptions,
) -> Result<(MultiOutputSurrogate, FitReport)> {
    let start = Instant::now();
    if y.nrows() != design.size() {
        return Err(Error::shape(format!(
            "{} output rows for {} design points",
            y.nrows(),
            design.size()
        )));
    }
    let spec = BasisSpec::legendre_box(&design.bounds)?;
    let m = spec.dim() as u64;
    let needed = binomial(m + degrees.0 as u64, degrees.0 as u64);
    if (design.size() as u128) <= needed {
        warn!(
            "{} design points for {needed} candidate terms at degree {}; expect overfitting",
            design.size(),
            degrees.0
        );
    }
    let rb = pca::fit(y, target_fraction)?;
    info!(
        "pca: {} components explain {:.6} of the variance",
        rb.retained, rb.explained_fraction
    );
    let scores = rb.scores(y)?;
    let u = standardize_design(&spec, &design.points)?;
    let targets: Vec<Vec<f64>> = (0..rb.retained).map(|p| scores.component(p)).collect();

    let mut best: Vec<Option<SparsePce>> = vec![None; rb.retained];
    let mut trials: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rb.retained];
    let mut n_candidates = vec![0usize; rb.retained];
    for cand in candidate_designs(&spec, &u, degrees, options)? {
        let cand = cand?;
        let fits: Vec<Result<SparsePce>> = targets.par_iter().map(|t| cand.fit(t, options)).collect();
        for (p, fit) in fits.into_iter().enumerate() {
            let fit = fit.map_err(|e| Error::Component {
                component: p,
                source: Box::new(e),
            })?;
            debug!("component {p} degree {}: loo {:.3e}", cand.degree(), fit.loo_normalized);
            trials[p].push((cand.degree(), fit.loo_normalized));
            if best[p].as_ref().is_none_or(|b| fit.loo_normalized < b.loo_normalized) {
                n_candidates[p] = cand.size();
                best[p] = Some(fit);
            }
        }
    }
    let pces: Vec<SparsePce> = best.into_iter().map(|b| b.expect("fitted")).collect();
    let components = pces
        .iter()
        .enumerate()
        .map(|(p, pce)| ComponentReport {
            component: p,
            eigenvalue: rb.eigvals_all[p],
            loo_by_degree: trials[p].clone(),
            degree_selected: pce.degree_selected,
            loo_normalized: pce.loo_normalized,
            n_terms: pce.active.len(),
            n_candidates: n_candidates[p],
        })
        .collect();
    let report = FitReport {
        retained: rb.retained,
        explained_fraction: rb.explained_fraction,
        components,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((MultiOutputSurrogate::new(rb, pces)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe;
    use crate::polybasis::total_degree_set;

    fn planted_2d() -> (BasisSpec, DMatrix<f64>, Vec<f64>) {
        let spec = BasisSpec::legendre_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let u = doe::lhs(200, 2, 4).unwrap().map(|v| 2.0 * v - 1.0);
        let y: Vec<f64> = (0..200)
            .map(|k| {
                let p = [u[(k, 0)], u[(k, 1)]];
                2.0 + 3.0 * spec.eval_basis(&MultiIndex::new(vec![1, 0]), &p).unwrap()
                    - 0.5 * spec.eval_basis(&MultiIndex::new(vec![0, 2]), &p).unwrap()
            })
            .collect();
        (spec, u, y)
    }

    #[test]
    fn recovers_planted_expansion() {
        let (spec, u, y) = planted_2d();
        let cands = total_degree_set(2, 4).unwrap();
        let pce = fit_lar(&spec, &u, &y, &cands).unwrap();
        assert_eq!(pce.active.len(), 3, "{:?}", pce.active);
        assert!((pce.coeff(&MultiIndex::new(vec![0, 0])) - 2.0).abs() < 1e-8);
        assert!((pce.coeff(&MultiIndex::new(vec![1, 0])) - 3.0).abs() < 1e-8);
        assert!((pce.coeff(&MultiIndex::new(vec![0, 2])) + 0.5).abs() < 1e-8);
        assert!(pce.loo_normalized < 1e-10);
    }

    #[test]
    fn constant_target_is_refused() {
        let (spec, u, _) = planted_2d();
        let cands = total_degree_set(2, 2).unwrap();
        let err = fit_lar(&spec, &u, &vec![5.0; 200], &cands).unwrap_err();
        assert!(matches!(err, Error::DegenerateTarget(_)));
    }

    #[test]
    fn candidate_set_needs_constant() {
        let (spec, u, y) = planted_2d();
        let cands = vec![MultiIndex::new(vec![1, 0])];
        assert!(matches!(fit_lar(&spec, &u, &y, &cands), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn prediction_and_moment_examples() {
        let spec = BasisSpec::legendre_box(&[(0.5, 1.1), (0.5, 1.5)]).unwrap();
        let c = SparsePce::new(spec.clone(), vec![MultiIndex::zero(2)], vec![7.0]).unwrap();
        assert_eq!(c.predict(&[0.6, 1.2]).unwrap(), 7.0);
        assert_eq!(c.moments(), (7.0, 0.0));
        let lin = SparsePce::new(spec.clone(), vec![MultiIndex::new(vec![1, 0])], vec![2.0]).unwrap();
        assert!((lin.predict(&[1.1, 1.5]).unwrap() - 2.0 * 3f64.sqrt()).abs() < 1e-14);
        assert!(matches!(lin.predict(&[1.2, 1.0]), Err(Error::DomainViolation(_))));
        assert!(lin.predict_with(&[1.2, 1.0], true).is_ok());
        let three = SparsePce::new(
            spec,
            vec![MultiIndex::zero(2), MultiIndex::new(vec![1, 0]), MultiIndex::new(vec![0, 1])],
            vec![1.0, 2.0, -1.0],
        )
        .unwrap();
        assert_eq!(three.moments(), (1.0, 5.0));
    }

    #[test]
    fn variance_ignores_term_order() {
        let spec = BasisSpec::legendre_box(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let idx = total_degree_set(2, 3).unwrap();
        let coeffs: Vec<f64> = (0..idx.len()).map(|i| (i as f64 * 1.3).sin()).collect();
        let a = SparsePce::new(spec.clone(), idx.clone(), coeffs.clone()).unwrap();
        let b = SparsePce::new(spec, idx.into_iter().rev().collect(), coeffs.into_iter().rev().collect()).unwrap();
        assert!((a.moments().1 - b.moments().1).abs() < 1e-14);
    }

    #[test]
    fn rejects_duplicate_indices() {
        let spec = BasisSpec::legendre_box(&[(0.0, 1.0)]).unwrap();
        let r = SparsePce::new(spec, vec![MultiIndex::zero(1), MultiIndex::zero(1)], vec![1.0, 2.0]);
        assert!(r.is_err());
    }

    #[test]
    fn single_varying_output_column() {
        let bounds = vec![(0.0, 1.0), (0.0, 1.0)];
        let design = doe::generate(&bounds, &[40], 2).unwrap();
        let y = DMatrix::from_fn(40, 3, |k, t| if t == 1 { design.points[(k, 0)].powi(2) } else { 1.5 });
        let (surr, report) = fit_multi(&design, &y, 0.99, (1, 3), &FitOptions::default()).unwrap();
        assert_eq!(surr.rb.retained, 1);
        assert_eq!(surr.pces.len(), 1);
        assert_eq!(report.components.len(), 1);
        let pred = surr.predict_series(&[0.5, 0.5]).unwrap();
        assert!((pred[1] - 0.25).abs() < 1e-8);
        assert!((pred[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn predict_series_is_reconstruction_of_component_predictions() {
        let bounds = vec![(0.0, 2.0), (1.0, 3.0)];
        let design = doe::generate(&bounds, &[60], 8).unwrap();
        let y = DMatrix::from_fn(60, 5, |k, t| {
            let (a, b) = (design.points[(k, 0)], design.points[(k, 1)]);
            a * (t as f64 + 1.0) + b * b * (t as f64).cos() + a * b
        });
        let (surr, _) = fit_multi(&design, &y, 1.0, (1, 3), &FitOptions::default()).unwrap();
        let x = [0.7, 2.2];
        let z: Vec<f64> = surr.pces.iter().map(|p| p.predict(&x).unwrap()).collect();
        assert_eq!(surr.predict_series(&x).unwrap(), surr.rb.reconstruct(&z).unwrap());
        let json = serde_json::to_string(&surr).unwrap();
        let back: MultiOutputSurrogate = serde_json::from_str(&json).unwrap();
        assert_eq!(back, surr);
    }

    #[test]
    fn zero_components_give_mean() {
        let bounds = vec![(0.0, 1.0)];
        let design = doe::generate(&bounds, &[20], 1).unwrap();
        let y = DMatrix::from_fn(20, 4, |k, t| design.points[(k, 0)] * t as f64);
        let (mut surr, _) = fit_multi(&design, &y, 0.99, (1, 2), &FitOptions::default()).unwrap();
        for p in surr.pces.iter_mut() {
            p.coeffs.iter_mut().for_each(|c| *c = 0.0);
        }
        assert_eq!(surr.predict_series(&[0.3]).unwrap(), surr.rb.mean);
    }
}
