//! Variance-based sensitivity indices.
//!
//! For an orthonormal expansion the ANOVA term of a variable subset `u`
//! collects exactly the multi-indices whose non-zero exponents are the
//! variables in `u`, so every Sobol index is a ratio of sums of squared
//! coefficients. Indices of the reconstructed time series follow from the
//! component expansions and the eigenvectors.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pce::{MultiOutputSurrogate, SparsePce};
use crate::polybasis::MultiIndex;
use crate::rng::stream_rng;

/// Slack on the [0, 1] range of component-level indices.
pub const INDEX_SLACK: f64 = 1e-8;
/// Time instants whose output variance is below this fraction of the
/// largest are reported as undefined.
pub const UNDEFINED_VARIANCE_RATIO: f64 = 1e-12;

fn variance(pce: &SparsePce) -> Result<f64> {
    let (_, var) = pce.moments();
    if var > 0.0 {
        Ok(var)
    } else {
        Err(Error::DegeneratePce)
    }
}

fn check_subset(pce: &SparsePce, subset: &[usize]) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::invalid("variable subset must be non-empty"));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= pce.dim()) {
        return Err(Error::invalid(format!("variable {i} out of range for dimension {}", pce.dim())));
    }
    Ok(())
}

/// Share of the variance carried by terms involving exactly the variables
/// in `subset` (0-based).
pub fn subset_index(pce: &SparsePce, subset: &[usize]) -> Result<f64> {
    check_subset(pce, subset)?;
    let var = variance(pce)?;
    let part: f64 = pce
        .terms()
        .filter(|(a, _)| !a.is_zero() && a.has_exact_support(subset))
        .map(|(_, c)| c * c)
        .sum();
    Ok(part / var)
}

pub fn first_order_index(pce: &SparsePce, i: usize) -> Result<f64> {
    subset_index(pce, &[i])
}

/// Share of the variance carried by every term involving variable `i`.
pub fn total_index(pce: &SparsePce, i: usize) -> Result<f64> {
    check_subset(pce, &[i])?;
    let var = variance(pce)?;
    let part: f64 = pce
        .terms()
        .filter(|(a, _)| a.exponents()[i] != 0)
        .map(|(_, c)| c * c)
        .sum();
    Ok(part / var)
}

/// Every non-empty subset with a non-zero share, keyed by its sorted
/// variable list.
pub fn all_subset_indices(pce: &SparsePce) -> Result<BTreeMap<Vec<usize>, f64>> {
    let var = variance(pce)?;
    let mut out = BTreeMap::new();
    for (a, c) in pce.terms() {
        if a.is_zero() {
            continue;
        }
        *out.entry(a.support().collect::<Vec<_>>()).or_insert(0.0) += c * c / var;
    }
    Ok(out)
}

fn check_compatible(p: &SparsePce, q: &SparsePce) -> Result<()> {
    if p.spec != q.spec {
        return Err(Error::IncompatibleExpansions("expansions use different bases".into()));
    }
    Ok(())
}

/// `Cov[E[Z_p | X_i], E[Z_q | X_i]]`: the sum of coefficient products over
/// multi-indices supported exactly on `{i}`.
pub fn cond_cov(p: &SparsePce, q: &SparsePce, i: usize) -> Result<f64> {
    check_compatible(p, q)?;
    check_subset(p, &[i])?;
    let lookup: BTreeMap<&MultiIndex, f64> = q.terms().collect();
    Ok(p.terms()
        .filter(|(a, _)| !a.is_zero() && a.has_exact_support(&[i]))
        .filter_map(|(a, c)| lookup.get(a).map(|d| c * d))
        .sum())
}

/// `Cov[Z_p, Z_q]` under the expansions: sum of coefficient products over
/// all non-constant multi-indices.
pub fn full_cov(p: &SparsePce, q: &SparsePce) -> Result<f64> {
    check_compatible(p, q)?;
    let lookup: BTreeMap<&MultiIndex, f64> = q.terms().collect();
    Ok(p.terms()
        .filter(|(a, _)| !a.is_zero())
        .filter_map(|(a, c)| lookup.get(a).map(|d| c * d))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexFlag {
    Ok,
    /// Small negative value from truncation; reported as is.
    Negative,
    /// Outside `[0 - eps, 1 + eps]` by more than the truncation allowance.
    OutOfRange,
    /// Output variance at this subject is numerically zero.
    Undefined,
}

impl fmt::Display for IndexFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexFlag::Ok => "ok",
            IndexFlag::Negative => "negative",
            IndexFlag::OutOfRange => "out_of_range",
            IndexFlag::Undefined => "undefined",
        })
    }
}

fn flag_for(v: f64) -> IndexFlag {
    if v.is_nan() {
        IndexFlag::Undefined
    } else if v < -0.02 || v > 1.0 + INDEX_SLACK {
        IndexFlag::OutOfRange
    } else if v < -INDEX_SLACK {
        IndexFlag::Negative
    } else {
        IndexFlag::Ok
    }
}

/// Per-time first-order indices of the reconstructed outputs for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeVariantIndices {
    pub input: usize,
    /// `NaN` where the output variance is undefined.
    pub values: Vec<f64>,
    pub flags: Vec<IndexFlag>,
}

/// Output variance per instant, shared by all inputs.
struct Recombination {
    output_var: Vec<f64>,
}

impl Recombination {
    fn new(surr: &MultiOutputSurrogate) -> Result<Self> {
        let r = surr.pces.len();
        let mut full = DMatrix::zeros(r, r);
        for p in 0..r {
            for q in p..r {
                let v = full_cov(&surr.pces[p], &surr.pces[q])?;
                full[(p, q)] = v;
                full[(q, p)] = v;
            }
        }
        let output_var = (0..surr.output_len())
            .map(|t| quad_form(&full, &surr.rb.eigvecs.row(t).iter().copied().collect::<Vec<_>>()))
            .collect();
        Ok(Recombination { output_var })
    }
}

fn quad_form(m: &DMatrix<f64>, phi: &[f64]) -> f64 {
    let r = phi.len();
    let mut acc = 0.0;
    for p in 0..r {
        acc += m[(p, p)] * phi[p] * phi[p];
        for q in (p + 1)..r {
            acc += 2.0 * m[(p, q)] * phi[p] * phi[q];
        }
    }
    acc
}

/// First-order index of input `i` for every output instant `t`:
/// `sum_pq Cov[E[Z_p|X_i], E[Z_q|X_i]] phi_pt phi_qt / Var[Y_t]`, with
/// `Var[Y_t] = sum_pq Cov[Z_p, Z_q] phi_pt phi_qt` from the same expansions.
pub fn timevariant_first_order(surr: &MultiOutputSurrogate, i: usize) -> Result<TimeVariantIndices> {
    let rec = Recombination::new(surr)?;
    timevariant_with(surr, &rec, i)
}

fn timevariant_with(surr: &MultiOutputSurrogate, rec: &Recombination, i: usize) -> Result<TimeVariantIndices> {
    if i >= surr.input_dim() {
        return Err(Error::invalid(format!("input {i} out of range for dimension {}", surr.input_dim())));
    }
    let r = surr.pces.len();
    let mut cond = DMatrix::zeros(r, r);
    for p in 0..r {
        for q in p..r {
            let v = cond_cov(&surr.pces[p], &surr.pces[q], i)?;
            cond[(p, q)] = v;
            cond[(q, p)] = v;
        }
    }
    let vmax = rec.output_var.iter().copied().fold(0.0f64, f64::max);
    if !(vmax > 0.0) {
        return Err(Error::DegeneratePce);
    }
    let mut values = Vec::with_capacity(surr.output_len());
    let mut flags = Vec::with_capacity(surr.output_len());
    for t in 0..surr.output_len() {
        let var = rec.output_var[t];
        if var < UNDEFINED_VARIANCE_RATIO * vmax {
            values.push(f64::NAN);
            flags.push(IndexFlag::Undefined);
            continue;
        }
        let phi: Vec<f64> = surr.rb.eigvecs.row(t).iter().copied().collect();
        let v = quad_form(&cond, &phi) / var;
        values.push(v);
        flags.push(flag_for(v));
    }
    Ok(TimeVariantIndices { input: i, values, flags })
}

/// Long-format sensitivity table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    pub input_names: Vec<String>,
    pub rows: Vec<SobolRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolRow {
    pub subject: String,
    /// Input name, or `+`-joined names for subset indices.
    pub input: String,
    pub index_type: IndexType,
    pub value: f64,
    pub flag: IndexFlag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexType {
    First,
    Total,
    Subset,
}

impl fmt::Display for IndexType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexType::First => "first",
            IndexType::Total => "total",
            IndexType::Subset => "subset",
        })
    }
}

impl SobolReport {
    /// First-order and total indices of every component expansion, plus
    /// subset indices when `with_subsets` is set.
    pub fn for_components(surr: &MultiOutputSurrogate, input_names: &[String], with_subsets: bool) -> Result<Self> {
        check_names(input_names, surr.input_dim())?;
        let mut rows = Vec::new();
        for (p, pce) in surr.pces.iter().enumerate() {
            let subject = format!("z{p}");
            for (i, name) in input_names.iter().enumerate() {
                for (index_type, value) in [
                    (IndexType::First, first_order_index(pce, i)?),
                    (IndexType::Total, total_index(pce, i)?),
                ] {
                    rows.push(SobolRow {
                        subject: subject.clone(),
                        input: name.clone(),
                        index_type,
                        value,
                        flag: flag_for(value),
                    });
                }
            }
            if with_subsets {
                for (subset, value) in all_subset_indices(pce)? {
                    let label: Vec<&str> = subset.iter().map(|&i| input_names[i].as_str()).collect();
                    rows.push(SobolRow {
                        subject: subject.clone(),
                        input: label.join("+"),
                        index_type: IndexType::Subset,
                        value,
                        flag: flag_for(value),
                    });
                }
            }
        }
        Ok(SobolReport {
            input_names: input_names.to_vec(),
            rows,
        })
    }

    /// Time-variant first-order indices for the selected inputs; subjects
    /// are labelled by `times`.
    pub fn for_times(
        surr: &MultiOutputSurrogate,
        input_names: &[String],
        inputs: &[usize],
        times: &[f64],
    ) -> Result<(Self, Vec<TimeVariantIndices>)> {
        check_names(input_names, surr.input_dim())?;
        if times.len() != surr.output_len() {
            return Err(Error::shape(format!(
                "{} time stamps for {} outputs",
                times.len(),
                surr.output_len()
            )));
        }
        let rec = Recombination::new(surr)?;
        let series: Vec<TimeVariantIndices> = inputs
            .par_iter()
            .map(|&i| timevariant_with(surr, &rec, i))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        for (t, time) in times.iter().enumerate() {
            for s in &series {
                rows.push(SobolRow {
                    subject: crate::io::fmt_f64(*time),
                    input: input_names[s.input].clone(),
                    index_type: IndexType::First,
                    value: s.values[t],
                    flag: s.flags[t],
                });
            }
        }
        Ok((
            SobolReport {
                input_names: input_names.to_vec(),
                rows,
            },
            series,
        ))
    }

    /// `subject,input,index_type,value,flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject,input,index_type,value,flag\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.subject,
                r.input,
                r.index_type,
                crate::io::fmt_f64(r.value),
                r.flag
            ));
        }
        out
    }
}

fn check_names(names: &[String], dim: usize) -> Result<()> {
    if names.len() != dim {
        return Err(Error::shape(format!("{} input names for dimension {dim}", names.len())));
    }
    Ok(())
}

/// Marginal law of one independent input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Uniform { lower: f64, upper: f64 },
    Normal { mean: f64, sd: f64 },
}

/// Product measure over independent inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependentInputs(pub Vec<Marginal>);

impl IndependentInputs {
    pub fn uniform_box(bounds: &[(f64, f64)]) -> Self {
        IndependentInputs(
            bounds
                .iter()
                .map(|&(lower, upper)| Marginal::Uniform { lower, upper })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.0
            .iter()
            .map(|m| match *m {
                Marginal::Uniform { lower, upper } => {
                    if !(lower < upper) {
                        return Err(Error::DegenerateBounds {
                            dim: 0,
                            lower,
                            upper,
                        });
                    }
                    Ok(lower + (upper - lower) * rng.random::<f64>())
                }
                Marginal::Normal { mean, sd } => Normal::new(mean, sd)
                    .map(|d| d.sample(rng))
                    .map_err(|e| Error::invalid(format!("normal marginal: {e}"))),
            })
            .collect()
    }
}

/// Monte Carlo estimate with its bootstrap standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

const BOOTSTRAP_RESAMPLES: usize = 200;

fn pick_freeze_estimate(fa: &[f64], fc: &[f64], idx: Option<&[usize]>) -> f64 {
    let n = fa.len();
    let (mut sa, mut sc, mut sq, mut sp) = (0.0, 0.0, 0.0, 0.0);
    let mut add = |k: usize| {
        sa += fa[k];
        sc += fc[k];
        sq += fa[k] * fa[k] + fc[k] * fc[k];
        sp += fa[k] * fc[k];
    };
    match idx {
        Some(ix) => ix.iter().for_each(|&k| add(k)),
        None => (0..n).for_each(&mut add),
    }
    let nf = n as f64;
    let mean = (sa + sc) / (2.0 * nf);
    let var = sq / (2.0 * nf) - mean * mean;
    (sp / nf - mean * mean) / var
}

/// Pick-freeze estimate of the first-order index of input `i` for each
/// output of the vector-valued `f`.
///
/// `A` and `B` are independent sample blocks; `C` is `B` with column `i`
/// taken from `A`, so `f(A)` and `f(C)` share only `x_i`. The estimator is
/// `[mean(fA fC) - m^2] / V` with `m` and `V` the mean and variance pooled
/// over `fA` and `fC`; standard errors come from 200 bootstrap resamples.
pub fn mc_first_order_vector<F>(
    f: F,
    inputs: &IndependentInputs,
    i: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<McEstimate>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if n < 1000 {
        return Err(Error::invalid(format!("pick-freeze needs n >= 1000, got {n}")));
    }
    if i >= inputs.dim() {
        return Err(Error::invalid(format!("input {i} out of range for dimension {}", inputs.dim())));
    }
    let mut rng = stream_rng(seed, 0);
    let mut a = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for _ in 0..n {
        let xa = inputs.sample(&mut rng)?;
        let mut xc = inputs.sample(&mut rng)?;
        xc[i] = xa[i];
        a.push(xa);
        c.push(xc);
    }
    let fa: Vec<Vec<f64>> = a.par_iter().map(|x| f(x)).collect();
    let fc: Vec<Vec<f64>> = c.par_iter().map(|x| f(x)).collect();
    let outputs = fa[0].len();
    if fa.iter().chain(&fc).any(|v| v.len() != outputs) {
        return Err(Error::shape("function returned outputs of varying length"));
    }

    let mut boot_rng = stream_rng(seed, 1);
    let resamples: Vec<Vec<usize>> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| boot_rng.random_range(0..n)).collect())
        .collect();

    (0..outputs)
        .into_par_iter()
        .map(|t| {
            let ya: Vec<f64> = fa.iter().map(|v| v[t]).collect();
            let yc: Vec<f64> = fc.iter().map(|v| v[t]).collect();
            let mean = ya.iter().chain(&yc).sum::<f64>() / (2 * n) as f64;
            let spread = ya.iter().chain(&yc).map(|v| (v - mean).powi(2)).sum::<f64>();
            if !(spread > 1e-300) {
                return Err(Error::DegenerateFunction(format!("output {t} has zero variance")));
            }
            let estimate = pick_freeze_estimate(&ya, &yc, None);
            let boots: Vec<f64> = resamples
                .iter()
                .map(|ix| pick_freeze_estimate(&ya, &yc, Some(ix)))
                .collect();
            let bm = boots.iter().sum::<f64>() / boots.len() as f64;
            let bv = boots.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / (boots.len() - 1) as f64;
            Ok(McEstimate {
                estimate,
                std_error: bv.sqrt(),
            })
        })
        .collect()
}

/// Scalar form of [`mc_first_order_vector`].
pub fn mc_first_order_oracle<F>(f: F, inputs: &IndependentInputs, i: usize, n: usize, seed: u64) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    Ok(mc_first_order_vector(|x| vec![f(x)], inputs, i, n, seed)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::BasisSpec;

    fn unit_spec(m: usize) -> BasisSpec {
        BasisSpec::legendre_box(&vec![(-1.0, 1.0); m]).unwrap()
    }

    fn pce(terms: &[(Vec<u32>, f64)]) -> SparsePce {
        let m = terms[0].0.len();
        SparsePce::new(
            unit_spec(m),
            terms.iter().map(|(a, _)| MultiIndex::new(a.clone())).collect(),
            terms.iter().map(|(_, c)| *c).collect(),
        )
        .unwrap()
    }

    #[test]
    fn additive_expansion() {
        let p = pce(&[(vec![1, 0], 1.0), (vec![0, 1], 1.0)]);
        assert!((subset_index(&p, &[0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((subset_index(&p, &[1]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(subset_index(&p, &[0, 1]).unwrap(), 0.0);
        assert!((total_index(&p, 0).unwrap() - 0.5).abs() < 1e-15);
        assert!((total_index(&p, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_interaction() {
        let p = pce(&[(vec![1, 1], 1.0)]);
        assert_eq!(subset_index(&p, &[0]).unwrap(), 0.0);
        assert_eq!(subset_index(&p, &[1]).unwrap(), 0.0);
        assert_eq!(subset_index(&p, &[0, 1]).unwrap(), 1.0);
        assert_eq!(total_index(&p, 0).unwrap(), 1.0);
        assert_eq!(total_index(&p, 1).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_and_invalid() {
        let c = pce(&[(vec![0, 0], 3.0)]);
        assert!(matches!(subset_index(&c, &[0]), Err(Error::DegeneratePce)));
        let p = pce(&[(vec![1, 0], 1.0)]);
        assert!(subset_index(&p, &[]).is_err());
        assert!(subset_index(&p, &[2]).is_err());
    }

    #[test]
    fn cond_cov_examples() {
        let p = pce(&[(vec![0, 0], 1.0), (vec![2, 0], 3.0), (vec![0, 1], 1.0)]);
        let q = pce(&[(vec![2, 0], -0.5), (vec![1, 1], 2.0)]);
        assert!((cond_cov(&p, &q, 0).unwrap() + 1.5).abs() < 1e-15);
        assert_eq!(cond_cov(&p, &q, 1).unwrap(), 0.0);
        // p = q: numerator of the first-order index
        let num = cond_cov(&p, &p, 0).unwrap();
        assert!((num / p.moments().1 - first_order_index(&p, 0).unwrap()).abs() < 1e-15);
        let other = SparsePce::new(
            BasisSpec::legendre_box(&[(0.0, 1.0), (0.0, 1.0)]).unwrap(),
            vec![MultiIndex::new(vec![1, 0])],
            vec![1.0],
        )
        .unwrap();
        assert!(matches!(cond_cov(&p, &other, 0), Err(Error::IncompatibleExpansions(_))));
    }

    #[test]
    fn subset_lattice_sums_to_one() {
        let terms: Vec<(Vec<u32>, f64)> = crate::polybasis::total_degree_set(3, 3)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(n, a)| (a.exponents().to_vec(), ((n * 7) as f64).sin()))
            .collect();
        let p = pce(&terms);
        let mut total = 0.0;
        for mask in 1u32..8 {
            let subset: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
            total += subset_index(&p, &subset).unwrap();
        }
        assert!((total - 1.0).abs() < 1e-10);
        let all: f64 = all_subset_indices(&p).unwrap().values().sum();
        assert!((all - 1.0).abs() < 1e-10);
        let s: f64 = (0..3).map(|i| first_order_index(&p, i).unwrap()).sum();
        let t: f64 = (0..3).map(|i| total_index(&p, i).unwrap()).sum();
        assert!(s <= 1.0 + 1e-10 && t >= s);
    }

    #[test]
    fn pick_freeze_rejects_constant() {
        let inputs = IndependentInputs::uniform_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let r = mc_first_order_oracle(|_| 4.0, &inputs, 0, 2000, 1);
        assert!(matches!(r, Err(Error::DegenerateFunction(_))));
        assert!(mc_first_order_oracle(|x| x[0], &inputs, 0, 10, 1).is_err());
    }

    #[test]
    fn pick_freeze_additive() {
        let inputs = IndependentInputs::uniform_box(&[(-1.0, 1.0), (-1.0, 1.0)]);
        let est = mc_first_order_oracle(|x| x[0] + x[1], &inputs, 0, 100_000, 7).unwrap();
        assert!((est.estimate - 0.5).abs() < 3.0 * est.std_error, "{est:?}");
        assert!(est.std_error < 0.01);
    }
}
