//! Orthonormal polynomial bases.
//!
//! Univariate Legendre (uniform on [-1, 1]) and probabilists' Hermite
//! (standard normal) families, normalized so that `E[psi_a psi_b] = delta_ab`
//! under their standard measure. Multivariate terms are tensor products
//! indexed by a [`MultiIndex`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest univariate degree accepted by the evaluators.
pub const MAX_DEGREE: usize = 30;

/// Default cap on the cardinality of a generated multi-index set.
pub const DEFAULT_BASIS_CAP: usize = 1_000_000;

/// Slack allowed at the edges of [-1, 1] for rounding in the affine map.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyFamily {
    Legendre,
    Hermite,
}

impl PolyFamily {
    pub fn in_domain(self, u: f64) -> bool {
        match self {
            PolyFamily::Legendre => (-1.0 - DOMAIN_SLACK..=1.0 + DOMAIN_SLACK).contains(&u),
            PolyFamily::Hermite => u.is_finite(),
        }
    }

    fn check(self, max_degree: usize, u: f64) -> Result<()> {
        if max_degree > MAX_DEGREE {
            return Err(Error::DegreeOverflow {
                degree: max_degree,
                max: MAX_DEGREE,
            });
        }
        if !self.in_domain(u) {
            return Err(Error::domain(format!("{u} outside the {self} domain")));
        }
        Ok(())
    }

    /// Fills `out[0..=max_degree]` with the orthonormal polynomials at `u`.
    pub fn eval_upto(self, max_degree: usize, u: f64, out: &mut [f64]) -> Result<()> {
        self.check(max_degree, u)?;
        if out.len() <= max_degree {
            return Err(Error::shape(format!(
                "output buffer of length {} cannot hold degree {max_degree}",
                out.len()
            )));
        }
        fill_unchecked(self, max_degree, u, out);
        Ok(())
    }

    pub fn eval(self, degree: usize, u: f64) -> Result<f64> {
        let mut buf = [0.0; MAX_DEGREE + 1];
        self.eval_upto(degree, u, &mut buf)?;
        Ok(buf[degree])
    }
}

impl fmt::Display for PolyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolyFamily::Legendre => f.write_str("legendre"),
            PolyFamily::Hermite => f.write_str("hermite"),
        }
    }
}

// Classical three-term recurrence, then per-degree normalization.
fn fill_unchecked(family: PolyFamily, max_degree: usize, u: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if max_degree == 0 {
        return;
    }
    out[1] = u;
    match family {
        PolyFamily::Legendre => {
            // (n+1) P_{n+1} = (2n+1) u P_n - n P_{n-1}
            for n in 1..max_degree {
                let nf = n as f64;
                out[n + 1] = ((2.0 * nf + 1.0) * u * out[n] - nf * out[n - 1]) / (nf + 1.0);
            }
            for (n, v) in out.iter_mut().enumerate().take(max_degree + 1) {
                *v *= (2.0 * n as f64 + 1.0).sqrt();
            }
        }
        PolyFamily::Hermite => {
            // He_{n+1} = u He_n - n He_{n-1}
            for n in 1..max_degree {
                out[n + 1] = u * out[n] - n as f64 * out[n - 1];
            }
            let mut factorial = 1.0;
            for (n, v) in out.iter_mut().enumerate().take(max_degree + 1).skip(1) {
                factorial *= n as f64;
                *v /= factorial.sqrt();
            }
        }
    }
}

/// Orthonormal univariate polynomial of the given degree at `u`.
pub fn eval_univariate(family: PolyFamily, degree: usize, u: f64) -> Result<f64> {
    family.eval(degree, u)
}

/// Exponents of a tensor-product basis term, one per input dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// Degree `d` in coordinate `i`, zero elsewhere.
    pub fn unit(dim: usize, i: usize, d: u32) -> Self {
        let mut e = vec![0; dim];
        e[i] = d;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u64 {
        self.0.iter().map(|&a| a as u64).sum()
    }

    pub fn max_degree(&self) -> u32 {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    /// Input dimensions with a non-zero exponent.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0)
            .map(|(i, _)| i)
    }

    /// True when the non-zero exponents are exactly the dimensions in `subset`.
    pub fn has_exact_support(&self, subset: &[usize]) -> bool {
        self.0
            .iter()
            .enumerate()
            .all(|(i, &a)| (a != 0) == subset.contains(&i))
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// `binomial(n, k)` in 128-bit arithmetic, saturating on overflow.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// All multi-indices of total degree at most `max_degree`, graded by total
/// degree and lexicographically descending within each grade, so that
/// `(1,0)` precedes `(0,1)`.
pub fn total_degree_set(dim: usize, max_degree: usize) -> Result<Vec<MultiIndex>> {
    total_degree_set_capped(dim, max_degree, DEFAULT_BASIS_CAP)
}

pub fn total_degree_set_capped(dim: usize, max_degree: usize, cap: usize) -> Result<Vec<MultiIndex>> {
    if dim == 0 {
        return Err(Error::invalid("multi-index dimension must be at least 1"));
    }
    let cardinality = binomial((dim + max_degree) as u64, max_degree as u64);
    if cardinality > cap as u128 {
        return Err(Error::BasisTooLarge { cardinality, cap });
    }
    let mut out = Vec::with_capacity(cardinality as usize);
    let mut current = vec![0u32; dim];
    for grade in 0..=max_degree as u32 {
        push_grade(&mut current, 0, grade, &mut out);
    }
    Ok(out)
}

fn push_grade(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for a in (0..=remaining).rev() {
        current[pos] = a;
        push_grade(current, pos + 1, remaining - a, out);
    }
    current[pos] = 0;
}

/// Per-dimension polynomial families plus the affine bounds that map
/// physical Legendre inputs onto [-1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBasisSpec", into = "RawBasisSpec")]
pub struct BasisSpec {
    families: Vec<PolyFamily>,
    bounds: Vec<Option<(f64, f64)>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBasisSpec {
    families: Vec<PolyFamily>,
    bounds: Vec<Option<[f64; 2]>>,
}

impl TryFrom<RawBasisSpec> for BasisSpec {
    type Error = Error;

    fn try_from(raw: RawBasisSpec) -> Result<Self> {
        BasisSpec::new(
            raw.families,
            raw.bounds.into_iter().map(|b| b.map(|[l, h]| (l, h))).collect(),
        )
    }
}

impl From<BasisSpec> for RawBasisSpec {
    fn from(s: BasisSpec) -> Self {
        RawBasisSpec {
            families: s.families,
            bounds: s.bounds.into_iter().map(|b| b.map(|(l, h)| [l, h])).collect(),
        }
    }
}

impl BasisSpec {
    pub fn new(families: Vec<PolyFamily>, bounds: Vec<Option<(f64, f64)>>) -> Result<Self> {
        if families.is_empty() {
            return Err(Error::invalid("basis needs at least one dimension"));
        }
        if families.len() != bounds.len() {
            return Err(Error::shape(format!(
                "{} families but {} bound entries",
                families.len(),
                bounds.len()
            )));
        }
        for (dim, (fam, b)) in families.iter().zip(&bounds).enumerate() {
            match (fam, b) {
                (PolyFamily::Legendre, Some((lo, hi))) => {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::DegenerateBounds {
                            dim,
                            lower: *lo,
                            upper: *hi,
                        });
                    }
                }
                (PolyFamily::Legendre, None) => {
                    return Err(Error::invalid(format!("legendre dimension {dim} needs bounds")))
                }
                (PolyFamily::Hermite, Some(_)) => {
                    return Err(Error::invalid(format!("hermite dimension {dim} takes no bounds")))
                }
                (PolyFamily::Hermite, None) => {}
            }
        }
        Ok(BasisSpec { families, bounds })
    }

    /// All-Legendre basis over a box.
    pub fn legendre_box(bounds: &[(f64, f64)]) -> Result<Self> {
        BasisSpec::new(
            vec![PolyFamily::Legendre; bounds.len()],
            bounds.iter().map(|&b| Some(b)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    pub fn families(&self) -> &[PolyFamily] {
        &self.families
    }

    pub fn bounds(&self) -> &[Option<(f64, f64)>] {
        &self.bounds
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::shape(format!(
                "expected {} coordinates, got {n}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Maps a physical point to the standard domain of each family.
    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.standardize_with(x, false)
    }

    /// As [`standardize`](Self::standardize); with `extrapolate` set,
    /// Legendre coordinates outside their box are mapped linearly instead of
    /// being refused.
    pub fn standardize_with(&self, x: &[f64], extrapolate: bool) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut u = Vec::with_capacity(x.len());
        for (i, (&xi, b)) in x.iter().zip(&self.bounds).enumerate() {
            match b {
                Some((lo, hi)) => {
                    let slack = DOMAIN_SLACK * (hi - lo);
                    if !extrapolate && !(xi >= lo - slack && xi <= hi + slack) {
                        return Err(Error::domain(format!(
                            "x[{i}] = {xi} outside [{lo}, {hi}]"
                        )));
                    }
                    let v = (2.0 * xi - lo - hi) / (hi - lo);
                    u.push(if extrapolate { v } else { v.clamp(-1.0, 1.0) });
                }
                None => {
                    if !xi.is_finite() {
                        return Err(Error::domain(format!("x[{i}] = {xi} is not finite")));
                    }
                    u.push(xi);
                }
            }
        }
        Ok(u)
    }

    pub fn unstandardize(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        u.iter()
            .zip(self.families.iter().zip(&self.bounds))
            .enumerate()
            .map(|(i, (&ui, (fam, b)))| {
                if !fam.in_domain(ui) {
                    return Err(Error::domain(format!("u[{i}] = {ui} outside the {fam} domain")));
                }
                Ok(match b {
                    Some((lo, hi)) => 0.5 * (lo + hi) + 0.5 * ui * (hi - lo),
                    None => ui,
                })
            })
            .collect()
    }

    /// Tensor-product basis term at a standardized point.
    pub fn eval_basis(&self, index: &MultiIndex, u: &[f64]) -> Result<f64> {
        self.check_len(u.len())?;
        if index.dim() != self.dim() {
            return Err(Error::shape(format!(
                "multi-index has dimension {}, basis has {}",
                index.dim(),
                self.dim()
            )));
        }
        let mut prod = 1.0;
        for ((&a, &ui), fam) in index.exponents().iter().zip(u).zip(&self.families) {
            prod *= fam.eval(a as usize, ui)?;
        }
        Ok(prod)
    }

    /// Evaluates every term of `indices` at one standardized point.
    pub fn eval_terms(&self, indices: &[MultiIndex], u: &[f64]) -> Result<Vec<f64>> {
        let table = self.univariate_table(indices, u)?;
        Ok(indices.iter().map(|idx| table.term(idx)).collect())
    }

    /// Univariate values up to the largest degree each dimension needs.
    pub(crate) fn univariate_table(&self, indices: &[MultiIndex], u: &[f64]) -> Result<UnivariateTable> {
        self.univariate_table_with(indices, u, false)
    }

    /// With `extrapolate`, Legendre polynomials are also evaluated outside
    /// [-1, 1].
    pub(crate) fn univariate_table_with(
        &self,
        indices: &[MultiIndex],
        u: &[f64],
        extrapolate: bool,
    ) -> Result<UnivariateTable> {
        self.check_len(u.len())?;
        let mut max_deg = vec![0usize; self.dim()];
        for idx in indices {
            if idx.dim() != self.dim() {
                return Err(Error::shape(format!(
                    "multi-index {idx} does not match basis dimension {}",
                    self.dim()
                )));
            }
            for (m, &a) in max_deg.iter_mut().zip(idx.exponents()) {
                *m = (*m).max(a as usize);
            }
        }
        let stride = MAX_DEGREE + 1;
        let mut values = vec![0.0; stride * self.dim()];
        for (d, ((&ui, fam), &m)) in u.iter().zip(&self.families).zip(&max_deg).enumerate() {
            let out = &mut values[d * stride..(d + 1) * stride];
            if extrapolate {
                fam.check(m, 0.0)?;
                if !ui.is_finite() {
                    return Err(Error::domain(format!("u[{d}] = {ui} is not finite")));
                }
                fill_unchecked(*fam, m, ui, out);
            } else {
                fam.eval_upto(m, ui, out)?;
            }
        }
        Ok(UnivariateTable { values, stride })
    }
}

pub(crate) struct UnivariateTable {
    values: Vec<f64>,
    stride: usize,
}

impl UnivariateTable {
    pub(crate) fn term(&self, idx: &MultiIndex) -> f64 {
        idx.exponents()
            .iter()
            .enumerate()
            .map(|(d, &a)| self.values[d * self.stride + a as usize])
            .product()
    }
}

/// Free-function form of [`BasisSpec::eval_basis`].
pub fn eval_basis(spec: &BasisSpec, index: &MultiIndex, u: &[f64]) -> Result<f64> {
    spec.eval_basis(index, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn legendre_values() {
        assert_eq!(eval_univariate(PolyFamily::Legendre, 0, 0.7).unwrap(), 1.0);
        let v = eval_univariate(PolyFamily::Legendre, 1, 0.5).unwrap();
        assert!((v - 3f64.sqrt() * 0.5).abs() < 1e-15);
        let v = eval_univariate(PolyFamily::Legendre, 2, 0.0).unwrap();
        assert!((v + 5f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((eval_univariate(PolyFamily::Legendre, 1, 1.0).unwrap() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hermite_values() {
        // He_2 = u^2 - 1, normalized by sqrt(2!)
        let v = eval_univariate(PolyFamily::Hermite, 2, 2.0).unwrap();
        assert!((v - 3.0 / 2f64.sqrt()).abs() < 1e-14);
        // He_3 = u^3 - 3u, normalized by sqrt(6)
        let v = eval_univariate(PolyFamily::Hermite, 3, 1.5).unwrap();
        assert!((v - (1.5f64.powi(3) - 4.5) / 6f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn univariate_errors() {
        assert!(matches!(
            eval_univariate(PolyFamily::Legendre, 31, 0.1),
            Err(Error::DegreeOverflow { .. })
        ));
        assert!(matches!(
            eval_univariate(PolyFamily::Legendre, 2, 1.5),
            Err(Error::DomainViolation(_))
        ));
        assert!(eval_univariate(PolyFamily::Hermite, 2, 5.0).is_ok());
    }

    #[test]
    fn multivariate_products() {
        let spec = BasisSpec::legendre_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let zero = MultiIndex::zero(2);
        assert_eq!(spec.eval_basis(&zero, &[0.3, -0.9]).unwrap(), 1.0);
        let a = MultiIndex::new(vec![1, 0]);
        assert!((spec.eval_basis(&a, &[0.5, 0.9]).unwrap() - 0.866_025_403_784_438_6).abs() < 1e-15);
        let b = MultiIndex::new(vec![1, 1]);
        assert!((spec.eval_basis(&b, &[0.5, 0.5]).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(spec.eval_basis(&a, &[0.5]), Err(Error::Shape(_))));
    }

    #[test]
    fn total_degree_examples() {
        let s = total_degree_set(1, 2).unwrap();
        assert_eq!(s, vec![MultiIndex::new(vec![0]), MultiIndex::new(vec![1]), MultiIndex::new(vec![2])]);
        let s = total_degree_set(2, 1).unwrap();
        assert_eq!(
            s,
            vec![MultiIndex::new(vec![0, 0]), MultiIndex::new(vec![1, 0]), MultiIndex::new(vec![0, 1])]
        );
        assert_eq!(total_degree_set(8, 3).unwrap().len(), 165);
        assert!(matches!(
            total_degree_set_capped(8, 3, 100),
            Err(Error::BasisTooLarge { cardinality: 165, cap: 100 })
        ));
    }

    #[test]
    fn total_degree_matches_brute_force() {
        // exhaustive enumeration of the box {0..=p}^M filtered by degree
        let (m, p) = (4usize, 3u32);
        let mut brute = Vec::new();
        for code in 0..(p + 1).pow(m as u32) {
            let mut c = code;
            let e: Vec<u32> = (0..m)
                .map(|_| {
                    let d = c % (p + 1);
                    c /= p + 1;
                    d
                })
                .collect();
            if e.iter().sum::<u32>() <= p {
                brute.push(MultiIndex::new(e));
            }
        }
        let mut set = total_degree_set(m, p as usize).unwrap();
        assert_eq!(set.len() as u128, binomial((m + p as usize) as u64, p as u64));
        set.sort();
        brute.sort();
        assert_eq!(set, brute);
    }

    #[test]
    fn total_degree_is_graded_and_closed() {
        let set = total_degree_set(3, 4).unwrap();
        for w in set.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!(
                a.total_degree() < b.total_degree()
                    || (a.total_degree() == b.total_degree() && a.exponents() > b.exponents())
            );
        }
        let lookup: std::collections::HashSet<_> = set.iter().cloned().collect();
        assert_eq!(lookup.len(), set.len());
        for idx in &set {
            for i in idx.support() {
                let mut lower = idx.exponents().to_vec();
                lower[i] -= 1;
                assert!(lookup.contains(&MultiIndex::new(lower)));
            }
        }
    }

    #[test]
    fn standardize_examples() {
        let spec = BasisSpec::legendre_box(&[(0.5, 1.1), (1.0, 1.5)]).unwrap();
        let u = spec.standardize(&[0.8, 1.125]).unwrap();
        assert!(u[0].abs() < 1e-15);
        assert!((u[1] + 0.5).abs() < 1e-15);
        let u = spec.standardize(&[1.1, 1.5]).unwrap();
        assert_eq!(u, vec![1.0, 1.0]);
        assert!(matches!(spec.standardize(&[1.2, 1.2]), Err(Error::DomainViolation(_))));
        assert!(spec.standardize_with(&[1.2, 1.2], true).is_ok());
        assert!(matches!(
            BasisSpec::legendre_box(&[(1.0, 1.0)]),
            Err(Error::DegenerateBounds { .. })
        ));
    }

    #[test]
    fn basis_spec_json() {
        let spec = BasisSpec::new(
            vec![PolyFamily::Legendre, PolyFamily::Hermite],
            vec![Some((0.5, 1.5)), None],
        )
        .unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(s, r#"{"families":["legendre","hermite"],"bounds":[[0.5,1.5],null]}"#);
        let back: BasisSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"families":["legendre"],"bounds":[[2.0,1.0]]}"#;
        assert!(serde_json::from_str::<BasisSpec>(bad).is_err());
    }

    proptest! {
        #[test]
        fn standardize_round_trip(
            lo in -100.0f64..100.0,
            width in 1e-3f64..50.0,
            t in 0.0f64..=1.0,
        ) {
            let hi = lo + width;
            let spec = BasisSpec::legendre_box(&[(lo, hi)]).unwrap();
            let x = lo + t * width;
            let u = spec.standardize(&[x]).unwrap();
            prop_assert!((-1.0..=1.0).contains(&u[0]));
            let back = spec.unstandardize(&u).unwrap();
            prop_assert!((back[0] - x).abs() <= 1e-14 * x.abs().max(1.0) * (1.0 + width));
        }
    }
}
