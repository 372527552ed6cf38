//! Flattened surrogate for repeated evaluation inside samplers and
//! optimizers.

use nalgebra::DMatrix;

use super::MultiOutputSurrogate;
use crate::error::Result;
use crate::polybasis::BasisSpec;

/// All component expansions packed into flat arrays: one univariate table
/// is filled per call and each term multiplies only its non-zero exponents.
#[derive(Clone, Debug)]
pub struct CompiledSurrogate {
    spec: BasisSpec,
    max_degree: Vec<usize>,
    stride: usize,
    /// Table offsets `d * stride + a` of the non-constant factors.
    factors: Vec<u32>,
    /// End of each term's factor run.
    term_ends: Vec<u32>,
    coeffs: Vec<f64>,
    /// End of each component's term run.
    component_ends: Vec<usize>,
    mean: Vec<f64>,
    eigvecs: DMatrix<f64>,
}

impl CompiledSurrogate {
    pub fn new(surr: &MultiOutputSurrogate) -> Self {
        let dim = surr.input_dim();
        let mut max_degree = vec![0usize; dim];
        for pce in &surr.pces {
            for a in &pce.active {
                for (m, &e) in max_degree.iter_mut().zip(a.exponents()) {
                    *m = (*m).max(e as usize);
                }
            }
        }
        let stride = max_degree.iter().max().copied().unwrap_or(0) + 1;
        let (mut factors, mut term_ends, mut coeffs, mut component_ends) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for pce in &surr.pces {
            for (a, c) in pce.terms() {
                for (d, &e) in a.exponents().iter().enumerate() {
                    if e > 0 {
                        factors.push((d * stride + e as usize) as u32);
                    }
                }
                term_ends.push(factors.len() as u32);
                coeffs.push(c);
            }
            component_ends.push(coeffs.len());
        }
        CompiledSurrogate {
            spec: surr.spec().clone(),
            max_degree,
            stride,
            factors,
            term_ends,
            coeffs,
            component_ends,
            mean: surr.rb.mean.clone(),
            eigvecs: surr.rb.eigvecs.clone(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn output_len(&self) -> usize {
        self.mean.len()
    }

    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let u = self.spec.standardize(x)?;
        let mut table = vec![0.0; self.stride * u.len()];
        for (d, (&ud, fam)) in u.iter().zip(self.spec.families()).enumerate() {
            fam.eval_upto(self.max_degree[d], ud, &mut table[d * self.stride..(d + 1) * self.stride])?;
        }
        let mut scores = Vec::with_capacity(self.component_ends.len());
        let (mut term, mut start) = (0usize, 0usize);
        for &end in &self.component_ends {
            let mut acc = 0.0;
            while term < end {
                let stop = self.term_ends[term] as usize;
                let mut prod = self.coeffs[term];
                for &f in &self.factors[start..stop] {
                    prod *= table[f as usize];
                }
                acc += prod;
                start = stop;
                term += 1;
            }
            scores.push(acc);
        }
        Ok(scores)
    }

    pub fn predict_series(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.predict_scores(x)?;
        let mut out = self.mean.clone();
        for (p, &zp) in z.iter().enumerate() {
            for (o, &phi) in out.iter_mut().zip(self.eigvecs.column(p).iter()) {
                *o += zp * phi;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe;
    use crate::pce::{fit_multi, FitOptions};
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn agrees_with_reference_evaluation() {
        let bounds = [(0.0, 2.0), (-1.0, 1.0), (1.0, 3.0)];
        let design = doe::generate(&bounds, &[120], 5).unwrap();
        let y = DMatrix::from_fn(120, 12, |k, t| {
            let x = design.row(k);
            let s = t as f64 / 11.0;
            (x[0] * s).sin() + x[1] * x[1] * (1.0 - s) + 0.1 * x[2] * x[0]
        });
        let (surr, _) = fit_multi(&design, &y, 0.9999, (1, 4), &FitOptions::default()).unwrap();
        let fast = CompiledSurrogate::new(&surr);
        assert_eq!(fast.output_len(), 12);
        let mut rng = stream_rng(1, 0);
        for _ in 0..50 {
            let x: Vec<f64> = bounds.iter().map(|&(a, b)| a + (b - a) * rng.random::<f64>()).collect();
            let slow = surr.predict_series(&x).unwrap();
            let quick = fast.predict_series(&x).unwrap();
            for (a, b) in slow.iter().zip(&quick) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
        assert!(fast.predict_series(&[3.0, 0.0, 2.0]).is_err());
    }
}
