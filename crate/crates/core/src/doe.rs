//! Latin hypercube experimental designs.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Training inputs in physical units, one row per simulator run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentalDesign {
    pub points: DMatrix<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
    pub chunk_sizes: Vec<usize>,
}

impl ExperimentalDesign {
    pub fn size(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn row(&self, k: usize) -> Vec<f64> {
        self.points.row(k).iter().copied().collect()
    }
}

/// Latin hypercube sample of `n` points in `[0, 1)^dim`.
///
/// Each column holds exactly one point per stratum `[k/n, (k+1)/n)`, placed
/// uniformly inside it; the stratum order is an independent permutation per
/// column.
pub fn lhs(n: usize, dim: usize, seed: u64) -> Result<DMatrix<f64>> {
    lhs_stream(n, dim, seed, 0)
}

fn lhs_stream(n: usize, dim: usize, seed: u64, stream: u64) -> Result<DMatrix<f64>> {
    if n == 0 || dim == 0 {
        return Err(Error::invalid(format!("lhs needs n >= 1 and dim >= 1, got n={n}, dim={dim}")));
    }
    let mut rng = stream_rng(seed, stream);
    let mut out = DMatrix::zeros(n, dim);
    let mut perm: Vec<usize> = (0..n).collect();
    let nf = n as f64;
    for j in 0..dim {
        perm.shuffle(&mut rng);
        for (k, &stratum) in perm.iter().enumerate() {
            let jitter: f64 = rng.random();
            let mut u = (stratum as f64 + jitter) / nf;
            // rounding can push u onto the next stratum's edge
            while u >= 1.0 || (u * nf).floor() as usize > stratum {
                u = f64::from_bits(u.to_bits() - 1);
            }
            out[(k, j)] = u;
        }
    }
    Ok(out)
}

/// Independent Latin hypercube chunks stacked vertically. Chunk `c` draws
/// from stream `c` of `seed`. The union is generally not itself a Latin
/// hypercube.
pub fn lhs_chunked(chunks: &[usize], dim: usize, seed: u64) -> Result<DMatrix<f64>> {
    if chunks.is_empty() {
        return Err(Error::invalid("at least one design chunk is required"));
    }
    let total: usize = chunks.iter().sum();
    let mut out = DMatrix::zeros(total, dim);
    let mut row = 0;
    for (c, &n) in chunks.iter().enumerate() {
        let block = lhs_stream(n, dim, seed, c as u64)?;
        out.view_mut((row, 0), (n, dim)).copy_from(&block);
        row += n;
    }
    Ok(out)
}

/// Affine map of a unit-cube design onto the physical box.
pub fn scale(bounds: &[(f64, f64)], unit: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_bounds(bounds)?;
    if unit.ncols() != bounds.len() {
        return Err(Error::shape(format!(
            "design has {} columns but {} bounds were given",
            unit.ncols(),
            bounds.len()
        )));
    }
    if let Some(v) = unit.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::domain(format!("unit design value {v} outside [0, 1]")));
    }
    let mut out = unit.clone();
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        for v in out.column_mut(j).iter_mut() {
            *v = lo + *v * (hi - lo);
        }
    }
    Ok(out)
}

pub(crate) fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    for (dim, &(lower, upper)) in bounds.iter().enumerate() {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::DegenerateBounds { dim, lower, upper });
        }
    }
    Ok(())
}

/// Chunked LHS scaled onto `bounds`.
pub fn generate(bounds: &[(f64, f64)], chunks: &[usize], seed: u64) -> Result<ExperimentalDesign> {
    check_bounds(bounds)?;
    let unit = lhs_chunked(chunks, bounds.len(), seed)?;
    Ok(ExperimentalDesign {
        points: scale(bounds, &unit)?,
        bounds: bounds.to_vec(),
        seed,
        chunk_sizes: chunks.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::hydro_bounds;
    use proptest::prelude::*;

    fn strata(col: &[f64]) -> Vec<usize> {
        let n = col.len() as f64;
        let mut s: Vec<usize> = col.iter().map(|u| (u * n).floor() as usize).collect();
        s.sort_unstable();
        s
    }

    #[test]
    fn four_point_strata() {
        let d = lhs(4, 1, 17).unwrap();
        let mut v: Vec<f64> = d.column(0).iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (k, u) in v.iter().enumerate() {
            assert!(*u >= k as f64 / 4.0 && *u < (k + 1) as f64 / 4.0);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(lhs(50, 3, 9).unwrap(), lhs(50, 3, 9).unwrap());
        assert_ne!(lhs(50, 3, 9).unwrap(), lhs(50, 3, 10).unwrap());
    }

    #[test]
    fn two_chunks_of_1024() {
        let d = lhs_chunked(&[1024, 1024], 8, 5).unwrap();
        assert_eq!(d.shape(), (2048, 8));
        for j in 0..8 {
            let top: Vec<f64> = d.view((0, j), (1024, 1)).iter().copied().collect();
            let bottom: Vec<f64> = d.view((1024, j), (1024, 1)).iter().copied().collect();
            assert_eq!(strata(&top), (0..1024).collect::<Vec<_>>());
            assert_eq!(strata(&bottom), (0..1024).collect::<Vec<_>>());
            assert_ne!(top, bottom);
        }
    }

    #[test]
    fn scale_examples() {
        let unit = DMatrix::from_row_slice(1, 2, &[0.25, 0.5]);
        assert_eq!(scale(&[(0.0, 1.0), (0.0, 1.0)], &unit).unwrap(), unit);
        let mid = DMatrix::from_row_slice(1, 1, &[0.5]);
        assert!((scale(&[(0.5, 1.1)], &mid).unwrap()[0] - 0.8).abs() < 1e-15);
        let zeros = DMatrix::zeros(1, 8);
        let lower = scale(&hydro_bounds(), &zeros).unwrap();
        assert_eq!(
            lower.row(0).iter().copied().collect::<Vec<_>>(),
            vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 1.0]
        );
        assert!(matches!(
            scale(&[(1.0, 1.0)], &mid),
            Err(Error::DegenerateBounds { .. })
        ));
    }

    #[test]
    fn generated_points_inside_box() {
        let b = hydro_bounds();
        let d = generate(&b, &[64, 64], 3).unwrap();
        for k in 0..d.size() {
            for (j, &(lo, hi)) in b.iter().enumerate() {
                let v = d.points[(k, j)];
                assert!(v >= lo && v <= hi);
            }
        }
    }

    proptest! {
        #[test]
        fn every_column_is_stratified(n in 1usize..300, dim in 1usize..5, seed in any::<u64>()) {
            let d = lhs(n, dim, seed).unwrap();
            for j in 0..dim {
                let col: Vec<f64> = d.column(j).iter().copied().collect();
                prop_assert_eq!(strata(&col), (0..n).collect::<Vec<_>>());
            }
        }
    }
}
