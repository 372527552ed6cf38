//! Least-angle regression path on a column-standardized design.

use nalgebra::{DMatrix, DVector};

/// Squared residual norm below which a new column counts as collinear with
/// the active set (columns have unit norm).
const COLLINEAR_TOL: f64 = 1e-10;

/// Why the path ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathEnd {
    /// Reached the requested number of active columns.
    MaxActive,
    /// Residual correlation vanished.
    ZeroCorrelation,
    /// The next column was collinear with the active set.
    Collinear,
}

/// One point on the path: active columns (indices into the design) and the
/// number of path steps taken to reach it.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub active: Vec<usize>,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub struct LarPath {
    pub points: Vec<PathPoint>,
    pub end: PathEnd,
}

/// Centers each column and scales it to unit Euclidean norm. Columns with
/// (numerically) zero spread are zeroed and flagged ineligible.
pub fn standardize_columns(psi: &DMatrix<f64>) -> (DMatrix<f64>, Vec<bool>) {
    let k = psi.nrows() as f64;
    let mut x = psi.clone();
    let mut eligible = vec![true; psi.ncols()];
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let mean = col.sum() / k;
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        let scale = psi.column(j).amax().max(1.0);
        if norm <= 1e-12 * scale * k.sqrt() {
            eligible[j] = false;
            col.fill(0.0);
        } else {
            col /= norm;
        }
    }
    (x, eligible)
}

/// Runs LAR on standardized columns `x` against `y` (centered internally).
///
/// With `lasso` set, a coefficient crossing zero drops its column from the
/// active set (the lasso modification); otherwise the active set grows by
/// exactly one column per step.
pub fn lar_path(
    x: &DMatrix<f64>,
    eligible: &[bool],
    y: &[f64],
    max_active: usize,
    lasso: bool,
) -> LarPath {
    let (k, p) = x.shape();
    let ybar = y.iter().sum::<f64>() / k as f64;
    let resid0 = DVector::from_iterator(k, y.iter().map(|v| v - ybar));
    let mut corr = x.tr_mul(&resid0);
    let c0 = corr
        .iter()
        .zip(eligible)
        .filter(|(_, &e)| e)
        .fold(0.0f64, |m, (c, _)| m.max(c.abs()));

    let mut in_active = vec![false; p];
    let mut active: Vec<usize> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    // lower-triangular Cholesky factor of X_A^T X_A, row-major rows
    let mut chol: Vec<Vec<f64>> = Vec::new();
    let mut points = Vec::new();
    let mut skip_add = false;
    let mut step = 0;
    let n_eligible = eligible.iter().filter(|&&e| e).count();
    let max_active = max_active.min(n_eligible);

    if max_active == 0 || c0 == 0.0 {
        return LarPath {
            points,
            end: PathEnd::ZeroCorrelation,
        };
    }

    let end = loop {
        if !skip_add {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..p {
                if eligible[j] && !in_active[j] {
                    let a = corr[j].abs();
                    if best.is_none_or(|(_, b)| a > b) {
                        best = Some((j, a));
                    }
                }
            }
            let Some((j, cmax)) = best else {
                break PathEnd::MaxActive;
            };
            if cmax <= 1e-13 * c0 {
                break PathEnd::ZeroCorrelation;
            }
            let xj = x.column(j);
            let g: Vec<f64> = active.iter().map(|&i| x.column(i).dot(&xj)).collect();
            let l = forward_solve(&chol, &g);
            let d2 = 1.0 - l.iter().map(|v| v * v).sum::<f64>();
            if d2 <= COLLINEAR_TOL {
                break PathEnd::Collinear;
            }
            let mut row = l;
            row.push(d2.sqrt());
            chol.push(row);
            active.push(j);
            in_active[j] = true;
            beta.push(0.0);
        }
        skip_add = false;

        let signs: Vec<f64> = active.iter().map(|&i| corr[i].signum()).collect();
        let cmax = active.iter().map(|&i| corr[i].abs()).fold(0.0f64, f64::max);
        let q = back_solve(&chol, &forward_solve(&chol, &signs));
        let s_q: f64 = signs.iter().zip(&q).map(|(s, v)| s * v).sum();
        if !(s_q > 0.0) {
            break PathEnd::Collinear;
        }
        let a_norm = 1.0 / s_q.sqrt();
        let dir: Vec<f64> = q.iter().map(|v| a_norm * v).collect();
        let mut u = DVector::zeros(k);
        for (&i, &d) in active.iter().zip(&dir) {
            u.axpy(d, &x.column(i), 1.0);
        }
        let a = x.tr_mul(&u);

        let mut gamma = cmax / a_norm;
        if active.len() < max_active {
            for j in 0..p {
                if !eligible[j] || in_active[j] {
                    continue;
                }
                for cand in [(cmax - corr[j]) / (a_norm - a[j]), (cmax + corr[j]) / (a_norm + a[j])] {
                    if cand > 1e-15 && cand < gamma {
                        gamma = cand;
                    }
                }
            }
        }
        let mut drop: Option<usize> = None;
        if lasso {
            for (pos, (&b, &d)) in beta.iter().zip(&dir).enumerate() {
                if d != 0.0 {
                    let g = -b / d;
                    if g > 1e-15 && g < gamma {
                        gamma = g;
                        drop = Some(pos);
                    }
                }
            }
        }

        for (b, d) in beta.iter_mut().zip(&dir) {
            *b += gamma * d;
        }
        corr.axpy(-gamma, &a, 1.0);
        step += 1;

        if let Some(pos) = drop {
            let j = active.remove(pos);
            in_active[j] = false;
            beta.remove(pos);
            chol = cholesky_of(x, &active);
            skip_add = true;
        }
        points.push(PathPoint {
            active: active.clone(),
            step,
        });
        if drop.is_none() && active.len() >= max_active {
            break PathEnd::MaxActive;
        }
        // Guard against cycling in degenerate lasso paths.
        if step > 8 * max_active + 16 {
            break PathEnd::MaxActive;
        }
    };
    LarPath { points, end }
}

fn forward_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(b.len());
    for (i, row) in l.iter().enumerate() {
        let s: f64 = row[..i].iter().zip(&out).map(|(a, v)| a * v).sum();
        out.push((b[i] - s) / row[i]);
    }
    out
}

fn back_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut out = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|r| l[r][i] * out[r]).sum();
        out[i] = (b[i] - s) / l[i][i];
    }
    out
}

fn cholesky_of(x: &DMatrix<f64>, active: &[usize]) -> Vec<Vec<f64>> {
    let mut chol: Vec<Vec<f64>> = Vec::with_capacity(active.len());
    for (n, &j) in active.iter().enumerate() {
        let g: Vec<f64> = active[..n].iter().map(|&i| x.column(i).dot(&x.column(j))).collect();
        let mut row = forward_solve(&chol, &g);
        let d2 = (1.0 - row.iter().map(|v| v * v).sum::<f64>()).max(COLLINEAR_TOL);
        row.push(d2.sqrt());
        chol.push(row);
    }
    chol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_problem(k: usize, p: usize) -> (DMatrix<f64>, Vec<f64>) {
        let psi = DMatrix::from_fn(k, p, |r, c| (((r + 1) * (c + 3)) as f64 * 0.618).sin() + 0.1 * c as f64);
        let y: Vec<f64> = (0..k)
            .map(|r| 2.0 * psi[(r, 1)] - 1.5 * psi[(r, 4)] + 0.3 * psi[(r, 7)] + 0.05 * (r as f64 * 1.7).cos())
            .collect();
        (psi, y)
    }

    #[test]
    fn pure_lar_adds_one_column_per_step() {
        let (psi, y) = toy_problem(60, 12);
        let (x, eligible) = standardize_columns(&psi);
        let path = lar_path(&x, &eligible, &y, 12, false);
        for (n, pt) in path.points.iter().enumerate() {
            assert_eq!(pt.active.len(), n + 1);
            if n > 0 {
                assert_eq!(pt.active[..n], path.points[n - 1].active[..]);
            }
        }
        assert_eq!(path.end, PathEnd::MaxActive);
        assert_eq!(path.points.last().unwrap().active.len(), 12);
    }

    #[test]
    fn lasso_steps_change_active_set_by_one() {
        let (psi, y) = toy_problem(40, 15);
        let (x, eligible) = standardize_columns(&psi);
        let path = lar_path(&x, &eligible, &y, 15, true);
        let mut prev = 0usize;
        for pt in &path.points {
            assert_eq!((pt.active.len() as i64 - prev as i64).abs(), 1);
            prev = pt.active.len();
        }
    }

    #[test]
    fn first_pick_has_largest_correlation() {
        let (psi, y) = toy_problem(50, 10);
        let (x, eligible) = standardize_columns(&psi);
        let ybar = y.iter().sum::<f64>() / 50.0;
        let yc = DVector::from_iterator(50, y.iter().map(|v| v - ybar));
        let c = x.tr_mul(&yc);
        let best = (0..10).max_by(|&a, &b| c[a].abs().partial_cmp(&c[b].abs()).unwrap()).unwrap();
        let path = lar_path(&x, &eligible, &y, 3, false);
        assert_eq!(path.points[0].active, vec![best]);
    }

    #[test]
    fn full_path_activates_every_column() {
        let (psi, y) = toy_problem(30, 8);
        let (x, eligible) = standardize_columns(&psi);
        let path = lar_path(&x, &eligible, &y, 8, false);
        assert_eq!(path.points.last().unwrap().active.len(), 8);
    }

    #[test]
    fn constant_column_is_ineligible() {
        let mut psi = DMatrix::from_fn(20, 3, |r, c| ((r * 3 + c) as f64).sin());
        psi.column_mut(0).fill(1.0);
        let (_, eligible) = standardize_columns(&psi);
        assert_eq!(eligible, vec![false, true, true]);
    }

    #[test]
    fn near_duplicate_columns_never_share_the_active_set() {
        let mut psi = DMatrix::from_fn(25, 4, |r, c| ((r * 5 + c * 11) as f64 * 0.3).sin());
        let dup: Vec<f64> = psi
            .column(1)
            .iter()
            .enumerate()
            .map(|(r, v)| 2.0 * v + 1.0 + 1e-9 * (r as f64).cos())
            .collect();
        psi.column_mut(2).copy_from_slice(&dup);
        let y: Vec<f64> = (0..25).map(|r| psi[(r, 1)] + 0.3 * psi[(r, 0)] + 0.2 * psi[(r, 3)]).collect();
        let (x, eligible) = standardize_columns(&psi);
        let path = lar_path(&x, &eligible, &y, 4, false);
        assert!(path
            .points
            .iter()
            .all(|p| !(p.active.contains(&1) && p.active.contains(&2))));
        if path.points.last().unwrap().active.len() < 3 {
            assert_eq!(path.end, PathEnd::Collinear);
        }
    }
}
