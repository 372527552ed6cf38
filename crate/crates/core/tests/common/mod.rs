//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use uq_core::doe::{self, ExperimentalDesign};
use uq_core::pce::{fit_multi, FitOptions, FitReport, MultiOutputSurrogate};
use uq_core::simulators::{self, run_design, Simulator};

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on the
/// classical (unnormalized) three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Least squares through a full SVD, independent of the library's QR path.
pub fn lstsq_svd(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let svd = a.clone().svd(true, true);
    svd.solve(&DVector::from_column_slice(y), 1e-14)
        .expect("svd solve")
        .iter()
        .copied()
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Toy catchment on the synthetic storm, `K = 512` in one chunk, surrogate
/// with the default fit settings and 99 % retained variance.
pub struct ToyFixture {
    pub sim: Box<dyn Simulator>,
    pub design: ExperimentalDesign,
    pub outputs: DMatrix<f64>,
    pub surrogate: MultiOutputSurrogate,
    pub report: FitReport,
    pub seconds: f64,
}

pub const TOY_K: usize = 512;
pub const TOY_DEGREES: (usize, usize) = (1, 10);

pub fn toy_fixture() -> &'static ToyFixture {
    static FIXTURE: OnceLock<ToyFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let start = std::time::Instant::now();
        let sim = simulators::build("toy_catchment", None, None).unwrap();
        let design = doe::generate(&sim.bounds(), &[TOY_K], 2024).unwrap();
        let outputs = run_design(sim.as_ref(), &design.points).unwrap();
        let (surrogate, report) = fit_multi(&design, &outputs, 0.99, TOY_DEGREES, &FitOptions::default()).unwrap();
        ToyFixture {
            sim,
            design,
            outputs,
            surrogate,
            report,
            seconds: start.elapsed().as_secs_f64(),
        }
    })
}
