//! Deterministic data generators: a conceptual rainfall-runoff model and
//! analytic sensitivity benchmarks.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{read_csv, write_csv, CsvTable};
use crate::params::{hydro_bounds, hydro_names};

/// A forward map from an input vector to a fixed-length output series.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &'static str;
    fn input_names(&self) -> Vec<String>;
    fn bounds(&self) -> Vec<(f64, f64)>;
    /// Labels of the output entries (seconds for time series).
    fn times(&self) -> Vec<f64>;
    fn run(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn input_dim(&self) -> usize {
        self.bounds().len()
    }

    fn output_len(&self) -> usize {
        self.times().len()
    }
}

/// Names accepted by [`build`].
pub const SIMULATORS: [&str; 3] = ["toy_catchment", "ishigami", "g_function"];

/// Simulator selection by name. `forcing` applies to `toy_catchment` only
/// (the synthetic storm when absent); `params` are `(a, b)` for `ishigami`
/// and the `a` vector for `g_function`.
pub fn build(name: &str, forcing: Option<ForcingSeries>, params: Option<&[f64]>) -> Result<Box<dyn Simulator>> {
    match name {
        "toy_catchment" => Ok(Box::new(ToyCatchment::new(forcing.unwrap_or_else(synthetic_storm)))),
        "ishigami" => {
            let (a, b) = match params {
                None => (7.0, 0.1),
                Some(&[a, b]) => (a, b),
                Some(p) => return Err(Error::Config(format!("ishigami takes (a, b), got {} values", p.len()))),
            };
            Ok(Box::new(Ishigami { a, b }))
        }
        "g_function" => {
            let a = params.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0]);
            if a.is_empty() || a.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::Config("g_function coefficients must be non-negative".into()));
            }
            Ok(Box::new(GFunction { a }))
        }
        other => Err(Error::Config(format!(
            "unknown simulator `{other}` (expected one of {})",
            SIMULATORS.join(", ")
        ))),
    }
}

/// Evaluates `sim` at every row of `x`, in parallel; rows of the result
/// are outputs.
pub fn run_design(sim: &dyn Simulator, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != sim.input_dim() {
        return Err(Error::shape(format!(
            "design has {} columns, simulator expects {}",
            x.ncols(),
            sim.input_dim()
        )));
    }
    let rows: Vec<Vec<f64>> = (0..x.nrows())
        .into_par_iter()
        .map(|k| sim.run(&x.row(k).iter().copied().collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let t = sim.output_len();
    Ok(DMatrix::from_fn(rows.len(), t, |k, j| rows[k][j]))
}

/// Rainfall intensities (mm/h) on a uniform time grid (s).
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSeries {
    times: Vec<f64>,
    intensity: Vec<f64>,
}

impl ForcingSeries {
    pub fn new(times: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != intensity.len() {
            return Err(Error::shape(format!(
                "forcing needs equal non-empty times and intensities, got {} and {}",
                times.len(),
                intensity.len()
            )));
        }
        if let Some(i) = intensity.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain(format!("intensity {} at index {i} is not a non-negative number", intensity[i])));
        }
        check_uniform_grid(&times)?;
        Ok(ForcingSeries { times, intensity })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Grid spacing; a single-point series uses the default 120 s.
    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
        } else {
            DEFAULT_DT
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        ForcingSeries::new(self.times.clone(), self.intensity.iter().map(|v| v * factor).collect())
    }

    /// Reads `t,intensity` CSV.
    pub fn read(path: &Path) -> Result<Self> {
        let table = read_csv(path)?;
        let col = |name: &str| {
            table.column(name).ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("missing column `{name}`"),
            })
        };
        ForcingSeries::new(col("t")?, col("intensity")?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let m = DMatrix::from_fn(self.len(), 2, |r, c| if c == 0 { self.times[r] } else { self.intensity[r] });
        write_csv(path, &CsvTable::from_matrix(vec!["t".into(), "intensity".into()], &m))
    }
}

/// Strictly increasing and uniform within 1e-9 relative.
pub fn check_uniform_grid(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::domain("time grid contains non-finite values"));
    }
    if times.len() < 2 {
        return Ok(());
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (k, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if !(step > 0.0) {
            return Err(Error::domain(format!("time grid not strictly increasing at index {}", k + 1)));
        }
        if (step - dt).abs() > 1e-9 * dt.abs().max(times[k + 1].abs()) {
            return Err(Error::domain(format!("time grid not uniform at index {}", k + 1)));
        }
    }
    Ok(())
}

pub const DEFAULT_DT: f64 = 120.0;

/// Two gamma-shaped bursts over 601 points at 120 s spacing (20 h), peaking
/// at 6 mm/h after 2 h and 3 mm/h after 9.5 h.
pub fn synthetic_storm() -> ForcingSeries {
    fn burst(t_h: f64, start_h: f64, scale_h: f64, peak: f64) -> f64 {
        // gamma(shape 3) profile normalised to its maximum at start + 2*scale
        let s = (t_h - start_h) / scale_h;
        if s <= 0.0 {
            0.0
        } else {
            peak * (s / 2.0).powi(2) * (2.0 - s).exp()
        }
    }
    let times: Vec<f64> = (0..601).map(|k| k as f64 * DEFAULT_DT).collect();
    let intensity = times
        .iter()
        .map(|&t| {
            let h = t / 3600.0;
            burst(h, 1.0, 0.5, 6.0) + burst(h, 8.0, 0.75, 3.0)
        })
        .collect();
    ForcingSeries::new(times, intensity).expect("valid synthetic storm")
}

/// Fixed constants of the toy catchment.
mod toy {
    /// Catchment area (m^2), 160 ha.
    pub const AREA: f64 = 160.0e4;
    pub const IMPERVIOUSNESS: f64 = 0.36;
    pub const WIDTH: f64 = 35.7;
    pub const SLOPE: f64 = 0.114;
    pub const DEPRESSION_IMP: f64 = 2.0;
    pub const MANNING_PERV: f64 = 0.12;
    pub const DEPRESSION_PERV: f64 = 2.0;
    pub const ZERO_STORAGE: f64 = 0.1904;
    pub const CONDUIT_ROUGHNESS: f64 = 0.012;
    /// Nominal surface and channel recession times (s).
    pub const SURFACE_TIME: f64 = 1800.0;
    pub const CHANNEL_TIME: f64 = 1200.0;
    /// Depression-store evaporation per step (mm).
    pub const EVAPORATION: f64 = 0.05;
    /// Width of the cubic threshold ramps (mm).
    pub const RAMP: f64 = 0.2;
    pub const PERVIOUS_WEIGHT: f64 = 0.1;
}

/// Conceptual rainfall-runoff model with the eight scaled parameters of
/// [`crate::params::HYDRO_PARAMETERS`]; returns outflow in l/s.
///
/// Two depression stores (impervious, pervious) spill into a surface linear
/// reservoir draining into a channel linear reservoir; explicit Euler at the
/// forcing spacing, output recorded after each step. Storage thresholds are
/// smoothed by cubic ramps so the map is C^1 in the parameters.
#[derive(Clone, Debug)]
pub struct ToyCatchment {
    forcing: ForcingSeries,
}

impl ToyCatchment {
    pub fn new(forcing: ForcingSeries) -> Self {
        ToyCatchment { forcing }
    }

    pub fn forcing(&self) -> &ForcingSeries {
        &self.forcing
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Antiderivative of the smoothed indicator `1{z > 0}` with its ramp on
/// `[-RAMP/2, RAMP/2]`; equals `z` above the ramp.
fn ramp_integral(z: f64) -> f64 {
    let w = toy::RAMP;
    if z <= -0.5 * w {
        0.0
    } else if z >= 0.5 * w {
        z
    } else {
        let s = (z + 0.5 * w) / w;
        w * (s * s * s - 0.5 * s * s * s * s)
    }
}

/// Adds `rain` to a depression store of capacity `cap`; returns the spilled
/// depth and updates the store, including evaporation.
fn depression_step(store: &mut f64, cap: f64, rain: f64) -> f64 {
    let spill = ramp_integral(*store + rain - cap) - ramp_integral(*store - cap);
    *store += rain - spill;
    *store -= toy::EVAPORATION * smoothstep(*store / toy::RAMP);
    spill
}

/// Fully specified toy catchment run.
pub fn toy_catchment(x: &[f64], forcing: &ForcingSeries) -> Result<Vec<f64>> {
    if x.len() != 8 {
        return Err(Error::shape(format!("toy catchment takes 8 parameters, got {}", x.len())));
    }
    for (i, (&v, (lo, hi))) in x.iter().zip(hydro_bounds()).enumerate() {
        if !(v >= lo - 1e-12 && v <= hi + 1e-12) {
            return Err(Error::domain(format!("x{} = {v} outside [{lo}, {hi}]", i + 1)));
        }
    }
    let dt = forcing.dt();
    let phi = toy::IMPERVIOUSNESS * x[0];
    let cap_imp = toy::DEPRESSION_IMP * x[3];
    let cap_perv = toy::DEPRESSION_PERV * x[5];
    let f0 = toy::ZERO_STORAGE * x[6];
    let shape = |x2: f64, x3: f64, x5: f64| (toy::SLOPE * x3).sqrt() * (toy::WIDTH * x2) / (toy::MANNING_PERV * x5);
    let c_s = 1.0 / (toy::SURFACE_TIME * shape(1.0, 1.0, 1.0));
    let k_s = c_s * shape(x[1], x[2], x[4]);
    let c_c = toy::CONDUIT_ROUGHNESS / toy::CHANNEL_TIME;
    let k_c = c_c / (toy::CONDUIT_ROUGHNESS * x[7]);

    let (mut d_imp, mut d_perv, mut surface, mut channel) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut q = Vec::with_capacity(forcing.len());
    for &intensity in forcing.intensity() {
        let rain = intensity * dt / 3600.0;
        let spill_imp = depression_step(&mut d_imp, cap_imp, rain);
        let spill_perv = depression_step(&mut d_perv, cap_perv, rain);
        let runoff =
            phi * (f0 * rain + (1.0 - f0) * spill_imp) + (1.0 - phi) * toy::PERVIOUS_WEIGHT * spill_perv;
        let to_channel = k_s * dt * surface;
        let out = k_c * dt * channel;
        surface += runoff - to_channel;
        channel += to_channel - out;
        // mm over the catchment per second -> l/s
        q.push(toy::AREA * k_c * channel);
    }
    Ok(q)
}

impl Simulator for ToyCatchment {
    fn name(&self) -> &'static str {
        "toy_catchment"
    }

    fn input_names(&self) -> Vec<String> {
        hydro_names()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        hydro_bounds()
    }

    fn times(&self) -> Vec<f64> {
        self.forcing.times.clone()
    }

    fn run(&self, x: &[f64]) -> Result<Vec<f64>> {
        toy_catchment(x, &self.forcing)
    }
}

pub fn ishigami(x: &[f64], a: f64, b: f64) -> f64 {
    x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
}

/// Analytic first-order and total indices of the Ishigami function under
/// independent uniform inputs on `[-pi, pi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IshigamiIndices {
    pub first: [f64; 3],
    pub total: [f64; 3],
    pub variance: f64,
}

pub fn ishigami_analytic_indices(a: f64, b: f64) -> IshigamiIndices {
    let pi4 = PI.powi(4);
    let pi8 = PI.powi(8);
    let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v13 = b * b * pi8 * (1.0 / 18.0 - 1.0 / 50.0);
    let v = a * a / 8.0 + b * pi4 / 5.0 + b * b * pi8 / 18.0 + 0.5;
    IshigamiIndices {
        first: [v1 / v, v2 / v, 0.0],
        total: [(v1 + v13) / v, v2 / v, v13 / v],
        variance: v,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Ishigami {
    pub a: f64,
    pub b: f64,
}

impl Simulator for Ishigami {
    fn name(&self) -> &'static str {
        "ishigami"
    }

    fn input_names(&self) -> Vec<String> {
        (1..=3).map(|i| format!("x{i}")).collect()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(-PI, PI); 3]
    }

    fn times(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn run(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 3 {
            return Err(Error::shape(format!("ishigami takes 3 inputs, got {}", x.len())));
        }
        Ok(vec![ishigami(x, self.a, self.b)])
    }
}

pub fn g_function(x: &[f64], a: &[f64]) -> f64 {
    x.iter()
        .zip(a)
        .map(|(&xi, &ai)| ((4.0 * xi - 2.0).abs() + ai) / (1.0 + ai))
        .product()
}

/// `(first, total, variance)` of the g-function under uniform inputs on
/// `[0, 1]`: partial variances `V_i = 1 / (3 (1 + a_i)^2)`.
pub fn g_function_analytic_indices(a: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let vi: Vec<f64> = a.iter().map(|ai| 1.0 / (3.0 * (1.0 + ai).powi(2))).collect();
    let prod: f64 = vi.iter().map(|v| 1.0 + v).product();
    let var = prod - 1.0;
    let first = vi.iter().map(|v| v / var).collect();
    let total = vi.iter().map(|v| v * prod / (1.0 + v) / var).collect();
    (first, total, var)
}

#[derive(Clone, Debug)]
pub struct GFunction {
    pub a: Vec<f64>,
}

impl Simulator for GFunction {
    fn name(&self) -> &'static str {
        "g_function"
    }

    fn input_names(&self) -> Vec<String> {
        (1..=self.a.len()).map(|i| format!("x{i}")).collect()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(0.0, 1.0); self.a.len()]
    }

    fn times(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn run(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.a.len() {
            return Err(Error::shape(format!("g-function takes {} inputs, got {}", self.a.len(), x.len())));
        }
        Ok(vec![g_function(x, &self.a)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sobol::{mc_first_order_oracle, IndependentInputs};

    const NOMINAL: [f64; 8] = [1.0; 8];

    #[test]
    fn ishigami_examples() {
        assert_eq!(ishigami(&[0.0, 0.0, 0.0], 7.0, 0.1), 0.0);
        assert!((ishigami(&[PI / 2.0, 0.0, 0.0], 7.0, 0.1) - 1.0).abs() < 1e-15);
        assert!((ishigami(&[PI / 2.0, PI / 2.0, 0.0], 7.0, 0.1) - 8.0).abs() < 1e-14);
    }

    #[test]
    fn ishigami_closed_forms() {
        let r = ishigami_analytic_indices(7.0, 0.1);
        assert!((r.first[0] - 0.3139).abs() < 5e-5);
        assert!((r.first[1] - 0.4424).abs() < 5e-5);
        assert_eq!(r.first[2], 0.0);
        assert!((r.total[2] - 0.2437).abs() < 5e-5);
        let d = ishigami_analytic_indices(0.0, 0.0);
        assert_eq!(d.variance, 0.5);
        assert_eq!(d.first[0], 1.0);
        let nb = ishigami_analytic_indices(7.0, 0.0);
        assert_eq!(nb.first[2], 0.0);
        assert_eq!(nb.total[2], 0.0);
    }

    #[test]
    fn g_function_examples() {
        assert_eq!(g_function(&[0.5, 0.5], &[0.0, 0.0]), 0.0);
        let inert = g_function(&[0.1, 0.9], &[1e12, 1e12]);
        assert!((inert - 1.0).abs() < 1e-10);
        let (s, t, _) = g_function_analytic_indices(&[0.0, 0.0]);
        assert_eq!(s[0], s[1]);
        assert!(t[0] >= s[0]);
    }

    #[test]
    fn g_function_symmetric_indices_by_mc() {
        let inputs = IndependentInputs::uniform_box(&[(0.0, 1.0), (0.0, 1.0)]);
        let a = [0.0, 0.0];
        let (s, _, _) = g_function_analytic_indices(&a);
        for i in 0..2 {
            let est = mc_first_order_oracle(|x| g_function(x, &a), &inputs, i, 100_000, 3 + i as u64).unwrap();
            assert!((est.estimate - s[i]).abs() < 3.0 * est.std_error, "{i}: {est:?} vs {}", s[i]);
        }
    }

    #[test]
    fn zero_rain_gives_zero_outflow() {
        let f = synthetic_storm().scaled(0.0).unwrap();
        let q = toy_catchment(&NOMINAL, &f).unwrap();
        assert!(q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nominal_storm_is_hundreds_of_litres() {
        let q = toy_catchment(&NOMINAL, &synthetic_storm()).unwrap();
        assert_eq!(q.len(), 601);
        let peak = q.iter().copied().fold(0.0, f64::max);
        assert!(peak > 100.0 && peak < 1000.0, "peak {peak}");
        assert!(q.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_out_of_bounds_parameters() {
        let mut x = NOMINAL;
        x[7] = 0.9;
        assert!(toy_catchment(&x, &synthetic_storm()).is_err());
        assert!(toy_catchment(&x[..7], &synthetic_storm()).is_err());
    }

    #[test]
    fn forcing_validation() {
        assert!(ForcingSeries::new(vec![0.0, 120.0], vec![1.0, -1.0]).is_err());
        assert!(ForcingSeries::new(vec![0.0, 120.0, 250.0], vec![1.0; 3]).is_err());
        assert!(ForcingSeries::new(vec![], vec![]).is_err());
        assert!(ForcingSeries::new(vec![0.0, 120.0, 240.0], vec![1.0; 3]).is_ok());
    }

    #[test]
    fn registry_builds_by_name() {
        for name in SIMULATORS {
            let sim = build(name, None, None).unwrap();
            assert_eq!(sim.name(), name);
            assert_eq!(sim.input_names().len(), sim.input_dim());
        }
        assert!(build("swmm", None, None).is_err());
        assert!(build("ishigami", None, Some(&[1.0])).is_err());
    }

    #[test]
    fn run_design_matches_rows() {
        let sim = build("ishigami", None, None).unwrap();
        let x = DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 0.0, PI / 2.0, PI / 2.0, 0.0]);
        let y = run_design(sim.as_ref(), &x).unwrap();
        assert_eq!(y.shape(), (2, 1));
        assert!((y[(1, 0)] - 8.0).abs() < 1e-14);
    }
}
