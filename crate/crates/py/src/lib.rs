//! Python bindings: configuration, steady-state theory, `g²(τ)`, trajectory
//! simulation and timestamp correlation.

use std::path::PathBuf;

use microlaser_core::correlator::{self, CorrelateOptions, Normalization};
use microlaser_core::quantum::{self, q_and_tau_from_g2};
use microlaser_core::semiclassical::{self, SweepDirection};
use microlaser_core::trajectory::{self, InitialState, SimulationOptions};
use microlaser_core::{
    fit, Error, ErrorKind, MicrolaserConfig, TimestampStream, VelocityDistribution,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

create_exception!(microlaser, NumericalError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e.kind() {
        ErrorKind::Config => PyValueError::new_err(e.to_string()),
        ErrorKind::Io => PyOSError::new_err(e.to_string()),
        ErrorKind::Numerical => NumericalError::new_err(e.to_string()),
    }
}

/// Model parameters in SI units, angular frequencies in rad/s.
#[pyclass(
    name = "Config",
    module = "microlaser",
    get_all,
    set_all,
    skip_from_py_object
)]
#[derive(Clone)]
struct Config {
    g0: f64,
    gamma_c: f64,
    mode_waist: f64,
    v0: f64,
    dv_fwhm_frac: f64,
    n_atoms_mean: f64,
    detection_efficiency: f64,
    splitter_ratio: f64,
    n_max: usize,
    quadrature_nodes: usize,
    /// `transit_at_v0` or `mean_transit`.
    pump_convention: String,
}

impl Config {
    fn wrap(c: MicrolaserConfig) -> Self {
        Config {
            g0: c.g0,
            gamma_c: c.gamma_c,
            mode_waist: c.mode_waist,
            v0: c.v0,
            dv_fwhm_frac: c.dv_fwhm_frac,
            n_atoms_mean: c.n_atoms_mean,
            detection_efficiency: c.detection_efficiency,
            splitter_ratio: c.splitter_ratio,
            n_max: c.n_max,
            quadrature_nodes: c.quadrature_nodes,
            pump_convention: c.pump_convention.as_str().to_string(),
        }
    }

    /// Validated core configuration and its velocity distribution.
    fn core(&self) -> PyResult<(MicrolaserConfig, VelocityDistribution)> {
        let cfg = MicrolaserConfig {
            g0: self.g0,
            gamma_c: self.gamma_c,
            mode_waist: self.mode_waist,
            v0: self.v0,
            dv_fwhm_frac: self.dv_fwhm_frac,
            n_atoms_mean: self.n_atoms_mean,
            detection_efficiency: self.detection_efficiency,
            splitter_ratio: self.splitter_ratio,
            n_max: self.n_max,
            quadrature_nodes: self.quadrature_nodes,
            pump_convention: self.pump_convention.parse().map_err(to_py)?,
        };
        cfg.validate().map_err(to_py)?;
        let dist = VelocityDistribution::from_config(&cfg).map_err(to_py)?;
        Ok((cfg, dist))
    }
}

#[pymethods]
impl Config {
    /// Experimental parameters at the given pump and velocity spread.
    #[new]
    #[pyo3(signature = (n_atoms_mean, dv_fwhm_frac = 0.45))]
    fn new(n_atoms_mean: f64, dv_fwhm_frac: f64) -> Self {
        Config::wrap(MicrolaserConfig::reference(n_atoms_mean).with_velocity_spread(dv_fwhm_frac))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        MicrolaserConfig::load(path)
            .map(Config::wrap)
            .map_err(to_py)
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        MicrolaserConfig::parse(text)
            .map(Config::wrap)
            .map_err(to_py)
    }

    /// Copy at a new pump, with the automatic truncation recomputed.
    fn with_pump(&self, n_atoms_mean: f64) -> PyResult<Self> {
        Ok(Config::wrap(self.core()?.0.with_pump(n_atoms_mean)))
    }

    fn to_kv(&self) -> PyResult<String> {
        Ok(self.core()?.0.to_kv())
    }

    fn hash(&self) -> PyResult<String> {
        Ok(self.core()?.0.hash())
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(n_atoms_mean={}, dv_fwhm_frac={}, n_max={})",
            self.n_atoms_mean, self.dv_fwhm_frac, self.n_max
        )
    }
}

#[pyclass(module = "microlaser", get_all, frozen)]
struct FixedPoint {
    n0: f64,
    stable: bool,
    restoring_rate: f64,
    tau_c: Option<f64>,
    q_semiclassical: Option<f64>,
}

#[pymethods]
impl FixedPoint {
    fn __repr__(&self) -> String {
        format!("FixedPoint(n0={}, stable={})", self.n0, self.stable)
    }
}

#[pyclass(module = "microlaser", get_all, frozen)]
struct TheoryFit {
    c0: f64,
    tau_c: Option<f64>,
    mandel_q: f64,
    mean_n: f64,
    warning: Option<String>,
}

#[pyclass(module = "microlaser", get_all, frozen)]
struct G2Estimate {
    tau: Vec<f64>,
    g2: Vec<f64>,
    sigma: Vec<f64>,
    counts: Vec<u64>,
    normalization: f64,
    bin_width_s: f64,
}

#[pyclass(module = "microlaser", get_all, frozen)]
struct ExpFit {
    c0: f64,
    c0_sigma: f64,
    tau_c: Option<f64>,
    tau_sigma: Option<f64>,
    chi2: f64,
    chi2_reduced: f64,
    n_points: usize,
}

impl From<fit::ExpFit> for ExpFit {
    fn from(f: fit::ExpFit) -> Self {
        ExpFit {
            c0: f.c0,
            c0_sigma: f.c0_sigma(),
            tau_c: f.tau_c,
            tau_sigma: f.tau_c.map(|_| f.tau_sigma()),
            chi2: f.chi2,
            chi2_reduced: f.chi2_reduced,
            n_points: f.n_points,
        }
    }
}

/// Detection timestamps of one channel, in integer picoseconds.
#[pyclass(name = "Stream", module = "microlaser", frozen)]
struct Stream {
    inner: TimestampStream,
}

#[pymethods]
impl Stream {
    #[new]
    fn new(channel: u32, duration_ps: u64, times_ps: Vec<u64>) -> PyResult<Self> {
        TimestampStream::new(channel, duration_ps, times_ps)
            .map(|inner| Stream { inner })
            .map_err(to_py)
    }

    /// Reads MLTS1 or CSV, chosen by the file's leading bytes.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        TimestampStream::load(path)
            .map(|inner| Stream { inner })
            .map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_mlts1(path).map_err(to_py)
    }

    #[getter]
    fn channel(&self) -> u32 {
        self.inner.channel()
    }

    #[getter]
    fn duration_ps(&self) -> u64 {
        self.inner.duration_ps()
    }

    #[getter]
    fn times_ps(&self) -> Vec<u64> {
        self.inner.times_ps().to_vec()
    }

    fn rate(&self) -> f64 {
        self.inner.rate()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Steady-state photon-number probabilities.
#[pyfunction]
fn steady_state(py: Python<'_>, cfg: &Config) -> PyResult<Vec<f64>> {
    let (c, dist) = cfg.core()?;
    py.detach(|| quantum::steady_state(&c, &dist))
        .map(|p| p.probabilities().to_vec())
        .map_err(to_py)
}

/// `(mean, variance, mandel_q)` of the steady state; `mandel_q` is `None` for an empty cavity.
#[pyfunction]
fn moments(py: Python<'_>, cfg: &Config) -> PyResult<(f64, f64, Option<f64>)> {
    let (c, dist) = cfg.core()?;
    let p = py
        .detach(|| quantum::steady_state(&c, &dist))
        .map_err(to_py)?;
    let m = p.moments();
    Ok((m.mean, m.variance, m.mandel_q))
}

#[pyfunction]
#[pyo3(signature = (cfg, n_scan_max = None))]
fn fixed_points(cfg: &Config, n_scan_max: Option<f64>) -> PyResult<Vec<FixedPoint>> {
    let (c, dist) = cfg.core()?;
    let scan = n_scan_max.unwrap_or_else(|| semiclassical::default_scan_max(&c, &dist));
    let roots = semiclassical::find_fixed_points(&c, &dist, scan).map_err(to_py)?;
    Ok(roots
        .into_iter()
        .map(|f| FixedPoint {
            n0: f.n0,
            stable: f.stable,
            restoring_rate: f.restoring_rate,
            tau_c: f.tau_c,
            q_semiclassical: f.q_semiclassical,
        })
        .collect())
}

/// Branch-following sweep; returns the selected `n0` per pump, in sweep order.
#[pyfunction]
#[pyo3(signature = (cfg, n_atoms, direction = "up"))]
fn sweep(cfg: &Config, n_atoms: Vec<f64>, direction: &str) -> PyResult<Vec<(f64, Option<f64>)>> {
    let direction = match direction {
        "up" => SweepDirection::Ascending,
        "down" => SweepDirection::Descending,
        other => {
            return Err(PyValueError::new_err(format!(
                "direction must be up or down, got {other:?}"
            )))
        }
    };
    let (c, dist) = cfg.core()?;
    let result = semiclassical::sweep(&c, &dist, &n_atoms, direction).map_err(to_py)?;
    Ok(result
        .points
        .iter()
        .map(|p| (p.n_atoms_mean, p.selected.as_ref().map(|f| f.n0)))
        .collect())
}

/// `(tau, g2)` from the regression theorem; the default grid spans five cavity lifetimes.
#[pyfunction]
#[pyo3(signature = (cfg, tau = None))]
fn g2_curve(py: Python<'_>, cfg: &Config, tau: Option<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let (c, dist) = cfg.core()?;
    let grid = tau.unwrap_or_else(|| quantum::default_tau_grid(&c));
    let curve = py
        .detach(|| quantum::g2_regression(&c, &dist, &grid))
        .map_err(to_py)?;
    Ok((curve.tau, curve.values))
}

/// Exponential fit of the theoretical `g²` on the default grid.
#[pyfunction]
fn theory_fit(py: Python<'_>, cfg: &Config) -> PyResult<TheoryFit> {
    let (c, dist) = cfg.core()?;
    let grid = quantum::default_tau_grid(&c);
    let curve = py
        .detach(|| quantum::g2_regression(&c, &dist, &grid))
        .map_err(to_py)?;
    let f = q_and_tau_from_g2(&curve, curve.mean_n).map_err(to_py)?;
    Ok(TheoryFit {
        c0: f.c0,
        tau_c: f.tau_c,
        mandel_q: curve.mandel_q,
        mean_n: curve.mean_n,
        warning: f.warning,
    })
}

/// Detector streams of one trajectory; starts from a steady-state sample
/// unless `initial_n` is given.
#[pyfunction]
#[pyo3(signature = (cfg, duration_s, seed, initial_n = None))]
fn simulate(
    py: Python<'_>,
    cfg: &Config,
    duration_s: f64,
    seed: u64,
    initial_n: Option<usize>,
) -> PyResult<(Stream, Stream)> {
    let (c, dist) = cfg.core()?;
    let opts = SimulationOptions {
        initial: initial_n.map_or(InitialState::SteadyState, InitialState::Fixed),
        record_path: false,
    };
    let rec = py
        .detach(|| trajectory::simulate_with(&c, &dist, duration_s, seed, opts))
        .map_err(to_py)?;
    Ok((Stream { inner: rec.stream1 }, Stream { inner: rec.stream2 }))
}

/// Start–stop histogram of `b` relative to `a`, normalized to `g²`.
/// `normalization` is `analytic`, `overlap` or `tail`.
#[pyfunction]
#[pyo3(signature = (a, b, bin_width_s, window_s, symmetric = false, workers = 1, normalization = "analytic", tail_fraction = 0.1))]
#[allow(clippy::too_many_arguments)]
fn correlate(
    py: Python<'_>,
    a: &Stream,
    b: &Stream,
    bin_width_s: f64,
    window_s: f64,
    symmetric: bool,
    workers: usize,
    normalization: &str,
    tail_fraction: f64,
) -> PyResult<G2Estimate> {
    let mode = match normalization {
        "analytic" => Normalization::Analytic,
        "overlap" => Normalization::Overlap,
        "tail" => Normalization::Tail {
            fraction: tail_fraction,
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "normalization must be analytic, overlap or tail, got {other:?}"
            )))
        }
    };
    let options = CorrelateOptions {
        symmetric,
        workers: workers.max(1),
    };
    let (x, y) = (&a.inner, &b.inner);
    let est = py
        .detach(|| {
            let h = correlator::correlate_with(x, y, bin_width_s, window_s, options)?;
            correlator::normalize(&h, mode)
        })
        .map_err(to_py)?;
    Ok(G2Estimate {
        tau: est.tau,
        g2: est.g2,
        sigma: est.sigma,
        counts: est.counts,
        normalization: est.normalization,
        bin_width_s: est.bin_width_s,
    })
}

/// Weighted fit of `1 + C0 exp(-τ/τ_c)`; by default the first bin is dropped.
#[pyfunction]
#[pyo3(signature = (est, exclude_below = None))]
fn fit_exponential(est: &G2Estimate, exclude_below: Option<f64>) -> PyResult<ExpFit> {
    let core = correlator::G2Estimate {
        tau: est.tau.clone(),
        g2: est.g2.clone(),
        sigma: est.sigma.clone(),
        normalization: est.normalization,
        counts: est.counts.clone(),
        bin_width_s: est.bin_width_s,
    };
    correlator::fit_exponential(&core, exclude_below)
        .map(ExpFit::from)
        .map_err(to_py)
}

#[pyfunction]
fn shot_noise_rms(rate1: f64, rate2: f64, bin_width_s: f64, t_acq_s: f64) -> f64 {
    correlator::shot_noise_rms(rate1, rate2, bin_width_s, t_acq_s)
}

#[pyfunction]
fn bin_width_for_shot_noise(rms: f64, rate1: f64, rate2: f64, t_acq_s: f64) -> f64 {
    correlator::bin_width_for_shot_noise(rms, rate1, rate2, t_acq_s)
}

#[pymodule]
fn microlaser(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_class::<Config>()?;
    m.add_class::<FixedPoint>()?;
    m.add_class::<TheoryFit>()?;
    m.add_class::<G2Estimate>()?;
    m.add_class::<ExpFit>()?;
    m.add_class::<Stream>()?;
    m.add_function(wrap_pyfunction!(steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_points, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(g2_curve, m)?)?;
    m.add_function(wrap_pyfunction!(theory_fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(correlate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponential, m)?)?;
    m.add_function(wrap_pyfunction!(shot_noise_rms, m)?)?;
    m.add_function(wrap_pyfunction!(bin_width_for_shot_noise, m)?)?;
    Ok(())
}
