//! Python bindings. Signals cross the boundary as flat lists of floats in
//! row-major order; 2D shapes come from the window system.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use msadmm::driver::{self, run_sequential, PenaltySchedule, StageReport};
use msadmm::error::Error;
use msadmm::experiment::{self, ExperimentConfig, Mode};
use msadmm::linop::LinearMap;
use msadmm::multiscale::{self as ms, ScalingRule};
use msadmm::prox::{self, QuadraticRegularizer, RegularizerKind};
use msadmm::signal::{RngSeed, Shape, Signal};
use msadmm::solver::Problem;

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.root() {
        Error::Io { .. } => PyIOError::new_err(msg),
        Error::InvalidInput(_) | Error::ShapeMismatch { .. } | Error::Config(_) | Error::Parse { .. } => {
            PyValueError::new_err(msg)
        }
        _ => PyRuntimeError::new_err(msg),
    }
}

fn signal(values: Vec<f64>, shape: &Shape) -> PyResult<Signal> {
    Signal::new(values, shape.clone()).map_err(to_py)
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Window system with a constraint level `q`.
#[pyclass(name = "WindowSystem", module = "msadmm_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyWindowSystem {
    inner: ms::WindowSystem,
}

#[pymethods]
impl PyWindowSystem {
    /// All intervals of length `lmin..=lmax` in a signal of length `n`.
    #[staticmethod]
    #[pyo3(signature = (n, lmin, lmax, q, scaling = "inv-sqrt"))]
    fn build_1d(n: usize, lmin: usize, lmax: usize, q: f64, scaling: &str) -> PyResult<Self> {
        let inner = ms::WindowSystem::build_1d(n, lmin, lmax, q, parse::<ScalingRule>(scaling)?).map_err(to_py)?;
        Ok(PyWindowSystem { inner })
    }

    /// All square windows of the given side lengths in an `h × w` image.
    #[staticmethod]
    #[pyo3(signature = (h, w, sizes, q, scaling = "inv-sqrt"))]
    fn build_2d(h: usize, w: usize, sizes: Vec<usize>, q: f64, scaling: &str) -> PyResult<Self> {
        let inner = ms::WindowSystem::build_2d(h, w, &sizes, q, parse::<ScalingRule>(scaling)?).map_err(to_py)?;
        Ok(PyWindowSystem { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "WindowSystem(shape={:?}, windows={}, q={})",
            self.inner.image_shape().dims(),
            self.inner.len(),
            self.inner.q()
        )
    }

    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.image_shape().dims().to_vec()
    }

    /// Signed scaled window sums `⟨w_j, x⟩`.
    fn inner_products(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = signal(x, self.inner.image_shape())?;
        Ok(self.inner.inner_products(x.values()))
    }

    /// `θ(F_q(v))` with data `y`.
    fn penalty(&self, v: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        let shape = self.inner.image_shape();
        Ok(ms::eval_penalty(&self.inner, &signal(v, shape)?, &signal(y, shape)?)
            .map_err(to_py)?
            .theta)
    }

    /// `(θ, violated window indices)`.
    fn feasibility(&self, v: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, Vec<usize>)> {
        let shape = self.inner.image_shape();
        let r = ms::feasibility(&self.inner, &signal(v, shape)?, &signal(y, shape)?).map_err(to_py)?;
        Ok((r.theta, r.violated))
    }
}

#[pyclass(name = "Stage", module = "msadmm_py", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
pub struct PyStage {
    k: usize,
    rho: f64,
    iterations: usize,
    theta: f64,
    step: f64,
    rate: f64,
    bound: f64,
    exact: bool,
}

impl From<&StageReport> for PyStage {
    fn from(s: &StageReport) -> Self {
        PyStage {
            k: s.k,
            rho: s.rho,
            iterations: s.iterations,
            theta: s.final_theta,
            step: s.final_step,
            rate: s.rate_estimate,
            bound: s.aposteriori_bound,
            exact: s.exact,
        }
    }
}

#[pymethods]
impl PyStage {
    fn __repr__(&self) -> String {
        format!(
            "Stage(k={}, rho={}, iterations={}, theta={:e}, exact={})",
            self.k, self.rho, self.iterations, self.theta, self.exact
        )
    }
}

#[pyclass(name = "Solution", module = "msadmm_py", frozen, get_all)]
pub struct PySolution {
    u: Vec<f64>,
    exact: bool,
    final_rho: f64,
    iterations: usize,
    stages: Vec<PyStage>,
    step_norms: Vec<f64>,
}

/// Sequential exact-penalty ADMM for `min J(u)` subject to the multiscale
/// constraints on `Au − y`. `A` is the identity, or a convolution when `psf`
/// is given (`psf_shape` defaults to a 1D kernel).
#[pyfunction]
#[pyo3(signature = (y, windows, alpha = 0.01, regularizer = "squared-gradient", eta = 0.1, psf = None, psf_shape = None, boundary = "periodic"))]
#[allow(clippy::too_many_arguments)]
fn solve(
    py: Python<'_>,
    y: Vec<f64>,
    windows: &PyWindowSystem,
    alpha: f64,
    regularizer: &str,
    eta: f64,
    psf: Option<Vec<f64>>,
    psf_shape: Option<Vec<usize>>,
    boundary: &str,
) -> PyResult<PySolution> {
    let ws = windows.inner.clone();
    let shape = ws.image_shape().clone();
    let y = signal(y, &shape)?;
    let a = match psf {
        None => LinearMap::identity(shape.clone()),
        Some(k) => {
            let dims = psf_shape.unwrap_or_else(|| vec![k.len()]);
            let kernel = Signal::new(k, Shape::new(&dims).map_err(to_py)?).map_err(to_py)?;
            LinearMap::convolution_centered(kernel, parse(boundary)?, shape).map_err(to_py)?
        }
    };
    let reg = QuadraticRegularizer::new(parse::<RegularizerKind>(regularizer)?, alpha).map_err(to_py)?;
    let problem = Problem::new(reg, a, ws, y).map_err(to_py)?;
    let opts = driver::DriverOptions {
        eta,
        ..Default::default()
    };
    let res = py
        .detach(|| run_sequential(&problem, &PenaltySchedule::default_for(&problem.y), &opts))
        .map_err(to_py)?;
    Ok(PySolution {
        u: res.u.values().to_vec(),
        exact: res.exact,
        final_rho: res.final_rho,
        iterations: res.trace.len(),
        stages: res.stages.iter().map(PyStage::from).collect(),
        step_norms: res.trace.step_norms(),
    })
}

/// `(truth, noisy)` synthetic test signal.
#[pyfunction]
fn gen_synthetic_1d(n: usize, sigma: f64, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let (t, y) = experiment::gen_synthetic_1d(n, sigma, RngSeed(seed)).map_err(to_py)?;
    Ok((t.into_values(), y.into_values()))
}

/// Projection of `r` onto the convex hull of `generators`:
/// `(point, convex weights)`.
#[pyfunction]
fn min_norm_point(r: Vec<f64>, generators: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let r = Signal::from_vec(r).map_err(to_py)?;
    let g = generators
        .into_iter()
        .map(Signal::from_vec)
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let p = prox::min_norm_projection(&r, &g).map_err(to_py)?;
    Ok((p.point.into_values(), p.coefficients))
}

/// `(rate, ratio standard deviation)` from consecutive step norms.
#[pyfunction]
fn estimate_rate(steps: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = driver::estimate_rate(&steps).map_err(to_py)?;
    Ok((r.rate, r.ratio_std))
}

/// `c/(1−c)·step`
#[pyfunction]
fn aposteriori_bound(rate: f64, step: f64) -> PyResult<f64> {
    driver::aposteriori_bound(rate, step).map_err(to_py)
}

#[pyfunction]
fn lions_mercier_rate(mu: f64, beta: f64, eta: f64) -> PyResult<f64> {
    driver::lions_mercier_rate(mu, beta, eta).map_err(to_py)
}

/// One DR step on orthogonal lines: worst residuals
/// `(plane, plane second step, space)`.
#[pyfunction]
#[pyo3(signature = (starts = 100, seed = 0))]
fn lines_demo(starts: usize, seed: u64) -> PyResult<(f64, f64, f64)> {
    let d = experiment::lines_demo(starts, seed).map_err(to_py)?;
    Ok((d.plane, d.plane_fixed, d.space))
}

/// Runs an experiment mode with `key → value` settings and returns the
/// process exit code the command line would give.
#[pyfunction]
#[pyo3(signature = (mode, out, settings = None))]
fn run_experiment(py: Python<'_>, mode: &str, out: PathBuf, settings: Option<HashMap<String, String>>) -> PyResult<i32> {
    let mut cfg = ExperimentConfig::new(parse::<Mode>(mode)?);
    for (k, v) in settings.unwrap_or_default() {
        cfg.set(&k, &v).map_err(to_py)?;
    }
    cfg.out = out;
    let report = py.detach(|| experiment::run_experiment(&cfg)).map_err(to_py)?;
    Ok(report.status.code())
}

#[pymodule]
fn msadmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWindowSystem>()?;
    m.add_class::<PyStage>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic_1d, m)?)?;
    m.add_function(wrap_pyfunction!(min_norm_point, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rate, m)?)?;
    m.add_function(wrap_pyfunction!(aposteriori_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lions_mercier_rate, m)?)?;
    m.add_function(wrap_pyfunction!(lines_demo, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_functions() {
        assert_eq!(PyWindowSystem::build_1d(512, 1, 20, 0.1, "inv-sqrt").unwrap().__len__(), 10050);
        let (p, w) = min_norm_point(vec![2.0, 2.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15);
        assert!((lions_mercier_rate(1.0, 1.0, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let ws = PyWindowSystem::build_1d(4, 1, 2, 0.0, "unit").unwrap();
        let (theta, violated) = ws.feasibility(vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]).unwrap();
        assert_eq!((theta, violated), (1.0, vec![0, 4]));
    }
}
