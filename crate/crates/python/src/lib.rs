//! Python bindings for `bdoa-core`.

use std::path::PathBuf;

use bdoa_core::array_model::{build_database, build_geometry, GeometryConfig, PrototypeDatabase};
use bdoa_core::coherence::Criterion;
use bdoa_core::harness::{evaluate_signal, CriterionSweep, Evaluation, RunConfig};
use bdoa_core::numerics::StftConfig;
use bdoa_core::simulator::{mix_scenario, ScenarioConfig, ScenarioOutput, Truth};
use bdoa_core::spectra::Method;
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: bdoa_core::Error) -> PyErr {
    match e {
        bdoa_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = bdoa_core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

/// Scenario settings; construct from TOML text or use the defaults.
#[pyclass(name = "ScenarioConfig", module = "bdoa")]
#[derive(Clone)]
struct PyScenarioConfig {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenarioConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner = match toml {
            Some(t) => ScenarioConfig::from_toml(t).map_err(err)?,
            None => ScenarioConfig::default(),
        };
        Ok(Self { inner })
    }

    #[getter]
    fn doas(&self) -> Vec<f64> {
        self.inner.doas.clone()
    }
    #[setter]
    fn set_doas(&mut self, v: Vec<f64>) {
        self.inner.doas = v;
    }
    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db
    }
    #[setter]
    fn set_snr_db(&mut self, v: f64) {
        self.inner.snr_db = v;
    }
    #[getter]
    fn t60(&self) -> f64 {
        self.inner.t60
    }
    #[setter]
    fn set_t60(&mut self, v: f64) {
        self.inner.t60 = v;
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }
    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }
    #[setter]
    fn set_duration(&mut self, v: f64) {
        self.inner.duration = v;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioConfig(doas={:?}, snr_db={}, t60={}, seed={})",
            self.inner.doas, self.inner.snr_db, self.inner.t60, self.inner.seed
        )
    }
}

/// Ground truth of a synthesized scenario.
#[pyclass(name = "Truth", module = "bdoa")]
#[derive(Clone)]
struct PyTruth {
    inner: Truth,
}

#[pymethods]
impl PyTruth {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: Truth::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn doas(&self) -> Vec<f64> {
        self.inner.doas.clone()
    }
    #[getter]
    fn snr_db(&self) -> Option<f64> {
        self.inner.snr_db
    }
    #[getter]
    fn frame_active(&self) -> Vec<bool> {
        self.inner.frame_active.clone()
    }
    #[getter]
    fn source_active(&self) -> Vec<Vec<bool>> {
        self.inner.source_active.clone()
    }
}

/// Output of `simulate`: the mixture, its components and the truth.
#[pyclass(name = "Scenario", module = "bdoa")]
struct PyScenario {
    inner: ScenarioOutput,
}

#[pymethods]
impl PyScenario {
    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.sample_rate
    }
    /// `mixture[m][n]`
    #[getter]
    fn mixture(&self) -> Vec<Vec<f64>> {
        self.inner.mixture.clone()
    }
    /// `direct[d][m][n]`
    #[getter]
    fn direct(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.direct.clone()
    }
    #[getter]
    fn reverberant(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner.reverberant.clone()
    }
    #[getter]
    fn noise(&self) -> Vec<Vec<f64>> {
        self.inner.noise.clone()
    }
    #[getter]
    fn truth(&self) -> PyTruth {
        PyTruth { inner: self.inner.truth.clone() }
    }

    #[pyo3(signature = (directory, components = false))]
    fn write(&self, directory: PathBuf, components: bool) -> PyResult<()> {
        self.inner.write(&directory, components).map_err(err)
    }
}

/// Anechoic prototype ATF/RTF database.
#[pyclass(name = "Database", module = "bdoa")]
struct PyDatabase {
    inner: PrototypeDatabase,
}

#[pymethods]
impl PyDatabase {
    /// Builds the database for the default geometry, or one given as TOML.
    #[staticmethod]
    #[pyo3(signature = (num_directions = 72, sample_rate = 16000.0, geometry_toml = None))]
    fn build(num_directions: usize, sample_rate: f64, geometry_toml: Option<&str>) -> PyResult<Self> {
        let gc: GeometryConfig = match geometry_toml {
            Some(t) => toml::from_str(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => GeometryConfig::default(),
        };
        let geometry = build_geometry(&gc).map_err(err)?;
        let db = build_database(&geometry, StftConfig::for_rate(sample_rate), num_directions).map_err(err)?;
        Ok(Self { inner: db })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: PrototypeDatabase::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn directions(&self) -> Vec<f64> {
        self.inner.directions.clone()
    }
    #[getter]
    fn num_bins(&self) -> usize {
        self.inner.num_bins()
    }
    #[getter]
    fn num_mics(&self) -> usize {
        self.inner.num_mics()
    }

    fn atf(&self, bin: usize, direction: usize) -> PyResult<Vec<Complex64>> {
        self.check(bin, direction)?;
        Ok(self.inner.atf(bin, direction).to_vec())
    }

    fn rtf(&self, bin: usize, direction: usize) -> PyResult<Vec<Complex64>> {
        self.check(bin, direction)?;
        Ok(self.inner.rtf(bin, direction).to_vec())
    }

    fn nearest_index(&self, theta_deg: f64) -> usize {
        self.inner.nearest_index(theta_deg)
    }
}

impl PyDatabase {
    fn check(&self, bin: usize, direction: usize) -> PyResult<()> {
        if bin >= self.inner.num_bins() || direction >= self.inner.num_directions() {
            return Err(PyValueError::new_err(format!("index ({bin}, {direction}) out of range")));
        }
        Ok(())
    }
}

/// Localization settings; construct from TOML text or use the defaults.
#[pyclass(name = "RunConfig", module = "bdoa")]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        let inner: RunConfig = match toml {
            Some(t) => toml::from_str(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => RunConfig::default(),
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn methods(&self) -> Vec<String> {
        self.inner.methods.iter().map(|m| m.name().to_string()).collect()
    }
    #[setter]
    fn set_methods(&mut self, v: Vec<String>) -> PyResult<()> {
        self.inner.methods = v.iter().map(|s| parse::<Method>(s)).collect::<PyResult<_>>()?;
        Ok(())
    }
    #[getter]
    fn num_sources(&self) -> usize {
        self.inner.num_sources
    }
    #[setter]
    fn set_num_sources(&mut self, v: usize) {
        self.inner.num_sources = v;
    }

    /// Replaces the criteria with one criterion swept over `thresholds`.
    fn set_criterion(&mut self, criterion: &str, thresholds: Vec<f64>) -> PyResult<()> {
        self.inner.criteria = vec![CriterionSweep { criterion: parse::<Criterion>(criterion)?, thresholds }];
        Ok(())
    }
}

fn evaluation_dict<'py>(py: Python<'py>, e: &Evaluation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("method", e.key.method.name())?;
    d.set_item("criterion", e.key.criterion.name())?;
    d.set_item("threshold", e.key.threshold)?;
    d.set_item("accuracy", e.summary.accuracy)?;
    d.set_item("scored_frames", e.summary.scored_frames)?;
    d.set_item("correct_frames", e.summary.correct_frames)?;
    d.set_item("mean_selected", e.summary.mean_selected)?;
    let frames: Vec<Bound<'py, PyDict>> = e
        .frames
        .iter()
        .map(|f| {
            let fd = PyDict::new(py);
            fd.set_item("frame", f.frame)?;
            fd.set_item("truth", f.truth.clone())?;
            fd.set_item("estimates", f.estimates.clone())?;
            fd.set_item("correct", f.correct)?;
            fd.set_item("selected", f.selected)?;
            fd.set_item("front_back_confused", f.front_back_confused)?;
            Ok(fd)
        })
        .collect::<PyResult<_>>()?;
    d.set_item("frames", frames)?;
    Ok(d)
}

/// Synthesizes a scenario.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn simulate(py: Python<'_>, config: Option<PyScenarioConfig>) -> PyResult<PyScenario> {
    let cfg = config.map(|c| c.inner).unwrap_or_default();
    let out = py.allow_threads(|| mix_scenario(&cfg)).map_err(err)?;
    Ok(PyScenario { inner: out })
}

/// Localizes the speakers in `signal[m][n]`; returns one dict per
/// (method, criterion, threshold) setting.
#[pyfunction]
#[pyo3(signature = (signal, truth = None, config = None, database = None, sample_rate = 16000.0))]
fn localize<'py>(
    py: Python<'py>,
    signal: Vec<Vec<f64>>,
    truth: Option<PyTruth>,
    config: Option<PyRunConfig>,
    database: Option<PyRef<'py, PyDatabase>>,
    sample_rate: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.map(|c| c.inner).unwrap_or_default();
    let built;
    let db = match &database {
        Some(d) => &d.inner,
        None => {
            built = cfg.database(StftConfig::for_rate(sample_rate)).map_err(err)?;
            &built
        }
    };
    let truth = truth.map(|t| t.inner);
    let results = py.allow_threads(|| evaluate_signal(&signal, truth.as_ref(), db, &cfg)).map_err(err)?;
    results.iter().map(|e| evaluation_dict(py, e)).collect()
}

/// Angle in radians between the complex lines spanned by `a` and `b`.
#[pyfunction]
fn hermitian_angle(a: Vec<Complex64>, b: Vec<Complex64>) -> PyResult<f64> {
    bdoa_core::spectra::hermitian_angle(&a, &b).map_err(err)
}

/// Permutation-matched frame score: `(correct, errors)`.
#[pyfunction]
#[pyo3(signature = (truth, estimates, tolerance = 5.0))]
fn score_frame(truth: Vec<f64>, estimates: Vec<f64>, tolerance: f64) -> PyResult<(bool, Vec<f64>)> {
    let s = bdoa_core::harness::score_frame(&truth, &estimates, tolerance).map_err(err)?;
    Ok((s.correct, s.errors))
}

/// Reads a WAV file: `(sample_rate, channels)`.
#[pyfunction]
fn read_wav(path: PathBuf) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let a = bdoa_core::audio::read_wav(&path).map_err(err)?;
    Ok((a.sample_rate, a.channels))
}

/// Writes float32 WAV.
#[pyfunction]
fn write_wav(path: PathBuf, channels: Vec<Vec<f64>>, sample_rate: f64) -> PyResult<()> {
    bdoa_core::audio::write_wav(&path, &channels, sample_rate).map_err(err)
}

#[pymodule]
fn bdoa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenarioConfig>()?;
    m.add_class::<PyTruth>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyDatabase>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(localize, m)?)?;
    m.add_function(wrap_pyfunction!(hermitian_angle, m)?)?;
    m.add_function(wrap_pyfunction!(score_frame, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    Ok(())
}
