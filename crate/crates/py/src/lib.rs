//! Python bindings: simulation, the receive pipeline, calibration, maps and
//! the velocity-unfolding helpers.

use num_complex::Complex64;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use stagger_core::angle::{self, CartesianConfig, MapKind};
use stagger_core::array::{self, ArrayGeometry};
use stagger_core::demo;
use stagger_core::io;
use stagger_core::params::{self, build_frame_plan};
use stagger_core::pipeline::{self, DetectionFile, PipelineOptions, UnfoldMode};
use stagger_core::sim;
use stagger_core::unfold;
use stagger_core::RadarError;

fn to_py(e: RadarError) -> PyErr {
    match e {
        RadarError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// FMCW/TDM radar configuration. Keyword arguments override the defaults.
#[pyclass(name = "RadarParams", module = "stagger_radar", skip_from_py_object)]
#[derive(Clone)]
pub struct PyRadarParams {
    inner: params::RadarParams,
}

#[pymethods]
impl PyRadarParams {
    #[new]
    #[pyo3(signature = (
        *,
        carrier_frequency = None,
        bandwidth = None,
        chirp_duration = None,
        adc_samples_per_chirp = None,
        chirps_per_tx_per_frame = None,
        n_tx = None,
        n_rx = None,
        pri_frame_a = None,
        pri_frame_b = None,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        carrier_frequency: Option<f64>,
        bandwidth: Option<f64>,
        chirp_duration: Option<f64>,
        adc_samples_per_chirp: Option<usize>,
        chirps_per_tx_per_frame: Option<usize>,
        n_tx: Option<usize>,
        n_rx: Option<usize>,
        pri_frame_a: Option<f64>,
        pri_frame_b: Option<f64>,
    ) -> PyResult<Self> {
        let d = params::RadarParams::default();
        let inner = params::RadarParams {
            carrier_frequency: carrier_frequency.unwrap_or(d.carrier_frequency),
            bandwidth: bandwidth.unwrap_or(d.bandwidth),
            chirp_duration: chirp_duration.unwrap_or(d.chirp_duration),
            adc_samples_per_chirp: adc_samples_per_chirp.unwrap_or(d.adc_samples_per_chirp),
            chirps_per_tx_per_frame: chirps_per_tx_per_frame.unwrap_or(d.chirps_per_tx_per_frame),
            n_tx: n_tx.unwrap_or(d.n_tx),
            n_rx: n_rx.unwrap_or(d.n_rx),
            pri_frame_a: pri_frame_a.unwrap_or(d.pri_frame_a),
            pri_frame_b: pri_frame_b.unwrap_or(d.pri_frame_b),
            ..d
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: params::RadarParams = serde_json::from_str(text).map_err(json_err)?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(json_err)
    }

    #[getter]
    fn carrier_frequency(&self) -> f64 {
        self.inner.carrier_frequency
    }

    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth
    }

    #[getter]
    fn chirp_duration(&self) -> f64 {
        self.inner.chirp_duration
    }

    #[getter]
    fn adc_samples_per_chirp(&self) -> usize {
        self.inner.adc_samples_per_chirp
    }

    #[getter]
    fn chirps_per_tx_per_frame(&self) -> usize {
        self.inner.chirps_per_tx_per_frame
    }

    #[getter]
    fn n_tx(&self) -> usize {
        self.inner.n_tx
    }

    #[getter]
    fn n_rx(&self) -> usize {
        self.inner.n_rx
    }

    #[getter]
    fn pri_frame_a(&self) -> f64 {
        self.inner.pri_frame_a
    }

    #[getter]
    fn pri_frame_b(&self) -> f64 {
        self.inner.pri_frame_b
    }

    fn wavelength(&self) -> f64 {
        self.inner.wavelength()
    }

    fn range_resolution(&self) -> PyResult<f64> {
        params::range_resolution(&self.inner).map_err(to_py)
    }

    /// Unambiguous velocity of frame `frame` (even frames use PRI A).
    fn folded_vmax(&self, frame: u32) -> PyResult<f64> {
        params::folded_vmax(&self.inner, frame).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "RadarParams(n_tx={}, n_rx={}, samples={}, chirps_per_tx={}, pri_a={:e}, pri_b={:e})",
            self.inner.n_tx,
            self.inner.n_rx,
            self.inner.adc_samples_per_chirp,
            self.inner.chirps_per_tx_per_frame,
            self.inner.pri_frame_a,
            self.inner.pri_frame_b
        )
    }
}

/// TX and RX element positions in half-wavelength units.
#[pyclass(name = "ArrayGeometry", module = "stagger_radar", skip_from_py_object)]
#[derive(Clone)]
pub struct PyArrayGeometry {
    inner: ArrayGeometry,
}

#[pymethods]
impl PyArrayGeometry {
    #[new]
    #[pyo3(signature = (tx_positions = None, rx_positions = None))]
    fn new(tx_positions: Option<Vec<u32>>, rx_positions: Option<Vec<u32>>) -> PyResult<Self> {
        let d = ArrayGeometry::default();
        let inner = ArrayGeometry {
            tx_positions: tx_positions.unwrap_or(d.tx_positions),
            rx_positions: rx_positions.unwrap_or(d.rx_positions),
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn tx_positions(&self) -> Vec<u32> {
        self.inner.tx_positions.clone()
    }

    #[getter]
    fn rx_positions(&self) -> Vec<u32> {
        self.inner.rx_positions.clone()
    }

    /// Sorted unique virtual element positions.
    fn virtual_positions(&self) -> PyResult<Vec<u32>> {
        Ok(array::build_virtual_array(&self.inner)
            .map_err(to_py)?
            .positions)
    }

    /// Number of co-located source pairs driven by different transmitters.
    fn overlapped_pairs(&self) -> PyResult<usize> {
        Ok(array::build_virtual_array(&self.inner)
            .map_err(to_py)?
            .overlapped_pairs
            .len())
    }
}

fn geometry_or_default(geometry: Option<PyRef<'_, PyArrayGeometry>>) -> ArrayGeometry {
    geometry.map_or_else(ArrayGeometry::default, |g| g.inner.clone())
}

#[pyclass(name = "PointTarget", module = "stagger_radar", skip_from_py_object)]
#[derive(Clone)]
pub struct PyPointTarget {
    inner: sim::PointTarget,
}

#[pymethods]
impl PyPointTarget {
    #[new]
    #[pyo3(signature = (range, radial_velocity = 0.0, azimuth = 0.0, amplitude = 1.0))]
    fn new(range: f64, radial_velocity: f64, azimuth: f64, amplitude: f64) -> Self {
        Self {
            inner: sim::PointTarget {
                range,
                radial_velocity,
                azimuth,
                amplitude,
            },
        }
    }

    #[getter]
    fn range(&self) -> f64 {
        self.inner.range
    }

    #[getter]
    fn radial_velocity(&self) -> f64 {
        self.inner.radial_velocity
    }

    #[getter]
    fn azimuth(&self) -> f64 {
        self.inner.azimuth
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude
    }

    fn __repr__(&self) -> String {
        format!(
            "PointTarget(range={}, radial_velocity={}, azimuth={}, amplitude={})",
            self.inner.range, self.inner.radial_velocity, self.inner.azimuth, self.inner.amplitude
        )
    }
}

/// Point targets plus noise level. `snr_db=None` means noiseless.
#[pyclass(name = "Scene", module = "stagger_radar", skip_from_py_object)]
#[derive(Clone)]
pub struct PyScene {
    inner: sim::Scene,
}

#[pymethods]
impl PyScene {
    #[new]
    #[pyo3(signature = (targets, snr_db = None, seed = 0))]
    fn new(targets: Vec<PyRef<'_, PyPointTarget>>, snr_db: Option<f64>, seed: u64) -> Self {
        let targets: Vec<sim::PointTarget> = targets.iter().map(|t| t.inner).collect();
        let inner = match snr_db {
            Some(snr) => sim::Scene::with_snr(targets, snr, seed),
            None => sim::Scene::noiseless(targets),
        };
        Self { inner }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(json_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(json_err)
    }

    #[getter]
    fn targets(&self) -> Vec<PyPointTarget> {
        self.inner
            .targets
            .iter()
            .map(|&inner| PyPointTarget { inner })
            .collect()
    }
}

/// One frame of raw beat samples, indexed (rx, chirp, fast time).
#[pyclass(name = "DataCube", module = "stagger_radar", skip_from_py_object)]
#[derive(Clone)]
pub struct PyDataCube {
    inner: sim::DataCube,
}

#[pymethods]
impl PyDataCube {
    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        self.inner.samples.dim()
    }

    #[getter]
    fn frame_index(&self) -> u32 {
        self.inner.frame_index
    }

    #[getter]
    fn slot_interval(&self) -> f64 {
        self.inner.slot_interval
    }

    fn sample(&self, rx: usize, chirp: usize, fast: usize) -> PyResult<Complex64> {
        self.inner
            .samples
            .get([rx, chirp, fast])
            .copied()
            .ok_or_else(|| PyValueError::new_err("sample index out of range"))
    }

    /// One chirp of one receiver.
    fn chirp(&self, rx: usize, chirp: usize) -> PyResult<Vec<Complex64>> {
        let (n_rx, n_chirps, _) = self.inner.samples.dim();
        if rx >= n_rx || chirp >= n_chirps {
            return Err(PyValueError::new_err("chirp index out of range"));
        }
        Ok(self
            .inner
            .samples
            .slice(ndarray::s![rx, chirp, ..])
            .to_vec())
    }

    /// Write an RDC1 file tagged with the digest of `params`.
    fn save(&self, path: &str, params: PyRef<'_, PyRadarParams>) -> PyResult<()> {
        io::write_cube(&self.inner, &params.inner.digest(), path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (_, inner) = io::read_cube(path).map_err(to_py)?;
        Ok(Self { inner })
    }
}

#[pyfunction]
#[pyo3(signature = (scene, params, frame = 0, geometry = None))]
fn simulate_frame(
    scene: PyRef<'_, PyScene>,
    params: PyRef<'_, PyRadarParams>,
    frame: u32,
    geometry: Option<PyRef<'_, PyArrayGeometry>>,
) -> PyResult<PyDataCube> {
    let geometry = geometry_or_default(geometry);
    let inner =
        sim::simulate_frame(&scene.inner, &params.inner, &geometry, frame).map_err(to_py)?;
    Ok(PyDataCube { inner })
}

/// Frames 0 and 1: one with each PRI.
#[pyfunction]
#[pyo3(signature = (scene, params, geometry = None))]
fn simulate_frame_pair(
    scene: PyRef<'_, PyScene>,
    params: PyRef<'_, PyRadarParams>,
    geometry: Option<PyRef<'_, PyArrayGeometry>>,
) -> PyResult<(PyDataCube, PyDataCube)> {
    let geometry = geometry_or_default(geometry);
    let (a, b) = sim::simulate_frame_pair(&scene.inner, &params.inner, &geometry).map_err(to_py)?;
    Ok((PyDataCube { inner: a }, PyDataCube { inner: b }))
}

/// Per-channel complex gains, TX-major.
#[pyclass(
    name = "CalibrationVector",
    module = "stagger_radar",
    skip_from_py_object
)]
#[derive(Clone)]
pub struct PyCalibrationVector {
    inner: angle::CalibrationVector,
}

#[pymethods]
impl PyCalibrationVector {
    #[new]
    #[pyo3(signature = (gains, n_tx, n_rx, reference_range = 0.0, reference_azimuth = 0.0))]
    fn new(
        gains: Vec<Complex64>,
        n_tx: usize,
        n_rx: usize,
        reference_range: f64,
        reference_azimuth: f64,
    ) -> PyResult<Self> {
        let inner =
            angle::CalibrationVector::new(gains, n_tx, n_rx, reference_range, reference_azimuth)
                .map_err(to_py)?;
        Ok(Self { inner })
    }

    fn gains(&self) -> Vec<Complex64> {
        self.inner.gains().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(json_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(json_err)
    }
}

/// Estimate channel gains from a frame containing one strong static
/// reflector at a known range (m) and azimuth (deg).
#[pyfunction]
#[pyo3(signature = (cube, params, range, azimuth, geometry = None, snr_threshold_db = angle::DEFAULT_CALIBRATION_SNR_DB))]
fn estimate_calibration(
    cube: PyRef<'_, PyDataCube>,
    params: PyRef<'_, PyRadarParams>,
    range: f64,
    azimuth: f64,
    geometry: Option<PyRef<'_, PyArrayGeometry>>,
    snr_threshold_db: f64,
) -> PyResult<PyCalibrationVector> {
    let geometry = geometry_or_default(geometry);
    let plan = build_frame_plan(&params.inner, cube.inner.frame_index).map_err(to_py)?;
    let inner = angle::estimate_calibration(
        &cube.inner,
        &plan,
        (range, azimuth),
        &params.inner,
        &geometry,
        snr_threshold_db,
    )
    .map_err(to_py)?;
    Ok(PyCalibrationVector { inner })
}

#[pyclass(
    name = "TargetReport",
    module = "stagger_radar",
    get_all,
    skip_from_py_object
)]
#[derive(Clone)]
pub struct PyTargetReport {
    range: f64,
    velocity: f64,
    azimuth: f64,
    power_db: f64,
    range_bin: usize,
    doppler_bin: usize,
    folded_velocity: f64,
    matched_doppler_bin_b: Option<usize>,
    n_candidates: usize,
    residual: f64,
}

impl From<&pipeline::TargetReport> for PyTargetReport {
    fn from(r: &pipeline::TargetReport) -> Self {
        Self {
            range: r.range,
            velocity: r.velocity,
            azimuth: r.azimuth,
            power_db: r.power_db,
            range_bin: r.range_bin,
            doppler_bin: r.doppler_bin,
            folded_velocity: r.folded_velocity,
            matched_doppler_bin_b: r.matched_doppler_bin_b,
            n_candidates: r.n_candidates,
            residual: r.residual,
        }
    }
}

#[pymethods]
impl PyTargetReport {
    fn __repr__(&self) -> String {
        format!(
            "TargetReport(range={:.3}, velocity={:.3}, azimuth={:.2}, power_db={:.1})",
            self.range, self.velocity, self.azimuth, self.power_db
        )
    }
}

/// Range-azimuth power map in dB. Polar maps are (range m, sin azimuth);
/// Cartesian maps are (x m, y m).
#[pyclass(
    name = "RangeAzimuthMap",
    module = "stagger_radar",
    skip_from_py_object
)]
#[derive(Clone)]
pub struct PyRangeAzimuthMap {
    inner: angle::RangeAzimuthMap,
}

#[pymethods]
impl PyRangeAzimuthMap {
    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            MapKind::Polar => "polar",
            MapKind::Cartesian => "cartesian",
        }
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.power_db.dim()
    }

    /// (origin, step, len) of each axis.
    #[getter]
    fn axes(&self) -> ((f64, f64, usize), (f64, f64, usize)) {
        let a = |x: &angle::MapAxis| (x.origin, x.step, x.len);
        (a(&self.inner.axis0), a(&self.inner.axis1))
    }

    fn power_db(&self) -> Vec<Vec<f64>> {
        self.inner
            .power_db
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    fn peak_db(&self) -> f64 {
        self.inner.peak_db()
    }

    /// Axis values of the strongest cell.
    fn peak_position(&self) -> (f64, f64) {
        let (i, j) = self.inner.peak_cell();
        (
            self.inner.axis0.value(i as f64),
            self.inner.axis1.value(j as f64),
        )
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::write_map(&self.inner, path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (_, inner) = io::read_map(path).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[pyo3(signature = (path, floor_db = None))]
    fn export_pgm(&self, path: &str, floor_db: Option<f64>) -> PyResult<()> {
        io::export_pgm(&self.inner, path, floor_db).map_err(to_py)
    }
}

/// Run the receive chain on a staggered frame pair. Returns the detections
/// and, when `maps` is set, the maps of both frames.
#[pyfunction]
#[pyo3(signature = (cube_a, cube_b, params, geometry = None, calibration = None, maps = true, cartesian = false, overlap_only = false))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn process(
    py: Python<'_>,
    cube_a: PyRef<'_, PyDataCube>,
    cube_b: PyRef<'_, PyDataCube>,
    params: PyRef<'_, PyRadarParams>,
    geometry: Option<PyRef<'_, PyArrayGeometry>>,
    calibration: Option<PyRef<'_, PyCalibrationVector>>,
    maps: bool,
    cartesian: bool,
    overlap_only: bool,
) -> PyResult<(
    Vec<PyTargetReport>,
    Option<(PyRangeAzimuthMap, PyRangeAzimuthMap)>,
)> {
    let geometry = geometry_or_default(geometry);
    let options = PipelineOptions {
        maps: maps || cartesian,
        cartesian: cartesian.then(CartesianConfig::default),
        unfold: if overlap_only {
            UnfoldMode::OverlapOnly
        } else {
            UnfoldMode::Staggered
        },
        ..PipelineOptions::default()
    };
    let (a, b, p) = (&cube_a.inner, &cube_b.inner, &params.inner);
    let cal = calibration.as_ref().map(|c| c.inner.clone());
    let out = py
        .detach(|| pipeline::run_pipeline(a, b, p, &geometry, cal.as_ref(), &options))
        .map_err(to_py)?;
    let detections = out.detections.iter().map(PyTargetReport::from).collect();
    let chosen = if cartesian { out.cartesian } else { out.maps };
    let maps = chosen.map(|(ma, mb)| {
        (
            PyRangeAzimuthMap { inner: ma },
            PyRangeAzimuthMap { inner: mb },
        )
    });
    Ok((detections, maps))
}

/// Detections serialized in the CLI's JSON layout.
#[pyfunction]
fn detections_to_json(
    frame_a: u32,
    frame_b: u32,
    detections: Vec<PyRef<'_, PyTargetReport>>,
) -> PyResult<String> {
    let file = DetectionFile {
        frame_a,
        frame_b,
        detections: detections
            .iter()
            .map(|d| pipeline::TargetReport {
                range: d.range,
                velocity: d.velocity,
                azimuth: d.azimuth,
                power_db: d.power_db,
                range_bin: d.range_bin,
                doppler_bin: d.doppler_bin,
                folded_velocity: d.folded_velocity,
                matched_doppler_bin_b: d.matched_doppler_bin_b,
                n_candidates: d.n_candidates,
                residual: d.residual,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).map_err(json_err)
}

#[pyfunction]
fn fold_velocity(v_true: f64, vmax: f64) -> f64 {
    unfold::fold_velocity(v_true, vmax)
}

/// Alias candidates of a folded velocity for an `n_tx` transmitter frame.
#[pyfunction]
fn crt_candidates(folded: f64, vmax: f64, n_tx: usize) -> PyResult<Vec<f64>> {
    Ok(unfold::crt_candidates(folded, vmax, n_tx)
        .map_err(to_py)?
        .candidates)
}

/// Velocities common to both frames' candidate sets within `tolerance`.
#[pyfunction]
fn crt_intersect(
    folded_a: f64,
    vmax_a: f64,
    folded_b: f64,
    vmax_b: f64,
    n_tx: usize,
    tolerance: f64,
) -> PyResult<Vec<f64>> {
    let a = unfold::crt_candidates(folded_a, vmax_a, n_tx).map_err(to_py)?;
    let b = unfold::crt_candidates(folded_b, vmax_b, n_tx).map_err(to_py)?;
    unfold::crt_intersect(&a, &b, tolerance).map_err(to_py)
}

#[pyfunction]
fn azimuth_resolution_3db(aperture_half_wavelengths: f64) -> PyResult<f64> {
    params::azimuth_resolution_3db(aperture_half_wavelengths).map_err(to_py)
}

/// Run a built-in experiment: "unfold", "resolution-angle",
/// "resolution-range" or "compensation". Returns (passed, report text).
#[pyfunction]
fn run_demo(py: Python<'_>, name: &str) -> PyResult<(bool, String)> {
    let run: fn() -> stagger_core::Result<demo::DemoReport> = match name {
        "unfold" => demo::demo_unfold,
        "resolution-angle" => demo::demo_resolution_angle,
        "resolution-range" => demo::demo_resolution_range,
        "compensation" => demo::demo_compensation,
        other => return Err(PyValueError::new_err(format!("unknown demo {other:?}"))),
    };
    let report = py.detach(run).map_err(to_py)?;
    Ok((report.passed(), report.render()))
}

#[pymodule]
pub fn stagger_radar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyRadarParams>()?;
    m.add_class::<PyArrayGeometry>()?;
    m.add_class::<PyPointTarget>()?;
    m.add_class::<PyScene>()?;
    m.add_class::<PyDataCube>()?;
    m.add_class::<PyCalibrationVector>()?;
    m.add_class::<PyTargetReport>()?;
    m.add_class::<PyRangeAzimuthMap>()?;
    m.add_function(wrap_pyfunction!(simulate_frame, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_frame_pair, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(process, m)?)?;
    m.add_function(wrap_pyfunction!(detections_to_json, m)?)?;
    m.add_function(wrap_pyfunction!(fold_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(crt_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(crt_intersect, m)?)?;
    m.add_function(wrap_pyfunction!(azimuth_resolution_3db, m)?)?;
    m.add_function(wrap_pyfunction!(run_demo, m)?)?;
    Ok(())
}
