use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;
use stagger_radar::stagger_radar;

fn with_module<R>(f: impl FnOnce(Python<'_>) -> PyResult<R>) -> R {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(stagger_radar);
        Python::initialize();
    });
    Python::attach(|py| f(py).unwrap_or_else(|e| panic!("{e}")))
}

#[test]
fn module_exposes_core_api() {
    with_module(|py| {
        let m = py.import("stagger_radar")?;
        for name in [
            "RadarParams",
            "ArrayGeometry",
            "PointTarget",
            "Scene",
            "DataCube",
            "CalibrationVector",
            "TargetReport",
            "RangeAzimuthMap",
            "simulate_frame",
            "simulate_frame_pair",
            "estimate_calibration",
            "process",
            "crt_candidates",
            "crt_intersect",
            "run_demo",
        ] {
            assert!(m.hasattr(name)?, "missing {name}");
        }
        let set: Vec<f64> = m
            .getattr("crt_candidates")?
            .call1((-1.2, 3.6, 9))?
            .extract()?;
        assert!((set[5] - 6.0).abs() < 1e-9);
        Ok(())
    });
}

#[test]
fn python_smoke_script() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../python/smoke_test.py");
    let source = CString::new(std::fs::read_to_string(path).unwrap()).unwrap();
    with_module(|py| {
        let globals = PyDict::new(py);
        globals.set_item("__name__", "__main__")?;
        globals.set_item("__file__", path)?;
        py.run(&source, Some(&globals), None)?;
        Ok(())
    });
}
