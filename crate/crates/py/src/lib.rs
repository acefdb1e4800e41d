//! Python bindings: the four pose/rotation groups with their Jacobians, the
//! estimation pipelines, the Jacobian audit and differential-drive pre-integration.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use liekit::audit::{run_audit, AuditOptions};
use liekit::cli::{exit_code, EXIT_CONVERGENCE};
use liekit::diffdrive::{self, CalibOptions, EncoderTick, NoiseParams, WheelParams, THETA_TOL};
use liekit::estimation::SolveOptions;
use liekit::groups::{Pose2, Pose3, Rot2, Rot3};
use liekit::pipeline::{self, RunOutput, Table};
use liekit::sim::{self, Scenario};
use liekit::{Action, Jac, LieGroup, Manifold};

fn err(e: liekit::Error) -> PyErr {
    if exit_code(&e) == EXIT_CONVERGENCE {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn rows(m: &Jac) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => PyList::new(py, a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?)?.into_any(),
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py>(py: Python<'py>, v: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?)
}

fn table<'py>(py: Python<'py>, t: &Table) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("header", t.header.clone())?;
    d.set_item("rows", t.rows.clone())?;
    Ok(d)
}

macro_rules! py_group {
    ($py:ident, $name:literal, $g:ty, $dof:expr) => {
        #[pyclass(name = $name, module = "liekit", from_py_object)]
        #[derive(Clone)]
        pub struct $py {
            inner: $g,
        }

        #[pymethods]
        impl $py {
            #[staticmethod]
            fn identity() -> Self {
                Self { inner: <$g>::exp(&DVector::zeros($dof)).expect("zero tangent") }
            }

            #[staticmethod]
            fn exp(tau: Vec<f64>) -> PyResult<Self> {
                Ok(Self { inner: <$g>::exp(&DVector::from_vec(tau)).map_err(err)? })
            }

            #[staticmethod]
            fn jr(tau: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                Ok(rows(&<$g>::jr(&DVector::from_vec(tau)).map_err(err)?))
            }

            #[staticmethod]
            fn jl(tau: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                Ok(rows(&<$g>::jl(&DVector::from_vec(tau)).map_err(err)?))
            }

            #[staticmethod]
            fn jr_inv(tau: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                Ok(rows(&<$g>::jr_inv(&DVector::from_vec(tau)).map_err(err)?))
            }

            #[staticmethod]
            fn jl_inv(tau: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                Ok(rows(&<$g>::jl_inv(&DVector::from_vec(tau)).map_err(err)?))
            }

            #[getter]
            fn dof(&self) -> usize {
                $dof
            }

            fn log(&self) -> Vec<f64> {
                vec_of(&self.inner.log())
            }

            fn inverse(&self) -> Self {
                Self { inner: self.inner.inverse() }
            }

            fn compose(&self, other: &Self) -> Self {
                Self { inner: self.inner.compose(&other.inner) }
            }

            fn __mul__(&self, other: &Self) -> Self {
                self.compose(other)
            }

            fn adj(&self) -> Vec<Vec<f64>> {
                rows(&self.inner.adj())
            }

            fn rplus(&self, tau: Vec<f64>) -> PyResult<Self> {
                Ok(Self { inner: self.inner.rplus(&DVector::from_vec(tau)).map_err(err)? })
            }

            fn lplus(&self, tau: Vec<f64>) -> PyResult<Self> {
                Ok(Self { inner: self.inner.lplus(&DVector::from_vec(tau)).map_err(err)? })
            }

            /// self ⊖ other
            fn rminus(&self, other: &Self) -> PyResult<Vec<f64>> {
                Ok(vec_of(&self.inner.rminus(&other.inner).map_err(err)?))
            }

            fn lminus(&self, other: &Self) -> PyResult<Vec<f64>> {
                Ok(vec_of(&self.inner.lminus(&other.inner).map_err(err)?))
            }

            fn act(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
                Ok(vec_of(&self.inner.act(&DVector::from_vec(p)).map_err(err)?))
            }

            fn jac_inverse(&self) -> Vec<Vec<f64>> {
                rows(&self.inner.jac_inverse())
            }

            fn jac_compose_lhs(&self, other: &Self) -> Vec<Vec<f64>> {
                rows(&self.inner.jac_compose_lhs(&other.inner))
            }

            fn jac_compose_rhs(&self, other: &Self) -> Vec<Vec<f64>> {
                rows(&self.inner.jac_compose_rhs(&other.inner))
            }

            fn jac_rplus_x(&self, tau: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                Ok(rows(&self.inner.jac_rplus_x(&DVector::from_vec(tau)).map_err(err)?))
            }

            fn jac_rplus_tau(&self, tau: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                Ok(rows(&self.inner.jac_rplus_tau(&DVector::from_vec(tau)).map_err(err)?))
            }

            fn jac_act_x(&self, p: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                Ok(rows(&self.inner.jac_act_x(&DVector::from_vec(p)).map_err(err)?))
            }

            fn jac_act_p(&self, p: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
                Ok(rows(&self.inner.jac_act_p(&DVector::from_vec(p)).map_err(err)?))
            }

            fn is_valid(&self, tol: f64) -> bool {
                self.inner.is_valid(tol)
            }

            fn __repr__(&self) -> String {
                format!("{}(log={:?})", $name, self.log())
            }
        }
    };
}

py_group!(PySO2, "SO2", Rot2, 1);
py_group!(PySO3, "SO3", Rot3, 3);
py_group!(PySE2, "SE2", Pose2, 3);
py_group!(PySE3, "SE3", Pose3, 6);

fn scenario(config: Option<&str>, seed: Option<u64>, dim: Option<usize>) -> PyResult<Scenario> {
    let mut sc = match config {
        Some(s) => Scenario::from_json(s).map_err(err)?,
        None => Scenario::default(),
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    if let Some(d) = dim {
        sc.dim = d;
    }
    sc.validate().map_err(err)?;
    Ok(sc)
}

/// Simulates the scenario and writes the dataset files into `out`.
#[pyfunction]
#[pyo3(signature = (out, config=None, seed=None, dim=None))]
fn simulate(out: &str, config: Option<&str>, seed: Option<u64>, dim: Option<usize>) -> PyResult<()> {
    let sc = scenario(config, seed, dim)?;
    let ds = sim::simulate(&sc).map_err(err)?;
    std::fs::create_dir_all(out).map_err(|e| PyValueError::new_err(e.to_string()))?;
    ds.write(std::path::Path::new(out)).map_err(err)
}

/// Runs `eskf`, `sam`, `selfcal` or `ddcalib` on a JSON scenario and returns
/// `{"summary", "estimates", "extra"}`. Convergence and rank problems are
/// reported in `summary["error"]` rather than raised.
#[pyfunction]
#[pyo3(signature = (command, config=None, seed=None, dim=None))]
fn run<'py>(py: Python<'py>, command: &str, config: Option<&str>, seed: Option<u64>, dim: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
    let mut sc = scenario(config, seed, dim)?;
    if command == "ddcalib" && sc.diffdrive.is_none() {
        sc.diffdrive = Some(Default::default());
    }
    let ds = pipeline::load_or_simulate(&sc).map_err(err)?;
    let opts = SolveOptions::default();
    let out: RunOutput = match command {
        "eskf" => pipeline::run_eskf(&ds),
        "sam" => pipeline::run_sam(&ds, false, &opts),
        "selfcal" => pipeline::run_sam(&ds, true, &opts),
        "ddcalib" => pipeline::run_ddcalib(&ds, &CalibOptions::default()),
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    }
    .map_err(err)?;
    let mut summary = out.summary;
    summary.error = out.failure.as_ref().map(|e| e.to_string());
    let d = PyDict::new(py);
    d.set_item("summary", serialize(py, &summary)?)?;
    d.set_item("estimates", table(py, &out.estimates)?)?;
    let extra = PyDict::new(py);
    for (name, t) in &out.extra {
        extra.set_item(name, table(py, t)?)?;
    }
    d.set_item("extra", extra)?;
    Ok(d)
}

/// Compares every analytic Jacobian block with central finite differences.
#[pyfunction]
#[pyo3(signature = (trials=100, seed=0, tolerance=1e-5, inject_faults=Vec::new()))]
fn jaccheck<'py>(py: Python<'py>, trials: usize, seed: u64, tolerance: f64, inject_faults: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    serialize(py, &run_audit(&AuditOptions { seed, trials, tolerance, inject_faults }))
}

/// Pre-integrates encoder ticks `[(dpsi_l, dpsi_r), ...]`; returns the delta (x, y, theta),
/// its covariance and the calibration Jacobian.
#[pyfunction]
#[pyo3(signature = (ticks, calib=(1.0, 1.0, 1.0), wheels=(0.1, 0.1, 0.5), noise=(0.0, 0.0, 0.0, 0.0)))]
fn preintegrate<'py>(
    py: Python<'py>,
    ticks: Vec<(f64, f64)>,
    calib: (f64, f64, f64),
    wheels: (f64, f64, f64),
    noise: (f64, f64, f64, f64),
) -> PyResult<Bound<'py, PyDict>> {
    let p = WheelParams::new(wheels.0, wheels.1, wheels.2).map_err(err)?;
    let c = diffdrive::Calib::new(calib.0, calib.1, calib.2);
    c.validate().map_err(err)?;
    let np = NoiseParams::new(noise.0, noise.1, noise.2, noise.3);
    np.validate().map_err(err)?;
    let ts: Vec<EncoderTick> = ticks.iter().map(|(l, r)| EncoderTick::new(*l, *r)).collect();
    let d = diffdrive::preintegrate(&ts, &c, &p, &np, THETA_TOL).map_err(err)?;
    let m = |x: &nalgebra::Matrix3<f64>| rows(&DMatrix::from_column_slice(3, 3, x.as_slice()));
    let out = PyDict::new(py);
    out.set_item("delta", d.delta.iter().copied().collect::<Vec<f64>>())?;
    out.set_item("q", m(&d.q))?;
    out.set_item("jc", m(&d.jc))?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "liekit")]
fn liekit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySO2>()?;
    m.add_class::<PySO3>()?;
    m.add_class::<PySE2>()?;
    m.add_class::<PySE3>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(jaccheck, m)?)?;
    m.add_function(wrap_pyfunction!(preintegrate, m)?)?;
    Ok(())
}
