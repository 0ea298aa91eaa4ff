//! Python bindings: robot models, scenarios, the receding-horizon controller,
//! closed-loop trials and the scalar building blocks of both scorers.

use cat_mppi::geometry::{capsule_capsule_world, segment_segment_distance, Capsule};
use cat_mppi::mppi::{Controller as CoreController, Mode};
use cat_mppi::robot::{load_robot_description, RobotModel, State};
use cat_mppi::runner::{run_trial, TrialOptions};
use cat_mppi::scenario::{builtin_robot, load_scenario, resolve_scenario, Scenario as CoreScenario};
use cat_mppi::scene::min_clearances;
use nalgebra::{DVector, Vector3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: cat_mppi::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vec3(name: &str, v: &[f64]) -> PyResult<Vector3<f64>> {
    match v {
        [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(PyValueError::new_err(format!("{name} must have 3 entries, got {}", v.len()))),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(|e: cat_mppi::Error| PyValueError::new_err(e.to_string()))
}

fn to_python_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Serial manipulator with capsule collision geometry.
#[pyclass(name = "Robot", module = "cat_mppi", skip_from_py_object)]
#[derive(Clone)]
pub struct Robot {
    inner: RobotModel,
}

#[pymethods]
impl Robot {
    /// Bundled model by name (`"panda7"` or `"planar3"`).
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        builtin_robot(name)
            .map(|inner| Robot { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown bundled robot {name:?}")))
    }

    /// Model parsed from a TOML robot description.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_robot_description(path).map(|inner| Robot { inner }).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn dof(&self) -> usize {
        self.inner.dof()
    }

    #[getter]
    fn capsule_names(&self) -> Vec<String> {
        self.inner.capsules.iter().map(|c| c.name.clone()).collect()
    }

    /// End-effector pose as `(xyz, quaternion [x, y, z, w])`.
    fn end_effector(&self, q: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let kin = self.inner.forward_kinematics(&q).map_err(py_err)?;
        let t = kin.end_effector.translation.vector;
        let r = kin.end_effector.rotation.coords;
        Ok((t.iter().copied().collect(), r.iter().copied().collect()))
    }

    /// Inverse dynamics torque `tau = M(q) a + C(q, v) v + g(q)`.
    fn rnea(&self, q: Vec<f64>, v: Vec<f64>, a: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.rnea(&q, &v, &a).map(|t| t.as_slice().to_vec()).map_err(py_err)
    }

    fn gravity_torque(&self, q: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.gravity_torque(&q).map(|t| t.as_slice().to_vec()).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Robot(name={:?}, dof={})", self.inner.name, self.inner.dof())
    }
}

/// Validated benchmark scenario: robot, scene, task and controller settings.
#[pyclass(name = "Scenario", module = "cat_mppi", skip_from_py_object)]
#[derive(Clone)]
pub struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    /// Bundled scenario `1..=6`.
    #[staticmethod]
    fn builtin(id: usize) -> PyResult<Self> {
        resolve_scenario(&id.to_string()).map(|inner| Scenario { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_scenario(path).map(|inner| Scenario { inner }).map_err(py_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn robot(&self) -> Robot {
        Robot {
            inner: self.inner.robot.clone(),
        }
    }

    #[getter]
    fn start_q(&self) -> Vec<f64> {
        self.inner.start.q.as_slice().to_vec()
    }

    #[getter]
    fn pair_count(&self) -> usize {
        self.inner.pairs.len()
    }

    #[getter]
    fn max_cycles(&self) -> usize {
        self.inner.max_cycles()
    }

    /// Signed clearance of every collision pair (positive = overlap).
    #[pyo3(signature = (q, t = 0.0))]
    fn clearances(&self, q: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let snapshot = self.inner.scene.snapshot_at(t);
        min_clearances(&self.inner.robot, &q, &snapshot, &self.inner.pairs).map_err(py_err)
    }

    /// Runs one closed-loop episode and returns the result as a dict.
    #[pyo3(signature = (mode = "cat", seed = 0, record_trace = false))]
    fn run_trial<'py>(&self, py: Python<'py>, mode: &str, seed: u64, record_trace: bool) -> PyResult<Bound<'py, PyAny>> {
        let options = TrialOptions {
            record_trace,
            parallel_rollouts: None,
        };
        let result = run_trial(&self.inner, parse_mode(mode)?, seed, &options).map_err(py_err)?;
        to_python_json(py, &result)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, pairs={})", self.inner.name(), self.inner.pairs.len())
    }
}

/// Receding-horizon MPPI controller (vanilla or CaT scoring).
#[pyclass(name = "Controller", module = "cat_mppi", unsendable)]
pub struct Controller {
    inner: CoreController,
    scene: cat_mppi::scene::Scene,
}

#[pymethods]
impl Controller {
    #[new]
    #[pyo3(signature = (scenario, mode = "cat", seed = None))]
    fn new(scenario: &Scenario, mode: &str, seed: Option<u64>) -> PyResult<Self> {
        let s = &scenario.inner;
        let mut config = s.mppi.clone();
        if let Some(seed) = seed {
            config.seed = seed;
        }
        let policy = s.policy().map_err(py_err)?;
        let inner = CoreController::new(
            s.robot.clone(),
            config,
            s.weights.clone(),
            s.cat,
            parse_mode(mode)?,
            policy,
            s.task(),
        )
        .map_err(py_err)?;
        Ok(Controller {
            inner,
            scene: s.scene.clone(),
        })
    }

    #[getter]
    fn cycle(&self) -> u64 {
        self.inner.cycle()
    }

    /// Mean control sequence, one list per horizon stage.
    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.inner.policy().means().iter().map(|m| m.as_slice().to_vec()).collect()
    }

    /// One control cycle from state `(q, v)` against the scene at time `t`.
    /// Returns `(acceleration, reference [q; v], diagnostics dict)`.
    #[pyo3(signature = (q, v, t = 0.0))]
    fn step<'py>(
        &mut self,
        py: Python<'py>,
        q: Vec<f64>,
        v: Vec<f64>,
        t: f64,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Bound<'py, PyAny>)> {
        let x0 = State::new(DVector::from_vec(q), DVector::from_vec(v)).map_err(py_err)?;
        let snapshot = self.scene.snapshot_at(t);
        let out = self.inner.control_step(&x0, &snapshot).map_err(py_err)?;
        let reference = out.reference.stacked().as_slice().to_vec();
        let diagnostics = to_python_json(py, &out.diagnostics)?;
        Ok((out.control.as_slice().to_vec(), reference, diagnostics))
    }
}

/// Distance between segments `a0-a1` and `b0-b1`.
#[pyfunction]
fn segment_distance(a0: Vec<f64>, a1: Vec<f64>, b0: Vec<f64>, b1: Vec<f64>) -> PyResult<f64> {
    Ok(segment_segment_distance(&vec3("a0", &a0)?, &vec3("a1", &a1)?, &vec3("b0", &b0)?, &vec3("b1", &b1)?).distance)
}

/// Signed capsule-capsule clearance (positive = overlap).
#[pyfunction]
fn capsule_clearance(a0: Vec<f64>, a1: Vec<f64>, ra: f64, b0: Vec<f64>, b1: Vec<f64>, rb: f64) -> PyResult<f64> {
    let a = Capsule::new(vec3("a0", &a0)?, vec3("a1", &a1)?, ra).map_err(py_err)?;
    let b = Capsule::new(vec3("b0", &b0)?, vec3("b1", &b1)?, rb).map_err(py_err)?;
    Ok(capsule_capsule_world(&a, &b).value)
}

/// Soft-min importance weights `exp(-(S - min S) / beta)`, normalized.
#[pyfunction]
fn compute_weights(costs: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    cat_mppi::mppi::compute_weights(&costs, temperature).map_err(py_err)
}

/// Termination hazard `p_max * clip(c / c_max, 0, 1)`.
#[pyfunction]
fn hazard(violation: f64, c_max: f64, p_max: f64) -> PyResult<f64> {
    cat_mppi::cat::hazard(violation, c_max, p_max).map_err(py_err)
}

/// Survival factors `S_t = prod_{t' <= t} (1 - delta_t')`.
#[pyfunction]
fn survival(hazards: Vec<f64>) -> Vec<f64> {
    cat_mppi::cat::survival(&hazards)
}

#[pymodule]
#[pyo3(name = "cat_mppi")]
pub fn cat_mppi_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Robot>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<Controller>()?;
    m.add_function(wrap_pyfunction!(segment_distance, m)?)?;
    m.add_function(wrap_pyfunction!(capsule_clearance, m)?)?;
    m.add_function(wrap_pyfunction!(compute_weights, m)?)?;
    m.add_function(wrap_pyfunction!(hazard, m)?)?;
    m.add_function(wrap_pyfunction!(survival, m)?)?;
    Ok(())
}
