//! Python bindings: compile a netlist, inspect regularity, reduce defect
//! loops, and integrate trajectories from Python.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use birknet::devices::ConstitutiveModel;
use birknet::dynamics::{dissipation_certificate, integrate, SimState, Trajectory};
use birknet::reduction::{
    insert_series_inductor, reduce_capacitor_loop, reduce_resistor_loop_linear,
    reduce_resistor_loop_nonlinear, res_action_for, ReduceAction,
};
use birknet::AnySystem;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A compiled (and possibly reduced) circuit in loop-charge coordinates.
#[pyclass(unsendable)]
struct System {
    inner: AnySystem,
}

impl System {
    fn coordinate(&self, id: &str) -> PyResult<usize> {
        self.inner.coordinate_index(id).ok_or_else(|| {
            value_err(format!(
                "no coordinate named '{id}': current coordinates are {:?}",
                self.inner.coordinate_ids()
            ))
        })
    }
}

#[pymethods]
impl System {
    /// Number of branches in the underlying circuit.
    #[getter]
    fn b(&self) -> usize {
        self.inner.base().b()
    }

    /// Current number of loop coordinates (shrinks under reduction).
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn branch_ids(&self) -> Vec<String> {
        self.inner.base().graph.branch_ids.clone()
    }

    #[getter]
    fn coordinate_ids(&self) -> Vec<String> {
        self.inner.coordinate_ids()
    }

    /// Mass matrix F(qdot) as a nested list.
    fn mass_matrix(&self, qdot: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.check_dim(&qdot)?;
        self.inner.mass_matrix(&qdot).map_err(runtime_err)
    }

    /// Birkhoffian components Q_j(q, qdot, qddot).
    fn components(&self, q: Vec<f64>, qdot: Vec<f64>, qddot: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&q)?;
        self.check_dim(&qdot)?;
        self.check_dim(&qddot)?;
        self.inner.components(&q, &qdot, &qddot).map_err(runtime_err)
    }

    /// Total stored energy at a state.
    fn energy(&self, q: Vec<f64>, qdot: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&q)?;
        self.check_dim(&qdot)?;
        self.inner.energy(&q, &qdot).map_err(runtime_err)
    }

    /// Regularity report: verdict, defect loops, determinant samples, witness.
    #[pyo3(signature = (samples = 25, seed = 42))]
    fn regularity<'py>(&self, py: Python<'py>, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let report = self.inner.regularity(samples, seed);
        let dict = PyDict::new_bound(py);
        dict.set_item("verdict", format!("{:?}", report.verdict))?;
        let defects = PyList::empty_bound(py);
        for d in &report.defects {
            let entry = PyDict::new_bound(py);
            entry.set_item("kind", format!("{:?}", d.kind))?;
            let coords: Vec<&str> =
                d.coordinates.iter().map(|&j| self.inner.coordinate_id(j)).collect();
            entry.set_item("coordinates", coords)?;
            entry.set_item("branches", d.branches.clone())?;
            defects.append(entry)?;
        }
        dict.set_item("defects", defects)?;
        dict.set_item("sampled_dets", report.sampled_dets)?;
        dict.set_item("det_scale", report.det_scale)?;
        match report.witness {
            Some(w) => {
                let entry = PyDict::new_bound(py);
                entry.set_item("coordinate", self.inner.coordinate_id(w.coordinate))?;
                entry.set_item("value", w.value)?;
                dict.set_item("witness", entry)?;
            }
            None => dict.set_item("witness", py.None())?,
        }
        Ok(dict)
    }

    /// Eliminate the capacitor-only loop on `coordinate`.
    fn reduce_capacitor(&self, coordinate: &str) -> PyResult<System> {
        let j = self.coordinate(coordinate)?;
        let reduced = reduce_capacitor_loop(self.inner.clone(), j).map_err(value_err)?;
        Ok(System { inner: reduced.into() })
    }

    /// Eliminate the resistor-only loop on `coordinate`, choosing the closed
    /// form when every resistor in it is linear.
    fn reduce_resistor(&self, coordinate: &str) -> PyResult<System> {
        let j = self.coordinate(coordinate)?;
        let reduced = match res_action_for(&self.inner, j) {
            ReduceAction::ResReduceLinear { .. } => {
                reduce_resistor_loop_linear(self.inner.clone(), j).map_err(value_err)?
            }
            _ => reduce_resistor_loop_nonlinear(self.inner.clone(), j).map_err(value_err)?,
        };
        Ok(System { inner: reduced.into() })
    }

    /// Split the branch selecting `coordinate` and insert a linear series
    /// inductor, returning the regularized system.
    fn insert_series_inductor(&self, coordinate: &str, henry: f64) -> PyResult<System> {
        if henry <= 0.0 {
            return Err(value_err("inductance must be positive"));
        }
        let j = self.coordinate(coordinate)?;
        let sys = insert_series_inductor(&self.inner, j, ConstitutiveModel::Linear(henry))
            .map_err(value_err)?;
        Ok(System { inner: sys.into() })
    }

    /// Integrate with fixed-step RK4; returns a dict of sample columns.
    #[pyo3(signature = (q0, qdot0, dt, steps, certify = false))]
    fn integrate<'py>(
        &self,
        py: Python<'py>,
        q0: Vec<f64>,
        qdot0: Vec<f64>,
        dt: f64,
        steps: usize,
        certify: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        self.check_dim(&q0)?;
        self.check_dim(&qdot0)?;
        let initial = SimState { t: 0.0, q: q0, qdot: qdot0 };
        let traj = integrate(&self.inner, &initial, dt, steps).map_err(runtime_err)?;
        let dict = trajectory_dict(py, &traj)?;
        if certify {
            let cert = dissipation_certificate(&self.inner, &traj);
            let entry = PyDict::new_bound(py);
            entry.set_item("passed", cert.passed)?;
            entry.set_item("conservative", cert.conservative)?;
            entry.set_item("max_identity_residual", cert.max_identity_residual)?;
            entry.set_item("min_p_diss", cert.min_p_diss)?;
            entry.set_item("max_energy_step_increase", cert.max_energy_step_increase)?;
            entry.set_item("max_energy_drift", cert.max_energy_drift)?;
            entry.set_item("violations", cert.violations.len())?;
            dict.set_item("certificate", entry)?;
        }
        Ok(dict)
    }

    fn __repr__(&self) -> String {
        format!(
            "System(b={}, dim={}, coordinates={:?})",
            self.inner.base().b(),
            self.inner.dim(),
            self.inner.coordinate_ids()
        )
    }
}

impl System {
    fn check_dim(&self, v: &[f64]) -> PyResult<()> {
        if v.len() != self.inner.dim() {
            return Err(value_err(format!(
                "expected {} coordinates, got {}",
                self.inner.dim(),
                v.len()
            )));
        }
        Ok(())
    }
}

fn trajectory_dict<'py>(py: Python<'py>, traj: &Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new_bound(py);
    dict.set_item("t", traj.times.clone())?;
    dict.set_item("q", traj.q.clone())?;
    dict.set_item("qdot", traj.qdot.clone())?;
    dict.set_item("energy", traj.energy.clone())?;
    dict.set_item("p_diss", traj.p_diss.clone())?;
    Ok(dict)
}

/// Compile netlist text into a Birkhoffian system.
#[pyfunction]
fn compile(text: &str) -> PyResult<System> {
    let sys = birknet::compile(text).map_err(|e| match e {
        birknet::Error::Parse(diags) => {
            let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            value_err(lines.join("\n"))
        }
        other => value_err(other),
    })?;
    Ok(System { inner: sys.into() })
}

#[pymodule]
fn birknet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    Ok(())
}
