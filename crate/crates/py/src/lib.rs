//! Python bindings: the network + dispatch solver, the convex surrogate, and
//! the batch workflows, exposed with plain lists/dicts so the module has no
//! array-library dependency.

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gridprice_core::activeset;
use gridprice_core::dataset;
use gridprice_core::fixtures;
use gridprice_core::grid::{build_flow_basis, FlowBasis, GridCase};
use gridprice_core::icnn::{self, IcnnModel, MlpModel, TrainConfig};
use gridprice_core::lp::{self, DcopfStatus, SolverConfig};
use gridprice_core::pipeline;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn vec_to_dvector(v: Vec<f64>) -> DVector<f64> {
    DVector::from_column_slice(&v)
}

fn dvector_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

/// A case plus its fundamental-flow basis.
#[pyclass]
struct Grid {
    case: GridCase,
    basis: FlowBasis,
    solver: SolverConfig,
}

#[pymethods]
impl Grid {
    /// Load a case from a JSON file.
    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        let case = GridCase::load(path).map_err(err)?;
        let basis = build_flow_basis(&case).map_err(err)?;
        Ok(Self { case, basis, solver: SolverConfig::default() })
    }

    /// One of the bundled synthetic systems.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        let case = fixtures::by_name(name)
            .ok_or_else(|| PyValueError::new_err(format!("unknown fixture '{name}'")))?;
        let basis = build_flow_basis(&case).map_err(err)?;
        Ok(Self { case, basis, solver: SolverConfig::default() })
    }

    #[getter]
    fn n(&self) -> usize {
        self.case.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.case.m()
    }

    #[getter]
    fn cost(&self) -> Vec<f64> {
        self.case.c.clone()
    }

    #[getter]
    fn nominal_load(&self) -> Vec<f64> {
        self.case.load_nominal.clone()
    }

    fn k_matrix(&self) -> Vec<Vec<f64>> {
        (0..self.case.m())
            .map(|e| (0..self.basis.dim()).map(|j| self.basis.k[(e, j)]).collect())
            .collect()
    }

    fn a_tilde(&self) -> Vec<Vec<f64>> {
        (0..self.case.n)
            .map(|i| (0..self.basis.dim()).map(|j| self.basis.a_tilde[(i, j)]).collect())
            .collect()
    }

    /// Exact solve; returns a dict with x, f, flows, J, mu, the bound duals
    /// and the status string.
    fn solve<'py>(&self, py: Python<'py>, load: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let sol = lp::solve_dcopf(&self.case, &self.basis, &vec_to_dvector(load), &self.solver)
            .map_err(err)?;
        let out = PyDict::new_bound(py);
        out.set_item("x", dvector_to_vec(&sol.x))?;
        out.set_item("f", dvector_to_vec(&sol.f))?;
        out.set_item("flows", dvector_to_vec(&sol.flows))?;
        out.set_item("J", sol.j)?;
        out.set_item("mu", dvector_to_vec(&sol.mu))?;
        out.set_item("tau_lo", dvector_to_vec(&sol.tau_lo))?;
        out.set_item("tau_hi", dvector_to_vec(&sol.tau_hi))?;
        out.set_item("lam_lo", dvector_to_vec(&sol.lam_lo))?;
        out.set_item("lam_hi", dvector_to_vec(&sol.lam_hi))?;
        out.set_item(
            "status",
            match sol.status {
                DcopfStatus::Optimal => "optimal",
                DcopfStatus::Degenerate => "degenerate",
                DcopfStatus::Infeasible => "infeasible",
            },
        )?;
        Ok(out)
    }

    /// Flow-dual recovery from prices (the l1 program).
    fn recover_flow_duals(&self, mu: Vec<f64>) -> PyResult<Vec<f64>> {
        let nu = lp::recover_flow_duals(
            &vec_to_dvector(mu),
            &self.basis,
            &self.case.fmax_vector(),
            &self.solver,
        )
        .map_err(err)?;
        Ok(dvector_to_vec(&nu))
    }

    /// Price-driven dispatch reconstruction; returns x, f, flows and the
    /// reconstruction diagnostics.
    #[pyo3(signature = (load, mu, eps_act = 1e-6))]
    fn solve_from_prices<'py>(
        &self,
        py: Python<'py>,
        load: Vec<f64>,
        mu: Vec<f64>,
        eps_act: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (rec, _) = activeset::solve_from_prices_lenient(
            &self.case,
            &self.basis,
            &vec_to_dvector(load),
            &vec_to_dvector(mu),
            eps_act,
            &self.solver,
        );
        let out = PyDict::new_bound(py);
        out.set_item("x", dvector_to_vec(&rec.x))?;
        out.set_item("f", dvector_to_vec(&rec.f))?;
        out.set_item("flows", dvector_to_vec(&rec.flows))?;
        out.set_item("feasible", rec.diagnostics.feasible)?;
        out.set_item("rank_deficient", rec.diagnostics.rank_deficient)?;
        out.set_item("residual", rec.diagnostics.residual)?;
        Ok(out)
    }

    /// Draw loads, solve them and write the labeled JSONL dataset.
    /// Returns (feasible, infeasible) counts.
    fn generate_dataset(
        &self,
        variation: f64,
        count: usize,
        seed: u64,
        path: &str,
    ) -> PyResult<(usize, usize)> {
        let (samples, summary) = pipeline::generate_dataset(
            &self.case, &self.basis, variation, count, seed, &self.solver,
        )
        .map_err(err)?;
        dataset::write_jsonl(path, &samples).map_err(err)?;
        Ok((summary.feasible, summary.infeasible))
    }

    /// Optimal cost along a load ray at one bus; `None` marks infeasible
    /// sample points.
    fn cost_curve(&self, bus: usize, t_max: f64, steps: usize) -> PyResult<Vec<(f64, Option<f64>)>> {
        if bus >= self.case.n {
            return Err(PyValueError::new_err("bus out of range"));
        }
        let mut d = DVector::zeros(self.case.n);
        d[bus] = 1.0;
        let points = lp::cost_curve(
            &self.case,
            &self.basis,
            &DVector::zeros(self.case.n),
            &d,
            t_max,
            steps,
            &self.solver,
        )
        .map_err(err)?;
        Ok(points.into_iter().map(|p| (p.t, p.j)).collect())
    }
}

/// The input-convex surrogate.
#[pyclass]
struct Icnn {
    model: IcnnModel,
}

#[pymethods]
impl Icnn {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { model: IcnnModel::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.model.save(path).map_err(err)
    }

    /// Train a fresh model on a JSONL dataset. `config_json` holds a
    /// training-config object (same schema as the CLI); the last hidden
    /// width is forced to the bus count. Returns the loss history.
    #[staticmethod]
    #[pyo3(signature = (grid, data_path, config_json = None, helper_loads = None))]
    fn train(
        grid: &Grid,
        data_path: &str,
        config_json: Option<&str>,
        helper_loads: Option<Vec<Vec<f64>>>,
    ) -> PyResult<(Self, Vec<f64>)> {
        let samples = dataset::read_jsonl(data_path).map_err(err)?;
        let mut cfg: TrainConfig = match config_json {
            Some(text) => serde_json::from_str(text).map_err(err)?,
            None => TrainConfig::default(),
        };
        let mut widths = cfg.hidden_widths.clone();
        if widths.is_empty() {
            return Err(PyValueError::new_err("hidden_widths must not be empty"));
        }
        *widths.last_mut().unwrap() = grid.case.n;
        cfg.hidden_widths = widths.clone();
        let helper: Vec<DVector<f64>> = helper_loads
            .unwrap_or_default()
            .into_iter()
            .map(vec_to_dvector)
            .collect();
        let mut model = IcnnModel::new(
            grid.case.n,
            &widths,
            grid.case.cost_vector(),
            &mut ChaCha8Rng::seed_from_u64(cfg.seed),
        );
        let report = icnn::train_icnn(
            &mut model,
            &grid.case,
            &grid.basis,
            &samples,
            &helper,
            &cfg,
            &grid.solver,
        )
        .map_err(err)?;
        Ok((Self { model }, report.loss_history))
    }

    fn forward(&self, load: Vec<f64>) -> PyResult<f64> {
        self.model.forward(&vec_to_dvector(load)).map_err(err)
    }

    /// Price estimate: gradient of the predicted cost w.r.t. the load.
    fn input_gradient(&self, load: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(dvector_to_vec(
            &self.model.input_gradient(&vec_to_dvector(load)).map_err(err)?,
        ))
    }

    #[getter]
    fn widths(&self) -> Vec<usize> {
        self.model.widths.clone()
    }

    fn is_convex_parameterization(&self) -> bool {
        self.model.is_convex_parameterization()
    }
}

/// Classify a model's predictions over a JSONL dataset; returns the eval
/// report as a JSON string (same schema as the CLI report).
#[pyfunction]
#[pyo3(signature = (grid, model_path, data_path, mode = "icnn", mismatch_tol = 0.003, eps_act = 0.05))]
fn evaluate(
    grid: &Grid,
    model_path: &str,
    data_path: &str,
    mode: &str,
    mismatch_tol: f64,
    eps_act: f64,
) -> PyResult<String> {
    let samples = dataset::read_jsonl(data_path).map_err(err)?;
    let report = match mode {
        "icnn" => {
            let model = IcnnModel::load(model_path).map_err(err)?;
            pipeline::evaluate(
                &grid.case,
                &grid.basis,
                &pipeline::Predictor::Icnn(&model),
                &samples,
                mismatch_tol,
                eps_act,
                &grid.solver,
            )
            .map_err(err)?
        }
        "end-to-end" => {
            let model = MlpModel::load(model_path).map_err(err)?;
            pipeline::evaluate(
                &grid.case,
                &grid.basis,
                &pipeline::Predictor::EndToEnd(&model),
                &samples,
                mismatch_tol,
                eps_act,
                &grid.solver,
            )
            .map_err(err)?
        }
        other => return Err(PyValueError::new_err(format!("unknown mode '{other}'"))),
    };
    serde_json::to_string(&report).map_err(err)
}

#[pymodule]
fn gridprice_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid>()?;
    m.add_class::<Icnn>()?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
