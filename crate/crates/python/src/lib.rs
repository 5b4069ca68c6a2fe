//! Python bindings: build a medium, solve its cell problems, read the
//! effective tensors and compare against Bloch bands and the exterior DtN table.

use cellhom::bloch::{bloch_bands, BlochConfig, BlochSolver};
use cellhom::correctors::CorrectorSet;
use cellhom::dtn::dtn_table as core_dtn_table;
use cellhom::effective::{dispersion_relation, EffectiveModel};
use cellhom::verify::{verify, VerifyOptions};
use cellhom::{build_medium, CellGrid, HomogError, LamePair, MediumSpec, SolverConfig};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: HomogError) -> PyErr {
    match e {
        HomogError::NonConvergence { .. } | HomogError::EigenNonConvergence { .. } | HomogError::Io(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A medium sampled on a `n^dim` cell grid.
///
/// `spec` is the body of a `[medium]` table in TOML, for example
/// `kind = "constant"\nmaterial = { lame = { lambda = 1.0, mu = 1.0 }, density = 1.0 }`.
#[pyclass(name = "Medium", module = "cellhom")]
pub struct PyMedium {
    spec: MediumSpec,
    inner: cellhom::Medium,
}

#[pymethods]
impl PyMedium {
    #[new]
    fn new(spec: &str, dim: usize, n: usize) -> PyResult<Self> {
        let spec: MediumSpec = toml::from_str(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let grid = CellGrid::new(dim, n).map_err(py_err)?;
        let inner = build_medium(&spec, grid).map_err(py_err)?;
        Ok(Self { spec, inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.grid.n
    }

    fn mean_density(&self) -> f64 {
        self.inner.mean_density()
    }

    /// Cell average of the stiffness, flattened row-major over `(i, j, k, l)`.
    fn mean_tensor(&self) -> Vec<f64> {
        self.inner.mean_tensor().entries().to_vec()
    }

    /// Lowest `count` values of `w^2` at wave vector `k`.
    #[pyo3(signature = (k, count = 4))]
    fn bloch_bands(&self, py: Python<'_>, k: Vec<f64>, count: usize) -> PyResult<Vec<f64>> {
        py.detach(|| bloch_bands(&self.inner, &k, count))
            .map(|b| b.omega2)
            .map_err(py_err)
    }

    /// Largest Hermiticity defect of the Bloch operator at `k` over random fields.
    #[pyo3(signature = (k, seed = 3))]
    fn hermiticity_defect(&self, k: Vec<f64>, seed: u64) -> PyResult<f64> {
        let s = BlochSolver::new(&self.inner, BlochConfig::default()).map_err(py_err)?;
        s.hermiticity_defect(&k, seed).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Medium(dim={}, n={})", self.inner.dim(), self.inner.grid.n)
    }
}

/// Effective coefficients of the long-wave model with the invariant checks
/// recorded when it was computed.
#[pyclass(name = "EffectiveModel", module = "cellhom")]
pub struct PyModel {
    inner: EffectiveModel,
    residuals: Vec<(String, f64)>,
    checks: Vec<(String, f64, f64, bool)>,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Effective stiffness, flattened row-major over `(i, j, k, l)`.
    #[getter]
    fn cbar(&self) -> Vec<f64> {
        self.inner.cbar.entries().to_vec()
    }

    #[getter]
    fn rhobar(&self) -> f64 {
        self.inner.rhobar
    }

    /// Entry of the effective stiffness.
    fn c(&self, i: usize, j: usize, k: usize, l: usize) -> PyResult<f64> {
        let d = self.inner.dim();
        if [i, j, k, l].iter().any(|&x| x >= d) {
            return Err(PyValueError::new_err(format!("indices must be below {d}")));
        }
        Ok(self.inner.cbar.get(i, j, k, l))
    }

    /// Flat entries of the named tensor: one of `d`, `e`, `f`, `g`,
    /// `src_u1_3rd`, `src_u1_1st`.
    fn tensor(&self, name: &str) -> PyResult<Vec<f64>> {
        let t = match name {
            "d" => &self.inner.d6,
            "e" => &self.inner.e4,
            "f" => &self.inner.f5,
            "g" => &self.inner.g3,
            "src_u1_3rd" => &self.inner.src_u1_3rd,
            "src_u1_1st" => &self.inner.src_u1_1st,
            _ => return Err(PyValueError::new_err(format!("unknown tensor {name:?}"))),
        };
        Ok(t.entries().to_vec())
    }

    /// `w^2` of the long-wave model at wave vector `k`; `eps = 0` gives the
    /// quasi-static model, `eps = 1` the dispersive one at physical scale.
    #[pyo3(signature = (k, eps = 1.0))]
    fn dispersion(&self, k: Vec<f64>, eps: f64) -> PyResult<Vec<Complex64>> {
        dispersion_relation(&self.inner, &k, eps)
            .map(|s| s.omega2)
            .map_err(py_err)
    }

    /// Largest solver residual per corrector family.
    fn residuals(&self) -> Vec<(String, f64)> {
        self.residuals.clone()
    }

    /// `(name, value, threshold, passed)` for every invariant check.
    fn checks(&self) -> Vec<(String, f64, f64, bool)> {
        self.checks.clone()
    }

    fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.3)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_json()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }
}

/// Solve every cell problem for `medium` and assemble the effective model.
#[pyfunction]
#[pyo3(signature = (medium, rel_tol = 1e-10, max_iter = 2000))]
fn homogenize(py: Python<'_>, medium: &PyMedium, rel_tol: f64, max_iter: usize) -> PyResult<PyModel> {
    let cfg = SolverConfig {
        rel_tol,
        max_iter,
        ..SolverConfig::default()
    };
    cfg.validate().map_err(py_err)?;
    py.detach(|| {
        let set = CorrectorSet::compute(&medium.inner, &cfg)?;
        let model = EffectiveModel::assemble(&medium.inner, &set)?;
        let report = verify(&medium.spec, &medium.inner, &set, &model, &cfg, &VerifyOptions::default())?;
        Ok(PyModel {
            residuals: set.reports.iter().map(|(k, r)| (k.clone(), r.max_residual)).collect(),
            checks: report
                .checks
                .into_iter()
                .map(|c| (c.name, c.value, c.threshold, c.passed))
                .collect(),
            inner: model,
        })
    })
    .map_err(py_err)
}

/// DtN coefficients `(n, a, b, c, d)` for orders `0..=max_order`.
#[pyfunction]
fn dtn_table(
    max_order: usize,
    radius: f64,
    omega: f64,
    lam: f64,
    mu: f64,
) -> PyResult<Vec<(usize, Complex64, Complex64, Complex64, Complex64)>> {
    core_dtn_table(max_order, radius, omega, LamePair::new(lam, mu))
        .map(|rows| rows.iter().map(|r| (r.n, r.a, r.b, r.c, r.d)).collect())
        .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "cellhom")]
fn cellhom_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMedium>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(homogenize, m)?)?;
    m.add_function(wrap_pyfunction!(dtn_table, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
