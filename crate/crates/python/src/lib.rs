//! Python bindings: `import stagecause`.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use stagecause::convert::{binary_vars, consensus_pdag, dag_to_staged_tree, staged_tree_to_minimal_dag};
use stagecause::io::{tree_from_json_str, tree_to_json_string};
use stagecause::metrics;
use stagecause::order::OrderSearch;
use stagecause::probability::{self, Intervention};
use stagecause::randgen::{self, GenConfig};
use stagecause::{Method, SearchOptions, VariableMeta};

fn err(e: stagecause::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "StagedTree", module = "stagecause", frozen)]
struct PyStagedTree {
    inner: stagecause::StagedTree,
}

#[pymethods]
impl PyStagedTree {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyStagedTree {
            inner: tree_from_json_str(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        tree_to_json_string(&self.inner).map_err(err)
    }

    #[getter]
    fn order(&self) -> Vec<String> {
        self.inner.vars().iter().map(|v| v.name.clone()).collect()
    }

    #[getter]
    fn levels(&self) -> Vec<Vec<String>> {
        self.inner.vars().iter().map(|v| v.levels.clone()).collect()
    }

    #[getter]
    fn staging(&self) -> Vec<Vec<u32>> {
        self.inner.staging().strata().to_vec()
    }

    #[getter]
    fn params(&self) -> Option<Vec<Vec<Vec<f64>>>> {
        self.inner.params().cloned()
    }

    fn df(&self) -> usize {
        self.inner.df()
    }

    fn n_stages(&self, depth: usize) -> usize {
        self.inner.n_stages(depth)
    }

    fn stage_of(&self, context: Vec<usize>) -> PyResult<u32> {
        self.inner.stage_of(&context).map_err(err)
    }

    /// Problems found by validation, empty when the tree is valid.
    fn validate(&self) -> Vec<String> {
        stagecause::validate_tree(&self.inner)
            .violations
            .iter()
            .map(|v| v.to_string())
            .collect()
    }

    fn joint_prob(&self, x: Vec<usize>) -> PyResult<f64> {
        probability::joint_prob(&self.inner, &x).map_err(err)
    }

    fn conditional(&self, position: usize, context: Vec<usize>) -> PyResult<Vec<f64>> {
        Ok(probability::conditional(&self.inner, position, &context)
            .map_err(err)?
            .0)
    }

    /// `P(X_position | do(targets))`, with targets as `{position: level}`.
    fn interventional(&self, position: usize, targets: BTreeMap<usize, usize>) -> PyResult<Vec<f64>> {
        let mut iv = Intervention::new();
        for (pos, level) in targets {
            iv = iv.set(pos, level);
        }
        Ok(probability::interventional(&self.inner, position, &iv)
            .map_err(err)?
            .0)
    }

    fn sample(&self, n: usize, seed: u64) -> PyResult<PyDataset> {
        Ok(PyDataset {
            inner: probability::sample(&self.inner, n, seed).map_err(err)?,
        })
    }

    fn minimal_dag(&self) -> PyDag {
        PyDag {
            inner: staged_tree_to_minimal_dag(&self.inner),
        }
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "StagedTree(order={:?}, stages={:?})",
            self.order(),
            (0..self.inner.p()).map(|d| self.inner.n_stages(d)).collect::<Vec<_>>()
        )
    }
}

#[pyclass(name = "Dataset", module = "stagecause", frozen)]
struct PyDataset {
    inner: stagecause::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        Ok(PyDataset {
            inner: stagecause::Dataset::from_csv_path(path).map_err(err)?,
        })
    }

    /// Integer-coded rows; `levels[j]` is the number of levels of column `j`.
    #[staticmethod]
    fn from_rows(names: Vec<String>, levels: Vec<usize>, rows: Vec<Vec<usize>>) -> PyResult<Self> {
        if names.len() != levels.len() {
            return Err(PyValueError::new_err("names and levels differ in length"));
        }
        let vars = names
            .into_iter()
            .zip(levels)
            .map(|(n, l)| VariableMeta::with_levels(n, l))
            .collect::<stagecause::Result<Vec<_>>>()
            .map_err(err)?;
        Ok(PyDataset {
            inner: stagecause::Dataset::new(vars, &rows).map_err(err)?,
        })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv_path(path).map_err(err)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.vars().iter().map(|v| v.name.clone()).collect()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn rows(&self) -> Vec<Vec<u16>> {
        self.inner.rows().map(|r| r.to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }
}

#[pyclass(name = "Dag", module = "stagecause", frozen)]
struct PyDag {
    inner: stagecause::Dag,
}

#[pymethods]
impl PyDag {
    /// Graph over `names` with edges given as `(from, to)` name pairs.
    #[new]
    fn new(names: Vec<String>, edges: Vec<(String, String)>) -> PyResult<Self> {
        let find = |n: &str| {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| PyValueError::new_err(format!("unknown node `{n}`")))
        };
        let idx = edges
            .iter()
            .map(|(a, b)| Ok((find(a)?, find(b)?)))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyDag {
            inner: stagecause::Dag::with_names(names.clone(), idx).map_err(err)?,
        })
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<(String, String)> {
        let n = self.inner.names();
        self.inner
            .edges()
            .iter()
            .map(|&(a, b)| (n[a].clone(), n[b].clone()))
            .collect()
    }

    /// Staged tree of the binary DAG model in its smallest-first topological order.
    fn staged_tree(&self) -> PyResult<PyStagedTree> {
        let order = self.inner.topological_order().expect("acyclic");
        Ok(PyStagedTree {
            inner: dag_to_staged_tree(&self.inner, &order, &binary_vars(&self.inner)).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Dag(names={:?}, edges={:?})", self.names(), self.edges())
    }
}

fn options(method: &str, k: usize, restarts: usize, seed: u64, smoothing: f64) -> PyResult<SearchOptions> {
    let method = match method {
        "bhc" => Method::Bhc,
        "kmeans" => Method::Kmeans { k, restarts },
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    Ok(SearchOptions::new(method)
        .with_seed(seed)
        .with_smoothing(smoothing))
}

#[pyfunction]
#[pyo3(signature = (structure, data, smoothing = 0.0))]
fn fit_mle(structure: &PyStagedTree, data: &PyDataset, smoothing: f64) -> PyResult<PyStagedTree> {
    Ok(PyStagedTree {
        inner: probability::fit_mle(&structure.inner, &data.inner, smoothing).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (data, order, method = "bhc", k = 2, restarts = 10, seed = 0, smoothing = 0.0))]
fn fit_order(
    data: &PyDataset,
    order: Vec<String>,
    method: &str,
    k: usize,
    restarts: usize,
    seed: u64,
    smoothing: f64,
) -> PyResult<PyStagedTree> {
    let cols = order
        .iter()
        .map(|n| {
            data.inner
                .column_index(n)
                .ok_or_else(|| PyValueError::new_err(format!("no column `{n}`")))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let opts = options(method, k, restarts, seed, smoothing)?;
    Ok(PyStagedTree {
        inner: stagecause::fit_order(&data.inner, &cols, &opts).map_err(err)?,
    })
}

/// Best order and staging: `{"order", "score", "tree", "tied_orders"}`.
#[pyfunction]
#[pyo3(signature = (data, method = "bhc", mode = "dp", k = 2, restarts = 10, seed = 0, smoothing = 0.0))]
#[allow(clippy::too_many_arguments)]
fn discover<'py>(
    py: Python<'py>,
    data: &PyDataset,
    method: &str,
    mode: &str,
    k: usize,
    restarts: usize,
    seed: u64,
    smoothing: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let opts = options(method, k, restarts, seed, smoothing)?;
    let search = OrderSearch::new(&data.inner, opts);
    let result = match mode {
        "dp" => search.best_order_dp(),
        "exhaustive" => search.best_order_exhaustive(),
        other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    }
    .map_err(err)?;
    let names = |o: &[usize]| -> Vec<String> {
        o.iter().map(|&c| data.inner.vars()[c].name.clone()).collect()
    };
    let out = PyDict::new(py);
    out.set_item("order", names(&result.order))?;
    out.set_item("score", result.score)?;
    out.set_item(
        "tied_orders",
        result.tied_orders.iter().map(|o| names(o)).collect::<Vec<_>>(),
    )?;
    out.set_item("tree", PyStagedTree { inner: result.tree }.into_pyobject(py)?)?;
    Ok(out)
}

#[pyfunction]
fn bic(tree: &PyStagedTree, data: &PyDataset) -> PyResult<f64> {
    Ok(probability::bic(&tree.inner, &data.inner).map_err(err)?.bic)
}

#[pyfunction]
fn log_likelihood(tree: &PyStagedTree, data: &PyDataset) -> PyResult<f64> {
    Ok(probability::log_likelihood(&tree.inner, &data.inner)
        .map_err(err)?
        .total)
}

/// `{"total": float, "per_variable": [{"variable", "cid", "wrong", "i_set", "j_set"}]}`.
#[pyfunction]
fn cid<'py>(py: Python<'py>, reference: &PyStagedTree, estimate: &PyStagedTree) -> PyResult<Bound<'py, PyDict>> {
    let report = metrics::cid(&reference.inner, &estimate.inner).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("total", report.total)?;
    let per = PyList::empty(py);
    for v in &report.per_variable {
        let d = PyDict::new(py);
        d.set_item("variable", &v.variable)?;
        d.set_item("cid", v.cid)?;
        d.set_item(
            "wrong",
            v.wrong.iter().map(|c| c.0.clone()).collect::<Vec<_>>(),
        )?;
        d.set_item("i_set", v.i_set.clone())?;
        d.set_item("j_set", v.j_set.clone())?;
        per.append(d)?;
    }
    out.set_item("per_variable", per)?;
    Ok(out)
}

#[pyfunction]
fn sid(reference: &PyDag, estimate: &PyDag) -> PyResult<usize> {
    metrics::sid(&reference.inner, &estimate.inner).map_err(err)
}

#[pyfunction]
fn kendall(a: Vec<String>, b: Vec<String>) -> PyResult<usize> {
    metrics::kendall_distance(&a, &b).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (p, levels = 2, k = 2, seed = 0))]
fn random_staged_tree(p: usize, levels: usize, k: usize, seed: u64) -> PyResult<PyStagedTree> {
    let cfg = GenConfig::new(p, levels, k, seed).map_err(err)?;
    Ok(PyStagedTree {
        inner: randgen::random_staged_tree(&cfg).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (p, seed = 0))]
fn random_dag(p: usize, seed: u64) -> PyDag {
    PyDag {
        inner: randgen::random_dag_uniform(p, seed),
    }
}

/// `{"directed": [(a, b)], "undirected": [(a, b)]}` with node names.
#[pyfunction]
fn consensus<'py>(py: Python<'py>, dags: Vec<PyRef<'py, PyDag>>) -> PyResult<Bound<'py, PyDict>> {
    let graphs: Vec<stagecause::Dag> = dags.iter().map(|d| d.inner.clone()).collect();
    let pdag = consensus_pdag(&graphs).map_err(err)?;
    let n = pdag.names();
    let pairs = |set: &std::collections::BTreeSet<(usize, usize)>| -> Vec<(String, String)> {
        set.iter().map(|&(a, b)| (n[a].clone(), n[b].clone())).collect()
    };
    let out = PyDict::new(py);
    out.set_item("directed", pairs(pdag.directed()))?;
    out.set_item("undirected", pairs(pdag.undirected()))?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "stagecause")]
fn stagecause_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStagedTree>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyDag>()?;
    m.add_function(wrap_pyfunction!(fit_mle, m)?)?;
    m.add_function(wrap_pyfunction!(fit_order, m)?)?;
    m.add_function(wrap_pyfunction!(discover, m)?)?;
    m.add_function(wrap_pyfunction!(bic, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(cid, m)?)?;
    m.add_function(wrap_pyfunction!(sid, m)?)?;
    m.add_function(wrap_pyfunction!(kendall, m)?)?;
    m.add_function(wrap_pyfunction!(random_staged_tree, m)?)?;
    m.add_function(wrap_pyfunction!(random_dag, m)?)?;
    m.add_function(wrap_pyfunction!(consensus, m)?)?;
    Ok(())
}
