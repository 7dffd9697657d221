//! Python module `tljtower`. Graphs are given either as a builtin name
//! (`"A3"`, `"E6"`, ...) or as graph JSON text; reports come back as dicts.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use tljtower::embed::{embed_module, verify_planar_map};
use tljtower::graph::{builtin, load_graph, WeightedBipartiteGraph};
use tljtower::projcat::{linking_sweep, simple_objects, verify_module_action, verify_pivotal};
use tljtower::report::Report;
use tljtower::tljdiag;
use tljtower::tower::{self, MarkovTower};
use tljtower::verify::{verify_elementary_properties_seeded, verify_markov_axioms};

fn err(e: tljtower::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Builtin name, path to a JSON file, or JSON text.
pub fn parse_graph(spec: &str) -> tljtower::error::Result<WeightedBipartiteGraph> {
    let s = spec.trim();
    if s.starts_with('{') {
        load_graph(s.as_bytes())
    } else if Path::new(s).is_file() {
        let bytes = std::fs::read(s).map_err(|e| tljtower::error::Error::Invalid(format!("{s}: {e}")))?;
        load_graph(&bytes)
    } else {
        builtin(s)
    }
}

fn to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn report_to_py<'py>(py: Python<'py>, r: &Report) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(r).map_err(|e| PyValueError::new_err(e.to_string()))?)
}

/// A Markov tower built from a pointed bipartite graph.
#[pyclass(module = "tljtower")]
pub struct Tower {
    graph: WeightedBipartiteGraph,
    inner: MarkovTower,
}

#[pymethods]
impl Tower {
    #[new]
    #[pyo3(signature = (graph, depth=None))]
    fn new(graph: &str, depth: Option<usize>) -> PyResult<Self> {
        let g = parse_graph(graph).map_err(err)?;
        let depth = depth.unwrap_or(2 * g.diameter() + 2);
        let inner = tower::build_tower(&g, depth).map_err(err)?;
        Ok(Tower { graph: g, inner })
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn modulus(&self) -> f64 {
        self.inner.modulus()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.summary_json())
    }

    fn bratteli_dot(&self) -> String {
        self.inner.bratteli_dot()
    }

    /// Markov axioms and elementary properties.
    #[pyo3(signature = (tolerance=1e-9, seed=0))]
    fn verify<'py>(&self, py: Python<'py>, tolerance: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let mut r = verify_markov_axioms(&self.inner, tolerance);
        r.extend(verify_elementary_properties_seeded(&self.inner, tolerance, seed));
        report_to_py(py, &r.with_seed(seed))
    }

    /// Labels, quantum dimensions and edges of the principal graph.
    fn principal_graph<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let pg = tower::principal_graph(&self.inner).map_err(err)?;
        let g = &pg.graph;
        let dims: serde_json::Map<String, serde_json::Value> =
            g.labels().iter().zip(g.dims()).map(|(l, d)| (l.clone(), serde_json::json!(d))).collect();
        let v = serde_json::json!({
            "labels": g.labels(),
            "dim": dims,
            "certified": pg.certified,
            "isomorphic_to_input": g.is_isomorphic(&self.graph, 1e-9),
        });
        to_py(py, &v)
    }

    /// Linking map, module action, pivotal trace and simple objects.
    #[pyo3(signature = (samples=3, seed=0, max_param=2))]
    fn projcat<'py>(&self, py: Python<'py>, samples: usize, seed: u64, max_param: usize) -> PyResult<Bound<'py, PyAny>> {
        let t = &self.inner;
        let mut r = linking_sweep(t, max_param, t.depth(), samples, seed, 1e-8).map_err(err)?;
        let small = t.depth().min(8);
        r.extend(verify_module_action(t, 2.min(small / 3), samples, seed, 1e-8).map_err(err)?);
        r.extend(verify_pivotal(t, 3.min(small.saturating_sub(4)), 2, samples, seed, 1e-9).map_err(err)?);
        r.extend(simple_objects(t, 1e-9).map_err(err)?.1);
        report_to_py(py, &r.with_seed(seed))
    }

    fn __repr__(&self) -> String {
        format!("Tower(dims={:?}, modulus={:.6})", self.inner.dims(), self.inner.modulus())
    }
}

/// `(modulus, {label: dim})` for a graph.
#[pyfunction]
fn frobenius_perron(graph: &str) -> PyResult<(f64, Vec<(String, f64)>)> {
    let g = parse_graph(graph).map_err(err)?;
    Ok((g.modulus(), g.labels().iter().cloned().zip(g.dims().iter().copied()).collect()))
}

/// Number of TL_n diagrams (n ≤ 8).
#[pyfunction]
fn generic_dimension(n: usize) -> PyResult<usize> {
    tljdiag::generic_dimension(n).map_err(err)
}

/// Verification report for the embedding of TLJ at the graph's modulus into
/// the graph planar algebra, on box spaces up to `n`.
#[pyfunction]
#[pyo3(signature = (graph, n=3, samples=3, seed=0, tolerance=1e-9))]
fn embed<'py>(py: Python<'py>, graph: &str, n: usize, samples: usize, seed: u64, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
    let g = parse_graph(graph).map_err(err)?;
    let emb = embed_module(g.modulus(), &g, n).map_err(err)?;
    let r = verify_planar_map(&emb, n, samples, seed, tolerance).map_err(err)?;
    report_to_py(py, &r)
}

#[pymodule]
#[pyo3(name = "tljtower")]
fn tljtower_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tower>()?;
    m.add_function(wrap_pyfunction!(frobenius_perron, m)?)?;
    m.add_function(wrap_pyfunction!(generic_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    Ok(())
}
