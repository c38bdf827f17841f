//! Python bindings. Results with structure come back as plain dicts and
//! lists (serialized through `json`), models and datasets as classes.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use xattr::counterfactual::{generate_cfs, CfQuery};
use xattr::fuzzy::{eval_formula, parse_formula, Aggregation, Grounding};
use xattr::lrp::{lrp_propagate, LrpConfig, Rule};
use xattr::nle::{
    compose_explanation, graph_from_attribution, Intention, KnowledgeTable, MessageHistory, Period, TemplateSet, UserModel,
    Violation, EXAMPLE_KNOWLEDGE, EXAMPLE_TEMPLATES,
};
use xattr::shapley::{exact_shapley, sampled_shapley, Attribution, BackgroundSet};
use xattr::{Error, Tensor};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Diverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A feed-forward network in the text model format.
#[pyclass(module = "xattr_py")]
struct Network {
    inner: xattr::Network,
}

#[pymethods]
impl Network {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: xattr::models::io::load_model(path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: xattr::models::io::parse_model(text).map_err(err)?,
        })
    }

    fn to_text(&self) -> PyResult<String> {
        xattr::models::io::model_to_string(&self.inner).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        std::fs::write(path, self.to_text()?).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict(&x).map_err(err)
    }

    #[getter]
    fn input_len(&self) -> Option<usize> {
        self.inner.input_len()
    }

    #[getter]
    fn output_len(&self) -> Option<usize> {
        self.inner.output_len()
    }

    fn __repr__(&self) -> String {
        format!("Network({} layers)", self.inner.layers().len())
    }
}

/// Tabular rows with feature names and binary labels.
#[pyclass(module = "xattr_py")]
struct Dataset {
    inner: xattr::models::TabularDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn read_csv(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: xattr::models::TabularDataset::read_csv(path).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, seed=0))]
    fn synth_credit(n: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: xattr::models::synth_credit(n, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, bias=1.0, seed=0))]
    fn synth_recidivism(n: usize, bias: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: xattr::models::synth_recidivism(n, bias, seed).map_err(err)?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path).map_err(err)
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!("Dataset({} rows, {} features)", self.inner.n_rows(), self.inner.n_features())
    }
}

/// Default tabular MLP fitted on `data`.
#[pyfunction]
#[pyo3(signature = (data, seed=0))]
fn train_tabular(data: &Dataset, seed: u64) -> PyResult<Network> {
    let cfg = xattr::models::zoo::TabularTraining {
        seed,
        ..Default::default()
    };
    Ok(Network {
        inner: xattr::models::zoo::train_tabular(&data.inner, &cfg).map_err(err)?,
    })
}

fn named(mut a: Attribution, names: Option<Vec<String>>) -> Attribution {
    if let Some(n) = names {
        a.feature_names = n;
    }
    a
}

/// Shapley values by enumerating all coalitions (at most 20 features).
#[pyfunction]
#[pyo3(signature = (net, x, background, output=0, feature_names=None))]
fn shapley_exact(
    py: Python<'_>,
    net: &Network,
    x: Vec<f64>,
    background: Vec<Vec<f64>>,
    output: usize,
    feature_names: Option<Vec<String>>,
) -> PyResult<Py<PyAny>> {
    let bg = BackgroundSet::new(background).map_err(err)?;
    let a = exact_shapley(&net.inner, &x, &bg, output).map_err(err)?;
    to_py(py, &named(a, feature_names))
}

/// Permutation-sampled Shapley values with standard errors.
#[pyfunction]
#[pyo3(signature = (net, x, background, output=0, permutations=200, seed=0, feature_names=None))]
#[allow(clippy::too_many_arguments)]
fn shapley_sampled(
    py: Python<'_>,
    net: &Network,
    x: Vec<f64>,
    background: Vec<Vec<f64>>,
    output: usize,
    permutations: usize,
    seed: u64,
    feature_names: Option<Vec<String>>,
) -> PyResult<Py<PyAny>> {
    let bg = BackgroundSet::new(background).map_err(err)?;
    let a = sampled_shapley(&net.inner, &x, &bg, output, permutations, seed).map_err(err)?;
    to_py(py, &named(a, feature_names))
}

#[pyfunction]
#[pyo3(signature = (net, x, baseline=None, output=0, steps=64))]
fn integrated_gradients(
    py: Python<'_>,
    net: &Network,
    x: Vec<f64>,
    baseline: Option<Vec<f64>>,
    output: usize,
    steps: usize,
) -> PyResult<Py<PyAny>> {
    let base = baseline.unwrap_or_else(|| vec![0.0; x.len()]);
    let r = xattr::integrated_gradients::integrated_gradients(&net.inner, &Tensor::vector(x), &Tensor::vector(base), output, steps)
        .map_err(err)?;
    to_py(py, &r)
}

/// Input relevance under one LRP rule: "epsilon", "gamma" or "wsquare".
#[pyfunction]
#[pyo3(signature = (net, x, output=0, rule="epsilon", eps=1e-6, gamma=0.25))]
fn lrp(net: &Network, x: Vec<f64>, output: usize, rule: &str, eps: f64, gamma: f64) -> PyResult<Vec<f64>> {
    let rule = match rule {
        "epsilon" => Rule::Epsilon { eps },
        "gamma" => Rule::Gamma { gamma },
        "wsquare" => Rule::WSquare,
        other => return Err(PyValueError::new_err(format!("unknown rule {other:?}"))),
    };
    let map = lrp_propagate(&net.inner, &Tensor::vector(x), output, &LrpConfig::uniform(rule)).map_err(err)?;
    Ok(map.input().data().to_vec())
}

/// Diverse counterfactuals for one dataset row.
#[pyfunction]
#[pyo3(signature = (net, data, row, desired, k=3, immutable=Vec::new(), seed=0))]
#[allow(clippy::too_many_arguments)]
fn counterfactuals(
    py: Python<'_>,
    net: &Network,
    data: &Dataset,
    row: usize,
    desired: usize,
    k: usize,
    immutable: Vec<String>,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let d = &data.inner;
    let x = d
        .rows
        .get(row)
        .cloned()
        .ok_or_else(|| PyValueError::new_err(format!("row {row} out of range ({} rows)", d.n_rows())))?;
    let mut q = CfQuery::new(x, desired, d.ranges());
    q.k = k;
    q.seed = seed;
    q.immutable = immutable.iter().map(|n| d.feature_index(n)).collect::<Result<_, _>>().map_err(err)?;
    q.discrete = (0..d.n_features()).filter(|&f| d.kinds[f].is_discrete()).collect();
    to_py(py, &generate_cfs(&net.inner, &q).map_err(err)?)
}

/// Degree of truth of a first-order formula over the dataset.
#[pyfunction]
#[pyo3(signature = (net, data, formula, p=2.0, p_exists=6.0))]
fn formula_degree(net: &Network, data: &Dataset, formula: &str, p: f64, p_exists: f64) -> PyResult<f64> {
    let f = parse_formula(formula).map_err(err)?;
    let g = Grounding::standard(&data.inner);
    eval_formula(&net.inner, &g, &data.inner, &f, &Aggregation { p, p_exists }).map_err(err)
}

/// Feedback message for a dietary violation from the bundled knowledge
/// table and templates.
#[pyfunction]
#[pyo3(signature = (phi, entity, observed, allowed, age=40, vegetarian=false, encourage=false))]
fn explain_violation(
    phi: Vec<(String, f64)>,
    entity: &str,
    observed: f64,
    allowed: f64,
    age: u32,
    vegetarian: bool,
    encourage: bool,
) -> PyResult<String> {
    let table = KnowledgeTable::parse(EXAMPLE_KNOWLEDGE).map_err(err)?;
    let templates = TemplateSet::parse(EXAMPLE_TEMPLATES).map_err(err)?;
    let (names, values): (Vec<String>, Vec<f64>) = phi.into_iter().unzip();
    let attr = Attribution {
        phi0: 0.0,
        phi: values,
        stderr: None,
        feature_names: names,
        output: 0,
    };
    let user = UserModel {
        age,
        vegetarian,
        ..Default::default()
    };
    let intention = if encourage { Intention::Encourage } else { Intention::Discourage };
    let v = Violation::new(entity, observed, allowed, intention, Period::Ongoing).map_err(err)?;
    let g = graph_from_attribution(&attr, &table, &user, xattr::nle::DEFAULT_TOP_K);
    let m = compose_explanation(&g, &v, &user, &MessageHistory::default(), &table, &templates).map_err(err)?;
    Ok(m.text())
}

#[pymodule]
fn xattr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(train_tabular, m)?)?;
    m.add_function(wrap_pyfunction!(shapley_exact, m)?)?;
    m.add_function(wrap_pyfunction!(shapley_sampled, m)?)?;
    m.add_function(wrap_pyfunction!(integrated_gradients, m)?)?;
    m.add_function(wrap_pyfunction!(lrp, m)?)?;
    m.add_function(wrap_pyfunction!(counterfactuals, m)?)?;
    m.add_function(wrap_pyfunction!(formula_degree, m)?)?;
    m.add_function(wrap_pyfunction!(explain_violation, m)?)?;
    Ok(())
}
