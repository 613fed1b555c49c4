//! Python bindings for `prunelab`.
//!
//! Networks, masks and datasets are opaque handles; weights, scores and
//! report rows come back as plain lists and dicts.

use std::fmt::Display;
use std::str::FromStr;

use prunelab::analysis::{self, MeanKind, ReportOptions, SampleMode};
use prunelab::data::{DataPaths, Dataset as CoreDataset};
use prunelab::experiment::{self, ExperimentConfig, SnapshotMeta};
use prunelab::nn::{ArchitectureName, InitScheme, Network as CoreNetwork};
use prunelab::pruning::{self, Mask as CoreMask, Method, PruneConfig};
use prunelab::train::{self, TrainConfig};
use prunelab::treatments::{self, Treatment, TreatmentConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(prunelab_py, PrunelabError, PyException);

fn err(e: prunelab::Error) -> PyErr {
    PrunelabError::new_err(e.to_string())
}

fn parse<T>(s: &str) -> PyResult<T>
where
    T: FromStr,
    T::Err: Display,
{
    s.parse().map_err(|e: T::Err| PrunelabError::new_err(e.to_string()))
}

#[pyclass(module = "prunelab_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Network {
    pub inner: CoreNetwork,
}

#[pymethods]
impl Network {
    #[new]
    #[pyo3(signature = (architecture = "lenet_300_100", seed = 0, init = "kaiming_normal"))]
    fn new(architecture: &str, seed: u64, init: &str) -> PyResult<Self> {
        let arch = parse::<ArchitectureName>(architecture)?.build().map_err(err)?;
        let scheme: InitScheme = parse(init)?;
        Ok(Self { inner: CoreNetwork::initialize(&arch, scheme, seed).map_err(err)? })
    }

    #[getter]
    fn architecture(&self) -> String {
        self.inner.arch.name.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.init.seed
    }

    /// Number of prunable weights.
    fn prunable_count(&self) -> usize {
        self.inner.prunable_weights().iter().map(|w| w.len()).sum()
    }

    fn layer_shapes(&self) -> Vec<Vec<usize>> {
        self.inner.params.iter().map(|p| p.weight.shape().to_vec()).collect()
    }

    /// Flattened weights of one layer.
    fn weights(&self, layer: usize) -> PyResult<Vec<f32>> {
        self.inner
            .params
            .get(layer)
            .map(|p| p.weight.data().to_vec())
            .ok_or_else(|| PrunelabError::new_err(format!("no layer {layer}")))
    }

    fn __repr__(&self) -> String {
        format!("Network({}, seed={})", self.inner.arch.name, self.inner.init.seed)
    }
}

#[pyclass(module = "prunelab_py", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct Mask {
    pub inner: CoreMask,
}

#[pymethods]
impl Mask {
    #[staticmethod]
    fn ones(net: &Network) -> Self {
        Self { inner: CoreMask::ones(&net.inner) }
    }

    #[getter]
    fn density(&self) -> f64 {
        self.inner.density()
    }

    #[getter]
    fn kept(&self) -> usize {
        self.inner.kept()
    }

    #[getter]
    fn total(&self) -> usize {
        self.inner.total()
    }

    fn kept_per_layer(&self) -> Vec<usize> {
        self.inner.kept_per_layer()
    }

    /// 0/1 entries of one layer in weight order.
    fn bits(&self, layer: usize) -> PyResult<Vec<u8>> {
        self.inner
            .layers
            .iter()
            .find(|l| l.layer == layer)
            .map(|l| l.bits.clone())
            .ok_or_else(|| PrunelabError::new_err(format!("no masked layer {layer}")))
    }

    fn __repr__(&self) -> String {
        format!("Mask(kept={}, total={})", self.inner.kept(), self.inner.total())
    }
}

#[pyclass(module = "prunelab_py", frozen)]
pub struct Dataset {
    pub inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    /// Loads `mnist` or `cifar10`, split `train` or `test`, from a data root.
    #[staticmethod]
    fn load(root: &str, name: &str, split: &str) -> PyResult<Self> {
        let paths = DataPaths::new(root);
        let inner = match (name, split) {
            ("mnist", "train") => paths.mnist_train(),
            ("mnist", "test") => paths.mnist_test(),
            ("cifar10", "train") => paths.cifar10_train(),
            ("cifar10", "test") => paths.cifar10_test(),
            _ => return Err(PrunelabError::new_err(format!("unknown dataset {name}/{split}"))),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    /// A seeded random subset of `n` examples.
    fn subset(&self, n: usize, seed: u64) -> Self {
        Self { inner: self.inner.subset(n, seed) }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn prune_config(method: &str, sparsity: f64, seed: u64, synflow_rounds: usize) -> PyResult<PruneConfig> {
    Ok(PruneConfig {
        method: parse::<Method>(method)?,
        sparsity,
        seed,
        synflow_rounds,
        ..Default::default()
    })
}

#[pyfunction]
#[pyo3(signature = (net, method, sparsity, seed = 0, dataset = None, synflow_rounds = 100))]
fn prune(net: &Network, method: &str, sparsity: f64, seed: u64, dataset: Option<&Dataset>, synflow_rounds: usize) -> PyResult<Mask> {
    let cfg = prune_config(method, sparsity, seed, synflow_rounds)?;
    let inner = pruning::prune(&net.inner, dataset.map(|d| &d.inner), &cfg).map_err(err)?;
    Ok(Mask { inner })
}

/// Per-layer saliency scores, flattened.
#[pyfunction]
#[pyo3(signature = (net, method, seed = 0, dataset = None))]
fn scores(net: &Network, method: &str, seed: u64, dataset: Option<&Dataset>) -> PyResult<Vec<Vec<f64>>> {
    let cfg = prune_config(method, 0.0, seed, 1)?;
    let need = || dataset.map(|d| &d.inner).ok_or_else(|| err(prunelab::Error::EmptyDataset));
    let map = match cfg.method {
        Method::Magnitude => pruning::score_magnitude(&net.inner),
        Method::Snip => pruning::score_snip(&net.inner, need()?, &cfg).map_err(err)?,
        Method::Graspabs => pruning::score_graspabs(&net.inner, need()?, &cfg).map_err(err)?,
        Method::Synflow => pruning::score_synflow(&net.inner).map_err(err)?,
        Method::Random => return Err(PrunelabError::new_err("random pruning has no scores")),
    };
    Ok(map.scores.iter().map(|t| t.data().to_vec()).collect())
}

#[pyfunction]
fn apply_mask(net: &Network, mask: &Mask) -> PyResult<Network> {
    Ok(Network { inner: pruning::apply_mask(&net.inner, &mask.inner).map_err(err)? })
}

/// Applies a treatment to a pruned control; returns the treated network and mask.
#[pyfunction]
#[pyo3(signature = (treatment, net, mask, seed, sparsity))]
fn apply_treatment(treatment: &str, net: &Network, mask: &Mask, seed: u64, sparsity: f64) -> PyResult<(Network, Mask)> {
    let kind: Treatment = parse(treatment)?;
    let (n, m) = treatments::apply_treatment(kind, &net.inner, &mask.inner, &TreatmentConfig { seed, sparsity }).map_err(err)?;
    Ok((Network { inner: n }, Mask { inner: m }))
}

#[pyfunction]
fn wasserstein_1d(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    analysis::wasserstein_1d(&u, &v).map_err(err)
}

/// Layerwise Wd between a control and a treated pair, as a dict with
/// `layers` (list of dicts) and `mean`.
#[pyfunction]
#[pyo3(signature = (control, control_mask, treated, treated_mask, sample_mode = "masked-layer", weighted = false))]
fn layerwise_report<'py>(
    py: Python<'py>,
    control: &Network,
    control_mask: &Mask,
    treated: &Network,
    treated_mask: &Mask,
    sample_mode: &str,
    weighted: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let options = ReportOptions {
        sample_mode: parse::<SampleMode>(sample_mode)?,
        mean: if weighted { MeanKind::ParamWeighted } else { MeanKind::Unweighted },
    };
    let report = analysis::layerwise_report((&control.inner, &control_mask.inner), (&treated.inner, &treated_mask.inner), options)
        .map_err(err)?;
    let layers = report
        .layers
        .iter()
        .map(|l| {
            let d = PyDict::new(py);
            d.set_item("layer", l.layer)?;
            d.set_item("wd", l.wd)?;
            d.set_item("control_kept", l.control_kept)?;
            d.set_item("treated_kept", l.treated_kept)?;
            d.set_item("param_count", l.param_count)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("layers", layers)?;
    out.set_item("mean", report.mean)?;
    Ok(out)
}

/// Masked SGD; returns the trained network and per-epoch test accuracy.
#[pyfunction]
#[pyo3(signature = (net, mask, train_set, test_set = None, epochs = 5, lr = 0.1, batch_size = 128, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train_masked(
    py: Python<'_>,
    net: &Network,
    mask: &Mask,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> PyResult<(Network, Vec<Option<f64>>)> {
    let cfg = TrainConfig { epochs, lr, batch_size, data_seed: seed, ..Default::default() };
    let (trained, curve) = py
        .detach(|| train::train_masked(&net.inner, &mask.inner, &train_set.inner, test_set.map(|d| &d.inner), &cfg))
        .map_err(err)?;
    Ok((Network { inner: trained }, curve.epochs.iter().map(|e| e.test_acc).collect()))
}

#[pyfunction]
fn evaluate(py: Python<'_>, net: &Network, dataset: &Dataset) -> PyResult<f64> {
    py.detach(|| train::evaluate(&net.inner, &dataset.inner)).map_err(err)
}

/// Runs a sweep from a JSON config file; returns `(csv_path, failed_runs)`.
#[pyfunction]
fn run_sweep(py: Python<'_>, config_path: &str) -> PyResult<(String, usize)> {
    let config = ExperimentConfig::load(config_path).map_err(err)?;
    let out = py.detach(|| experiment::run_sweep(&config)).map_err(err)?;
    Ok((out.csv_path.display().to_string(), out.failed_runs))
}

#[pyfunction]
fn save_snapshot(net: &Network, mask: &Mask, dir: &str) -> PyResult<()> {
    experiment::save_snapshot(&net.inner, &mask.inner, &SnapshotMeta::default(), dir).map_err(err)
}

#[pyfunction]
fn load_snapshot(dir: &str) -> PyResult<(Network, Mask)> {
    let (n, m, _) = experiment::load_snapshot(dir).map_err(err)?;
    Ok((Network { inner: n }, Mask { inner: m }))
}

#[pymodule]
pub fn prunelab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PrunelabError", m.py().get_type::<PrunelabError>())?;
    m.add_class::<Network>()?;
    m.add_class::<Mask>()?;
    m.add_class::<Dataset>()?;
    m.add_function(wrap_pyfunction!(prune, m)?)?;
    m.add_function(wrap_pyfunction!(scores, m)?)?;
    m.add_function(wrap_pyfunction!(apply_mask, m)?)?;
    m.add_function(wrap_pyfunction!(apply_treatment, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_1d, m)?)?;
    m.add_function(wrap_pyfunction!(layerwise_report, m)?)?;
    m.add_function(wrap_pyfunction!(train_masked, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(save_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(load_snapshot, m)?)?;
    Ok(())
}
