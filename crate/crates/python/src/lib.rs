//! Python bindings: meshes, operators, datasets, models and training.
//!
//! Arrays cross the boundary as nested lists in `(batch, channel, vertex)`
//! order, matching the Rust layout.

use std::path::PathBuf;

use icosnet::data::{self, Dataset};
use icosnet::layers::{Ctx, KernelMask};
use icosnet::mesh::{self, IcoMesh};
use icosnet::network::{self as net, ArchitectureSpec, Checkpoint, ClassWeights, TrainConfig, Trainer};
use icosnet::operators::{assemble_operator_set, DiffOp, OperatorSet};
use ndarray::Array3;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: icosnet::Error) -> PyErr {
    use icosnet::Error as E;
    match e {
        E::Io(_) => PyIOError::new_err(e.to_string()),
        E::Numerical(_) | E::DegenerateFace { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn op_by_name(name: &str) -> PyResult<DiffOp> {
    Ok(match name {
        "identity" => DiffOp::Identity,
        "grad_x" => DiffOp::GradX,
        "grad_y" => DiffOp::GradY,
        "laplacian" => DiffOp::Laplacian,
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown operator {name:?}; expected identity, grad_x, grad_y or laplacian"
            )))
        }
    })
}

/// `(V, E, F)` at `level` from the closed forms.
#[pyfunction]
fn level_stats(level: u32) -> (usize, usize, usize) {
    let s = mesh::level_stats(level);
    (s.n_v, s.n_e, s.n_f)
}

#[pyclass(name = "Mesh", frozen)]
struct PyMesh(IcoMesh);

#[pymethods]
impl PyMesh {
    #[new]
    fn new(level: u32) -> PyResult<Self> {
        Ok(PyMesh(mesh::mesh_at_level(level).map_err(py_err)?))
    }

    #[getter]
    fn level(&self) -> u32 {
        self.0.level()
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.0.n_vertices()
    }

    #[getter]
    fn n_faces(&self) -> usize {
        self.0.n_faces()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.0.n_edges()
    }

    fn vertices(&self) -> Vec<(f64, f64, f64)> {
        self.0.vertices().iter().map(|p| (p[0], p[1], p[2])).collect()
    }

    fn faces(&self) -> Vec<(u32, u32, u32)> {
        self.0.faces().iter().map(|f| (f[0], f[1], f[2])).collect()
    }

    /// `(lon, lat)` in radians for every vertex.
    fn lon_lat(&self) -> Vec<(f64, f64)> {
        self.0.vertices().iter().map(|&p| mesh::lon_lat(p)).collect()
    }

    fn write_obj(&self, path: PathBuf) -> PyResult<()> {
        let f = std::fs::File::create(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        mesh::write_obj(&self.0, std::io::BufWriter::new(f)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Mesh({})", self.0.stats())
    }
}

#[pyclass(name = "Operators", frozen)]
struct PyOperators(OperatorSet);

#[pymethods]
impl PyOperators {
    #[new]
    fn new(level: u32) -> PyResult<Self> {
        let m = mesh::mesh_at_level(level).map_err(py_err)?;
        Ok(PyOperators(assemble_operator_set(&m).map_err(py_err)?))
    }

    #[getter]
    fn level(&self) -> u32 {
        self.0.level
    }

    /// Applies `identity`, `grad_x`, `grad_y` or `laplacian` to a vertex signal.
    fn apply(&self, op: &str, signal: Vec<f64>) -> PyResult<Vec<f64>> {
        if signal.len() != self.0.n_vertices() {
            return Err(PyValueError::new_err(format!(
                "signal has {} values, mesh has {} vertices",
                signal.len(),
                self.0.n_vertices()
            )));
        }
        Ok(self.0.get(op_by_name(op)?).mul_vec(&signal))
    }

    /// Nonzero `(row, col, value)` entries.
    fn triplets(&self, op: &str) -> PyResult<Vec<(usize, usize, f64)>> {
        Ok(self.0.get(op_by_name(op)?).triplets().collect())
    }
}

#[pyclass(name = "Dataset", frozen)]
struct PyDataset(Dataset);

#[pymethods]
impl PyDataset {
    /// Synthetic harmonic segmentation set.
    #[staticmethod]
    #[pyo3(signature = (level, classes, count, seed=0))]
    fn synthetic(level: u32, classes: usize, count: usize, seed: u64) -> PyResult<Self> {
        Ok(PyDataset(data::synth_segmentation_set(level, classes, count, seed).map_err(py_err)?))
    }

    /// IDX digits from `directory` (`split` is "train" or "test") projected at `level`.
    #[staticmethod]
    #[pyo3(signature = (directory, split="test", level=4, limit=None, delta_degrees=30.0, lon0_degrees=0.0))]
    fn mnist(
        directory: PathBuf,
        split: &str,
        level: u32,
        limit: Option<usize>,
        delta_degrees: f64,
        lon0_degrees: f64,
    ) -> PyResult<Self> {
        let split = match split {
            "train" => data::MnistSplit::Train,
            "test" => data::MnistSplit::Test,
            s => return Err(PyValueError::new_err(format!("split {s:?} is not train or test"))),
        };
        let mut digits = data::load_mnist_split(&directory, split).map_err(py_err)?;
        if let Some(n) = limit {
            digits.truncate(n);
        }
        let spec = data::ProjectionSpec::from_degrees(lon0_degrees, delta_degrees).map_err(py_err)?;
        Ok(PyDataset(data::spherical_mnist(&digits, level, &spec).map_err(py_err)?))
    }

    #[getter]
    fn level(&self) -> u32 {
        self.0.level()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.0.channels()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.0.num_classes()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// `(features, labels)` of sample `i`; labels are an int or a per-vertex list.
    fn sample(&self, py: Python<'_>, i: usize) -> PyResult<(Vec<Vec<f64>>, Py<PyAny>)> {
        let s = self.0.samples().get(i).ok_or_else(|| {
            pyo3::exceptions::PyIndexError::new_err(format!("sample {i} of {}", self.0.len()))
        })?;
        let features = s.features.outer_iter().map(|r| r.to_vec()).collect();
        let label = match &s.label {
            data::Label::Class(c) => c.into_pyobject(py)?.into_any().unbind(),
            data::Label::PerVertex(l) => l.into_pyobject(py)?.into_any().unbind(),
        };
        Ok((features, label))
    }
}

#[pyclass(name = "Model", unsendable)]
struct PyModel {
    inner: Option<net::Model>,
}

impl PyModel {
    fn get(&mut self) -> PyResult<&mut net::Model> {
        self.inner
            .as_mut()
            .ok_or_else(|| PyRuntimeError::new_err("model was lost by a failed training run"))
    }
}

#[pymethods]
impl PyModel {
    /// A preset (mnist, modelnet-full, modelnet-lean, 2d3ds, climate) with
    /// optional overrides.
    #[new]
    #[pyo3(signature = (preset="mnist", level=None, width=None, mask=None, in_channels=None, classes=None, seed=0, init="uniform"))]
    fn new(
        preset: &str,
        level: Option<u32>,
        width: Option<f64>,
        mask: Option<&str>,
        in_channels: Option<usize>,
        classes: Option<usize>,
        seed: u64,
        init: &str,
    ) -> PyResult<Self> {
        let mut spec = ArchitectureSpec::preset(preset).map_err(py_err)?;
        if let Some(l) = level {
            spec.input_level = l;
        }
        if let Some(w) = width {
            spec.width = w;
        }
        if let Some(m) = mask {
            spec.mask = m.parse::<KernelMask>().map_err(py_err)?;
        }
        spec.init = init.parse().map_err(py_err)?;
        if let Some(c) = in_channels {
            spec.in_channels = c;
        }
        if let Some(k) = classes {
            spec.num_classes = k;
        }
        Ok(PyModel {
            inner: Some(net::Model::new(&spec, seed).map_err(py_err)?),
        })
    }

    /// Rebuilds the network stored in a training checkpoint.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(py_err)?;
        Ok(PyModel {
            inner: Some(ck.model().map_err(py_err)?),
        })
    }

    fn param_count(&mut self) -> PyResult<usize> {
        Ok(self.get()?.param_count())
    }

    /// Canonical architecture text.
    fn spec(&mut self) -> PyResult<String> {
        Ok(self.get()?.spec().to_string())
    }

    /// Inference-mode forward pass of a `(B, C, V)` nested list.
    fn forward(&mut self, x: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let (b, c) = (x.len(), x.first().map_or(0, Vec::len));
        let v = x.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if x.iter().any(|r| r.len() != c || r.iter().any(|s| s.len() != v)) {
            return Err(PyValueError::new_err("input must be a rectangular (B, C, V) list"));
        }
        let flat: Vec<f64> = x.into_iter().flatten().flatten().collect();
        let arr = Array3::from_shape_vec((b, c, v), flat).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let y = self.get()?.forward(&arr, &mut Ctx::eval()).map_err(py_err)?;
        Ok(y.outer_iter()
            .map(|bm| bm.outer_iter().map(|r| r.to_vec()).collect())
            .collect())
    }

    /// Accuracy, mean IoU and per-class scores on `data`.
    #[pyo3(signature = (data, batch=16))]
    fn evaluate(&mut self, data: &PyDataset, batch: usize) -> PyResult<(f64, f64, Vec<Option<f64>>)> {
        let k = data.0.num_classes();
        let r = net::evaluate(self.get()?, &data.0, batch, &ClassWeights::uniform(k)).map_err(py_err)?;
        Ok((r.accuracy, r.mean_iou, r.class_iou))
    }

    /// Trains in place; returns `(epoch, lr, train_loss, train_acc, val_acc)` rows.
    #[pyo3(signature = (train, val=None, epochs=30, lr=1e-2, decay=0.5, period=10, batch=16, seed=0, checkpoint_dir=None))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        train: &PyDataset,
        val: Option<&PyDataset>,
        epochs: usize,
        lr: f64,
        decay: f64,
        period: usize,
        batch: usize,
        seed: u64,
        checkpoint_dir: Option<PathBuf>,
    ) -> PyResult<Vec<(usize, f64, f64, f64, Option<f64>)>> {
        let config = TrainConfig {
            epochs,
            lr,
            decay,
            decay_period: period,
            batch_size: batch,
            seed,
            ..TrainConfig::default()
        };
        let weights = Trainer::weights_for(&config, &train.0).map_err(py_err)?;
        config.validate().map_err(py_err)?;
        let spec = self.get()?.spec().clone();
        if train.0.num_classes() != spec.num_classes || train.0.channels() != spec.in_channels {
            return Err(PyValueError::new_err(format!(
                "data has {} channels / {} classes, model expects {} / {}",
                train.0.channels(),
                train.0.num_classes(),
                spec.in_channels,
                spec.num_classes
            )));
        }
        let model = self.inner.take().expect("checked above");
        let mut t = Trainer::new(model, config, weights).map_err(py_err)?;
        if let Some(dir) = &checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| PyIOError::new_err(format!("{}: {e}", dir.display())))?;
        }
        let report = t.run(&train.0, val.map(|v| &v.0), checkpoint_dir.as_deref(), |_| {});
        self.inner = Some(t.model);
        let report = report.map_err(py_err)?;
        Ok(report
            .epochs
            .iter()
            .map(|e| (e.epoch, e.lr, e.train_loss, e.train_acc, e.val_acc))
            .collect())
    }
}

/// Finite-difference gradient checks: `(name, max_rel_error, tolerance, passed)`.
#[pyfunction]
#[pyo3(signature = (level=2, channels=3, seed=0))]
fn gradcheck(level: u32, channels: usize, seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let opts = icosnet::gradcheck::GradCheckOptions {
        level,
        channels,
        seed,
        ..Default::default()
    };
    let results = icosnet::gradcheck::run_suite(&opts).map_err(py_err)?;
    Ok(results
        .into_iter()
        .map(|r| {
            let ok = r.passed();
            (r.name, r.max_rel_error, r.tolerance, ok)
        })
        .collect())
}

/// Renders a vertex signal to a `height × width` equirectangular grid.
#[pyfunction]
#[pyo3(signature = (signal, level, width=512, height=256))]
fn render_equirect(signal: Vec<f64>, level: u32, width: usize, height: usize) -> PyResult<Vec<Vec<f64>>> {
    let m = mesh::mesh_at_level(level).map_err(py_err)?;
    let img = data::render_equirect(&signal, &m, width, height).map_err(py_err)?;
    Ok((0..height)
        .map(|r| (0..width).map(|c| img.get(r, c, 0)).collect())
        .collect())
}

#[pymodule]
fn pyicosnet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyOperators>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(level_stats, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(render_equirect, m)?)?;
    m.add("PRESETS", ArchitectureSpec::PRESETS.to_vec())?;
    Ok(())
}
