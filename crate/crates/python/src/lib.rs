//! Python bindings for the mixture-saliency toolkit.
//!
//! Exposes the core types (maps, fixation points, Gaussian components,
//! mixtures, raw parameter grids, the toy predictor) and the operations
//! connecting them: EM fitting, thresholded rendering, the
//! unconstrained-to-valid transform, gradient descent, and the metric
//! suite. Covariance modes, anchor layouts, and normalizations are
//! strings with the same spellings the command-line tool uses.
//!
//! Errors surface as ValueError (bad data or shapes), OSError (files),
//! or RuntimeError (optimization divergence).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sgmm_core::gmm_fit::{self, EmConfig};
use sgmm_core::io::{
    load_fixation_points, load_gmm, save_fixation_points, save_gmm, GT_BLUR_SIGMA,
};
use sgmm_core::loss_grad;
use sgmm_core::metrics::{self, AucVariant, MetricConfig};
use sgmm_core::render::{
    blur_fixations, normalize_map, render_map, selected_components, RenderConfig,
    DEFAULT_THRESHOLD_GT,
};
use sgmm_core::trainer::{self, OptConfig, TinyPredictor};
use sgmm_core::transform::{make_anchor_grid, transform_params, TransformConfig};
use sgmm_core::types::AnchorGrid;
use sgmm_core::{
    validate_gmm, AnchorLayout, CovarianceMode, ErrorKind, FixationPoints, GaussianComponent,
    GmmParams, Normalize, RawParamMap, SaliencyMap, SgmmError,
};

fn to_py(e: SgmmError) -> PyErr {
    let msg = e.to_string();
    match e.kind() {
        ErrorKind::Io => PyIOError::new_err(msg),
        ErrorKind::Divergence => PyRuntimeError::new_err(msg),
        ErrorKind::Validation => PyValueError::new_err(msg),
    }
}

fn parse_mode(s: &str) -> PyResult<CovarianceMode> {
    match s {
        "spherical" => Ok(CovarianceMode::Spherical),
        "diag" | "diagonal" => Ok(CovarianceMode::Diagonal),
        "full" => Ok(CovarianceMode::Full),
        other => Err(PyValueError::new_err(format!(
            "covariance mode {other:?}; expected spherical, diag, or full"
        ))),
    }
}

fn parse_layout(s: &str) -> PyResult<AnchorLayout> {
    match s {
        "square" => Ok(AnchorLayout::Square),
        "horizontal" => Ok(AnchorLayout::HorizontalOnly),
        "vertical" => Ok(AnchorLayout::VerticalOnly),
        "none" => Ok(AnchorLayout::None),
        other => Err(PyValueError::new_err(format!(
            "anchor layout {other:?}; expected square, horizontal, vertical, or none"
        ))),
    }
}

fn parse_normalize(s: &str) -> PyResult<Normalize> {
    match s {
        "none" => Ok(Normalize::None),
        "sum" => Ok(Normalize::SumToOne),
        "max" => Ok(Normalize::MaxToOne),
        other => Err(PyValueError::new_err(format!(
            "normalization {other:?}; expected none, sum, or max"
        ))),
    }
}

/// Anchor grid for a (width, height) cell count on the given canvas,
/// plus the transform config for the covariance mode.
fn anchor_cfg(
    layout: &str,
    mode: &str,
    grid: (u32, u32),
    canvas_width: u32,
    canvas_height: u32,
) -> PyResult<(AnchorGrid, TransformConfig)> {
    let (gw, gh) = grid;
    if gw == 0 || gh == 0 {
        return Err(PyValueError::new_err("grid needs at least one cell per axis"));
    }
    let agrid = make_anchor_grid(parse_layout(layout)?, gh, gw, canvas_width, canvas_height);
    Ok((agrid, TransformConfig::new(parse_mode(mode)?)))
}

/// Dense row-major intensity grid; values are finite and nonnegative.
#[pyclass(name = "SaliencyMap", from_py_object)]
#[derive(Clone)]
struct PySaliencyMap {
    inner: SaliencyMap,
}

#[pymethods]
impl PySaliencyMap {
    /// Build from a flat row-major list of width*height values.
    #[new]
    fn new(values: Vec<f64>, width: u32, height: u32) -> PyResult<Self> {
        Ok(Self { inner: SaliencyMap::from_values(values, width, height).map_err(to_py)? })
    }

    #[staticmethod]
    fn zeros(width: u32, height: u32) -> Self {
        Self { inner: SaliencyMap::zeros(width, height) }
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height
    }

    /// Flat row-major copy of the pixel values.
    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    fn total(&self) -> f64 {
        self.inner.total()
    }

    fn max_value(&self) -> f64 {
        self.inner.max_value()
    }

    /// Value of the pixel containing continuous point (u, v); None when
    /// the point is off-canvas.
    fn at(&self, u: f64, v: f64) -> Option<f64> {
        self.inner.at_point(u, v)
    }

    /// Copy with "none", "sum", or "max" normalization applied.
    fn normalized(&self, mode: &str) -> PyResult<Self> {
        Ok(Self { inner: normalize_map(&self.inner, parse_normalize(mode)?).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!("SaliencyMap({}x{})", self.inner.width, self.inner.height)
    }
}

/// Recorded gaze or click locations on one canvas, as (u, v) pairs with
/// u along the width.
#[pyclass(name = "FixationPoints", from_py_object)]
#[derive(Clone)]
struct PyFixationPoints {
    inner: FixationPoints,
}

#[pymethods]
impl PyFixationPoints {
    #[new]
    fn new(points: Vec<(f64, f64)>, width: u32, height: u32) -> PyResult<Self> {
        let pts = points.into_iter().map(|(u, v)| [u, v]).collect();
        Ok(Self { inner: FixationPoints::new(pts, width, height).map_err(to_py)? })
    }

    #[getter]
    fn points(&self) -> Vec<(f64, f64)> {
        self.inner.points.iter().map(|p| (p[0], p[1])).collect()
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.canvas_width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.canvas_height
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Gaussian blur of the point set into a dense map on the points'
    /// own canvas; sigma is the blur std in pixels.
    #[pyo3(signature = (sigma, normalize = "none"))]
    fn blur(&self, sigma: f64, normalize: &str) -> PyResult<PySaliencyMap> {
        let cfg = RenderConfig::new(self.inner.canvas_width, self.inner.canvas_height)
            .with_normalize(parse_normalize(normalize)?);
        Ok(PySaliencyMap { inner: blur_fixations(&self.inner, sigma, &cfg).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_fixation_points(&self.inner, &path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_fixation_points(&path).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "FixationPoints({} points on {}x{})",
            self.inner.len(),
            self.inner.canvas_width,
            self.inner.canvas_height
        )
    }
}

/// One bivariate Gaussian: weight, mean (u, v) in pixels, and the free
/// covariance entries (var_u, var_v, cov_uv) in pixels squared.
#[pyclass(name = "GaussianComponent", from_py_object)]
#[derive(Clone)]
struct PyComponent {
    inner: GaussianComponent,
}

#[pymethods]
impl PyComponent {
    #[new]
    fn new(weight: f64, mean: (f64, f64), cov: (f64, f64, f64)) -> Self {
        Self {
            inner: GaussianComponent {
                weight,
                mean: [mean.0, mean.1],
                cov: [cov.0, cov.1, cov.2],
            },
        }
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.inner.weight
    }

    #[getter]
    fn mean(&self) -> (f64, f64) {
        (self.inner.mean[0], self.inner.mean[1])
    }

    #[getter]
    fn cov(&self) -> (f64, f64, f64) {
        (self.inner.cov[0], self.inner.cov[1], self.inner.cov[2])
    }

    /// Covariance determinant; positive iff the matrix is positive
    /// definite (given positive variances).
    fn det(&self) -> f64 {
        self.inner.det()
    }

    fn __repr__(&self) -> String {
        format!(
            "GaussianComponent(weight={:.6}, mean=({:.2}, {:.2}), cov=({:.2}, {:.2}, {:.2}))",
            self.inner.weight,
            self.inner.mean[0],
            self.inner.mean[1],
            self.inner.cov[0],
            self.inner.cov[1],
            self.inner.cov[2]
        )
    }
}

/// A mixture of Gaussian components on an absolute pixel canvas.
#[pyclass(name = "Gmm", from_py_object)]
#[derive(Clone)]
struct PyGmm {
    inner: GmmParams,
}

#[pymethods]
impl PyGmm {
    #[new]
    fn new(components: Vec<PyComponent>, width: u32, height: u32) -> Self {
        Self {
            inner: GmmParams {
                components: components.into_iter().map(|c| c.inner).collect(),
                canvas_width: width,
                canvas_height: height,
            },
        }
    }

    #[getter]
    fn components(&self) -> Vec<PyComponent> {
        self.inner.components.iter().map(|c| PyComponent { inner: *c }).collect()
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.canvas_width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.canvas_height
    }

    fn __len__(&self) -> usize {
        self.inner.n_components()
    }

    /// Invariant violations as strings; an empty list means the mixture
    /// is well formed.
    fn validate(&self) -> Vec<String> {
        validate_gmm(&self.inner)
    }

    /// Indices of components that clear the selection gate
    /// (weight strictly above threshold / n_components).
    #[pyo3(signature = (threshold = DEFAULT_THRESHOLD_GT))]
    fn selected(&self, threshold: f64) -> PyResult<Vec<usize>> {
        selected_components(&self.inner, threshold).map_err(to_py)
    }

    /// Render the gated mixture to a dense map on its own canvas.
    #[pyo3(signature = (threshold = DEFAULT_THRESHOLD_GT, normalize = "none"))]
    fn render(&self, threshold: f64, normalize: &str) -> PyResult<PySaliencyMap> {
        let cfg = RenderConfig::new(self.inner.canvas_width, self.inner.canvas_height)
            .with_threshold(threshold)
            .with_normalize(parse_normalize(normalize)?);
        Ok(PySaliencyMap { inner: render_map(&self.inner, &cfg).map_err(to_py)? })
    }

    /// Mixture log-likelihood of the points, in nats.
    fn log_likelihood(&self, points: &PyFixationPoints) -> PyResult<f64> {
        gmm_fit::log_likelihood(&points.inner, &self.inner).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_gmm(&self.inner, &path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_gmm(&path).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Gmm({} components on {}x{})",
            self.inner.n_components(),
            self.inner.canvas_width,
            self.inner.canvas_height
        )
    }
}

/// Unconstrained parameters on an h x w cell grid, one 6-list per cell
/// in row-major order: (pi, mu_u, mu_v, sigma_u, sigma_v, sigma_uv).
/// Any finite values transform to a valid mixture.
#[pyclass(name = "RawGrid", from_py_object)]
#[derive(Clone)]
struct PyRawGrid {
    inner: RawParamMap,
}

#[pymethods]
impl PyRawGrid {
    /// Zero-initialized unless cells are given (row-major, h*w entries).
    #[new]
    #[pyo3(signature = (h, w, cells = None))]
    fn new(h: u32, w: u32, cells: Option<Vec<[f64; 6]>>) -> PyResult<Self> {
        let mut raw = RawParamMap::zeros(h, w);
        if let Some(cells) = cells {
            if cells.len() != raw.n_cells() {
                return Err(PyValueError::new_err(format!(
                    "{} cells vs grid {h}x{w}",
                    cells.len()
                )));
            }
            raw.grid = cells;
        }
        raw.check().map_err(to_py)?;
        Ok(Self { inner: raw })
    }

    #[getter]
    fn h(&self) -> u32 {
        self.inner.h
    }

    #[getter]
    fn w(&self) -> u32 {
        self.inner.w
    }

    /// Row-major copy of the cell vectors.
    #[getter]
    fn cells(&self) -> Vec<[f64; 6]> {
        self.inner.grid.clone()
    }

    fn set_cell(&mut self, i: u32, j: u32, cell: [f64; 6]) -> PyResult<()> {
        if i >= self.inner.h || j >= self.inner.w {
            return Err(PyValueError::new_err(format!(
                "cell ({i}, {j}) outside grid {}x{}",
                self.inner.h, self.inner.w
            )));
        }
        if cell.iter().any(|v| !v.is_finite()) {
            return Err(PyValueError::new_err("raw parameter not finite"));
        }
        self.inner.grid[(i * self.inner.w + j) as usize] = cell;
        Ok(())
    }

    /// Constrained mixture for these parameters on the given canvas:
    /// softmax weights, sigmoid-plus-anchor means, floored softplus
    /// variances. Component order is cell row-major order.
    #[pyo3(signature = (width, height, layout = "square", mode = "diag"))]
    fn transform(&self, width: u32, height: u32, layout: &str, mode: &str) -> PyResult<PyGmm> {
        let agrid =
            make_anchor_grid(parse_layout(layout)?, self.inner.h, self.inner.w, width, height);
        let tcfg = TransformConfig::new(parse_mode(mode)?);
        Ok(PyGmm { inner: transform_params(&self.inner, &agrid, &tcfg).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!("RawGrid({}x{})", self.inner.h, self.inner.w)
    }
}

/// Tiny trainable head over a single-channel feature image: 8 learned
/// 5x5 filters with a rectifier, per-cell mean pooling, and one affine
/// map shared across cells to the 6 raw parameter fields.
#[pyclass(name = "TinyPredictor", from_py_object)]
#[derive(Clone)]
struct PyPredictor {
    inner: TinyPredictor,
}

#[pymethods]
impl PyPredictor {
    /// Seeded random filters and a zeroed head; the head biases start
    /// every cell at its anchor so the first forward pass is valid.
    #[new]
    #[pyo3(signature = (seed = 0))]
    fn new(seed: u64) -> Self {
        Self { inner: TinyPredictor::new(seed) }
    }

    #[staticmethod]
    fn zeros() -> Self {
        Self { inner: TinyPredictor::zeros() }
    }

    /// All parameters as one flat list, in checkpoint order.
    fn to_list(&self) -> Vec<f64> {
        self.inner.to_vec()
    }

    #[staticmethod]
    fn from_list(flat: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: TinyPredictor::from_vec(&flat).map_err(to_py)? })
    }

    /// Mixture predicted from a feature image, on the feature's own
    /// canvas. The image sides must divide evenly into the grid cells.
    #[pyo3(signature = (feature, grid = (2, 2), layout = "square", mode = "diag"))]
    fn predict(
        &self,
        feature: &PySaliencyMap,
        grid: (u32, u32),
        layout: &str,
        mode: &str,
    ) -> PyResult<PyGmm> {
        let (agrid, tcfg) =
            anchor_cfg(layout, mode, grid, feature.inner.width, feature.inner.height)?;
        Ok(PyGmm {
            inner: trainer::predict(&self.inner, &feature.inner, &agrid, &tcfg).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: TinyPredictor::load(&path).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!("TinyPredictor({} parameters)", TinyPredictor::N_PARAMS)
    }
}

/// EM fit of an n-component mixture to fixation points. Runs n_init
/// seeded restarts to convergence and keeps the best log-likelihood.
#[pyfunction]
#[pyo3(signature = (points, n_components, mode = "diag", max_iter = 200, tol = 1e-6, n_init = 4, min_var = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fit_gmm(
    points: &PyFixationPoints,
    n_components: usize,
    mode: &str,
    max_iter: usize,
    tol: f64,
    n_init: usize,
    min_var: f64,
    seed: u64,
) -> PyResult<PyGmm> {
    let cfg = EmConfig { max_iter, tol, n_init, min_var, seed };
    let gmm = gmm_fit::fit_gmm(&points.inner, n_components, parse_mode(mode)?, &cfg)
        .map_err(to_py)?;
    Ok(PyGmm { inner: gmm })
}

/// Like fit_gmm, but also returns the winning restart's per-iteration
/// log-likelihood trace (the value before each M-step).
#[pyfunction]
#[pyo3(signature = (points, n_components, mode = "diag", max_iter = 200, tol = 1e-6, n_init = 4, min_var = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fit_gmm_trace(
    points: &PyFixationPoints,
    n_components: usize,
    mode: &str,
    max_iter: usize,
    tol: f64,
    n_init: usize,
    min_var: f64,
    seed: u64,
) -> PyResult<(PyGmm, Vec<f64>)> {
    let cfg = EmConfig { max_iter, tol, n_init, min_var, seed };
    let (gmm, trace) =
        gmm_fit::fit_gmm_trace(&points.inner, n_components, parse_mode(mode)?, &cfg)
            .map_err(to_py)?;
    Ok((PyGmm { inner: gmm }, trace))
}

/// Correlation loss of the gated mixture against a target map; returns
/// (loss, cc) with loss = 1 - cc.
#[pyfunction]
#[pyo3(signature = (gmm, target, threshold = DEFAULT_THRESHOLD_GT))]
fn cc_loss(gmm: &PyGmm, target: &PySaliencyMap, threshold: f64) -> PyResult<(f64, f64)> {
    let report = loss_grad::cc_loss(&gmm.inner, &target.inner, threshold).map_err(to_py)?;
    Ok((report.loss, report.cc))
}

/// Loss and its gradient with respect to a raw grid, pulled back
/// through the transform on the target's canvas; returns
/// (loss, gradient) with the gradient as a RawGrid of partials.
#[pyfunction]
#[pyo3(signature = (raw, target, layout = "square", mode = "diag", threshold = DEFAULT_THRESHOLD_GT))]
fn raw_grad(
    raw: &PyRawGrid,
    target: &PySaliencyMap,
    layout: &str,
    mode: &str,
    threshold: f64,
) -> PyResult<(f64, PyRawGrid)> {
    let (agrid, tcfg) = anchor_cfg(
        layout,
        mode,
        (raw.inner.w, raw.inner.h),
        target.inner.width,
        target.inner.height,
    )?;
    let report =
        loss_grad::raw_grad(&raw.inner, &agrid, &tcfg, &target.inner, threshold).map_err(to_py)?;
    let d = report.d_raw.expect("raw gradient requested");
    Ok((report.loss, PyRawGrid { inner: d }))
}

/// Fit a free raw grid to one target map by SGD with momentum; returns
/// (fitted grid, loss trace). The trace has one entry per step plus a
/// final evaluation, so trace[0] is the loss at the start and trace[-1]
/// the loss at the returned parameters. grid is (cells across, cells
/// down), matching the WIDTHxHEIGHT convention of the command line.
#[pyfunction]
#[pyo3(signature = (target, grid = (2, 2), layout = "square", mode = "diag", lr = 0.01, steps = 500, momentum = 0.9, seed = 0, init = None))]
#[allow(clippy::too_many_arguments)]
fn direct_fit(
    target: &PySaliencyMap,
    grid: (u32, u32),
    layout: &str,
    mode: &str,
    lr: f64,
    steps: u32,
    momentum: f64,
    seed: u64,
    init: Option<PyRawGrid>,
) -> PyResult<(PyRawGrid, Vec<f64>)> {
    let (agrid, tcfg) = anchor_cfg(layout, mode, grid, target.inner.width, target.inner.height)?;
    let init = init.map_or_else(|| RawParamMap::zeros(agrid.h, agrid.w), |r| r.inner);
    let opt = OptConfig { lr, epochs: steps, batch: 1, momentum, seed };
    let (raw, trace) =
        trainer::direct_fit(&init, &agrid, &tcfg, &target.inner, &opt).map_err(to_py)?;
    Ok((PyRawGrid { inner: raw }, trace))
}

/// Train the predictor on (feature image, target map) pairs with
/// minibatch SGD and momentum; returns (trained predictor, per-step
/// mean batch loss trace). Batches reshuffle every epoch from the seed,
/// so runs are reproducible bit-for-bit.
#[pyfunction]
#[pyo3(signature = (dataset, predictor, grid = (2, 2), layout = "square", mode = "diag", lr = 1e-3, epochs = 100, batch = 4, momentum = 0.9, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train_toy(
    dataset: Vec<(PySaliencyMap, PySaliencyMap)>,
    predictor: &PyPredictor,
    grid: (u32, u32),
    layout: &str,
    mode: &str,
    lr: f64,
    epochs: u32,
    batch: u32,
    momentum: f64,
    seed: u64,
) -> PyResult<(PyPredictor, Vec<f64>)> {
    let first = dataset
        .first()
        .ok_or_else(|| PyValueError::new_err("empty dataset"))?;
    let (agrid, tcfg) =
        anchor_cfg(layout, mode, grid, first.1.inner.width, first.1.inner.height)?;
    let data: Vec<(SaliencyMap, SaliencyMap)> =
        dataset.into_iter().map(|(f, t)| (f.inner, t.inner)).collect();
    let opt = OptConfig { lr, epochs, batch, momentum, seed };
    let (p, trace) =
        trainer::train_toy(&data, predictor.inner.clone(), &agrid, &tcfg, &opt).map_err(to_py)?;
    Ok((PyPredictor { inner: p }, trace))
}

/// Mean correlation loss of the predictor across (feature, target)
/// pairs.
#[pyfunction]
#[pyo3(signature = (dataset, predictor, grid = (2, 2), layout = "square", mode = "diag"))]
fn mean_loss(
    dataset: Vec<(PySaliencyMap, PySaliencyMap)>,
    predictor: &PyPredictor,
    grid: (u32, u32),
    layout: &str,
    mode: &str,
) -> PyResult<f64> {
    let first = dataset
        .first()
        .ok_or_else(|| PyValueError::new_err("empty dataset"))?;
    let (agrid, tcfg) =
        anchor_cfg(layout, mode, grid, first.1.inner.width, first.1.inner.height)?;
    let data: Vec<(SaliencyMap, SaliencyMap)> =
        dataset.into_iter().map(|(f, t)| (f.inner, t.inner)).collect();
    trainer::mean_loss(&data, &predictor.inner, &agrid, &tcfg).map_err(to_py)
}

/// Pearson correlation between two maps of the same shape.
#[pyfunction]
fn cc(pred: &PySaliencyMap, gt: &PySaliencyMap) -> PyResult<f64> {
    metrics::cc(&pred.inner, &gt.inner).map_err(to_py)
}

/// Histogram intersection of the sum-normalized maps, in [0, 1].
#[pyfunction]
fn sim(pred: &PySaliencyMap, gt: &PySaliencyMap) -> PyResult<f64> {
    metrics::sim(&pred.inner, &gt.inner).map_err(to_py)
}

/// KL divergence of the ground truth from the prediction, both
/// sum-normalized, in nats.
#[pyfunction]
#[pyo3(signature = (pred, gt, eps = 1e-12))]
fn kl_div(pred: &PySaliencyMap, gt: &PySaliencyMap, eps: f64) -> PyResult<f64> {
    let cfg = MetricConfig { kl_eps: eps, ..Default::default() };
    metrics::kl_div(&pred.inner, &gt.inner, &cfg).map_err(to_py)
}

/// Exact transport distance between the maps viewed as spatial
/// distributions, in pixels; each side is area-downsampled until its
/// longer side is at most max_side before the solve.
#[pyfunction]
#[pyo3(signature = (pred, gt, max_side = 32))]
fn emd(pred: &PySaliencyMap, gt: &PySaliencyMap, max_side: u32) -> PyResult<f64> {
    let cfg = MetricConfig { emd_max_side: max_side, ..Default::default() };
    metrics::emd(&pred.inner, &gt.inner, &cfg).map_err(to_py)
}

/// Mean standardized map value at the fixated pixels.
#[pyfunction]
fn nss(pred: &PySaliencyMap, points: &PyFixationPoints) -> PyResult<f64> {
    metrics::nss(&pred.inner, &points.inner).map_err(to_py)
}

/// Fixation-detection AUC. Variants: "judd" scores every non-fixated
/// pixel as a negative; "borji" samples random pixels over seeded
/// splits; "shuffled" samples from the supplied negative fixations
/// (pooled from other images), which are then required.
#[pyfunction]
#[pyo3(signature = (pred, points, variant = "judd", negatives = None, splits = 100, seed = 0))]
fn auc(
    pred: &PySaliencyMap,
    points: &PyFixationPoints,
    variant: &str,
    negatives: Option<PyFixationPoints>,
    splits: u32,
    seed: u64,
) -> PyResult<f64> {
    let v = match variant {
        "judd" => AucVariant::Judd,
        "borji" => AucVariant::Borji,
        "shuffled" => AucVariant::Shuffled,
        other => {
            return Err(PyValueError::new_err(format!(
                "AUC variant {other:?}; expected judd, borji, or shuffled"
            )))
        }
    };
    let cfg = MetricConfig { auc_splits: splits, seed, ..Default::default() };
    metrics::auc(&pred.inner, &points.inner, v, negatives.as_ref().map(|n| &n.inner), &cfg)
        .map_err(to_py)
}

/// Mean log2 gain per fixation of the sum-normalized prediction over a
/// baseline prior (a centered Gaussian with std height/3 by default).
#[pyfunction]
#[pyo3(signature = (pred, points, baseline = None, eps = 1e-12))]
fn info_gain(
    pred: &PySaliencyMap,
    points: &PyFixationPoints,
    baseline: Option<PySaliencyMap>,
    eps: f64,
) -> PyResult<f64> {
    let cfg =
        MetricConfig { kl_eps: eps, baseline: baseline.map(|b| b.inner), ..Default::default() };
    metrics::info_gain(&pred.inner, &points.inner, &cfg).map_err(to_py)
}

#[pymodule]
fn sgmm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySaliencyMap>()?;
    m.add_class::<PyFixationPoints>()?;
    m.add_class::<PyComponent>()?;
    m.add_class::<PyGmm>()?;
    m.add_class::<PyRawGrid>()?;
    m.add_class::<PyPredictor>()?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gmm_trace, m)?)?;
    m.add_function(wrap_pyfunction!(cc_loss, m)?)?;
    m.add_function(wrap_pyfunction!(raw_grad, m)?)?;
    m.add_function(wrap_pyfunction!(direct_fit, m)?)?;
    m.add_function(wrap_pyfunction!(train_toy, m)?)?;
    m.add_function(wrap_pyfunction!(mean_loss, m)?)?;
    m.add_function(wrap_pyfunction!(cc, m)?)?;
    m.add_function(wrap_pyfunction!(sim, m)?)?;
    m.add_function(wrap_pyfunction!(kl_div, m)?)?;
    m.add_function(wrap_pyfunction!(emd, m)?)?;
    m.add_function(wrap_pyfunction!(nss, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(info_gain, m)?)?;
    m.add("DEFAULT_THRESHOLD_GT", DEFAULT_THRESHOLD_GT)?;
    m.add("GT_BLUR_SIGMA", GT_BLUR_SIGMA)?;
    Ok(())
}
