//! Gradient-descent learning of mixture parameters. Two modes: direct fit
//! of a free raw grid against one target map, and a tiny trainable head
//! that maps a single-channel feature image to a raw grid, standing in
//! for a full feature network at desk scale.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SgmmError};
use crate::loss_grad::{cc_loss, raw_grad};
use crate::render::DEFAULT_THRESHOLD_GT;
use crate::transform::{transform_params, TransformConfig};
use crate::types::{ensure_valid_gmm, AnchorGrid, GmmParams, RawParamMap, SaliencyMap};

/// Step size, schedule length, and batching for SGD with momentum.
/// `batch` counts images per gradient step; a lone map trains with
/// whatever batch is given.
#[derive(Debug, Clone)]
pub struct OptConfig {
    pub lr: f64,
    pub epochs: u32,
    pub batch: u32,
    /// In [0, 1). 0 disables the velocity term.
    pub momentum: f64,
    pub seed: u64,
}

impl OptConfig {
    /// Defaults for fitting free per-image parameters.
    pub fn direct_fit_defaults() -> Self {
        OptConfig { lr: 1e-2, epochs: 500, batch: 1, momentum: 0.9, seed: 0 }
    }

    /// Defaults for training the predictor head.
    pub fn train_toy_defaults() -> Self {
        OptConfig { lr: 1e-3, epochs: 100, batch: 4, momentum: 0.9, seed: 0 }
    }

    fn check(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(SgmmError::DegenerateInput(format!("learning rate {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(SgmmError::DegenerateInput("zero epochs".into()));
        }
        if self.batch == 0 {
            return Err(SgmmError::DegenerateInput("zero batch size".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(SgmmError::DegenerateInput(format!("momentum {}", self.momentum)));
        }
        Ok(())
    }
}

/// A loss above this, or any non-finite loss, aborts training. The
/// correlation loss lives in [0, 2] on healthy numbers, so tripping this
/// means NaN or garbage propagated through the pipeline.
pub const DIVERGENCE_LOSS: f64 = 10.0;

fn check_divergence(step: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() || loss > DIVERGENCE_LOSS {
        return Err(SgmmError::DivergenceDetected { step, loss });
    }
    Ok(())
}

const CONV_FILTERS: usize = 8;
const CONV_SIZE: usize = 5;
const CONV_PAD: usize = 2;
const HEAD_OUT: usize = 6;

const N_CONV_W: usize = CONV_FILTERS * CONV_SIZE * CONV_SIZE;
const N_HEAD_W: usize = HEAD_OUT * CONV_FILTERS;

/// Two-stage trainable head over a single-channel image: 8 learned 5×5
/// same-padding convolution filters with bias and a rectifier, mean-pooled
/// into the target grid's cells, then one affine map shared across cells
/// from the pooled 8-vector to the 6 raw parameter fields.
///
/// The head is shape-agnostic: any input whose sides divide evenly into
/// the requested H×W pooling cells is accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyPredictor {
    /// Filter-major, row-major 5×5 taps. 200 values.
    pub conv_w: Vec<f64>,
    pub conv_b: [f64; CONV_FILTERS],
    /// Output-major: 6 rows of 8 pooled-feature weights. 48 values.
    pub head_w: Vec<f64>,
    pub head_b: [f64; HEAD_OUT],
}

/// Gradient of some scalar w.r.t. every predictor parameter, same layout
/// as the fields it mirrors.
#[derive(Debug, Clone)]
struct PredictorGrad {
    conv_w: Vec<f64>,
    conv_b: [f64; CONV_FILTERS],
    head_w: Vec<f64>,
    head_b: [f64; HEAD_OUT],
}

impl PredictorGrad {
    fn zeros() -> Self {
        PredictorGrad {
            conv_w: vec![0.0; N_CONV_W],
            conv_b: [0.0; CONV_FILTERS],
            head_w: vec![0.0; N_HEAD_W],
            head_b: [0.0; HEAD_OUT],
        }
    }

    fn scale(&mut self, s: f64) {
        for v in &mut self.conv_w {
            *v *= s;
        }
        for v in &mut self.conv_b {
            *v *= s;
        }
        for v in &mut self.head_w {
            *v *= s;
        }
        for v in &mut self.head_b {
            *v *= s;
        }
    }

    fn add(&mut self, other: &PredictorGrad) {
        for (a, b) in self.conv_w.iter_mut().zip(&other.conv_w) {
            *a += b;
        }
        for (a, b) in self.conv_b.iter_mut().zip(&other.conv_b) {
            *a += b;
        }
        for (a, b) in self.head_w.iter_mut().zip(&other.head_w) {
            *a += b;
        }
        for (a, b) in self.head_b.iter_mut().zip(&other.head_b) {
            *a += b;
        }
    }
}

/// Activations kept from a forward pass for the backward pass.
struct Activations {
    /// Post-rectifier responses, filter-major, row-major. Zero marks a
    /// dead unit for the backward mask.
    conv_out: Vec<f64>,
    /// Cell-major pooled features, `CONV_FILTERS` per cell.
    pooled: Vec<f64>,
    img_w: usize,
    img_h: usize,
    block_w: usize,
    block_h: usize,
    cells_w: usize,
}

impl TinyPredictor {
    pub const N_PARAMS: usize = N_CONV_W + CONV_FILTERS + N_HEAD_W + HEAD_OUT;

    /// All parameters zero: every cell receives the head biases, so the
    /// transformed mixture is uniform weights at the anchors.
    pub fn zeros() -> Self {
        TinyPredictor {
            conv_w: vec![0.0; N_CONV_W],
            conv_b: [0.0; CONV_FILTERS],
            head_w: vec![0.0; N_HEAD_W],
            head_b: [0.0; HEAD_OUT],
        }
    }

    /// Random convolution filters, zero head weights. The head biases
    /// seed each cell at its anchor with a moderate starting variance, so
    /// the first forward pass is already a valid uniform mixture and
    /// gradient reaches the head weights immediately.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (2.0 / (CONV_SIZE * CONV_SIZE) as f64).sqrt();
        let mut p = TinyPredictor::zeros();
        for w in &mut p.conv_w {
            *w = rng.sample::<f64, _>(rand_distr::StandardNormal) * scale;
        }
        p.conv_b = [0.01; CONV_FILTERS];
        p.head_b = [0.0, 0.0, 0.0, 20.0, 20.0, 0.0];
        p
    }

    /// Flat parameter vector in checkpoint order: convolution taps
    /// (filter-major, row-major), convolution biases, head weights
    /// (output-major), head biases.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::N_PARAMS);
        v.extend_from_slice(&self.conv_w);
        v.extend_from_slice(&self.conv_b);
        v.extend_from_slice(&self.head_w);
        v.extend_from_slice(&self.head_b);
        v
    }

    pub fn from_vec(flat: &[f64]) -> Result<Self> {
        if flat.len() != Self::N_PARAMS {
            return Err(SgmmError::ShapeMismatch(format!(
                "predictor wants {} parameters, got {}",
                Self::N_PARAMS,
                flat.len()
            )));
        }
        if let Some(bad) = flat.iter().find(|v| !v.is_finite()) {
            return Err(SgmmError::DegenerateInput(format!(
                "non-finite predictor parameter {bad}"
            )));
        }
        Ok(Self::from_flat_unchecked(flat))
    }

    fn from_flat_unchecked(flat: &[f64]) -> Self {
        let mut p = TinyPredictor::zeros();
        let (a, rest) = flat.split_at(N_CONV_W);
        let (b, rest) = rest.split_at(CONV_FILTERS);
        let (c, d) = rest.split_at(N_HEAD_W);
        p.conv_w.copy_from_slice(a);
        p.conv_b.copy_from_slice(b);
        p.head_w.copy_from_slice(c);
        p.head_b.copy_from_slice(d);
        p
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing checkpoint {}", path.display());
        let mut w = BufWriter::new(File::create(path).map_err(|e| SgmmError::io(ctx(), e))?);
        w.write_all(CKPT_MAGIC).map_err(|e| SgmmError::io(ctx(), e))?;
        w.write_all(&CKPT_VERSION.to_le_bytes()).map_err(|e| SgmmError::io(ctx(), e))?;
        for v in self.to_vec() {
            w.write_all(&v.to_le_bytes()).map_err(|e| SgmmError::io(ctx(), e))?;
        }
        w.flush().map_err(|e| SgmmError::io(ctx(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let pstr = path.display().to_string();
        let mut r = BufReader::new(
            File::open(path).map_err(|e| SgmmError::io(format!("opening checkpoint {pstr}"), e))?,
        );
        let mut magic = [0u8; 8];
        read_exact_fmt(&mut r, &mut magic, &pstr)?;
        if &magic != CKPT_MAGIC {
            return Err(SgmmError::FormatError {
                path: pstr,
                msg: "bad magic; not a checkpoint file".into(),
            });
        }
        let mut ver = [0u8; 4];
        read_exact_fmt(&mut r, &mut ver, &pstr)?;
        let version = u32::from_le_bytes(ver);
        if version != CKPT_VERSION {
            return Err(SgmmError::FormatError {
                path: pstr,
                msg: format!("unsupported checkpoint version {version}"),
            });
        }
        let mut flat = vec![0.0; Self::N_PARAMS];
        let mut buf = [0u8; 8];
        for v in &mut flat {
            read_exact_fmt(&mut r, &mut buf, &pstr)?;
            *v = f64::from_le_bytes(buf);
        }
        let mut extra = [0u8; 1];
        match r.read(&mut extra) {
            Ok(0) => {}
            Ok(_) => {
                return Err(SgmmError::FormatError {
                    path: pstr,
                    msg: "trailing bytes after parameters".into(),
                })
            }
            Err(e) => return Err(SgmmError::io(format!("reading checkpoint {pstr}"), e)),
        }
        TinyPredictor::from_vec(&flat)
    }

    /// Forward pass for a given pooling shape.
    fn forward(&self, feature: &SaliencyMap, cells_h: u32, cells_w: u32) -> Result<(RawParamMap, Activations)> {
        let img_w = feature.width as usize;
        let img_h = feature.height as usize;
        let (ch, cw) = (cells_h as usize, cells_w as usize);
        if ch == 0 || cw == 0 || img_h % ch != 0 || img_w % cw != 0 {
            return Err(SgmmError::ShapeMismatch(format!(
                "{img_w}x{img_h} image does not pool into {cw}x{ch} cells"
            )));
        }
        let block_h = img_h / ch;
        let block_w = img_w / cw;

        let mut conv_out = vec![0.0; CONV_FILTERS * img_h * img_w];
        for f in 0..CONV_FILTERS {
            let taps = &self.conv_w[f * CONV_SIZE * CONV_SIZE..(f + 1) * CONV_SIZE * CONV_SIZE];
            let out = &mut conv_out[f * img_h * img_w..(f + 1) * img_h * img_w];
            for i in 0..img_h {
                for j in 0..img_w {
                    let mut acc = self.conv_b[f];
                    for di in 0..CONV_SIZE {
                        let ii = i + di;
                        if ii < CONV_PAD || ii >= img_h + CONV_PAD {
                            continue;
                        }
                        let ii = ii - CONV_PAD;
                        for dj in 0..CONV_SIZE {
                            let jj = j + dj;
                            if jj < CONV_PAD || jj >= img_w + CONV_PAD {
                                continue;
                            }
                            let jj = jj - CONV_PAD;
                            acc += taps[di * CONV_SIZE + dj] * feature.values[ii * img_w + jj];
                        }
                    }
                    out[i * img_w + j] = acc.max(0.0);
                }
            }
        }

        let inv_block = 1.0 / (block_h * block_w) as f64;
        let mut pooled = vec![0.0; ch * cw * CONV_FILTERS];
        for f in 0..CONV_FILTERS {
            let out = &conv_out[f * img_h * img_w..(f + 1) * img_h * img_w];
            for i in 0..img_h {
                let ci = i / block_h;
                for j in 0..img_w {
                    let cell = ci * cw + j / block_w;
                    pooled[cell * CONV_FILTERS + f] += out[i * img_w + j] * inv_block;
                }
            }
        }

        let mut raw = RawParamMap::zeros(cells_h, cells_w);
        for cell in 0..ch * cw {
            let feat = &pooled[cell * CONV_FILTERS..(cell + 1) * CONV_FILTERS];
            for k in 0..HEAD_OUT {
                let row = &self.head_w[k * CONV_FILTERS..(k + 1) * CONV_FILTERS];
                let mut acc = self.head_b[k];
                for (w, x) in row.iter().zip(feat) {
                    acc += w * x;
                }
                raw.grid[cell][k] = acc;
            }
        }
        let acts = Activations { conv_out, pooled, img_w, img_h, block_w, block_h, cells_w: cw };
        Ok((raw, acts))
    }

    /// Pull a gradient w.r.t. the raw grid back through the head.
    fn backward(&self, feature: &SaliencyMap, acts: &Activations, d_raw: &RawParamMap) -> PredictorGrad {
        let mut g = PredictorGrad::zeros();
        let n_cells = d_raw.grid.len();

        let mut d_pooled = vec![0.0; n_cells * CONV_FILTERS];
        for cell in 0..n_cells {
            let feat = &acts.pooled[cell * CONV_FILTERS..(cell + 1) * CONV_FILTERS];
            for k in 0..HEAD_OUT {
                let d = d_raw.grid[cell][k];
                g.head_b[k] += d;
                for f in 0..CONV_FILTERS {
                    g.head_w[k * CONV_FILTERS + f] += d * feat[f];
                    d_pooled[cell * CONV_FILTERS + f] += d * self.head_w[k * CONV_FILTERS + f];
                }
            }
        }

        let inv_block = 1.0 / (acts.block_h * acts.block_w) as f64;
        for f in 0..CONV_FILTERS {
            let out = &acts.conv_out[f * acts.img_h * acts.img_w..(f + 1) * acts.img_h * acts.img_w];
            let taps = &mut g.conv_w[f * CONV_SIZE * CONV_SIZE..(f + 1) * CONV_SIZE * CONV_SIZE];
            for i in 0..acts.img_h {
                let ci = i / acts.block_h;
                for j in 0..acts.img_w {
                    if out[i * acts.img_w + j] <= 0.0 {
                        continue;
                    }
                    let cell = ci * acts.cells_w + j / acts.block_w;
                    let d = d_pooled[cell * CONV_FILTERS + f] * inv_block;
                    if d == 0.0 {
                        continue;
                    }
                    g.conv_b[f] += d;
                    for di in 0..CONV_SIZE {
                        let ii = i + di;
                        if ii < CONV_PAD || ii >= acts.img_h + CONV_PAD {
                            continue;
                        }
                        let ii = ii - CONV_PAD;
                        for dj in 0..CONV_SIZE {
                            let jj = j + dj;
                            if jj < CONV_PAD || jj >= acts.img_w + CONV_PAD {
                                continue;
                            }
                            let jj = jj - CONV_PAD;
                            taps[di * CONV_SIZE + dj] += d * feature.values[ii * acts.img_w + jj];
                        }
                    }
                }
            }
        }
        g
    }
}

const CKPT_MAGIC: &[u8; 8] = b"SGMMCKPT";
const CKPT_VERSION: u32 = 1;

fn read_exact_fmt(r: &mut impl Read, buf: &mut [u8], path: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            SgmmError::FormatError { path: path.into(), msg: "truncated checkpoint".into() }
        } else {
            SgmmError::io(format!("reading checkpoint {path}"), e)
        }
    })
}

fn check_frames(grid: &AnchorGrid, gt: &SaliencyMap) -> Result<()> {
    if grid.canvas_width != gt.width || grid.canvas_height != gt.height {
        return Err(SgmmError::ShapeMismatch(format!(
            "anchor grid canvas {}x{} vs target map {}x{}",
            grid.canvas_width, grid.canvas_height, gt.width, gt.height
        )));
    }
    Ok(())
}

/// Fit a free raw grid to one target map by SGD with momentum. Returns
/// the final grid and the loss trace, one entry per step plus a final
/// evaluation, so `trace.first()` is the loss at `init` and
/// `trace.last()` the loss at the returned parameters.
pub fn direct_fit(
    init: &RawParamMap,
    grid: &AnchorGrid,
    tcfg: &TransformConfig,
    gt: &SaliencyMap,
    opt: &OptConfig,
) -> Result<(RawParamMap, Vec<f64>)> {
    opt.check()?;
    init.check()?;
    if init.h != grid.h || init.w != grid.w {
        return Err(SgmmError::ShapeMismatch(format!(
            "raw grid {}x{} vs anchor grid {}x{}",
            init.w, init.h, grid.w, grid.h
        )));
    }
    check_frames(grid, gt)?;

    let mut raw = init.clone();
    let mut vel = vec![[0.0f64; 6]; raw.n_cells()];
    let mut trace = Vec::with_capacity(opt.epochs as usize + 1);
    for step in 0..opt.epochs as usize {
        let report = raw_grad(&raw, grid, tcfg, gt, DEFAULT_THRESHOLD_GT)?;
        check_divergence(step, report.loss)?;
        trace.push(report.loss);
        let d_raw = report.d_raw.expect("raw gradient requested");
        for (cell, (v, d)) in vel.iter_mut().zip(&d_raw.grid).enumerate() {
            for k in 0..6 {
                v[k] = opt.momentum * v[k] + d[k];
                raw.grid[cell][k] -= opt.lr * v[k];
            }
        }
        if raw.grid.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
            return Err(SgmmError::DivergenceDetected { step, loss: f64::INFINITY });
        }
    }
    let last = cc_loss(&transform_params(&raw, grid, tcfg)?, gt, DEFAULT_THRESHOLD_GT)?;
    check_divergence(opt.epochs as usize, last.loss)?;
    trace.push(last.loss);
    Ok((raw, trace))
}

/// Mean correlation loss of the predictor across a dataset of
/// (feature image, target map) pairs.
pub fn mean_loss(
    dataset: &[(SaliencyMap, SaliencyMap)],
    predictor: &TinyPredictor,
    grid: &AnchorGrid,
    tcfg: &TransformConfig,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(SgmmError::DegenerateInput("empty dataset".into()));
    }
    let mut sum = 0.0;
    for (feature, gt) in dataset {
        let gmm = predict(predictor, feature, grid, tcfg)?;
        sum += cc_loss(&gmm, gt, DEFAULT_THRESHOLD_GT)?.loss;
    }
    Ok(sum / dataset.len() as f64)
}

/// Train the predictor head on (feature image, target map) pairs with
/// minibatch SGD and momentum. The trace records one mean batch loss per
/// step; batches are reshuffled every epoch from the config seed, so runs
/// are reproducible bit-for-bit.
pub fn train_toy(
    dataset: &[(SaliencyMap, SaliencyMap)],
    predictor: TinyPredictor,
    grid: &AnchorGrid,
    tcfg: &TransformConfig,
    opt: &OptConfig,
) -> Result<(TinyPredictor, Vec<f64>)> {
    opt.check()?;
    if dataset.is_empty() {
        return Err(SgmmError::DegenerateInput("empty dataset".into()));
    }
    for (_, gt) in dataset {
        check_frames(grid, gt)?;
        let (lo, hi) = gt.values.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
        if lo == hi {
            return Err(SgmmError::ConstantMap { context: "a training target" });
        }
    }

    let mut p = predictor;
    let mut vel_flat = vec![0.0f64; TinyPredictor::N_PARAMS];
    let mut trace = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut step = 0usize;
    for _epoch in 0..opt.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(opt.batch as usize) {
            let mut grad = PredictorGrad::zeros();
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let (feature, gt) = &dataset[idx];
                let (raw, acts) = p.forward(feature, grid.h, grid.w)?;
                let report = raw_grad(&raw, grid, tcfg, gt, DEFAULT_THRESHOLD_GT)?;
                check_divergence(step, report.loss)?;
                batch_loss += report.loss;
                let d_raw = report.d_raw.expect("raw gradient requested");
                grad.add(&p.backward(feature, &acts, &d_raw));
            }
            let inv = 1.0 / chunk.len() as f64;
            grad.scale(inv);
            trace.push(batch_loss * inv);

            let mut flat = p.to_vec();
            let gflat = {
                let mut g = Vec::with_capacity(TinyPredictor::N_PARAMS);
                g.extend_from_slice(&grad.conv_w);
                g.extend_from_slice(&grad.conv_b);
                g.extend_from_slice(&grad.head_w);
                g.extend_from_slice(&grad.head_b);
                g
            };
            for ((x, v), d) in flat.iter_mut().zip(&mut vel_flat).zip(&gflat) {
                *v = opt.momentum * *v + d;
                *x -= opt.lr * *v;
            }
            if flat.iter().any(|v| !v.is_finite()) {
                return Err(SgmmError::DivergenceDetected { step, loss: f64::INFINITY });
            }
            p = TinyPredictor::from_flat_unchecked(&flat);
            step += 1;
        }
    }
    Ok((p, trace))
}

/// Forward pass plus parameter transform: the predictor's mixture for one
/// feature image, on the grid's canvas.
pub fn predict(
    predictor: &TinyPredictor,
    feature: &SaliencyMap,
    grid: &AnchorGrid,
    tcfg: &TransformConfig,
) -> Result<GmmParams> {
    let (raw, _) = predictor.forward(feature, grid.h, grid.w)?;
    let gmm = transform_params(&raw, grid, tcfg)?;
    ensure_valid_gmm(&gmm)?;
    Ok(gmm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{render_map, RenderConfig};
    use crate::transform::make_anchor_grid;
    use crate::types::{
        AnchorLayout, CovarianceMode, GaussianComponent, GmmParams, Normalize, RAW_SIGMA_U,
    };

    fn render_target(components: Vec<GaussianComponent>, width: u32, height: u32) -> SaliencyMap {
        let gmm = GmmParams { components, canvas_width: width, canvas_height: height };
        render_map(&gmm, &RenderConfig::new(width, height)).unwrap()
    }

    fn two_blob_target() -> SaliencyMap {
        render_target(
            vec![
                GaussianComponent { weight: 0.6, mean: [9.0, 10.0], cov: [2.5, 2.0, 0.0] },
                GaussianComponent { weight: 0.4, mean: [23.0, 21.0], cov: [2.0, 3.0, 0.0] },
            ],
            32,
            32,
        )
    }

    #[test]
    fn zero_learning_rate_returns_init() {
        let grid = make_anchor_grid(AnchorLayout::Square, 2, 2, 32, 32);
        let tcfg = TransformConfig::new(CovarianceMode::Diagonal);
        let gt = two_blob_target();
        let mut init = RawParamMap::zeros(2, 2);
        init.grid[1][RAW_SIGMA_U] = 3.0;
        let opt = OptConfig { lr: 0.0, epochs: 3, ..OptConfig::direct_fit_defaults() };
        let (out, trace) = direct_fit(&init, &grid, &tcfg, &gt, &opt).unwrap();
        assert_eq!(out, init);
        assert_eq!(trace.len(), 4);
        assert!(trace.iter().all(|l| (l - trace[0]).abs() < 1e-15));
    }

    #[test]
    fn direct_fit_descends_and_recovers_two_blobs() {
        let grid = make_anchor_grid(AnchorLayout::Square, 2, 2, 32, 32);
        let tcfg = TransformConfig::new(CovarianceMode::Diagonal);
        let gt = two_blob_target();
        let opt = OptConfig { lr: 0.05, epochs: 500, ..OptConfig::direct_fit_defaults() };
        let (raw, trace) = direct_fit(&RawParamMap::zeros(2, 2), &grid, &tcfg, &gt, &opt).unwrap();
        let final_cc = 1.0 - trace.last().unwrap();
        assert!(final_cc >= 0.99, "cc {final_cc}");
        assert!(trace.last().unwrap() < &trace[0]);
        let gmm = transform_params(&raw, &grid, &tcfg).unwrap();
        assert!(crate::types::validate_gmm(&gmm).is_empty());
    }

    #[test]
    fn single_component_fit_lands_on_the_peak() {
        let gt = render_target(
            vec![GaussianComponent { weight: 1.0, mean: [14.0, 17.0], cov: [25.0, 25.0, 0.0] }],
            32,
            32,
        );
        let grid = make_anchor_grid(AnchorLayout::None, 1, 1, 32, 32);
        let tcfg = TransformConfig::new(CovarianceMode::Spherical);
        let opt = OptConfig { lr: 0.05, epochs: 400, ..OptConfig::direct_fit_defaults() };
        let (raw, _) = direct_fit(&RawParamMap::zeros(1, 1), &grid, &tcfg, &gt, &opt).unwrap();
        let gmm = transform_params(&raw, &grid, &tcfg).unwrap();

        let peak = gt
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let (pu, pv) = crate::types::pixel_center(peak / 32, peak % 32);
        let [mu, mv] = gmm.components[0].mean;
        assert!(
            (mu - pu).abs() < 2.0 && (mv - pv).abs() < 2.0,
            "mean ({mu}, {mv}) vs peak ({pu}, {pv})"
        );
    }

    #[test]
    fn divergence_guard_trips_on_bad_losses() {
        assert!(check_divergence(7, 0.3).is_ok());
        assert!(matches!(
            check_divergence(7, f64::NAN),
            Err(SgmmError::DivergenceDetected { step: 7, .. })
        ));
        assert!(matches!(
            check_divergence(2, f64::INFINITY),
            Err(SgmmError::DivergenceDetected { step: 2, .. })
        ));
        assert!(matches!(
            check_divergence(0, 10.5),
            Err(SgmmError::DivergenceDetected { step: 0, .. })
        ));
    }

    #[test]
    fn zero_weight_predictor_is_constant_across_cells() {
        let mut p = TinyPredictor::zeros();
        p.head_b = [0.3, -0.1, 0.2, 1.0, 2.0, -0.5];
        let grid = make_anchor_grid(AnchorLayout::Square, 3, 3, 24, 24);
        let tcfg = TransformConfig::new(CovarianceMode::Full);
        let feature = two_blob_target();
        // 32x32 does not pool into 3x3
        assert!(matches!(
            predict(&p, &feature, &grid, &tcfg),
            Err(SgmmError::ShapeMismatch(_))
        ));

        let feature = SaliencyMap::from_values(
            (0..24 * 24).map(|i| (i % 7) as f64).collect(),
            24,
            24,
        )
        .unwrap();
        let (raw, _) = p.forward(&feature, 3, 3).unwrap();
        for cell in &raw.grid {
            assert_eq!(cell, &raw.grid[0]);
        }
        let gmm = predict(&p, &feature, &grid, &tcfg).unwrap();
        for comp in &gmm.components {
            assert!((comp.weight - 1.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn predict_is_deterministic() {
        let p = TinyPredictor::new(11);
        let grid = make_anchor_grid(AnchorLayout::Square, 4, 4, 32, 32);
        let tcfg = TransformConfig::new(CovarianceMode::Diagonal);
        let feature = two_blob_target();
        let a = predict(&p, &feature, &grid, &tcfg).unwrap();
        let b = predict(&p, &feature, &grid, &tcfg).unwrap();
        for (x, y) in a.components.iter().zip(&b.components) {
            assert_eq!(x.weight.to_bits(), y.weight.to_bits());
            assert_eq!(x.mean[0].to_bits(), y.mean[0].to_bits());
            assert_eq!(x.cov[0].to_bits(), y.cov[0].to_bits());
        }
    }

    #[test]
    fn predictor_backward_matches_finite_differences() {
        let p = {
            let mut p = TinyPredictor::new(5);
            // keep rectifier pre-activations away from the kink, and give
            // the head nonzero weights so gradient reaches the filters
            p.conv_b = [0.05; 8];
            p.head_b = [0.0, 0.0, 0.0, 2.0, 2.0, 0.0];
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            for w in &mut p.head_w {
                *w = rng.random_range(-0.3..0.3);
            }
            p
        };
        let grid = make_anchor_grid(AnchorLayout::Square, 2, 2, 12, 12);
        let tcfg = TransformConfig::new(CovarianceMode::Diagonal);
        let feature = SaliencyMap::from_values(
            (0..144).map(|i| ((i * 31 % 17) as f64) / 17.0).collect(),
            12,
            12,
        )
        .unwrap();
        let gt = render_target(
            vec![
                GaussianComponent { weight: 0.7, mean: [3.5, 4.0], cov: [5.0, 4.0, 0.0] },
                GaussianComponent { weight: 0.3, mean: [9.0, 8.5], cov: [4.0, 6.0, 0.0] },
            ],
            12,
            12,
        );

        let loss_at = |flat: &[f64]| -> f64 {
            let q = TinyPredictor::from_vec(flat).unwrap();
            let (raw, _) = q.forward(&feature, 2, 2).unwrap();
            let gmm = transform_params(&raw, &grid, &tcfg).unwrap();
            cc_loss(&gmm, &gt, DEFAULT_THRESHOLD_GT).unwrap().loss
        };

        let (raw, acts) = p.forward(&feature, 2, 2).unwrap();
        let report = raw_grad(&raw, &grid, &tcfg, &gt, DEFAULT_THRESHOLD_GT).unwrap();
        let analytic = p.backward(&feature, &acts, &report.d_raw.unwrap());
        let mut aflat = Vec::new();
        aflat.extend_from_slice(&analytic.conv_w);
        aflat.extend_from_slice(&analytic.conv_b);
        aflat.extend_from_slice(&analytic.head_w);
        aflat.extend_from_slice(&analytic.head_b);

        let base = p.to_vec();
        let mut checked = 0;
        for i in 0..TinyPredictor::N_PARAMS {
            let h = 1e-5 * base[i].abs().max(1.0);
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let denom = fd.abs().max(aflat[i].abs());
            if denom < 1e-7 {
                continue;
            }
            let rel = (fd - aflat[i]).abs() / denom;
            assert!(rel <= 1e-3, "param {i}: analytic {} vs fd {fd} (rel {rel})", aflat[i]);
            checked += 1;
        }
        assert!(checked > 150, "only {checked} parameters had usable gradient");
    }

    #[test]
    fn train_toy_descends_on_a_single_example() {
        let gt = two_blob_target();
        let feature = crate::render::normalize_map(&gt, Normalize::MaxToOne).unwrap();
        let dataset = vec![(feature, gt)];
        let grid = make_anchor_grid(AnchorLayout::Square, 2, 2, 32, 32);
        let tcfg = TransformConfig::new(CovarianceMode::Diagonal);
        let p0 = TinyPredictor::new(3);
        let before = mean_loss(&dataset, &p0, &grid, &tcfg).unwrap();
        let opt = OptConfig { lr: 0.02, epochs: 60, batch: 1, momentum: 0.9, seed: 3 };
        let (p1, trace) = train_toy(&dataset, p0, &grid, &tcfg, &opt).unwrap();
        let after = mean_loss(&dataset, &p1, &grid, &tcfg).unwrap();
        assert!(after < before, "loss went {before} -> {after}");
        assert_eq!(trace.len(), 60);
    }

    #[test]
    fn train_toy_rejects_constant_targets() {
        let flat = SaliencyMap::from_values(vec![1.0; 1024], 32, 32).unwrap();
        let feature = two_blob_target();
        let grid = make_anchor_grid(AnchorLayout::Square, 2, 2, 32, 32);
        let tcfg = TransformConfig::new(CovarianceMode::Diagonal);
        let opt = OptConfig::train_toy_defaults();
        assert!(matches!(
            train_toy(&[(feature, flat)], TinyPredictor::new(0), &grid, &tcfg, &opt),
            Err(SgmmError::ConstantMap { .. })
        ));
    }

    #[test]
    fn train_toy_is_seed_deterministic() {
        let mk = || {
            let gt = two_blob_target();
            let feature = crate::render::normalize_map(&gt, Normalize::MaxToOne).unwrap();
            let second = render_target(
                vec![GaussianComponent { weight: 1.0, mean: [20.0, 8.0], cov: [12.0, 12.0, 0.0] }],
                32,
                32,
            );
            let feat2 = crate::render::normalize_map(&second, Normalize::MaxToOne).unwrap();
            vec![(feature, gt), (feat2, second)]
        };
        let grid = make_anchor_grid(AnchorLayout::Square, 2, 2, 32, 32);
        let tcfg = TransformConfig::new(CovarianceMode::Diagonal);
        let opt = OptConfig { lr: 0.01, epochs: 5, batch: 1, momentum: 0.9, seed: 42 };
        let (pa, ta) = train_toy(&mk(), TinyPredictor::new(1), &grid, &tcfg, &opt).unwrap();
        let (pb, tb) = train_toy(&mk(), TinyPredictor::new(1), &grid, &tcfg, &opt).unwrap();
        assert_eq!(pa.to_vec(), pb.to_vec());
        let bits: Vec<u64> = ta.iter().map(|l| l.to_bits()).collect();
        let bits_b: Vec<u64> = tb.iter().map(|l| l.to_bits()).collect();
        assert_eq!(bits, bits_b);
    }

    #[test]
    fn checkpoint_round_trips_and_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.ckpt");
        let p = TinyPredictor::new(77);
        p.save(&path).unwrap();
        let q = TinyPredictor::load(&path).unwrap();
        assert_eq!(p.to_vec(), q.to_vec());
        let size = std::fs::metadata(&path).unwrap().len();
        assert_eq!(size, 8 + 4 + 262 * 8);

        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, b"NOTSGMM!rest").unwrap();
        assert!(matches!(TinyPredictor::load(&bad), Err(SgmmError::FormatError { .. })));

        let truncated = dir.path().join("short.ckpt");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(100);
        std::fs::write(&truncated, &bytes).unwrap();
        assert!(matches!(TinyPredictor::load(&truncated), Err(SgmmError::FormatError { .. })));

        let vbad = dir.path().join("v9.ckpt");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[8..12].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&vbad, &bytes).unwrap();
        assert!(matches!(TinyPredictor::load(&vbad), Err(SgmmError::FormatError { .. })));
    }

    #[test]
    fn parameter_count_is_stable() {
        assert_eq!(TinyPredictor::N_PARAMS, 262);
        assert_eq!(TinyPredictor::new(0).to_vec().len(), 262);
    }
}
