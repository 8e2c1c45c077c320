//! One function per subcommand. Batch-capable commands fan out over
//! rayon and collect results in input order, so output is deterministic
//! regardless of thread count.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use sgmm_core::io::{
    load_fixation_points, load_gmm, load_map, save_fixation_points, save_gmm, save_map,
    subsample_points, synth_dataset, MapFormat, SynthConfig,
};
use sgmm_core::metrics::{self, AucVariant, MetricConfig};
use sgmm_core::render::{blur_fixations, render_map, RenderConfig};
use sgmm_core::trainer::{self, OptConfig, TinyPredictor};
use sgmm_core::transform::{make_anchor_grid, transform_params, TransformConfig};
use sgmm_core::{FixationPoints, Normalize, RawParamMap, Result, SaliencyMap, SgmmError};

use crate::files::{ensure_dir, image_id, inputs, list_suffix, map_format, require_out};
use crate::{
    BlurArgs, DirectFitArgs, EvalArgs, FitArgs, MetricArg, PredictArgs, RenderArgs,
    SubsampleArgs, SynthArgs, TrainToyArgs,
};

pub fn synth(args: &SynthArgs, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let dir = require_out(out)?;
    ensure_dir(dir)?;
    let cfg = SynthConfig {
        n_images: args.images,
        canvas: args.canvas,
        modes_range: args.modes,
        points_per_image: args.points,
        cluster_var_range: args.var_range,
        seed,
    };
    let images = synth_dataset(&cfg)?;
    for (i, img) in images.iter().enumerate() {
        let id = format!("{i:04}");
        save_fixation_points(&img.points, &dir.join(format!("{id}.points.csv")))?;
        save_map(&img.gt, &dir.join(format!("{id}.gt.raw")), MapFormat::F64Raw)?;
        save_gmm(&img.truth, &dir.join(format!("{id}.truth.toml")))?;
    }
    info!("wrote {} images to {}", images.len(), dir.display());
    Ok(())
}

pub fn fit(args: &FitArgs, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let em = sgmm_core::gmm_fit::EmConfig { seed, ..Default::default() };
    let mode = args.cov.into();
    let fit_one = |input: &Path, target: &Path| -> Result<()> {
        let points = load_fixation_points(input)?;
        let gmm = sgmm_core::gmm_fit::fit_gmm(&points, args.components, mode, &em)?;
        save_gmm(&gmm, target)
    };
    if args.input.is_dir() {
        let dir = require_out(out)?;
        ensure_dir(dir)?;
        let files = list_suffix(&args.input, ".points.csv")?;
        files
            .par_iter()
            .map(|f| fit_one(f, &dir.join(format!("{}.gmm.toml", image_id(f)))))
            .collect::<Result<Vec<()>>>()?;
        info!("fit {} point sets", files.len());
        Ok(())
    } else {
        fit_one(&args.input, require_out(out)?)
    }
}

pub fn render(args: &RenderArgs, out: &Option<PathBuf>) -> Result<()> {
    if !(args.blur >= 0.0 && args.blur.is_finite()) {
        return Err(SgmmError::DegenerateInput(format!("blur sigma {}", args.blur)));
    }
    let render_one = |input: &Path, target: &Path, format: MapFormat| -> Result<()> {
        let mut gmm = load_gmm(input)?;
        // Convolving a Gaussian mixture with an isotropic Gaussian is
        // exactly a +sigma^2 shift of every diagonal covariance entry.
        for c in &mut gmm.components {
            c.cov[0] += args.blur * args.blur;
            c.cov[1] += args.blur * args.blur;
        }
        let cfg = RenderConfig::new(gmm.canvas_width, gmm.canvas_height)
            .with_threshold(args.gt_threshold);
        save_map(&render_map(&gmm, &cfg)?, target, format)
    };
    if args.input.is_dir() {
        let dir = require_out(out)?;
        ensure_dir(dir)?;
        let format = args.format.map_or(MapFormat::F64Raw, Into::into);
        let ext = if format == MapFormat::Pgm { "pgm" } else { "raw" };
        let files = list_suffix(&args.input, ".toml")?;
        files
            .par_iter()
            .map(|f| render_one(f, &dir.join(format!("{}.pred.{ext}", image_id(f))), format))
            .collect::<Result<Vec<()>>>()?;
        info!("rendered {} mixtures", files.len());
        Ok(())
    } else {
        let target = require_out(out)?;
        let format = args.format.map_or_else(|| map_format(target), Into::into);
        render_one(&args.input, target, format)
    }
}

pub fn blur(args: &BlurArgs, out: &Option<PathBuf>) -> Result<()> {
    let target = require_out(out)?;
    let points = load_fixation_points(&args.input)?;
    let cfg = RenderConfig::new(points.canvas_width, points.canvas_height);
    let map = blur_fixations(&points, args.sigma, &cfg)?;
    save_map(&map, target, map_format(target))
}

pub fn direct_fit(args: &DirectFitArgs, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let gt = load_map(&args.input, map_format(&args.input))?;
    let (gw, gh) = args.grid;
    let grid = make_anchor_grid(args.layout.into(), gh, gw, gt.width, gt.height);
    let tcfg = TransformConfig::new(args.cov.into());
    let opt = OptConfig { lr: args.lr, epochs: args.steps, seed, ..OptConfig::direct_fit_defaults() };
    let (raw, trace) = trainer::direct_fit(&RawParamMap::zeros(gh, gw), &grid, &tcfg, &gt, &opt)?;
    save_gmm(&transform_params(&raw, &grid, &tcfg)?, require_out(out)?)?;
    if let Some(path) = &args.trace {
        write_trace(path, &trace)?;
    }
    let last = trace.last().copied().unwrap_or(f64::NAN);
    println!("final loss {last:.6} cc {:.6}", 1.0 - last);
    Ok(())
}

pub fn train_toy(args: &TrainToyArgs, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let target = require_out(out)?;
    let files = list_suffix(&args.data, ".gt.raw")?;
    let dataset: Vec<(SaliencyMap, SaliencyMap)> = files
        .iter()
        .map(|f| {
            let gt = load_map(f, MapFormat::F64Raw)?;
            let feature = sgmm_core::render::normalize_map(&gt, Normalize::MaxToOne)?;
            Ok((feature, gt))
        })
        .collect::<Result<_>>()?;
    let (gw, gh) = args.grid;
    let first = &dataset[0].1;
    let grid = make_anchor_grid(args.layout.into(), gh, gw, first.width, first.height);
    let tcfg = TransformConfig::new(args.cov.into());
    let opt = OptConfig {
        lr: args.lr,
        epochs: args.epochs,
        batch: args.batch,
        seed,
        ..OptConfig::train_toy_defaults()
    };
    let (trained, trace) = trainer::train_toy(&dataset, TinyPredictor::new(seed), &grid, &tcfg, &opt)?;
    trained.save(target)?;
    println!("final mean loss {:.6}", trace.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

pub fn predict(args: &PredictArgs, out: &Option<PathBuf>) -> Result<()> {
    let predictor = TinyPredictor::load(&args.checkpoint)?;
    let feature = load_map(&args.input, map_format(&args.input))?;
    let (gw, gh) = args.grid;
    let grid = make_anchor_grid(args.layout.into(), gh, gw, feature.width, feature.height);
    let tcfg = TransformConfig::new(args.cov.into());
    let gmm = trainer::predict(&predictor, &feature, &grid, &tcfg)?;
    save_gmm(&gmm, require_out(out)?)
}

#[derive(Serialize)]
struct Record {
    image: String,
    metric: &'static str,
    value: f64,
    config_hash: String,
}

/// Everything that can change a metric value, hashed so downstream
/// tooling can tell two evaluation sweeps apart.
#[derive(Serialize)]
struct EvalFingerprint {
    metrics: Vec<&'static str>,
    kl_eps: f64,
    emd_max_side: u32,
    auc_splits: u32,
    seed: u64,
    negatives: bool,
}

pub fn evaluate(args: &EvalArgs, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let metrics_list = args
        .metrics
        .clone()
        .unwrap_or_else(|| vec![MetricArg::Cc, MetricArg::Sim, MetricArg::Kl]);
    let preds = inputs(&args.pred, ".pred.raw")?;
    let gts = args.gt.as_ref().map(|p| inputs(p, ".gt.raw")).transpose()?;
    let ptss = args.points.as_ref().map(|p| inputs(p, ".points.csv")).transpose()?;
    for set in [&gts, &ptss].into_iter().flatten() {
        if set.len() != preds.len() {
            return Err(SgmmError::DegenerateInput(format!(
                "{} predictions but {} reference files",
                preds.len(),
                set.len()
            )));
        }
    }
    for m in &metrics_list {
        if m.needs_gt() && gts.is_none() {
            return Err(SgmmError::DegenerateInput(format!("{} requires --gt", m.name())));
        }
        if m.needs_points() && ptss.is_none() {
            return Err(SgmmError::DegenerateInput(format!("{} requires --points", m.name())));
        }
    }
    let negatives = match &args.negatives {
        Some(p) => Some(load_fixation_points(p)?),
        None if metrics_list.contains(&MetricArg::Sauc) => {
            return Err(SgmmError::DegenerateInput("sauc requires --negatives".into()))
        }
        None => None,
    };

    let mcfg = MetricConfig { seed, ..Default::default() };
    let hash = fingerprint_hash(&metrics_list, &mcfg, negatives.is_some());

    let records: Vec<Vec<Record>> = (0..preds.len())
        .into_par_iter()
        .map(|i| {
            let pred = load_map(&preds[i], map_format(&preds[i]))?;
            let gt = gts.as_ref().map(|g| load_map(&g[i], map_format(&g[i]))).transpose()?;
            let pts = ptss.as_ref().map(|p| load_fixation_points(&p[i])).transpose()?;
            let id = image_id(&preds[i]);
            metrics_list
                .iter()
                .map(|&m| {
                    let value =
                        eval_one(m, &pred, gt.as_ref(), pts.as_ref(), negatives.as_ref(), &mcfg)?;
                    Ok(Record {
                        image: id.clone(),
                        metric: m.name(),
                        value,
                        config_hash: hash.clone(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut sink: Box<dyn Write> = match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path)
                .map_err(|e| SgmmError::io(format!("creating {}", path.display()), e))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    for rec in records.iter().flatten() {
        let line = serde_json::to_string(rec).expect("plain fields serialize");
        writeln!(sink, "{line}").map_err(|e| SgmmError::io("writing records", e))?;
    }
    sink.flush().map_err(|e| SgmmError::io("writing records", e))?;
    info!("evaluated {} images x {} metrics", preds.len(), metrics_list.len());
    Ok(())
}

fn fingerprint_hash(metrics_list: &[MetricArg], mcfg: &MetricConfig, negatives: bool) -> String {
    let fp = EvalFingerprint {
        metrics: metrics_list.iter().map(|m| m.name()).collect(),
        kl_eps: mcfg.kl_eps,
        emd_max_side: mcfg.emd_max_side,
        auc_splits: mcfg.auc_splits,
        seed: mcfg.seed,
        negatives,
    };
    let digest = Sha256::digest(serde_json::to_vec(&fp).expect("plain fields serialize"));
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn eval_one(
    m: MetricArg,
    pred: &SaliencyMap,
    gt: Option<&SaliencyMap>,
    pts: Option<&FixationPoints>,
    negatives: Option<&FixationPoints>,
    mcfg: &MetricConfig,
) -> Result<f64> {
    let gt = || gt.expect("presence validated before the batch");
    let pts = || pts.expect("presence validated before the batch");
    match m {
        MetricArg::Cc => metrics::cc(pred, gt()),
        MetricArg::Sim => metrics::sim(pred, gt()),
        MetricArg::Kl => metrics::kl_div(pred, gt(), mcfg),
        MetricArg::Emd => metrics::emd(pred, gt(), mcfg),
        MetricArg::Nss => metrics::nss(pred, pts()),
        MetricArg::AucJudd => metrics::auc(pred, pts(), AucVariant::Judd, None, mcfg),
        MetricArg::AucBorji => metrics::auc(pred, pts(), AucVariant::Borji, None, mcfg),
        MetricArg::Sauc => metrics::auc(pred, pts(), AucVariant::Shuffled, negatives, mcfg),
        MetricArg::Ig => metrics::info_gain(pred, pts(), mcfg),
    }
}

pub fn subsample(args: &SubsampleArgs, seed: u64, out: &Option<PathBuf>) -> Result<()> {
    let target = require_out(out)?;
    let points = load_fixation_points(&args.input)?;
    let kept = subsample_points(&points, args.ratio, seed)?;
    info!("kept {} of {} points", kept.len(), points.len());
    save_fixation_points(&kept, target)
}

fn write_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut text = String::with_capacity(trace.len() * 12);
    for l in trace {
        text.push_str(&format!("{l}\n"));
    }
    std::fs::write(path, text)
        .map_err(|e| SgmmError::io(format!("writing trace {}", path.display()), e))
}
