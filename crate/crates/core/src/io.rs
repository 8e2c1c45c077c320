//! File formats, synthetic dataset generation, and point subsampling.
//!
//! Three on-disk formats:
//! - fixation CSV: a `# width,height` header line, then one `u,v` row per
//!   point, full `f64` round-trip precision;
//! - map files, either binary PGM (P5, 16-bit, max-normalized, lossy,
//!   good for viewers) or a lossless raw dump (magic `SGMMMAPS`, u32
//!   width, u32 height, then little-endian f64 row-major);
//! - mixture TOML with a mandatory `version`, canvas size, and one
//!   `[[components]]` table per component.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgmmError};
use crate::render::{blur_fixations, RenderConfig};
use crate::types::{in_canvas, FixationPoints, GaussianComponent, GmmParams, SaliencyMap};

/// Blur width (pixels) that turns discrete fixations into dense ground
/// truth.
pub const GT_BLUR_SIGMA: f64 = 19.0;

pub fn load_fixation_points(path: &Path) -> Result<FixationPoints> {
    let pstr = path.display().to_string();
    let text = fs::read_to_string(path)
        .map_err(|e| SgmmError::io(format!("reading fixations {pstr}"), e))?;
    let parse_err = |line: usize, msg: String| SgmmError::ParseError {
        path: pstr.clone(),
        line,
        msg,
    };

    let mut canvas: Option<(u32, u32)> = None;
    let mut points = Vec::new();
    for (idx, rawline) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = rawline.trim();
        if line.is_empty() {
            continue;
        }
        if canvas.is_none() {
            let body = line
                .strip_prefix('#')
                .ok_or_else(|| parse_err(line_no, "expected `# width,height` header".into()))?;
            let (w, h) = body
                .split_once(',')
                .ok_or_else(|| parse_err(line_no, "header needs `width,height`".into()))?;
            let w: u32 = w.trim().parse().map_err(|e| parse_err(line_no, format!("width: {e}")))?;
            let h: u32 =
                h.trim().parse().map_err(|e| parse_err(line_no, format!("height: {e}")))?;
            if w == 0 || h == 0 {
                return Err(parse_err(line_no, format!("degenerate canvas {w}x{h}")));
            }
            canvas = Some((w, h));
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let (width, height) = canvas.unwrap();
        let (u, v) = line
            .split_once(',')
            .ok_or_else(|| parse_err(line_no, "expected `u,v`".into()))?;
        let u: f64 = u.trim().parse().map_err(|e| parse_err(line_no, format!("u: {e}")))?;
        let v: f64 = v.trim().parse().map_err(|e| parse_err(line_no, format!("v: {e}")))?;
        if !u.is_finite() || !v.is_finite() {
            return Err(parse_err(line_no, format!("non-finite point ({u}, {v})")));
        }
        if !in_canvas(u, v, width, height) {
            return Err(SgmmError::BoundsError { path: pstr, line: line_no, u, v, width, height });
        }
        points.push([u, v]);
    }
    let (width, height) =
        canvas.ok_or_else(|| parse_err(1, "empty file; expected `# width,height` header".into()))?;
    FixationPoints::new(points, width, height)
}

pub fn save_fixation_points(points: &FixationPoints, path: &Path) -> Result<()> {
    let ctx = || format!("writing fixations {}", path.display());
    let mut out = String::new();
    out.push_str(&format!("# {},{}\n", points.canvas_width, points.canvas_height));
    for p in &points.points {
        out.push_str(&format!("{},{}\n", p[0], p[1]));
    }
    fs::write(path, out).map_err(|e| SgmmError::io(ctx(), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    /// Binary P5, 16-bit big-endian samples, max-normalized. Lossy.
    Pgm,
    /// Lossless raw dump; round trips bit-exactly.
    F64Raw,
}

const MAP_MAGIC: &[u8; 8] = b"SGMMMAPS";
const PGM_MAXVAL: u32 = 65535;

pub fn save_map(map: &SaliencyMap, path: &Path, format: MapFormat) -> Result<()> {
    let ctx = || format!("writing map {}", path.display());
    let file = fs::File::create(path).map_err(|e| SgmmError::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    match format {
        MapFormat::Pgm => {
            write!(w, "P5\n{} {}\n{}\n", map.width, map.height, PGM_MAXVAL)
                .map_err(|e| SgmmError::io(ctx(), e))?;
            let max = map.max_value();
            let scale = if max > 0.0 { PGM_MAXVAL as f64 / max } else { 0.0 };
            for v in &map.values {
                let q = (v * scale).round().clamp(0.0, PGM_MAXVAL as f64) as u16;
                w.write_all(&q.to_be_bytes()).map_err(|e| SgmmError::io(ctx(), e))?;
            }
        }
        MapFormat::F64Raw => {
            w.write_all(MAP_MAGIC).map_err(|e| SgmmError::io(ctx(), e))?;
            w.write_all(&map.width.to_le_bytes()).map_err(|e| SgmmError::io(ctx(), e))?;
            w.write_all(&map.height.to_le_bytes()).map_err(|e| SgmmError::io(ctx(), e))?;
            for v in &map.values {
                w.write_all(&v.to_le_bytes()).map_err(|e| SgmmError::io(ctx(), e))?;
            }
        }
    }
    w.flush().map_err(|e| SgmmError::io(ctx(), e))
}

pub fn load_map(path: &Path, format: MapFormat) -> Result<SaliencyMap> {
    let pstr = path.display().to_string();
    let bytes =
        fs::read(path).map_err(|e| SgmmError::io(format!("reading map {pstr}"), e))?;
    let fmt_err =
        |msg: String| SgmmError::FormatError { path: pstr.clone(), msg };
    match format {
        MapFormat::Pgm => {
            let (width, height, maxval, data) = parse_pgm(&bytes, &fmt_err)?;
            let bytes_per = if maxval > 255 { 2 } else { 1 };
            let need = width as usize * height as usize * bytes_per;
            if data.len() < need {
                return Err(fmt_err(format!(
                    "pixel payload is {} bytes, need {need}",
                    data.len()
                )));
            }
            let values: Vec<f64> = if bytes_per == 2 {
                data[..need]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                    .collect()
            } else {
                data[..need].iter().map(|b| *b as f64).collect()
            };
            SaliencyMap::from_values(values, width, height)
                .map_err(|e| fmt_err(e.to_string()))
        }
        MapFormat::F64Raw => {
            if bytes.len() < 16 || &bytes[..8] != MAP_MAGIC {
                return Err(fmt_err("bad magic; not a raw map file".into()));
            }
            let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
            let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
            let n = width as usize * height as usize;
            if bytes.len() != 16 + n * 8 {
                return Err(fmt_err(format!(
                    "{} payload bytes for a {width}x{height} map, need {}",
                    bytes.len() - 16,
                    n * 8
                )));
            }
            let values: Vec<f64> = bytes[16..]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            SaliencyMap::from_values(values, width, height)
                .map_err(|e| fmt_err(e.to_string()))
        }
    }
}

/// Header: `P5`, whitespace/comment-separated width, height, maxval, one
/// whitespace byte, then samples.
fn parse_pgm(
    bytes: &[u8],
    fmt_err: &dyn Fn(String) -> SgmmError,
) -> Result<(u32, u32, u32, Vec<u8>)> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(fmt_err("not a binary PGM (missing P5)".into()));
    }
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in &mut fields {
        // skip whitespace and # comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(fmt_err("truncated PGM header".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        *field = text.parse().map_err(|e| fmt_err(format!("PGM header: {e}")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > PGM_MAXVAL {
        return Err(fmt_err(format!("unsupported PGM geometry {width}x{height}@{maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(fmt_err("PGM header not terminated by whitespace".into()));
    }
    pos += 1;
    Ok((width, height, maxval, bytes[pos..].to_vec()))
}

const GMM_FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GmmFile {
    version: u32,
    canvas_width: u32,
    canvas_height: u32,
    components: Vec<GaussianComponent>,
}

pub fn save_gmm(gmm: &GmmParams, path: &Path) -> Result<()> {
    crate::types::ensure_valid_gmm(gmm)?;
    let file = GmmFile {
        version: GMM_FILE_VERSION,
        canvas_width: gmm.canvas_width,
        canvas_height: gmm.canvas_height,
        components: gmm.components.clone(),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| SgmmError::FormatError {
        path: path.display().to_string(),
        msg: format!("serializing mixture: {e}"),
    })?;
    fs::write(path, text)
        .map_err(|e| SgmmError::io(format!("writing mixture {}", path.display()), e))
}

pub fn load_gmm(path: &Path) -> Result<GmmParams> {
    let pstr = path.display().to_string();
    let text = fs::read_to_string(path)
        .map_err(|e| SgmmError::io(format!("reading mixture {pstr}"), e))?;
    let file: GmmFile = toml::from_str(&text)
        .map_err(|e| SgmmError::FormatError { path: pstr.clone(), msg: e.to_string() })?;
    if file.version != GMM_FILE_VERSION {
        return Err(SgmmError::FormatError {
            path: pstr,
            msg: format!("unsupported mixture file version {}", file.version),
        });
    }
    let gmm = GmmParams {
        components: file.components,
        canvas_width: file.canvas_width,
        canvas_height: file.canvas_height,
    };
    crate::types::ensure_valid_gmm(&gmm)?;
    Ok(gmm)
}

/// Recipe for a synthetic fixation dataset: axis-aligned Gaussian
/// clusters with Dirichlet(1) weights, means inset 15% from the borders,
/// per-axis variances drawn from `cluster_var_range`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_images: u32,
    /// (width, height) in pixels.
    pub canvas: (u32, u32),
    /// Inclusive cluster-count range.
    pub modes_range: (u32, u32),
    pub points_per_image: u32,
    /// Inclusive per-axis variance range, pixels squared.
    pub cluster_var_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_images: 50,
            canvas: (640, 480),
            modes_range: (1, 5),
            points_per_image: 460,
            cluster_var_range: (1600.0, 3600.0),
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        let ok = self.n_images >= 1
            && self.canvas.0 >= 1
            && self.canvas.1 >= 1
            && self.modes_range.0 >= 1
            && self.modes_range.0 <= self.modes_range.1
            && self.points_per_image >= 1
            && self.cluster_var_range.0 > 0.0
            && self.cluster_var_range.0 <= self.cluster_var_range.1
            && self.cluster_var_range.1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SgmmError::DegenerateInput(format!("synth config {self:?}")))
        }
    }
}

/// One generated image: the sampled points, their blurred ground truth,
/// and the mixture that produced them.
#[derive(Debug, Clone)]
pub struct SynthImage {
    pub points: FixationPoints,
    pub gt: SaliencyMap,
    pub truth: GmmParams,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent per-image stream: images keep their content when
/// `n_images` changes.
fn image_rng(seed: u64, index: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index as u64)))
}

pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<SynthImage>> {
    cfg.check()?;
    let (width, height) = cfg.canvas;
    let (wf, hf) = (width as f64, height as f64);
    let margin = 0.15;
    let mut out = Vec::with_capacity(cfg.n_images as usize);
    for i in 0..cfg.n_images {
        let mut rng = image_rng(cfg.seed, i);
        let modes = rng.random_range(cfg.modes_range.0..=cfg.modes_range.1) as usize;

        let mut weights: Vec<f64> = (0..modes)
            .map(|_| -rng.random_range(1e-12..1.0f64).ln())
            .collect();
        let wsum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= wsum;
        }

        let components: Vec<GaussianComponent> = weights
            .iter()
            .map(|&weight| {
                let mean = [
                    rng.random_range(margin * wf..(1.0 - margin) * wf),
                    rng.random_range(margin * hf..(1.0 - margin) * hf),
                ];
                let cov = [
                    rng.random_range(cfg.cluster_var_range.0..=cfg.cluster_var_range.1),
                    rng.random_range(cfg.cluster_var_range.0..=cfg.cluster_var_range.1),
                    0.0,
                ];
                GaussianComponent { weight, mean, cov }
            })
            .collect();

        let mut cumulative = Vec::with_capacity(modes);
        let mut acc = 0.0;
        for w in &weights {
            acc += w;
            cumulative.push(acc);
        }
        let pts: Vec<[f64; 2]> = (0..cfg.points_per_image)
            .map(|_| {
                let r = rng.random_range(0.0..1.0f64);
                let k = cumulative.iter().position(|c| r < *c).unwrap_or(modes - 1);
                let comp = &components[k];
                let u = comp.mean[0]
                    + rng.sample::<f64, _>(rand_distr::StandardNormal) * comp.cov[0].sqrt();
                let v = comp.mean[1]
                    + rng.sample::<f64, _>(rand_distr::StandardNormal) * comp.cov[1].sqrt();
                // clip into the canvas, keeping the half-open convention
                [u.clamp(0.0, wf - 1e-9), v.clamp(0.0, hf - 1e-9)]
            })
            .collect();
        let points = FixationPoints::new(pts, width, height)?;
        let gt = blur_fixations(&points, GT_BLUR_SIGMA, &RenderConfig::new(width, height))?;
        let truth = GmmParams { components, canvas_width: width, canvas_height: height };
        out.push(SynthImage { points, gt, truth });
    }
    Ok(out)
}

/// Uniform sample without replacement of ⌈ratio · N⌉ points, original
/// order preserved.
pub fn subsample_points(
    points: &FixationPoints,
    ratio: f64,
    seed: u64,
) -> Result<FixationPoints> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(SgmmError::DegenerateInput(format!("subsample ratio {ratio}")));
    }
    let n = points.len();
    let keep = ((ratio * n as f64).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    idx.sort_unstable();
    let sampled: Vec<[f64; 2]> = idx.iter().map(|&i| points.points[i]).collect();
    FixationPoints::new(sampled, points.canvas_width, points.canvas_height)
}
