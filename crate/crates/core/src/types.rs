use serde::{Deserialize, Serialize};

use crate::error::{Result, SgmmError};

/// Continuous coordinates: u runs along the width (columns), v along the
/// height (rows). The center of the pixel in row i, column j is
/// (u, v) = (j + 0.5, i + 0.5).
#[inline]
pub fn pixel_center(row: usize, col: usize) -> (f64, f64) {
    (col as f64 + 0.5, row as f64 + 0.5)
}

/// A point is on a canvas when flooring it yields a valid pixel index.
#[inline]
pub fn in_canvas(u: f64, v: f64, width: u32, height: u32) -> bool {
    u >= 0.0 && u < width as f64 && v >= 0.0 && v < height as f64
}

/// Recorded gaze or click locations on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationPoints {
    pub points: Vec<[f64; 2]>,
    pub canvas_width: u32,
    pub canvas_height: u32,
}

impl FixationPoints {
    pub fn new(points: Vec<[f64; 2]>, canvas_width: u32, canvas_height: u32) -> Result<Self> {
        for (k, p) in points.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(SgmmError::DegenerateInput(format!(
                    "point {k} has a non-finite coordinate"
                )));
            }
            if !in_canvas(p[0], p[1], canvas_width, canvas_height) {
                return Err(SgmmError::DegenerateInput(format!(
                    "point {k} at ({}, {}) outside canvas {canvas_width}x{canvas_height}",
                    p[0], p[1]
                )));
            }
        }
        Ok(FixationPoints { points, canvas_width, canvas_height })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Dense row-major intensity grid, height x width.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub values: Vec<f64>,
    pub width: u32,
    pub height: u32,
}

impl SaliencyMap {
    pub fn zeros(width: u32, height: u32) -> Self {
        SaliencyMap { values: vec![0.0; width as usize * height as usize], width, height }
    }

    /// Checked constructor for externally produced data: shape must match
    /// and every value must be finite and nonnegative.
    pub fn from_values(values: Vec<f64>, width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SgmmError::ShapeMismatch(format!("empty canvas {width}x{height}")));
        }
        if values.len() != width as usize * height as usize {
            return Err(SgmmError::ShapeMismatch(format!(
                "{} values vs canvas {width}x{height}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(SgmmError::DegenerateInput(format!(
                "map value {} at index {k} is negative or non-finite",
                values[k]
            )));
        }
        Ok(SaliencyMap { values, width, height })
    }

    pub fn n_pixels(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width as usize + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.idx(row, col)]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }

    /// Sample at a continuous point by flooring to its pixel.
    pub fn at_point(&self, u: f64, v: f64) -> Option<f64> {
        if !in_canvas(u, v, self.width, self.height) {
            return None;
        }
        Some(self.get(v as usize, u as usize))
    }

    pub fn same_shape(&self, other: &SaliencyMap) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(SgmmError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// One bivariate Gaussian. `cov` stores (var_u, var_v, cov_uv) in pixels^2,
/// the free entries of the symmetric 2x2 covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub cov: [f64; 3],
}

impl GaussianComponent {
    pub fn det(&self) -> f64 {
        self.cov[0] * self.cov[1] - self.cov[2] * self.cov[2]
    }
}

/// A mixture in absolute canvas coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    pub components: Vec<GaussianComponent>,
    pub canvas_width: u32,
    pub canvas_height: u32,
}

impl GmmParams {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }
}

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Lists every invariant violation; the empty list means the mixture is
/// well formed. Validation itself never aborts.
pub fn validate_gmm(gmm: &GmmParams) -> Vec<String> {
    let mut violations = Vec::new();
    if gmm.components.is_empty() {
        violations.push("no components".to_string());
        return violations;
    }
    let mut sum = 0.0;
    for (i, c) in gmm.components.iter().enumerate() {
        if !c.weight.is_finite() || c.weight < 0.0 {
            violations.push(format!("component {i} weight {} not a nonnegative real", c.weight));
        }
        sum += c.weight;
        if c.mean.iter().any(|x| !x.is_finite()) {
            violations.push(format!("component {i} mean not finite"));
        }
        let pd = c.cov.iter().all(|x| x.is_finite())
            && c.cov[0] > 0.0
            && c.cov[1] > 0.0
            && c.det() > 0.0;
        if !pd {
            violations.push(format!("component {i} not positive definite"));
        }
    }
    if !((sum - 1.0).abs() <= WEIGHT_SUM_TOL) {
        violations.push(format!("weights sum {sum} ≠ 1"));
    }
    violations
}

/// `Err(InvalidMixture)` form of [`validate_gmm`] for operations whose
/// precondition is a well-formed mixture.
pub fn ensure_valid_gmm(gmm: &GmmParams) -> Result<()> {
    let violations = validate_gmm(gmm);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(SgmmError::InvalidMixture(violations.join("; ")))
    }
}

/// How each component's covariance entries are constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    /// One shared variance per component, zero correlation.
    Spherical,
    /// Independent axis variances, zero correlation.
    Diagonal,
    /// Both variances plus a bounded correlation term.
    Full,
}

/// Where component means may land: Square pins each component inside its
/// own grid cell; HorizontalOnly/VerticalOnly constrain one axis to a
/// central band and let the cells tile the other; None gives every
/// component the same centered reference cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorLayout {
    Square,
    HorizontalOnly,
    VerticalOnly,
    None,
}

/// Raw (unconstrained) parameter order inside a [`RawParamMap`] cell.
pub const RAW_PI: usize = 0;
pub const RAW_MU_U: usize = 1;
pub const RAW_MU_V: usize = 2;
pub const RAW_SIGMA_U: usize = 3;
pub const RAW_SIGMA_V: usize = 4;
pub const RAW_SIGMA_UV: usize = 5;

/// Unconstrained parameters on an H x W cell grid, one 6-vector per cell,
/// row-major. Transforming maps cell (i, j) to component i * w + j, so
/// component order is cell order. Doubles as gradient storage because a
/// gradient w.r.t. raw parameters has exactly this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct RawParamMap {
    pub h: u32,
    pub w: u32,
    pub grid: Vec<[f64; 6]>,
}

impl RawParamMap {
    pub fn zeros(h: u32, w: u32) -> Self {
        RawParamMap { h, w, grid: vec![[0.0; 6]; h as usize * w as usize] }
    }

    pub fn n_cells(&self) -> usize {
        self.h as usize * self.w as usize
    }

    pub fn check(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 {
            return Err(SgmmError::ShapeMismatch(format!(
                "raw grid {}x{} has no cells",
                self.h, self.w
            )));
        }
        if self.grid.len() != self.n_cells() {
            return Err(SgmmError::ShapeMismatch(format!(
                "{} raw cells vs grid {}x{}",
                self.grid.len(),
                self.h,
                self.w
            )));
        }
        if self.grid.iter().flatten().any(|x| !x.is_finite()) {
            return Err(SgmmError::DegenerateInput("raw parameter not finite".into()));
        }
        Ok(())
    }
}

/// Per-cell reference points (in cell units) plus the pixel size of one
/// cell; together they turn bounded offsets into absolute coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGrid {
    pub layout: AnchorLayout,
    pub h: u32,
    pub w: u32,
    pub canvas_width: u32,
    pub canvas_height: u32,
    /// One (u_a, v_a) per cell, row-major, in cell units.
    pub anchors: Vec<[f64; 2]>,
    /// (w_a, h_a): pixels per cell along width and height.
    pub cell_size: [f64; 2],
}

/// Map normalization applied after rendering or requested explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    None,
    SumToOne,
    MaxToOne,
}
