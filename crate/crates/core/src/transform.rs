//! Maps unconstrained per-cell parameters to valid mixture parameters.
//!
//! Means: μ_u = (sigmoid(μ̂_u) + u_a) · w_a (and v analogously), so each
//! mean is a bounded offset from its cell's anchor. Weights: softmax over
//! all cells. Variances: var_floor + softplus_β(σ̂), which keeps every
//! covariance positive definite for any finite input; Full mode adds a
//! correlation ρ = corr_bound · tanh(σ̂_uv) with |ρ| < 1.

use crate::error::{Result, SgmmError};
use crate::types::{
    AnchorGrid, AnchorLayout, CovarianceMode, GaussianComponent, GmmParams, RawParamMap,
    RAW_MU_U, RAW_MU_V, RAW_PI, RAW_SIGMA_U, RAW_SIGMA_UV, RAW_SIGMA_V,
};

/// Activation scales and floors for the covariance channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformConfig {
    pub mode: CovarianceMode,
    /// Softplus scale β.
    pub var_activation: f64,
    /// Added to every activated variance, in pixels².
    pub var_floor: f64,
    /// Correlation magnitude bound ρ_max in (0, 1); Full mode only.
    pub corr_bound: f64,
}

impl TransformConfig {
    pub fn new(mode: CovarianceMode) -> Self {
        TransformConfig { mode, var_activation: 1.0, var_floor: 1.0, corr_bound: 0.99 }
    }
}

/// Sigmoid outputs are clamped this far away from {0, 1} so that means
/// stay strictly inside the canvas even for arbitrarily large raw inputs.
const SIGMOID_CLAMP: f64 = 1e-9;

/// Shifted softmax exponents are floored here so every weight stays
/// strictly positive (exp(-700) is still a normal f64).
const SOFTMAX_EXP_FLOOR: f64 = -700.0;

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
}

/// ln(1 + exp(βx)) / β without overflow on either tail.
#[inline]
pub(crate) fn softplus(x: f64, beta: f64) -> f64 {
    let t = beta * x;
    if t > 30.0 {
        x + (-t).exp().ln_1p() / beta
    } else {
        t.exp().ln_1p() / beta
    }
}

/// d softplus(x)/dx = sigmoid(βx), unclamped.
#[inline]
fn softplus_deriv(x: f64, beta: f64) -> f64 {
    let t = beta * x;
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Builds the reference grid for one of the four layouts. All layouts tile
/// the canvas into H x W cells of (canvas_width/W, canvas_height/H) pixels
/// and differ only in which axes the anchors actually vary along: the
/// constrained axis of HorizontalOnly/VerticalOnly (and both axes of None)
/// park every anchor at the central cell position (W/2 - 0.5, H/2 - 0.5).
pub fn make_anchor_grid(
    layout: AnchorLayout,
    h: u32,
    w: u32,
    canvas_width: u32,
    canvas_height: u32,
) -> AnchorGrid {
    assert!(h >= 1 && w >= 1, "anchor grid needs at least one cell");
    let center_u = w as f64 / 2.0 - 0.5;
    let center_v = h as f64 / 2.0 - 0.5;
    let mut anchors = Vec::with_capacity(h as usize * w as usize);
    for i in 0..h {
        for j in 0..w {
            let anchor = match layout {
                AnchorLayout::Square => [j as f64, i as f64],
                AnchorLayout::HorizontalOnly => [j as f64, center_v],
                AnchorLayout::VerticalOnly => [center_u, i as f64],
                AnchorLayout::None => [center_u, center_v],
            };
            anchors.push(anchor);
        }
    }
    AnchorGrid {
        layout,
        h,
        w,
        canvas_width,
        canvas_height,
        anchors,
        cell_size: [canvas_width as f64 / w as f64, canvas_height as f64 / h as f64],
    }
}

fn check_shapes(raw: &RawParamMap, grid: &AnchorGrid) -> Result<()> {
    raw.check()?;
    if raw.h != grid.h || raw.w != grid.w {
        return Err(SgmmError::ShapeMismatch(format!(
            "raw grid {}x{} vs anchor grid {}x{}",
            raw.h, raw.w, grid.h, grid.w
        )));
    }
    Ok(())
}

/// Softmax over all cells with max-shift and a floored exponent; returns
/// strictly positive weights summing to 1.
fn softmax_weights(raw: &RawParamMap) -> Vec<f64> {
    let max = raw.grid.iter().map(|c| c[RAW_PI]).fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> =
        raw.grid.iter().map(|c| (c[RAW_PI] - max).max(SOFTMAX_EXP_FLOOR).exp()).collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights
}

fn component_cov(cell: &[f64; 6], cfg: &TransformConfig) -> [f64; 3] {
    let beta = cfg.var_activation;
    match cfg.mode {
        CovarianceMode::Spherical => {
            let v = cfg.var_floor + softplus(cell[RAW_SIGMA_U], beta);
            [v, v, 0.0]
        }
        CovarianceMode::Diagonal => {
            let vu = cfg.var_floor + softplus(cell[RAW_SIGMA_U], beta);
            let vv = cfg.var_floor + softplus(cell[RAW_SIGMA_V], beta);
            [vu, vv, 0.0]
        }
        CovarianceMode::Full => {
            let vu = cfg.var_floor + softplus(cell[RAW_SIGMA_U], beta);
            let vv = cfg.var_floor + softplus(cell[RAW_SIGMA_V], beta);
            let rho = cfg.corr_bound * cell[RAW_SIGMA_UV].tanh();
            // √vu·√vv, not √(vu·vv): the product can overflow where the
            // factored form stays finite, and |ρ| < 1 keeps the entry
            // below both variances' geometric mean.
            [vu, vv, rho * vu.sqrt() * vv.sqrt()]
        }
    }
}

/// Raw cell grid -> valid mixture. Component order is cell row-major order.
pub fn transform_params(
    raw: &RawParamMap,
    grid: &AnchorGrid,
    cfg: &TransformConfig,
) -> Result<GmmParams> {
    check_shapes(raw, grid)?;
    let weights = softmax_weights(raw);
    let [w_a, h_a] = grid.cell_size;
    let components = raw
        .grid
        .iter()
        .zip(&grid.anchors)
        .zip(weights)
        .map(|((cell, anchor), weight)| GaussianComponent {
            weight,
            mean: [
                (sigmoid(cell[RAW_MU_U]) + anchor[0]) * w_a,
                (sigmoid(cell[RAW_MU_V]) + anchor[1]) * h_a,
            ],
            cov: component_cov(cell, cfg),
        })
        .collect();
    let out = GmmParams {
        components,
        canvas_width: grid.canvas_width,
        canvas_height: grid.canvas_height,
    };
    debug_assert!(crate::types::validate_gmm(&out).is_empty());
    Ok(out)
}

/// Pulls a gradient w.r.t. transformed parameters back to raw parameters.
/// `d_theta[c]` holds (∂L/∂π, ∂L/∂μ_u, ∂L/∂μ_v, ∂L/∂var_u, ∂L/∂var_v,
/// ∂L/∂cov_uv) for component c; the result has the raw grid's shape.
/// Spherical mode routes both variance partials into σ̂_u and leaves the
/// unused σ̂_v, σ̂_uv entries exactly zero.
pub fn transform_vjp(
    raw: &RawParamMap,
    grid: &AnchorGrid,
    cfg: &TransformConfig,
    d_theta: &[[f64; 6]],
) -> Result<RawParamMap> {
    check_shapes(raw, grid)?;
    if d_theta.len() != raw.n_cells() {
        return Err(SgmmError::ShapeMismatch(format!(
            "{} gradient entries vs {} cells",
            d_theta.len(),
            raw.n_cells()
        )));
    }
    let weights = softmax_weights(raw);
    let [w_a, h_a] = grid.cell_size;
    let beta = cfg.var_activation;
    let inner: f64 = d_theta.iter().zip(&weights).map(|(d, pi)| d[0] * pi).sum();

    let mut out = RawParamMap::zeros(raw.h, raw.w);
    for c in 0..raw.n_cells() {
        let cell = &raw.grid[c];
        let d = &d_theta[c];
        let g = &mut out.grid[c];

        g[RAW_PI] = weights[c] * (d[0] - inner);

        let su = sigmoid(cell[RAW_MU_U]);
        let sv = sigmoid(cell[RAW_MU_V]);
        g[RAW_MU_U] = d[1] * w_a * su * (1.0 - su);
        g[RAW_MU_V] = d[2] * h_a * sv * (1.0 - sv);

        match cfg.mode {
            CovarianceMode::Spherical => {
                g[RAW_SIGMA_U] = (d[3] + d[4]) * softplus_deriv(cell[RAW_SIGMA_U], beta);
            }
            CovarianceMode::Diagonal => {
                g[RAW_SIGMA_U] = d[3] * softplus_deriv(cell[RAW_SIGMA_U], beta);
                g[RAW_SIGMA_V] = d[4] * softplus_deriv(cell[RAW_SIGMA_V], beta);
            }
            CovarianceMode::Full => {
                let vu = cfg.var_floor + softplus(cell[RAW_SIGMA_U], beta);
                let vv = cfg.var_floor + softplus(cell[RAW_SIGMA_V], beta);
                let t = cell[RAW_SIGMA_UV].tanh();
                let cov = cfg.corr_bound * t * vu.sqrt() * vv.sqrt();
                g[RAW_SIGMA_U] =
                    (d[3] + d[5] * cov / (2.0 * vu)) * softplus_deriv(cell[RAW_SIGMA_U], beta);
                g[RAW_SIGMA_V] =
                    (d[4] + d[5] * cov / (2.0 * vv)) * softplus_deriv(cell[RAW_SIGMA_V], beta);
                g[RAW_SIGMA_UV] =
                    d[5] * vu.sqrt() * vv.sqrt() * cfg.corr_bound * (1.0 - t * t);
            }
        }
    }
    Ok(out)
}
