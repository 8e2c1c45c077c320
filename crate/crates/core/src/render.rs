//! Dense map reconstruction from mixture parameters and blurred
//! ground-truth construction from fixation points.
//!
//! A component's density at a point p is
//!   (1 / (2π √|Σ|)) · exp(−½ (p−μ)ᵀ Σ⁻¹ (p−μ))
//! and a map is the weight-thresholded mixture of component densities
//! evaluated at pixel centers: cells contribute only when their mixing
//! weight exceeds threshold_gt / C.

use crate::error::{Result, SgmmError};
use crate::types::{
    ensure_valid_gmm, pixel_center, FixationPoints, GaussianComponent, GmmParams, Normalize,
    SaliencyMap,
};

/// Output grid, component-selection threshold, and post-normalization for
/// rendering operations.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    /// G_t: a component contributes iff its weight > threshold_gt / C.
    pub threshold_gt: f64,
    pub normalize: Normalize,
}

/// Default G_t for the selection gate.
pub const DEFAULT_THRESHOLD_GT: f64 = 0.2;

impl RenderConfig {
    pub fn new(width: u32, height: u32) -> Self {
        RenderConfig {
            width,
            height,
            threshold_gt: DEFAULT_THRESHOLD_GT,
            normalize: Normalize::None,
        }
    }

    pub fn with_threshold(mut self, threshold_gt: f64) -> Self {
        self.threshold_gt = threshold_gt;
        self
    }

    pub fn with_normalize(mut self, normalize: Normalize) -> Self {
        self.normalize = normalize;
        self
    }
}

/// Pixels farther than this many Mahalanobis units from a component's mean
/// are skipped during rendering; the density there is below 1e-8 of peak.
pub const MAHALANOBIS_CUTOFF: f64 = 6.0;

/// Lower Cholesky factor of a 2x2 covariance, plus derived quantities.
/// Factorization fails exactly when the matrix is not positive definite.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Chol2 {
    pub l11: f64,
    pub l21: f64,
    pub l22: f64,
    /// 1 / (2π √|Σ|)
    pub norm: f64,
}

impl Chol2 {
    pub fn new(cov: [f64; 3]) -> Option<Chol2> {
        let [var_u, var_v, cov_uv] = cov;
        if !(var_u > 0.0) {
            return None;
        }
        let l11 = var_u.sqrt();
        let l21 = cov_uv / l11;
        let d = var_v - l21 * l21;
        if !(d > 0.0) {
            return None;
        }
        let l22 = d.sqrt();
        let norm = 1.0 / (std::f64::consts::TAU * l11 * l22);
        Some(Chol2 { l11, l21, l22, norm })
    }

    /// Squared Mahalanobis distance of the offset (du, dv).
    #[inline]
    pub fn mahalanobis_sq(&self, du: f64, dv: f64) -> f64 {
        let y1 = du / self.l11;
        let y2 = (dv - self.l21 * y1) / self.l22;
        y1 * y1 + y2 * y2
    }

    #[inline]
    pub fn density(&self, du: f64, dv: f64) -> f64 {
        self.norm * (-0.5 * self.mahalanobis_sq(du, dv)).exp()
    }
}

/// Density of one component at a continuous point.
pub fn eval_component(p: (f64, f64), comp: &GaussianComponent) -> Result<f64> {
    let chol = Chol2::new(comp.cov)
        .ok_or(SgmmError::NonPositiveDefinite { index: 0, det: comp.det() })?;
    Ok(chol.density(p.0 - comp.mean[0], p.1 - comp.mean[1]))
}

/// Indices of components passing the weight threshold, in component order.
pub fn selected_components(gmm: &GmmParams, threshold_gt: f64) -> Result<Vec<usize>> {
    let c = gmm.n_components();
    let threshold = threshold_gt / c as f64;
    let selected: Vec<usize> = (0..c).filter(|&i| gmm.components[i].weight > threshold).collect();
    if selected.is_empty() {
        return Err(SgmmError::AllComponentsFiltered { total: c, threshold });
    }
    Ok(selected)
}

/// Accumulates `weight ×` the component density into `map`, observing an
/// optional Mahalanobis cutoff. Shared by rendering and the loss gradient
/// so the value and gradient paths see identical pixel sets.
pub(crate) fn accumulate_component(
    map: &mut SaliencyMap,
    comp: &GaussianComponent,
    cutoff: Option<f64>,
    index: usize,
) -> Result<()> {
    let chol = Chol2::new(comp.cov)
        .ok_or(SgmmError::NonPositiveDefinite { index, det: comp.det() })?;
    let (rows, cols) = component_span(map.width, map.height, comp, cutoff);
    let cut_sq = cutoff.map(|c| c * c);
    for row in rows.clone() {
        let base = row * map.width as usize;
        for col in cols.clone() {
            let (u, v) = pixel_center(row, col);
            let (du, dv) = (u - comp.mean[0], v - comp.mean[1]);
            let q = chol.mahalanobis_sq(du, dv);
            if let Some(cut) = cut_sq {
                if q > cut {
                    continue;
                }
            }
            map.values[base + col] += comp.weight * chol.norm * (-0.5 * q).exp();
        }
    }
    Ok(())
}

/// Row/column ranges that can contain pixels within the cutoff ellipse;
/// the ellipse q = r² has axis-aligned half-extents r·√var per axis.
pub(crate) fn component_span(
    width: u32,
    height: u32,
    comp: &GaussianComponent,
    cutoff: Option<f64>,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let (w, h) = (width as usize, height as usize);
    match cutoff {
        None => (0..h, 0..w),
        Some(r) => {
            let half_u = r * comp.cov[0].sqrt();
            let half_v = r * comp.cov[1].sqrt();
            let lo_col = (comp.mean[0] - half_u - 0.5).floor().max(0.0) as usize;
            let hi_col = ((comp.mean[0] + half_u + 0.5).ceil().max(0.0) as usize).min(w);
            let lo_row = (comp.mean[1] - half_v - 0.5).floor().max(0.0) as usize;
            let hi_row = ((comp.mean[1] + half_v + 0.5).ceil().max(0.0) as usize).min(h);
            (lo_row..hi_row.max(lo_row), lo_col..hi_col.max(lo_col))
        }
    }
}

/// Thresholded mixture reconstruction with an explicit Mahalanobis cutoff
/// (`None` evaluates every pixel exactly; finite-difference harnesses use
/// that to avoid cutoff-boundary noise).
pub fn render_map_with_cutoff(
    gmm: &GmmParams,
    cfg: &RenderConfig,
    cutoff: Option<f64>,
) -> Result<SaliencyMap> {
    ensure_valid_gmm(gmm)?;
    render_unvalidated(gmm, cfg, cutoff)
}

/// Rendering core without the up-front mixture validation, for callers
/// that validated already or deliberately sit off the weight simplex.
/// Covariance defects still surface per component.
pub(crate) fn render_unvalidated(
    gmm: &GmmParams,
    cfg: &RenderConfig,
    cutoff: Option<f64>,
) -> Result<SaliencyMap> {
    let selected = selected_components(gmm, cfg.threshold_gt)?;
    let mut map = SaliencyMap::zeros(cfg.width, cfg.height);
    for &i in &selected {
        accumulate_component(&mut map, &gmm.components[i], cutoff, i)?;
    }
    match cfg.normalize {
        Normalize::None => Ok(map),
        mode => normalize_map(&map, mode),
    }
}

/// Thresholded mixture reconstruction at pixel centers.
pub fn render_map(gmm: &GmmParams, cfg: &RenderConfig) -> Result<SaliencyMap> {
    render_map_with_cutoff(gmm, cfg, Some(MAHALANOBIS_CUTOFF))
}

/// 1D Gaussian kernel truncated at 4σ, renormalized to sum 1.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let inv = -0.5 / (sigma * sigma);
    let mut kernel: Vec<f64> =
        (-radius..=radius).map(|k| ((k * k) as f64 * inv).exp()).collect();
    let sum: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= sum;
    }
    kernel
}

/// Impulse grid of the fixations (duplicates accumulate) convolved with an
/// isotropic truncated Gaussian, zero-padded at the borders. Points
/// falling outside the configured grid are ignored.
pub fn blur_fixations(points: &FixationPoints, sigma: f64, cfg: &RenderConfig) -> Result<SaliencyMap> {
    if points.is_empty() {
        return Err(SgmmError::DegenerateInput("no fixation points to blur".into()));
    }
    if !(sigma > 0.0) {
        return Err(SgmmError::DegenerateInput(format!("blur sigma {sigma} not positive")));
    }
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let mut impulses = vec![0.0; w * h];
    for p in &points.points {
        if crate::types::in_canvas(p[0], p[1], cfg.width, cfg.height) {
            impulses[(p[1] as usize) * w + p[0] as usize] += 1.0;
        }
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;

    // Separable convolution, rows first. Zero padding outside the grid.
    let mut tmp = vec![0.0; w * h];
    for row in 0..h {
        let src = &impulses[row * w..(row + 1) * w];
        let dst = &mut tmp[row * w..(row + 1) * w];
        convolve_line(src, dst, &kernel, radius);
    }
    let mut out = SaliencyMap::zeros(cfg.width, cfg.height);
    let mut col_src = vec![0.0; h];
    let mut col_dst = vec![0.0; h];
    for col in 0..w {
        for row in 0..h {
            col_src[row] = tmp[row * w + col];
        }
        convolve_line(&col_src, &mut col_dst, &kernel, radius);
        for row in 0..h {
            out.values[row * w + col] = col_dst[row];
        }
    }
    match cfg.normalize {
        Normalize::None => Ok(out),
        mode => normalize_map(&out, mode),
    }
}

fn convolve_line(src: &[f64], dst: &mut [f64], kernel: &[f64], radius: i64) {
    let n = src.len() as i64;
    for i in 0..n {
        let mut acc = 0.0;
        let k_lo = (-radius).max(-i);
        let k_hi = radius.min(n - 1 - i);
        for k in k_lo..=k_hi {
            acc += kernel[(k + radius) as usize] * src[(i + k) as usize];
        }
        dst[i as usize] = acc;
    }
}

/// Rescale a map so its sum or its maximum equals 1; `None` is identity.
pub fn normalize_map(map: &SaliencyMap, mode: Normalize) -> Result<SaliencyMap> {
    let scale = match mode {
        Normalize::None => return Ok(map.clone()),
        Normalize::SumToOne => map.total(),
        Normalize::MaxToOne => map.max_value(),
    };
    if !(scale > 0.0) {
        return Err(SgmmError::ZeroMap {
            context: match mode {
                Normalize::SumToOne => "sum normalization",
                _ => "max normalization",
            },
        });
    }
    let mut out = map.clone();
    for v in &mut out.values {
        *v /= scale;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{GaussianComponent, GmmParams};
    use approx::assert_relative_eq;

    fn single(weight: f64, mean: [f64; 2], cov: [f64; 3]) -> GaussianComponent {
        GaussianComponent { weight, mean, cov }
    }

    #[test]
    fn density_at_mean_of_identity_covariance() {
        let c = single(1.0, [10.0, 20.0], [1.0, 1.0, 0.0]);
        let d = eval_component((10.0, 20.0), &c).unwrap();
        assert_relative_eq!(d, 1.0 / std::f64::consts::TAU, max_relative = 1e-15);
    }

    #[test]
    fn density_one_unit_off_mean() {
        let c = single(1.0, [10.0, 20.0], [1.0, 1.0, 0.0]);
        let d = eval_component((11.0, 20.0), &c).unwrap();
        assert_relative_eq!(
            d,
            (1.0 / std::f64::consts::TAU) * (-0.5f64).exp(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn density_with_anisotropic_covariance() {
        let c = single(1.0, [10.0, 20.0], [4.0, 9.0, 0.0]);
        let d = eval_component((10.0, 20.0), &c).unwrap();
        assert_relative_eq!(d, 1.0 / (std::f64::consts::TAU * 6.0), max_relative = 1e-15);
    }

    #[test]
    fn eval_rejects_non_positive_definite() {
        let c = single(1.0, [0.0, 0.0], [1.0, 1.0, 1.5]);
        assert!(matches!(
            eval_component((0.0, 0.0), &c),
            Err(SgmmError::NonPositiveDefinite { .. })
        ));
    }

    #[test]
    fn single_component_map_equals_pointwise_density() {
        let comp = single(1.0, [7.3, 5.1], [6.0, 4.0, 1.5]);
        let gmm = GmmParams { components: vec![comp], canvas_width: 16, canvas_height: 12 };
        let cfg = RenderConfig::new(16, 12).with_threshold(0.5);
        let map = render_map_with_cutoff(&gmm, &cfg, None).unwrap();
        for row in 0..12 {
            for col in 0..16 {
                let expect = eval_component(pixel_center(row, col), &comp).unwrap();
                assert_relative_eq!(map.get(row, col), expect, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn threshold_selects_exactly_the_heavy_components() {
        let weights = [0.5, 0.3, 0.1, 0.06, 0.04];
        let gmm = GmmParams {
            components: weights
                .iter()
                .enumerate()
                .map(|(i, &w)| single(w, [20.0 + 10.0 * i as f64, 20.0], [25.0, 25.0, 0.0]))
                .collect(),
            canvas_width: 80,
            canvas_height: 40,
        };
        let sel = selected_components(&gmm, 0.2).unwrap();
        assert_eq!(sel, vec![0, 1, 2, 3]);
    }

    #[test]
    fn all_filtered_is_an_error() {
        let gmm = GmmParams {
            components: vec![
                single(0.5, [5.0, 5.0], [4.0, 4.0, 0.0]),
                single(0.5, [9.0, 5.0], [4.0, 4.0, 0.0]),
            ],
            canvas_width: 16,
            canvas_height: 12,
        };
        let cfg = RenderConfig::new(16, 12).with_threshold(1.5);
        assert!(matches!(
            render_map(&gmm, &cfg),
            Err(SgmmError::AllComponentsFiltered { total: 2, .. })
        ));
    }

    #[test]
    fn blur_single_center_impulse_peaks_at_kernel_center() {
        let points = FixationPoints::new(vec![[10.5, 10.5]], 21, 21).unwrap();
        let cfg = RenderConfig::new(21, 21);
        let map = blur_fixations(&points, 2.0, &cfg).unwrap();
        let kernel = gaussian_kernel(2.0);
        let center_weight = kernel[kernel.len() / 2];
        let peak = map.get(10, 10);
        assert_relative_eq!(peak, center_weight * center_weight, max_relative = 1e-12);
        assert_relative_eq!(map.max_value(), peak, max_relative = 1e-15);
    }

    #[test]
    fn blur_is_linear_in_duplicate_points() {
        let one = FixationPoints::new(vec![[8.2, 6.7]], 32, 24).unwrap();
        let two = FixationPoints::new(vec![[8.2, 6.7], [8.2, 6.7]], 32, 24).unwrap();
        let cfg = RenderConfig::new(32, 24);
        let m1 = blur_fixations(&one, 3.0, &cfg).unwrap();
        let m2 = blur_fixations(&two, 3.0, &cfg).unwrap();
        for (a, b) in m1.values.iter().zip(&m2.values) {
            assert_relative_eq!(2.0 * a, *b, max_relative = 1e-13, epsilon = 1e-300);
        }
    }

    #[test]
    fn blur_mass_equals_point_count_away_from_borders() {
        let points =
            FixationPoints::new(vec![[40.0, 40.0], [50.5, 45.5], [44.0, 52.0]], 96, 96).unwrap();
        let cfg = RenderConfig::new(96, 96);
        let map = blur_fixations(&points, 4.0, &cfg).unwrap();
        assert!((map.total() - 3.0).abs() < 1e-6, "mass {} should be 3", map.total());
    }

    #[test]
    fn normalize_modes() {
        let map = SaliencyMap::from_values(vec![5.0; 100], 10, 10).unwrap();
        let s = normalize_map(&map, Normalize::SumToOne).unwrap();
        assert!(s.values.iter().all(|&v| (v - 0.01).abs() < 1e-15));

        let map = SaliencyMap::from_values(vec![1.0, 3.0], 2, 1).unwrap();
        let m = normalize_map(&map, Normalize::MaxToOne).unwrap();
        assert_eq!(m.values, vec![1.0 / 3.0, 1.0]);

        let id = normalize_map(&map, Normalize::None).unwrap();
        assert_eq!(id.values, map.values);

        let zero = SaliencyMap::zeros(4, 4);
        assert!(matches!(
            normalize_map(&zero, Normalize::SumToOne),
            Err(SgmmError::ZeroMap { .. })
        ));
    }
}
