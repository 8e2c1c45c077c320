//! Correlation reconstruction loss and its analytic gradients.
//!
//! The loss is 1 − CC(Î, I_gt) where Î is the thresholded mixture render;
//! training minimizes it, so its optimum coincides with maximal
//! correlation. The component-selection gate (weight > G_t / C) is treated
//! as constant inside a gradient evaluation: filtered-out components get
//! zero partials, exactly like a boolean mask under autodiff.
//!
//! Per-pixel chain: with a = Î − mean(Î), b = gt − mean(gt),
//! CC = ⟨a,b⟩/(‖a‖‖b‖), the loss gradient w.r.t. one rendered pixel is
//!   w_q = −b_q/(‖a‖‖b‖) + CC · a_q/‖a‖²
//! and flows into component parameters through the Gaussian density:
//!   ∂φ/∂μ = φ·Σ⁻¹d, ∂φ/∂Σ = ½·φ·(Σ⁻¹ d dᵀ Σ⁻¹ − Σ⁻¹), d = p − μ.

use crate::error::{Result, SgmmError};
use crate::render::{
    component_span, render_unvalidated, selected_components, Chol2, RenderConfig,
    MAHALANOBIS_CUTOFF,
};
use crate::transform::{transform_params, transform_vjp, TransformConfig};
use crate::types::{
    ensure_valid_gmm, pixel_center, AnchorGrid, GmmParams, Normalize, RawParamMap, SaliencyMap,
};

/// Loss value and the size of the contributing component set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    /// 1 − cc.
    pub loss: f64,
    /// Pearson correlation between the render and the target, in [−1, 1].
    pub cc: f64,
    pub selected_components: usize,
}

/// Gradients w.r.t. transformed parameters, one
/// (∂π, ∂μ_u, ∂μ_v, ∂var_u, ∂var_v, ∂cov_uv) row per component, and
/// optionally w.r.t. the raw grid that produced them. Carries the loss of
/// the same forward pass so training loops pay for one render per step.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub loss: f64,
    pub cc: f64,
    pub d_theta: Vec<[f64; 6]>,
    pub d_raw: Option<RawParamMap>,
}

struct CenteredPair {
    /// ∂loss/∂Î per pixel.
    pixel_grad: Vec<f64>,
    cc: f64,
}

fn render_cfg(gt: &SaliencyMap, threshold_gt: f64) -> RenderConfig {
    RenderConfig {
        width: gt.width,
        height: gt.height,
        threshold_gt,
        normalize: Normalize::None,
    }
}

fn pearson(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<CenteredPair> {
    let n = pred.n_pixels() as f64;
    let mean_p = pred.total() / n;
    let mean_g = gt.total() / n;
    let mut dot = 0.0;
    let mut ss_p = 0.0;
    let mut ss_g = 0.0;
    for (p, g) in pred.values.iter().zip(&gt.values) {
        let a = p - mean_p;
        let b = g - mean_g;
        dot += a * b;
        ss_p += a * a;
        ss_g += b * b;
    }
    if ss_g <= 0.0 {
        return Err(SgmmError::ConstantMap { context: "correlation against a flat target" });
    }
    if ss_p <= 0.0 {
        return Err(SgmmError::ConstantMap { context: "correlation of a flat render" });
    }
    let (sp, sg) = (ss_p.sqrt(), ss_g.sqrt());
    let cc = (dot / (sp * sg)).clamp(-1.0, 1.0);
    let mut pixel_grad = Vec::with_capacity(pred.n_pixels());
    for (p, g) in pred.values.iter().zip(&gt.values) {
        let a = p - mean_p;
        let b = g - mean_g;
        pixel_grad.push(-b / (sp * sg) + cc * a / ss_p);
    }
    Ok(CenteredPair { pixel_grad, cc })
}

fn loss_with(
    gmm: &GmmParams,
    gt: &SaliencyMap,
    threshold_gt: f64,
    cutoff: Option<f64>,
) -> Result<LossReport> {
    let selected = selected_components(gmm, threshold_gt)?;
    let pred = render_unvalidated(gmm, &render_cfg(gt, threshold_gt), cutoff)?;
    let pair = pearson(&pred, gt)?;
    Ok(LossReport { loss: 1.0 - pair.cc, cc: pair.cc, selected_components: selected.len() })
}

/// Loss of a valid mixture against a target map.
pub fn cc_loss(gmm: &GmmParams, gt: &SaliencyMap, threshold_gt: f64) -> Result<LossReport> {
    ensure_valid_gmm(gmm)?;
    loss_with(gmm, gt, threshold_gt, Some(MAHALANOBIS_CUTOFF))
}

/// [`cc_loss`] with an explicit render cutoff (`None` = exact).
pub fn cc_loss_with_cutoff(
    gmm: &GmmParams,
    gt: &SaliencyMap,
    threshold_gt: f64,
    cutoff: Option<f64>,
) -> Result<LossReport> {
    ensure_valid_gmm(gmm)?;
    loss_with(gmm, gt, threshold_gt, cutoff)
}

/// Loss evaluation that skips the weights-sum-to-1 invariant (covariances
/// must still be positive definite). Finite-difference harnesses need this
/// to probe the loss at perturbed weights, which live off the simplex; it
/// is not part of the training path.
pub fn cc_loss_free_weights(
    gmm: &GmmParams,
    gt: &SaliencyMap,
    threshold_gt: f64,
    cutoff: Option<f64>,
) -> Result<LossReport> {
    loss_with(gmm, gt, threshold_gt, cutoff)
}

fn grad_with(
    gmm: &GmmParams,
    gt: &SaliencyMap,
    threshold_gt: f64,
    cutoff: Option<f64>,
) -> Result<GradReport> {
    let selected = selected_components(gmm, threshold_gt)?;
    let pred = render_unvalidated(gmm, &render_cfg(gt, threshold_gt), cutoff)?;
    let pair = pearson(&pred, gt)?;

    let mut d_theta = vec![[0.0; 6]; gmm.n_components()];
    let cut_sq = cutoff.map(|c| c * c);
    for &ci in &selected {
        let comp = &gmm.components[ci];
        let chol = Chol2::new(comp.cov)
            .ok_or(SgmmError::NonPositiveDefinite { index: ci, det: comp.det() })?;
        let det = comp.det();
        let [vu, vv, cuv] = comp.cov;
        let (a11, a22, a12) = (vv / det, vu / det, -cuv / det);
        let (rows, cols) = component_span(gt.width, gt.height, comp, cutoff);
        let mut acc = [0.0; 6];
        for row in rows.clone() {
            let base = row * gt.width as usize;
            for col in cols.clone() {
                let (u, v) = pixel_center(row, col);
                let (du, dv) = (u - comp.mean[0], v - comp.mean[1]);
                let q = chol.mahalanobis_sq(du, dv);
                if let Some(cut) = cut_sq {
                    if q > cut {
                        continue;
                    }
                }
                let phi = chol.norm * (-0.5 * q).exp();
                let wphi = pair.pixel_grad[base + col] * phi;
                // Σ⁻¹ d
                let g1 = (vv * du - cuv * dv) / det;
                let g2 = (vu * dv - cuv * du) / det;
                acc[0] += wphi;
                acc[1] += wphi * g1;
                acc[2] += wphi * g2;
                acc[3] += wphi * -0.5 * (a11 - g1 * g1);
                acc[4] += wphi * -0.5 * (a22 - g2 * g2);
                acc[5] += wphi * -(a12 - g1 * g2);
            }
        }
        d_theta[ci] = [
            acc[0],
            comp.weight * acc[1],
            comp.weight * acc[2],
            comp.weight * acc[3],
            comp.weight * acc[4],
            comp.weight * acc[5],
        ];
    }
    Ok(GradReport { loss: 1.0 - pair.cc, cc: pair.cc, d_theta, d_raw: None })
}

/// Analytic loss gradient w.r.t. every component's transformed parameters.
/// Components outside the selection set receive zeros.
pub fn cc_loss_grad(gmm: &GmmParams, gt: &SaliencyMap, threshold_gt: f64) -> Result<GradReport> {
    ensure_valid_gmm(gmm)?;
    grad_with(gmm, gt, threshold_gt, Some(MAHALANOBIS_CUTOFF))
}

/// [`cc_loss_grad`] with an explicit render cutoff (`None` = exact).
pub fn cc_loss_grad_with_cutoff(
    gmm: &GmmParams,
    gt: &SaliencyMap,
    threshold_gt: f64,
    cutoff: Option<f64>,
) -> Result<GradReport> {
    ensure_valid_gmm(gmm)?;
    grad_with(gmm, gt, threshold_gt, cutoff)
}

/// Full backward pass raw grid → transform → render → loss: the returned
/// report carries both the transformed-space partials and their pullback
/// onto the raw grid.
pub fn raw_grad(
    raw: &RawParamMap,
    grid: &AnchorGrid,
    tcfg: &TransformConfig,
    gt: &SaliencyMap,
    threshold_gt: f64,
) -> Result<GradReport> {
    raw_grad_with_cutoff(raw, grid, tcfg, gt, threshold_gt, Some(MAHALANOBIS_CUTOFF))
}

/// [`raw_grad`] with an explicit render cutoff (`None` = exact).
pub fn raw_grad_with_cutoff(
    raw: &RawParamMap,
    grid: &AnchorGrid,
    tcfg: &TransformConfig,
    gt: &SaliencyMap,
    threshold_gt: f64,
    cutoff: Option<f64>,
) -> Result<GradReport> {
    let gmm = transform_params(raw, grid, tcfg)?;
    let mut report = grad_with(&gmm, gt, threshold_gt, cutoff)?;
    report.d_raw = Some(transform_vjp(raw, grid, tcfg, &report.d_theta)?);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{render_map, render_map_with_cutoff};
    use crate::transform::make_anchor_grid;
    use crate::types::{AnchorLayout, CovarianceMode, GaussianComponent, RAW_PI};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn comp(weight: f64, mean: [f64; 2], cov: [f64; 3]) -> GaussianComponent {
        GaussianComponent { weight, mean, cov }
    }

    fn two_blob_gmm() -> GmmParams {
        GmmParams {
            components: vec![
                comp(0.6, [20.0, 16.0], [30.0, 24.0, 4.0]),
                comp(0.4, [44.0, 30.0], [40.0, 36.0, -8.0]),
            ],
            canvas_width: 64,
            canvas_height: 48,
        }
    }

    /// Straightforward two-pass Pearson, kept deliberately independent of
    /// the implementation above.
    fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for (a, b) in x.iter().zip(y) {
            num += (a - mx) * (b - my);
            dx += (a - mx) * (a - mx);
            dy += (b - my) * (b - my);
        }
        num / (dx.sqrt() * dy.sqrt())
    }

    #[test]
    fn self_correlation_is_one() {
        let gmm = two_blob_gmm();
        let gt = render_map(&gmm, &RenderConfig::new(64, 48).with_threshold(0.2)).unwrap();
        let rep = cc_loss(&gmm, &gt, 0.2).unwrap();
        assert!((rep.cc - 1.0).abs() < 1e-12);
        assert!(rep.loss.abs() < 1e-12);
        assert_eq!(rep.selected_components, 2);
    }

    #[test]
    fn affine_targets_leave_loss_at_zero() {
        let gmm = two_blob_gmm();
        let base = render_map(&gmm, &RenderConfig::new(64, 48).with_threshold(0.2)).unwrap();
        let gt = SaliencyMap::from_values(
            base.values.iter().map(|v| 2.5 * v + 0.3).collect(),
            64,
            48,
        )
        .unwrap();
        let rep = cc_loss(&gmm, &gt, 0.2).unwrap();
        assert!(rep.loss.abs() < 1e-12);
    }

    #[test]
    fn distant_blobs_match_the_independent_oracle() {
        let a = GmmParams {
            components: vec![comp(1.0, [30.0, 60.0], [16.0, 16.0, 0.0])],
            canvas_width: 240,
            canvas_height: 120,
        };
        let b = GmmParams {
            components: vec![comp(1.0, [210.0, 60.0], [16.0, 16.0, 0.0])],
            canvas_width: 240,
            canvas_height: 120,
        };
        let cfg = RenderConfig::new(240, 120).with_threshold(0.2);
        let map_a = render_map_with_cutoff(&a, &cfg, None).unwrap();
        let map_b = render_map_with_cutoff(&b, &cfg, None).unwrap();
        let rep = cc_loss_with_cutoff(&a, &map_b, 0.2, None).unwrap();
        let oracle = pearson_oracle(&map_a.values, &map_b.values);
        assert!(oracle < 0.0, "far-apart blobs should anticorrelate, got {oracle}");
        assert!((rep.cc - oracle).abs() < 1e-12);
    }

    #[test]
    fn constant_target_is_rejected() {
        let gmm = two_blob_gmm();
        let gt = SaliencyMap::from_values(vec![3.0; 64 * 48], 64, 48).unwrap();
        assert!(matches!(cc_loss(&gmm, &gt, 0.2), Err(SgmmError::ConstantMap { .. })));
    }

    #[test]
    fn gradients_vanish_at_proportional_target() {
        let gmm = two_blob_gmm();
        let base = render_map(&gmm, &RenderConfig::new(64, 48).with_threshold(0.2)).unwrap();
        let gt =
            SaliencyMap::from_values(base.values.iter().map(|v| 2.0 * v).collect(), 64, 48)
                .unwrap();
        let rep = cc_loss_grad(&gmm, &gt, 0.2).unwrap();
        for row in &rep.d_theta {
            for g in row {
                assert!(g.abs() < 1e-9, "gradient {g} should vanish at the optimum");
            }
        }
    }

    #[test]
    fn filtered_components_get_zero_gradients() {
        let mut gmm = two_blob_gmm();
        gmm.components[0].weight = 0.97;
        gmm.components[1].weight = 0.03;
        // threshold 0.2/2 = 0.1: component 1 is filtered out
        let gt = {
            let only_first = GmmParams {
                components: vec![comp(1.0, [25.0, 20.0], [50.0, 40.0, 0.0])],
                canvas_width: 64,
                canvas_height: 48,
            };
            render_map(&only_first, &RenderConfig::new(64, 48).with_threshold(0.2)).unwrap()
        };
        let rep = cc_loss_grad(&gmm, &gt, 0.2).unwrap();
        assert_eq!(rep.d_theta[1], [0.0; 6]);
        assert!(rep.d_theta[0].iter().any(|g| g.abs() > 0.0));
    }

    #[test]
    fn mirror_symmetric_instance_has_antisymmetric_mean_gradients() {
        // width 64: u -> 64 - u maps pixel centers onto pixel centers
        let gmm = GmmParams {
            components: vec![
                comp(0.5, [24.0, 24.0], [30.0, 30.0, 0.0]),
                comp(0.5, [40.0, 24.0], [30.0, 30.0, 0.0]),
            ],
            canvas_width: 64,
            canvas_height: 48,
        };
        // symmetric target with different spread, so gradients are nonzero
        let target_src = GmmParams {
            components: vec![
                comp(0.5, [24.0, 24.0], [60.0, 50.0, 0.0]),
                comp(0.5, [40.0, 24.0], [60.0, 50.0, 0.0]),
            ],
            canvas_width: 64,
            canvas_height: 48,
        };
        let gt = render_map_with_cutoff(
            &target_src,
            &RenderConfig::new(64, 48).with_threshold(0.2),
            None,
        )
        .unwrap();
        let rep = cc_loss_grad_with_cutoff(&gmm, &gt, 0.2, None).unwrap();
        let du0 = rep.d_theta[0][1];
        let du1 = rep.d_theta[1][1];
        assert!(du0.abs() > 1e-12, "expected a nonzero mean gradient");
        assert!(
            (du0 + du1).abs() < 1e-9,
            "mirrored components should have opposite u-gradients: {du0} vs {du1}"
        );
    }

    fn fd_theta(
        gmm: &GmmParams,
        gt: &SaliencyMap,
        ci: usize,
        param: usize,
        step: f64,
    ) -> f64 {
        let mut plus = gmm.clone();
        let mut minus = gmm.clone();
        let bump = |g: &mut GmmParams, s: f64| {
            let c = &mut g.components[ci];
            match param {
                0 => c.weight += s,
                1 => c.mean[0] += s,
                2 => c.mean[1] += s,
                3 => c.cov[0] += s,
                4 => c.cov[1] += s,
                _ => c.cov[2] += s,
            }
        };
        bump(&mut plus, step);
        bump(&mut minus, -step);
        let lp = cc_loss_free_weights(&plus, gt, 0.2, None).unwrap().loss;
        let lm = cc_loss_free_weights(&minus, gt, 0.2, None).unwrap().loss;
        (lp - lm) / (2.0 * step)
    }

    #[test]
    fn theta_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let gmm = GmmParams {
                components: (0..3)
                    .map(|_| {
                        comp(
                            0.0,
                            [rng.random_range(15.0..49.0), rng.random_range(12.0..36.0)],
                            [
                                rng.random_range(20.0..60.0),
                                rng.random_range(20.0..60.0),
                                rng.random_range(-8.0..8.0),
                            ],
                        )
                    })
                    .collect(),
                canvas_width: 64,
                canvas_height: 48,
            };
            let mut gmm = gmm;
            let w = [0.5, 0.3, 0.2];
            for (c, wi) in gmm.components.iter_mut().zip(w) {
                c.weight = wi;
            }
            let target = GmmParams {
                components: vec![comp(1.0, [32.0, 20.0], [90.0, 70.0, 10.0])],
                canvas_width: 64,
                canvas_height: 48,
            };
            let gt = render_map_with_cutoff(
                &target,
                &RenderConfig::new(64, 48).with_threshold(0.2),
                None,
            )
            .unwrap();
            let rep = cc_loss_grad_with_cutoff(&gmm, &gt, 0.2, None).unwrap();
            for ci in 0..3 {
                for param in 0..6 {
                    let x = match param {
                        0 => gmm.components[ci].weight,
                        1 => gmm.components[ci].mean[0],
                        2 => gmm.components[ci].mean[1],
                        3 => gmm.components[ci].cov[0],
                        4 => gmm.components[ci].cov[1],
                        _ => gmm.components[ci].cov[2],
                    };
                    let step = 1e-4 * x.abs().max(1.0);
                    let fd = fd_theta(&gmm, &gt, ci, param, step);
                    let a = rep.d_theta[ci][param];
                    let denom = a.abs().max(fd.abs());
                    if denom < 1e-9 {
                        continue;
                    }
                    assert!(
                        (a - fd).abs() / denom <= 1e-4,
                        "component {ci} param {param}: analytic {a} vs fd {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn raw_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let grid = make_anchor_grid(AnchorLayout::Square, 2, 2, 64, 48);
        for mode in [CovarianceMode::Spherical, CovarianceMode::Diagonal, CovarianceMode::Full] {
            let tcfg = TransformConfig::new(mode);
            let mut raw = RawParamMap::zeros(2, 2);
            for cell in &mut raw.grid {
                for x in cell.iter_mut() {
                    *x = rng.random_range(-1.5..1.5);
                }
                cell[RAW_PI] = rng.random_range(-0.5..0.5);
            }
            let target = GmmParams {
                components: vec![
                    comp(0.5, [18.0, 14.0], [60.0, 50.0, 0.0]),
                    comp(0.5, [46.0, 34.0], [55.0, 45.0, 5.0]),
                ],
                canvas_width: 64,
                canvas_height: 48,
            };
            let gt = render_map_with_cutoff(
                &target,
                &RenderConfig::new(64, 48).with_threshold(0.2),
                None,
            )
            .unwrap();
            let rep = raw_grad_with_cutoff(&raw, &grid, &tcfg, &gt, 0.2, None).unwrap();
            let d_raw = rep.d_raw.as_ref().unwrap();
            for c in 0..4 {
                for k in 0..6 {
                    let step = 1e-4 * raw.grid[c][k].abs().max(1.0);
                    let mut plus = raw.clone();
                    plus.grid[c][k] += step;
                    let mut minus = raw.clone();
                    minus.grid[c][k] -= step;
                    let lp = {
                        let g = transform_params(&plus, &grid, &tcfg).unwrap();
                        cc_loss_with_cutoff(&g, &gt, 0.2, None).unwrap().loss
                    };
                    let lm = {
                        let g = transform_params(&minus, &grid, &tcfg).unwrap();
                        cc_loss_with_cutoff(&g, &gt, 0.2, None).unwrap().loss
                    };
                    let fd = (lp - lm) / (2.0 * step);
                    let a = d_raw.grid[c][k];
                    let denom = a.abs().max(fd.abs());
                    if denom < 1e-9 {
                        continue;
                    }
                    assert!(
                        (a - fd).abs() / denom <= 1e-4,
                        "{mode:?} cell {c} raw param {k}: analytic {a} vs fd {fd}"
                    );
                }
            }
            if mode == CovarianceMode::Spherical {
                for c in 0..4 {
                    assert_eq!(d_raw.grid[c][4], 0.0);
                    assert_eq!(d_raw.grid[c][5], 0.0);
                }
            }
        }
    }

    #[test]
    fn target_scale_does_not_change_loss_or_gradients() {
        let gmm = two_blob_gmm();
        let target = GmmParams {
            components: vec![comp(1.0, [30.0, 25.0], [80.0, 60.0, -10.0])],
            canvas_width: 64,
            canvas_height: 48,
        };
        let gt = render_map(&target, &RenderConfig::new(64, 48).with_threshold(0.2)).unwrap();
        let scaled =
            SaliencyMap::from_values(gt.values.iter().map(|v| 7.25 * v).collect(), 64, 48)
                .unwrap();
        let r1 = cc_loss(&gmm, &gt, 0.2).unwrap();
        let r2 = cc_loss(&gmm, &scaled, 0.2).unwrap();
        assert!((r1.loss - r2.loss).abs() < 1e-12);
        let g1 = cc_loss_grad(&gmm, &gt, 0.2).unwrap();
        let g2 = cc_loss_grad(&gmm, &scaled, 0.2).unwrap();
        for (a, b) in g1.d_theta.iter().flatten().zip(g2.d_theta.iter().flatten()) {
            let denom = a.abs().max(b.abs());
            if denom > 1e-15 {
                assert!((a - b).abs() / denom < 1e-9);
            }
        }
    }
}
