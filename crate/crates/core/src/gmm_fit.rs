//! Expectation-maximization fitting of a mixture to fixation points.
//!
//! Initialization is k-means++ seeding followed by one Lloyd pass; EM then
//! alternates log-space E-steps with closed-form M-steps, with the
//! covariance projected onto the requested mode after every update.
//! Several random restarts run to convergence and the highest final
//! log-likelihood wins.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SgmmError};
use crate::render::Chol2;
use crate::types::{
    ensure_valid_gmm, CovarianceMode, FixationPoints, GaussianComponent, GmmParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change below which EM stops.
    pub tol: f64,
    /// Number of random restarts; the best final log-likelihood wins.
    pub n_init: usize,
    /// Variance floor in pixels², applied in every M-step.
    pub min_var: f64,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig { max_iter: 200, tol: 1e-6, n_init: 4, min_var: 1.0, seed: 0 }
    }
}

/// Full-mode correlations are clamped to this magnitude so the covariance
/// stays positive definite on collinear clusters.
const CORR_CLAMP: f64 = 0.995;

/// Component total responsibility below which it is considered starved and
/// re-seeded at the lowest-density point.
const EMPTY_RESP: f64 = 1e-8;

fn check_preconditions(points: &FixationPoints, c: usize) -> Result<()> {
    if c < 1 {
        return Err(SgmmError::DegenerateInput("component count must be at least 1".into()));
    }
    if points.len() < c {
        return Err(SgmmError::TooFewPoints { needed: c, got: points.len() });
    }
    Ok(())
}

fn all_identical(points: &FixationPoints) -> bool {
    let first = points.points[0];
    points.points.iter().all(|p| *p == first)
}

/// All points coincide: one effective component at the point, the rest at
/// weight ε so the mixture still has C components and stays valid.
fn degenerate_fit(points: &FixationPoints, c: usize, cfg: &EmConfig) -> GmmParams {
    let p = points.points[0];
    let eps = 1e-6;
    let main_weight = 1.0 - eps * (c - 1) as f64;
    let components = (0..c)
        .map(|i| GaussianComponent {
            weight: if i == 0 { main_weight } else { eps },
            mean: p,
            cov: [cfg.min_var, cfg.min_var, 0.0],
        })
        .collect();
    GmmParams {
        components,
        canvas_width: points.canvas_width,
        canvas_height: points.canvas_height,
    }
}

/// k-means++ D² seeding.
fn seed_centers(points: &[[f64; 2]], c: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centers = Vec::with_capacity(c);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| {
            let (du, dv) = (p[0] - centers[0][0], p[1] - centers[0][1]);
            du * du + dv * dv
        })
        .collect();
    while centers.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // remaining points coincide with existing centers
            points[rng.random_range(0..points.len())]
        } else {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            points[chosen]
        };
        centers.push(next);
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            let (du, dv) = (p[0] - next[0], p[1] - next[1]);
            *d = d.min(du * du + dv * dv);
        }
    }
    centers
}

fn nearest_center(p: &[f64; 2], centers: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let (du, dv) = (p[0] - c[0], p[1] - c[1]);
        let d = du * du + dv * dv;
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

fn project_mode(cov: &mut [f64; 3], mode: CovarianceMode, min_var: f64) {
    match mode {
        CovarianceMode::Spherical => {
            let v = (0.5 * (cov[0] + cov[1])).max(min_var);
            *cov = [v, v, 0.0];
        }
        CovarianceMode::Diagonal => {
            cov[0] = cov[0].max(min_var);
            cov[1] = cov[1].max(min_var);
            cov[2] = 0.0;
        }
        CovarianceMode::Full => {
            cov[0] = cov[0].max(min_var);
            cov[1] = cov[1].max(min_var);
            let bound = CORR_CLAMP * (cov[0] * cov[1]).sqrt();
            cov[2] = cov[2].clamp(-bound, bound);
        }
    }
}

/// ln det Σ + tr(Σ⁻¹ S): the per-point negative contribution of a
/// component's covariance to EM's Q objective, up to constants. Lower is
/// better.
fn q_cost(cov: &[f64; 3], scatter: &[f64; 3]) -> f64 {
    let det = cov[0] * cov[1] - cov[2] * cov[2];
    let tr = (cov[1] * scatter[0] - 2.0 * cov[2] * scatter[2] + cov[0] * scatter[1]) / det;
    det.ln() + tr
}

/// Hard-assignment statistics used both for initialization (after the
/// Lloyd pass) and as the oracle-friendly fallback for starved clusters.
fn init_components(
    points: &[[f64; 2]],
    centers: &[[f64; 2]],
    mode: CovarianceMode,
    min_var: f64,
) -> Vec<GaussianComponent> {
    let c = centers.len();
    let n = points.len();
    let mut count = vec![0usize; c];
    let mut sum = vec![[0.0; 2]; c];
    let mut assign = vec![0usize; n];
    for (i, p) in points.iter().enumerate() {
        let k = nearest_center(p, centers);
        assign[i] = k;
        count[k] += 1;
        sum[k][0] += p[0];
        sum[k][1] += p[1];
    }
    let means: Vec<[f64; 2]> = (0..c)
        .map(|k| {
            if count[k] == 0 {
                centers[k]
            } else {
                [sum[k][0] / count[k] as f64, sum[k][1] / count[k] as f64]
            }
        })
        .collect();
    let mut scatter = vec![[0.0; 3]; c];
    for (i, p) in points.iter().enumerate() {
        let k = assign[i];
        let (du, dv) = (p[0] - means[k][0], p[1] - means[k][1]);
        scatter[k][0] += du * du;
        scatter[k][1] += dv * dv;
        scatter[k][2] += du * dv;
    }
    (0..c)
        .map(|k| {
            let mut cov = if count[k] > 0 {
                let inv = 1.0 / count[k] as f64;
                [scatter[k][0] * inv, scatter[k][1] * inv, scatter[k][2] * inv]
            } else {
                [min_var, min_var, 0.0]
            };
            project_mode(&mut cov, mode, min_var);
            // Laplace-style smoothing keeps empty clusters at a tiny
            // positive weight instead of zero.
            let weight = (count[k] as f64 + 0.5) / (n as f64 + 0.5 * c as f64);
            GaussianComponent { weight, mean: means[k], cov }
        })
        .collect()
}

struct EStep {
    /// resp[i][k] = posterior of component k for point i.
    resp: Vec<Vec<f64>>,
    log_likelihood: f64,
}

fn e_step(points: &[[f64; 2]], components: &[GaussianComponent]) -> Result<EStep> {
    let chols: Vec<(f64, Chol2)> = components
        .iter()
        .enumerate()
        .map(|(k, comp)| {
            Chol2::new(comp.cov)
                .map(|ch| (comp.weight.max(f64::MIN_POSITIVE).ln(), ch))
                .ok_or(SgmmError::NonPositiveDefinite { index: k, det: comp.det() })
        })
        .collect::<Result<_>>()?;
    let mut resp = Vec::with_capacity(points.len());
    let mut ll = 0.0;
    let mut row = vec![0.0; components.len()];
    for p in points {
        for (k, (log_w, chol)) in chols.iter().enumerate() {
            let (du, dv) = (p[0] - components[k].mean[0], p[1] - components[k].mean[1]);
            row[k] = log_w + chol.norm.ln() - 0.5 * chol.mahalanobis_sq(du, dv);
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let lse = max + sum_exp.ln();
        ll += lse;
        resp.push(row.iter().map(|x| (x - lse).exp()).collect());
    }
    Ok(EStep { resp, log_likelihood: ll })
}

/// Standard M-step update. Components whose total responsibility falls
/// below `EMPTY_RESP` keep their previous mean and covariance (their
/// weight still updates, so this is an exact conditional-maximization
/// step and the ascent property survives); their indices are returned so
/// the caller can try a rescue.
fn m_step(
    points: &[[f64; 2]],
    resp: &[Vec<f64>],
    components: &mut [GaussianComponent],
    mode: CovarianceMode,
    min_var: f64,
) -> Vec<usize> {
    let n = points.len() as f64;
    let c = components.len();
    let mut starved = Vec::new();
    for k in 0..c {
        let nk: f64 = resp.iter().map(|r| r[k]).sum();
        if nk < EMPTY_RESP {
            starved.push(k);
            components[k].weight = nk / n;
            continue;
        }
        let inv = 1.0 / nk;
        let mut mean = [0.0; 2];
        for (p, r) in points.iter().zip(resp) {
            mean[0] += r[k] * p[0];
            mean[1] += r[k] * p[1];
        }
        mean[0] *= inv;
        mean[1] *= inv;
        let mut cov = [0.0; 3];
        for (p, r) in points.iter().zip(resp) {
            let (du, dv) = (p[0] - mean[0], p[1] - mean[1]);
            cov[0] += r[k] * du * du;
            cov[1] += r[k] * dv * dv;
            cov[2] += r[k] * du * dv;
        }
        cov[0] *= inv;
        cov[1] *= inv;
        cov[2] *= inv;
        let mut proj = cov;
        project_mode(&mut proj, mode, min_var);
        // The floor/clamp projection is not always the constrained
        // maximizer (Full mode especially), so when it engages, fall back
        // to the previous covariance if that scores better: both are
        // feasible, and picking the cheaper one keeps EM's ascent.
        if proj != cov && q_cost(&components[k].cov, &cov) < q_cost(&proj, &cov) {
            proj = components[k].cov;
        }
        components[k] = GaussianComponent { weight: nk / n, mean, cov: proj };
    }
    let total: f64 = components.iter().map(|comp| comp.weight).sum();
    for comp in components.iter_mut() {
        comp.weight /= total;
    }
    debug_assert!(components.iter().all(|comp| match mode {
        CovarianceMode::Spherical => comp.cov[0] == comp.cov[1] && comp.cov[2] == 0.0,
        CovarianceMode::Diagonal => comp.cov[2] == 0.0,
        CovarianceMode::Full => true,
    }));
    debug_assert!(components
        .iter()
        .all(|comp| comp.cov[0] >= min_var && comp.cov[1] >= min_var));
    starved
}

/// Candidate restart for starved components: each is re-seeded at a
/// lowest-density point with the global covariance and weight 1/n.
fn rescue_starved(
    points: &[[f64; 2]],
    components: &[GaussianComponent],
    starved: &[usize],
    mode: CovarianceMode,
    min_var: f64,
) -> Vec<GaussianComponent> {
    let n = points.len() as f64;
    let mut out = components.to_vec();
    let global = global_stats(points, mode, min_var);
    let mut density: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d = 0.0;
            for comp in components {
                if let Some(ch) = Chol2::new(comp.cov) {
                    d += comp.weight * ch.density(p[0] - comp.mean[0], p[1] - comp.mean[1]);
                }
            }
            (d, i)
        })
        .collect();
    density.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (slot, &k) in starved.iter().enumerate() {
        let idx = density[slot.min(density.len() - 1)].1;
        out[k] = GaussianComponent { weight: 1.0 / n, mean: points[idx], cov: global };
    }
    let total: f64 = out.iter().map(|comp| comp.weight).sum();
    for comp in &mut out {
        comp.weight /= total;
    }
    out
}

fn global_stats(points: &[[f64; 2]], mode: CovarianceMode, min_var: f64) -> [f64; 3] {
    let n = points.len() as f64;
    let mut mean = [0.0; 2];
    for p in points {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut cov = [0.0; 3];
    for p in points {
        let (du, dv) = (p[0] - mean[0], p[1] - mean[1]);
        cov[0] += du * du;
        cov[1] += dv * dv;
        cov[2] += du * dv;
    }
    cov[0] /= n;
    cov[1] /= n;
    cov[2] /= n;
    project_mode(&mut cov, mode, min_var);
    cov
}

fn run_restart(
    points: &FixationPoints,
    c: usize,
    mode: CovarianceMode,
    cfg: &EmConfig,
    seed: u64,
) -> Result<(GmmParams, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = seed_centers(&points.points, c, &mut rng);
    let mut components = init_components(&points.points, &centers, mode, cfg.min_var);
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..cfg.max_iter {
        let es = e_step(&points.points, &components)?;
        trace.push(es.log_likelihood);
        let starved = m_step(&points.points, &es.resp, &mut components, mode, cfg.min_var);
        if !starved.is_empty() {
            // Take the re-seeded variant only when it does not lose
            // likelihood; the plain step keeps the ascent guarantee.
            let candidate =
                rescue_starved(&points.points, &components, &starved, mode, cfg.min_var);
            let plain_ll = e_step(&points.points, &components)?.log_likelihood;
            let cand_ll = e_step(&points.points, &candidate)?.log_likelihood;
            if cand_ll >= plain_ll {
                components = candidate;
            }
        }
        if prev_ll.is_finite() {
            let rel = (es.log_likelihood - prev_ll).abs() / prev_ll.abs().max(1e-12);
            if rel <= cfg.tol {
                break;
            }
        }
        prev_ll = es.log_likelihood;
    }
    let gmm = GmmParams {
        components,
        canvas_width: points.canvas_width,
        canvas_height: points.canvas_height,
    };
    Ok((gmm, trace))
}

/// Fit and also report the winning restart's per-iteration log-likelihood
/// trace (the value *before* each M-step).
pub fn fit_gmm_trace(
    points: &FixationPoints,
    c: usize,
    mode: CovarianceMode,
    cfg: &EmConfig,
) -> Result<(GmmParams, Vec<f64>)> {
    check_preconditions(points, c)?;
    if all_identical(points) {
        let gmm = degenerate_fit(points, c, cfg);
        let ll = log_likelihood(points, &gmm)?;
        return Ok((gmm, vec![ll]));
    }
    let mut best: Option<(f64, GmmParams, Vec<f64>)> = None;
    for r in 0..cfg.n_init.max(1) {
        let seed = cfg.seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (gmm, trace) = run_restart(points, c, mode, cfg, seed)?;
        let ll = log_likelihood(points, &gmm)?;
        let better = match &best {
            None => true,
            Some((best_ll, _, _)) => ll > *best_ll,
        };
        if better {
            best = Some((ll, gmm, trace));
        }
    }
    let (_, gmm, trace) = best.expect("at least one restart ran");
    ensure_valid_gmm(&gmm)?;
    Ok((gmm, trace))
}

pub fn fit_gmm(
    points: &FixationPoints,
    c: usize,
    mode: CovarianceMode,
    cfg: &EmConfig,
) -> Result<GmmParams> {
    fit_gmm_trace(points, c, mode, cfg).map(|(gmm, _)| gmm)
}

/// Posterior probability of each component for each point; rows sum to 1.
pub fn responsibilities(points: &FixationPoints, gmm: &GmmParams) -> Result<Vec<Vec<f64>>> {
    ensure_valid_gmm(gmm)?;
    if points.is_empty() {
        return Err(SgmmError::DegenerateInput("no points for responsibilities".into()));
    }
    Ok(e_step(&points.points, &gmm.components)?.resp)
}

/// Σ_k log Σ_c π_c N(p_k; μ_c, Σ_c), in nats.
pub fn log_likelihood(points: &FixationPoints, gmm: &GmmParams) -> Result<f64> {
    ensure_valid_gmm(gmm)?;
    Ok(e_step(&points.points, &gmm.components)?.log_likelihood)
}
