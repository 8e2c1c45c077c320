//! Compact saliency maps as small Gaussian mixtures.
//!
//! An eye-fixation density over an image is summarized by a mixture of a
//! few 2-D Gaussians instead of a dense pixel grid. This crate covers the
//! whole loop around that idea:
//!
//! - [`gmm_fit`]: EM fitting of mixtures to raw fixation points;
//! - [`render`]: turning a mixture back into a dense map, with a weight
//!   threshold that drops negligible components, plus Gaussian blurring
//!   of point sets into ground-truth maps;
//! - [`transform`]: an unconstrained-to-valid parameter mapping on an
//!   anchor grid, so gradient descent can move freely while every mixture
//!   it visits stays well formed;
//! - [`loss_grad`]: a correlation loss between rendered and target maps
//!   with analytic gradients, both in mixture space and pulled back
//!   through the transform;
//! - [`trainer`]: SGD with momentum over those gradients, either fitting
//!   one image's parameters directly or training a tiny predictor head;
//! - [`metrics`]: the standard saliency evaluation suite (CC, SIM, KL,
//!   EMD, NSS, AUC variants, IG);
//! - [`io`]: file formats, synthetic dataset generation, subsampling.

pub mod error;
pub mod gmm_fit;
pub mod io;
pub mod loss_grad;
pub mod metrics;
pub mod render;
pub mod trainer;
pub mod transform;
pub mod types;

pub use error::{ErrorKind, Result, SgmmError};
pub use types::{
    validate_gmm, AnchorLayout, CovarianceMode, FixationPoints, GaussianComponent, GmmParams,
    Normalize, RawParamMap, SaliencyMap,
};
