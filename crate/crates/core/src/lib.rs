//! Object-level blind watermarking that survives cropping-paste attacks.
//!
//! A segmented object is normalized into a canonical canvas using features
//! that move with the object (centroid, principal orientation, bounding
//! square), a keyed spread-spectrum message is embedded there, and the
//! residual is carried back into the host. After the object is cut out,
//! rotated, scaled and pasted elsewhere, the same normalization applied to
//! the pasted copy recovers the canvas and the message.
//!
//! Modules:
//! - [`raster`]: images, masks, similarity transforms, bilinear warping
//! - [`moments`]: region moments and invariant features
//! - [`ssync`]: geometric self-synchronization
//! - [`attacks`]: cropping-paste composition and pixel distortions
//! - [`codec`]: the embedder and blind extractor
//! - [`metrics`], [`perturb`], [`corpus`], [`eval`]: evaluation harness

pub mod attacks;
pub mod codec;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod moments;
pub mod perturb;
pub mod raster;
pub mod seed;
pub mod ssync;

pub use attacks::{
    attack_pipeline, crop_paste, distort, sample_attack, AttackRanges, AttackSpec, DistortionKind,
    DistortionSpec,
};
pub use codec::{embed, embed_into_host, extract, make_plan, DecodeReport, EmbedPlan, MessageBits};
pub use error::{Error, Result};
pub use eval::{run_eval, EvalConfig, ResultRecord};
pub use metrics::{bar, iou, psnr, ssim};
pub use moments::{compute_moments, min_bounding_square, MomentSet, SquareRect};
pub use perturb::perturb_mask;
pub use raster::{warp, warp_mask, BinaryMask, Image, SimilarityTransform};
pub use ssync::{
    apply_mask_crop, desynchronize_residual, synchronize, SyncAblation, SyncObject, SyncRecord,
};
