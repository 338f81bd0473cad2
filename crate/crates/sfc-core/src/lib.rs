//! Lossless spherical-projection point cloud processing.
//!
//! Conventional range-image pipelines keep one point per projection cell
//! and drop the rest. This crate instead keeps *every* point: the points
//! sharing a cell form a frustum point set, addressed through an integer
//! key `(u, v, m)` in a hash index. On top of that structure sit a sparse
//! convolution that picks the range-nearest point of each window cell, a
//! stride-window farthest point sampling, a forward-only segmentation
//! network whose output covers all input points, and the evaluation /
//! baseline tooling to measure what conventional projection loses.
//!
//! The `book/` directory of the repository walks through the concepts
//! chapter by chapter; its code snippets compile and run as doc-tests of
//! this crate.

pub mod config;
pub mod error;
pub mod frustum;
pub mod geometry;
pub mod hashindex;
pub mod io;
pub mod losses;
pub mod mat;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod sampling;
pub mod sfconv;

pub use error::{Error, Result};
pub use frustum::{build_frustum_grid, FrustumGrid};
pub use geometry::{
    normalize_features, project_cloud, NormStats, PointCloud, Projected, SphericalConfig,
};
pub use hashindex::{build_hash_index, encode_key, visit_frustum, HashIndex};
pub use mat::Mat;
pub use sampling::{f2ps, fps, rebuild_downsampled_grid, SampledCloud, SeedPolicy};
pub use sfconv::{gather_neighbors, sfc_backward, sfc_forward, upsample_sfc_forward, ConvKernel};

/// Book chapters double as doc-tests so the guide can never drift from the
/// API. Each struct only exists to host the included markdown.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/projection.md")]
    pub struct ProjectionChapter;
    #[doc = include_str!("../../../book/src/frustums.md")]
    pub struct FrustumsChapter;
    #[doc = include_str!("../../../book/src/convolution.md")]
    pub struct ConvolutionChapter;
    #[doc = include_str!("../../../book/src/sampling.md")]
    pub struct SamplingChapter;
    #[doc = include_str!("../../../book/src/network.md")]
    pub struct NetworkChapter;
    #[doc = include_str!("../../../book/src/losses-metrics.md")]
    pub struct LossesMetricsChapter;
}
