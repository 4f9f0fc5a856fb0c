//! Illuminant estimation with ensembles of multivariate regression trees.
//!
//! Trees are fit directly against a white-balance distance measure
//! (recovery or reproduction angular error, taxicab, Euclidean, or perceptual
//! Euclidean) instead of a squared-error surrogate. Each leaf holds a whole
//! chromaticity, and the per-tree predictions of an ensemble are combined by
//! the same median-based minimizer used to label the leaves.
//!
//! ```
//! use illumtree::chroma::{distance, Chromaticity, DistanceMeasure};
//!
//! let truth = Chromaticity::gray();
//! let est = Chromaticity::from_rg(0.3833333333333333, 0.2833333333333333)?;
//! let err = distance(&DistanceMeasure::Recovery, &est, &truth)?;
//! assert!((err - 6.983).abs() < 1e-3);
//! # Ok::<(), illumtree::Error>(())
//! ```

pub mod chroma;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod minimize;
pub mod seed;
pub mod study;
pub mod synth;
pub mod tree;

pub use chroma::{distance, normalize, Chromaticity, DistanceMeasure};
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/distances.md")]
    mod distances {}
    #[doc = include_str!("../../../book/src/minimization.md")]
    mod minimization {}
    #[doc = include_str!("../../../book/src/trees.md")]
    mod trees {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
