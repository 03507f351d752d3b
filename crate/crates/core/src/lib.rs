//! Multiscale analysis of binary data on the hypercube `{-1, +1}^d`.
//!
//! Data points are decomposed along a binary tree of nested subcubes: the
//! root fixes the coordinates on which the whole data set agrees best, each
//! level clusters its points with two-means and fixes more coordinates per
//! cluster, and a point is coded by the leaf cube it falls closest to.
//! Averaging reconstructions over trees grown from different random
//! clusterings gives a denoiser for binary data.
//!
//! ```
//! use cubetree::{bitcube::BinaryMatrix, tree::{build_tree, reconstruction_error, validate, TrainConfig}};
//!
//! // four coordinates shared by every point, the rest split into two patterns
//! let x = BinaryMatrix::from_fn(16, 40, |s, j| s < 4 || (s < 10) == (j % 2 == 0)).unwrap();
//! let tree = build_tree(&x, &TrainConfig::fixed(4, 3)).unwrap();
//! assert!(validate(&tree).is_empty());
//! assert_eq!(reconstruction_error(&tree, &x).unwrap(), 0);
//! ```

pub mod bitcube;
pub mod clustering;
pub mod denoise;
pub mod error;
pub mod io;
pub mod seed;
pub mod subcube;
pub mod tree;

pub use bitcube::{
    bit_error_rate, hamming_distance, inject_noise, BinaryMatrix, BitVecRef, BitVector, RealMatrix,
};
pub use denoise::{cycle_spin_denoise, threshold, DenoiseResult};
pub use error::{Error, Result};
pub use subcube::{Points, Subcube};
pub use tree::{build_tree, refine, validate, CubeTree, Restriction, TrainConfig};
