//! Guide chapters compiled as documentation so their code samples run as tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/binary-matrices.md")]
pub mod binary_matrices {}

#[doc = include_str!("../../../book/src/subcubes.md")]
pub mod subcubes {}

#[doc = include_str!("../../../book/src/clustering.md")]
pub mod clustering {}

#[doc = include_str!("../../../book/src/trees.md")]
pub mod trees {}

#[doc = include_str!("../../../book/src/refinement.md")]
pub mod refinement {}

#[doc = include_str!("../../../book/src/denoising.md")]
pub mod denoising {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
