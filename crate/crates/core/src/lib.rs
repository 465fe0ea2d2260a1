//! Dictionary-free alignment of contextual embedding spaces.
//!
//! The crate turns a tokenized parallel corpus plus per-token contextual
//! vectors into aligned source/target embedding matrices, learns a linear
//! (usually orthogonal) map between them and scores the result:
//!
//! - [`corpus`], [`embedding`], [`stream`]: file formats and validation.
//! - [`align`]: EM-trained IBM Model 2 style aligner (diagonal-tension prior)
//!   producing one-to-one silver links.
//! - [`represent`]: occurrence collection, type-level means and k-means
//!   sense splitting with knee detection.
//! - [`normalize`]: unit-length and iterative normalization.
//! - [`mapping`]: least squares and orthogonal Procrustes maps.
//! - [`retrieval`]: NN / CSLS retrieval and dictionary-induction scoring.
//! - [`geometry`]: isotropy, isometry and relational similarity.
//! - [`pipeline`]: config-driven end-to-end runs with a digest manifest.

pub mod align;
pub mod corpus;
pub mod embedding;
mod error;
pub mod geometry;
pub mod mapping;
pub mod normalize;
pub mod pipeline;
pub mod represent;
pub mod retrieval;
pub mod stream;

pub(crate) mod rng;

pub use error::{Error, Result};
