//! Decomposed precision and coverage of generated-image embeddings.
//!
//! Real and generated images are embedded three ways (full image, object
//! patches only, background patches only). For every region and view this
//! crate builds a k-NN manifold over the real embeddings and measures how
//! many generated embeddings land inside it (precision) and how many real
//! embeddings have a generated neighbor in their ball (coverage).

pub mod embedstore;
pub mod manifold;
pub mod decompose;
pub mod analysis;
