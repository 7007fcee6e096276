//! Word-variation discovery and image-set purification for building
//! webly-supervised image datasets.

pub mod corpus;
pub mod pipeline;
pub mod purifier;
pub mod rng;
pub mod semantics;
pub mod synth;
pub mod union_find;
pub mod vision;
