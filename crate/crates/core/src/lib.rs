//! Synthesis, solving and evaluation of jigsaw puzzles whose pieces are the
//! faces of a convex partition of an image.

// negated comparisons reject NaN parameters
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod corpus;
pub mod cycles;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod mating_graph;
pub mod partition;
pub mod pictorial;
pub mod pipeline;
pub mod raster;
pub mod spring;

pub use error::{Error, ErrorKind, Result};
