//! Construction and analysis of optimal locally repairable codes (LRCs) with
//! small update complexity.
//!
//! The crate builds Tanner graphs for uniform-group LRCs (a sparse
//! construction and the dense baseline), realizes them as codes over
//! GF(2^m), verifies distance and locality, measures how many parity blocks
//! each information update touches, and replays storage workloads against
//! realized codes in a simulated cluster.

pub mod analyzer;
pub mod builder;
pub mod codec;
pub mod field;
pub mod graph;
pub mod simstore;
pub mod updatemeter;

pub use builder::{BuildConfig, BuildError, CodeRealization, Method};
pub use field::{FieldContext, FieldElement, FieldMatrix};
pub use graph::{CodeParams, TannerGraph};
