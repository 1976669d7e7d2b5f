pub mod camera;
pub mod completion;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod segtree;
pub mod sim;
pub mod tracking;
pub mod voxel;

pub use error::{Error, Result, Stage};
