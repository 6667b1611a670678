//! Instance segmentation of indoor point clouds by deep metric embedding.
//!
//! The pipeline voxelizes a labeled point cloud, maps each voxel through a
//! small trainable network into a low-dimensional metric space shaped by a
//! discriminative loss (an attractive per-instance term and a repulsive
//! between-means term, with instance sizes weighted by an exponent `p`),
//! and recovers instances by hierarchical density clustering in that space.
//! Scene synthesis, an AP evaluation harness, and a CLI driver make the
//! whole loop runnable on a desktop CPU.

pub mod cloud;
pub mod cluster;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod loss;
pub mod net;
pub mod pipeline;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
