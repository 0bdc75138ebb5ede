//! Obstacle pushability estimation from 3D point clouds.
//!
//! The pipeline segments a scene point cloud into ground and obstacles,
//! extracts per-obstacle size/shape/surface features, gates each obstacle
//! through a visual likelihood score, and predicts the peak push force with
//! a Bayesian linear regressor so a robot can decide which obstacles are
//! worth pushing out of the way. A synthetic terrain/rock/force generator
//! provides labeled training data and end-to-end verification.

pub mod error;
pub mod pointcloud;
pub mod index;
pub mod ply;
pub mod dbscan;
pub mod geom;
pub mod features;
pub mod vpp;
pub mod affordance;
pub mod synth;

pub use error::{Error, Result};
pub use index::SpatialIndex;
pub use pointcloud::{Point3, PointCloud};
