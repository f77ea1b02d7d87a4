//! Building blocks for synthesizing labeled 3D face corpora from a small set
//! of densely corresponded scans.
//!
//! The pipeline runs: pairwise thin-plate-spline shape distances
//! ([`distance`]), selection of the most dissimilar (or similar) pairs,
//! midpoint identity synthesis ([`synth`]), multi-view rendering with
//! self-occlusion ([`views`]), three-channel geometry images ([`render`]) and
//! kernel-size statistics over those images ([`kstats`]).
//!
//! Heavy loops run on rayon when the `parallel` feature is on (default);
//! outputs are identical with it off.

pub mod cloud;
pub mod distance;
pub mod error;
pub mod gridfit;
pub mod hull;
pub mod io;
pub mod kdtree;
pub mod kstats;
pub mod normals;
pub mod par;
pub mod render;
pub mod synth;
pub mod synthetic;
pub mod tps;
pub mod views;

pub use cloud::{CorrespondedFace, FaceSet, PointCloud};
pub use error::Error;
