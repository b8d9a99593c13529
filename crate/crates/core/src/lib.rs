//! Desk-scale LiDAR-only unsupervised domain adaptation for point-cloud
//! semantic segmentation.
//!
//! The pipeline pairs two representations of the same sweep — a voxelized
//! point cloud and a 5-channel range image — trains a miniature segmentation
//! network per representation with cross-modal mimicry between them, and
//! aligns source and target domains with three adversarial discriminators.
//! Everything runs on synthetic scenes over a built-in f64 reverse-mode
//! autodiff, so every gradient and statistic is checkable end to end.

pub mod autodiff;
pub mod config;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod par;
pub mod projection;
pub mod targetlike;
pub mod trainer;
pub mod verify;
pub mod voxel;

pub use error::{Error, Result};
