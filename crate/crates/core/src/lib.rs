//! Learned collision detection for multi-arm robot workspaces.
//!
//! The crate is organised bottom-up:
//!
//! - [`kinematics`]: serial revolute chains and the forward-kinematics feature map.
//! - [`geometry`]: environments, seeded generation and the exact capsule collision oracle.
//! - [`dataset`]: uniform configuration sampling, splits, target scaling and file formats.
//! - [`deepcollide`]: the positional-encoding network, its hand-written gradients and training loop.
//! - [`fastron`]: the kernel-perceptron baseline with lazy Gram columns.
//! - [`evalbench`]: metrics, timing, Pareto extraction and experiment sweeps.

pub mod dataset;
pub mod deepcollide;
pub mod error;
pub mod evalbench;
pub mod fastron;
pub mod geometry;
pub mod kinematics;
pub mod rng;

pub use error::{Error, Result};

/// Version string embedded in every artifact this crate writes.
pub const TOOL_VERSION: &str = concat!("deepcollide ", env!("CARGO_PKG_VERSION"));
