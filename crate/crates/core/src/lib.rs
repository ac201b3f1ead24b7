//! Collaborator selection and straggler-aware fusion for cooperative
//! bird's-eye-view perception, on a synthetic vehicle world.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bandit;
pub mod channel;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod fusion;
pub mod geometry;
pub mod perception;
pub mod rng;
pub mod sim;
pub mod world;

mod error;

pub use error::{Error, KernelKind, Result};
