//! Compact CPU convolutional-network engine built around a parameter-free
//! channel attention operator, its parameterized baselines, the residual
//! architectures they plug into, and exact parameter/MAC accounting.

pub mod attention;
pub mod cli;
pub mod config;
pub mod blocks;
pub mod cost;
pub mod error;
pub mod image;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
