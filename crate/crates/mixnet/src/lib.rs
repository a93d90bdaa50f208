//! Mixture of networks: K small generator MLPs trained jointly by an
//! EM-like two-step procedure with a maximum mean discrepancy cost.
//!
//! The trained model is both a generative model (pick a component by its
//! prior, feed uniform noise through that network) and a clustering method
//! (assign each point to the component with the highest membership
//! probability). See the `mixture` module for the two training steps and
//! the `mixnet` binary for the end-to-end pipeline.

pub mod autoencoder;
pub mod cli;
pub mod clustering;
pub mod data;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod mat;
pub mod mixture;
pub mod nn;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
