//! Effective-path profiling for small feed-forward networks.
//!
//! An image's effective path is the set of neurons, synapses and weights
//! that carry most of the evidence for a chosen output neuron. Paths of many
//! images are unioned into class profiles; how well a new image's path fits
//! the profile of its predicted class is a signal for adversarial inputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod attacks;
pub mod bitset;
pub mod data;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod path;

pub use bitset::Bitset;
pub use error::{Error, Result};
