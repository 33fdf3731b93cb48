//! Molecular index modulation over a multiple-input single-output diffusion
//! channel.
//!
//! Transmitters on a uniform circular array release molecules into a
//! driftless medium; a spherical receiver on the array axis absorbs them and
//! records which azimuthal region of its surface was hit. The crate provides
//! the geometry ([`topology`]), a Brownian Monte Carlo engine
//! ([`diffusion`]), bit/symbol mapping ([`codec`]), model-based decoders
//! ([`decoders`]) and a from-scratch convolutional decoder ([`cnn`]).

pub mod binio;
pub mod cnn;
pub mod codec;
pub mod config;
pub mod decoders;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
pub use grid::Grid;
pub use topology::{build_topology, RegionIndex, Topology, TopologyConfig, Vec3};
