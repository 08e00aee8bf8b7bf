//! Random-cluster (FK) percolation laboratory.
//!
//! Finite-volume random-cluster measures with boundary conditions and per-bond
//! intensities, samplers and exact oracles, detectors for seed/block/crossing
//! events, the block and square renormalization, and finite-size slab
//! threshold estimates.

pub mod lattice;
pub mod observables;
pub mod rcmodel;
pub mod renorm;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod threshold;
pub mod uf;
