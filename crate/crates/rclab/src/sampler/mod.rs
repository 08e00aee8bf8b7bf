//! Samplers for the random-cluster measure and exact oracles.

mod chain;
mod exact;

pub use chain::{default_burn_in, run_chain, sample_chain, ChainState, Kernel, SamplerError, Schedule};
pub use exact::{
    enumerate_exact, enumerate_ising, free_nodes, plus_exterior_bc, ExactError, ExactTable, ExteriorSpin, IsingTable,
    MAX_EXACT_BONDS, MAX_ISING_SPINS,
};
