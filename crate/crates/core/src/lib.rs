//! Simulation core for delayed entanglement echo experiments on an NV
//! centre electron coupled to a bath of nuclear spins.

pub mod bath;
pub mod cce;
pub mod constants;
pub mod contract;
pub mod error;
pub mod linalg;
pub mod oracles;
pub mod schedule;
pub mod dynamics;
pub mod spin_system;
pub mod swap_gate;

pub use constants::{PhysicalConstants, Species};
pub use error::{EchoError, Result};
