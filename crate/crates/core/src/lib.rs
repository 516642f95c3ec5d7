pub mod bits;
pub mod coloring_qubo;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod graphs;
pub mod heuristic;
pub mod rng;
pub mod schedules;
pub mod spectrum;
pub mod svmc;

pub use bits::Bits;
pub use error::{Error, Result};
