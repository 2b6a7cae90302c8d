//! Simulation, expectation and optimisation tools for networks whose members
//! leave over time, each departure raising the leave probability of the
//! neighbours it leaves behind.

pub mod checks;
pub mod corpus;
pub mod dynamics;
pub mod error;
pub mod expectation;
pub mod graph;
pub mod influence;
pub mod io;
pub mod montecarlo;
pub mod optimize;

pub use dynamics::{
    gain_broadcast, gain_multi, gain_single, simulate, step, update_probability, GainResult,
    LeaveSampler, SimulationConfig, SimulationTrace,
};
pub use error::{DecayError, Result};
pub use graph::{
    build_network, is_decaying, DecayingNetwork, Edge, InitialProbability, NodeId, NodeState,
    StepRecord,
};
pub use optimize::{Mode, Objective, SeedSelection};
