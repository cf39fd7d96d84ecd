//! Simulation of an on-demand flexible transit service feeding a rail station.
//!
//! The crate is split into the road network and shortest paths, the
//! dial-a-ride dispatcher, traveller mode choice, the supply side (fares,
//! drivers, fleet sizing) and the engine that ties them into a day-to-day
//! simulation.

pub mod audit;
pub mod demand;
pub mod dispatch;
pub mod engine;
pub mod network;
pub mod supply;

pub use demand::{Mode, ModeMap};
pub use dispatch::{Tour, VehicleId};
pub use engine::{run_scenario, RunResult, Scenario, SimulationContext};
pub use network::{NodeId, RoadNetwork};
