//! Multi-sensor simulation, metrics and the fusion benchmark.

pub mod bench;
pub mod bus;
pub mod experiment;
pub mod metrics;
pub mod phenomenon;
pub mod world;

pub use experiment::{prepare, run_experiment, run_scenario, run_world};
pub use metrics::{rmse, RoundMetrics};
pub use phenomenon::{observe, sample_phenomenon, Phenomenon};
pub use world::{Algorithm, Scenario, SensorState, Settings, World};
