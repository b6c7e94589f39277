//! Decentralized Gaussian-process fusion and active sensing on road networks.

pub mod config;
pub mod embedding;
pub mod error;
pub mod fusion;
pub mod generate;
pub mod geodesic;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod network;
pub mod sensing;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use network::{RoadNetwork, SegmentId};
