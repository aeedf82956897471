//! Multi-model wireless federated learning with uplink over-the-air
//! aggregation.
//!
//! The crate simulates `M` models trained simultaneously by `K`
//! single-antenna devices around an `N`-antenna base station: devices are
//! regrouped every frame, groups rotate over models round-robin, and each
//! round's local models reach the base station as one analog superposition
//! separated only by receive beamforming. It also contains the per-frame
//! joint transmit/receive beamforming solver and the convergence-bound
//! calculator whose per-frame term that solver minimizes.

pub mod beamform;
pub mod bound;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod learning;
pub mod linalg;
pub mod oaa;
pub mod rng;
pub mod scheduler;

pub use error::{Error, Result};
