//! Deep learning channels: training feedforward networks with backpropagation
//! and its random-feedback relatives, plus a bench of ordinary differential
//! equations describing their averaged learning dynamics.
//!
//! Layout:
//! - [`linalg`], [`rng`], [`init`], [`transfer`], [`loss`]: numeric substrate.
//! - [`net`]: the forward channel.
//! - [`channel`]: error signals and weight updates for every channel variant.
//! - [`trainer`]: minibatch SGD and per-epoch metrics.
//! - [`data`]: IDX, Bianchini, delimited text, linear moments.
//! - [`ode`]: averaged-dynamics systems, RK4 integration, invariant analysis.
//! - [`experiment`]: config-driven runs that write metrics files.
//! - [`verify`]: the acceptance battery.

pub mod error;
pub mod linalg;
pub mod rng;
pub mod init;
pub mod transfer;
pub mod loss;
pub mod net;
pub mod data;
pub mod channel;
pub mod trainer;
pub mod ode;
pub mod experiment;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use rng::RngStream;
