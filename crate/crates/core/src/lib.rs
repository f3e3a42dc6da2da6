//! Federated bandit optimization of non-linear black-box functions.
//!
//! `N` clients share a finite decision set and learn a common neural-network
//! surrogate. After a uniform exploration phase the clients jointly fit an
//! anchor model with distributed Gradient Langevin Dynamics; they then run
//! optimistic exploration with confidence statistics built from gradients
//! at that fixed anchor, synchronizing through a server only when an
//! information-growth trigger fires.

pub mod cli;
pub mod confidence;
pub mod error;
pub mod federation;
pub mod linalg;
pub mod models;
pub mod objectives;
pub mod oracle;
pub mod verify;

pub use error::{Error, Result};
