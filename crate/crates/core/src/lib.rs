//! Rate modeling for decoy-state BB84 links read out by gated InGaAs
//! avalanche photodiodes.
//!
//! The crate is organised bottom-up:
//!
//! * [`detector`] holds detector operating points and the temperature laws for
//!   dark counts and afterpulsing, including fitting those laws.
//! * [`link`] evaluates fiber transmittance, per-intensity gain and QBER and
//!   expands them into expected session counts.
//! * [`finite_key`] turns session counts into decoy bounds and a composably
//!   secure key length.
//! * [`sim`] is a gate-level Monte Carlo of the detector and of a full QKD
//!   session; it is the independent check on the analytic path.
//! * [`experiments`] drives temperature and distance sweeps, cross-over and
//!   cut-off searches and operating-point selection.
//! * [`cli`] is the command-line front end used by the `apd-qkd` binary.

pub mod cli;
pub mod detector;
pub mod error;
pub mod experiments;
pub mod finite_key;
pub mod link;
pub mod sim;

pub use detector::{DetectorOperatingPoint, TemperatureModel};
pub use error::{Error, Result};
pub use finite_key::{DecoyBounds, EpsilonBudget, FiniteKeySettings, SecureKeyResult};
pub use link::{ChannelConfig, ProtocolConfig, SessionStatistics};
