//! Optimal detection of an epidemic spreading from one population pool to
//! another.
//!
//! The crate simulates a two-pool stochastic SIR epidemic, reduces it to the
//! Markov state `(S(1), I(1), P)` where `P` is a pseudo-posterior probability
//! that Pool 2 is infected, and computes announce/wait detection maps by
//! sequential regression Monte Carlo. Detection maps can be evaluated against
//! threshold rules on frozen scenario sets.
//!
//! Module overview:
//!
//! - [`epidemic`]: exact SSA for the K-pool SIR model
//! - [`reduced`]: the reduced detection state and its one-step dynamics
//! - [`cost`]: immediate and pathwise detection costs
//! - [`loess`]: local linear regression with equivalent kernels
//! - [`design`]: Latin hypercube candidates and acquisition weights
//! - [`srmc`]: detection-map construction and the iteration over horizons
//! - [`strategy`]: detection policies and their Monte Carlo evaluation

pub mod cost;
pub mod design;
pub mod epidemic;
pub mod error;
pub mod loess;
pub mod reduced;
pub mod rng;
pub mod srmc;
pub mod strategy;

pub use cost::{immediate_cost, pathwise_cost, CostParams};
pub use design::{AcquisitionKind, StateBox};
pub use epidemic::{EpidemicParams, MultiPoolState, PoolState};
pub use error::{Error, Result};
pub use loess::{LoessConfig, LoessModel, LoessPrediction};
pub use reduced::{ModelVariant, ReducedState};
pub use rng::{RngStream, StreamLabel};
pub use srmc::{DetectionMap, MapDocument, MapSequence, SrmcConfig};
pub use strategy::{Policy, ScenarioSet, StrategyReport};
