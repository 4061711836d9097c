//! Energy-efficient uplink power control for asynchronous multipath CDMA.
//!
//! Two routes to the same operating point:
//!
//! * an exact finite-system non-cooperative game ([`game`]) over linear
//!   multiuser receivers ([`receivers`]) built on a chip-rate signal model
//!   ([`model`]);
//! * large-system closed forms ([`lsa`]) that predict the equilibrium powers,
//!   SINRs and utilities from the fading law alone.
//!
//! [`montecarlo`] runs seeded trials of the former and compares them with the
//! latter.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod game;
pub mod lsa;
pub mod model;
pub mod montecarlo;
pub mod receivers;
pub mod roots;

pub use error::{Error, Result};
pub use game::{
    run_equilibrium, solve_target_sinr, EfficiencyFunction, EquilibriumOptions, EquilibriumResult,
    UtilityModel,
};
pub use lsa::{LsaPrediction, QuantileMode, TrainingSweep, TrainingSweepPoint};
pub use model::{FadingKind, FadingModel, MultipathChannel, Scenario, SystemConfig};
pub use montecarlo::{ComparisonPoint, PowerRule, ProfileComparison, ProfileMode};
pub use receivers::{FilterResult, ReceiverKind};
