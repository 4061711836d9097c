//! Finite-system signal model: configuration, fading, spreading codes,
//! windowed multipath replicas, ISI-nulling projections and covariances.

mod config;
mod covariance;
mod fading;
mod scenario;
mod signals;

pub use config::{extended_float, SystemConfig};
pub use covariance::{assemble_covariance, SignalBank};
pub use fading::{FadingKind, FadingModel};
pub use scenario::Scenario;
pub use signals::{
    build_windowed_replicas, generate_code, isi_null_basis, windowed_composites,
    MultipathChannel, NullProjector, UserSignals, ISI_TOL,
};
