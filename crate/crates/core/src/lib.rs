//! Gaussian-state simulation of continuously probed atomic magnetometers.
//!
//! The joint state of the field components, the collective atomic spins and
//! the probe segments is tracked as a mean vector and a doubled covariance
//! matrix, conditioned on homodyne readout of every probe segment.

pub mod engine;
pub mod entanglement;
pub mod error;
pub mod hamiltonian;
pub mod layout;
pub mod noise;
pub mod record;
pub mod riccati;
pub mod setup;
pub mod state;
pub mod step;

pub use engine::{
    error_stats, estimator_error_stats, run, run_ensemble, ErrorStats, NoiseConfig, ScenarioConfig, SetupSource, TrueField,
    RNG_ALGORITHM,
};
pub use entanglement::{geof, pair_geof, pair_geof_series, standard_form, StandardFormParams};
pub use error::{Error, Result};
pub use hamiltonian::{compile, BilinearHamiltonian};
pub use layout::{Axis, BeamId, GasId, Orientation, PerAxis, Quadrature, Variable, VariableLayout};
pub use noise::{rates_from_physical, AbsorptionCompounding, NoiseParams, NoiseRates, PhysicalNoiseParams};
pub use record::{RunSummary, Sample, TrajectoryRecord};
pub use setup::{builtin_descriptor, builtin_setup, Couplings, ScenarioName, SetupDescriptor};
pub use state::{make_initial_state, GaussianState, MeasurementSpec, OutcomeSource};
pub use step::StepMatrix;
