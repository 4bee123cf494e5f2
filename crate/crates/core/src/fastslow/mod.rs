//! Fast-slow systems with an OU-type fast variable and their averaged limit.

pub mod drift;
pub mod fixed_point;
pub mod ou;
pub mod solve;
pub mod system;

pub use drift::{averaged_drift, DriftEstimate, DriftHandle, DriftSettings, EstimatorMode, TabulatedDrift};
pub use fixed_point::{pullback_fixed_point, ConjugatedFlow, FixedPoint};
pub use solve::{
    block_integrals, khasminskii_aux, solve_averaged, solve_fastslow, averaging_distance, Distance, FastSlowPaths,
};
pub use system::{FastSlowSystem, SystemParts};
