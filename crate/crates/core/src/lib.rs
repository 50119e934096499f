//! Numerics for toric gravitational instantons with ALE or ALF asymptotics:
//! rod-structure bookkeeping, closed-form reference metrics, explicit model
//! maps with prescribed rod data, a harmonic-map relaxation solver on the
//! half-plane, and diagnostics that read geometric invariants back off a
//! solved field.

pub mod config;
pub mod diagnostics;
pub mod grid;
pub mod mat2;
pub mod model_map;
pub mod oracles;
pub mod rod;
pub mod snapshot;
pub mod solver;

pub use oracles::{AsymptoticModelParams, BasisTag, CenterSet, GramSample, OracleError};
pub use rod::{AdmissibilityReport, LensData, RodError, RodStructure, RodVector};
