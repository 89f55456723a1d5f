//! Deficiency indices of Schrödinger operators `−Δ + V` on `ℝⁿ` whose
//! potentials carry countably many uniformly separated point or shell
//! singularities.
//!
//! The total defect is assembled from per-singularity defects,
//! `Def(H) = Σ_j Def(H_j)`. Each point defect comes from a closed-form
//! angular-channel count that is cross-checked against a numerical Weyl
//! limit-point/limit-circle oracle ([`weyl`]).

pub mod bounds;
pub mod channels;
pub mod config;
pub mod decouple;
pub mod defect;
pub mod exec;
pub mod geometry;
pub mod grid_table;
pub mod ode;
pub mod partition;
pub mod quad;
pub mod support;
pub mod weyl;

pub use config::{validate_config, PotentialSpec, SingularityConfig, ValidatedConfig};
pub use defect::{DefectRecord, DefectValue, ExtNat};
pub use exec::Mode;
pub use weyl::{EndpointClass, RadialProblem, Spectral, WeylOptions};
