//! Simulation and estimation of practice effects in longitudinal cognitive
//! data.
//!
//! The crate simulates multi-cohort studies in which repeated testing adds a
//! visit-specific practice effect on top of age-related change, and fits the
//! marginal (GEE) and random-intercept (REML) models used to separate the two.

pub mod compare;
pub mod config;
pub mod csvio;
pub mod data;
pub mod design;
pub mod error;
pub mod fit;
pub mod gee;
pub mod linalg;
pub mod lmm;
pub mod par;
pub mod replicate;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod svg;

pub use compare::{compare, CompareOptions, ComparisonReport};
pub use data::{derive_timing, validate_dataset, DayRecord, LongitudinalDataset, VisitRecord};
pub use design::{aligned_pe_estimate, build_design, AgeCoding, DesignMatrix, ModelSpec, PeCoding};
pub use error::{Error, Result};
pub use fit::{CoefficientTable, FitSummary, StatKind, TermEstimate};
pub use gee::{fit_gee, GeeFit, WorkingCorrelation};
pub use lmm::{fit_lmm, LmmFit};
pub use par::Execution;
pub use replicate::{Engine, ReplicationPlan, ReplicationResult};
pub use simulate::{simulate_cohorts, SimulationConfig};
