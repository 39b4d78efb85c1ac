//! Robust scatter estimation and uniformity testing on the sphere.
//!
//! Observations are projected onto the unit sphere, Tyler's M-estimator of
//! scatter is fitted, the sample is whitened by the inverse square root of the
//! estimate, and the whitened directions are tested for uniformity with
//! Ajne- and Gine-type statistics whose null laws are mixtures of chi-squares.

pub mod engine;
pub mod error;
pub mod experiments;
pub mod gof;
pub mod io;
pub mod matrix;
pub mod null_model;
pub mod sample;
pub mod samplers;
pub mod special;
pub mod statistics;
pub mod tyler;

pub use engine::{run_test, Calibration, NullTable, TestConfig, TestReport, Verdict};
pub use error::{Error, Result};
pub use matrix::SpdMatrix;
pub use null_model::{build_null, NullModel, StatKind};
pub use sample::{DataMatrix, UnitSample};
pub use samplers::{RadialLaw, SeedSpec};
pub use statistics::StatPair;
pub use tyler::{tyler_fit, whiten, TylerConfig, TylerResult};
