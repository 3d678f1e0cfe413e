//! Reproducible benchmark harness for multi-class blood cell classifiers.
//!
//! The pipeline: a [`manifest::DatasetManifest`] is split with
//! [`split::plan_split`], model scores are loaded as
//! [`predictions::PredictionSet`]s, evaluated into exact
//! [`metrics::EvaluationResult`]s, combined by plurality vote in
//! [`ensemble`] and rendered by [`report`].

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod fraction;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod predictions;
pub mod registry;
pub mod report;
pub mod rng;
pub mod split;
pub mod synth;
pub mod taxonomy;

pub use error::{Error, Result};
pub use fraction::Fraction;
pub use taxonomy::ClassTaxonomy;
