//! Drawing-based Parkinson's disease screening.
//!
//! The pipeline turns a photographed spiral or meander exam into a pair of
//! binary traces ([`imaging`]), pairs their radii around a common centre
//! ([`geometry`]), summarises the radial deviation into nine tremor features
//! ([`features`]), and classifies them with a from-scratch RBF support vector
//! machine or elastic-net logistic regression ([`models`]). [`eval`] holds
//! metrics, ROC analysis, cross-validation and patient-level aggregation.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod geometry;
pub mod imaging;
pub mod models;
pub mod pipeline;
pub mod synthetic;
pub mod table;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/traces.md")]
    mod traces {}
    #[doc = include_str!("../../../book/src/radial-profile.md")]
    mod radial_profile {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/reference/files.md")]
    mod files {}
    #[doc = include_str!("../../../book/src/reference/http.md")]
    mod http {}
}
