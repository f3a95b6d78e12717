//! Toolkit for studying how language models portray cultures in
//! culture-conditioned generations.
//!
//! Stages: prompt rendering ([`prompting`]), cached sampling and scoring
//! ([`genclient`]), candidate symbol extraction ([`extraction`]),
//! probability-ranked assignment to cultures ([`assignment`]), marker
//! detection ([`markedness`]), analytics ([`metrics`]) and corpus
//! co-occurrence counting ([`corpusscan`]). [`pipeline`] runs them as
//! resumable stages over a workspace directory.

pub mod assignment;
pub mod corpusscan;
pub mod error;
pub mod extraction;
pub mod genclient;
pub mod markedness;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod roster;
pub mod store;
pub mod text;

pub use error::{Error, Result};
