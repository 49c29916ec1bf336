//! Gait moment estimation from hip kinematics with a learned body-parameter
//! mapping.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};

/// Chapters of the guide in `book/`, compiled so their examples stay current.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/latency.md")]
    struct Latency;
}
