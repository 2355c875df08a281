#![doc = include_str!("../README.md")]
// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ec;
pub mod eec;
pub mod error;
pub mod estimate;
pub mod fldb;
pub mod glm;
pub mod grid;
pub mod hermite;
mod quad;
pub mod rng;
pub mod sim;
pub mod study;

pub use ec::{ec_curve, ec_curve_average, ec_oracle, ConnectivityRule, EcCurve, StepCurve};
pub use eec::{EecModel, LevelGrid, ThresholdResult};
pub use error::{Error, Result};
pub use estimate::{Estimator, LkcVector, ResidualSample};
pub use grid::{FieldSample, GridField, Provenance};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ec-curves.md")]
    mod ec_curves {}
    #[doc = include_str!("../../../book/src/hermite-projection.md")]
    mod hermite_projection {}
    #[doc = include_str!("../../../book/src/bootstrap.md")]
    mod bootstrap {}
    #[doc = include_str!("../../../book/src/eec.md")]
    mod eec {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/glm.md")]
    mod glm {}
    #[doc = include_str!("../../../book/src/studies.md")]
    mod studies {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
