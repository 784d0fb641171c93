//! Monte Carlo simulation of continuous-variable QKD with a locally generated
//! local oscillator: laser phase noise, the pulsed quantum link with
//! heterodyne detection, feedforward phase recovery from reference pulses,
//! and asymptotic and finite-size key-rate bounds.

// `!(x > 0.0)` also rejects NaN, which is the point of every such check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod link_sim;
pub mod noise_models;
pub mod output;
pub mod phase_recovery;
pub mod security;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use output::{ExperimentResult, Series};
pub use stats::Estimate;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/laser-noise.md")]
    mod laser_noise {}
    #[doc = include_str!("../../../book/src/link.md")]
    mod link {}
    #[doc = include_str!("../../../book/src/phase-recovery.md")]
    mod phase_recovery {}
    #[doc = include_str!("../../../book/src/key-rates.md")]
    mod key_rates {}
    #[doc = include_str!("../../../book/src/finite-size.md")]
    mod finite_size {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
