//! Newtonian structure of finite data-affinity kernels.
//!
//! Given an affinity matrix `K` with infinite self-affinity and a concave
//! transitivity modulus `nu`, this crate builds the representation
//!
//! ```text
//! K(x, y) = phi(h(x, y) * rho(x, y))
//! ```
//!
//! where `rho` is a metric, `h` is a bounded symmetric correction and `phi`
//! is a continuous decreasing profile, and it certifies every inequality the
//! construction promises on the finite data at hand.
//!
//! The pipeline, stage by stage:
//!
//! - [`profiles`]: the modulus `nu`, the ladder-built profile `psi`, its
//!   inverse `eta`, and `phi(r) = eta(r^beta)`.
//! - [`kernel`]: matrix validation, transitivity certification and an LP
//!   estimator for an admissible `nu`.
//! - [`stripes`]: threshold families around the diagonal and the induced
//!   quasi-metric `delta = psi(K)`.
//! - [`metrize`]: the metrization exponent and the chain metric built from
//!   `delta^alpha` by all-pairs shortest paths.
//! - [`decompose`]: assembly and the certification report.
//!
//! Hot O(n^3) loops run on rayon when the `parallel` feature is enabled
//! (the default); see [`exec::Exec`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decompose;
pub mod error;
pub mod exec;
pub mod io;
pub mod kernel;
pub mod metrize;
pub mod profiles;
pub mod stripes;
pub mod synth;

pub use decompose::{certify, decompose, CertificationReport, NewtonianDecomposition};
pub use error::{Error, Result};
pub use exec::Exec;
pub use kernel::{AffinityMatrix, ExtReal};
pub use metrize::{ChainMetricMatrix, MetrizationParams};
pub use profiles::{MonotonePl, PhiProfile, TransitivityModulus};
pub use stripes::QuasiMetricMatrix;
