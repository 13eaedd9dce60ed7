//! Reduced-dimension decomposed aggregation beamforming (DAB) for MIMO
//! over-the-air computation in clustered channels.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: Hermitian eigendecomposition, SVD, principal subspaces and
//!   the projection 2-norm subspace distance.
//! - [`channel`]: one-ring cluster covariances, cluster ranks and fading draws.
//! - [`aircomp`]: optimal denoising factor, zero-forcing precoders and the
//!   closed-form and Monte Carlo AirComp MSE of a receive beamformer.
//! - [`design`]: the disjoint-cluster and overlapping-cluster DAB designs and a
//!   structureless reference design.
//! - [`rank_select`]: surrogate-MSE channel-rank selection.
//! - [`feedback`]: noiseless analog feedback protocols that rebuild the DAB at
//!   the access point.
//! - [`experiments`]: scenario catalog, seeded Monte Carlo runner and CSV output.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aircomp;
pub mod channel;
pub mod design;
pub mod error;
pub mod experiments;
pub mod feedback;
pub mod numerics;
pub mod rank_select;

pub use error::{Error, Result};
pub use numerics::{CMatrix, OrthonormalBasis};
