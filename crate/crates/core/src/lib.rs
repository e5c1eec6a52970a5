//! Simulation and optimization toolkit for a MIMO CDMA satellite down-link
//! with an optical-fiber up-link.
//!
//! The crate is split along the physical chain:
//!
//! * [`channel_models`]: Nakagami-m / Rayleigh / Log-normal / Suzuki fading
//!   draws and the second-moment matrix `D` that turns a beamformer Gram
//!   matrix into an SNR (`SNR = Tr{Q D}`).
//! * [`robust_bound`]: worst-case inter-cell interference over a Frobenius
//!   ball of channel-estimation error, plus the norm identities behind it.
//! * [`beamform`]: per-cell capacity maximization under robust interference
//!   caps and a power cap, solved through its Lagrange dual with a
//!   trust-region dogleg multiplier update.
//! * [`pulse`]: RZ clock pulse-width selection under PAPR and OSNR
//!   constraints, and the RMS total-dispersion trend model.
//! * [`link_sim`]: received-signal assembly, Walsh-Hadamard spreading and
//!   Monte Carlo BPSK error-rate experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod beamform;
pub mod channel_models;
pub mod error;
pub mod linalg;
pub mod link_sim;
pub mod pulse;
pub mod rng;
pub mod robust_bound;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
