//! Worst-case inter-cell interference over a Frobenius ball of channel error.
//!
//! A cell only knows an estimate `H̃` of each interference channel; the true
//! channel is `H̃ + Δ` with `‖Δ‖_F ≤ ξ`. For a beamformer `B` with Gram
//! matrix `Q = BBᴴ` the realized interference is
//! `‖(I_M ⊗ (H̃+Δ)) vec(B)‖² = Tr{Q (H̃+Δ)ᴴ(H̃+Δ)}`, and the triangle and
//! Cauchy-Schwarz inequalities on Frobenius norms, together with
//! `‖Δ ⊗ I_M‖_F = √M‖Δ‖_F`, bound it by
//!
//! ```text
//! Tr{Q · (H̃ᴴH̃ + √Mξ(√Mξ + 2‖H̃‖_F)·I_M)}
//! ```
//!
//! uniformly over the ball. The bracketed matrix is the "effective
//! interference matrix" consumed by the beamforming solver.

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyBall {
    pub xi: f64,
    pub dim: usize,
}

impl UncertaintyBall {
    pub fn new(xi: f64, dim: usize) -> Result<Self> {
        if !(xi >= 0.0) || !xi.is_finite() {
            return Err(Error::invalid("xi", format!("xi >= 0 (got {xi})")));
        }
        if dim < 1 {
            return Err(Error::invalid("dim", "dim >= 1"));
        }
        Ok(Self { xi, dim })
    }

    /// `√M·ξ`, the radius of the lifted error `Δ ⊗ I_M`.
    pub fn lifted_radius(&self) -> f64 {
        (self.dim as f64).sqrt() * self.xi
    }
}

#[derive(Debug, Clone)]
pub struct InterferenceBound {
    pub value: f64,
    pub effective_matrix: ComplexMatrix,
}

/// `‖Δ ⊗ I_M‖_F`, evaluated as `√M·‖Δ‖_F`.
pub fn kron_lift_norm(delta: &ComplexMatrix, dim: usize) -> Result<f64> {
    linalg::ensure_square(delta, dim)?;
    Ok((dim as f64).sqrt() * linalg::frobenius_norm(delta))
}

/// `H̃ᴴH̃ + √Mξ(√Mξ + 2‖H̃‖_F)·I_M`.
pub fn effective_interference_matrix(h2_hat: &ComplexMatrix, ball: &UncertaintyBall) -> Result<ComplexMatrix> {
    linalg::ensure_square(h2_hat, ball.dim)?;
    let r = ball.lifted_radius();
    let robust = r * (r + 2.0 * linalg::frobenius_norm(h2_hat));
    let gram = h2_hat.adjoint() * h2_hat;
    Ok(linalg::hermitian_part(&gram) + linalg::identity(ball.dim).scale(robust))
}

/// Worst-case interference power `Tr{Q·G}` for a PSD Gram matrix `Q`.
pub fn worst_case_interference(
    q: &ComplexMatrix,
    h2_hat: &ComplexMatrix,
    ball: &UncertaintyBall,
) -> Result<InterferenceBound> {
    linalg::ensure_square(q, ball.dim)?;
    linalg::ensure_psd(q, "q")?;
    let effective_matrix = effective_interference_matrix(h2_hat, ball)?;
    let value = linalg::trace_product_re(q, &effective_matrix).max(0.0);
    Ok(InterferenceBound {
        value,
        effective_matrix,
    })
}

/// Exact interference `‖(I_M ⊗ H₂) vec(B)‖²` through a concrete channel,
/// evaluated on the explicit Kronecker-vectorized form.
pub fn realized_interference(b: &ComplexMatrix, h2: &ComplexMatrix) -> Result<f64> {
    let dim = h2.nrows();
    linalg::ensure_square(h2, dim)?;
    if b.nrows() != dim {
        return Err(Error::dims(format!("{dim} rows"), format!("{} rows", b.nrows())));
    }
    let lifted = linalg::identity(b.ncols()).kronecker(h2);
    let y = lifted * linalg::vec(b);
    Ok(y.iter().map(|z| z.norm_sqr()).sum())
}

/// Trace form `Tr{Q H₂ᴴH₂}` of the realized interference, `Q = BBᴴ`.
pub fn realized_interference_gram(q: &ComplexMatrix, h2: &ComplexMatrix) -> Result<f64> {
    let dim = h2.nrows();
    linalg::ensure_square(h2, dim)?;
    linalg::ensure_square(q, dim)?;
    Ok(linalg::trace_product_re(q, &(h2.adjoint() * h2)))
}

/// Reverse-triangle floor on the received signal power,
/// `max(0, √Tr{QH̃ᴴH̃} − √Mξ·√Tr{Q})²`.
///
/// This is the pessimistic-signal formulation used as the comparison
/// baseline; it is not part of the interference bound above.
pub fn worst_case_signal_lower_bound(q: &ComplexMatrix, h1_hat: &ComplexMatrix, ball: &UncertaintyBall) -> Result<f64> {
    linalg::ensure_square(q, ball.dim)?;
    linalg::ensure_square(h1_hat, ball.dim)?;
    let nominal = linalg::trace_product_re(q, &(h1_hat.adjoint() * h1_hat)).max(0.0);
    let power = linalg::trace_re(q).max(0.0);
    let floor = nominal.sqrt() - ball.lifted_radius() * power.sqrt();
    Ok(floor.max(0.0).powi(2))
}

/// Signal moment matrix under the reverse-triangle floor: `(√D − √Mξ·I)₊²`.
///
/// Along every eigen-direction `u` of `D` this reproduces
/// [`worst_case_signal_lower_bound`] for `Q = uuᴴ` with `H̃₁ = √D`.
pub fn pessimistic_signal_matrix(d: &ComplexMatrix, ball: &UncertaintyBall) -> Result<ComplexMatrix> {
    linalg::ensure_square(d, ball.dim)?;
    let r = ball.lifted_radius();
    Ok(linalg::psd_function(d, |lambda| {
        (lambda.max(0.0).sqrt() - r).max(0.0).powi(2)
    }))
}
