//! Fading channel draws and the second-moment matrix `D`.
//!
//! Every channel entry is modeled as `h = √α + s`, where `√α` is a
//! deterministic positive real mean and `s` is a zero-mean scattered
//! component with `E|s|² = β`. The scattered component's law depends on the
//! fading family:
//!
//! | family    | scattered component `s`                       | `β`                  |
//! |-----------|-----------------------------------------------|----------------------|
//! | Nakagami  | `√G·e^{jφ}`, `G ~ Gamma(m, Ω/m)`, φ uniform   | `Ω`                  |
//! | Rayleigh  | circular complex Gaussian `CN(0, Ω)`          | `Ω`                  |
//! | LogNormal | `L·√Ω·e^{jφ}`, `ln L ~ N(μ, σ²)`              | `Ω·e^{2μ+2σ²}`       |
//! | Suzuki    | `L·g`, `g ~ CN(0, Ω)`, `ln L ~ N(μ, σ²)`      | `Ω·e^{2μ+2σ²}`       |
//!
//! Only Nakagami admits a non-zero mean; the other families are zero-mean.
//! With i.i.d. entries, `E[HᴴH]` has `M(β+α)` on the diagonal and `Mα`
//! elsewhere, which is what [`build_d_matrix`] returns.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, ComplexMatrix};

/// Default Log-normal shadowing parameters (natural-log scale).
pub const DEFAULT_LOG_MU: f64 = 0.0;
pub const DEFAULT_LOG_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingFamily {
    Nakagami,
    Rayleigh,
    LogNormal,
    Suzuki,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingSpec {
    pub family: FadingFamily,
    /// Nakagami shape parameter.
    pub m: f64,
    /// Mean-square power of the scattered component.
    pub omega: f64,
    pub log_mu: f64,
    pub log_sigma: f64,
    /// α: squared per-entry mean.
    pub mean_sq: f64,
    /// β: per-entry variance.
    pub var: f64,
}

impl FadingSpec {
    pub fn nakagami(m: f64, omega: f64, mean_sq: f64) -> Self {
        Self {
            family: FadingFamily::Nakagami,
            m,
            omega,
            log_mu: DEFAULT_LOG_MU,
            log_sigma: DEFAULT_LOG_SIGMA,
            mean_sq,
            var: omega,
        }
    }

    pub fn rayleigh(omega: f64) -> Self {
        Self {
            family: FadingFamily::Rayleigh,
            m: 1.0,
            omega,
            log_mu: DEFAULT_LOG_MU,
            log_sigma: DEFAULT_LOG_SIGMA,
            mean_sq: 0.0,
            var: omega,
        }
    }

    pub fn log_normal(omega: f64, log_mu: f64, log_sigma: f64) -> Self {
        let mut spec = Self {
            family: FadingFamily::LogNormal,
            m: 1.0,
            omega,
            log_mu,
            log_sigma,
            mean_sq: 0.0,
            var: 0.0,
        };
        spec.var = spec.derived_var();
        spec
    }

    pub fn suzuki(omega: f64, log_mu: f64, log_sigma: f64) -> Self {
        Self {
            family: FadingFamily::Suzuki,
            ..Self::log_normal(omega, log_mu, log_sigma)
        }
    }

    /// Second moment of the Log-normal multiplier, `e^{2μ + 2σ²}`.
    pub fn log_normal_second_moment(&self) -> f64 {
        (2.0 * self.log_mu + 2.0 * self.log_sigma * self.log_sigma).exp()
    }

    /// β implied by the distribution parameters.
    pub fn derived_var(&self) -> f64 {
        match self.family {
            FadingFamily::Nakagami | FadingFamily::Rayleigh => self.omega,
            FadingFamily::LogNormal | FadingFamily::Suzuki => self.omega * self.log_normal_second_moment(),
        }
    }

    /// `E|h|² = β + α`.
    pub fn second_moment(&self) -> f64 {
        self.var + self.mean_sq
    }

    /// Every violated invariant, as `(field, constraint)` pairs.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let finite = [self.m, self.omega, self.log_mu, self.log_sigma, self.mean_sq, self.var]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            out.push(("fading", "all parameters must be finite".to_string()));
            return out;
        }
        if self.m <= 0.0 {
            out.push(("m", format!("m > 0 (got {})", self.m)));
        }
        if self.omega <= 0.0 {
            out.push(("omega", format!("omega > 0 (got {})", self.omega)));
        }
        if self.log_sigma < 0.0 {
            out.push(("log_sigma", format!("log_sigma >= 0 (got {})", self.log_sigma)));
        }
        if self.mean_sq < 0.0 {
            out.push(("mean_sq", format!("mean_sq >= 0 (got {})", self.mean_sq)));
        }
        if self.var < 0.0 {
            out.push(("var", format!("var >= 0 (got {})", self.var)));
        }
        if self.family != FadingFamily::Nakagami && self.mean_sq != 0.0 {
            out.push((
                "mean_sq",
                format!("mean_sq = 0 for {:?} fading (got {})", self.family, self.mean_sq),
            ));
        }
        if self.omega > 0.0 && self.log_sigma >= 0.0 {
            let derived = self.derived_var();
            if (self.var - derived).abs() > 1e-9 * derived.max(1.0) {
                out.push((
                    "var",
                    format!(
                        "var must equal the family's scattered power {derived} (got {})",
                        self.var
                    ),
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((name, reason)) => Err(Error::invalid(name, reason)),
        }
    }
}

fn uniform_phase<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>())
}

/// Circular complex Gaussian with `E|z|² = power`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let s = (0.5 * power).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

fn log_normal_multiplier<R: Rng + ?Sized>(spec: &FadingSpec, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    (spec.log_mu + spec.log_sigma * z).exp()
}

/// Nakagami-m amplitude via `√G`, `G ~ Gamma(shape m, scale Ω/m)`.
pub fn sample_nakagami_amplitude<R: Rng + ?Sized>(spec: &FadingSpec, rng: &mut R) -> Result<f64> {
    if spec.family != FadingFamily::Nakagami {
        return Err(Error::invalid(
            "family",
            "Nakagami amplitude requested for another family",
        ));
    }
    if !(spec.m > 0.0) {
        return Err(Error::invalid("m", format!("m > 0 (got {})", spec.m)));
    }
    if !(spec.omega > 0.0) {
        return Err(Error::invalid("omega", format!("omega > 0 (got {})", spec.omega)));
    }
    let gamma = Gamma::new(spec.m, spec.omega / spec.m).map_err(|e| Error::invalid("m", e.to_string()))?;
    Ok(gamma.sample(rng).sqrt())
}

/// Suzuki coefficient `L·g`: Log-normal shadowing times a Rayleigh coefficient.
pub fn sample_suzuki_coefficient<R: Rng + ?Sized>(spec: &FadingSpec, rng: &mut R) -> Result<Complex64> {
    if !spec.log_mu.is_finite() || !spec.log_sigma.is_finite() || !spec.omega.is_finite() {
        return Err(Error::invalid("fading", "non-finite Suzuki parameters"));
    }
    if spec.log_sigma < 0.0 {
        return Err(Error::invalid(
            "log_sigma",
            format!("log_sigma >= 0 (got {})", spec.log_sigma),
        ));
    }
    if !(spec.omega > 0.0) {
        return Err(Error::invalid("omega", format!("omega > 0 (got {})", spec.omega)));
    }
    let shadow = log_normal_multiplier(spec, rng);
    Ok(complex_gaussian(rng, spec.omega).scale(shadow))
}

/// Zero-mean scattered component of one channel entry.
pub fn sample_scattered<R: Rng + ?Sized>(spec: &FadingSpec, rng: &mut R) -> Result<Complex64> {
    match spec.family {
        FadingFamily::Nakagami => {
            let r = sample_nakagami_amplitude(spec, rng)?;
            Ok(uniform_phase(rng).scale(r))
        }
        FadingFamily::Rayleigh => Ok(complex_gaussian(rng, spec.omega)),
        FadingFamily::LogNormal => {
            let shadow = log_normal_multiplier(spec, rng);
            Ok(uniform_phase(rng).scale(shadow * spec.omega.sqrt()))
        }
        FadingFamily::Suzuki => sample_suzuki_coefficient(spec, rng),
    }
}

/// `dim × dim` matrix of i.i.d. entries `√α + s`.
pub fn sample_channel_matrix<R: Rng + ?Sized>(spec: &FadingSpec, dim: usize, rng: &mut R) -> Result<ComplexMatrix> {
    if dim < 1 {
        return Err(Error::invalid("dim", "dim >= 1"));
    }
    spec.validate()?;
    let mean = Complex64::new(spec.mean_sq.sqrt(), 0.0);
    let mut h = ComplexMatrix::zeros(dim, dim);
    // Column-major fill keeps the draw order fixed for a given seed.
    for j in 0..dim {
        for i in 0..dim {
            h[(i, j)] = mean + sample_scattered(spec, rng)?;
        }
    }
    Ok(h)
}

/// Monte Carlo estimate of `E[HᴴH]`.
pub fn empirical_gram<R: Rng + ?Sized>(
    spec: &FadingSpec,
    dim: usize,
    samples: usize,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    let mut acc = ComplexMatrix::zeros(dim, dim);
    for _ in 0..samples {
        let h = sample_channel_matrix(spec, dim, rng)?;
        acc += h.adjoint() * &h;
    }
    Ok(acc.unscale(samples as f64))
}

/// Second-moment matrix `D` of the main channel.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    pub d: ComplexMatrix,
    pub alpha: f64,
    pub beta: f64,
    pub dim: usize,
}

fn check_moments(alpha: f64, beta: f64, dim: usize) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::invalid("alpha", format!("alpha >= 0 (got {alpha})")));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::invalid("beta", format!("beta >= 0 (got {beta})")));
    }
    if dim < 1 {
        return Err(Error::invalid("dim", "dim >= 1"));
    }
    Ok(())
}

/// `M·[(β+α) on the diagonal, α elsewhere]`.
pub fn build_d_matrix(alpha: f64, beta: f64, dim: usize) -> Result<MomentMatrix> {
    check_moments(alpha, beta, dim)?;
    let m = dim as f64;
    let d = ComplexMatrix::from_fn(dim, dim, |i, j| {
        let v = if i == j { beta + alpha } else { alpha };
        Complex64::new(m * v, 0.0)
    });
    Ok(MomentMatrix { d, alpha, beta, dim })
}

/// `M(β+α)·I_M`, the Suzuki form of `D`.
pub fn build_d_suzuki(alpha: f64, beta: f64, dim: usize) -> Result<MomentMatrix> {
    check_moments(alpha, beta, dim)?;
    let d = linalg::identity(dim).scale(dim as f64 * (beta + alpha));
    Ok(MomentMatrix { d, alpha, beta, dim })
}

impl MomentMatrix {
    /// `D` for a fading spec, using the diagonal form for Suzuki channels.
    pub fn for_spec(spec: &FadingSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        match spec.family {
            FadingFamily::Suzuki => build_d_suzuki(spec.mean_sq, spec.var, dim),
            _ => build_d_matrix(spec.mean_sq, spec.var, dim),
        }
    }
}

/// Linear power factor `10^(−A_R/10)` of a rain attenuation in dB.
pub fn rain_factor(a_r_db: f64) -> f64 {
    10f64.powf(-a_r_db / 10.0)
}

pub fn apply_rain_attenuation(snr_linear: f64, a_r_db: f64) -> f64 {
    snr_linear / 10f64.powf(a_r_db / 10.0)
}

/// Main channel plus estimated interference channels toward the other cells.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub h1: ComplexMatrix,
    pub h2_estimates: Vec<ComplexMatrix>,
    pub dim: usize,
}

impl ChannelSet {
    pub fn new(h1: ComplexMatrix, h2_estimates: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = h1.nrows();
        linalg::ensure_square(&h1, dim)?;
        for h in &h2_estimates {
            linalg::ensure_square(h, dim)?;
        }
        Ok(Self { h1, h2_estimates, dim })
    }

    /// Draws a channel set for one cell of an `num_cells`-cell network.
    pub fn sample<R: Rng + ?Sized>(spec: &FadingSpec, dim: usize, num_cells: usize, rng: &mut R) -> Result<Self> {
        if num_cells < 1 {
            return Err(Error::invalid("num_cells", "num_cells >= 1"));
        }
        let h1 = sample_channel_matrix(spec, dim, rng)?;
        let h2 = (1..num_cells)
            .map(|_| sample_channel_matrix(spec, dim, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(h1, h2)
    }
}
