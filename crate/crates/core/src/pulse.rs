//! RZ clock pulse-width selection and the total-dispersion trend model.
//!
//! Each clock pulse is a Gaussian whose full width at half maximum equals the
//! pulse width `t₁`, centered in its bit slot of length `T`. The overlap
//! probability is the pulse's tail mass past the point `T/2 − κ·t₁/2`, i.e.
//! `Q((T/2 − κt₁/2)/σ)` with `σ = t₁ / (2√(2 ln 2))`. It grows with both `t₁`
//! and `κ`, while the PAPR and OSNR constraints each bound `t₁` from below,
//! so the optimum sits at the larger lower bound with `κ` at its floor.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// `2√(2 ln 2)`: FWHM of a unit-σ Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Bit period `T` (s).
    pub bit_period: f64,
    /// Pulse peak amplitude `A_m` (V).
    pub amplitude: f64,
    pub papr_th_db: f64,
    /// Linear OSNR target.
    pub osnr_tar: f64,
    /// `‖H_fiber‖_F²`.
    pub fiber_norm_sq: f64,
    /// `σ²_{n,fiber}` (W).
    pub noise_var: f64,
    #[serde(default = "default_kappa_min")]
    pub kappa_min: f64,
}

pub fn default_kappa_min() -> f64 {
    0.1
}

impl PulseConfig {
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut positive = |name: &'static str, v: f64| {
            if !(v > 0.0) || !v.is_finite() {
                out.push((name, format!("{name} > 0 (got {v})")));
            }
        };
        positive("bit_period", self.bit_period);
        positive("amplitude", self.amplitude);
        positive("osnr_tar", self.osnr_tar);
        positive("fiber_norm_sq", self.fiber_norm_sq);
        positive("noise_var", self.noise_var);
        if !(self.kappa_min > 0.0 && self.kappa_min < 1.0) {
            out.push(("kappa_min", format!("0 < kappa_min < 1 (got {})", self.kappa_min)));
        }
        if !self.papr_th_db.is_finite() {
            out.push(("papr_th_db", "papr_th_db must be finite".to_string()));
        }
        if out.is_empty() {
            let required = self.papr_lower_bound().max(self.osnr_lower_bound());
            if required > self.bit_period * (1.0 + 1e-12) {
                out.push((
                    "osnr_tar",
                    format!(
                        "infeasible: the PAPR/OSNR constraints need t1 >= {required:e} s, beyond the bit period {:e} s",
                        self.bit_period
                    ),
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((_, reason)) if reason.starts_with("infeasible") => Err(Error::Infeasible(reason)),
            Some((name, reason)) => Err(Error::invalid(name, reason)),
        }
    }

    /// Smallest width allowed by the PAPR cap: `T·10^(−PAPR_th/10)`.
    pub fn papr_lower_bound(&self) -> f64 {
        self.bit_period * 10f64.powf(-self.papr_th_db / 10.0)
    }

    /// Smallest width meeting the OSNR target: `OSNR·σ²·T / (A_m²‖H‖²)`.
    pub fn osnr_lower_bound(&self) -> f64 {
        self.osnr_tar * self.noise_var * self.bit_period / (self.amplitude * self.amplitude * self.fiber_norm_sq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BindingConstraint {
    Papr,
    Osnr,
    Both,
}

impl std::fmt::Display for BindingConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Papr => "PAPR",
            Self::Osnr => "OSNR",
            Self::Both => "Both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSolution {
    pub t1: f64,
    pub kappa: f64,
    pub overlap_prob: f64,
    pub papr_db: f64,
    pub osnr: f64,
    pub binding: BindingConstraint,
}

fn check_width(bit_period: f64, t1: f64) -> Result<()> {
    if !(bit_period > 0.0) {
        return Err(Error::invalid("bit_period", format!("T > 0 (got {bit_period})")));
    }
    if !(t1 > 0.0 && t1 <= bit_period) {
        return Err(Error::invalid(
            "t1",
            format!("0 < t1 <= T (got t1 = {t1}, T = {bit_period})"),
        ));
    }
    Ok(())
}

/// `10·log₁₀(T/t₁)`.
pub fn papr_db(bit_period: f64, t1: f64) -> Result<f64> {
    check_width(bit_period, t1)?;
    Ok(10.0 * (bit_period / t1).log10())
}

/// `t₁·A_m²/T`.
pub fn average_power(t1: f64, amplitude: f64, bit_period: f64) -> Result<f64> {
    check_width(bit_period, t1)?;
    Ok(t1 * amplitude * amplitude / bit_period)
}

/// `‖H_fiber‖²·P_avg / σ²`.
pub fn osnr(t1: f64, config: &PulseConfig) -> Result<f64> {
    let power = average_power(t1, config.amplitude, config.bit_period)?;
    Ok(config.fiber_norm_sq * power / config.noise_var)
}

/// Standard normal upper tail.
pub fn gaussian_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Tail mass of the slot's Gaussian pulse past `T/2 − κt₁/2`.
pub fn overlap_probability(t1: f64, kappa: f64, bit_period: f64) -> Result<f64> {
    check_width(bit_period, t1)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::invalid("kappa", format!("0 < kappa < 1 (got {kappa})")));
    }
    let sigma = t1 / FWHM_PER_SIGMA;
    let boundary = 0.5 * bit_period - 0.5 * kappa * t1;
    Ok(gaussian_tail(boundary / sigma))
}

pub fn solve_pulse(config: &PulseConfig) -> Result<PulseSolution> {
    config.validate()?;
    let by_papr = config.papr_lower_bound();
    let by_osnr = config.osnr_lower_bound();
    let t1 = by_papr.max(by_osnr).min(config.bit_period);
    let binding = if (by_papr - by_osnr).abs() <= 1e-12 * config.bit_period {
        BindingConstraint::Both
    } else if by_papr > by_osnr {
        BindingConstraint::Papr
    } else {
        BindingConstraint::Osnr
    };
    let kappa = config.kappa_min;
    Ok(PulseSolution {
        t1,
        kappa,
        overlap_prob: overlap_probability(t1, kappa, config.bit_period)?,
        papr_db: papr_db(config.bit_period, t1)?,
        osnr: osnr(t1, config)?,
        binding,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSpec {
    /// Per-mode dispersion contributions (ps/km).
    pub coefficients: Vec<f64>,
    pub length_km: f64,
}

/// RMS total dispersion `L·√(Σ dᵢ²)` in ps.
pub fn total_dispersion(spec: &DispersionSpec) -> Result<f64> {
    if !(spec.length_km > 0.0) || !spec.length_km.is_finite() {
        return Err(Error::invalid(
            "length_km",
            format!("length_km > 0 (got {})", spec.length_km),
        ));
    }
    if spec.coefficients.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(Error::invalid(
            "coefficients",
            "dispersion coefficients must be finite and >= 0",
        ));
    }
    let rms = spec.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(spec.length_km * rms)
}

/// Dispersion coefficients that depend on the clock pulse width.
///
/// Trend model only: the pulse-broadening contribution scales linearly with
/// the duty cycle `t₁/T`, the remaining modes are width-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispersionTrend {
    /// Width-independent contributions (ps/km).
    pub static_coefficients: Vec<f64>,
    /// Broadening contribution at full duty cycle (ps/km).
    pub broadening_full_width: f64,
}

impl DispersionTrend {
    pub fn spec_for_width(&self, duty_cycle: f64, length_km: f64) -> DispersionSpec {
        let mut coefficients = self.static_coefficients.clone();
        coefficients.push(self.broadening_full_width * duty_cycle);
        DispersionSpec {
            coefficients,
            length_km,
        }
    }

    /// Total dispersion when the PAPR cap alone sets the pulse width.
    pub fn total_for_papr(&self, papr_th_db: f64, length_km: f64) -> Result<f64> {
        if !(papr_th_db >= 0.0) {
            return Err(Error::invalid(
                "papr_th_db",
                format!("papr_th_db >= 0 (got {papr_th_db})"),
            ));
        }
        let duty = 10f64.powf(-papr_th_db / 10.0);
        total_dispersion(&self.spec_for_width(duty, length_km))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(papr_th_db: f64, osnr_tar: f64) -> PulseConfig {
        PulseConfig {
            bit_period: 1e-10,
            amplitude: 1.0,
            papr_th_db,
            osnr_tar,
            fiber_norm_sq: 1.0,
            noise_var: 1.0,
            kappa_min: 0.1,
        }
    }

    #[test]
    fn papr_examples() {
        let t = 2.0;
        assert_eq!(papr_db(t, t).unwrap(), 0.0);
        assert!((papr_db(t, t / 2.0).unwrap() - 3.010_299_956_639_812).abs() < 1e-12);
        assert!((papr_db(t, t / 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(papr_db(t, 0.0).is_err());
        assert!(papr_db(t, 2.5).is_err());
    }

    #[test]
    fn average_power_and_osnr_examples() {
        assert_eq!(average_power(1.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(average_power(0.5, 2.0, 1.0).unwrap(), 2.0);
        assert!((average_power(0.3, 1.0, 1.0).unwrap() - 0.3).abs() < 1e-15);

        let mut c = config(3.0, 1.0);
        c.bit_period = 1.0;
        assert_eq!(osnr(1.0, &c).unwrap(), 1.0);
        c.fiber_norm_sq = 2.0;
        c.noise_var = 0.5;
        assert_eq!(osnr(0.5, &c).unwrap(), 2.0);
        assert!((osnr(0.4, &c).unwrap() - 2.0 * osnr(0.2, &c).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn overlap_examples() {
        let t = 1.0;
        assert!(overlap_probability(1e-6, 0.5, t).unwrap() < 1e-300);
        // √(2 ln 2) ≈ 1.1774 standard deviations.
        let full = overlap_probability(t, 1e-12, t).unwrap();
        assert!((full - 0.119_516).abs() < 1e-5, "{full}");
        assert!(overlap_probability(0.6, 0.3, t).unwrap() > overlap_probability(0.3, 0.3, t).unwrap());
        assert!(overlap_probability(0.5, 0.0, t).is_err());
        assert!(overlap_probability(0.5, 1.0, t).is_err());
    }

    #[test]
    fn overlap_matches_density_quadrature() {
        // Integrate the Gaussian pulse density past the boundary point.
        let (t, t1, kappa) = (1.0, 0.7, 0.4);
        let sigma = t1 / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let x1 = t / 2.0 - kappa * t1 / 2.0;
        let n = 200_000;
        let upper = x1 + 12.0 * sigma;
        let h = (upper - x1) / n as f64;
        let density = |x: f64| (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let mass: f64 = (0..n).map(|k| density(x1 + (k as f64 + 0.5) * h) * h).sum();
        assert!((mass - overlap_probability(t1, kappa, t).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn solve_examples() {
        let c = config(10.0 * 2f64.log10(), 1e-3);
        let s = solve_pulse(&c).unwrap();
        assert!((s.t1 - c.bit_period / 2.0).abs() <= 1e-12 * c.bit_period);
        assert_eq!(s.binding, BindingConstraint::Papr);
        assert_eq!(s.kappa, 0.1);

        let c = config(10.0 * 2f64.log10(), 0.8);
        let s = solve_pulse(&c).unwrap();
        assert!((s.t1 - 0.8 * c.bit_period).abs() <= 1e-12 * c.bit_period);
        assert_eq!(s.binding, BindingConstraint::Osnr);

        let c = config(0.0, 1e-3);
        let s = solve_pulse(&c).unwrap();
        assert_eq!(s.t1, c.bit_period);
        assert_eq!(s.papr_db, 0.0);

        let c = config(3.0, 1.5);
        assert!(matches!(solve_pulse(&c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn coinciding_bounds_report_both() {
        let c = config(10.0 * 2f64.log10(), 0.5);
        assert_eq!(solve_pulse(&c).unwrap().binding, BindingConstraint::Both);
    }

    #[test]
    fn dispersion_examples() {
        let one = DispersionSpec {
            coefficients: vec![2.5],
            length_km: 4.0,
        };
        assert_eq!(total_dispersion(&one).unwrap(), 10.0);
        let pair = DispersionSpec {
            coefficients: vec![3.0, 4.0],
            length_km: 10.0,
        };
        assert_eq!(total_dispersion(&pair).unwrap(), 50.0);
        assert!(total_dispersion(&DispersionSpec {
            coefficients: vec![1.0],
            length_km: 0.0
        })
        .is_err());
        assert!(total_dispersion(&DispersionSpec {
            coefficients: vec![-1.0],
            length_km: 1.0
        })
        .is_err());

        let trend = DispersionTrend {
            static_coefficients: vec![0.5, 0.2],
            broadening_full_width: 2.0,
        };
        let mut last = f64::INFINITY;
        for k in 0..20 {
            let d = trend.total_for_papr(0.5 * k as f64, 100.0).unwrap();
            assert!(d < last);
            last = d;
        }
    }
}
