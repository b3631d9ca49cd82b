//! Single-atom emission kernel shared by the theory and simulation modules.
//!
//! An excited atom crossing a cavity holding `k - 1` photons leaves it with
//! `k` photons with probability `β_k = sin²(√k · g · t_int(v))`.

use std::f64::consts::PI;

use crate::config::{MicrolaserConfig, PumpConvention};
use crate::error::{Error, Result};
use crate::velocity::VelocityDistribution;

/// Transit time through a Gaussian mode, `√π · ω_m / v`.
pub fn interaction_time(v: f64, mode_waist: f64) -> Result<f64> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::invalid(format!("velocity must be > 0, got {v}")));
    }
    if !(mode_waist.is_finite() && mode_waist > 0.0) {
        return Err(Error::invalid(format!(
            "mode waist must be > 0, got {mode_waist}"
        )));
    }
    Ok(PI.sqrt() * mode_waist / v)
}

/// Emission probability `β_k` for an atom of speed `v`; `β_0 ≡ 0`.
pub fn beta(k: usize, v: f64, cfg: &MicrolaserConfig) -> Result<f64> {
    let t = interaction_time(v, cfg.mode_waist)?;
    if k == 0 {
        return Ok(0.0);
    }
    let s = ((k as f64).sqrt() * (cfg.g0 * t)).sin();
    Ok(s * s)
}

/// Velocity-averaged emission probability `β̄_k = Σ_j w_j β_k(v_j)`.
pub fn averaged_beta(k: usize, cfg: &MicrolaserConfig, dist: &VelocityDistribution) -> f64 {
    EmissionKernel::new(cfg, dist).beta_bar(k as f64)
}

/// Atom injection rate `r` implied by the pump `<N>` and the pump convention.
pub fn injection_rate(cfg: &MicrolaserConfig, dist: &VelocityDistribution) -> f64 {
    let transit = match cfg.pump_convention {
        PumpConvention::TransitAtV0 => cfg.t_int0(),
        PumpConvention::MeanTransit => dist.expect(|v| PI.sqrt() * cfg.mode_waist / v),
    };
    cfg.n_atoms_mean / transit
}

/// Precomputed Rabi angles `g·t_int(v_j)` with quadrature weights, so that
/// `β̄(x) = Σ_j w_j sin²(√x · θ_j)` can be evaluated for real `x ≥ 0`.
#[derive(Debug, Clone)]
pub struct EmissionKernel {
    angles: Vec<(f64, f64)>,
}

impl EmissionKernel {
    pub fn new(cfg: &MicrolaserConfig, dist: &VelocityDistribution) -> Self {
        let sqrt_pi_w = PI.sqrt() * cfg.mode_waist;
        let angles = dist
            .nodes()
            .iter()
            .map(|&(v, w)| (cfg.g0 * (sqrt_pi_w / v), w))
            .collect();
        EmissionKernel { angles }
    }

    /// Kernel with a single Rabi angle and unit weight.
    pub fn single(angle: f64) -> Self {
        EmissionKernel {
            angles: vec![(angle, 1.0)],
        }
    }

    pub fn angles(&self) -> &[(f64, f64)] {
        &self.angles
    }

    /// `β̄(x)`; `x` plays the role of `k = n + 1` and may be non-integer.
    pub fn beta_bar(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let sx = x.sqrt();
        self.angles
            .iter()
            .map(|&(theta, w)| {
                let s = (sx * theta).sin();
                w * s * s
            })
            .sum()
    }

    /// Analytic `dβ̄/dx = Σ_j w_j θ_j sin(2√x θ_j) / (2√x)`.
    pub fn beta_bar_slope(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let sx = x.sqrt();
        self.angles
            .iter()
            .map(|&(theta, w)| w * theta * (2.0 * sx * theta).sin())
            .sum::<f64>()
            / (2.0 * sx)
    }

    /// `β̄_k` for `k = 1..=n_max`, index 0 holding `β̄_0 = 0`.
    pub fn table(&self, n_max: usize) -> Vec<f64> {
        (0..=n_max).map(|k| self.beta_bar(k as f64)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> MicrolaserConfig {
        MicrolaserConfig::reference(158.0)
    }

    #[test]
    fn transit_time_at_reference_speed() {
        let t = interaction_time(750.0, 41e-6).unwrap();
        assert!((t - 9.689_414_384_950_154e-8).abs() < 1e-21, "t = {t:e}");
        // ≈ 0.10 µs
        assert!((t - 0.1e-6).abs() < 0.005e-6);
        let half = interaction_time(1500.0, 41e-6).unwrap();
        assert_eq!(half, t / 2.0);
        let twice = interaction_time(750.0, 82e-6).unwrap();
        assert_eq!(twice, 2.0 * t);
    }

    #[test]
    fn transit_time_rejects_bad_speed() {
        assert!(matches!(
            interaction_time(0.0, 41e-6),
            Err(Error::InvalidArgument(_))
        ));
        assert!(interaction_time(-3.0, 41e-6).is_err());
        assert!(interaction_time(f64::NAN, 41e-6).is_err());
    }

    #[test]
    fn transit_time_monotone() {
        let mut last = f64::INFINITY;
        for v in [100.0, 300.0, 750.0, 1200.0] {
            let t = interaction_time(v, 41e-6).unwrap();
            assert!(t < last);
            last = t;
        }
        assert!(interaction_time(750.0, 50e-6).unwrap() > interaction_time(750.0, 41e-6).unwrap());
    }

    #[test]
    fn beta_single_photon_reference_value() {
        // sin²(2π·1.9e5 · √π·41e-6/750) evaluated with 40-digit arithmetic.
        const REFERENCE: f64 = 0.013_320_611_240_921_524;
        let b = beta(1, 750.0, &reference()).unwrap();
        assert!((b - REFERENCE).abs() < 1e-14 * REFERENCE, "beta_1 = {b}");
        assert_eq!(beta(0, 750.0, &reference()).unwrap(), 0.0);
    }

    #[test]
    fn beta_maximum_is_one() {
        let cfg = reference();
        let theta = cfg.rabi_angle0();
        // Choose g so that √k·g·t = π/2 exactly for k = 4.
        let mut tuned = cfg.clone();
        tuned.g0 = cfg.g0 * (PI / 2.0) / (2.0 * theta);
        let b = beta(4, 750.0, &tuned).unwrap();
        assert!((b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn delta_average_is_pointwise() {
        let cfg = reference();
        let dist = VelocityDistribution::delta(cfg.v0).unwrap();
        for k in [1, 2, 17, 500, 4000] {
            assert_eq!(
                averaged_beta(k, &cfg, &dist),
                beta(k, cfg.v0, &cfg).unwrap()
            );
        }
    }

    #[test]
    fn average_is_convex_combination() {
        let cfg = reference();
        let dist = VelocityDistribution::from_config(&cfg).unwrap();
        for k in [1usize, 10, 100, 700, 3000] {
            let pts: Vec<f64> = dist
                .nodes()
                .iter()
                .map(|&(v, _)| beta(k, v, &cfg).unwrap())
                .collect();
            let lo = pts.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = pts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let avg = averaged_beta(k, &cfg, &dist);
            assert!(avg >= lo - 1e-15 && avg <= hi + 1e-15);
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        let cfg = reference();
        let dist = VelocityDistribution::from_config(&cfg).unwrap();
        let kern = EmissionKernel::new(&cfg, &dist);
        for x in [1.0, 37.5, 250.0, 549.0, 1800.0] {
            let h = 1e-3;
            let fd = (kern.beta_bar(x + h) - kern.beta_bar(x - h)) / (2.0 * h);
            let an = kern.beta_bar_slope(x);
            assert!(
                (fd - an).abs() <= 1e-6 * an.abs().max(1e-6),
                "x = {x}: {fd} vs {an}"
            );
        }
    }

    #[test]
    fn mean_transit_pump_is_weaker() {
        let mut cfg = reference();
        let dist = VelocityDistribution::from_config(&cfg).unwrap();
        let r0 = injection_rate(&cfg, &dist);
        assert!((r0 - 158.0 / cfg.t_int0()).abs() < 1e-6 * r0);
        cfg.pump_convention = PumpConvention::MeanTransit;
        let r1 = injection_rate(&cfg, &dist);
        // <1/v> > 1/v0 for a symmetric spread, so the mean transit is longer.
        assert!(r1 < r0);
    }
}
