use std::io;

use crate::error::{Error, Result};

/// Photon-number probabilities on a truncated basis `0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    /// `(Δn)²/<n> - 1`; `None` when `<n> = 0`.
    pub mandel_q: Option<f64>,
}

impl PhotonDistribution {
    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("empty photon distribution"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(
                "photon distribution weights must be finite and >= 0",
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("photon distribution has zero mass"));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(PhotonDistribution { probs })
    }

    /// Fock state `|k>` on `0..=n_max`.
    pub fn fock(k: usize, n_max: usize) -> Result<Self> {
        if k > n_max {
            return Err(Error::invalid(format!(
                "Fock index {k} exceeds n_max {n_max}"
            )));
        }
        let mut w = vec![0.0; n_max + 1];
        w[k] = 1.0;
        Self::from_weights(w)
    }

    /// Poisson distribution of mean `mean`, truncated to `0..=n_max` and renormalized.
    pub fn poisson(mean: f64, n_max: usize) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Error::invalid(format!(
                "Poisson mean must be >= 0, got {mean}"
            )));
        }
        if mean == 0.0 {
            return Self::fock(0, n_max);
        }
        let ln_mean = mean.ln();
        let mut log_p = Vec::with_capacity(n_max + 1);
        let mut acc = -mean;
        log_p.push(acc);
        for k in 1..=n_max {
            acc += ln_mean - (k as f64).ln();
            log_p.push(acc);
        }
        Self::from_log_weights(&log_p)
    }

    /// Thermal (Bose–Einstein) distribution of mean `mean` on `0..=n_max`.
    pub fn thermal(mean: f64, n_max: usize) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Error::invalid(format!(
                "thermal mean must be >= 0, got {mean}"
            )));
        }
        let ratio = mean / (1.0 + mean);
        Self::from_weights((0..=n_max).map(|k| ratio.powi(k as i32)).collect())
    }

    /// Exponentiates log-weights relative to their maximum, then normalizes.
    pub(crate) fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::invalid("log-weights have no finite maximum"));
        }
        Self::from_weights(log_w.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probabilities(self) -> Vec<f64> {
        self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn moments(&self) -> Moments {
        moments(self)
    }

    /// Mass on the top `max(1, ⌈1%⌉)` basis states.
    pub fn tail_mass(&self) -> f64 {
        let len = self.probs.len();
        let k = len.div_ceil(100).max(1);
        self.probs[len - k..].iter().sum()
    }

    /// Total-variation distance `½ Σ |p_n - q_n|`, padding the shorter basis with zeros.
    pub fn total_variation(&self, other: &PhotonDistribution) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        0.5 * (0..len)
            .map(|n| (self.get(n) - other.get(n)).abs())
            .sum::<f64>()
    }

    /// CSV `n,probability`.
    pub fn write_csv<W: io::Write>(&self, header: &str, mut out: W) -> io::Result<()> {
        out.write_all(header.as_bytes())?;
        writeln!(out, "n,probability")?;
        for (n, p) in self.probs.iter().enumerate() {
            writeln!(out, "{n},{p:e}")?;
        }
        Ok(())
    }
}

/// Mean, variance (two-pass) and Mandel Q over the truncated basis.
pub fn moments(p: &PhotonDistribution) -> Moments {
    let mean: f64 = p.probs.iter().enumerate().map(|(n, w)| n as f64 * w).sum();
    let variance: f64 = p
        .probs
        .iter()
        .enumerate()
        .map(|(n, w)| {
            let d = n as f64 - mean;
            d * d * w
        })
        .sum();
    let mandel_q = (mean > 0.0).then(|| variance / mean - 1.0);
    Moments {
        mean,
        variance,
        mandel_q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_has_zero_q() {
        let p = PhotonDistribution::poisson(50.0, 400).unwrap();
        let m = p.moments();
        assert!((m.mean - 50.0).abs() < 1e-10);
        assert!(m.mandel_q.unwrap().abs() < 1e-10);
    }

    #[test]
    fn fock_has_q_minus_one() {
        let m = PhotonDistribution::fock(100, 200).unwrap().moments();
        assert_eq!(m.mean, 100.0);
        assert_eq!(m.variance, 0.0);
        assert_eq!(m.mandel_q, Some(-1.0));
    }

    #[test]
    fn thermal_has_q_equal_mean() {
        let m = PhotonDistribution::thermal(10.0, 2000).unwrap().moments();
        assert!((m.mean - 10.0).abs() < 1e-9);
        assert!((m.mandel_q.unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn vacuum_q_is_undefined() {
        let m = PhotonDistribution::fock(0, 10).unwrap().moments();
        assert_eq!(m.mean, 0.0);
        assert!(m.mandel_q.is_none());
    }

    #[test]
    fn weights_validated() {
        assert!(PhotonDistribution::from_weights(vec![]).is_err());
        assert!(PhotonDistribution::from_weights(vec![0.0, 0.0]).is_err());
        assert!(PhotonDistribution::from_weights(vec![1.0, -0.1]).is_err());
        let p = PhotonDistribution::from_weights(vec![1.0, 3.0]).unwrap();
        assert_eq!(p.probabilities(), &[0.25, 0.75]);
    }

    #[test]
    fn total_variation_pads() {
        let a = PhotonDistribution::fock(0, 2).unwrap();
        let b = PhotonDistribution::fock(5, 5).unwrap();
        assert_eq!(a.total_variation(&b), 1.0);
        assert_eq!(a.total_variation(&a), 0.0);
    }
}
