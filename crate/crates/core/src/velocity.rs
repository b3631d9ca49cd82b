//! Atomic velocity distributions and their quadrature rules.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::MicrolaserConfig;
use crate::error::{Error, Result};

/// FWHM / σ for a Gaussian, 2·√(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;
/// Half-width of the truncated support in units of σ.
pub const TRUNCATION_SIGMAS: f64 = 3.0;
/// Lowest admitted speed as a fraction of v0, for very wide distributions.
pub const MIN_SPEED_FRAC: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityKind {
    Delta,
    Gaussian,
}

/// A velocity distribution together with the quadrature used to average over it.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityDistribution {
    kind: VelocityKind,
    v0: f64,
    fwhm: f64,
    support: (f64, f64),
    nodes: Vec<(f64, f64)>,
}

impl VelocityDistribution {
    pub fn delta(v0: f64) -> Result<Self> {
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::invalid(format!("velocity must be > 0, got {v0}")));
        }
        Ok(VelocityDistribution {
            kind: VelocityKind::Delta,
            v0,
            fwhm: 0.0,
            support: (v0, v0),
            nodes: vec![(v0, 1.0)],
        })
    }

    /// Gaussian in speed, truncated at ±3σ (and at `MIN_SPEED_FRAC·v0` from
    /// below), renormalized, with a `n_nodes`-point Gauss–Legendre rule on the
    /// truncated support.
    pub fn gaussian(v0: f64, fwhm: f64, n_nodes: usize) -> Result<Self> {
        if !(v0.is_finite() && v0 > 0.0) {
            return Err(Error::invalid(format!("velocity must be > 0, got {v0}")));
        }
        if !(fwhm.is_finite() && fwhm > 0.0) {
            return Err(Error::invalid(format!("FWHM must be > 0, got {fwhm}")));
        }
        if n_nodes == 0 {
            return Err(Error::invalid("quadrature needs at least one node"));
        }
        let sigma = fwhm / FWHM_PER_SIGMA;
        let lo = (v0 - TRUNCATION_SIGMAS * sigma).max(MIN_SPEED_FRAC * v0);
        let hi = v0 + TRUNCATION_SIGMAS * sigma;
        // Offset of the interval midpoint from v0; exactly zero unless clipped.
        let shift = 0.5 * ((hi - v0) + (lo - v0));
        let half = 0.5 * (hi - lo);
        let mut nodes: Vec<(f64, f64)> = gauss_legendre(n_nodes)
            .into_iter()
            .map(|(x, w)| {
                let v = v0 + shift + half * x;
                let z = (v - v0) / sigma;
                (v, w * (-0.5 * z * z).exp())
            })
            .collect();
        let total: f64 = nodes.iter().map(|&(_, w)| w).sum();
        for node in &mut nodes {
            node.1 /= total;
        }
        Ok(VelocityDistribution {
            kind: VelocityKind::Gaussian,
            v0,
            fwhm,
            support: (lo, hi),
            nodes,
        })
    }

    /// Distribution implied by `cfg`: delta when `dv_fwhm_frac == 0`.
    pub fn from_config(cfg: &MicrolaserConfig) -> Result<Self> {
        if cfg.dv_fwhm_frac == 0.0 {
            Self::delta(cfg.v0)
        } else {
            Self::gaussian(cfg.v0, cfg.dv_fwhm_frac * cfg.v0, cfg.quadrature_nodes)
        }
    }

    pub fn kind(&self) -> VelocityKind {
        self.kind
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    pub fn sigma(&self) -> f64 {
        self.fwhm / FWHM_PER_SIGMA
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Quadrature nodes as `(velocity, weight)`; weights sum to one.
    pub fn nodes(&self) -> &[(f64, f64)] {
        &self.nodes
    }

    /// Quadrature estimate of `E[f(v)]`.
    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(v, w)| w * f(v)).sum()
    }

    /// Draws a speed from the continuous (truncated) distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            VelocityKind::Delta => self.v0,
            VelocityKind::Gaussian => {
                let normal = Normal::new(self.v0, self.sigma()).expect("sigma > 0 by construction");
                let (lo, hi) = self.support;
                loop {
                    let v = normal.sample(rng);
                    if v >= lo && v <= hi {
                        return v;
                    }
                }
            }
        }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    use std::f64::consts::PI;
    let mut out = vec![(0.0, 0.0); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by the three-term recurrence.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_pcg::Pcg64;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        for n in [1usize, 2, 5, 16, 64, 128] {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.iter().map(|p| p.1).sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n = {n}");
            // Exact for degree 2n - 1.
            let deg = (2 * n - 1).min(20);
            let even = deg - deg % 2;
            let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(even as i32)).sum();
            assert!((got - 2.0 / (even as f64 + 1.0)).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn weights_normalized_and_positive() {
        let d = VelocityDistribution::gaussian(750.0, 0.45 * 750.0, 64).unwrap();
        let total: f64 = d.nodes().iter().map(|n| n.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(d.nodes().iter().all(|&(v, w)| v > 0.0 && w >= 0.0));
        let mean = d.expect(|v| v);
        assert!(
            (mean - 750.0).abs() < 1e-9,
            "symmetric truncation keeps the mean"
        );
    }

    #[test]
    fn one_node_gaussian_is_delta() {
        let g = VelocityDistribution::gaussian(750.0, 300.0, 1).unwrap();
        let d = VelocityDistribution::delta(750.0).unwrap();
        assert_eq!(g.nodes(), d.nodes());
    }

    #[test]
    fn wide_distribution_clipped_above_zero() {
        let d = VelocityDistribution::gaussian(750.0, 0.95 * 750.0, 64).unwrap();
        assert!(d.support().0 >= MIN_SPEED_FRAC * 750.0);
        assert!(d.nodes().iter().all(|&(v, _)| v > 0.0));
    }

    #[test]
    fn samples_stay_in_support() {
        let d = VelocityDistribution::gaussian(750.0, 337.5, 64).unwrap();
        let mut rng = Pcg64::seed_from_u64(3);
        let (lo, hi) = d.support();
        let mut acc = 0.0;
        for _ in 0..20_000 {
            let v = d.sample(&mut rng);
            assert!(v >= lo && v <= hi);
            acc += v;
        }
        assert!((acc / 20_000.0 - 750.0).abs() < 3.0);
    }

    #[test]
    fn rejects_nonpositive_velocity() {
        assert!(VelocityDistribution::delta(0.0).is_err());
        assert!(VelocityDistribution::gaussian(-1.0, 1.0, 8).is_err());
    }
}
