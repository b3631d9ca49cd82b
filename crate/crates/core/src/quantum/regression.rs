//! Intensity correlation `g²(τ)` from the quantum regression theorem.
//!
//! After a photon is removed from the steady state `P`, the field is left in
//! `W_m(0) = (m+1) P_{m+1}` (unnormalized, total mass `<n>`). It evolves under
//! the same generator as `P`, and `g²(τ) = Σ m W_m(τ) / <n>²`.

use std::io;

use super::distribution::PhotonDistribution;
use super::generator::MasterEquationGenerator;
use super::steady_state_and_generator;
use crate::config::MicrolaserConfig;
use crate::error::{Error, Result};
use crate::fit::{fit_decay, ExpFit};
use crate::velocity::VelocityDistribution;

/// States with `P_n` below this fraction of the peak are left out of the
/// evolution window.
pub const SUPPORT_EPS: f64 = 1e-18;
pub const DEFAULT_TAU_POINTS: usize = 200;
/// Default lag span in units of the cavity lifetime `1/Γ_c`.
pub const DEFAULT_TAU_SPAN: f64 = 5.0;
const MIN_FIT_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct G2Curve {
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
    pub config_hash: String,
    pub mean_n: f64,
    pub mandel_q: f64,
}

impl G2Curve {
    /// CSV `tau_seconds,g2` after the given `#` header.
    pub fn write_csv<W: io::Write>(&self, header: &str, mut out: W) -> io::Result<()> {
        out.write_all(header.as_bytes())?;
        writeln!(out, "# mean_n = {}", self.mean_n)?;
        writeln!(out, "# mandel_q = {}", self.mandel_q)?;
        writeln!(out, "tau_seconds,g2")?;
        for (t, g) in self.tau.iter().zip(&self.values) {
            writeln!(out, "{t:e},{g:.12}")?;
        }
        Ok(())
    }
}

/// `DEFAULT_TAU_POINTS` evenly spaced lags on `[0, 5/Γ_c]`.
pub fn default_tau_grid(cfg: &MicrolaserConfig) -> Vec<f64> {
    let end = DEFAULT_TAU_SPAN / cfg.gamma_c;
    let last = (DEFAULT_TAU_POINTS - 1) as f64;
    (0..DEFAULT_TAU_POINTS)
        .map(|i| end * i as f64 / last)
        .collect()
}

pub fn g2_regression(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
    tau_grid: &[f64],
) -> Result<G2Curve> {
    g2_regression_with_support(cfg, dist, tau_grid, SUPPORT_EPS)
}

/// As [`g2_regression`], restricting the evolution to states where the
/// steady state exceeds `support_eps` times its peak (`0` keeps the full basis).
pub fn g2_regression_with_support(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
    tau_grid: &[f64],
    support_eps: f64,
) -> Result<G2Curve> {
    let (p, generator) = steady_state_and_generator(cfg, dist)?;
    let m = p.moments();
    let mandel_q = m.mandel_q.ok_or(Error::UndefinedCorrelation)?;
    let values = g2_from_generator(&generator, &p, tau_grid, support_eps)?;
    Ok(G2Curve {
        tau: tau_grid.to_vec(),
        values,
        config_hash: cfg.hash(),
        mean_n: m.mean,
        mandel_q,
    })
}

/// `g²(τ)` for an arbitrary birth–death generator and its stationary state.
pub fn g2_from_generator(
    generator: &MasterEquationGenerator,
    p: &PhotonDistribution,
    tau_grid: &[f64],
    support_eps: f64,
) -> Result<Vec<f64>> {
    if generator.lo() != 0 || generator.dim() != p.probabilities().len() {
        return Err(Error::invalid("steady state and generator bases differ"));
    }
    if !(support_eps.is_finite() && (0.0..1.0).contains(&support_eps)) {
        return Err(Error::invalid(format!(
            "support threshold must be in [0, 1), got {support_eps}"
        )));
    }
    let probs = p.probabilities();
    let mean = p.moments().mean;
    if mean <= 0.0 {
        return Err(Error::UndefinedCorrelation);
    }

    let peak = probs.iter().cloned().fold(0.0, f64::max);
    let cut = support_eps * peak;
    let first = probs.iter().position(|&x| x > cut).unwrap_or(0);
    let last = probs
        .iter()
        .rposition(|&x| x > cut)
        .unwrap_or(probs.len() - 1);
    // W is P shifted down by one, and relaxes back towards P's support.
    let lo = first.saturating_sub(1);
    let hi = last;
    let window = if lo == 0 && hi == generator.n_max() {
        generator.clone()
    } else {
        generator.restricted(lo, hi)?
    };

    let w0: Vec<f64> = (lo..=hi)
        .map(|m| {
            if m < generator.n_max() {
                (m + 1) as f64 * probs[m + 1]
            } else {
                0.0
            }
        })
        .collect();
    let norm = mean * mean;
    let mut values = vec![0.0; tau_grid.len()];
    window.evolve_checkpoints(&w0, tau_grid, |i, w| {
        let s: f64 = w.iter().enumerate().map(|(j, x)| (lo + j) as f64 * x).sum();
        values[i] = s / norm;
    })?;
    Ok(values)
}

/// Parameters extracted from a theoretical `g²` curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryFit {
    pub c0: f64,
    pub tau_c: Option<f64>,
    /// `C0 · <n>`.
    pub mandel_q: f64,
    pub fit: ExpFit,
    pub warning: Option<String>,
}

/// Unweighted exponential fit of a computed curve. The curve is noiseless,
/// so a warning is attached when it is visibly not a single exponential or
/// the grid is too short to pin down the decay.
pub fn q_and_tau_from_g2(curve: &G2Curve, n_mean: f64) -> Result<TheoryFit> {
    if curve.tau.len() < MIN_FIT_POINTS || curve.tau.len() != curve.values.len() {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_FIT_POINTS} matching (tau, g2) points, got {}/{}",
            curve.tau.len(),
            curve.values.len()
        )));
    }
    if !(n_mean.is_finite() && n_mean > 0.0) {
        return Err(Error::UndefinedCorrelation);
    }
    let fit = fit_decay(&curve.tau, &curve.values, None)?;
    let mut notes = Vec::new();
    let dev: Vec<f64> = curve.values.iter().map(|g| (g - 1.0).abs()).collect();
    let scale = dev.iter().cloned().fold(0.0, f64::max);
    if dev.windows(2).any(|w| w[1] > w[0] + 1e-6 * scale) {
        notes.push("|g2 - 1| is not monotone in tau".to_string());
    }
    if let Some(tau_c) = fit.tau_c {
        let span = curve.tau.last().unwrap() - curve.tau[0];
        if span < 3.0 * tau_c {
            notes.push(format!(
                "tau span {span:.3e} s is shorter than 3 tau_c = {:.3e} s",
                3.0 * tau_c
            ));
        }
    }
    Ok(TheoryFit {
        c0: fit.c0,
        tau_c: fit.tau_c,
        mandel_q: fit.c0 * n_mean,
        warning: (!notes.is_empty()).then(|| notes.join("; ")),
        fit,
    })
}

/// Size of the per-atom phase change relative to the field, as a check on
/// the single-atom picture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityReport {
    /// `g t_int / √<n>`.
    pub ratio: f64,
    /// Change of the Rabi angle from one extra photon, `g t_int (√(<n>+1) - √<n>)`.
    pub phase_step: f64,
    pub threshold: f64,
    pub questionable: bool,
}

impl ValidityReport {
    pub const DEFAULT_THRESHOLD: f64 = 0.3;

    pub fn from_coupling(g_tint: f64, mean_n: f64, threshold: f64) -> Result<Self> {
        if !(mean_n.is_finite() && mean_n > 0.0) {
            return Err(Error::invalid(format!(
                "validity check needs <n> > 0, got {mean_n}"
            )));
        }
        let ratio = g_tint / mean_n.sqrt();
        let phase_step = g_tint * ((mean_n + 1.0).sqrt() - mean_n.sqrt());
        Ok(ValidityReport {
            ratio,
            phase_step,
            threshold,
            questionable: ratio > threshold,
        })
    }
}

pub fn validity_check(cfg: &MicrolaserConfig, p: &PhotonDistribution) -> Result<ValidityReport> {
    ValidityReport::from_coupling(
        cfg.rabi_angle0(),
        p.moments().mean,
        ValidityReport::DEFAULT_THRESHOLD,
    )
}
