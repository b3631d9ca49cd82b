//! Extrapolated single-atom micromaser theory on a truncated number basis.
//!
//! The cavity is pumped at rate `r` by excited atoms, each adding a photon
//! with probability `β̄_{n+1}`, and damped at `Γ_c n`. Only the diagonal of
//! the density matrix takes part, so the dynamics is a birth–death chain.

pub mod distribution;
pub mod generator;
pub mod regression;

pub use distribution::{moments, Moments, PhotonDistribution};
pub use generator::MasterEquationGenerator;
pub use regression::{
    default_tau_grid, g2_from_generator, g2_regression, g2_regression_with_support,
    q_and_tau_from_g2, validity_check, G2Curve, TheoryFit, ValidityReport,
};

use crate::config::MicrolaserConfig;
use crate::error::{Error, Result};
use crate::kernel::{injection_rate, EmissionKernel};
use crate::velocity::VelocityDistribution;

/// Largest admissible steady-state mass on the top 1% of the basis.
pub const TAIL_TOL: f64 = 1e-12;

/// Rate matrix on `0..=cfg.n_max`.
pub fn build_generator(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
) -> Result<MasterEquationGenerator> {
    build_generator_sized(cfg, dist, cfg.n_max)
}

fn build_generator_sized(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
    n_max: usize,
) -> Result<MasterEquationGenerator> {
    cfg.validate()?;
    let table = EmissionKernel::new(cfg, dist).table(n_max);
    MasterEquationGenerator::new(injection_rate(cfg, dist), cfg.gamma_c, &table, n_max)
}

/// Steady state with its generator. If the tail check fails at `cfg.n_max`
/// the basis is doubled once before giving up.
pub fn steady_state_and_generator(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
) -> Result<(PhotonDistribution, MasterEquationGenerator)> {
    let mut n_max = cfg.n_max;
    let mut last_tail = f64::NAN;
    for _ in 0..2 {
        let generator = build_generator_sized(cfg, dist, n_max)?;
        let p = generator.stationary()?;
        last_tail = p.tail_mass();
        if last_tail < TAIL_TOL {
            return Ok((p, generator));
        }
        n_max *= 2;
    }
    Err(Error::Truncation {
        n_max: n_max / 2,
        tail_mass: last_tail,
    })
}

/// Detailed-balance steady state `P_n = P_0 Π_{k≤n} r β̄_k / (Γ_c k)`.
pub fn steady_state(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
) -> Result<PhotonDistribution> {
    steady_state_and_generator(cfg, dist).map(|(p, _)| p)
}
