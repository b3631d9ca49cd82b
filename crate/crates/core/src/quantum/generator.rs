//! Birth–death generator of the pumped, damped cavity on a truncated
//! number basis, and its time evolution by uniformization.
//!
//! `dP_n/dt = r[β̄_n P_{n-1} - β̄_{n+1} P_n] + Γ_c[(n+1) P_{n+1} - n P_n]`
//!
//! The basis may be a window `lo..=hi` of photon numbers; the edges are
//! reflecting (no birth out of `hi`, no decay out of `lo`), so every column
//! of the rate matrix sums to zero.

use crate::error::{Error, Result};
use crate::quantum::distribution::PhotonDistribution;

/// Largest Poisson parameter handled in one uniformization substep.
const MAX_SUBSTEP_LAMBDA: f64 = 400.0;
/// Poisson mass left out of each substep's series.
const SERIES_TAIL_TOL: f64 = 1e-15;
/// Refuse evolutions needing more generator applications than this.
const MAX_MATVECS: f64 = 5e8;

#[derive(Debug, Clone, PartialEq)]
pub struct MasterEquationGenerator {
    lo: usize,
    /// `birth[i]`: rate from `lo + i` to `lo + i + 1`.
    birth: Vec<f64>,
    /// `death[i]`: rate from `lo + i` to `lo + i - 1`.
    death: Vec<f64>,
    injection_rate: f64,
    gamma_c: f64,
}

impl MasterEquationGenerator {
    /// Generator on `0..=n_max` with emission probabilities `beta_table[k] = β̄_k`
    /// (`beta_table.len() >= n_max + 1`; `β̄_{n_max+1}` is taken as zero).
    pub fn new(
        injection_rate: f64,
        gamma_c: f64,
        beta_table: &[f64],
        n_max: usize,
    ) -> Result<Self> {
        if !(injection_rate.is_finite() && injection_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "injection rate must be >= 0, got {injection_rate}"
            )));
        }
        if !(gamma_c.is_finite() && gamma_c > 0.0) {
            return Err(Error::invalid(format!(
                "gamma_c must be > 0, got {gamma_c}"
            )));
        }
        if beta_table.len() < n_max + 1 {
            return Err(Error::invalid("beta table shorter than the basis"));
        }
        let birth = (0..=n_max)
            .map(|n| {
                if n < n_max {
                    injection_rate * beta_table[n + 1]
                } else {
                    0.0
                }
            })
            .collect();
        let death = (0..=n_max).map(|n| gamma_c * n as f64).collect();
        Ok(MasterEquationGenerator {
            lo: 0,
            birth,
            death,
            injection_rate,
            gamma_c,
        })
    }

    /// Generator with arbitrary birth rates `birth[n]` (n → n+1) and decay `Γ_c n`.
    pub fn from_birth_rates(birth: Vec<f64>, gamma_c: f64) -> Result<Self> {
        if birth.is_empty() {
            return Err(Error::invalid("empty basis"));
        }
        if birth.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::invalid("birth rates must be finite and >= 0"));
        }
        let n_max = birth.len() - 1;
        let mut birth = birth;
        birth[n_max] = 0.0;
        let death = (0..=n_max).map(|n| gamma_c * n as f64).collect();
        Ok(MasterEquationGenerator {
            lo: 0,
            birth,
            death,
            injection_rate: f64::NAN,
            gamma_c,
        })
    }

    /// Sub-generator on photon numbers `lo..=hi` with reflecting edges.
    pub fn restricted(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo > hi || lo < self.lo || hi > self.n_max() {
            return Err(Error::invalid(format!("window {lo}..={hi} outside basis")));
        }
        let (a, b) = (lo - self.lo, hi - self.lo);
        let mut birth = self.birth[a..=b].to_vec();
        let mut death = self.death[a..=b].to_vec();
        *birth.last_mut().unwrap() = 0.0;
        death[0] = 0.0;
        Ok(MasterEquationGenerator {
            lo,
            birth,
            death,
            injection_rate: self.injection_rate,
            gamma_c: self.gamma_c,
        })
    }

    /// Lowest photon number of the basis.
    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn n_max(&self) -> usize {
        self.lo + self.birth.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.birth.len()
    }

    pub fn gamma_c(&self) -> f64 {
        self.gamma_c
    }

    pub fn injection_rate(&self) -> f64 {
        self.injection_rate
    }

    pub fn birth_rates(&self) -> &[f64] {
        &self.birth
    }

    pub fn death_rates(&self) -> &[f64] {
        &self.death
    }

    /// Matrix element `A[row][col]` (basis-relative indices).
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        if row == col {
            -(self.birth[col] + self.death[col])
        } else if row == col + 1 {
            self.birth[col]
        } else if col == row + 1 {
            self.death[col]
        } else {
            0.0
        }
    }

    /// `A · p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; p.len()];
        self.apply_into(p, &mut out);
        out
    }

    fn apply_into(&self, p: &[f64], out: &mut [f64]) {
        let d = self.dim();
        assert_eq!(
            p.len(),
            d,
            "vector length must match the generator dimension"
        );
        for i in 0..d {
            let mut acc = -(self.birth[i] + self.death[i]) * p[i];
            if i > 0 {
                acc += self.birth[i - 1] * p[i - 1];
            }
            if i + 1 < d {
                acc += self.death[i + 1] * p[i + 1];
            }
            out[i] = acc;
        }
    }

    /// Detailed-balance product form `P_n ∝ Π_{k≤n} birth_{k-1}/death_k`,
    /// accumulated in log space.
    pub fn stationary(&self) -> Result<PhotonDistribution> {
        let mut log_w = Vec::with_capacity(self.dim());
        let mut acc = 0.0f64;
        log_w.push(acc);
        for i in 1..self.dim() {
            let (b, d) = (self.birth[i - 1], self.death[i]);
            acc += if b == 0.0 {
                f64::NEG_INFINITY
            } else {
                b.ln() - d.ln()
            };
            log_w.push(acc);
        }
        PhotonDistribution::from_log_weights(&log_w)
    }

    /// Uniformization rate: the largest total exit rate.
    fn uniformization_rate(&self) -> f64 {
        self.birth
            .iter()
            .zip(&self.death)
            .map(|(b, d)| b + d)
            .fold(0.0, f64::max)
    }

    /// Propagates `dp/dt = A p` to time `t`.
    pub fn evolve(&self, p0: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.evolve_checkpoints(p0, &[t], |_, p| out = p.to_vec())?;
        Ok(out)
    }

    /// Propagates `p0` through the nondecreasing checkpoint times, calling
    /// `visit(index, p(t_index))` at each. A single forward pass is made.
    ///
    /// Each interval is split into substeps of Poisson parameter at most
    /// `MAX_SUBSTEP_LAMBDA`, and each substep sums the uniformized series
    /// `Σ_k Pois(k; Λh) (I + A/Λ)^k p` until the omitted mass is below
    /// `SERIES_TAIL_TOL`. All terms are nonnegative for nonnegative input.
    pub fn evolve_checkpoints(
        &self,
        p0: &[f64],
        times: &[f64],
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        if p0.len() != self.dim() {
            return Err(Error::invalid(format!(
                "initial vector has length {}, generator dimension is {}",
                p0.len(),
                self.dim()
            )));
        }
        if p0.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid(
                "initial vector entries must be finite and >= 0",
            ));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("evolution times must be finite and >= 0"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("checkpoint times must be nondecreasing"));
        }
        let rate = self.uniformization_rate();
        if !rate.is_finite() {
            return Err(Error::Stiffness("non-finite exit rate in generator".into()));
        }
        let horizon = times.last().copied().unwrap_or(0.0);
        if rate * horizon > MAX_MATVECS {
            return Err(Error::Stiffness(format!(
                "uniformization needs ~{:.3e} generator applications (rate {rate:.3e}/s, t = {horizon:.3e} s)",
                rate * horizon
            )));
        }

        let mut state = p0.to_vec();
        let mut term = vec![0.0; self.dim()];
        let mut next = vec![0.0; self.dim()];
        let mut acc = vec![0.0; self.dim()];
        let mut now = 0.0;
        for (idx, &t) in times.iter().enumerate() {
            let span = t - now;
            if span > 0.0 && rate > 0.0 {
                let lambda_total = rate * span;
                let substeps = (lambda_total / MAX_SUBSTEP_LAMBDA).ceil().max(1.0) as usize;
                let lambda = lambda_total / substeps as f64;
                for _ in 0..substeps {
                    self.uniformized_step(rate, lambda, &state, &mut term, &mut next, &mut acc);
                    std::mem::swap(&mut state, &mut acc);
                }
            }
            now = t;
            visit(idx, &state);
        }
        Ok(())
    }

    fn uniformized_step(
        &self,
        rate: f64,
        lambda: f64,
        state: &[f64],
        term: &mut Vec<f64>,
        next: &mut Vec<f64>,
        acc: &mut [f64],
    ) {
        let inv = 1.0 / rate;
        term.copy_from_slice(state);
        let mut weight = (-lambda).exp();
        let mut covered = weight;
        for (a, x) in acc.iter_mut().zip(term.iter()) {
            *a = weight * x;
        }
        let mut k = 0usize;
        while 1.0 - covered > SERIES_TAIL_TOL || (k as f64) < lambda {
            k += 1;
            // next = (I + A/Λ) term
            self.apply_into(term, next);
            for (n, t) in next.iter_mut().zip(term.iter()) {
                *n = t + inv * *n;
            }
            std::mem::swap(term, next);
            weight *= lambda / k as f64;
            covered += weight;
            for (a, x) in acc.iter_mut().zip(term.iter()) {
                *a += weight * x;
            }
            if weight == 0.0 && (k as f64) > lambda {
                break;
            }
        }
    }
}
