//! Multi-start multi-stop pair histogram of two timestamp streams, its
//! normalization to `g²(τ)`, and Q estimates from an exponential fit.
//!
//! Every event of stream `a` is a start and every event of `b` with
//! `0 ≤ t_b - t_a < n_bins · Δτ` is a stop; bin `i` collects the delays in
//! `[iΔτ, (i+1)Δτ)`.

use std::io;
use std::thread;

use crate::error::{Error, Result};
use crate::fit::{fit_decay, ExpFit};
use crate::timestamps::{first_inversion, seconds_to_ps, TimestampStream, PS_PER_SECOND};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_width_ps: u64,
    pub counts: Vec<u64>,
    pub rate1: f64,
    pub rate2: f64,
    pub t_acq_s: f64,
    /// 2 when counts hold both `(a, b)` and `(b, a)` orders.
    pub orders: u32,
}

impl CorrelationHistogram {
    pub fn bin_width_s(&self) -> f64 {
        self.bin_width_ps as f64 / PS_PER_SECOND
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn window_s(&self) -> f64 {
        self.bin_width_s() * self.n_bins() as f64
    }

    pub fn total_pairs(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bin width and bin count in picoseconds; `ceil(window / bin)` bins.
pub fn bin_layout(bin_width_s: f64, window_s: f64) -> Result<(u64, usize)> {
    if !(bin_width_s.is_finite() && bin_width_s > 0.0) {
        return Err(Error::invalid(format!(
            "bin width must be > 0, got {bin_width_s}"
        )));
    }
    if !(window_s.is_finite() && window_s >= bin_width_s) {
        return Err(Error::invalid(format!(
            "window {window_s} s must be >= bin width {bin_width_s} s"
        )));
    }
    let bin = seconds_to_ps(bin_width_s)?;
    let window = seconds_to_ps(window_s)?;
    if bin == 0 {
        return Err(Error::invalid("bin width is below one picosecond"));
    }
    let n_bins = window.div_ceil(bin) as usize;
    Ok((bin, n_bins))
}

fn check_sorted(a: &[u64], b: &[u64]) -> Result<()> {
    match first_inversion(a).or_else(|| first_inversion(b)) {
        Some(index) => Err(Error::Unsorted { index }),
        None => Ok(()),
    }
}

fn check_layout(bin_ps: u64, n_bins: usize) -> Result<u64> {
    if bin_ps == 0 || n_bins == 0 {
        return Err(Error::invalid(
            "histogram needs a positive bin width and at least one bin",
        ));
    }
    bin_ps
        .checked_mul(n_bins as u64)
        .ok_or_else(|| Error::invalid("histogram span overflows the picosecond range"))
}

/// Adds the pairs whose start lies in `starts` to `counts`. `stops` must
/// be the whole stop stream.
fn accumulate(starts: &[u64], stops: &[u64], bin: u64, span: u64, counts: &mut [u64]) {
    let Some(&first) = starts.first() else { return };
    let mut lo = stops.partition_point(|&t| t < first);
    if span <= u32::MAX as u64 {
        // Delays fit in 32 bits, and 32-bit division is markedly cheaper.
        let bin = bin as u32;
        for &s in starts {
            while lo < stops.len() && stops[lo] < s {
                lo += 1;
            }
            for &t in &stops[lo..] {
                let d = t - s;
                if d >= span {
                    break;
                }
                counts[(d as u32 / bin) as usize] += 1;
            }
        }
    } else {
        for &s in starts {
            while lo < stops.len() && stops[lo] < s {
                lo += 1;
            }
            for &t in &stops[lo..] {
                let d = t - s;
                if d >= span {
                    break;
                }
                counts[(d / bin) as usize] += 1;
            }
        }
    }
}

/// Serial pair counting on sorted picosecond slices.
pub fn correlate_ps(a: &[u64], b: &[u64], bin_ps: u64, n_bins: usize) -> Result<Vec<u64>> {
    let span = check_layout(bin_ps, n_bins)?;
    check_sorted(a, b)?;
    let mut counts = vec![0u64; n_bins];
    accumulate(a, b, bin_ps, span, &mut counts);
    Ok(counts)
}

/// Splits the start events into `workers` contiguous blocks, counts each on
/// its own thread and sums the histograms. Identical to [`correlate_ps`].
pub fn correlate_ps_parallel(
    a: &[u64],
    b: &[u64],
    bin_ps: u64,
    n_bins: usize,
    workers: usize,
) -> Result<Vec<u64>> {
    let span = check_layout(bin_ps, n_bins)?;
    check_sorted(a, b)?;
    let workers = workers.max(1).min(a.len().max(1));
    let block = a.len().div_ceil(workers).max(1);
    let partial: Vec<Vec<u64>> = thread::scope(|scope| {
        let handles: Vec<_> = a
            .chunks(block)
            .map(|starts| {
                scope.spawn(move || {
                    let mut counts = vec![0u64; n_bins];
                    accumulate(starts, b, bin_ps, span, &mut counts);
                    counts
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("correlator worker panicked"))
            .collect()
    });
    let mut counts = vec![0u64; n_bins];
    for part in partial {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrelateOptions {
    /// Also count `(b, a)` pairs and hold the sum.
    pub symmetric: bool,
    /// Worker threads; 1 runs serially.
    pub workers: usize,
}

impl Default for CorrelateOptions {
    fn default() -> Self {
        CorrelateOptions {
            symmetric: false,
            workers: 1,
        }
    }
}

pub fn correlate(
    a: &TimestampStream,
    b: &TimestampStream,
    bin_width_s: f64,
    window_s: f64,
) -> Result<CorrelationHistogram> {
    correlate_with(a, b, bin_width_s, window_s, CorrelateOptions::default())
}

pub fn correlate_with(
    a: &TimestampStream,
    b: &TimestampStream,
    bin_width_s: f64,
    window_s: f64,
    options: CorrelateOptions,
) -> Result<CorrelationHistogram> {
    let (bin, n_bins) = bin_layout(bin_width_s, window_s)?;
    let run = |x: &TimestampStream, y: &TimestampStream| {
        if options.workers > 1 {
            correlate_ps_parallel(x.times_ps(), y.times_ps(), bin, n_bins, options.workers)
        } else {
            correlate_ps(x.times_ps(), y.times_ps(), bin, n_bins)
        }
    };
    let mut counts = run(a, b)?;
    if options.symmetric {
        for (c, r) in counts.iter_mut().zip(run(b, a)?) {
            *c += r;
        }
    }
    // Both channels share one acquisition in practice; take the longer span.
    let t_acq_s = a.duration_s().max(b.duration_s());
    let rate = |s: &TimestampStream| {
        if t_acq_s > 0.0 {
            s.len() as f64 / t_acq_s
        } else {
            0.0
        }
    };
    Ok(CorrelationHistogram {
        bin_width_ps: bin,
        counts,
        rate1: rate(a),
        rate2: rate(b),
        t_acq_s,
        orders: if options.symmetric { 2 } else { 1 },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Normalization {
    /// Divide by the uncorrelated baseline `R₁ R₂ Δτ T`.
    #[default]
    Analytic,
    /// Divide by the mean count over the last `fraction` of the bins.
    Tail { fraction: f64 },
    /// `R₁ R₂ Δτ (T - τ)`: the analytic baseline corrected for starts whose
    /// lag window runs past the end of the acquisition.
    Overlap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Estimate {
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Expected count per bin for `g² = 1` at zero lag. In overlap mode
    /// bin `i` uses this times `1 - τ_i/T`.
    pub normalization: f64,
    pub counts: Vec<u64>,
    pub bin_width_s: f64,
}

impl G2Estimate {
    /// CSV `tau_s,g2,sigma` after the given `#` header.
    pub fn write_csv<W: io::Write>(&self, header: &str, mut out: W) -> io::Result<()> {
        out.write_all(header.as_bytes())?;
        writeln!(out, "# normalization = {}", self.normalization)?;
        writeln!(out, "tau_s,g2,sigma")?;
        for i in 0..self.tau.len() {
            writeln!(
                out,
                "{:e},{:.9},{:.9}",
                self.tau[i], self.g2[i], self.sigma[i]
            )?;
        }
        Ok(())
    }
}

pub fn normalize(h: &CorrelationHistogram, mode: Normalization) -> Result<G2Estimate> {
    let dt = h.bin_width_s();
    let tau: Vec<f64> = (0..h.n_bins()).map(|i| (i as f64 + 0.5) * dt).collect();
    let analytic = || {
        if !(h.t_acq_s > 0.0 && h.rate1 > 0.0 && h.rate2 > 0.0) {
            return Err(Error::UndefinedNormalization(format!(
                "rates {} and {} /s over {} s",
                h.rate1, h.rate2, h.t_acq_s
            )));
        }
        Ok(h.rate1 * h.rate2 * dt * h.t_acq_s * h.orders as f64)
    };
    let (normalization, overlap) = match mode {
        Normalization::Analytic => (analytic()?, false),
        Normalization::Overlap => {
            if h.window_s() >= h.t_acq_s {
                return Err(Error::UndefinedNormalization(format!(
                    "window {} s is not shorter than the acquisition {} s",
                    h.window_s(),
                    h.t_acq_s
                )));
            }
            (analytic()?, true)
        }
        Normalization::Tail { fraction } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::invalid(format!(
                    "tail fraction must be in (0, 1], got {fraction}"
                )));
            }
            let k = ((h.n_bins() as f64 * fraction).ceil() as usize).clamp(1, h.n_bins());
            let tail = &h.counts[h.n_bins() - k..];
            let mean = tail.iter().sum::<u64>() as f64 / k as f64;
            if mean <= 0.0 {
                return Err(Error::UndefinedNormalization(
                    "no counts in the tail bins".into(),
                ));
            }
            (mean, false)
        }
    };
    // Starts later than T - τ have no partner at lag τ; the linear loss is
    // exact at the bin center.
    let denom: Vec<f64> = tau
        .iter()
        .map(|&t| {
            if overlap {
                normalization * (1.0 - t / h.t_acq_s)
            } else {
                normalization
            }
        })
        .collect();
    let g2 = h
        .counts
        .iter()
        .zip(&denom)
        .map(|(&c, d)| c as f64 / d)
        .collect();
    let sigma = h
        .counts
        .iter()
        .zip(&denom)
        .map(|(&c, d)| (c as f64).sqrt() / d)
        .collect();
    Ok(G2Estimate {
        tau,
        g2,
        sigma,
        normalization,
        counts: h.counts.clone(),
        bin_width_s: dt,
    })
}

/// Per-bin rms of `g²` from counting noise alone, `1/√(R₁R₂ΔτT)`.
pub fn shot_noise_rms(rate1: f64, rate2: f64, bin_width_s: f64, t_acq_s: f64) -> f64 {
    1.0 / (rate1 * rate2 * bin_width_s * t_acq_s).sqrt()
}

/// Bin width at which [`shot_noise_rms`] equals `rms`.
pub fn bin_width_for_shot_noise(rms: f64, rate1: f64, rate2: f64, t_acq_s: f64) -> f64 {
    1.0 / (rms * rms * rate1 * rate2 * t_acq_s)
}

const MIN_FIT_BINS: usize = 10;

/// Weighted fit of `1 + C0 e^{-τ/τ_c}` over bins with `τ ≥ exclude_below`
/// and nonzero counts. By default the first bin is dropped.
pub fn fit_exponential(est: &G2Estimate, exclude_below: Option<f64>) -> Result<ExpFit> {
    let cut = exclude_below.unwrap_or(est.bin_width_s);
    let keep: Vec<usize> = (0..est.tau.len())
        .filter(|&i| est.tau[i] >= cut && est.counts[i] > 0)
        .collect();
    if keep.len() < MIN_FIT_BINS {
        return Err(Error::InsufficientData(format!(
            "{} usable bins after excluding tau < {cut:e} s; need {MIN_FIT_BINS}",
            keep.len()
        )));
    }
    let t: Vec<f64> = keep.iter().map(|&i| est.tau[i]).collect();
    let y: Vec<f64> = keep.iter().map(|&i| est.g2[i]).collect();
    let s: Vec<f64> = keep.iter().map(|&i| est.sigma[i]).collect();
    fit_decay(&t, &y, Some(&s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEstimate {
    pub q_from_c0: f64,
    pub q_from_c0_sigma: f64,
    pub q_from_tau: Option<f64>,
    pub q_from_tau_sigma: Option<f64>,
    /// `Q_from_C0 - Q_from_tau`.
    pub discrepancy: Option<f64>,
}

/// `Q = C0 <n>` and `Q = Γ_c τ_c - 1`.
pub fn estimate_q(fit: &ExpFit, n_mean: f64, gamma_c: f64) -> Result<QEstimate> {
    if !(n_mean.is_finite() && n_mean > 0.0) {
        return Err(Error::invalid(format!(
            "mean photon number must be > 0, got {n_mean}"
        )));
    }
    let q_from_c0 = fit.c0 * n_mean;
    let q_from_tau = fit.tau_c.map(|tau| gamma_c * tau - 1.0);
    Ok(QEstimate {
        q_from_c0,
        q_from_c0_sigma: fit.c0_sigma() * n_mean,
        q_from_tau,
        q_from_tau_sigma: fit.tau_c.map(|_| gamma_c * fit.tau_sigma()),
        discrepancy: q_from_tau.map(|q| q_from_c0 - q),
    })
}

/// Flat `key = value` report of a fit and its Q estimates. Undefined
/// entries are written as `NA`.
pub fn write_fit_report<W: io::Write>(
    header: &str,
    fit: &ExpFit,
    q: &QEstimate,
    mut out: W,
) -> io::Result<()> {
    let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:e}"));
    let flat = fit.is_flat();
    out.write_all(header.as_bytes())?;
    writeln!(out, "C0 = {:e}", fit.c0)?;
    writeln!(out, "C0_sigma = {:e}", fit.c0_sigma())?;
    writeln!(out, "tau_c_s = {}", opt(fit.tau_c))?;
    writeln!(
        out,
        "tau_c_sigma_s = {}",
        opt((!flat).then(|| fit.tau_sigma()))
    )?;
    writeln!(out, "Q_from_C0 = {:e}", q.q_from_c0)?;
    writeln!(out, "Q_from_C0_sigma = {:e}", q.q_from_c0_sigma)?;
    writeln!(out, "Q_from_tau = {}", opt(q.q_from_tau))?;
    writeln!(out, "Q_from_tau_sigma = {}", opt(q.q_from_tau_sigma))?;
    writeln!(out, "chi2 = {:e}", fit.chi2)?;
    writeln!(out, "chi2_reduced = {:e}", fit.chi2_reduced)?;
    writeln!(out, "n_points = {}", fit.n_points)?;
    writeln!(out, "cov_C0_C0 = {:e}", fit.covariance[0][0])?;
    writeln!(out, "cov_C0_tau = {:e}", fit.covariance[0][1])?;
    writeln!(out, "cov_tau_tau = {:e}", fit.covariance[1][1])?;
    Ok(())
}
