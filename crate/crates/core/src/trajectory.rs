//! Jump-process simulation of the single-atom pumped cavity.
//!
//! Atoms arrive as a Poisson process of rate `r`. Each one draws a speed and
//! adds a photon with probability `sin²(√(n+1) g t_int(v))`, applied at the
//! arrival instant. Photons leak out at rate `Γ_c n`; each leak is detected
//! with probability `η` and routed to one of two detectors.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::{Rng, RngExt, SeedableRng};
use rand_distr::{Distribution, Exp1};
use rand_pcg::Pcg64;

use crate::config::MicrolaserConfig;
use crate::error::{Error, Result};
use crate::kernel::injection_rate;
use crate::quantum::{steady_state, PhotonDistribution};
use crate::timestamps::{seconds_to_ps, TimestampStream};
use crate::velocity::VelocityDistribution;

/// Default burn-in, in cavity lifetimes, discarded by the occupancy estimators.
pub const DEFAULT_BURN_IN_LIFETIMES: f64 = 20.0;
const DEFAULT_BATCHES: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitialState {
    /// Photon number drawn from the quantum steady state.
    #[default]
    SteadyState,
    /// Empty cavity.
    Cold,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulationOptions {
    pub initial: InitialState,
    /// Keep the `(time, n)` change points.
    pub record_path: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            initial: InitialState::SteadyState,
            record_path: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventCounters {
    pub atoms: u64,
    pub emissions: u64,
    pub decays: u64,
    pub detections: u64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub config: MicrolaserConfig,
    pub duration_s: f64,
    pub initial_n: usize,
    pub final_n: usize,
    /// Change points `(t, n)`, starting with `(0, initial_n)`.
    pub path: Option<Vec<(f64, usize)>>,
    pub stream1: TimestampStream,
    pub stream2: TimestampStream,
    pub counters: EventCounters,
}

impl TrajectoryRecord {
    /// CSV `time_s,n` of the change points.
    pub fn write_path_csv<W: Write>(&self, header: &str, out: W) -> Result<()> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| Error::invalid("record holds no photon-number path"))?;
        let mut out = io::BufWriter::new(out);
        out.write_all(header.as_bytes())?;
        writeln!(out, "time_s,n")?;
        for (t, n) in path {
            writeln!(out, "{t:e},{n}")?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn simulate(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
    duration_s: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    simulate_with(cfg, dist, duration_s, seed, SimulationOptions::default())
}

pub fn simulate_with(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
    duration_s: f64,
    seed: u64,
    options: SimulationOptions,
) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!(
            "duration must be > 0, got {duration_s}"
        )));
    }
    let duration_ps = seconds_to_ps(duration_s)?;
    let mut rng = Pcg64::seed_from_u64(seed);

    let initial_n = match options.initial {
        InitialState::Cold => 0,
        InitialState::Fixed(k) => k,
        InitialState::SteadyState => sample_index(&steady_state(cfg, dist)?, &mut rng),
    };
    if initial_n >= cfg.n_max {
        return Err(Error::PhotonCap {
            n_max: cfg.n_max,
            time: 0.0,
        });
    }

    let pump = injection_rate(cfg, dist);
    let angle_scale = cfg.g0 * PI.sqrt() * cfg.mode_waist;
    let mut n = initial_n;
    let mut t = 0.0f64;
    let mut counters = EventCounters::default();
    let mut path = options.record_path.then(|| vec![(0.0, n)]);
    let mut ch1 = Vec::new();
    let mut ch2 = Vec::new();

    loop {
        let decay = cfg.gamma_c * n as f64;
        let total = pump + decay;
        if total <= 0.0 {
            break;
        }
        let wait: f64 = Exp1.sample(&mut rng);
        t += wait / total;
        if t > duration_s {
            break;
        }
        if rng.random::<f64>() * total < pump {
            counters.atoms += 1;
            let theta = angle_scale / dist.sample(&mut rng);
            let s = (((n + 1) as f64).sqrt() * theta).sin();
            if rng.random::<f64>() < s * s {
                n += 1;
                counters.emissions += 1;
                if n >= cfg.n_max {
                    return Err(Error::PhotonCap {
                        n_max: cfg.n_max,
                        time: t,
                    });
                }
                if let Some(p) = path.as_mut() {
                    p.push((t, n));
                }
            }
        } else {
            n -= 1;
            counters.decays += 1;
            if let Some(p) = path.as_mut() {
                p.push((t, n));
            }
            if rng.random::<f64>() < cfg.detection_efficiency {
                counters.detections += 1;
                let stamp = seconds_to_ps(t)?.min(duration_ps);
                if rng.random::<f64>() < cfg.splitter_ratio {
                    ch1.push(stamp);
                } else {
                    ch2.push(stamp);
                }
            }
        }
    }

    Ok(TrajectoryRecord {
        seed,
        config: cfg.clone(),
        duration_s,
        initial_n,
        final_n: n,
        path,
        stream1: TimestampStream::new(1, duration_ps, ch1)?,
        stream2: TimestampStream::new(2, duration_ps, ch2)?,
        counters,
    })
}

/// Inverse-CDF draw of a photon number.
fn sample_index<R: Rng + ?Sized>(p: &PhotonDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (n, w) in p.probabilities().iter().enumerate() {
        acc += w;
        if u < acc {
            return n;
        }
    }
    p.probabilities()
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(0)
}

fn default_burn_in(rec: &TrajectoryRecord) -> f64 {
    DEFAULT_BURN_IN_LIFETIMES / rec.config.gamma_c
}

fn checked_window(rec: &TrajectoryRecord, burn_in: f64) -> Result<&[(f64, usize)]> {
    let path = rec
        .path
        .as_deref()
        .ok_or_else(|| Error::invalid("record holds no photon-number path"))?;
    if !(burn_in.is_finite() && burn_in >= 0.0) {
        return Err(Error::invalid(format!(
            "burn-in must be >= 0, got {burn_in}"
        )));
    }
    if rec.duration_s <= burn_in {
        return Err(Error::invalid(format!(
            "duration {} s does not exceed burn-in {burn_in} s",
            rec.duration_s
        )));
    }
    Ok(path)
}

/// Calls `visit(n, dwell)` for each piece of the path clipped to `[from, to]`.
fn for_each_dwell(path: &[(f64, usize)], from: f64, to: f64, mut visit: impl FnMut(usize, f64)) {
    for (i, &(start, n)) in path.iter().enumerate() {
        let end = path.get(i + 1).map_or(f64::INFINITY, |p| p.0);
        let a = start.max(from);
        let b = end.min(to);
        if b > a {
            visit(n, b - a);
        }
    }
}

/// Time-weighted occupancy over `[burn_in, duration]`, with the default
/// burn-in of 20 cavity lifetimes when `burn_in` is `None`.
pub fn photon_number_histogram(
    rec: &TrajectoryRecord,
    burn_in: Option<f64>,
) -> Result<PhotonDistribution> {
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(rec));
    let path = checked_window(rec, burn_in)?;
    let top = path
        .iter()
        .map(|p| p.1)
        .max()
        .unwrap_or(0)
        .max(rec.config.n_max);
    let mut weights = vec![0.0; top + 1];
    for_each_dwell(path, burn_in, rec.duration_s, |n, dt| weights[n] += dt);
    PhotonDistribution::from_weights(weights)
}

/// Time-averaged photon number with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeAverage {
    pub mean: f64,
    pub std_error: f64,
    pub batches: usize,
}

pub fn time_average_n(rec: &TrajectoryRecord, burn_in: Option<f64>) -> Result<TimeAverage> {
    time_average_n_batches(rec, burn_in, DEFAULT_BATCHES)
}

/// As [`time_average_n`] with the window split into `batches` equal pieces.
pub fn time_average_n_batches(
    rec: &TrajectoryRecord,
    burn_in: Option<f64>,
    batches: usize,
) -> Result<TimeAverage> {
    if batches < 2 {
        return Err(Error::invalid("batch-means error needs at least 2 batches"));
    }
    let burn_in = burn_in.unwrap_or_else(|| default_burn_in(rec));
    let path = checked_window(rec, burn_in)?;
    let width = (rec.duration_s - burn_in) / batches as f64;
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let from = burn_in + b as f64 * width;
            let to = if b + 1 == batches {
                rec.duration_s
            } else {
                from + width
            };
            let mut area = 0.0;
            for_each_dwell(path, from, to, |n, dt| area += n as f64 * dt);
            area / (to - from)
        })
        .collect();
    let k = batches as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok(TimeAverage {
        mean,
        std_error: (var / k).sqrt(),
        batches,
    })
}
