#![allow(dead_code)]

use microlaser_core::TimestampStream;
use rand::RngExt;
use rand_distr::{Distribution, Exp};
use rand_pcg::Pcg64;

/// Homogeneous Poisson events of `rate` per second over `[0, duration]`.
pub fn poisson_stream(
    rng: &mut Pcg64,
    channel: u32,
    rate: f64,
    duration_s: f64,
) -> TimestampStream {
    let gap = Exp::new(rate).unwrap();
    let duration_ps = (duration_s * 1e12).round() as u64;
    let mut t = 0.0;
    let mut times = Vec::with_capacity((rate * duration_s * 1.01) as usize + 16);
    loop {
        t += gap.sample(rng);
        if t > duration_s {
            break;
        }
        times.push(((t * 1e12).round() as u64).min(duration_ps));
    }
    TimestampStream::new(channel, duration_ps, times).unwrap()
}

/// Every (start, stop) pair, binned by delay.
pub fn brute_force(a: &[u64], b: &[u64], bin: u64, n_bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_bins];
    for &s in a {
        for &t in b {
            if t >= s {
                let i = (t - s) / bin;
                if (i as usize) < n_bins {
                    counts[i as usize] += 1;
                }
            }
        }
    }
    counts
}

/// Sorted random timestamps with deliberate ties and clusters.
pub fn random_times(rng: &mut Pcg64, len: usize, horizon: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (0..len)
        .map(|_| {
            let t = rng.random_range(0..horizon);
            if rng.random_bool(0.1) {
                t - t % 1000
            } else {
                t
            }
        })
        .collect();
    v.sort_unstable();
    v
}

/// Kolmogorov–Smirnov statistic of `xs` against the standard normal CDF.
pub fn ks_normal(xs: &mut [f64]) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = n.cdf(x);
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov critical value for `n` samples at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}
