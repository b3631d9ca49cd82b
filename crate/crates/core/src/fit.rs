//! Least-squares fit of `g²(τ) = 1 + C0 · exp(-τ/τ_c)`.
//!
//! The starting point comes from a straight-line fit of `ln|g² - 1|`
//! against `τ`; it is then refined by Gauss–Newton steps with
//! Levenberg–Marquardt damping.

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const PARAM_REL_TOL: f64 = 1e-10;
/// Standard normal quantile for the flat-curve chi-square test (α = 0.01).
const FLAT_TEST_Z: f64 = 2.326_347_874_040_841;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpFit {
    pub c0: f64,
    /// `None` when the data are consistent with a flat `g² = 1`.
    pub tau_c: Option<f64>,
    /// Covariance of `(C0, τ_c)`; zero for a flat result.
    pub covariance: [[f64; 2]; 2],
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub n_points: usize,
    pub iterations: usize,
}

impl ExpFit {
    pub fn is_flat(&self) -> bool {
        self.tau_c.is_none()
    }

    pub fn c0_sigma(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn tau_sigma(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }
}

fn model(c0: f64, tau: f64, t: f64) -> f64 {
    1.0 + c0 * (-t / tau).exp()
}

fn chi2(t: &[f64], y: &[f64], w: &[f64], c0: f64, tau: f64) -> f64 {
    t.iter()
        .zip(y)
        .zip(w)
        .map(|((&t, &y), &w)| {
            let r = y - model(c0, tau, t);
            w * r * r
        })
        .sum()
}

/// Wilson–Hilferty approximation of the upper 1% point of χ²(dof).
fn chi2_upper_1pct(dof: usize) -> f64 {
    let k = dof as f64;
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + FLAT_TEST_Z * a.sqrt()).powi(3)
}

/// Fits `1 + C0 e^{-t/τ}` to `(t, y)`.
///
/// With `sigma`, residuals are weighted by `1/σ²`, the covariance is
/// `(JᵀWJ)⁻¹`, and data whose χ² against `y = 1` passes at α = 0.01 yield a
/// flat result (`C0 = 0`, `τ_c = None`). Without `sigma`, all points weigh
/// equally and the covariance is scaled by the reduced χ².
pub fn fit_decay(t: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<ExpFit> {
    let n = t.len();
    if y.len() != n || sigma.is_some_and(|s| s.len() != n) {
        return Err(Error::invalid("fit inputs differ in length"));
    }
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "{n} points, need at least 3"
        )));
    }
    if let Some(s) = sigma {
        if s.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("uncertainties must be finite and > 0"));
        }
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite fit input"));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; n],
    };
    let dev: Vec<f64> = y.iter().map(|y| y - 1.0).collect();
    let flat = |chi2: f64| ExpFit {
        c0: 0.0,
        tau_c: None,
        covariance: [[0.0; 2]; 2],
        chi2,
        chi2_reduced: chi2 / (n - 1) as f64,
        n_points: n,
        iterations: 0,
    };

    let chi2_flat: f64 = dev.iter().zip(&w).map(|(d, w)| w * d * d).sum();
    let max_dev = dev.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    match sigma {
        Some(_) if chi2_flat <= chi2_upper_1pct(n) => return Ok(flat(chi2_flat)),
        None if max_dev == 0.0 => return Ok(flat(0.0)),
        _ => {}
    }

    let t_min = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    if span <= 0.0 {
        return Err(Error::InsufficientData(
            "all points at the same delay".into(),
        ));
    }

    let (mut c0, mut tau) = initial_guess(t, &dev, sigma, max_dev, span);
    // Best amplitude for the guessed decay time.
    let (num, den) = t
        .iter()
        .zip(&dev)
        .zip(&w)
        .fold((0.0, 0.0), |(a, b), ((&t, &d), &w)| {
            let e = (-t / tau).exp();
            (a + w * d * e, b + w * e * e)
        });
    if den > 0.0 {
        c0 = num / den;
    }

    let mut current = chi2(t, y, &w, c0, tau);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(t, y, &w, c0, tau);
        let mut accepted = None;
        while lambda <= 1e16 {
            let a = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let Some(step) = solve2(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let (nc, nt) = (c0 + step[0], tau + step[1]);
            if !(nt > 0.0 && nt.is_finite() && nc.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let trial = chi2(t, y, &w, nc, nt);
            if trial <= current {
                accepted = Some((nc, nt, trial, step));
                lambda = (lambda / 10.0).max(1e-15);
                break;
            }
            lambda *= 10.0;
        }
        match accepted {
            Some((nc, nt, trial, step)) => {
                c0 = nc;
                tau = nt;
                current = trial;
                let small_c = step[0].abs() <= PARAM_REL_TOL * c0.abs();
                let small_t = step[1].abs() <= PARAM_REL_TOL * tau;
                if (small_c && small_t) || current == 0.0 {
                    converged = true;
                    break;
                }
            }
            // No step lowers χ²: at the minimum to working precision.
            None => {
                converged = true;
                break;
            }
        }
        if tau > 1e6 * span {
            break;
        }
    }
    if !converged || tau > 1e6 * span {
        return Err(Error::FitNonConvergence {
            iterations,
            c0,
            tau_c: tau,
        });
    }

    let (jtj, _) = normal_equations(t, y, &w, c0, tau);
    let mut covariance = invert2(jtj).unwrap_or([[f64::NAN; 2]; 2]);
    let chi2_reduced = current / (n - 2) as f64;
    if sigma.is_none() {
        for row in &mut covariance {
            for x in row.iter_mut() {
                *x *= chi2_reduced;
            }
        }
    }
    Ok(ExpFit {
        c0,
        tau_c: Some(tau),
        covariance,
        chi2: current,
        chi2_reduced,
        n_points: n,
        iterations,
    })
}

fn initial_guess(
    t: &[f64],
    dev: &[f64],
    sigma: Option<&[f64]>,
    max_dev: f64,
    span: f64,
) -> (f64, f64) {
    let significant: Vec<usize> = (0..t.len())
        .filter(|&i| match sigma {
            Some(s) => dev[i].abs() > 2.0 * s[i],
            None => dev[i].abs() > 0.05 * max_dev,
        })
        .collect();
    let sign_sum: f64 = significant
        .iter()
        .map(|&i| dev[i] / sigma.map_or(1.0, |s| s[i] * s[i]))
        .sum();
    let sign = if sign_sum < 0.0 { -1.0 } else { 1.0 };
    let pts: Vec<(f64, f64)> = significant
        .iter()
        .filter(|&&i| dev[i] * sign > 0.0)
        .map(|&i| (t[i], (dev[i] * sign).ln()))
        .collect();
    let fallback = (sign * max_dev, span / 3.0);
    if pts.len() < 2 {
        return fallback;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(a, b), p| {
        (a + (p.0 - mx).powi(2), b + (p.0 - mx) * (p.1 - my))
    });
    if sxx <= 0.0 {
        return fallback;
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return fallback;
    }
    let intercept = my - slope * mx;
    (sign * intercept.exp(), -1.0 / slope)
}

/// `JᵀWJ` and `JᵀW r` for the model's partial derivatives.
fn normal_equations(
    t: &[f64],
    y: &[f64],
    w: &[f64],
    c0: f64,
    tau: f64,
) -> ([[f64; 2]; 2], [f64; 2]) {
    let mut jtj = [[0.0; 2]; 2];
    let mut jtr = [0.0; 2];
    for ((&t, &y), &w) in t.iter().zip(y).zip(w) {
        let e = (-t / tau).exp();
        let r = y - (1.0 + c0 * e);
        let j = [e, c0 * e * t / (tau * tau)];
        for a in 0..2 {
            jtr[a] += w * j[a] * r;
            for b in 0..2 {
                jtj[a][b] += w * j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

fn invert2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ])
}

fn solve2(m: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let inv = invert2(m)?;
    Some([
        inv[0][0] * b[0] + inv[0][1] * b[1],
        inv[1][0] * b[0] + inv[1][1] * b[1],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_curve_recovered() {
        let tau_c = 1e-6;
        let t: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) * 25e-9).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| 1.0 + 0.002 * (-t / tau_c).exp())
            .collect();
        let sigma = vec![1e-4; t.len()];
        let fit = fit_decay(&t, &y, Some(&sigma)).unwrap();
        assert!((fit.c0 - 0.002).abs() < 1e-9 * 0.002, "C0 = {}", fit.c0);
        assert!((fit.tau_c.unwrap() - tau_c).abs() < 1e-9 * tau_c);
        let fit = fit_decay(&t, &y, None).unwrap();
        assert!((fit.c0 - 0.002).abs() < 1e-10 * 0.002);
        assert!((fit.tau_c.unwrap() - tau_c).abs() < 1e-10 * tau_c);
    }

    #[test]
    fn negative_amplitude_recovered() {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|&t| 1.0 - 0.3 * (-t / 0.7).exp()).collect();
        let fit = fit_decay(&t, &y, None).unwrap();
        assert!((fit.c0 + 0.3).abs() < 1e-10);
        assert!((fit.tau_c.unwrap() - 0.7).abs() < 1e-10);
    }

    #[test]
    fn flat_data_give_flat_fit() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y = vec![1.0; 50];
        let fit = fit_decay(&t, &y, Some(&vec![0.1; 50])).unwrap();
        assert!(fit.is_flat());
        assert_eq!(fit.c0, 0.0);
        let fit = fit_decay(&t, &y, None).unwrap();
        assert!(fit.is_flat());
    }

    #[test]
    fn input_validation() {
        assert!(fit_decay(&[1.0, 2.0], &[1.0, 1.0], None).is_err());
        assert!(fit_decay(&[1.0, 2.0, 3.0], &[1.0, 1.0], None).is_err());
        assert!(fit_decay(&[1.0, 2.0, 3.0], &[1.1, 1.0, 1.0], Some(&[1.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn chi2_quantile_approximation() {
        // Reference upper 1% points of χ²: dof 10 → 23.209, dof 100 → 135.807, dof 500 → 576.493.
        for (dof, q) in [(10, 23.209), (100, 135.807), (500, 576.493)] {
            assert!((chi2_upper_1pct(dof) - q).abs() / q < 3e-3, "dof {dof}");
        }
    }
}
