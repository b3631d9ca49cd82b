use microlaser_core::quantum::{
    default_tau_grid, g2_from_generator, g2_regression, q_and_tau_from_g2, steady_state,
    steady_state_and_generator, validity_check, MasterEquationGenerator, PhotonDistribution,
    ValidityReport,
};
use microlaser_core::semiclassical::{
    correlation_time, default_scan_max, find_fixed_points, gain, mandel_q_semiclassical, sweep,
    GainCurve, MicrolaserGain, SweepDirection,
};
use microlaser_core::{
    averaged_beta, beta, interaction_time, EmissionKernel, MicrolaserConfig, VelocityDistribution,
};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64;

fn reference(n_atoms: f64, spread: f64) -> (MicrolaserConfig, VelocityDistribution) {
    let cfg = MicrolaserConfig::reference(n_atoms).with_velocity_spread(spread);
    let dist = VelocityDistribution::from_config(&cfg).unwrap();
    (cfg, dist)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn transit_time_scaling() {
    let t = interaction_time(750.0, 41e-6).unwrap();
    assert!((t - 9.69e-8).abs() < 0.005e-8);
    assert_eq!(interaction_time(1500.0, 41e-6).unwrap(), t / 2.0);
    assert_eq!(interaction_time(750.0, 82e-6).unwrap(), t * 2.0);
    let mut prev = f64::INFINITY;
    for v in [100.0, 300.0, 750.0, 2000.0] {
        let t = interaction_time(v, 41e-6).unwrap();
        assert!(t < prev);
        prev = t;
    }
    assert!(interaction_time(750.0, 50e-6).unwrap() > t);
}

#[test]
fn quadrature_converges_on_doubling() {
    let cfg = MicrolaserConfig::reference(158.0).with_velocity_spread(0.45);
    let base = VelocityDistribution::from_config(&cfg).unwrap();
    let fine =
        VelocityDistribution::gaussian(cfg.v0, 0.45 * cfg.v0, 2 * base.nodes().len()).unwrap();
    let (a, b) = (
        EmissionKernel::new(&cfg, &base),
        EmissionKernel::new(&cfg, &fine),
    );
    let worst = (1..=cfg.n_max)
        .map(|k| (a.beta_bar(k as f64) - b.beta_bar(k as f64)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst:e}");
}

#[test]
fn wide_average_tends_to_half() {
    // Monte Carlo over the same truncated distribution.
    let cfg = MicrolaserConfig::reference(158.0).with_velocity_spread(0.45);
    let dist = VelocityDistribution::from_config(&cfg).unwrap();
    let k = 40_000;
    let quad = averaged_beta(k, &cfg, &dist);
    let mut rng = Pcg64::seed_from_u64(2024);
    let draws = 1_000_000;
    let mc: f64 = (0..draws)
        .map(|_| beta(k, dist.sample(&mut rng), &cfg).unwrap())
        .sum::<f64>()
        / draws as f64;
    // sin² has standard deviation ≈ 0.35, so the Monte Carlo error is ≈ 3.5e-4.
    assert!(
        (quad - mc).abs() < 2e-3,
        "quadrature {quad}, Monte Carlo {mc}"
    );
    assert!((quad - 0.5).abs() < 0.05, "{quad}");
}

#[test]
fn gain_matches_reference_quadrature() {
    // Reference: 30-digit adaptive quadrature of the truncated Gaussian average.
    let (cfg, dist) = reference(158.0, 0.45);
    for (n, expect) in [
        (0.0, 24_496_130.608_403_356),
        (100.0, 1_342_144_844.499_683_8),
        (500.0, 601_460_086.847_625_8),
    ] {
        let g = gain(n, &cfg, &dist);
        assert!(rel(g, expect) < 1e-11, "G({n}) = {g}, expected {expect}");
    }
}

#[test]
fn fixed_point_matches_dense_scan() {
    // Reference: scan at step 1e-3 over [0, r/Γ_c + 1] with a 2000-node rule.
    let (cfg, dist) = reference(158.0, 0.45);
    let roots = find_fixed_points(&cfg, &dist, default_scan_max(&cfg, &dist)).unwrap();
    assert_eq!(roots.len(), 1);
    let fp = &roots[0];
    assert!(fp.stable);
    assert!(rel(fp.n0, 548.907_587_289_988_4) < 1e-9, "{}", fp.n0);
    let tau = correlation_time(fp, &cfg, &dist).unwrap();
    assert!(rel(tau * cfg.gamma_c, 0.392_093_659_538_282_4) < 1e-6);
    let q = mandel_q_semiclassical(fp, &cfg, &dist).unwrap();
    assert!(rel(q, -0.607_906_340_461_717_7) < 1e-6);
    assert!((0.3..0.6).contains(&(tau * cfg.gamma_c)));
}

#[test]
fn analytic_and_numeric_slopes_agree() {
    let (cfg, dist) = reference(158.0, 0.45);
    let curve = MicrolaserGain::new(&cfg, &dist);
    for n in [3.0, 50.0, 200.0, 548.9, 1500.0] {
        let a = curve.gain_slope_analytic(n);
        let d = curve.gain_slope(n);
        assert!(
            (a - d).abs() <= 1e-6 * a.abs().max(1e-3 * cfg.gamma_c),
            "n = {n}: {a} vs {d}"
        );
    }
}

#[test]
fn semiclassical_sign_property() {
    for spread in [0.0, 0.45] {
        for n_atoms in [12.0, 40.0, 158.0, 400.0] {
            let (cfg, dist) = reference(n_atoms, spread);
            for fp in find_fixed_points(&cfg, &dist, default_scan_max(&cfg, &dist)).unwrap() {
                if let (Some(q), Some(tau)) = (fp.q_semiclassical, fp.tau_c) {
                    assert_eq!(q < 0.0, fp.gain_slope < 0.0);
                    assert_eq!(q < 0.0, tau < 1.0 / cfg.gamma_c);
                    assert!(rel(q, cfg.gamma_c * tau - 1.0) < 1e-9 || q.abs() < 1e-12);
                }
            }
        }
    }
}

fn pump_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

/// Pump and size of the largest step of the selected operating point.
fn biggest_jump(result: &microlaser_core::semiclassical::SweepResult) -> (f64, f64) {
    let sel: Vec<(f64, f64)> = result
        .points
        .iter()
        .map(|p| (p.n_atoms_mean, p.selected.as_ref().unwrap().n0))
        .collect();
    sel.windows(2)
        .map(|w| (w[1].0, (w[1].1 - w[0].1).abs()))
        .fold((0.0, 0.0), |best, x| if x.1 > best.1 { x } else { best })
}

#[test]
fn sweep_jumps_with_hysteresis() {
    let (cfg, dist) = reference(0.0, 0.45);
    let pumps = pump_grid(0.0, 1000.0, 5.0);
    let up = sweep(&cfg, &dist, &pumps, SweepDirection::Ascending).unwrap();
    let down = sweep(&cfg, &dist, &pumps, SweepDirection::Descending).unwrap();
    let (at_up, size_up) = biggest_jump(&up);
    let (at_down, size_down) = biggest_jump(&down);
    assert!(
        size_up > 200.0 && size_down > 200.0,
        "{size_up} {size_down}"
    );
    assert!(
        (200.0..=600.0).contains(&at_up),
        "ascending jump at {at_up}"
    );
    // `at_down` is the pump just below the descending jump, in sweep order.
    assert!(at_down < at_up, "descending {at_down} vs ascending {at_up}");

    // The root census shows two stable branches between the two jumps.
    let overlap = up
        .points
        .iter()
        .filter(|p| p.n_atoms_mean > at_down && p.n_atoms_mean < at_up)
        .all(|p| p.stable_roots().count() >= 2);
    assert!(overlap);

    // Below the first jump the selected branch rises monotonically.
    let low: Vec<f64> = up
        .points
        .iter()
        .filter(|p| p.n_atoms_mean <= 150.0)
        .map(|p| p.selected.as_ref().unwrap().n0)
        .collect();
    assert!(low.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(
        up,
        sweep(&cfg, &dist, &pumps, SweepDirection::Ascending).unwrap()
    );
}

#[test]
fn steady_state_moments_match_high_precision() {
    // Reference: product formula summed with 50-digit arithmetic.
    for (n_atoms, spread, mean, q) in [
        (12.0, 0.0, 118.818_139_533_075_56, 0.675_948_441_356_887_6),
        (12.0, 0.45, 111.711_447_565_192_96, 0.465_956_263_014_772_1),
        (158.0, 0.0, 495.466_572_734_471_6, -0.802_286_180_900_679_6),
        (158.0, 0.45, 549.376_825_409_099, -0.606_685_160_475_078),
    ] {
        let (cfg, dist) = reference(n_atoms, spread);
        let m = steady_state(&cfg, &dist).unwrap().moments();
        assert!(rel(m.mean, mean) < 1e-9, "N = {n_atoms}: mean {}", m.mean);
        assert!(
            rel(m.mandel_q.unwrap(), q) < 1e-8,
            "N = {n_atoms}: Q {:?}",
            m.mandel_q
        );
    }
}

#[test]
fn regression_fit_matches_reference() {
    // Reference: sparse matrix exponential on the full basis and a
    // Levenberg–Marquardt fit.
    for (n_atoms, c0, tau_gc) in [
        (
            158.0,
            -0.001_103_731_448_268_327_3,
            0.393_140_502_068_851_87,
        ),
        (12.0, 0.004_176_381_726_416_017_5, 1.492_777_343_877_716),
    ] {
        let (cfg, dist) = reference(n_atoms, 0.45);
        let curve = g2_regression(&cfg, &dist, &default_tau_grid(&cfg)).unwrap();
        let fit = q_and_tau_from_g2(&curve, curve.mean_n).unwrap();
        assert!(rel(fit.c0, c0) < 1e-6, "C0 {}", fit.c0);
        assert!(rel(fit.tau_c.unwrap() * cfg.gamma_c, tau_gc) < 1e-6);
        assert_eq!(fit.c0 > 0.0, n_atoms < 40.0);
    }
}

#[test]
fn theory_q_several_times_measured() {
    let (cfg, dist) = reference(158.0, 0.45);
    let curve = g2_regression(&cfg, &dist, &default_tau_grid(&cfg)).unwrap();
    let fit = q_and_tau_from_g2(&curve, curve.mean_n).unwrap();
    let ratio = fit.mandel_q / -0.13;
    assert!((3.0..8.0).contains(&ratio), "{ratio}");
}

#[test]
fn regression_decorrelates() {
    let (cfg, dist) = reference(60.0, 0.45);
    let grid: Vec<f64> = (0..=60).map(|i| i as f64 * 0.5 / cfg.gamma_c).collect();
    let curve = g2_regression(&cfg, &dist, &grid).unwrap();
    assert!((curve.values.last().unwrap() - 1.0).abs() < 1e-6);
    let g0 = 1.0 + curve.mandel_q / curve.mean_n;
    assert!(rel(curve.values[0], g0) < 1e-8);
    // Over the last tenth of the default grid the envelope still decreases;
    // further out it sits at the rounding floor.
    let curve = g2_regression(&cfg, &dist, &default_tau_grid(&cfg)).unwrap();
    let tail: Vec<f64> = curve.values[180..]
        .iter()
        .map(|g| (g - 1.0).abs())
        .collect();
    assert!(tail[0] > 1e-9);
    assert!(tail.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn coherent_surrogate_is_flat() {
    // Constant birth rate with linear loss has a Poisson steady state.
    let (n_bar, gamma_c, n_max) = (40.0, 1.0, 200);
    let birth = (0..=n_max)
        .map(|n| if n < n_max { n_bar * gamma_c } else { 0.0 })
        .collect();
    let gen = MasterEquationGenerator::from_birth_rates(birth, gamma_c).unwrap();
    let p = gen.stationary().unwrap();
    assert!(p.total_variation(&PhotonDistribution::poisson(n_bar, n_max).unwrap()) < 1e-12);
    let tau: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let g2 = g2_from_generator(&gen, &p, &tau, 0.0).unwrap();
    for g in g2 {
        assert!((g - 1.0).abs() < 1e-8, "{g}");
    }
}

#[test]
fn evolution_relaxes_to_steady_state() {
    let (cfg, dist) = reference(30.0, 0.45);
    let (p, gen) = steady_state_and_generator(&cfg, &dist).unwrap();
    let mut p0 = vec![0.0; gen.dim()];
    p0[0] = 1.0;
    let out = gen.evolve(&p0, 50.0 / cfg.gamma_c).unwrap();
    let total: f64 = out.iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
    let q = PhotonDistribution::from_weights(out).unwrap();
    assert!(q.total_variation(&p) < 1e-6);
}

#[test]
fn validity_examples() {
    let (cfg, dist) = reference(158.0, 0.45);
    let p = steady_state(&cfg, &dist).unwrap();
    let report = validity_check(&cfg, &p).unwrap();
    assert!(!report.questionable && report.ratio < 0.01);
    let one = ValidityReport::from_coupling(0.5, 1.0, 0.3).unwrap();
    assert_eq!(one.ratio, 0.5);
    assert!(one.questionable);
    assert_eq!(
        ValidityReport::from_coupling(0.0, 3.0, 0.3).unwrap().ratio,
        0.0
    );
}

fn random_config(rng: &mut Pcg64) -> MicrolaserConfig {
    let mut cfg = MicrolaserConfig::reference(rng.random_range(0.5..400.0)).with_velocity_spread(
        if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(0.05..0.6)
        },
    );
    cfg.g0 *= rng.random_range(0.5..2.0);
    cfg.gamma_c *= rng.random_range(0.5..2.0);
    let n = cfg.n_atoms_mean;
    cfg.with_pump(n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steady_state_is_null_vector(seed in any::<u64>()) {
        let cfg = random_config(&mut Pcg64::seed_from_u64(seed));
        let dist = VelocityDistribution::from_config(&cfg).unwrap();
        let (p, gen) = steady_state_and_generator(&cfg, &dist).unwrap();
        let worst = gen.apply(p.probabilities()).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(worst / cfg.gamma_c < 1e-10);
        let probs = p.probabilities();
        for n in 1..probs.len() {
            if probs[n] > 1e-300 {
                let up = probs[n - 1] * gen.birth_rates()[n - 1];
                let down = probs[n] * gen.death_rates()[n];
                prop_assert!((up - down).abs() <= 1e-10 * down);
            }
        }
    }

    #[test]
    fn zero_lag_identity(seed in any::<u64>()) {
        let cfg = random_config(&mut Pcg64::seed_from_u64(seed));
        let dist = VelocityDistribution::from_config(&cfg).unwrap();
        let curve = g2_regression(&cfg, &dist, &[0.0]).unwrap();
        let expect = 1.0 + curve.mandel_q / curve.mean_n;
        prop_assert!(rel(curve.values[0], expect) < 1e-8);
    }

    #[test]
    fn generator_columns_conserve(seed in any::<u64>()) {
        let cfg = random_config(&mut Pcg64::seed_from_u64(seed)).with_n_max(300);
        let dist = VelocityDistribution::from_config(&cfg).unwrap();
        let gen = microlaser_core::quantum::build_generator(&cfg, &dist).unwrap();
        for col in 0..gen.dim() {
            let sum: f64 = (col.saturating_sub(1)..=(col + 1).min(gen.n_max())).map(|r| gen.entry(r, col)).sum();
            let scale = -gen.entry(col, col);
            prop_assert!(sum.abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn beta_bar_in_unit_interval(k in 0usize..5000, spread in 0.0f64..0.9) {
        let cfg = MicrolaserConfig::reference(10.0).with_velocity_spread(spread);
        let dist = VelocityDistribution::from_config(&cfg).unwrap();
        let b = averaged_beta(k, &cfg, &dist);
        prop_assert!((0.0..=1.0).contains(&b));
        let (lo, hi) = dist.nodes().iter().map(|&(v, _)| beta(k, v, &cfg).unwrap())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        prop_assert!(b >= lo - 1e-15 && b <= hi + 1e-15);
    }
}
