//! Gain–loss fixed-point analysis of the photon rate equation
//! `d<n>/dt = G(<n>) - L(<n>)`.
//!
//! A steady state `n0` is stable when the restoring rate `∂(L - G)/∂n` is
//! positive there. Its inverse is the correlation time `τ_c`, and the
//! semiclassical Mandel parameter follows as `Q = G'/(Γ_c - G') = Γ_c τ_c - 1`.
//! Because `G` oscillates in `n`, several stable branches can coexist; a
//! sweep over the pump follows one branch until it disappears and then jumps.

use std::fmt::Write as _;
use std::io;

use crate::config::MicrolaserConfig;
use crate::error::{Error, Result};
use crate::kernel::{injection_rate, EmissionKernel};
use crate::velocity::VelocityDistribution;

/// Bracketing grid step in photons.
pub const DEFAULT_GRID_STEP: f64 = 0.25;
/// Relative tolerance of the bisection refinement.
pub const ROOT_REL_TOL: f64 = 1e-9;

/// A gain curve `G(n)` together with the linear loss `Γ_c n`.
pub trait GainCurve {
    fn gain(&self, n: f64) -> f64;

    fn gamma_c(&self) -> f64;

    /// `dG/dn` by central difference with step `max(1e-3, 1e-6 n)`,
    /// one-sided near the origin.
    fn gain_slope(&self, n: f64) -> f64 {
        let h = (1e-6 * n).max(1e-3);
        if n >= h {
            (self.gain(n + h) - self.gain(n - h)) / (2.0 * h)
        } else {
            (self.gain(n + h) - self.gain(n)) / h
        }
    }

    fn loss(&self, n: f64) -> f64 {
        self.gamma_c() * n
    }

    /// `G(n) - L(n)`.
    fn drift(&self, n: f64) -> f64 {
        self.gain(n) - self.loss(n)
    }
}

/// Microlaser gain `G(n) = r · β̄(n + 1)`.
#[derive(Debug, Clone)]
pub struct MicrolaserGain {
    kernel: EmissionKernel,
    rate: f64,
    gamma_c: f64,
}

impl MicrolaserGain {
    pub fn new(cfg: &MicrolaserConfig, dist: &VelocityDistribution) -> Self {
        MicrolaserGain {
            kernel: EmissionKernel::new(cfg, dist),
            rate: injection_rate(cfg, dist),
            gamma_c: cfg.gamma_c,
        }
    }

    /// Injection rate `r`, an upper bound of `G`.
    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Analytic `G'(n) = r · β̄'(n + 1)`.
    pub fn gain_slope_analytic(&self, n: f64) -> f64 {
        self.rate * self.kernel.beta_bar_slope(n + 1.0)
    }
}

impl GainCurve for MicrolaserGain {
    fn gain(&self, n: f64) -> f64 {
        self.rate * self.kernel.beta_bar(n + 1.0)
    }

    fn gamma_c(&self) -> f64 {
        self.gamma_c
    }
}

/// Conventional-laser surrogate: the gain has saturated to a constant.
#[derive(Debug, Clone, Copy)]
pub struct SaturatedGain {
    pub rate: f64,
    pub gamma_c: f64,
}

impl GainCurve for SaturatedGain {
    fn gain(&self, _n: f64) -> f64 {
        self.rate
    }

    fn gamma_c(&self) -> f64 {
        self.gamma_c
    }
}

pub fn gain(n: f64, cfg: &MicrolaserConfig, dist: &VelocityDistribution) -> f64 {
    MicrolaserGain::new(cfg, dist).gain(n)
}

pub fn loss(n: f64, cfg: &MicrolaserConfig) -> f64 {
    cfg.gamma_c * n
}

/// A steady state of the rate equation.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub n0: f64,
    pub stable: bool,
    /// Restoring rate `Γ_c - G'(n0)`.
    pub restoring_rate: f64,
    /// Gain slope `G'(n0)`.
    pub gain_slope: f64,
    /// Correlation time, stable points only.
    pub tau_c: Option<f64>,
    /// Semiclassical Mandel Q, stable points only.
    pub q_semiclassical: Option<f64>,
}

impl FixedPoint {
    fn classify(n0: f64, gain_slope: f64, gamma_c: f64) -> Self {
        let restoring_rate = gamma_c - gain_slope;
        let stable = restoring_rate > 0.0;
        FixedPoint {
            n0,
            stable,
            restoring_rate,
            gain_slope,
            tau_c: stable.then(|| 1.0 / restoring_rate),
            q_semiclassical: stable.then(|| gain_slope / restoring_rate),
        }
    }
}

/// Scan range guaranteed to contain every fixed point: `G ≤ r` implies
/// `G - L < 0` for `n > r/Γ_c`.
pub fn default_scan_max(cfg: &MicrolaserConfig, dist: &VelocityDistribution) -> f64 {
    (injection_rate(cfg, dist) / cfg.gamma_c + 1.0).max(1.0)
}

pub fn find_fixed_points(
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
    n_scan_max: f64,
) -> Result<Vec<FixedPoint>> {
    find_fixed_points_of(
        &MicrolaserGain::new(cfg, dist),
        n_scan_max,
        DEFAULT_GRID_STEP,
    )
}

/// Brackets sign changes of `G - L` on a grid over `[0, n_scan_max]`,
/// refines each by bisection and classifies it by the slope of `L - G`.
pub fn find_fixed_points_of<C: GainCurve + ?Sized>(
    curve: &C,
    n_scan_max: f64,
    grid_step: f64,
) -> Result<Vec<FixedPoint>> {
    if !(n_scan_max.is_finite() && n_scan_max >= 1.0) {
        return Err(Error::invalid(format!(
            "n_scan_max must be >= 1, got {n_scan_max}"
        )));
    }
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::invalid(format!(
            "grid step must be > 0, got {grid_step}"
        )));
    }
    let gamma_c = curve.gamma_c();
    let classify = |n0: f64| FixedPoint::classify(n0, curve.gain_slope(n0), gamma_c);

    let mut roots = Vec::new();
    if curve.gain(0.0) < 1e-12 * gamma_c {
        roots.push(classify(0.0));
    }

    let steps = (n_scan_max / grid_step).ceil() as usize;
    let mut a = 0.0;
    let mut fa = curve.drift(a);
    for i in 1..=steps {
        let b = (i as f64 * grid_step).min(n_scan_max);
        let fb = curve.drift(b);
        if fb == 0.0 {
            roots.push(classify(b));
        } else if fa != 0.0 && (fa > 0.0) != (fb > 0.0) {
            roots.push(classify(bisect(curve, a, b, fa)));
        }
        a = b;
        fa = fb;
    }

    if roots.is_empty() {
        return Err(Error::NoFixedPoint { n_scan_max });
    }
    Ok(roots)
}

fn bisect<C: GainCurve + ?Sized>(curve: &C, mut lo: f64, mut hi: f64, mut f_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ROOT_REL_TOL * mid.max(1e-3) {
            return mid;
        }
        let f_mid = curve.drift(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `τ_c = [∂(L - G)/∂n |_{n0}]⁻¹`.
pub fn correlation_time(
    fp: &FixedPoint,
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
) -> Result<f64> {
    let curve = MicrolaserGain::new(cfg, dist);
    let restoring = cfg.gamma_c - curve.gain_slope(fp.n0);
    if !fp.stable || restoring <= 0.0 {
        return Err(Error::UnstableFixedPoint { n0: fp.n0 });
    }
    Ok(1.0 / restoring)
}

/// `Q ≃ G'(n0) / (Γ_c - G'(n0))`.
pub fn mandel_q_semiclassical(
    fp: &FixedPoint,
    cfg: &MicrolaserConfig,
    dist: &VelocityDistribution,
) -> Result<f64> {
    let curve = MicrolaserGain::new(cfg, dist);
    let slope = curve.gain_slope(fp.n0);
    let restoring = cfg.gamma_c - slope;
    if !fp.stable || restoring <= 0.0 {
        return Err(Error::UnstableFixedPoint { n0: fp.n0 });
    }
    Ok(slope / restoring)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepDirection {
    Ascending,
    Descending,
}

impl SweepDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepDirection::Ascending => "up",
            SweepDirection::Descending => "down",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub n_atoms_mean: f64,
    pub selected: Option<FixedPoint>,
    /// Every fixed point found at this pump, stable or not.
    pub roots: Vec<FixedPoint>,
    /// Root-finder failure at this pump, if any.
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn stable_roots(&self) -> impl Iterator<Item = &FixedPoint> {
        self.roots.iter().filter(|r| r.stable)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub direction: SweepDirection,
    pub points: Vec<SweepPoint>,
}

/// Follows a stable branch across a list of pumps, ordered by `direction`.
///
/// At each pump the rate equation is started from the previously selected
/// `n0` (from `n = 0` for the first pump) and the stable root it flows into
/// is selected: the nearest stable root above when `G - L > 0` there, the
/// nearest below when `G - L < 0`. While a branch persists this is the
/// continuation of that branch; when it vanishes the selection jumps.
pub fn sweep(
    cfg_template: &MicrolaserConfig,
    dist: &VelocityDistribution,
    n_atoms_list: &[f64],
    direction: SweepDirection,
) -> Result<SweepResult> {
    if n_atoms_list.is_empty() {
        return Err(Error::invalid("sweep needs at least one pump value"));
    }
    if n_atoms_list.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
        return Err(Error::invalid("pump values must be finite and >= 0"));
    }
    let mut pumps = n_atoms_list.to_vec();
    pumps.sort_by(f64::total_cmp);
    if pumps.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("pump values must be distinct"));
    }
    if direction == SweepDirection::Descending {
        pumps.reverse();
    }

    // Root census per pump; independent of the selection pass below.
    let census: Vec<(f64, MicrolaserGain, Result<Vec<FixedPoint>>)> = pumps
        .iter()
        .map(|&n_atoms| {
            let mut cfg = cfg_template.clone();
            cfg.n_atoms_mean = n_atoms;
            let curve = MicrolaserGain::new(&cfg, dist);
            let scan = default_scan_max(&cfg, dist);
            let roots = find_fixed_points_of(&curve, scan, DEFAULT_GRID_STEP);
            (n_atoms, curve, roots)
        })
        .collect();

    let mut previous = 0.0;
    let mut points = Vec::with_capacity(census.len());
    for (n_atoms, curve, roots) in census {
        match roots {
            Ok(roots) => {
                let selected = select_branch(&curve, &roots, previous).cloned();
                if let Some(fp) = &selected {
                    previous = fp.n0;
                }
                points.push(SweepPoint {
                    n_atoms_mean: n_atoms,
                    selected,
                    roots,
                    error: None,
                });
            }
            Err(e) => points.push(SweepPoint {
                n_atoms_mean: n_atoms,
                selected: None,
                roots: Vec::new(),
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(SweepResult { direction, points })
}

fn select_branch<'a, C: GainCurve>(
    curve: &C,
    roots: &'a [FixedPoint],
    start: f64,
) -> Option<&'a FixedPoint> {
    let stable = || roots.iter().filter(|r| r.stable);
    let drift = curve.drift(start);
    let by_flow = if drift > 0.0 {
        stable()
            .filter(|r| r.n0 >= start)
            .min_by(|a, b| a.n0.total_cmp(&b.n0))
    } else if drift < 0.0 {
        stable()
            .filter(|r| r.n0 <= start)
            .max_by(|a, b| a.n0.total_cmp(&b.n0))
    } else {
        None
    };
    by_flow
        .or_else(|| stable().min_by(|a, b| (a.n0 - start).abs().total_cmp(&(b.n0 - start).abs())))
}

impl SweepResult {
    /// Selected `n0` per pump (`None` where no stable root was found).
    pub fn selected_n0(&self) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| p.selected.as_ref().map(|f| f.n0))
            .collect()
    }

    /// CSV with `#` configuration header and columns
    /// `N_mean,n0_selected,stable_roots,tau_c_seconds,Q`.
    pub fn write_csv<W: io::Write>(&self, cfg: &MicrolaserConfig, mut out: W) -> io::Result<()> {
        out.write_all(cfg.header_lines().as_bytes())?;
        writeln!(out, "# config_hash = {}", cfg.hash())?;
        writeln!(out, "# direction = {}", self.direction.as_str())?;
        writeln!(out, "N_mean,n0_selected,stable_roots,tau_c_seconds,Q")?;
        for p in &self.points {
            writeln!(out, "{}", self.csv_row(p))?;
        }
        Ok(())
    }

    /// One data row of [`SweepResult::write_csv`].
    pub fn csv_row(&self, p: &SweepPoint) -> String {
        let mut row = String::new();
        let roots: Vec<String> = p.stable_roots().map(|r| r.n0.to_string()).collect();
        let _ = write!(row, "{},", p.n_atoms_mean);
        match &p.selected {
            Some(fp) => {
                let _ = write!(
                    row,
                    "{},{},{},{}",
                    fp.n0,
                    roots.join(";"),
                    fp.tau_c.map_or("NA".into(), |t| t.to_string()),
                    fp.q_semiclassical.map_or("NA".into(), |q| q.to_string())
                );
            }
            None => {
                let _ = write!(row, "NA,{},NA,NA", roots.join(";"));
            }
        }
        row
    }
}
