//! Physical parameter set and the flat `key = value` configuration format.
//!
//! All frequencies are stored as angular frequencies (rad/s). The loader
//! accepts `g0_hz` / `gamma_c_hz` as ordinary-frequency variants and
//! multiplies them by 2π once at load time.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Upper bound of the automatic photon-number truncation.
pub const N_MAX_CAP: usize = 8192;
/// Lower bound of the automatic photon-number truncation.
pub const N_MAX_FLOOR: usize = 64;
pub const DEFAULT_QUADRATURE_NODES: usize = 64;

/// How the mean intracavity atom number maps onto an injection rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PumpConvention {
    /// `r = <N> / t_int(v0)`.
    #[default]
    TransitAtV0,
    /// `r = <N> / <t_int>`, the transit time averaged over the velocity distribution.
    MeanTransit,
}

impl PumpConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            PumpConvention::TransitAtV0 => "transit_at_v0",
            PumpConvention::MeanTransit => "mean_transit",
        }
    }
}

impl FromStr for PumpConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transit_at_v0" => Ok(PumpConvention::TransitAtV0),
            "mean_transit" => Ok(PumpConvention::MeanTransit),
            other => Err(Error::Config(format!(
                "pump_convention must be transit_at_v0 or mean_transit, got {other:?}"
            ))),
        }
    }
}

/// Microlaser parameters in SI units, angular frequencies in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct MicrolaserConfig {
    /// Atom-cavity coupling at mode center (half the vacuum Rabi frequency).
    pub g0: f64,
    /// Cavity field energy decay rate.
    pub gamma_c: f64,
    pub mode_waist: f64,
    /// Most probable atomic velocity.
    pub v0: f64,
    /// FWHM velocity spread as a fraction of `v0`; zero selects a delta distribution.
    pub dv_fwhm_frac: f64,
    /// Mean intracavity atom number, the pump parameter.
    pub n_atoms_mean: f64,
    pub detection_efficiency: f64,
    /// Probability that a detected photon is routed to detector 1.
    pub splitter_ratio: f64,
    pub n_max: usize,
    pub quadrature_nodes: usize,
    pub pump_convention: PumpConvention,
}

impl MicrolaserConfig {
    /// Experimental parameters of the Ba microlaser: Γ_c/2π = 150 kHz,
    /// 2g0/2π = 380 kHz, ω_m = 41 µm, v0 = 750 m/s, Δv/v0 = 0.45.
    pub fn reference(n_atoms_mean: f64) -> Self {
        let mut cfg = MicrolaserConfig {
            g0: 2.0 * PI * 190e3,
            gamma_c: 2.0 * PI * 150e3,
            mode_waist: 41e-6,
            v0: 750.0,
            dv_fwhm_frac: 0.45,
            n_atoms_mean,
            detection_efficiency: 1.0,
            splitter_ratio: 0.5,
            n_max: 0,
            quadrature_nodes: DEFAULT_QUADRATURE_NODES,
            pump_convention: PumpConvention::TransitAtV0,
        };
        cfg.n_max = cfg.default_n_max();
        cfg
    }

    /// Builder-style setter for the pump that also resets the automatic truncation.
    pub fn with_pump(mut self, n_atoms_mean: f64) -> Self {
        self.n_atoms_mean = n_atoms_mean;
        self.n_max = self.default_n_max();
        self
    }

    pub fn with_velocity_spread(mut self, dv_fwhm_frac: f64) -> Self {
        self.dv_fwhm_frac = dv_fwhm_frac;
        self
    }

    pub fn with_n_max(mut self, n_max: usize) -> Self {
        self.n_max = n_max;
        self
    }

    /// Transit time at the most probable velocity.
    pub fn t_int0(&self) -> f64 {
        self.mode_waist * PI.sqrt() / self.v0
    }

    /// Truncation policy: 4·(r/Γ_c) with r taken at v0, clamped to
    /// `[N_MAX_FLOOR, N_MAX_CAP]`. Since G ≤ r, no fixed point lies above r/Γ_c.
    pub fn default_n_max(&self) -> usize {
        let r = self.n_atoms_mean / self.t_int0();
        let guess = (4.0 * r / self.gamma_c).ceil();
        if !guess.is_finite() {
            return N_MAX_CAP;
        }
        (guess as usize).clamp(N_MAX_FLOOR, N_MAX_CAP)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, x: f64) -> Result<()> {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} must be finite and > 0, got {x}"
                )))
            }
        }
        positive("g0", self.g0)?;
        positive("gamma_c", self.gamma_c)?;
        positive("mode_waist", self.mode_waist)?;
        positive("v0", self.v0)?;
        if !(self.dv_fwhm_frac.is_finite() && (0.0..1.0).contains(&self.dv_fwhm_frac)) {
            return Err(Error::Config(format!(
                "dv_fwhm_frac must lie in [0, 1), got {}",
                self.dv_fwhm_frac
            )));
        }
        if !(self.n_atoms_mean.is_finite() && self.n_atoms_mean >= 0.0) {
            return Err(Error::Config(format!(
                "n_atoms_mean must be finite and >= 0, got {}",
                self.n_atoms_mean
            )));
        }
        if !(self.detection_efficiency > 0.0 && self.detection_efficiency <= 1.0) {
            return Err(Error::Config(format!(
                "detection_efficiency must lie in (0, 1], got {}",
                self.detection_efficiency
            )));
        }
        if !(self.splitter_ratio > 0.0 && self.splitter_ratio < 1.0) {
            return Err(Error::Config(format!(
                "splitter_ratio must lie in (0, 1), got {}",
                self.splitter_ratio
            )));
        }
        if self.n_max == 0 {
            return Err(Error::Config("n_max must be >= 1".into()));
        }
        if self.quadrature_nodes == 0 {
            return Err(Error::Config("quadrature_nodes must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses the flat configuration format. Missing optional keys take
    /// defaults; `n_max` defaults to [`Self::default_n_max`].
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if raw.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key}",
                    lineno + 1
                )));
            }
        }

        fn take_f64(raw: &mut BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
            raw.remove(key)
                .map(|v| {
                    v.parse::<f64>().map_err(|_| {
                        Error::Config(format!("{key}: cannot parse {v:?} as a number"))
                    })
                })
                .transpose()
        }
        fn angular(raw: &mut BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
            let direct = take_f64(raw, key)?;
            let hz = take_f64(raw, &format!("{key}_hz"))?;
            match (direct, hz) {
                (Some(_), Some(_)) => Err(Error::Config(format!("both {key} and {key}_hz given"))),
                (Some(w), None) => Ok(Some(w)),
                (None, Some(f)) => Ok(Some(2.0 * PI * f)),
                (None, None) => Ok(None),
            }
        }
        fn required(v: Option<f64>, key: &str) -> Result<f64> {
            v.ok_or_else(|| Error::Config(format!("missing required key {key}")))
        }

        let g0 = required(angular(&mut raw, "g0")?, "g0")?;
        let gamma_c = required(angular(&mut raw, "gamma_c")?, "gamma_c")?;
        let mode_waist = required(take_f64(&mut raw, "mode_waist")?, "mode_waist")?;
        let v0 = required(take_f64(&mut raw, "v0")?, "v0")?;
        let n_atoms_mean = required(take_f64(&mut raw, "n_atoms_mean")?, "n_atoms_mean")?;
        let dv_fwhm_frac = take_f64(&mut raw, "dv_fwhm_frac")?.unwrap_or(0.0);
        let detection_efficiency = take_f64(&mut raw, "detection_efficiency")?.unwrap_or(1.0);
        let splitter_ratio = take_f64(&mut raw, "splitter_ratio")?.unwrap_or(0.5);
        let parse_usize = |raw: &mut BTreeMap<String, String>,
                           key: &str|
         -> Result<Option<usize>> {
            raw.remove(key)
                .map(|v| {
                    v.parse::<usize>().map_err(|_| {
                        Error::Config(format!("{key}: cannot parse {v:?} as a positive integer"))
                    })
                })
                .transpose()
        };
        let n_max = parse_usize(&mut raw, "n_max")?;
        let quadrature_nodes =
            parse_usize(&mut raw, "quadrature_nodes")?.unwrap_or(DEFAULT_QUADRATURE_NODES);
        let pump_convention = raw
            .remove("pump_convention")
            .map(|v| v.parse())
            .transpose()?
            .unwrap_or_default();

        if let Some(key) = raw.keys().next() {
            return Err(Error::Config(format!("unknown key {key}")));
        }

        let mut cfg = MicrolaserConfig {
            g0,
            gamma_c,
            mode_waist,
            v0,
            dv_fwhm_frac,
            n_atoms_mean,
            detection_efficiency,
            splitter_ratio,
            n_max: 1,
            quadrature_nodes,
            pump_convention,
        };
        cfg.n_max = n_max.unwrap_or_else(|| cfg.default_n_max());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Effective values in the loader's own format (angular units), one per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "g0 = {:e}", self.g0);
        let _ = writeln!(s, "gamma_c = {:e}", self.gamma_c);
        let _ = writeln!(s, "mode_waist = {:e}", self.mode_waist);
        let _ = writeln!(s, "v0 = {:e}", self.v0);
        let _ = writeln!(s, "dv_fwhm_frac = {:e}", self.dv_fwhm_frac);
        let _ = writeln!(s, "n_atoms_mean = {:e}", self.n_atoms_mean);
        let _ = writeln!(s, "detection_efficiency = {:e}", self.detection_efficiency);
        let _ = writeln!(s, "splitter_ratio = {:e}", self.splitter_ratio);
        let _ = writeln!(s, "n_max = {}", self.n_max);
        let _ = writeln!(s, "quadrature_nodes = {}", self.quadrature_nodes);
        let _ = writeln!(s, "pump_convention = {}", self.pump_convention.as_str());
        s
    }

    /// `#`-prefixed copy of [`Self::to_kv`] for CSV headers.
    pub fn header_lines(&self) -> String {
        self.to_kv().lines().map(|l| format!("# {l}\n")).collect()
    }

    /// Hex SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Coupling-time product g0·t_int(v0), the Rabi angle per √photon.
    pub fn rabi_angle0(&self) -> f64 {
        self.g0 * self.t_int0()
    }
}
