use std::fmt::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use microlaser_core::MicrolaserConfig;
use sha2::{Digest, Sha256};

/// Provenance of one command invocation, embedded in every output header.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: &'static str,
    pub config: MicrolaserConfig,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    /// Effective command parameters, in the order they were given.
    pub params: Vec<(String, String)>,
    pub version: &'static str,
    pub wall_clock_unix_s: f64,
}

impl RunManifest {
    pub fn new(command: &'static str, config: &MicrolaserConfig) -> Self {
        let wall_clock_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        RunManifest {
            command,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            params: Vec::new(),
            version: env!("CARGO_PKG_VERSION"),
            wall_clock_unix_s,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    /// Everything except the wall clock, so reruns hash identically.
    fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "version = {}", self.version);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        for (k, v) in &self.params {
            let _ = writeln!(s, "param.{k} = {v}");
        }
        for p in &self.inputs {
            let _ = writeln!(s, "input = {p}");
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output = {p}");
        }
        s.push_str(&self.config.to_kv());
        s
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// `#`-prefixed header block.
    pub fn header(&self) -> String {
        let mut s = format!("# manifest_hash = {}\n", self.hash());
        for line in self.canonical().lines() {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "# config_hash = {}", self.config.hash());
        let _ = writeln!(s, "# wall_clock_unix_s = {:.3}", self.wall_clock_unix_s);
        s
    }
}
