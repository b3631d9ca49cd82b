use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use microlaser_core::correlator::{
    correlate_with, estimate_q, fit_exponential, normalize, write_fit_report, CorrelateOptions,
    Normalization,
};
use microlaser_core::quantum::regression::SUPPORT_EPS;
use microlaser_core::quantum::{
    default_tau_grid, g2_from_generator, q_and_tau_from_g2, steady_state_and_generator,
    validity_check, G2Curve, TheoryFit,
};
use microlaser_core::semiclassical::{default_scan_max, sweep, SweepDirection};
use microlaser_core::trajectory::{simulate_with, InitialState, SimulationOptions};
use microlaser_core::{
    Error, ErrorKind, ExpFit, MicrolaserConfig, TimestampStream, VelocityDistribution,
};

use crate::manifest::RunManifest;

/// A core error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub error: Error,
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self.error.kind() {
            ErrorKind::Config => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            stage,
            error: e.into(),
        })
    }
}

type CmdResult = Result<(), Failure>;

/// Prefixes I/O errors with the offending path.
fn at_path(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Io(io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    }
}

fn load(path: &Path) -> Result<(MicrolaserConfig, VelocityDistribution), Failure> {
    let cfg = MicrolaserConfig::load(path)
        .map_err(at_path(path))
        .stage("config")?;
    let dist = VelocityDistribution::from_config(&cfg).stage("config")?;
    Ok((cfg, dist))
}

/// Writes to `path`, or to stdout when no path is given.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CmdResult {
    match path {
        Some(p) => {
            let file = File::create(p)
                .map_err(|e| at_path(p)(e.into()))
                .stage("write")?;
            let mut out = BufWriter::new(file);
            f(&mut out).stage("write")?;
            out.flush().stage("write")
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            f(&mut out).stage("write")
        }
    }
}

fn na(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:e}"))
}

/// Pump values from `a:b:step` (inclusive of `b`) or a single number.
pub fn parse_range(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = || {
        Error::InvalidArgument(format!(
            "bad range {spec:?}; expected a:b:step or a single value"
        ))
    };
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let values = match parts[..] {
        [x] => vec![x],
        [a, b, step] if step > 0.0 && b >= a => {
            let count = ((b - a) / step + 1e-9).floor() as usize;
            (0..=count).map(|i| a + step * i as f64).collect()
        }
        _ => return Err(bad()),
    };
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(bad());
    }
    Ok(values)
}

pub fn parse_list(spec: &str) -> Result<Vec<f64>, Error> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| Error::InvalidArgument(format!("bad pump value {s:?}")))
        })
        .collect()
}

/// Quantum `<n>`, `Q` and fitted `τ_c` at one pump. `Q` and `τ_c` are
/// undefined for an empty cavity.
struct QuantumRow {
    mean_n: f64,
    mandel_q: Option<f64>,
    fit: Option<TheoryFit>,
    n_max: usize,
}

fn quantum_row(cfg: &MicrolaserConfig, dist: &VelocityDistribution) -> Result<QuantumRow, Error> {
    let (p, generator) = steady_state_and_generator(cfg, dist)?;
    let m = p.moments();
    let fit = match m.mandel_q {
        Some(_) if m.mean > 0.0 => {
            let grid = default_tau_grid(cfg);
            let values = g2_from_generator(&generator, &p, &grid, SUPPORT_EPS)?;
            let curve = G2Curve {
                tau: grid,
                values,
                config_hash: cfg.hash(),
                mean_n: m.mean,
                mandel_q: m.mandel_q.unwrap_or(0.0),
            };
            Some(q_and_tau_from_g2(&curve, m.mean)?)
        }
        _ => None,
    };
    Ok(QuantumRow {
        mean_n: m.mean,
        mandel_q: m.mandel_q,
        fit,
        n_max: p.n_max(),
    })
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub pumps: Vec<f64>,
    pub spec: String,
    pub direction: SweepDirection,
    pub n_max: Option<usize>,
    pub quantum: bool,
    pub out: Option<PathBuf>,
}

const SWEEP_COLUMNS: &str = "N_mean,n0_selected,stable_roots,tau_c_seconds,Q";
const SWEEP_QUANTUM_COLUMNS: &str =
    "N_mean,n0_semiclassical,mean_n,Q,tau_c_quantum_s,tau_c_semiclassical_s,n_max";

pub fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let (cfg, dist) = load(&args.config)?;
    let semi = sweep(&cfg, &dist, &args.pumps, args.direction).stage("semiclassical")?;
    let mut rows = Vec::with_capacity(semi.points.len());
    let mut warnings = Vec::new();
    for point in &semi.points {
        let pumped = cfg.clone().with_pump(point.n_atoms_mean);
        if point.error.is_some() {
            let n_scan_max = default_scan_max(&pumped, &dist);
            return Err(Error::NoFixedPoint { n_scan_max }).stage("semiclassical");
        }
        if !args.quantum {
            rows.push(semi.csv_row(point));
            continue;
        }
        let pumped = match args.n_max {
            Some(n) => pumped.with_n_max(n),
            None => pumped,
        };
        let q = quantum_row(&pumped, &dist).stage("quantum")?;
        if let Some(w) = q.fit.as_ref().and_then(|f| f.warning.as_ref()) {
            warnings.push(format!("N_mean = {}: {w}", point.n_atoms_mean));
        }
        let fp = point.selected.as_ref();
        rows.push(format!(
            "{},{},{:e},{},{},{},{}",
            point.n_atoms_mean,
            na(fp.map(|f| f.n0)),
            q.mean_n,
            na(q.mandel_q),
            na(q.fit.as_ref().and_then(|f| f.tau_c)),
            na(fp.and_then(|f| f.tau_c)),
            q.n_max
        ));
    }

    let mut manifest = RunManifest::new("sweep", &cfg)
        .input(&args.config)
        .param("n_range", &args.spec)
        .param("direction", args.direction.as_str())
        .param("quantum", args.quantum);
    if args.quantum {
        manifest = manifest.param(
            "n_max",
            args.n_max.map_or("auto".to_string(), |n| n.to_string()),
        );
    }
    if let Some(p) = &args.out {
        manifest = manifest.output(p);
    }
    with_output(args.out.as_deref(), |out| {
        out.write_all(manifest.header().as_bytes())?;
        for w in &warnings {
            writeln!(out, "# warning = {w}")?;
        }
        let columns = if args.quantum {
            SWEEP_QUANTUM_COLUMNS
        } else {
            SWEEP_COLUMNS
        };
        writeln!(out, "{columns}")?;
        for r in &rows {
            writeln!(out, "{r}")?;
        }
        Ok(())
    })
}

pub fn cmd_predict_g2(config: &Path, out: Option<&Path>) -> CmdResult {
    let (cfg, dist) = load(config)?;
    let (p, generator) = steady_state_and_generator(&cfg, &dist).stage("quantum")?;
    let m = p.moments();
    let mandel_q = m
        .mandel_q
        .ok_or(Error::UndefinedCorrelation)
        .stage("quantum")?;
    let grid = default_tau_grid(&cfg);
    let values = g2_from_generator(&generator, &p, &grid, SUPPORT_EPS).stage("quantum")?;
    let curve = G2Curve {
        tau: grid,
        values,
        config_hash: cfg.hash(),
        mean_n: m.mean,
        mandel_q,
    };
    let fit = q_and_tau_from_g2(&curve, m.mean).stage("fit")?;
    let validity = validity_check(&cfg, &p).stage("quantum")?;

    let mut manifest = RunManifest::new("predict-g2", &cfg).input(config);
    if let Some(p) = out {
        manifest = manifest.output(p);
    }
    let mut header = manifest.header();
    header.push_str(&format!("# C0 = {:e}\n", fit.c0));
    header.push_str(&format!("# tau_c_s = {}\n", na(fit.tau_c)));
    header.push_str(&format!("# Q_from_C0 = {:e}\n", fit.mandel_q));
    if let Some(w) = &fit.warning {
        header.push_str(&format!("# fit_warning = {w}\n"));
    }
    header.push_str(&format!(
        "# validity_ratio = {:e}\n# validity_questionable = {}\n",
        validity.ratio, validity.questionable
    ));
    with_output(out, |w| curve.write_csv(&header, w))
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub duration_s: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub path: bool,
    pub initial_n: Option<usize>,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn save_stream(stream: &TimestampStream, path: &Path) -> CmdResult {
    stream
        .save_mlts1(path)
        .map_err(at_path(path))
        .stage("write")
}

pub fn cmd_simulate(args: SimulateArgs) -> CmdResult {
    let (cfg, dist) = load(&args.config)?;
    let initial = args
        .initial_n
        .map_or(InitialState::SteadyState, InitialState::Fixed);
    let opts = SimulationOptions {
        initial,
        record_path: args.path,
    };
    let rec = simulate_with(&cfg, &dist, args.duration_s, args.seed, opts).stage("simulate")?;

    let ch1 = with_suffix(&args.out, "_ch1.mlts");
    let ch2 = with_suffix(&args.out, "_ch2.mlts");
    let path_csv = with_suffix(&args.out, "_path.csv");
    let manifest_path = with_suffix(&args.out, "_manifest.txt");
    let mut manifest = RunManifest::new("simulate", &cfg)
        .input(&args.config)
        .seed(args.seed)
        .param("duration_s", format!("{:e}", args.duration_s))
        .param(
            "initial",
            args.initial_n
                .map_or("steady_state".into(), |n| n.to_string()),
        )
        .output(&ch1)
        .output(&ch2);
    if args.path {
        manifest = manifest.output(&path_csv);
    }
    save_stream(&rec.stream1, &ch1)?;
    save_stream(&rec.stream2, &ch2)?;
    let header = manifest.header();
    if args.path {
        let file = File::create(&path_csv).stage("write")?;
        rec.write_path_csv(&header, file).stage("write")?;
    }
    let c = rec.counters;
    let summary = format!(
        "{header}initial_n = {}\nfinal_n = {}\natoms = {}\nemissions = {}\ndecays = {}\ndetections = {}\ncounts_ch1 = {}\ncounts_ch2 = {}\n",
        rec.initial_n,
        rec.final_n,
        c.atoms,
        c.emissions,
        c.decays,
        c.detections,
        rec.stream1.len(),
        rec.stream2.len()
    );
    fs::write(&manifest_path, summary).stage("write")
}

pub struct CorrelateArgs {
    pub stream1: PathBuf,
    pub stream2: PathBuf,
    pub config: PathBuf,
    pub bin_ns: f64,
    pub window_us: Option<f64>,
    pub normalization: Normalization,
    pub symmetric: bool,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub g2_out: Option<PathBuf>,
}

struct Measured {
    fit: ExpFit,
    mean_n: f64,
    report: Vec<u8>,
    g2_csv: Vec<u8>,
}

/// Correlates two streams, fits the decay and renders the report and the
/// `g²` table. `<n>` is inferred from the detection rates.
#[allow(clippy::too_many_arguments)]
fn measure(
    a: &TimestampStream,
    b: &TimestampStream,
    cfg: &MicrolaserConfig,
    bin_s: f64,
    window_s: f64,
    mode: Normalization,
    options: CorrelateOptions,
    header: &str,
) -> Result<Measured, Failure> {
    let h = correlate_with(a, b, bin_s, window_s, options).stage("correlate")?;
    let est = normalize(&h, mode).stage("correlate")?;
    let fit = fit_exponential(&est, None).stage("fit")?;
    let mean_n = (h.rate1 + h.rate2) / (cfg.detection_efficiency * cfg.gamma_c);
    let q = estimate_q(&fit, mean_n, cfg.gamma_c).stage("fit")?;
    let mut report = Vec::new();
    let report_header = format!(
        "{header}# rate1_hz = {:e}\n# rate2_hz = {:e}\n# acquisition_s = {:e}\n# mean_n_from_rates = {mean_n:e}\n",
        h.rate1, h.rate2, h.t_acq_s
    );
    write_fit_report(&report_header, &fit, &q, &mut report).stage("write")?;
    let mut g2_csv = Vec::new();
    est.write_csv(header, &mut g2_csv).stage("write")?;
    Ok(Measured {
        fit,
        mean_n,
        report,
        g2_csv,
    })
}

pub fn cmd_correlate_fit(args: CorrelateArgs) -> CmdResult {
    let (cfg, _) = load(&args.config)?;
    let read = |p: &Path| TimestampStream::load(p).map_err(at_path(p)).stage("read");
    let (a, b) = (read(&args.stream1)?, read(&args.stream2)?);
    let bin_s = args.bin_ns * 1e-9;
    let window_s = args.window_us.map_or(5.0 / cfg.gamma_c, |w| w * 1e-6);
    let mode = args.normalization;
    let options = CorrelateOptions {
        symmetric: args.symmetric,
        workers: args.workers.max(1),
    };

    let mut manifest = RunManifest::new("correlate-fit", &cfg)
        .input(&args.config)
        .input(&args.stream1)
        .input(&args.stream2)
        .param("bin_ns", args.bin_ns)
        .param("window_s", format!("{window_s:e}"))
        .param("normalization", format!("{mode:?}"))
        .param("symmetric", args.symmetric);
    for p in [&args.out, &args.g2_out].into_iter().flatten() {
        manifest = manifest.output(p);
    }
    let m = measure(
        &a,
        &b,
        &cfg,
        bin_s,
        window_s,
        mode,
        options,
        &manifest.header(),
    )?;
    with_output(args.out.as_deref(), |out| out.write_all(&m.report))?;
    if let Some(p) = &args.g2_out {
        fs::write(p, &m.g2_csv).stage("write")?;
    }
    Ok(())
}

pub struct PipelineArgs {
    pub config: PathBuf,
    pub duration_s: f64,
    pub seed: u64,
    pub bin_ns: f64,
    pub window_us: Option<f64>,
    pub normalization: Normalization,
    pub out: PathBuf,
}

fn z(measured: Option<f64>, theory: Option<f64>, sigma: Option<f64>) -> Option<f64> {
    Some((measured? - theory?) / sigma.filter(|s| *s > 0.0)?)
}

pub fn cmd_pipeline(args: PipelineArgs) -> CmdResult {
    let (cfg, dist) = load(&args.config)?;
    fs::create_dir_all(&args.out).stage("write")?;
    let bin_s = args.bin_ns * 1e-9;
    let window_s = args.window_us.map_or(5.0 / cfg.gamma_c, |w| w * 1e-6);
    let file = |name: &str| args.out.join(name);
    let manifest = RunManifest::new("pipeline", &cfg)
        .input(&args.config)
        .seed(args.seed)
        .param("duration_s", format!("{:e}", args.duration_s))
        .param("bin_ns", args.bin_ns)
        .param("window_s", format!("{window_s:e}"))
        .param("normalization", format!("{:?}", args.normalization))
        .output(&args.out);
    let header = manifest.header();

    let theory = quantum_row(&cfg, &dist).stage("theory")?;
    let theory_fit = theory
        .fit
        .as_ref()
        .ok_or(Error::UndefinedCorrelation)
        .stage("theory")?;

    let opts = SimulationOptions {
        initial: InitialState::SteadyState,
        record_path: false,
    };
    let rec = simulate_with(&cfg, &dist, args.duration_s, args.seed, opts).stage("simulate")?;
    save_stream(&rec.stream1, &file("ch1.mlts"))?;
    save_stream(&rec.stream2, &file("ch2.mlts"))?;

    let m = measure(
        &rec.stream1,
        &rec.stream2,
        &cfg,
        bin_s,
        window_s,
        args.normalization,
        CorrelateOptions::default(),
        &header,
    )?;
    fs::write(file("g2_measured.csv"), &m.g2_csv).stage("write")?;
    fs::write(file("fit_report.txt"), &m.report).stage("write")?;

    let q_measured = m.fit.c0 * m.mean_n;
    let q_sigma = m.fit.c0_sigma() * m.mean_n;
    let tau_sigma = (!m.fit.is_flat()).then(|| m.fit.tau_sigma());
    let z_q = z(Some(q_measured), theory.mandel_q, Some(q_sigma));
    let z_tau = z(m.fit.tau_c, theory_fit.tau_c, tau_sigma);
    let mut report = header.clone();
    if let Some(w) = &theory_fit.warning {
        report.push_str(&format!("# theory_fit_warning = {w}\n"));
    }
    report.push_str(&format!(
        "theory_mean_n = {:e}\ntheory_Q = {}\ntheory_tau_c_s = {}\n\
         measured_mean_n = {:e}\nmeasured_Q = {q_measured:e}\nmeasured_Q_sigma = {q_sigma:e}\n\
         measured_tau_c_s = {}\nmeasured_tau_c_sigma_s = {}\nz_Q = {}\nz_tau_c = {}\n",
        theory.mean_n,
        na(theory.mandel_q),
        na(theory_fit.tau_c),
        m.mean_n,
        na(m.fit.tau_c),
        na(tau_sigma),
        na(z_q),
        na(z_tau),
    ));
    fs::write(file("report.txt"), &report).stage("write")?;
    print!("{report}");
    Ok(())
}
