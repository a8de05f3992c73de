//! `gaussmag` command-line interface.
//!
//! Exit codes: 0 success, 2 usage error, 3 invalid configuration or input
//! data, 4 I/O failure, 5 simulation or numerical failure.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use gaussmag_core::riccati::{
    integrate_wu_series, var_noiseless, var_noisy_asymptote, NoisyRates, RiccatiCoeffs,
};
use gaussmag_core::{
    error_stats, geof, rates_from_physical, run_ensemble, standard_form, Axis, ScenarioConfig,
    ScenarioName, TrajectoryRecord, RNG_ALGORITHM,
};
use nalgebra::{DMatrix, Matrix2};
use serde_json::json;

use crate::config::{parse_config, ConfigError, LoadedConfig};

pub const OUT_DIR_ENV: &str = "GAUSSMAG_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "gaussmag-out";
const DEFAULT_EPSILON: f64 = 0.0281;
const DEFAULT_ETA_TAU: f64 = 1.76e-8;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Config { path: String, source: ConfigError },
    #[error("{0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Simulation(#[from] gaussmag_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config { .. } | CliError::InvalidInput(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Simulation(_) => 5,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "gaussmag", version, about = "Gaussian-state simulator for continuously probed atomic magnetometers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write trajectory CSV, summary.json and manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $GAUSSMAG_OUT_DIR or ./gaussmag-out).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        trajectories: usize,
    },
    /// Print the reduced (B, p_at) Riccati solution as CSV.
    Riccati {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        noise: bool,
        /// Final time, s.
        #[arg(long)]
        until: f64,
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Take couplings, prior and noise rates from a config file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evaluate the GEoF of a 4×4 covariance given as CSV, ordered (x₁, p₁, x₂, p₂).
    Geof {
        #[arg(long)]
        cov: PathBuf,
    },
    /// Re-run a config with one key set to each of several values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key, e.g. `scenario.name` or `couplings.mu_tau`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Simulate { config, seed, out, trajectories } => {
            let mut loaded = load_config(&config)?;
            if let Some(s) = seed {
                override_seed(&mut loaded, s)?;
            }
            let dir = out_dir(out);
            let files = simulate(&loaded, trajectories, &dir)?;
            for f in &files {
                write_out(stdout, format_args!("wrote {}\n", f.display()))?;
            }
            Ok(())
        }
        Command::Riccati { scenario, noise, until, points, config } => {
            let loaded = config.as_deref().map(load_config).transpose()?;
            let csv = riccati_table(&scenario, noise, until, points, loaded.as_ref().map(|l| &l.scenario))?;
            write_out(stdout, format_args!("{csv}"))
        }
        Command::Geof { cov } => {
            let text = read(&cov)?;
            let report = geof_report(&text)?;
            write_out(stdout, format_args!("{report}"))
        }
        Command::Sweep { config, param, values, out } => {
            let text = read(&config)?;
            let dir = out_dir(out);
            let table = sweep(&text, &config.display().to_string(), &param, &values, &dir)?;
            write_out(stdout, format_args!("{table}"))
        }
    }
}

fn write_out(stdout: &mut dyn Write, args: std::fmt::Arguments<'_>) -> Result<()> {
    stdout.write_fmt(args).map_err(|e| CliError::Io { path: "<stdout>".into(), source: e })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = read(path)?;
    parse_config(&text).map_err(|source| CliError::Config { path: path.display().to_string(), source })
}

fn override_seed(loaded: &mut LoadedConfig, seed: u64) -> Result<()> {
    if seed > i64::MAX as u64 {
        return Err(CliError::Usage("--seed must fit in a signed 64-bit integer".into()));
    }
    loaded.scenario.seed = seed;
    if let Some(r) = loaded.normalized.run.as_mut() {
        r.seed = Some(seed);
    }
    Ok(())
}

fn axis_json(v: &[Option<f64>; 3]) -> serde_json::Value {
    json!({ "x": v[0], "y": v[1], "z": v[2] })
}

/// Summary document for one `simulate` invocation.
pub fn summary_json(config: &ScenarioConfig, records: &[TrajectoryRecord]) -> Result<serde_json::Value> {
    let kappa_sq = config.couplings.kappa_tau.powi(2) / config.tau;
    let mu = config.couplings.mu_tau / config.tau;
    let first = &records[0].summary;
    let mut reference = [None; 3];
    let mut ratio = [None; 3];
    for a in Axis::ALL {
        if let Some(d) = first.final_delta_b[a.index()] {
            let r = var_noiseless(config.duration, kappa_sq, mu, config.prior_variance.get(a)).sqrt();
            reference[a.index()] = Some(r);
            ratio[a.index()] = Some(d / r);
        }
    }
    let mut doc = json!({
        "scenario": first.scenario,
        "seed": config.seed,
        "rng_algorithm": RNG_ALGORITHM,
        "tau": config.tau,
        "duration": config.duration,
        "steps": first.steps,
        "trajectories": records.len(),
        "final_delta_b": axis_json(&first.final_delta_b),
        "one_axis_reference_delta_b": axis_json(&reference),
        "ratio_to_one_axis": axis_json(&ratio),
        "runs": records.iter().map(|r| r.summary_json()).collect::<Vec<_>>(),
    });
    if records.len() >= 2 {
        let stats = error_stats(records)?;
        doc["ensemble"] = json!({
            "rms_error": axis_json(&stats.rms_error),
            "coverage_3sigma": axis_json(&stats.coverage_3sigma),
        });
    }
    Ok(doc)
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Runs a loaded config and writes its outputs into `dir`; returns the
/// written paths, manifest last.
pub fn simulate(loaded: &LoadedConfig, trajectories: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    if trajectories == 0 {
        return Err(CliError::Usage("--trajectories must be at least 1".into()));
    }
    let start = Instant::now();
    let records = run_ensemble(&loaded.scenario, trajectories)?;
    let runtime = start.elapsed().as_secs_f64();
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.display().to_string(), source: e })?;

    let mut files = Vec::new();
    for (k, r) in records.iter().enumerate() {
        let name = if trajectories == 1 { "trajectory.csv".to_string() } else { format!("trajectory_{k}.csv") };
        let path = dir.join(name);
        write_file(&path, &r.to_csv())?;
        files.push(path);
    }
    let summary = dir.join("summary.json");
    write_file(&summary, &pretty(&summary_json(&loaded.scenario, &records)?))?;
    files.push(summary);

    let manifest = dir.join("manifest.json");
    let outputs: Vec<String> = files
        .iter()
        .chain(std::iter::once(&manifest))
        .map(|p| p.file_name().expect("file path").to_string_lossy().into_owned())
        .collect();
    let doc = json!({
        "tool": "gaussmag",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": loaded.scenario.seed,
        "rng_algorithm": RNG_ALGORITHM,
        "runtime_seconds": runtime,
        "config": loaded.echo(),
        "outputs": outputs,
    });
    write_file(&manifest, &pretty(&doc))?;
    files.push(manifest);
    Ok(files)
}

/// CSV of the reduced one-axis covariance solution on `points` equally
/// spaced times up to `until`.
pub fn riccati_table(
    scenario: &str,
    noise: bool,
    until: f64,
    points: usize,
    config: Option<&ScenarioConfig>,
) -> Result<String> {
    let name: ScenarioName = scenario.parse().map_err(|e: gaussmag_core::Error| CliError::Usage(e.to_string()))?;
    if name != ScenarioName::OneAxis {
        return Err(CliError::Usage(format!("the reduced Riccati model covers one-axis only, not {name}")));
    }
    if !(until > 0.0) || !until.is_finite() || points == 0 {
        return Err(CliError::Usage("--until must be positive and --points at least 1".into()));
    }
    let base = ScenarioConfig::new(ScenarioName::OneAxis);
    let c = config.unwrap_or(&base);
    let kappa_sq = c.couplings.kappa_tau.powi(2) / c.tau;
    let mu = c.couplings.mu_tau / c.tau;
    let var0 = c.prior_variance.get(Axis::Y);
    let a0 = Matrix2::new(2.0 * var0, 0.0, 0.0, 1.0);
    let times: Vec<f64> = (1..=points).map(|i| until * i as f64 / points as f64).collect();
    let mut out = String::new();
    if noise {
        let (epsilon, eta_tau) = match c.noise {
            Some(n) => {
                let r = rates_from_physical(&n.params, c.tau)?;
                (r.epsilon, r.eta_tau)
            }
            None => (DEFAULT_EPSILON, DEFAULT_ETA_TAU),
        };
        let eta = eta_tau / c.tau;
        let coeffs = RiccatiCoeffs::noisy(NoisyRates::frozen(kappa_sq, mu, eta, epsilon));
        let sol = integrate_wu_series(&coeffs, &a0, &times)?;
        out.push_str("t,dB_riccati,dB_asymptote\n");
        for (t, a) in times.iter().zip(&sol) {
            let asym = if eta > 0.0 { format!("{:e}", var_noisy_asymptote(*t, eta, mu)?.sqrt()) } else { String::new() };
            out.push_str(&format!("{t:e},{:e},{asym}\n", (a[(0, 0)] / 2.0).sqrt()));
        }
    } else {
        let sol = integrate_wu_series(&RiccatiCoeffs::noiseless(kappa_sq, mu), &a0, &times)?;
        out.push_str("t,dB_closed,dB_riccati\n");
        for (t, a) in times.iter().zip(&sol) {
            let closed = var_noiseless(*t, kappa_sq, mu, var0).sqrt();
            out.push_str(&format!("{t:e},{closed:e},{:e}\n", (a[(0, 0)] / 2.0).sqrt()));
        }
    }
    Ok(out)
}

/// Reads a 4×4 matrix from CSV text; blank lines and `#` comments are
/// skipped.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let row = l
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::InvalidInput(format!("line {}: {e}", i + 1)))?;
        if row.len() != 4 {
            return Err(CliError::InvalidInput(format!("line {}: expected 4 columns, found {}", i + 1, row.len())));
        }
        rows.push(row);
    }
    if rows.len() != 4 {
        return Err(CliError::InvalidInput(format!("expected 4 rows, found {}", rows.len())));
    }
    let m = DMatrix::from_fn(4, 4, |i, j| rows[i][j]);
    if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(CliError::InvalidInput("covariance matrix is not symmetric".into()));
    }
    Ok(m)
}

pub fn geof_report(text: &str) -> Result<String> {
    let m = parse_matrix_csv(text)?;
    let p = standard_form(&m)?;
    let delta = p.delta()?;
    let e = geof(&p)?;
    let z = |v: f64| v + 0.0;
    Ok(format!("n,k_x,k_p,delta,E\n{:e},{:e},{:e},{:e},{:e}\n", z(p.n), z(p.k_x), z(p.k_p), z(delta), z(e)))
}

fn set_key(text: &str, param: &str, value: &str) -> Result<String> {
    let (section, key) = match param.split_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, param),
    };
    let mut doc: toml::Table =
        toml::from_str(text).map_err(|e| CliError::InvalidInput(format!("cannot parse config: {}", e.message())))?;
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let target = match section {
        None => &mut doc,
        Some(s) => doc
            .entry(s)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("{s} is not a section")))?,
    };
    target.insert(key.to_string(), parsed);
    if section == Some("scenario") && key == "name" {
        target.remove("atom_fractions");
        target.remove("flux_fractions");
    }
    Ok(toml::to_string(&doc).expect("TOML tables serialize"))
}

/// Runs one simulation per value of `param`, each into its own
/// subdirectory of `dir`, and writes `sweep.csv` with the final ΔB.
/// Sweeping `scenario.name` drops any resource fractions from the base
/// config so every setup spends the full atom and photon budget.
pub fn sweep(text: &str, source: &str, param: &str, values: &[String], dir: &Path) -> Result<String> {
    if values.is_empty() {
        return Err(CliError::Usage("--values needs at least one value".into()));
    }
    let mut table = String::from("value,dB_x,dB_y,dB_z\n");
    for (i, v) in values.iter().enumerate() {
        let modified = set_key(text, param, v)?;
        let loaded = parse_config(&modified).map_err(|source_err| CliError::Config {
            path: format!("{source} with {param} = {v}"),
            source: source_err,
        })?;
        let sub = dir.join(format!("{}_{i:03}", param.replace('.', "_")));
        simulate(&loaded, 1, &sub)?;
        let summary: serde_json::Value = serde_json::from_str(&read(&sub.join("summary.json"))?)
            .map_err(|e| CliError::InvalidInput(e.to_string()))?;
        let cell = |a: &str| summary["final_delta_b"][a].as_f64().map(|d| format!("{d:e}")).unwrap_or_default();
        table.push_str(&format!("{v},{},{},{}\n", cell("x"), cell("y"), cell("z")));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::Io { path: dir.display().to_string(), source: e })?;
    write_file(&dir.join("sweep.csv"), &table)?;
    Ok(table)
}
