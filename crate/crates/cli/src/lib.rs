//! Command-line front end: every computation of the `twinbeam` crate as a
//! subcommand writing CSV (default) or JSON, together with a run manifest.
//!
//! Manifests go next to `--out` files as `<out>.manifest.json`, to stderr
//! when CSV is written to stdout, and inside the document for JSON output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use twinbeam::bayes_estimator::{mse_z_score, run_experiment, Estimator, TrialConfig, DEFAULT_GRID_SIZE, DEFAULT_PHI_TRUE};
use twinbeam::fock_sim::{LossyPdc, DEFAULT_ARM_CUTOFF, DEFAULT_SOURCE_TOLERANCE};
use twinbeam::loss_model::{
    coherent_crossover_eta, detected_flux, eta_for_theta, lossy_qfi, qfi_bounds, scaling_exponent, tau_for_flux,
    lossy_qfi_flux,
};
use twinbeam::pdc_source::{flux_moments, singlet_weights, DEFAULT_TAIL_TOLERANCE};
use twinbeam::singlet_probe::{classical_fisher, quantum_fisher_pure};
use twinbeam::{wigner_d, HalfInt, LossParams, PdcParams};

/// Environment variable naming the directory for outputs when `--out` is absent.
pub const OUT_DIR_ENV: &str = "TWINBEAM_OUT_DIR";
/// Version of the CSV column layouts documented in the README.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "twinbeam", version, about = "Twin-beam phase estimation: analytics and simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    format: Format,
    /// Output file; stdout when absent (unless TWINBEAM_OUT_DIR is set).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone, Copy, Serialize)]
#[group(required = true, multiple = false)]
struct SpinArg {
    /// Spin as an integer, fraction or decimal, e.g. `2`, `1/2`, `1.5`.
    #[arg(long = "j", value_name = "J")]
    j: Option<HalfInt>,
    /// Twice the spin (photons per arm).
    #[arg(long = "2j", value_name = "TWICE_J")]
    twice_j: Option<u32>,
}

impl SpinArg {
    fn spin(&self) -> HalfInt {
        match (self.j, self.twice_j) {
            (Some(j), _) => j,
            (None, Some(t)) => HalfInt::from_twice(t as i32),
            (None, None) => unreachable!("clap enforces one of --j/--2j"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum EstimatorArg {
    Mean,
    Mode,
    Circular,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Mean => Estimator::PosteriorMean,
            EstimatorArg::Mode => Estimator::Mode,
            EstimatorArg::Circular => Estimator::CircularMean,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Wigner small-d matrix and its derivative.
    Dmatrix {
        #[command(flatten)]
        spin: SpinArg,
        #[arg(long, allow_negative_numbers = true)]
        phi: f64,
    },
    /// Classical and quantum Fisher information of the singlet probe.
    Cfi {
        #[command(flatten)]
        spin: SpinArg,
        /// Phases to evaluate; a uniform grid over [0, π] when absent.
        #[arg(long, num_args = 1.., allow_negative_numbers = true)]
        phi: Vec<f64>,
        #[arg(long, default_value_t = 51)]
        points: usize,
    },
    /// Singlet weights of the PDC ensemble.
    PdcWeights {
        #[arg(long)]
        tau: f64,
        /// Largest 2j; chosen from --tolerance when absent.
        #[arg(long = "max-2j")]
        max_twice_j: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_TAIL_TOLERANCE)]
        tolerance: f64,
    },
    /// Photon-number mean and variance of the PDC source.
    Flux {
        #[arg(long, num_args = 1..)]
        tau: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        tau_min: f64,
        #[arg(long, default_value_t = 2.0)]
        tau_max: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Ensemble quantum Fisher information under loss.
    Qfi {
        #[arg(long, num_args = 1.., conflicts_with = "flux", required_unless_present = "flux")]
        tau: Vec<f64>,
        #[arg(long, num_args = 1..)]
        flux: Vec<f64>,
        #[arg(long, num_args = 1.., required = true)]
        eta: Vec<f64>,
    },
    /// Local scaling exponent γ over a logarithmic flux grid.
    Scaling {
        #[arg(long, num_args = 1.., required = true)]
        eta: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        flux_min: f64,
        #[arg(long, default_value_t = 100.0)]
        flux_max: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Detected photon-number distribution P(n_a, n_b).
    JointDist {
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        eta: f64,
        /// Largest detected photon number per arm.
        #[arg(long, default_value_t = DEFAULT_ARM_CUTOFF)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_SOURCE_TOLERANCE)]
        tolerance: f64,
    },
    /// Fisher information in the (4,4) subspace as a function of φ and θ.
    Subspace {
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Decoherence values; a uniform grid when absent.
        #[arg(long, num_args = 1..)]
        theta: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        theta_min: f64,
        #[arg(long, default_value_t = 0.4)]
        theta_max: f64,
        #[arg(long, default_value_t = 21)]
        theta_points: usize,
        #[arg(long, default_value_t = 61)]
        phi_points: usize,
        #[arg(long, default_value_t = DEFAULT_SOURCE_TOLERANCE)]
        tolerance: f64,
    },
    /// Monte Carlo Bayesian phase estimation.
    Bayes {
        #[command(flatten)]
        spin: SpinArg,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 250)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_PHI_TRUE)]
        phi_true: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_GRID_SIZE)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Mean)]
        estimator: EstimatorArg,
        /// Also run spin-1/2 probes with the same photon budget.
        #[arg(long)]
        bell: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Dmatrix { .. } => "dmatrix",
            Command::Cfi { .. } => "cfi",
            Command::PdcWeights { .. } => "pdc-weights",
            Command::Flux { .. } => "flux",
            Command::Qfi { .. } => "qfi",
            Command::Scaling { .. } => "scaling",
            Command::JointDist { .. } => "joint-dist",
            Command::Subspace { .. } => "subspace",
            Command::Bayes { .. } => "bayes",
        }
    }
}

/// One output cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => x.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

/// Tabular result of a subcommand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn to_json_rows(&self) -> Vec<Value> {
        self.rows
            .iter()
            .map(|r| {
                let obj = self
                    .columns
                    .iter()
                    .zip(r)
                    .map(|(c, v)| (c.to_string(), serde_json::to_value(v).expect("cell serialises")))
                    .collect();
                Value::Object(obj)
            })
            .collect()
    }
}

/// Provenance of one run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub cutoffs: BTreeMap<String, usize>,
    pub tails: BTreeMap<String, f64>,
    pub schema_version: u32,
    pub tool_version: String,
    pub timestamp_unix: u64,
}

impl RunManifest {
    fn new(subcommand: &str, parameters: Value) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            parameters,
            seed: None,
            cutoffs: BTreeMap::new(),
            tails: BTreeMap::new(),
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Compute(String),
}

impl From<twinbeam::Error> for Failure {
    fn from(e: twinbeam::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

fn io_failure(e: impl std::fmt::Display) -> Failure {
    Failure::Compute(format!("output error: {e}"))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo.ln(), hi.ln(), n).into_iter().map(f64::exp).collect()
}

fn check_tail(name: &str, tail: f64, tolerance: f64) -> Result<(), Failure> {
    if tail > tolerance {
        return Err(Failure::Compute(format!(
            "truncation tail {tail:e} of {name} exceeds tolerance {tolerance:e}"
        )));
    }
    Ok(())
}

fn run(cmd: &Command) -> Result<(Table, RunManifest), Failure> {
    let name = cmd.name();
    match cmd {
        Command::Dmatrix { spin, phi } => {
            let j = spin.spin();
            let d = wigner_d(j, *phi)?;
            let dd = d.derivative();
            let mut t = Table::new(&["m_prime", "m", "d", "d_prime"]);
            for (r, mp) in j.projections().enumerate() {
                for (c, m) in j.projections().enumerate() {
                    t.push(vec![mp.value().into(), m.value().into(), d.entries()[(r, c)].into(), dd[(r, c)].into()]);
                }
            }
            Ok((t, RunManifest::new(name, json!({"j": j.to_string(), "phi": phi}))))
        }
        Command::Cfi { spin, phi, points } => {
            let j = spin.spin();
            let phis = if phi.is_empty() { linspace(0.0, PI, *points) } else { phi.clone() };
            let iq = quantum_fisher_pure(j)?;
            let values = phis
                .par_iter()
                .map(|&p| classical_fisher(j, p))
                .collect::<twinbeam::Result<Vec<f64>>>()?;
            let mut t = Table::new(&["phi", "cfi", "qfi"]);
            for (p, v) in phis.iter().zip(values) {
                t.push(vec![(*p).into(), v.into(), iq.into()]);
            }
            Ok((t, RunManifest::new(name, json!({"j": j.to_string(), "phi": phis}))))
        }
        Command::PdcWeights {
            tau,
            max_twice_j,
            tolerance,
        } => {
            let pdc = PdcParams::new(*tau)?;
            let cutoff = max_twice_j.unwrap_or_else(|| pdc.cutoff_for_tail(*tolerance));
            let w = singlet_weights(&pdc, cutoff);
            check_tail("singlet weights", w.tail, *tolerance)?;
            let mut t = Table::new(&["two_j", "weight"]);
            for (n, x) in w.weights.iter().enumerate() {
                t.push(vec![n.into(), (*x).into()]);
            }
            let mut m = RunManifest::new(name, json!({"tau": tau, "tolerance": tolerance}));
            m.cutoffs.insert("max_two_j".into(), cutoff);
            m.tails.insert("weight".into(), w.tail);
            Ok((t, m))
        }
        Command::Flux {
            tau,
            tau_min,
            tau_max,
            points,
        } => {
            let taus = if tau.is_empty() { linspace(*tau_min, *tau_max, *points) } else { tau.clone() };
            let mut t = Table::new(&["tau", "mean", "variance"]);
            for &x in &taus {
                let f = flux_moments(&PdcParams::new(x)?);
                t.push(vec![x.into(), f.mean.into(), f.variance.into()]);
            }
            Ok((t, RunManifest::new(name, json!({"tau": taus}))))
        }
        Command::Qfi { tau, flux, eta } => {
            let mut t = Table::new(&["tau", "flux", "eta", "qfi", "upper", "lower", "crossover_eta"]);
            for &e in eta {
                let loss = LossParams::new(e)?;
                let points: Vec<(f64, f64, f64)> = if flux.is_empty() {
                    tau.iter()
                        .map(|&x| {
                            let pdc = PdcParams::new(x)?;
                            Ok((x, detected_flux(&pdc, &loss), lossy_qfi(&pdc, &loss)?))
                        })
                        .collect::<twinbeam::Result<_>>()?
                } else {
                    flux.iter()
                        .map(|&n| {
                            let q = lossy_qfi_flux(n, e)?;
                            let x = if e > 0.0 { tau_for_flux(n, e)? } else { f64::NAN };
                            Ok((x, n, q))
                        })
                        .collect::<twinbeam::Result<_>>()?
                };
                for (x, n, q) in points {
                    let b = qfi_bounds(n)?;
                    let cross = if n > 0.0 { coherent_crossover_eta(n)? } else { f64::NAN };
                    t.push(vec![x.into(), n.into(), e.into(), q.into(), b.upper.into(), b.lower.into(), cross.into()]);
                }
            }
            Ok((t, RunManifest::new(name, json!({"tau": tau, "flux": flux, "eta": eta}))))
        }
        Command::Scaling {
            eta,
            flux_min,
            flux_max,
            points,
        } => {
            if !(*flux_min > 0.0 && flux_max > flux_min) {
                return Err(Failure::Usage("need 0 < --flux-min < --flux-max".into()));
            }
            let grid = logspace(*flux_min, *flux_max, *points);
            let mut t = Table::new(&["eta", "flux", "gamma", "qfi"]);
            for &e in eta {
                for &n in &grid {
                    t.push(vec![e.into(), n.into(), scaling_exponent(e, n)?.into(), lossy_qfi_flux(n, e)?.into()]);
                }
            }
            Ok((
                t,
                RunManifest::new(
                    name,
                    json!({"eta": eta, "flux_min": flux_min, "flux_max": flux_max, "points": points}),
                ),
            ))
        }
        Command::JointDist {
            tau,
            eta,
            window,
            tolerance,
        } => {
            let s = LossyPdc::with_tolerance(PdcParams::new(*tau)?, LossParams::new(*eta)?, *tolerance)?;
            let p = s.joint_distribution(*window)?;
            check_tail("joint distribution", p.truncation.tail, *tolerance)?;
            let mut t = Table::new(&["n_a", "n_b", "p"]);
            for na in 0..=*window {
                for nb in 0..=*window {
                    t.push(vec![na.into(), nb.into(), p.probs[(na, nb)].into()]);
                }
            }
            let mut m = RunManifest::new(
                name,
                json!({"tau": tau, "eta": eta, "window": window, "tolerance": tolerance}),
            );
            m.cutoffs.insert("source_pairs".into(), p.truncation.source_cutoff);
            m.cutoffs.insert("window".into(), *window);
            m.tails.insert("window_mass".into(), p.truncation.tail);
            Ok((t, m))
        }
        Command::Subspace {
            tau,
            theta,
            theta_min,
            theta_max,
            theta_points,
            phi_points,
            tolerance,
        } => {
            let thetas = if theta.is_empty() {
                linspace(*theta_min, *theta_max, *theta_points)
            } else {
                theta.clone()
            };
            let phis = linspace(0.0, PI, *phi_points);
            let pdc = PdcParams::new(*tau)?;
            let per_theta = thetas
                .par_iter()
                .map(|&th| {
                    let loss = LossParams::new(eta_for_theta(*tau, th)?)?;
                    let rho = LossyPdc::with_tolerance(pdc, loss, *tolerance)?.subspace_density(4, 4)?;
                    let qfi = rho.qfi()?;
                    let (_, best) = rho.max_cfi_over_phi(361)?;
                    let cfis = phis.iter().map(|&p| rho.cfi(p)).collect::<twinbeam::Result<Vec<f64>>>()?;
                    Ok((th, rho.weight, qfi, best, cfis, rho.truncation))
                })
                .collect::<twinbeam::Result<Vec<_>>>()?;
            let mut t = Table::new(&["phi", "theta", "cfi_44", "weighted_cfi", "qfi_44", "max_cfi_over_phi"]);
            let mut worst_tail: f64 = 0.0;
            let mut max_cutoff = 0;
            for (th, weight, qfi, best, cfis, trunc) in per_theta {
                worst_tail = worst_tail.max(trunc.tail);
                max_cutoff = max_cutoff.max(trunc.source_cutoff);
                for (p, c) in phis.iter().zip(cfis) {
                    t.push(vec![(*p).into(), th.into(), c.into(), (c * weight).into(), qfi.into(), best.into()]);
                }
            }
            check_tail("subspace density", worst_tail, *tolerance)?;
            let mut m = RunManifest::new(
                name,
                json!({"tau": tau, "theta": thetas, "phi_points": phi_points, "tolerance": tolerance, "subspace": [4, 4]}),
            );
            m.cutoffs.insert("source_pairs".into(), max_cutoff);
            m.tails.insert("relative_subspace_mass".into(), worst_tail);
            Ok((t, m))
        }
        Command::Bayes {
            spin,
            k,
            trials,
            phi_true,
            seed,
            grid,
            estimator,
            bell,
        } => {
            let mut cfg = TrialConfig::new(spin.spin(), *k, *trials, *phi_true, *seed)?;
            cfg.grid_size = *grid;
            cfg.estimator = (*estimator).into();
            let mut runs = vec![("singlet", cfg)];
            if *bell {
                runs.push(("bell", cfg.resource_matched_bell()));
            }
            let mut t = Table::new(&["probe", "j", "k", "row", "trial", "estimate", "mean", "rmse", "limit"]);
            let mut stats = Vec::new();
            for (label, c) in &runs {
                let s = run_experiment(c)?;
                let jv: Cell = c.j.value().into();
                for (i, e) in s.estimates.iter().enumerate() {
                    t.push(vec![
                        (*label).into(),
                        jv.clone(),
                        c.k.into(),
                        "trial".into(),
                        i.into(),
                        (*e).into(),
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Empty,
                    ]);
                }
                t.push(vec![
                    (*label).into(),
                    jv,
                    c.k.into(),
                    "summary".into(),
                    Cell::Empty,
                    Cell::Empty,
                    s.mean.into(),
                    s.rmse.into(),
                    s.theoretical_limit.into(),
                ]);
                stats.push(s);
            }
            let mut params = json!({
                "j": cfg.j.to_string(), "k": k, "trials": trials, "phi_true": phi_true,
                "grid": grid, "estimator": estimator, "bell": bell,
                "rng": "ChaCha20, seed_from_u64(seed), stream = trial index",
            });
            if let [s, b] = stats.as_slice() {
                params["bell_mse_z"] = json!(mse_z_score(s, b, *phi_true));
            }
            let mut m = RunManifest::new(name, params);
            m.seed = Some(*seed);
            m.cutoffs.insert("grid_nodes".into(), *grid);
            Ok((t, m))
        }
    }
}

fn write_csv(table: &Table, w: &mut dyn Write) -> Result<(), Failure> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(&table.columns).map_err(io_failure)?;
    for r in &table.rows {
        wr.write_record(r.iter().map(Cell::render)).map_err(io_failure)?;
    }
    wr.flush().map_err(io_failure)
}

fn render(table: &Table, manifest: &RunManifest, format: Format) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(table, &mut buf)?,
        Format::Json => {
            let doc = json!({
                "manifest": manifest,
                "columns": table.columns,
                "rows": table.to_json_rows(),
            });
            serde_json::to_writer_pretty(&mut buf, &doc).map_err(io_failure)?;
            buf.push(b'\n');
        }
    }
    Ok(buf)
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn emit(cli: &Cli, table: &Table, manifest: &RunManifest, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), Failure> {
    let body = render(table, manifest, cli.format)?;
    let ext = match cli.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let target = cli.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{}.{ext}", manifest.subcommand)))
    });
    let manifest_json = serde_json::to_string_pretty(manifest).map_err(io_failure)?;
    match target {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(io_failure)?;
            }
            fs::write(&path, &body).map_err(io_failure)?;
            fs::write(manifest_path(&path), manifest_json + "\n").map_err(io_failure)?;
        }
        None => {
            stdout.write_all(&body).map_err(io_failure)?;
            if cli.format == Format::Csv {
                writeln!(stderr, "{}", serde_json::to_string(manifest).map_err(io_failure)?).map_err(io_failure)?;
            }
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn dispatch<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{text}");
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    let result = run(&cli.command).and_then(|(t, m)| emit(&cli, &t, &m, stdout, stderr));
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Compute(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_COMPUTATION
        }
    }
}
