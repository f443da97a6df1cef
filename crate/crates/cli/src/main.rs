//! `newtonize`: check, decompose and certify finite affinity kernels.
//!
//! Exit status: 0 when every check passes, 1 when a mathematical check
//! fails, 2 for unreadable input or bad usage.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use newtonize::decompose::{certify, decompose, from_parts, sample_phi, Spacing};
use newtonize::io::{self, ModulusSpec};
use newtonize::kernel::{
    check_transitivity, collect_scatter, solve_modulus_lp, validate_matrix, AxiomReport,
    TransitivityReport, DEFAULT_SLACK, DEFAULT_S_MIN,
};
use newtonize::synth::{generate_points, kernel_matrix, roundtrip, KernelSpec};
use newtonize::{AffinityMatrix, ChainMetricMatrix, Error, ExtReal, TransitivityModulus};

const THREADS_ENV: &str = "NEWTONIZE_THREADS";
const DEFAULT_PHI_SAMPLES: usize = 200;

#[derive(Parser)]
#[command(
    name = "newtonize",
    version,
    about = "Newtonian decomposition of affinity kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the kernel axioms, including transitivity under a modulus.
    Check(CheckArgs),
    /// Fit a piecewise-linear transitivity modulus to a matrix.
    EstimateNu(EstimateArgs),
    /// Build rho, h and phi and certify K = phi(h rho).
    Decompose(DecomposeArgs),
    /// Re-certify stored rho (and h) against their kernel.
    Certify(CertifyArgs),
    /// Generate a point cloud and its kernel matrix.
    Synth(SynthArgs),
    /// Generate an inverse-power world and check power-law recovery.
    Roundtrip(RoundtripArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Kernel matrix CSV (`inf` on the diagonal).
    #[arg(long, conflicts_with = "points")]
    input: Option<PathBuf>,
    /// Point cloud CSV, used together with --kernel.
    #[arg(long, requires = "kernel")]
    points: Option<PathBuf>,
    /// Kernel applied to --points: invpow:<p> or gaussian:<sigma>.
    #[arg(long)]
    kernel: Option<String>,
}

#[derive(Args)]
struct ModulusArgs {
    /// linear:<a>, log1p:<c>, pwl:<path> or estimate.
    #[arg(long, default_value = "estimate")]
    nu: String,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    slack: f64,
    #[arg(long, default_value_t = DEFAULT_S_MIN)]
    smin: f64,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    modulus: ModulusArgs,
    /// Where to write the JSON report (stdout if omitted).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    slack: f64,
    #[arg(long, default_value_t = DEFAULT_S_MIN)]
    smin: f64,
    /// Modulus table CSV output (stdout if omitted).
    #[arg(long)]
    emit_nu: Option<PathBuf>,
    /// JSON summary output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Dump the pruned transitivity scatter as lambda,kappa rows.
    #[arg(long)]
    emit_scatter: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    modulus: ModulusArgs,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    emit_rho: Option<PathBuf>,
    #[arg(long)]
    emit_h: Option<PathBuf>,
    #[arg(long)]
    emit_phi: Option<PathBuf>,
    /// Write the modulus used (estimated ones only) as a table.
    #[arg(long)]
    emit_nu: Option<PathBuf>,
    /// lo:hi:count:log|lin; defaults to 200 log-spaced points over the
    /// range of d.
    #[arg(long)]
    phi_range: Option<String>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    modulus: ModulusArgs,
    /// Stored metric CSV.
    #[arg(long)]
    rho: PathBuf,
    /// Stored correction factor CSV; recomputed from rho if omitted.
    #[arg(long)]
    h: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// invpow:<p> or gaussian:<sigma>.
    #[arg(long)]
    kernel: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output point cloud CSV.
    #[arg(long)]
    points: PathBuf,
    /// Output kernel matrix CSV.
    #[arg(long)]
    matrix: PathBuf,
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let threads: usize = v.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
            anyhow!(Usage(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            )))
        })?;
        if !newtonize::exec::init_threads(threads) {
            log::warn!("{THREADS_ENV} ignored: thread pool already initialised or not available");
        }
    }
    Ok(())
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Format(_) | Error::Io(_) | Error::Domain(_) => 2,
                _ => 1,
            };
        }
    }
    2
}

fn run(cmd: Command) -> anyhow::Result<bool> {
    match cmd {
        Command::Check(a) => cmd_check(a),
        Command::EstimateNu(a) => cmd_estimate_nu(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::Certify(a) => cmd_certify(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Roundtrip(a) => cmd_roundtrip(a),
    }
}

fn load_raw(input: &InputArgs) -> anyhow::Result<Vec<Vec<ExtReal>>> {
    match (&input.input, &input.points, &input.kernel) {
        (Some(path), None, None) => Ok(io::read_matrix(path)?),
        (None, Some(path), Some(spec)) => {
            let spec: KernelSpec = spec.parse()?;
            let pts = io::read_points(path)?;
            Ok(kernel_matrix(&pts, spec)?)
        }
        (Some(_), _, Some(_)) => bail!(Usage("--kernel applies to --points, not --input".into())),
        _ => bail!(Usage(
            "give --input <matrix.csv> or --points <points.csv> --kernel <spec>".into()
        )),
    }
}

fn load_kernel(input: &InputArgs) -> anyhow::Result<AffinityMatrix> {
    Ok(validate_matrix(&load_raw(input)?)?)
}

/// The modulus named by `args`, fitting one to `k` for `estimate`.
fn resolve_modulus(
    args: &ModulusArgs,
    k: &AffinityMatrix,
) -> anyhow::Result<(TransitivityModulus, bool)> {
    match io::parse_modulus_spec(&args.nu)? {
        ModulusSpec::Given(nu) => Ok((nu, false)),
        ModulusSpec::Estimate => {
            let est = solve_modulus_lp(&collect_scatter(k), args.slack, args.smin)?;
            log::info!("estimated modulus from {} grid points", est.grid.len());
            Ok((est.modulus, true))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Writes every file or none: each goes to a temp file in its target
/// directory, and all are renamed into place only once all are written.
fn write_all(outputs: Vec<(PathBuf, String)>) -> anyhow::Result<()> {
    use std::io::Write;
    let mut staged = Vec::with_capacity(outputs.len());
    for (path, body) in outputs {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&dir)
            .with_context(|| format!("cannot create a file in {}", dir.display()))?;
        tmp.write_all(body.as_bytes())?;
        tmp.flush()?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(&path)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

/// Adds the report to `outputs`, or prints it when no path was given.
fn emit_report(outputs: &mut Vec<(PathBuf, String)>, path: Option<&Path>, json: String) {
    match path {
        Some(p) => outputs.push((p.to_path_buf(), json)),
        None => print!("{json}"),
    }
}

#[derive(Serialize)]
struct Versioned<'a, T> {
    schema: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn cmd_check(a: CheckArgs) -> anyhow::Result<bool> {
    let raw = load_raw(&a.input)?;
    let mut report = AxiomReport::evaluate(&raw, None)?;
    if report.violations.is_empty() {
        let k = validate_matrix(&raw)?;
        let (nu, _) = resolve_modulus(&a.modulus, &k)?;
        report.k4 = Some(check_transitivity(&k, &nu));
    }
    let pass = report.pass();
    for v in &report.violations {
        log::warn!("{v}");
    }
    let mut out = Vec::new();
    let versioned = Versioned {
        schema: newtonize::decompose::REPORT_SCHEMA,
        body: &report,
    };
    emit_report(&mut out, a.report.as_deref(), to_json(&versioned)?);
    write_all(out)?;
    Ok(pass)
}

#[derive(Serialize)]
struct EstimateSummary {
    schema: u32,
    n: usize,
    slack: f64,
    s_min: f64,
    frontier_points: usize,
    lp_objective: f64,
    knots: Vec<f64>,
    values: Vec<f64>,
    tail_slope: f64,
    check: TransitivityReport,
}

fn cmd_estimate_nu(a: EstimateArgs) -> anyhow::Result<bool> {
    let k = load_kernel(&a.input)?;
    let scatter = collect_scatter(&k);
    let est = solve_modulus_lp(&scatter, a.slack, a.smin)?;
    let check = check_transitivity(&k, &est.modulus);
    let TransitivityModulus::PiecewiseLinear(p) = &est.modulus else {
        unreachable!("the estimator returns a table");
    };
    let summary = EstimateSummary {
        schema: newtonize::decompose::REPORT_SCHEMA,
        n: k.n(),
        slack: a.slack,
        s_min: a.smin,
        frontier_points: scatter.len(),
        lp_objective: est.lp_objective,
        knots: p.knots().to_vec(),
        values: p.values().to_vec(),
        tail_slope: p.tail_slope(),
        check,
    };
    let table = io::pwl_to_csv(&est.modulus).expect("table");
    let mut out = Vec::new();
    match a.emit_nu {
        Some(path) => out.push((path, table)),
        None => print!("{table}"),
    }
    if let Some(path) = a.emit_scatter {
        out.push((path, io::pairs_to_csv(scatter.points())));
    }
    if let Some(path) = a.report {
        out.push((path, to_json(&summary)?));
    }
    write_all(out)?;
    Ok(summary.check.pass)
}

fn parse_phi_range(s: &str) -> anyhow::Result<(f64, f64, usize, Spacing)> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || {
        Usage(format!(
            "--phi-range expects lo:hi:count:log|lin, got {s:?}"
        ))
    };
    if parts.len() != 4 {
        bail!(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    let spacing = match parts[3] {
        "log" => Spacing::Log,
        "lin" => Spacing::Linear,
        _ => bail!(bad()),
    };
    Ok((lo, hi, count, spacing))
}

fn cmd_decompose(a: DecomposeArgs) -> anyhow::Result<bool> {
    let phi_range = a.phi_range.as_deref().map(parse_phi_range).transpose()?;
    let k = load_kernel(&a.input)?;
    let (nu, estimated) = resolve_modulus(&a.modulus, &k)?;
    let dec = decompose(&k, &nu)?;
    let report = certify(&dec, &k)?;
    let n = dec.n();

    let mut out = Vec::new();
    if let Some(path) = a.emit_rho {
        out.push((path, io::flat_matrix_to_csv(n, dec.rho().entries())));
    }
    if let Some(path) = a.emit_h {
        out.push((path, io::flat_matrix_to_csv(n, dec.h())));
    }
    if let Some(path) = a.emit_phi {
        let (lo, hi, count, spacing) = match phi_range {
            Some(r) => r,
            None => {
                let (lo, hi) = off_diagonal_range(n, dec.d());
                let (lo, hi) = if lo < hi {
                    (lo, hi)
                } else {
                    (lo / 2.0, hi * 2.0)
                };
                (lo, hi, DEFAULT_PHI_SAMPLES, Spacing::Log)
            }
        };
        out.push((
            path,
            io::pairs_to_csv(&sample_phi(dec.phi(), lo, hi, count, spacing)?),
        ));
    }
    if let Some(path) = a.emit_nu {
        match io::pwl_to_csv(&nu) {
            Some(t) => out.push((path, t)),
            None if !estimated => log::warn!("--emit-nu skipped: {} has no table", a.modulus.nu),
            None => {}
        }
    }
    emit_report(&mut out, a.report.as_deref(), to_json(&report)?);
    write_all(out)?;
    Ok(report.pass)
}

fn off_diagonal_range(n: usize, d: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            lo = lo.min(d[i * n + j]);
            hi = hi.max(d[i * n + j]);
        }
    }
    (lo, hi)
}

fn cmd_certify(a: CertifyArgs) -> anyhow::Result<bool> {
    let k = load_kernel(&a.input)?;
    let (nu, _) = resolve_modulus(&a.modulus, &k)?;
    let rho = ChainMetricMatrix::from_rows(&io::read_real_matrix(&a.rho)?)
        .with_context(|| format!("{} is not a valid metric", a.rho.display()))?;
    let h = match &a.h {
        Some(path) => Some(io::read_real_matrix(path)?.concat()),
        None => None,
    };
    let dec = from_parts(&k, &nu, rho, h)?;
    let report = certify(&dec, &k)?;
    let mut out = Vec::new();
    emit_report(&mut out, a.report.as_deref(), to_json(&report)?);
    write_all(out)?;
    Ok(report.pass)
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<bool> {
    let spec: KernelSpec = a.kernel.parse()?;
    let pts = generate_points(a.n, a.dim, a.seed)?;
    let m = kernel_matrix(&pts, spec)?;
    write_all(vec![
        (a.points, io::real_matrix_to_csv(&pts)),
        (a.matrix, io::matrix_to_csv(&m)),
    ])?;
    Ok(true)
}

fn cmd_roundtrip(a: RoundtripArgs) -> anyhow::Result<bool> {
    let rep = roundtrip(a.n, a.dim, a.p, a.seed)?;
    for clause in &rep.failed {
        log::error!("roundtrip clause failed: {clause}");
    }
    let mut out = Vec::new();
    emit_report(&mut out, a.report.as_deref(), to_json(&rep)?);
    write_all(out)?;
    Ok(rep.pass)
}
