//! `convexdecomp` command-line front end.
//!
//! Every command prints (or writes with `--output`) one JSON [`RunReport`].
//! Exit codes: 0 ok, 1 I/O or other failure, 2 parse or usage error,
//! 3 inconclusive rank, 4 invalid subgradient oracle, 5 violated precondition.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use convexdecomp::coercive::{self, RayScan, Witness, WitnessCheck};
use convexdecomp::corpus::{self, CorpusEntry};
use convexdecomp::decomp::{self, DecompResiduals};
use convexdecomp::funcrepr::BlackBox;
use convexdecomp::specfile::load_function;
use convexdecomp::{ConvexFunction, DecompConfig, Error, Subspace, Vector};

/// Report schema version, bumped on any change to the JSON layout.
pub const REPORT_SCHEMA: u32 = 1;

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const INCONCLUSIVE: i32 = 3;
    pub const ORACLE_INVALID: i32 = 4;
    pub const PRECONDITION: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "convexdecomp", version, about = "Decompose convex functions and test directional coercivity")]
pub struct Cli {
    /// Worker threads (0 = one per core). Output does not depend on this.
    #[arg(long, global = true, env = "CONVEXDECOMP_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute X_f, Y_f, v_f and residuals of the decomposition identity.
    Decompose(DecomposeArgs),
    /// Directional coercivity verdict: certified, refuted or evidence.
    Coercivity(CoercivityArgs),
    /// Build and verify a coercivizing linear form.
    Witness(WitnessArgs),
    /// Write the graded corpus as spec files plus a manifest.
    Corpus(CorpusArgs),
    /// Truncation sweep over a separable ReLU-square family.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Minimum subgradient samples on the sampled path (default 64 x dim).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol_rank: f64,
    /// Consecutive rank-stable batches needed to stop sampling.
    #[arg(long, default_value_t = 3)]
    pub stability_batches: usize,
    /// Residual probes.
    #[arg(long, default_value_t = 1000)]
    pub probes: usize,
    /// Use only the value and subgradient oracles (sampled path).
    #[arg(long)]
    pub black_box: bool,
    /// Add this vector to every oracle subgradient (comma separated). Implies --black-box.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub subgradient_bias: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct CoercivityArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 500)]
    pub rays: usize,
    #[arg(long, default_value_t = 1e4)]
    pub max_t: f64,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Boundary points to collect (default 2 x dim).
    #[arg(long)]
    pub terms: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub verify_rays: usize,
    #[arg(long, default_value_t = 1e4)]
    pub max_t: f64,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gamma,
    Example33,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<usize>,
    /// CSV destination.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub input_digest: String,
    pub seed: u64,
    pub version: String,
    pub schema: u32,
    pub results: serde_json::Value,
}

/// A failed command: exit code, message, and the report to emit if any.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    pub report: Option<Box<RunReport>>,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        let code = match e.downcast_ref::<Error>() {
            Some(inner) => exit_code(inner),
            None => exit::FAILURE,
        };
        Failure { code, message: format!("{e:#}"), report: None }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Spec(_) | Error::InvalidInput(_) | Error::DimensionMismatch { .. } | Error::NotConvex(_) => exit::PARSE,
        Error::Inconclusive { .. } => exit::INCONCLUSIVE,
        Error::InvalidSubgradient { .. } | Error::Inconsistent(_) => exit::ORACLE_INVALID,
        Error::FlatDirection(_) | Error::Precondition(_) => exit::PRECONDITION,
        Error::Range(_) => exit::FAILURE,
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn report(command: &str, input_digest: String, seed: u64, results: impl Serialize) -> RunReport {
    RunReport {
        command: command.to_string(),
        input_digest,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        schema: REPORT_SCHEMA,
        results: serde_json::to_value(results).expect("results serialize"),
    }
}

fn basis_rows(s: &Subspace) -> Vec<Vec<f64>> {
    s.basis().iter().map(|b| b.as_slice().to_vec()).collect()
}

struct Loaded {
    f: ConvexFunction,
    digest: String,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure { code: exit::PARSE, message: format!("{}: not UTF-8", path.display()), report: None })?;
    let f = load_function(&text).map_err(|e| Failure {
        code: exit::PARSE,
        message: format!("{}: {e}", path.display()),
        report: None,
    })?;
    Ok(Loaded { f, digest: digest(&bytes) })
}

/// Report for a library error, attached to the failure.
fn error_failure(command: &str, digest: String, seed: u64, e: Error) -> Failure {
    #[derive(Serialize)]
    struct ErrorResults {
        status: &'static str,
        error: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        flat_direction: Option<Vector>,
        #[serde(skip_serializing_if = "Option::is_none")]
        samples: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        partial_x_basis: Option<Vec<Vec<f64>>>,
    }
    let code = exit_code(&e);
    let mut r = ErrorResults {
        status: if code == exit::INCONCLUSIVE { "inconclusive" } else { "error" },
        error: e.to_string(),
        flat_direction: None,
        samples: None,
        partial_x_basis: None,
    };
    match &e {
        Error::FlatDirection(v) => r.flat_direction = Some(v.clone()),
        Error::Inconclusive { samples, partial } => {
            r.samples = Some(*samples);
            r.partial_x_basis = Some(basis_rows(partial));
        }
        _ => {}
    }
    Failure { code, message: e.to_string(), report: Some(Box::new(report(command, digest, seed, r))) }
}

#[derive(Serialize)]
struct DecomposeResults {
    dim: usize,
    method: String,
    samples: Option<usize>,
    x_basis: Vec<Vec<f64>>,
    y_basis: Vec<Vec<f64>>,
    v: Vector,
    xi0: Vector,
    a: f64,
    residuals: ResidualTable,
}

#[derive(Serialize)]
struct ResidualTable {
    probes: usize,
    reconstruction_abs: f64,
    reconstruction_rel: f64,
    quotient_abs: f64,
    quotient_rel: f64,
    orthogonality_abs: f64,
    orthogonality_rel: f64,
}

impl ResidualTable {
    fn new(probes: usize, r: DecompResiduals) -> Self {
        ResidualTable {
            probes,
            reconstruction_abs: r.reconstruction_abs,
            reconstruction_rel: r.reconstruction_rel,
            quotient_abs: r.quotient_abs,
            quotient_rel: r.quotient_rel,
            orthogonality_abs: r.orthogonality_abs,
            orthogonality_rel: r.orthogonality_rel,
        }
    }
}

fn with_bias(f: &ConvexFunction, bias: Vec<f64>) -> Result<ConvexFunction, Failure> {
    let bias = Vector::new(bias).map_err(anyhow::Error::from)?;
    bias.check_dim(f.dim()).map_err(anyhow::Error::from)?;
    let fv = f.clone();
    let fs = f.clone();
    Ok(ConvexFunction::black_box(BlackBox::new(
        f.dim(),
        Arc::new(move |z| fv.eval(z)),
        Arc::new(move |z| Ok(&fs.subgradient(z)? + &bias)),
    )))
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<RunReport, Failure> {
    let Loaded { f, digest } = load(&args.input)?;
    let seed = args.common.seed;
    let f = match &args.subgradient_bias {
        Some(bias) => with_bias(&f, bias.clone())?,
        None if args.black_box => ConvexFunction::as_black_box(&f),
        None => f,
    };
    let config = DecompConfig {
        samples: args.samples,
        seed,
        tol_rank: args.tol_rank,
        stability_batches: args.stability_batches,
        ..DecompConfig::default()
    };
    let d = decomp::decompose(&f, &config).map_err(|e| error_failure("decompose", digest.clone(), seed, e))?;
    let residuals = decomp::verify_decomposition(&f, &d, args.probes, seed);
    let (method, samples) = match d.method {
        decomp::DecompMethod::Exact => ("exact", None),
        decomp::DecompMethod::Sampled { samples } => ("sampled", Some(samples)),
    };
    Ok(report(
        "decompose",
        digest,
        seed,
        DecomposeResults {
            dim: f.dim(),
            method: method.to_string(),
            samples,
            x_basis: basis_rows(&d.x_space),
            y_basis: basis_rows(&d.y_space),
            v: d.v.clone(),
            xi0: d.xi0.clone(),
            a: d.a,
            residuals: ResidualTable::new(args.probes, residuals),
        },
    ))
}

pub fn cmd_coercivity(args: &CoercivityArgs) -> Result<RunReport, Failure> {
    let Loaded { f, digest } = load(&args.input)?;
    let seed = args.common.seed;
    let scan = RayScan { rays: args.rays, seed, max_t: args.max_t };
    let verdict = coercive::directional_verdict(&f, &scan)
        .map_err(|e| error_failure("coercivity", digest.clone(), seed, e))?;
    Ok(report("coercivity", digest, seed, verdict))
}

#[derive(Serialize)]
struct WitnessResults<'a> {
    xi: &'a Vector,
    xi_norm: f64,
    /// `xi0 + xi`, the form to subtract from `f`.
    functional: Vector,
    level: f64,
    trace: &'a [coercive::TraceEntry],
    skipped: &'a [coercive::SkippedRay],
    separation_rank: usize,
    verification: &'a WitnessCheck,
}

pub fn cmd_witness(args: &WitnessArgs) -> Result<RunReport, Failure> {
    let Loaded { f, digest } = load(&args.input)?;
    let seed = args.common.seed;
    let fail = |e| error_failure("witness", digest.clone(), seed, e);
    let terms = args.terms.unwrap_or(2 * f.dim());
    let w: Witness = coercive::build_witness(&f, terms, seed).map_err(fail)?;
    let scan = RayScan { rays: args.verify_rays, seed, max_t: args.max_t };
    let check = coercive::verify_witness(&f, &w, &scan).map_err(fail)?;
    let results = WitnessResults {
        xi: &w.xi,
        xi_norm: w.xi.norm(),
        functional: w.functional(),
        level: w.level,
        trace: &w.trace,
        skipped: &w.skipped,
        separation_rank: coercive::separation_rank(&w),
        verification: &check,
    };
    Ok(report("witness", digest.clone(), seed, results))
}

#[derive(Serialize)]
struct ManifestRow<'a> {
    name: &'a str,
    tags: String,
    dim: usize,
    truth: String,
}

#[derive(Serialize)]
struct CorpusListing {
    file: String,
    name: String,
    tags: Vec<String>,
    dim: usize,
    spec_digest: String,
}

pub fn cmd_corpus(args: &CorpusArgs) -> Result<RunReport, Failure> {
    let seed = args.common.seed;
    let entries: Vec<CorpusEntry> = corpus::make_graded_corpus(seed);
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut listing = Vec::with_capacity(entries.len());
    let manifest_path = args.out_dir.join("manifest.csv");
    let mut manifest = csv::Writer::from_path(&manifest_path)
        .with_context(|| format!("creating {}", manifest_path.display()))?;
    for e in &entries {
        let spec = e.to_spec().map_err(anyhow::Error::from)?;
        let text = spec.to_json() + "\n";
        let file = format!("{}.json", e.name);
        let path = args.out_dir.join(&file);
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        manifest
            .serialize(ManifestRow {
                name: &e.name,
                tags: e.tags.join(";"),
                dim: e.dim(),
                truth: e.truth.as_ref().map(|t| t.summary()).unwrap_or_default(),
            })
            .context("writing manifest")?;
        listing.push(CorpusListing {
            file,
            name: e.name.clone(),
            tags: e.tags.clone(),
            dim: e.dim(),
            spec_digest: digest(text.as_bytes()),
        });
    }
    manifest.flush().context("writing manifest")?;
    #[derive(Serialize)]
    struct CorpusResults {
        count: usize,
        manifest: &'static str,
        entries: Vec<CorpusListing>,
    }
    let input_digest = digest(format!("corpus seed={seed}").as_bytes());
    Ok(report(
        "corpus",
        input_digest,
        seed,
        CorpusResults { count: entries.len(), manifest: "manifest.csv", entries: listing },
    ))
}

/// One sweep row. `runtime_ms` goes to the CSV only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub witness_norm: f64,
    /// Strict minimizer norm of `f - xi` for `xi_n = 2^-n`; empty when there is none.
    pub minimizer_norm: Option<f64>,
    /// Max over coordinates `m` of the flat half-length at the origin.
    pub flat_half_length: f64,
}

#[derive(Serialize)]
struct SweepCsvRow {
    #[serde(rename = "N")]
    n: usize,
    witness_norm: f64,
    minimizer_norm: Option<f64>,
    flat_half_length: f64,
    runtime_ms: f64,
}

pub fn sweep_row(family: Family, n: usize, seed: u64) -> convexdecomp::Result<SweepRow> {
    if n == 0 {
        return Err(Error::InvalidInput("N must be positive".into()));
    }
    let entry = match family {
        Family::Gamma => corpus::make_example_gamma(n),
        Family::Example33 => corpus::make_example33(n),
    };
    let f = &entry.f;
    let w = coercive::build_witness(f, 2 * n, seed)?;
    let xi = Vector::new((1..=n).map(|k| 0.5f64.powi(k as i32)).collect())?;
    let minimizer_norm = coercive::separable_strict_minimizer(f, &xi)?.map(|m| m.norm());
    let origin = Vector::zeros(n);
    let mut flat = 0.0f64;
    for m in 1..=n {
        flat = flat.max(coercive::flat_half_length(f, &origin, m)?);
    }
    Ok(SweepRow { n, witness_norm: w.xi.norm(), minimizer_norm, flat_half_length: flat })
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<RunReport, Failure> {
    let seed = args.common.seed;
    let list = args.n_list.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",");
    let input_digest = digest(format!("sweep family={:?} n_list={list} seed={seed}", args.family).as_bytes());
    let mut rows = Vec::new();
    let mut out = csv::Writer::from_path(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for &n in &args.n_list {
        let start = Instant::now();
        let row = sweep_row(args.family, n, seed).map_err(|e| error_failure("sweep", input_digest.clone(), seed, e))?;
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        out.serialize(SweepCsvRow {
            n: row.n,
            witness_norm: row.witness_norm,
            minimizer_norm: row.minimizer_norm,
            flat_half_length: row.flat_half_length,
            runtime_ms,
        })
        .context("writing sweep CSV")?;
        rows.push(row);
    }
    out.flush().context("writing sweep CSV")?;
    #[derive(Serialize)]
    struct SweepResults {
        family: Family,
        rows: Vec<SweepRow>,
    }
    Ok(report("sweep", input_digest, seed, SweepResults { family: args.family, rows }))
}

fn output_target(cmd: &Command) -> Option<&Path> {
    let common = match cmd {
        Command::Decompose(a) => &a.common,
        Command::Coercivity(a) => &a.common,
        Command::Witness(a) => &a.common,
        Command::Corpus(a) => &a.common,
        Command::Sweep(a) => &a.common,
    };
    common.output.as_deref()
}

pub fn execute(cmd: &Command) -> Result<RunReport, Failure> {
    match cmd {
        Command::Decompose(a) => cmd_decompose(a),
        Command::Coercivity(a) => cmd_coercivity(a),
        Command::Witness(a) => cmd_witness(a),
        Command::Corpus(a) => cmd_corpus(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

pub fn render(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

fn emit(report: &RunReport, target: Option<&Path>) -> anyhow::Result<()> {
    let text = render(report);
    match target {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::PARSE } else { exit::OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return exit::FAILURE;
        }
    };
    let target = output_target(&cli.command);
    let outcome = pool.install(|| execute(&cli.command));
    let (report, code, message) = match outcome {
        Ok(r) => (Some(r), exit::OK, None),
        Err(f) => (f.report.map(|r| *r), f.code, Some(f.message)),
    };
    if let Some(r) = report {
        if let Err(e) = emit(&r, target) {
            eprintln!("error: {e:#}");
            return exit::FAILURE;
        }
    }
    if let Some(m) = message {
        eprintln!("error: {m}");
    }
    code
}
