//! `sine-lab`: runs identity suites and Monte Carlo experiments for the
//! sine process and writes their results as JSON and CSV.
//!
//! Exit status: 0 when every executed check passed, 1 when a check failed
//! or a run broke down, 2 for usage and configuration errors.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sine_lab::identities::{run_identities, IdentityOptions, Scope, Suite};
use sine_lab::kernels::Window;
use sine_lab::mc::{content_hash, run_with_progress, ExperimentConfig, ExperimentResult};
use sine_lab::rng::RngStream;
use sine_lab::sampler::{sample_dpp, sample_gue_bulk, sampling_operator};
use sine_lab::spectral::ZCovarianceModel;
use sine_lab::Error;

const DEFAULT_SEED: u64 = 20240601;
const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "sine-lab", version, about = "Numerical laboratory for the sine point process")]
struct Cli {
    /// Master seed; for experiments it overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "SINE_LAB_THREADS")]
    threads: Option<usize>,
    /// Output path; see each subcommand for its meaning.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check exact and numerical identities; prints a JSON report.
    Identities(IdentitiesArgs),
    /// Run a Monte Carlo experiment described by a JSON config.
    Experiment {
        /// Path to the experiment config.
        config: PathBuf,
    },
    /// Tabulate the closed-form bridge kernel ⟨g_t, g_s⟩_{1/2} on a grid of [0, τ]².
    CovarianceTable {
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 101, value_parser = clap::value_parser!(u32).range(2..))]
        grid: u32,
    },
    /// Dump raw sampled configurations.
    Sample(SampleArgs),
}

#[derive(Args)]
struct IdentitiesArgs {
    /// `all`, `none`, or one of combinatorial, overlap, intlog, trace, pairing.
    #[arg(default_value = "all", value_parser = parse_scope)]
    scope: Scope,
    /// Perturb one suite so that it must fail (exercises the failure path).
    #[arg(long, hide = true, value_parser = parse_suite)]
    inject_fault: Option<Suite>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 0.0)]
    lo: f64,
    #[arg(long, default_value_t = 100.0)]
    hi: f64,
    /// Number of independent configurations.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, value_enum, default_value_t = SamplerArg::Dpp)]
    sampler: SamplerArg,
    /// Matrix dimension for the GUE sampler.
    #[arg(long, default_value_t = 2000)]
    gue_dim: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Dpp,
    Gue,
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    match s.parse::<Scope>() {
        Ok(Scope(suites)) if suites.len() == 1 => Ok(suites[0]),
        Ok(_) => Err(format!("expected a single suite, got '{s}'")),
        Err(e) => Err(e.to_string()),
    }
}

/// Why a command stopped short of success.
enum Failure {
    /// Checks ran and at least one failed.
    Checks,
    /// Bad invocation or configuration.
    Usage(String),
    /// The computation itself broke down.
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Usage(format!("invalid config: {msg}")),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Identities(args) => identities(&cli, args),
        Command::Experiment { config } => experiment(&cli, config),
        Command::CovarianceTable { tau, grid } => covariance_table(&cli, *tau, *grid as usize),
        Command::Sample(args) => sample(&cli, args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Writes to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn identities(cli: &Cli, args: &IdentitiesArgs) -> Result<(), Failure> {
    let options = IdentityOptions { seed: cli.seed.unwrap_or(DEFAULT_SEED), inject_fault: args.inject_fault };
    let report = run_identities(&args.scope, &options);
    for check in &report.checks {
        let verdict = if check.passed { "PASS" } else { "FAIL" };
        let detail = check.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default();
        eprintln!(
            "{verdict} {}/{}: defect {:.3e} (tol {:.1e}, {} instances){detail}",
            check.suite.name(),
            check.identity,
            check.defect,
            check.tolerance,
            check.instances
        );
    }
    let json = serde_json::to_string_pretty(&report).expect("reports always serialize") + "\n";
    emit(cli.out.as_deref(), &json)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

/// Result files go to `--out`, else the config's `output`, else next to the
/// config as `<stem>.result.{json,csv}`.
/// A trailing `.json` or `.csv` on an explicit path is dropped.
fn result_stem(cli: &Cli, config_path: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let dir = config_path.parent().unwrap_or(Path::new("."));
    let explicit = cli.out.clone().or_else(|| cfg.output.as_ref().map(|out| dir.join(out)));
    match explicit {
        Some(out) if matches!(out.extension().and_then(|e| e.to_str()), Some("json" | "csv")) => {
            out.with_extension("")
        }
        Some(out) => out,
        None => {
            let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
            dir.join(format!("{stem}.result"))
        }
    }
}

/// `stem` with `.ext` appended (unlike `with_extension`, keeps dots in the stem).
fn with_suffix(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    s.into()
}

fn write_result(stem: &Path, result: &ExperimentResult) -> io::Result<()> {
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(with_suffix(stem, "json"), result.to_json() + "\n")?;
    fs::write(with_suffix(stem, "csv"), result.to_csv())
}

fn experiment(cli: &Cli, config_path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", config_path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let stem = result_stem(cli, config_path, &cfg);
    let mut write_error = None;
    let result = run_with_progress(&cfg, &mut |partial| {
        if let Err(e) = write_result(&stem, partial) {
            write_error.get_or_insert(e);
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    let result = result.map_err(|e| {
        let kept = if with_suffix(&stem, "json").exists() { "; partial results kept" } else { "" };
        Failure::Runtime(format!("{e}{kept}"))
    })?;
    write_result(&stem, &result)?;
    for check in result.checks() {
        println!("{}", check.summary());
    }
    println!("results: {}", with_suffix(&stem, "json").display());
    if result.passed {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn covariance_table(cli: &Cli, tau: f64, grid: usize) -> Result<(), Failure> {
    let model = ZCovarianceModel::new(tau).map_err(|e| Failure::Usage(e.to_string()))?;
    let times: Vec<f64> = (0..grid).map(|i| tau * i as f64 / (grid - 1) as f64).collect();
    let mut csv = String::new();
    let _ = writeln!(csv, "# sine-lab {VERSION}");
    let _ = writeln!(csv, "# config_hash {}", content_hash(&json!({ "tau": tau, "grid": grid })));
    let _ = writeln!(csv, "# seed none");
    let _ = writeln!(csv, "t,s,z_covariance");
    for &t in &times {
        for &s in &times {
            let _ = writeln!(csv, "{t:.16e},{s:.16e},{:.16e}", model.z_covariance(t, s));
        }
    }
    emit(cli.out.as_deref(), &csv)?;
    Ok(())
}

fn sample(cli: &Cli, args: &SampleArgs) -> Result<(), Failure> {
    let window = Window::new(args.lo, args.hi).map_err(|e| Failure::Usage(e.to_string()))?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let sampler = match args.sampler {
        SamplerArg::Dpp => "dpp",
        SamplerArg::Gue => "gue",
    };
    let params = json!({
        "lo": args.lo, "hi": args.hi, "count": args.count,
        "sampler": sampler, "gue_dim": args.gue_dim, "seed": seed,
    });
    let header = format!("# sine-lab {VERSION}\n# config_hash {}\n", content_hash(&params));
    let op = match args.sampler {
        SamplerArg::Dpp => Some(sampling_operator(window)?),
        SamplerArg::Gue => None,
    };
    let draw = |i: u64| {
        let rng = RngStream::new(seed, i);
        match &op {
            Some(op) => sample_dpp(op, rng),
            None => sample_gue_bulk(args.gue_dim, window, rng),
        }
    };
    // Several configurations go to numbered files when --out names a directory.
    let into_dir = args.count > 1 && cli.out.is_some();
    if into_dir {
        fs::create_dir_all(cli.out.as_ref().expect("checked above"))?;
    }
    let mut joined = String::new();
    for i in 0..args.count {
        let text = header.clone() + &draw(i)?.to_text();
        if into_dir {
            let path = cli.out.as_ref().expect("checked above").join(format!("config_{i:05}.txt"));
            fs::write(path, text)?;
        } else {
            if i > 0 {
                joined.push('\n');
            }
            joined.push_str(&text);
        }
    }
    if !into_dir {
        emit(cli.out.as_deref(), &joined)?;
    }
    Ok(())
}
