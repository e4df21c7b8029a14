//! `envrisk`: two-layer distortion risk measures from the command line.
//!
//! Exit codes: 0 success, 2 unreadable or malformed scenarios, 3 invalid
//! configuration or arguments, 4 numerical failure, 5 failed check.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use envrisk_core::gbm::{closed_form_rho, convergence_table, pipeline_rho, GbmSpec};
use envrisk_core::report::{build_report, ComputeConfig, ReportInputs};
use envrisk_core::verify::{run_suite, Suite};
use envrisk_core::{Error, ScenarioTable};

/// Relative gap allowed between the pipeline and the closed form.
const GBM_CHECK_TOL: f64 = 5e-3;

#[derive(Parser)]
#[command(name = "envrisk", version, about = "Risk measures of losses under random environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a risk report from a scenario CSV and a JSON config.
    Compute {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Omit timing so identical inputs give byte-identical reports.
        #[arg(long)]
        no_meta: bool,
    },
    /// Lognormal loss with a normal environment: closed form and pipeline.
    Gbm {
        #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, default_value_t = 0.2)]
        sigma: f64,
        #[arg(long, default_value_t = 0.3)]
        sigma2: f64,
        #[arg(long, default_value_t = 0.95)]
        a: f64,
        #[arg(long, default_value_t = 0.95)]
        b: f64,
        /// Environment states used by the discretized pipeline.
        #[arg(long, default_value_t = 2000)]
        states: usize,
        /// Also run the pipeline and compare it with the closed form.
        #[arg(long)]
        check: bool,
        /// Print a CSV convergence table over increasing state counts.
        #[arg(long)]
        convergence: bool,
    },
    /// Run a seeded property suite and print its check table.
    Verify {
        /// coherence, dual, recovery or background
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Csv { .. } => 2,
        Error::Numeric(_) | Error::NonFiniteValue { .. } => 4,
        _ => 3,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::new(exit_code(&e), e.to_string())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path, code: u8) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::new(code, format!("{}: {e}", path.display())))
}

fn compute(scenarios: &Path, config: &Path, out: &Path, no_meta: bool) -> Result<(), Failure> {
    let start = Instant::now();
    let csv = read(scenarios, 2)?;
    // every failure while ingesting the table is a scenario error
    let table = ScenarioTable::from_csv_reader(csv.as_slice())
        .map_err(|e| Failure::new(2, format!("{}: {e}", scenarios.display())))?;
    let config_bytes = read(config, 3)?;
    let text = String::from_utf8(config_bytes.clone()).map_err(|e| Failure::new(3, format!("config: {e}")))?;
    let cfg = ComputeConfig::from_json(&text)?;
    let inputs = ReportInputs {
        scenarios_sha256: sha256_hex(&csv),
        config_sha256: sha256_hex(&config_bytes),
    };
    let mut report = build_report(&table, &cfg, inputs)?;
    if !report.self_consistent()? {
        return Err(Failure::new(4, "outer value is not reproduced by the profile"));
    }
    if !no_meta {
        report.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Failure::new(4, e.to_string()))?;
    json.push('\n');
    fs::write(out, json).map_err(|e| Failure::new(3, format!("{}: {e}", out.display())))?;
    println!("outer value {:.12}", report.outer_value);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gbm(
    r: f64,
    sigma: f64,
    sigma2: f64,
    a: f64,
    b: f64,
    states: usize,
    check: bool,
    convergence: bool,
) -> Result<(), Failure> {
    let spec = GbmSpec::new(r, sigma, sigma2, a, b)?;
    let closed = closed_form_rho(&spec)?;
    println!("closed form {closed:.12}");
    let mut ok = true;
    if check {
        let pipeline = pipeline_rho(&spec, states)?;
        let gap = ((pipeline - closed) / closed).abs();
        ok = gap < GBM_CHECK_TOL;
        println!("pipeline ({states} states) {pipeline:.12}");
        println!("relative gap {gap:.3e} (tol {GBM_CHECK_TOL:.0e}) {}", if ok { "PASS" } else { "FAIL" });
    }
    if convergence {
        println!("n_states,pipeline,closed_form,rel_error");
        for row in convergence_table(&spec, &[100, 200, 500, 1000, 2000, 5000])? {
            println!("{},{},{},{}", row.n_states, row.pipeline, row.closed_form, row.rel_error);
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::new(5, "pipeline does not match the closed form"))
    }
}

fn verify(suite: &str, trials: usize, seed: u64) -> Result<(), Failure> {
    let suite: Suite = suite.parse()?;
    let report = run_suite(suite, trials, seed)?;
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::new(5, format!("suite {suite} has violations")))
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("ENVRISK_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::new(3, format!("ENVRISK_THREADS must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::new(3, e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Compute {
            scenarios,
            config,
            out,
            no_meta,
        } => compute(&scenarios, &config, &out, no_meta),
        Command::Gbm {
            r,
            sigma,
            sigma2,
            a,
            b,
            states,
            check,
            convergence,
        } => gbm(r, sigma, sigma2, a, b, states, check, convergence),
        Command::Verify { suite, trials, seed } => verify(&suite, trials, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
