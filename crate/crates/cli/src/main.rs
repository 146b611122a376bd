//! `acw`: runs the workbench suites and the authentication sessions.
//!
//! Exit codes: 0 every bound holds, 1 a bound is violated, 2 usage or
//! configuration error. `ACW_WORKERS` sets the worker thread count.

use acw_core::fsauth::{run_sessions, AttackStrategy, SessionConfig, SessionSummary};
use acw_core::harness::{run_experiment, write_report, ExperimentConfig, Format, Report, Suite};
use acw_core::distill::hoeffding_width;
use acw_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "acw", version, about = "Composable-security workbench")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config: an experiment config, or a session config for `fsauth`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Both)]
    format: OutFormat,
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Both,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
            OutFormat::Both => Format::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Guessing probability and min-entropy checks.
    Entropy,
    /// Exhaustive hash family and extractor audits.
    HashAudit,
    /// Key distillation pipeline bounds.
    Distill,
    /// Authentication sessions and attacks.
    Fsauth {
        #[command(subcommand)]
        action: FsAction,
    },
    /// Closed-form bounds against audited figures.
    Bounds,
    /// Entropy, distance and guessing lemmas on fuzzed instances.
    Lemmas,
    /// Composition accounting on planted fixtures.
    Composition,
    /// Every suite, with the determinism hash.
    Report,
}

#[derive(Subcommand)]
enum FsAction {
    /// Honest or noisy sessions from a session config.
    Run,
    /// A substitution or impersonation strategy from a session config; the
    /// attack-library audits when no config is given.
    Attack,
}

struct Failure {
    code: u8,
    msg: String,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        usage(e.to_string())
    }
}

fn init_workers() -> Result<(), Failure> {
    let Ok(v) = std::env::var("ACW_WORKERS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| usage(format!("ACW_WORKERS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(usage("ACW_WORKERS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| usage(e.to_string()))
}

fn read_config(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn experiment_config(c: &Common, suites: Vec<Suite>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_json(&read_config(p)?)?,
        None => ExperimentConfig::default(),
    };
    cfg.suites = suites;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    if let Some(t) = c.tolerance {
        cfg.tolerance = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(r: &Report) {
    for rec in &r.records {
        let verdict = if rec.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {} value={} bound={}", rec.id, rec.value.hi(), rec.bound);
    }
    println!("determinism-hash {}", r.determinism_hash);
}

fn run_suites(c: &Common, suites: Vec<Suite>) -> Result<u8, Failure> {
    let cfg = experiment_config(c, suites)?;
    let report = run_experiment(&cfg)?;
    write_report(&report, &c.out, c.format.into())?;
    print_report(&report);
    Ok(report.exit_code() as u8)
}

fn session_config(c: &Common) -> Result<SessionConfig, Failure> {
    let path = c.config.as_ref().ok_or_else(|| usage("fsauth needs --config with a session config"))?;
    let mut cfg: SessionConfig = serde_json::from_str(&read_config(path)?).map_err(|e| usage(format!("session config: {e}")))?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    if cfg.trials == 0 {
        return Err(usage("trials must be at least 1"));
    }
    cfg.params()?;
    Ok(cfg)
}

/// Passes when the observed rate stays within its bound plus the width.
fn judge(cfg: &SessionConfig, s: &SessionSummary) -> (&'static str, f64, f64, bool) {
    let width = hoeffding_width(s.trials);
    match cfg.strategy {
        AttackStrategy::None | AttackStrategy::Noise { .. } => {
            let rate = 1.0 - s.accept_rate;
            ("reject-rate", rate, s.eps_noise, rate <= s.eps_noise + width)
        }
        _ => ("forgery-rate", s.forgery_rate, s.eps_adv, s.forgery_rate <= s.eps_adv + width),
    }
}

fn run_fsauth(c: &Common, attack: bool) -> Result<u8, Failure> {
    if attack && c.config.is_none() {
        return run_suites(c, vec![Suite::Fsauth]);
    }
    let cfg = session_config(c)?;
    let is_attack = matches!(cfg.strategy, AttackStrategy::Substitution { .. } | AttackStrategy::Impersonation { .. });
    if attack != is_attack {
        return Err(usage(if attack {
            "fsauth attack needs a substitution or impersonation strategy"
        } else {
            "fsauth run takes no-attack or noise strategies; use fsauth attack"
        }));
    }
    let (transcripts, summary) = run_sessions(&cfg)?;
    let (metric, value, bound, pass) = judge(&cfg, &summary);
    std::fs::create_dir_all(&c.out)?;
    let format: Format = c.format.into();
    if matches!(format, Format::Json | Format::Both) {
        let doc = serde_json::json!({ "config": cfg, "summary": summary, "transcripts": transcripts });
        std::fs::write(c.out.join("sessions.json"), serde_json::to_vec_pretty(&doc).map_err(Error::from)?)?;
    }
    if matches!(format, Format::Csv | Format::Both) {
        let mut w = csv::Writer::from_path(c.out.join("sessions.csv")).map_err(Error::from)?;
        w.write_record(["trials", "accept_rate", "forgery_rate", "eps_adv", "eps_noise"]).map_err(Error::from)?;
        w.write_record([summary.trials.to_string(), summary.accept_rate.to_string(), summary.forgery_rate.to_string(), summary.eps_adv.to_string(), summary.eps_noise.to_string()])
            .map_err(Error::from)?;
        w.flush()?;
    }
    println!("{} {metric} value={value} bound={bound} trials={}", if pass { "PASS" } else { "FAIL" }, summary.trials);
    Ok(if pass { 0 } else { 1 })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    init_workers()?;
    let c = &cli.common;
    match cli.command {
        Command::Entropy => run_suites(c, vec![Suite::Entropy]),
        Command::HashAudit => run_suites(c, vec![Suite::HashAudit]),
        Command::Distill => run_suites(c, vec![Suite::Distill]),
        Command::Bounds => run_suites(c, vec![Suite::Bounds]),
        Command::Lemmas => run_suites(c, vec![Suite::Lemmas]),
        Command::Composition => run_suites(c, vec![Suite::Composition]),
        Command::Report => run_suites(c, Suite::ALL.to_vec()),
        Command::Fsauth { action: FsAction::Run } => run_fsauth(c, false),
        Command::Fsauth { action: FsAction::Attack } => run_fsauth(c, true),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
