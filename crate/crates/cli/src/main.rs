mod config;
mod selftest;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dar_core::bench::{
    bounce_trace, run_variants, summarize, sweep, write_bounce_csv, write_results_csv, write_sweep_csv,
    write_timings_csv, Axis, ScenarioConfig, TrialOutcome, Variant, DEFAULT_BOUNCES,
};
use serde::Serialize;

use config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "risbench", version, about = "Double active RIS beamforming benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or more scenario variants on paired channels.
    Run(Common),
    /// Sweep one parameter axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// a_max2_db, m_total, d_r, m1_split or varpi.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        axis_values: Vec<String>,
    },
    /// Steady-state bounce trace of a random feasible state.
    Bounce {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_BOUNCES)]
        bounces: usize,
    },
    /// Quick invariant and oracle checks.
    Selftest,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Dotted-key TOML file applied on top of the scale preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Variant name, a comma-separated list, or `all`.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// 8 elements per surface, 20 trials.
    #[arg(long, conflicts_with = "paper")]
    desk: bool,
    /// 16 elements per surface, 100 trials (default).
    #[arg(long)]
    paper: bool,
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Optimizer { failed: usize, diagnostics: PathBuf },
    Io(String),
    Selftest(Vec<String>),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl Failure {
    fn exit(&self) -> ExitCode {
        match self {
            Failure::Config(e) => {
                eprintln!("error class=config field={} reason={:?}", e.field, e.reason);
                ExitCode::from(2)
            }
            Failure::Optimizer { failed, diagnostics } => {
                eprintln!("error class=optimizer failed={failed} diagnostics={}", diagnostics.display());
                ExitCode::from(3)
            }
            Failure::Io(msg) => {
                eprintln!("error class=io reason={msg:?}");
                ExitCode::from(1)
            }
            Failure::Selftest(names) => {
                eprintln!("error class=selftest failed={}", names.join(","));
                ExitCode::from(4)
            }
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'a str,
    tool_version: &'a str,
    timestamp: String,
    command: &'a str,
    config_path: Option<String>,
    scale: &'a str,
    output_dir: String,
    variants: Vec<&'a str>,
    resolved: BTreeMap<String, toml::Value>,
    files: Vec<String>,
}

struct Resolved {
    cfg: ScenarioConfig,
    scale: &'static str,
    variants: Vec<Variant>,
}

fn resolve(c: &Common) -> Result<Resolved, Failure> {
    let (mut cfg, scale) = if c.desk {
        (ScenarioConfig::desk(), "desk")
    } else {
        (ScenarioConfig::full_scale(), "full")
    };
    if let Some(path) = &c.config {
        config::load(path, &mut cfg)?;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = c.trials {
        cfg.trials = trials;
    }
    let variants = match c.scenario.as_deref() {
        None => vec![cfg.variant],
        Some(s) if s.trim().eq_ignore_ascii_case("all") => Variant::ALL.to_vec(),
        Some(s) => s
            .split(',')
            .map(|v| v.parse::<Variant>().map_err(|e| ConfigError::new("scenario", e.to_string())))
            .collect::<Result<_, _>>()?,
    };
    cfg.variant = variants[0];
    config::validate(&cfg)?;
    Ok(Resolved { cfg, scale, variants })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_manifest(command: &str, c: &Common, r: &Resolved, mut files: Vec<String>) -> Result<(), Failure> {
    let resolved = config::resolved_entries(&r.cfg);
    fs::write(c.out.join("resolved.toml"), config::to_toml(&resolved))?;
    files.push("resolved.toml".into());
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339(),
        command,
        config_path: c.config.as_ref().map(|p| p.display().to_string()),
        scale: r.scale,
        output_dir: c.out.display().to_string(),
        variants: r.variants.iter().map(|v| v.name()).collect(),
        resolved,
        files,
    };
    serde_json::to_writer_pretty(create(&c.out, "manifest.json")?, &manifest)?;
    Ok(())
}

/// Writes the diagnostics of failed trials; returns how many failed.
fn dump_failures(dir: &Path, outcomes: &[TrialOutcome], tag: &str) -> Result<usize, Failure> {
    let mut failed = 0;
    for f in outcomes.iter().filter_map(|o| o.as_ref().err()) {
        failed += 1;
        eprintln!("trial {} {} failed: {}", f.trial, f.variant.name(), f.error);
        if let Some(d) = &f.diagnostics {
            fs::create_dir_all(dir)?;
            let name = format!("{tag}{}_trial{}.csv", f.variant.name(), f.trial);
            d.write_csv(create(dir, &name)?)?;
        }
    }
    Ok(failed)
}

fn print_summary(axis: &str, value: f64, variants: &[Variant], outcomes: &[TrialOutcome]) {
    for &v in variants {
        let row = summarize(axis, value, v, outcomes);
        println!(
            "{:<15} mean WSR {:>8.4}  std {:>7.4}  trials {:>3}  failed {}",
            v.name(),
            row.mean_wsr,
            row.std_wsr,
            row.n_trials,
            row.n_failed
        );
    }
}

fn cmd_run(c: &Common) -> Result<(), Failure> {
    let r = resolve(c)?;
    fs::create_dir_all(&c.out)?;
    let outcomes = run_variants(&r.cfg, &r.variants).map_err(|e| ConfigError::new("<config>", e.to_string()))?;
    write_results_csv(create(&c.out, "results.csv")?, &outcomes)?;
    write_timings_csv(create(&c.out, "timings.csv")?, &outcomes)?;
    print_summary("none", 0.0, &r.variants, &outcomes);
    let diag = c.out.join("diagnostics");
    let failed = dump_failures(&diag, &outcomes, "")?;
    write_manifest("run", c, &r, vec!["results.csv".into(), "timings.csv".into()])?;
    if failed > 0 {
        return Err(Failure::Optimizer { failed, diagnostics: diag });
    }
    Ok(())
}

fn cmd_sweep(c: &Common, axis: &str, values: &[String]) -> Result<(), Failure> {
    let r = resolve(c)?;
    let axis: Axis = axis.parse().map_err(|e: dar_core::bench::BenchError| ConfigError::new("axis", e.to_string()))?;
    if values.is_empty() {
        return Err(ConfigError::new("axis_values", "at least one value is required").into());
    }
    let values: Vec<f64> = values
        .iter()
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| ConfigError::new("axis_values", format!("cannot read `{v}`")))
        })
        .collect::<Result<_, _>>()?;
    for &v in &values {
        let point = r.cfg.with_axis(axis, v).map_err(|e| ConfigError::new("axis_values", e.to_string()))?;
        config::validate(&point)?;
    }
    fs::create_dir_all(&c.out)?;
    let (rows, outcomes) =
        sweep(&r.cfg, axis, &values, &r.variants).map_err(|e| ConfigError::new("axis_values", e.to_string()))?;
    write_sweep_csv(create(&c.out, "sweep.csv")?, &rows)?;
    let per_point = r.variants.len() * r.cfg.trials;
    let mut files = vec!["sweep.csv".to_string()];
    let diag = c.out.join("diagnostics");
    let mut failed = 0;
    for (chunk, v) in outcomes.chunks(per_point).zip(&values) {
        let name = format!("trials_{}_{v}.csv", axis.name());
        write_results_csv(create(&c.out, &name)?, chunk)?;
        files.push(name);
        println!("{} = {v}", axis.name());
        print_summary(axis.name(), *v, &r.variants, chunk);
        failed += dump_failures(&diag, chunk, &format!("{}_{v}_", axis.name()))?;
    }
    write_manifest("sweep", c, &r, files)?;
    if failed > 0 {
        return Err(Failure::Optimizer { failed, diagnostics: diag });
    }
    Ok(())
}

fn cmd_bounce(c: &Common, bounces: usize) -> Result<(), Failure> {
    let r = resolve(c)?;
    if bounces == 0 {
        return Err(ConfigError::new("bounces", "must be at least 1").into());
    }
    fs::create_dir_all(&c.out)?;
    let report = bounce_trace(&r.cfg, r.cfg.seed, bounces).map_err(|e| ConfigError::new("<config>", e.to_string()))?;
    write_bounce_csv(create(&c.out, "bounce.csv")?, &report)?;
    match report.bounces_to_converge {
        Some(b) => println!("steady state (relative zeta < 1e-6) after {b} bounces"),
        None => println!("no steady state within {bounces} bounces"),
    }
    write_manifest("bounce", c, &r, vec!["bounce.csv".into()])
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep { common, axis, axis_values } => cmd_sweep(common, axis, axis_values),
        Command::Bounce { common, bounces } => cmd_bounce(common, *bounces),
        Command::Selftest => {
            let failed = selftest::run();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Selftest(failed))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}
