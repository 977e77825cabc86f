//! `cogisac`: run scenarios, compare policies, sweep trade-offs and validate
//! scenario files.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 bad input (unknown scenario,
//! invalid override or scenario file).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cogisac::agent::PolicyKind;
use cogisac::report::{
    self, Manifest, OutputFormat, RunPlan, PD_TABLE, SUMRATE_TABLE, SWEEP_TABLE,
};
use cogisac::simkit::{self, run_monte_carlo_policy, scenario_library, ScenarioError, ScenarioSpec};

#[derive(Parser)]
#[command(name = "cogisac", version, about = "Cognitive ISAC simulation driver")]
struct Cli {
    /// Worker threads for Monte Carlo runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo runs of one policy.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Paired runs of several policies on the same seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Policies to compare.
        #[arg(long, value_delimiter = ',', default_value = "rl,nrl,orthogonal")]
        policies: Vec<PolicyKind>,
    },
    /// Steady-state sum rate over a grid of trade-off weights and SNRs.
    Sweep {
        /// `--rho` and `--snr-db` take grids here: a comma list or
        /// `start:step:stop`.
        #[command(flatten)]
        common: Common,
    },
    /// Check a scenario file or built-in name and report every violation.
    Validate {
        /// Scenario file (TOML) or built-in name.
        scenario: String,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Print a built-in scenario as TOML.
    Show { scenario: String },
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        /// Output directory.
        #[arg(long, env = "COGISAC_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in scenario name or scenario file.
    #[arg(default_value = "stationary4-desk")]
    scenario: String,
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Trade-off weight: 0 favours the radar reference, 1 the downlink.
    #[arg(long)]
    rho: Option<String>,
    /// Downlink users `K`.
    #[arg(long)]
    users: Option<usize>,
    /// Communication SNR in dB.
    #[arg(long = "snr-db")]
    snr_db: Option<String>,
    #[arg(long)]
    mc_runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    pulses: Option<usize>,
    /// Added to every target SNR (dB).
    #[arg(long)]
    snr_offset_db: Option<f64>,
    /// `desk` or `full`: picks the matching variant of a built-in scenario.
    #[arg(long)]
    scale: Option<Scale>,
    /// Output directory.
    #[arg(long, env = "COGISAC_OUT_DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Scale {
    Desk,
    Full,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<cogisac::Error> for Failure {
    fn from(e: cogisac::Error) -> Self {
        let code = match &e {
            cogisac::Error::Scenario(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        cogisac::Error::from(e).into()
    }
}

impl From<report::ReportError> for Failure {
    fn from(e: report::ReportError) -> Self {
        cogisac::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not start {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { common } => {
            let (source, spec) = resolve(&common)?;
            let plan = RunPlan::Run;
            execute(&source, spec, plan, common.format, &common.out)
        }
        Command::Compare { common, policies } => {
            if common.policy.is_some() {
                return Err(Failure::input("--policy conflicts with compare; use --policies"));
            }
            if policies.is_empty() {
                return Err(Failure::input("--policies: at least one policy is required"));
            }
            let (source, spec) = resolve(&common)?;
            execute(&source, spec, RunPlan::Compare { policies }, common.format, &common.out)
        }
        Command::Sweep { mut common } => {
            let rho_grid = parse_grid(common.rho.take().as_deref().unwrap_or("0.2,0.4,0.6,0.8"))
                .map_err(|m| Failure::input(format!("--rho: {m}")))?;
            let snr_db = parse_grid(common.snr_db.take().as_deref().unwrap_or("0:2:18"))
                .map_err(|m| Failure::input(format!("--snr-db: {m}")))?;
            let (source, spec) = resolve(&common)?;
            for (i, &rho) in rho_grid.iter().enumerate() {
                let mut s = spec.clone();
                s.rho = rho;
                check_overrides(&s).map_err(|f| Failure::input(format!("--rho[{i}]: {}", f.message)))?;
            }
            execute(
                &source,
                spec,
                RunPlan::Sweep {
                    rho: rho_grid,
                    snr_db,
                },
                common.format,
                &common.out,
            )
        }
        Command::Validate { scenario } => validate(&scenario),
        Command::ListScenarios => {
            for s in scenario_library() {
                println!(
                    "{:<18} P={:<4} targets={} N_t={:<4} K={:<3} runs={:<5} {}",
                    s.name,
                    s.pulses,
                    s.targets.len(),
                    s.array.n_t(),
                    s.users,
                    s.mc_runs,
                    s.description
                );
            }
            Ok(())
        }
        Command::Show { scenario } => {
            let spec = simkit::scenario(&scenario)?;
            print!("{}", spec.to_toml_string());
            Ok(())
        }
        Command::Replay { manifest, out } => {
            let m = report::read_manifest(&manifest)?;
            execute(&m.source, m.scenario, m.plan, m.format, &out)
        }
    }
}

fn load(source: &str) -> Result<ScenarioSpec, Failure> {
    let path = Path::new(source);
    if path.is_file() || source.ends_with(".toml") {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{source}: {e}")))?;
        Ok(ScenarioSpec::from_toml_str(&text)?)
    } else {
        Ok(simkit::scenario(source)?)
    }
}

/// Loads the scenario and applies command-line overrides.
fn resolve(c: &Common) -> Result<(String, ScenarioSpec), Failure> {
    let mut source = c.scenario.clone();
    if let Some(scale) = c.scale {
        if Path::new(&source).is_file() {
            return Err(Failure::input("--scale only applies to built-in scenarios"));
        }
        let stem = source.trim_end_matches("-desk").to_string();
        source = match scale {
            Scale::Desk => format!("{stem}-desk"),
            Scale::Full => stem,
        };
    }
    let mut spec = load(&source)?;
    if let Some(p) = c.policy {
        spec.policy = p;
    }
    if let Some(v) = &c.rho {
        spec.rho = parse_number("--rho", v)?;
    }
    if let Some(v) = c.users {
        spec.users = v;
    }
    if let Some(v) = &c.snr_db {
        spec.comm_snr_db = parse_number("--snr-db", v)?;
    }
    if let Some(v) = c.mc_runs {
        spec.mc_runs = v;
    }
    if let Some(v) = c.seed {
        spec.seed = v;
    }
    if let Some(v) = c.pulses {
        spec.set_pulses(v);
    }
    if let Some(v) = c.snr_offset_db {
        spec.snr_offset_db = v;
    }
    check_overrides(&spec)?;
    Ok((source, spec))
}

fn parse_number(flag: &str, v: &str) -> Result<f64, Failure> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Failure::input(format!("{flag}: '{v}' is not a number (use sweep for grids)")))
}

fn check_overrides(spec: &ScenarioSpec) -> Result<(), Failure> {
    let d = spec.validate();
    if d.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = d.iter().map(|d| d.to_string()).collect();
    Err(Failure::input(format!("invalid configuration:\n  {}", lines.join("\n  "))))
}

/// `start:step:stop` (inclusive) or a comma-separated list.
fn parse_grid(text: &str) -> Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| format!("'{s}' is not a number"));
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, step, stop] = parts[..] else {
            return Err("expected start:step:stop".into());
        };
        let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
        if !(step > 0.0) || stop < start {
            return Err("need a positive step and stop >= start".into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| start + i as f64 * step).collect())
    } else {
        text.split(',').map(num).collect()
    }
}

fn validate(source: &str) -> Result<(), Failure> {
    let spec = match load(source) {
        Ok(s) => s,
        Err(f) => {
            println!("S002 {source}: {}", f.message);
            return Err(Failure::input(format!("{source}: does not parse")));
        }
    };
    let d = spec.validate();
    if d.is_empty() {
        println!("{}: ok", spec.name);
        return Ok(());
    }
    for diag in &d {
        println!("{diag}");
    }
    Err(Failure::input(format!("{source}: {} problem(s)", d.len())))
}

fn execute(source: &str, spec: ScenarioSpec, plan: RunPlan, format: OutputFormat, out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", out.display()),
    })?;
    let scenario = spec.compile()?;
    let mut outputs = Vec::new();
    match &plan {
        RunPlan::Run | RunPlan::Compare { .. } => {
            let policies = match &plan {
                RunPlan::Compare { policies } => policies.clone(),
                _ => vec![spec.policy],
            };
            let mut pd = Vec::new();
            let mut rate = Vec::new();
            for &p in &policies {
                eprintln!("{}: {} runs of {} pulses, policy {p}", spec.name, spec.mc_runs, spec.pulses);
                let log = run_monte_carlo_policy(&scenario, p)?;
                pd.extend(report::pd_rows(&log));
                rate.extend(report::sumrate_rows(&log));
            }
            outputs.push(report::write_table(out, PD_TABLE, &pd, format)?);
            outputs.push(report::write_table(out, SUMRATE_TABLE, &rate, format)?);
        }
        RunPlan::Sweep { rho, snr_db } => {
            let mut rows = Vec::new();
            for &r in rho {
                for &snr in snr_db {
                    let mut s = spec.clone();
                    s.rho = r;
                    s.comm_snr_db = snr;
                    eprintln!("{}: rho {r}, SNR {snr} dB", spec.name);
                    let log = run_monte_carlo_policy(&s.compile()?, spec.policy)?;
                    rows.push(report::sweep_row(&log, snr));
                }
            }
            outputs.push(report::write_table(out, SWEEP_TABLE, &rows, format)?);
        }
    }
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        source: source.to_string(),
        format,
        plan,
        scenario: spec,
        outputs: outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    report::write_manifest(out, &manifest)?;
    for p in &outputs {
        println!("{}", p.display());
    }
    Ok(())
}
