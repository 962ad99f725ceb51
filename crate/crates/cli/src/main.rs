use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use formation_core::check::{dynamics_suite, geometry_suite, lemma1_suite, montecarlo_suite, SuiteReport};
use formation_core::geometry::basis_at;
use formation_core::scenario::{OutputFormat, Scenario, ScenarioError, ScenarioFile};
use formation_core::{run, validate_graph};

/// Exit status contract.
const EXIT_OK: u8 = 0;
const EXIT_DOMAIN: u8 = 1;
const EXIT_IO: u8 = 2;

#[derive(Parser)]
#[command(name = "formation", version)]
#[command(about = "Bispherical leader-follower formation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Check a scenario's sensing graph against the hierarchy rules
    ValidateGraph {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the bispherical setpoints of a scenario's desired shape as JSON
    DeriveTargets {
        #[arg(long)]
        config: PathBuf,
        /// Write the JSON here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario and write its trajectory and summary
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created if missing
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run the seeded property suites
    Check {
        #[arg(value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Monte Carlo trials
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Samples per geometry and dynamics property
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Spec and configuration pairs for the equivalence suite
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        /// Also write the reports as JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Geometry,
    Dynamics,
    Lemma1,
    Montecarlo,
    All,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    fn domain(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DOMAIN,
            message: message.into(),
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = if e.is_domain() { EXIT_DOMAIN } else { EXIT_IO };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Commands::ValidateGraph { config } => cmd_validate_graph(&config),
        Commands::DeriveTargets { config, out } => cmd_derive_targets(&config, out.as_deref()),
        Commands::Simulate {
            config,
            out,
            seed,
            dt,
            format,
        } => cmd_simulate(&config, out, seed, dt, format),
        Commands::Check {
            suite,
            seed,
            trials,
            samples,
            pairs,
            out,
        } => cmd_check(suite, seed, trials, samples, pairs, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_validate_graph(config: &Path) -> CmdResult {
    let file = ScenarioFile::read(config)?;
    let g = match file.sensing_graph() {
        Ok(g) => g,
        Err(ScenarioError::Structure(e)) => {
            println!("invalid: {e}");
            return Ok(EXIT_DOMAIN);
        }
        Err(e) => return Err(e.into()),
    };
    let report = validate_graph(&g);
    if report.is_ok() {
        println!("ok: {} agents, {} edges", g.n(), g.edges().len());
        return Ok(EXIT_OK);
    }
    println!("invalid: {} violation(s)", report.violations.len());
    for v in &report.violations {
        println!("  {v}");
    }
    Ok(EXIT_DOMAIN)
}

fn write_json(path: Option<&Path>, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    match path {
        Some(p) => fs::write(p, text + "\n").map_err(|e| Failure::io(format!("cannot write {}: {e}", p.display()))),
        None => match writeln!(io::stdout().lock(), "{text}") {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::io(format!("cannot write to stdout: {e}"))),
            _ => Ok(()),
        },
    }
}

fn cmd_derive_targets(config: &Path, out: Option<&Path>) -> CmdResult {
    let scenario = Scenario::load(config)?;
    write_json(out, &scenario.targets().to_json())?;
    Ok(EXIT_OK)
}

fn cmd_simulate(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    dt: Option<f64>,
    format: Option<Format>,
) -> CmdResult {
    let mut scenario = Scenario::load(config)?;
    if let Some(seed) = seed {
        scenario.sim.seed = seed;
    }
    if let Some(dt) = dt {
        scenario.sim.dt = dt;
    }
    scenario
        .sim
        .validate(scenario.formation.n())
        .map_err(|e| Failure::io(format!("invalid simulation settings: {e}")))?;
    let format = match format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => scenario.file.output.format,
    };
    let dir = out
        .or_else(|| scenario.file.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;

    let log = run(&scenario.formation, &scenario.sim).map_err(|e| Failure::domain(e.to_string()))?;

    let stem = &scenario.file.output.stem;
    let (name, written) = match format {
        OutputFormat::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let w = create(&path)?;
            (path.clone(), log.write_csv(w).map_err(|e| e.to_string()))
        }
        OutputFormat::Json => {
            let path = dir.join(format!("{stem}.jsonl"));
            let mut w = create(&path)?;
            let res = log.write_json_lines(&mut w).and_then(|_| w.flush());
            (path.clone(), res.map_err(|e| e.to_string()))
        }
    };
    written.map_err(|e| Failure::io(format!("cannot write {}: {e}", name.display())))?;
    let summary_path = dir.join(format!("{stem}.summary.json"));
    write_json(Some(&summary_path), &log.summary(&scenario.sim))?;
    let last = log.last();
    println!(
        "t = {:.3}: max |error| {:.3e}, min neighbor distance {:.3e}, {} events",
        last.t,
        last.max_abs_error(),
        log.min_neighbor_distance,
        log.events.len()
    );
    println!("wrote {} and {}", name.display(), summary_path.display());
    Ok(EXIT_OK)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(format!("cannot create {}: {e}", path.display())))
}

fn cmd_check(suite: Suite, seed: u64, trials: usize, samples: usize, pairs: usize, out: Option<&Path>) -> CmdResult {
    let wants = |s: Suite| suite == s || suite == Suite::All;
    let mut reports: Vec<SuiteReport> = Vec::new();
    let mut stdout = io::stdout().lock();
    let mut emit = |r: SuiteReport, stdout: &mut io::StdoutLock| {
        let _ = write!(stdout, "{r}");
        reports.push(r);
    };
    if wants(Suite::Geometry) {
        emit(geometry_suite(seed, samples, basis_at), &mut stdout);
    }
    if wants(Suite::Dynamics) {
        emit(dynamics_suite(seed, samples), &mut stdout);
    }
    if wants(Suite::Lemma1) {
        emit(lemma1_suite(seed, pairs), &mut stdout);
    }
    if wants(Suite::Montecarlo) {
        if trials == 0 {
            return Err(Failure::io("--trials must be at least 1"));
        }
        let (report, summary) = montecarlo_suite(seed, trials);
        let _ = writeln!(
            stdout,
            "montecarlo: {}/{} trials converged ({:.1}%), min neighbor distance {:.3e}",
            summary.converged,
            trials,
            100.0 * summary.fraction(),
            summary.min_neighbor_distance
        );
        emit(report, &mut stdout);
    }
    let passed = reports.iter().all(SuiteReport::passed);
    let _ = writeln!(
        stdout,
        "{}/{} suites passed",
        reports.iter().filter(|r| r.passed()).count(),
        reports.len()
    );
    if let Some(path) = out {
        let value = serde_json::to_value(&reports).expect("reports serialize");
        write_json(Some(path), &value)?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_DOMAIN })
}
