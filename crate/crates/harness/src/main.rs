use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{Args, Parser, Subcommand};
use peskin_core::dynamics::Integrator;
use peskin_harness::artifacts::{write_outcome, write_run_info};
use peskin_harness::{
    run_experiment, ExperimentKind, ExperimentSpec, HarnessError, Result, EXIT_ASSERTION, EXIT_CONFIG,
    EXIT_DEGENERATE, EXIT_OK, OUT_DIR_ENV,
};

/// Runs contour-solver experiments and writes their artifacts.
///
/// Exit status: 0 all assertions passed, 1 config or IO error,
/// 2 the curve degenerated, 3 an assertion failed or the run blew up.
#[derive(Parser)]
#[command(name = "peskin", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a curve and record diagnostics.
    Simulate(Opts),
    /// Linearised operator identities and the shifted nonlinearity.
    CheckOperators(Opts),
    /// Circles do not move.
    CheckStationarity(Opts),
    /// Direct and semilinear velocities agree.
    CheckEquivalence(Opts),
    /// Fit the relaxation rate towards a circle.
    FitDecay(Opts),
    /// Weighted higher derivatives stay bounded.
    CheckSmoothing(Opts),
    /// Nearby initial curves stay nearby.
    CheckStability(Opts),
    /// Scalar toy model: scaling symmetry and time-step convergence.
    Toy(Opts),
    /// Sampled norms and the κ-propagation monitor.
    Norms(Opts),
}

impl Command {
    fn split(&self) -> (ExperimentKind, &Opts) {
        use ExperimentKind as K;
        match self {
            Command::Simulate(o) => (K::Simulate, o),
            Command::CheckOperators(o) => (K::OperatorChecks, o),
            Command::CheckStationarity(o) => (K::Stationarity, o),
            Command::CheckEquivalence(o) => (K::Equivalence, o),
            Command::FitDecay(o) => (K::Decay, o),
            Command::CheckSmoothing(o) => (K::Smoothing, o),
            Command::CheckStability(o) => (K::Stability, o),
            Command::Toy(o) => (K::ToyScaling, o),
            Command::Norms(o) => (K::Norms, o),
        }
    }
}

#[derive(Args)]
struct Opts {
    /// TOML experiment spec. Without it the built-in settings for the
    /// subcommand are used.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory; beats the env override and the config file.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Grid size. Also sets the quadrature size to 2n unless --m is given.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long, value_parser = parse_integrator)]
    integrator: Option<Integrator>,
    #[arg(long)]
    eps_prime: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    record_every: Option<usize>,
    /// Initial curve from a binary field file.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Switch the nonlinearity off.
    #[arg(long)]
    linear_only: bool,
}

fn parse_integrator(s: &str) -> std::result::Result<Integrator, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown integrator {s:?} (etd1, etd-rk2, imex-be)"))
}

fn build_spec(kind: ExperimentKind, o: &Opts) -> Result<ExperimentSpec> {
    let mut spec = match &o.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::default_for(kind),
    };
    if spec.kind != kind {
        return Err(HarnessError::Config(format!(
            "config describes a {} experiment, not {kind}",
            spec.kind
        )));
    }
    let sim = &mut spec.sim;
    if let Some(n) = o.n {
        sim.n = n;
        sim.m = o.m.unwrap_or(2 * n);
    }
    if let Some(m) = o.m {
        sim.m = m;
    }
    if let Some(v) = o.dt {
        sim.dt = v;
    }
    if let Some(v) = o.t_final {
        sim.t_final = v;
    }
    if let Some(v) = o.integrator {
        sim.integrator = v;
    }
    if let Some(v) = o.eps_prime {
        sim.eps_prime = v;
    }
    if let Some(v) = o.seed {
        sim.seed = v;
    }
    if let Some(v) = o.record_every {
        sim.record_every = v;
    }
    sim.linear_only |= o.linear_only;
    if let Some(f) = &o.field {
        let cwd = std::env::current_dir().map_err(|e| HarnessError::io(".", e))?;
        spec.initial.file = Some(cwd.join(f));
    }
    spec.validate()?;
    Ok(spec)
}

fn out_dir(kind: ExperimentKind, o: &Opts, spec: &ExperimentSpec) -> PathBuf {
    o.out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(kind.to_string()))
}

fn run(cli: Cli) -> Result<i32> {
    let (kind, opts) = cli.command.split();
    let spec = build_spec(kind, opts)?;
    let dir = out_dir(kind, opts, &spec);
    let started = SystemTime::now();
    let clock = Instant::now();
    let outcome = run_experiment(&spec)?;
    write_outcome(&dir, &spec, &outcome)?;
    write_run_info(&dir, started, clock.elapsed())?;

    let summary = &outcome.summary;
    for a in &summary.assertions {
        println!(
            "[{}] {}: {} = {:.6e} (tolerance {:.3e})",
            if a.passed { "PASS" } else { "FAIL" },
            a.anchor,
            a.name,
            a.measured,
            a.tolerance
        );
    }
    if let Some(stop) = &summary.stop {
        println!("stop: {}", serde_json::to_string(stop).unwrap_or_default());
    }
    println!("artifacts: {}", dir.display());
    Ok(if outcome.degenerate() {
        EXIT_DEGENERATE
    } else if summary.passed {
        EXIT_OK
    } else {
        EXIT_ASSERTION
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // clap's own status 2 would read as a degeneracy stop
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
