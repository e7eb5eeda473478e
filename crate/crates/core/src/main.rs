use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use biped::analysis::{self, PoincarePoint};
use biped::certify::{self, CertifyOptions};
use biped::config::{Config, Resolved};
use biped::output::{OutputDir, RunManifest};
use biped::sim::{self, SimConfig};
use biped::Error;

const EXIT_ABORT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "biped",
    version,
    about = "Hybrid simulation of a three-link biped on a slope"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Walk the configured number of steps and write trajectory files.
    Simulate(RunArgs),
    /// Iterate the stride map to a periodic orbit.
    Orbit(RunArgs),
    /// Run the `[sweep]` section of the config.
    Sweep(RunArgs),
    /// Check the closed-form model against the automatic-differentiation oracle.
    Verify(VerifyArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; defaults to the nominal uphill walk.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override `sim.steps`.
    #[arg(long)]
    steps: Option<usize>,
    /// Reserved; the dynamics are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Abort when the swing foot dips below the surface mid-swing.
    #[arg(long)]
    strict_scuff: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Plant parameters to certify; defaults to the nominal robot.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write `certificate.json` and a manifest here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the random sample states.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random states per check.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Orbit(a) => orbit(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Verify(a) => verify(&a),
        Command::Version => {
            println!("biped {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::SUCCESS)
        }
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(exit_code(&e))
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Validation { .. }
        | Error::InvalidParameter { .. }
        | Error::Io { .. } => EXIT_CONFIG,
        _ => EXIT_ABORT,
    }
}

fn load(path: Option<&PathBuf>) -> Result<Config, Error> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn prepare(a: &RunArgs, command: &str) -> Result<(Resolved, OutputDir), Error> {
    let mut config = load(a.config.as_ref())?;
    if let Some(n) = a.steps {
        config.sim.steps = n;
    }
    config.sim.strict_scuff |= a.strict_scuff;
    let resolved = config.resolve()?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    let line = format!("{command} --seed {}", a.seed);
    let manifest = RunManifest::new(&line, &config, resolved.warnings.clone());
    let out = OutputDir::create(&a.out, manifest)?;
    Ok((resolved, out))
}

fn simulate(a: &RunArgs) -> Result<ExitCode, Error> {
    let (r, mut out) = prepare(a, "simulate")?;
    let g = sim::run_gait(&r.initial, &r.sim);
    out.write_gait(&g, None)?;
    let manifest = out.finish()?;
    println!(
        "completed {}/{} steps, last step time {}, contraction {}",
        g.completed_steps(),
        r.sim.n_steps,
        show(g.step_times.last().copied()),
        show(g.contraction),
    );
    println!("wrote {}", manifest.display());
    Ok(match &g.aborted {
        Some(abort) => {
            eprintln!("gait aborted ({}): {}", abort.kind, abort.message);
            ExitCode::from(EXIT_ABORT)
        }
        None => ExitCode::SUCCESS,
    })
}

fn orbit(a: &RunArgs) -> Result<ExitCode, Error> {
    let (r, mut out) = prepare(a, "orbit")?;
    let found = analysis::find_periodic_orbit(
        &PoincarePoint::new(r.initial),
        &r.sim,
        r.orbit.tol,
        r.orbit.max_iters,
    );
    // one recorded stride on the orbit, or the configured walk on failure
    let g = match &found {
        Ok(o) => {
            let mut cfg: SimConfig = r.sim;
            cfg.n_steps = 1;
            cfg.controller.integral = o.fixed_point.integral;
            let mut g = sim::run_gait(&o.fixed_point.x, &cfg);
            g.orbit = Some(o.fixed_point.x);
            g
        }
        Err(_) => sim::run_gait(&r.initial, &r.sim),
    };
    out.write_gait(&g, Some(found.as_ref()))?;
    let manifest = out.finish()?;
    println!("wrote {}", manifest.display());
    match found {
        Ok(o) => {
            println!(
                "periodic orbit after {} iterations: step time {} s, contraction {}",
                o.iterations,
                o.step_time,
                show(o.contraction)
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("no periodic orbit: {e}");
            Ok(ExitCode::from(EXIT_ABORT))
        }
    }
}

fn sweep(a: &RunArgs) -> Result<ExitCode, Error> {
    let (r, mut out) = prepare(a, "sweep")?;
    let spec = r.sweep.ok_or_else(|| Error::Validation {
        keys: vec!["sweep".into()],
        messages: vec!["the sweep command needs a [sweep] section".into()],
    })?;
    let rows = analysis::run_sweep(&spec);
    out.write_sweep(&spec, &rows)?;
    let manifest = out.finish()?;
    println!(
        "{:>6} {:>14} {:>6} {:>7} {:>12}",
        "index",
        spec.axis.as_str(),
        "steps",
        "orbit",
        "step time"
    );
    for row in &rows {
        println!(
            "{:>6} {:>14.6} {:>6} {:>7} {:>12}",
            row.index,
            row.value,
            row.completed_steps,
            row.orbit_found,
            show(row.orbit_step_time.or(row.step_time)),
        );
    }
    println!("wrote {}", manifest.display());
    let all_walked = rows.iter().all(|r| r.abort.is_none());
    Ok(if all_walked {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ABORT)
    })
}

fn verify(a: &VerifyArgs) -> Result<ExitCode, Error> {
    let config = load(a.config.as_ref())?;
    let resolved = config.resolve()?;
    let cert = certify::certify(&CertifyOptions {
        samples: a.samples,
        seed: a.seed,
        params: resolved.sim.plant,
    });
    for c in &cert.checks {
        println!(
            "{:<4} {:<28} {:>11.3e} <= {:<8.1e} {}",
            if c.passed { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance,
            c.detail
        );
    }
    println!("published reduced terms against certified forms:");
    for t in &cert.transcription {
        println!(
            "     {:<10} max |difference| {:.3e} {}",
            t.term,
            t.max_abs_diff,
            if t.matches { "(matches)" } else { "(differs)" }
        );
    }
    if let Some(dir) = &a.out {
        let line = format!("verify --seed {} --samples {}", a.seed, a.samples);
        let mut out = OutputDir::create(dir, RunManifest::new(&line, &config, resolved.warnings))?;
        out.write_certificate(&cert)?;
        println!("wrote {}", out.finish()?.display());
    }
    Ok(if cert.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY)
    })
}

fn show(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
}
