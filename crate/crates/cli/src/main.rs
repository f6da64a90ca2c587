use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use untangled::{envelope, study, verify, Failure, ScenarioConfig, EXIT_OK, EXIT_VIOLATION};

#[derive(Parser)]
#[command(name = "untangled", version, about = "Filippov flows, push-forward densities and transport solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write its artifacts.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline plus every invariant check.
    Verify {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mollification and Galerkin refinement studies.
    Study {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the envelope support table at `t,x1,..`.
    Envelope {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
    },
}

fn code(ok: bool) -> i32 {
    if ok {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

fn print_failed(checks: &[untangled::pipeline::Check]) {
    for c in checks.iter().filter(|c| !c.pass) {
        eprintln!("violation: {} = {}", c.name, c.value);
    }
}

fn run(cli: Cli) -> Result<i32, Failure> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let r = untangled::run_scenario(&cfg, out.as_deref())?;
            print_failed(&r.checks);
            println!("{}: {}", r.scenario, if r.ok { "ok" } else { "certificate violation" });
            Ok(code(r.ok))
        }
        Command::Verify { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let r = verify::verify(&cfg, out.as_deref())?;
            for c in &r.checks {
                println!("{} {} = {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value);
            }
            Ok(code(r.ok))
        }
        Command::Study { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let r = study::convergence_study(&cfg, out.as_deref())?;
            for row in &r.stability {
                println!("eps={} flow_l1={} w1_proxy={} probe={}", row.eps, row.flow_l1_error, row.density_w1_proxy, row.probe_error);
            }
            for row in &r.galerkin {
                println!("cells={} l2={} ratio={}", row.cells, row.l2_error, row.ratio.map(|v| v.to_string()).unwrap_or_default());
            }
            Ok(code(r.ok))
        }
        Command::Envelope { config, at } => {
            let cfg = ScenarioConfig::load(&config)?;
            let (t, x) = envelope::parse_point(&at, cfg.dim())?;
            let d = envelope::dump(&cfg, t, &x)?;
            println!("{}", serde_json::to_string_pretty(&d).map_err(|e| Failure::Io(e.to_string()))?);
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
