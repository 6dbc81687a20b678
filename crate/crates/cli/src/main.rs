use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use algcalc_cli::{load_config, run_command, Command, ConnectionKind, RunError, RunOptions};
use clap::Parser;

/// Checks generalized tangent bundle geometries described by a JSON config.
#[derive(Parser)]
#[command(name = "algcalc", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,

    config: PathBuf,

    /// Connection construction for `connection` and `metrizability`.
    #[arg(long, value_enum)]
    kind: Option<ConnectionKind>,

    /// Overrides every tolerance.
    #[arg(long)]
    tol: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Number of sample points.
    #[arg(long)]
    points: Option<usize>,

    /// Probe point `x1,..,xm,y1,..,yr`; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    probe: Vec<String>,

    #[arg(long)]
    dump_samples: bool,

    /// Write the report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,

    /// Worker threads for sample sweeps.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    ExitCode::from(run(args) as u8)
}

fn run(args: Args) -> i32 {
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return 2;
        }
    }
    let probes = match parse_probes(&args.probe) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: --probe: {e}");
            return 2;
        }
    };
    let opts = RunOptions {
        kind: args.kind,
        tol: args.tol,
        seed: args.seed,
        points: args.points,
        probes,
        dump_samples: args.dump_samples,
    };
    let result = load_config(&args.config)
        .map_err(RunError::from)
        .and_then(|cfg| run_command(args.command, cfg, &opts));
    let (report, code) = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let json = report.to_json();
    let written = match &args.output {
        Some(path) => std::fs::write(path, json),
        None => std::io::stdout().write_all(json.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return 2;
    }
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: {:e} > {:e}", c.name, c.value.0, c.tolerance.0);
    }
    code
}

/// Each `--probe` value is one comma-separated point.
fn parse_probes(raw: &[String]) -> Result<Vec<Vec<f64>>, String> {
    raw.iter()
        .map(|s| {
            s.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| format!("`{c}` in `{s}`: {e}")))
                .collect()
        })
        .collect()
}
