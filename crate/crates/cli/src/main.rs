use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rigidlim_cli::commands::{parse_point, run, CliError, Command, Options, EXIT_OK, EXIT_USAGE};
use rigidlim_cli::report::write_atomic;

/// Limit sets of conformal iterated function systems: validation,
/// dimension, measure, distortion and tangent-plane rigidity.
#[derive(Debug, Parser)]
#[command(name = "rigidlim", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Worker threads; overrides RIGIDLIM_THREADS.
    #[arg(long, global = true, env = "RIGIDLIM_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// System config (JSON).
    config: PathBuf,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file: the report JSON, or the point cloud for `sample`
    /// (`.ply` selects PLY), or the weight CSV for `measure`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check the standing conditions and the conjugation gate.
    Validate(Common),
    /// Bracket the Hausdorff dimension.
    Dimension(Common),
    /// Emit cylinder representatives with conformal weights.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Conformal weights, the conformal identity and the Ahlfors lower bound.
    Measure(Common),
    /// Distortion constants and ball inclusions.
    Distortion {
        #[command(flatten)]
        common: Common,
        /// Ball-inclusion trials.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Weak tangent ratios at a point.
    Tangent {
        #[command(flatten)]
        common: Common,
        /// Comma-separated coordinates, e.g. "0,0".
        #[arg(long, value_parser = parse_point_arg, allow_hyphen_values = true)]
        point: Option<PointArg>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Classify the limit set as tangential or spread.
    Rigidity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        l: Option<usize>,
        /// δ of the spread witness.
        #[arg(long)]
        delta: Option<f64>,
        /// ϱ of the spread witness.
        #[arg(long)]
        rho: Option<f64>,
    },
}

#[derive(Debug, Clone)]
struct PointArg(Vec<f64>);

fn parse_point_arg(s: &str) -> Result<PointArg, String> {
    parse_point(s).map(PointArg)
}

fn base(c: Common) -> (PathBuf, Options) {
    (
        c.config,
        Options {
            depth: c.depth,
            tol: c.tol,
            seed: c.seed,
            out: c.out,
            ..Options::default()
        },
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let (command, (path, opts)) = match cli.command {
        Cmd::Validate(c) => (Command::Validate, base(c)),
        Cmd::Dimension(c) => (Command::Dimension, base(c)),
        Cmd::Measure(c) => (Command::Measure, base(c)),
        Cmd::Sample { common, count } => {
            let (p, o) = base(common);
            (Command::Sample, (p, Options { count, ..o }))
        }
        Cmd::Distortion { common, count } => {
            let (p, o) = base(common);
            (Command::Distortion, (p, Options { count, ..o }))
        }
        Cmd::Tangent { common, point, l, delta } => {
            let (p, o) = base(common);
            let point = point.map(|p| p.0);
            (Command::Tangent, (p, Options { point, l, delta, ..o }))
        }
        Cmd::Rigidity { common, l, delta, rho } => {
            let (p, o) = base(common);
            (Command::Rigidity, (p, Options { l, delta, rho, ..o }))
        }
    };
    match execute(command, &path, &opts) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: Command, path: &std::path::Path, opts: &Options) -> Result<u8, CliError> {
    let outcome = run(command, path, opts)?;
    for (file, bytes) in &outcome.files {
        write_atomic(file, bytes)?;
    }
    let report_json = outcome.report.to_json();
    let mut stdout = std::io::stdout().lock();
    let writes_report_to_file = opts.out.is_some() && !matches!(command, Command::Sample | Command::Measure);
    if writes_report_to_file {
        write_atomic(opts.out.as_ref().expect("checked"), report_json.as_bytes())?;
    } else if let Some(bytes) = &outcome.stdout {
        stdout.write_all(bytes).map_err(anyhow::Error::from)?;
    } else {
        stdout.write_all(report_json.as_bytes()).map_err(anyhow::Error::from)?;
    }
    Ok(outcome.exit)
}
