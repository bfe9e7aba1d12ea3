use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use nls4_lab::{output_dir, parse_spec, run, Kind, RunOptions};

/// Run one experiment described by a JSON or TOML spec.
#[derive(Parser, Debug)]
#[command(name = "4nls-lab", version, about)]
struct Cli {
    /// Experiment kind, e.g. `evolve` or `bilinear-fit`.
    kind: String,
    /// Spec file (`.toml` or JSON); a previous `report.json` also works.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory [default: $NLS4_LAB_OUT/<kind>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the spec file's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    threads: Option<usize>,
    /// Reject unknown keys instead of warning.
    #[arg(long)]
    strict: bool,
    /// Keep both envelopes at maximal separation (illposed-separation).
    #[arg(long)]
    emit_snapshots: bool,
    /// No progress lines on stderr.
    #[arg(long, short)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind: Kind = match cli.kind.parse() {
        Ok(k) => k,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let spec = match parse_spec(&cli.spec, Some(kind), cli.strict) {
        Ok(s) => s.with_overrides(cli.seed, cli.emit_snapshots),
        Err(e) => {
            eprint!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    let out = output_dir(cli.out.as_deref(), &spec);
    let opts = RunOptions {
        threads: cli.threads,
        strict: cli.strict,
        progress: !cli.quiet,
    };
    let doc = match run(&spec, &out, &opts) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", out.display());
            return ExitCode::from(2);
        }
    };
    println!("{} {}", kind, doc.status());
    for c in &doc.result.checks {
        println!("  {c}");
    }
    if let Some(e) = &doc.result.error {
        println!("  error: {e}");
    }
    println!("  report: {}", out.join("report.json").display());
    ExitCode::from(doc.status().exit_code() as u8)
}
