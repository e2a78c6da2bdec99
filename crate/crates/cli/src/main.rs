//! `divflow`: run one configured experiment and report pass/fail.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on usage,
//! configuration or I/O errors.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use divflow_cli::{ExperimentConfig, ExperimentKind, RunError};

#[derive(Parser)]
#[command(
    name = "divflow",
    version,
    about = "Numerical checks of divergence theorems on charted manifolds"
)]
struct Cli {
    /// Worker threads; reports do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Catalog of manifolds and fields.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
    /// Pointwise and orbitwise identities.
    Verify {
        what: VerifyKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Integrals over truncation ladders or regions.
    Integrate {
        what: IntegrateKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Decay, recurrence and integrability diagnostics.
    Diagnose {
        what: DiagnoseKind,
        #[command(flatten)]
        run: RunArgs,
    },
    /// φ-Laplacian checks.
    Potential {
        what: PotentialKind,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Subcommand)]
enum ZooAction {
    List {
        #[arg(long, value_enum, default_value_t = ListFormat::Text)]
        format: ListFormat,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ListFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyKind {
    FiberLemma,
    PathIntegral,
    Fubini,
}

#[derive(Clone, Copy, ValueEnum)]
enum IntegrateKind {
    Volume,
    Divergence,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagnoseKind {
    Karp,
    Cutoff,
    FxLadder,
    Decay,
    Recurrence,
    Hopf,
}

#[derive(Clone, Copy, ValueEnum)]
enum PotentialKind {
    Monotone,
    Laplacian,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Destination of the selected format; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Overrides the config manifold id.
    #[arg(long)]
    manifold: Option<String>,
    /// Overrides the config field id.
    #[arg(long)]
    field: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn execute(cli: Cli) -> Result<i32, RunError> {
    let (kind, args) = match cli.command {
        Command::Zoo {
            action: ZooAction::List { format },
        } => {
            let text = match format {
                ListFormat::Text => divflow_cli::zoo_listing(),
                ListFormat::Json => {
                    serde_json::to_string_pretty(&divflow::zoo::list_zoo())
                        .expect("catalog serializes")
                        + "\n"
                }
            };
            emit(None, &text)?;
            return Ok(divflow_cli::EXIT_PASS);
        }
        Command::Verify { what, run } => (
            match what {
                VerifyKind::FiberLemma => ExperimentKind::FiberLemma,
                VerifyKind::PathIntegral => ExperimentKind::PathIntegral,
                VerifyKind::Fubini => ExperimentKind::Fubini,
            },
            run,
        ),
        Command::Integrate { what, run } => (
            match what {
                IntegrateKind::Volume => ExperimentKind::Volume,
                IntegrateKind::Divergence => ExperimentKind::DivergenceIntegral,
            },
            run,
        ),
        Command::Diagnose { what, run } => (
            match what {
                DiagnoseKind::Karp => ExperimentKind::Karp,
                DiagnoseKind::Cutoff => ExperimentKind::Cutoff,
                DiagnoseKind::FxLadder => ExperimentKind::FxLadder,
                DiagnoseKind::Decay => ExperimentKind::Decay,
                DiagnoseKind::Recurrence => ExperimentKind::Recurrence,
                DiagnoseKind::Hopf => ExperimentKind::Hopf,
            },
            run,
        ),
        Command::Potential { what, run } => (
            match what {
                PotentialKind::Monotone => ExperimentKind::PotentialMonotone,
                PotentialKind::Laplacian => ExperimentKind::PotentialLaplacian,
            },
            run,
        ),
    };

    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    match cfg.experiment {
        Some(k) if k != kind => {
            return Err(RunError::Usage(format!(
                "config describes a `{}` experiment, not `{}`",
                k.name(),
                kind.name()
            )))
        }
        _ => cfg.experiment = Some(kind),
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.manifold.is_some() {
        cfg.manifold = args.manifold.clone();
    }
    if args.field.is_some() {
        cfg.field = args.field.clone();
    }

    let outcome = match cli.threads {
        Some(0) => return Err(RunError::Usage("--threads must be positive".into())),
        Some(n) => divflow_cli::run_with_threads(&cfg, n)?,
        None => divflow_cli::run(&cfg)?,
    };
    outcome.write_outputs(&cfg.output)?;
    let body = match args.format {
        Format::Json => outcome.report.to_json(),
        Format::Csv => outcome.csv_or_usage()?.to_string(),
    };
    emit(args.out.as_ref(), &body)?;

    let r = &outcome.report;
    eprintln!(
        "{} {} {}{} ({} checks){}",
        if r.passed { "PASS" } else { "FAIL" },
        kind.name(),
        r.manifold.as_deref().unwrap_or("-"),
        r.field
            .as_deref()
            .map(|f| format!("/{f}"))
            .unwrap_or_default(),
        r.checks.len(),
        r.error
            .as_deref()
            .map(|e| format!(": {e}"))
            .unwrap_or_default(),
    );
    Ok(outcome.exit_code())
}

fn emit(path: Option<&PathBuf>, body: &str) -> Result<(), RunError> {
    match path {
        Some(p) => std::fs::write(p, body).map_err(|source| RunError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| RunError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}
