use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use adaptive_rsgd::cli_io::commands::{cmd_check, cmd_compare, cmd_generate, cmd_run};
use adaptive_rsgd::cli_io::config::{Overrides, RunConfig, ScheduleMode};
use adaptive_rsgd::cli_io::data::SyntheticSpec;
use adaptive_rsgd::cli_io::plot::emit_plot;
use adaptive_rsgd::diagnostics::{format_reports, CheckKind, DiagnosticsConfig, Mutation};
use adaptive_rsgd::Error;

#[derive(Parser)]
#[command(
    name = "adaptive-rsgd",
    version,
    about = "Adaptive Riemannian SGD for regularized weighted low-rank approximation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Run several configs over one shared sample sequence.
    Compare {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Combined SVG with one curve per config.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Applied to every config.
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the numerical self-checks.
    Check {
        /// JSON diagnostics config; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Trials per check (0 passes vacuously).
        #[arg(long)]
        trials: Option<usize>,
        /// Restrict to these checks.
        #[arg(long, value_enum, value_delimiter = ',')]
        only: Vec<CheckArg>,
        /// Corrupt a formula on purpose; the matching check should fail.
        #[arg(long, value_enum)]
        mutation: Option<MutationArg>,
        /// Machine-readable JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a synthetic low-rank instance as data CSV.
    Generate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        rank: usize,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Round and clamp to an integer range, e.g. `1,5`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        rating_range: Option<Vec<i64>>,
        /// Largest singular value (default sqrt(m·n)).
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot F̂ against log10(t) from metrics files.
    Plot {
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct OverrideArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    kappa_fraction: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    schedule: Option<ModeArg>,
    /// Decay constant K of the deterministic schedule.
    #[arg(long = "K")]
    decay: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            data: a.data,
            k: a.k,
            lambda: a.lambda,
            kappa: a.kappa,
            kappa_fraction: a.kappa_fraction,
            alpha: a.alpha,
            epsilon: a.epsilon,
            mode: a.schedule.map(|m| match m {
                ModeArg::Adaptive => ScheduleMode::Adaptive,
                ModeArg::Deterministic => ScheduleMode::Deterministic,
            }),
            decay: a.decay,
            iterations: a.iterations,
            eval_every: a.eval_every,
            seed: a.seed,
            metrics: a.metrics,
            plot: a.plot,
            label: a.label,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adaptive,
    Deterministic,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckArg {
    GradientFd,
    Expectation,
    Hessian,
    Confinement,
    Retraction,
}

impl From<CheckArg> for CheckKind {
    fn from(c: CheckArg) -> Self {
        match c {
            CheckArg::GradientFd => CheckKind::GradientFd,
            CheckArg::Expectation => CheckKind::Expectation,
            CheckArg::Hessian => CheckKind::Hessian,
            CheckArg::Confinement => CheckKind::Confinement,
            CheckArg::Retraction => CheckKind::Retraction,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    FlipGradientX,
    InflateKappa,
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => fail(&e),
    }
}

fn execute(command: Command) -> adaptive_rsgd::Result<ExitCode> {
    match command {
        Command::Run { config, overrides } => {
            let mut cfg = RunConfig::load(&config)?;
            cfg.apply(&overrides.into());
            let s = cmd_run(&cfg)?;
            println!("{}", s.params.describe());
            print_summary(&s);
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            configs,
            plot,
            iterations,
            seed,
        } => {
            let overrides = Overrides {
                iterations,
                seed,
                ..Default::default()
            };
            let mut cfgs = Vec::with_capacity(configs.len());
            for path in &configs {
                let mut cfg = RunConfig::load(path)?;
                cfg.apply(&overrides);
                cfgs.push(cfg);
            }
            let outcome = cmd_compare(&cfgs, plot.as_deref())?;
            for (path, r) in configs.iter().zip(&outcome.results) {
                match r {
                    Ok(s) => print_summary(s),
                    Err(e) => eprintln!("{}: error: {e}", path.display()),
                }
            }
            if let Some(p) = &outcome.plot {
                println!("plot: {}", p.display());
            }
            Ok(ExitCode::from(outcome.exit_code() as u8))
        }
        Command::Check {
            config,
            seed,
            trials,
            only,
            mutation,
            report,
        } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)?;
                    serde_json::from_str(&text).map_err(|e| Error::Parse {
                        line: e.line(),
                        message: e.to_string(),
                    })?
                }
                None => DiagnosticsConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if trials.is_some() {
                cfg.trials = trials;
            }
            if !only.is_empty() {
                cfg.checks = only.into_iter().map(CheckKind::from).collect();
            }
            if let Some(m) = mutation {
                cfg.mutation = Some(match m {
                    MutationArg::FlipGradientX => Mutation::FlipGradientX,
                    MutationArg::InflateKappa => Mutation::InflateKappa,
                });
            }
            let outcome = cmd_check(&cfg, report.as_deref())?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", format_reports(&outcome.reports));
            if outcome.all_pass() {
                Ok(ExitCode::SUCCESS)
            } else {
                for r in outcome.reports.iter().filter(|r| !r.pass) {
                    if let Some(w) = &r.worst {
                        eprintln!("{} failed; reproduce with {w}", r.name);
                    }
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Generate {
            m,
            n,
            rank,
            fraction,
            noise,
            rating_range,
            scale,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                m,
                n,
                true_rank: rank,
                observed_fraction: fraction,
                noise_std: noise,
                rating_range: rating_range.map(|r| (r[0], r[1])),
                scale,
                seed,
            };
            let count = cmd_generate(&spec, &out)?;
            println!("wrote {count} entries to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot { out, metrics } => {
            let paths: Vec<&std::path::Path> = metrics.iter().map(PathBuf::as_path).collect();
            emit_plot(&paths, &out)?;
            println!("plot: {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_summary(s: &adaptive_rsgd::cli_io::commands::RunSummary) {
    let fmt = |c: Option<f64>| c.map(|v| format!("{v:e}")).unwrap_or_else(|| "-".into());
    println!(
        "{}: {} steps, F̂ {} -> {}, metrics {}",
        s.label,
        s.records.len().saturating_sub(1),
        fmt(s.first_cost()),
        fmt(s.last_cost()),
        s.metrics.display()
    );
}
