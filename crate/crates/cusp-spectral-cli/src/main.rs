use clap::{Args, Parser, Subcommand};
use cusp_spectral_cli::config::{BranchName, C};
use cusp_spectral_cli::{output, run, CliError, Command, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

/// Experiment runner for cusp-spectral. Worker count: `CUSP_WORKERS`.
#[derive(Parser)]
#[command(name = "cusp-spectral", version)]
struct Cli {
    /// TOML config (a manifest from an earlier run also works).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Indicial root table.
    Roots(RootsArgs),
    /// Pairings of an eigendistribution with test functions.
    Eigendist(EigendistArgs),
    /// Contour resolvent and shift identities.
    Resolvent(ResolventArgs),
    /// Hadamard residues, closed form against contour.
    Residue(ResidueArgs),
    /// Escape-function certificate.
    Escape(EscapeArgs),
    /// Trajectory dump with conservation checks.
    Flow(FlowArgs),
    /// Correlation function and Laplace probe.
    Correlate(CorrelateArgs),
    /// Runs the command named in the config.
    Run,
}

#[derive(Args)]
struct RootsArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    /// `re` or `re,im`.
    #[arg(long, allow_hyphen_values = true)]
    s: Option<C>,
    #[arg(long, allow_hyphen_values = true)]
    shift: Option<C>,
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args)]
struct EigendistArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<C>,
    #[arg(long)]
    branch: Option<String>,
    /// Comma-separated multi-index.
    #[arg(long, value_delimiter = ',')]
    exponents: Option<Vec<usize>>,
}

#[derive(Args)]
struct ResolventArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    s: Option<C>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rhos: Option<Vec<f64>>,
}

#[derive(Args)]
struct ResidueArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    j_max: Option<usize>,
}

#[derive(Args)]
struct EscapeArgs {
    #[arg(long)]
    n_alpha: Option<usize>,
    #[arg(long)]
    n_lat: Option<usize>,
    #[arg(long)]
    n_lon: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct CorrelateArgs {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn load(cli: Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("reading {}: {e}", p.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    set(&mut cfg.output_dir, cli.out);
    set(&mut cfg.seed, cli.seed);
    let named = match cli.command {
        Sub::Run => None,
        Sub::Roots(a) => {
            let c = &mut cfg.roots;
            set(&mut c.d, a.d);
            set(&mut c.h, a.h);
            set(&mut c.s, a.s);
            set(&mut c.shift, a.shift);
            set(&mut c.n_max, a.n_max);
            Some(Command::Roots)
        }
        Sub::Eigendist(a) => {
            let c = &mut cfg.eigendist;
            set(&mut c.d, a.d);
            set(&mut c.h, a.h);
            set(&mut c.lambda, a.lambda);
            set(&mut c.exponents, a.exponents);
            if let Some(b) = a.branch {
                c.branch = match b.as_str() {
                    "plus" => BranchName::Plus,
                    "minus" => BranchName::Minus,
                    _ => return Err(CliError::Validation(format!("branch must be plus or minus, got {b:?}"))),
                };
            }
            Some(Command::Eigendist)
        }
        Sub::Resolvent(a) => {
            let c = &mut cfg.resolvent;
            set(&mut c.d, a.d);
            set(&mut c.h, a.h);
            set(&mut c.s, a.s);
            set(&mut c.rhos, a.rhos);
            Some(Command::Resolvent)
        }
        Sub::Residue(a) => {
            let c = &mut cfg.residue;
            set(&mut c.d, a.d);
            set(&mut c.h, a.h);
            set(&mut c.j_max, a.j_max);
            if let Some(d) = a.d {
                if c.exponents.len() != d {
                    c.exponents = std::iter::once(1).chain(std::iter::repeat(0)).take(d).collect();
                }
            }
            Some(Command::Residue)
        }
        Sub::Escape(a) => {
            let c = &mut cfg.escape;
            set(&mut c.n_alpha, a.n_alpha);
            set(&mut c.n_lat, a.n_lat);
            set(&mut c.n_lon, a.n_lon);
            set(&mut c.epsilon, a.epsilon);
            set(&mut c.samples, a.samples);
            Some(Command::Escape)
        }
        Sub::Flow(a) => {
            let c = &mut cfg.flow;
            set(&mut c.d, a.d);
            set(&mut c.points, a.points);
            set(&mut c.t_max, a.t_max);
            set(&mut c.dt, a.dt);
            Some(Command::Flow)
        }
        Sub::Correlate(a) => {
            let c = &mut cfg.correlate;
            set(&mut c.samples, a.samples);
            set(&mut c.t_max, a.t_max);
            set(&mut c.dt, a.dt);
            Some(Command::Correlate)
        }
    };
    match (named, cfg.command) {
        (Some(n), Some(c)) if n != c => {
            return Err(CliError::Validation(format!("subcommand {n} does not match the config command {c}")));
        }
        (Some(n), _) => cfg.command = Some(n),
        (None, None) => return Err(CliError::Validation("`run` needs a config with a command".into())),
        (None, Some(_)) => {}
    }
    cfg.manifest = None;
    Ok(cfg)
}

fn workers() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("CUSP_WORKERS") {
        let n: usize = v.parse().map_err(|_| CliError::Validation(format!("CUSP_WORKERS must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::Validation("CUSP_WORKERS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    workers()?;
    let cfg = load(cli)?;
    let report = run::execute(&cfg)?;
    for p in output::write_run(&cfg, &report)? {
        println!("{}", p.display());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Tolerance(report.failures().join("; ")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            eprintln!("{}", CliError::Validation(e.to_string()).diagnostic());
            return ExitCode::from(2);
        }
        Err(e) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
