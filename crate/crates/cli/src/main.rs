use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dgasm::dyadic::DyadicFamily;
use dgasm::experiment::{run_sweep, scenario_degrees, scenario_mesh, to_csv, to_json, Discretization, ExperimentConfig};

#[derive(Parser)]
#[command(name = "dgasm", version, about = "Condition-number experiments for auxiliary-space DG preconditioners")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatrixKind {
    /// Interior penalty matrix on the broken space.
    Dg,
    /// Stiffness matrix on the conforming space.
    Cg,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a configuration key, e.g. `--set beta1=0.2`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Lanczos start-vector seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, String> {
        let text = std::fs::read_to_string(&self.config).map_err(|e| format!("{}: {e}", self.config.display()))?;
        let mut sets = self.sets.clone();
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        ExperimentConfig::from_json(&text).and_then(|c| c.with_overrides(&sets)).map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every grid point of a configuration and emit one row per point.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Worker threads; all cores when absent.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the dyadic partition of [-1, 1] for degree `p`, one `numerator level` pair per breakpoint.
    Dyadic {
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 1.2)]
        alpha: f64,
    },
    /// Write an assembled matrix of a configuration in MatrixMarket format.
    Matrix {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Base degree; defaults to the first of `p_values`.
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, value_enum, default_value = "dg")]
        kind: MatrixKind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_out(out: Option<&PathBuf>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Run { cfg, out, format, threads } => {
            let cfg = cfg.load()?;
            let rows = run_sweep(&cfg, threads).map_err(|e| e.to_string())?;
            let text = match format {
                Format::Csv => to_csv(&rows),
                Format::Json => to_json(&rows).map_err(|e| e.to_string())?,
            };
            write_out(out.as_ref(), &text)?;
            let mut ok = true;
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("p={} beta1={} rho1={}: {}", r.p, r.beta1, r.rho1, r.error.as_deref().unwrap_or_default());
                ok = false;
            }
            Ok(ok)
        }
        Command::Dyadic { p, alpha } => {
            let fam = DyadicFamily::build(p, alpha).map_err(|e| e.to_string())?;
            print!("{}", fam.get(p).map_err(|e| e.to_string())?.dump());
            Ok(true)
        }
        Command::Matrix { cfg, p, kind, out } => {
            let cfg = cfg.load()?;
            let p = p.or_else(|| cfg.p_values.first().copied()).or_else(|| cfg.degree_table.first().copied()).ok_or("no degree given")?;
            let disc = scenario_degrees(&cfg, p)
                .and_then(|d| scenario_mesh(&d))
                .and_then(|m| Discretization::new(m, cfg.gamma))
                .map_err(|e| e.to_string())?;
            let m = match kind {
                MatrixKind::Dg => &disc.a,
                MatrixKind::Cg => &disc.a1,
            };
            m.write_matrix_market(&out).map_err(|e| e.to_string())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
