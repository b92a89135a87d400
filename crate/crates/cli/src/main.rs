use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pkslab::commands::{
    cmd_evolve, cmd_lambda1, cmd_rate, cmd_steady, cmd_sweep, parse_norm, parse_window, DilationChoice, Lambda1Args,
    RateArgs, SweepArgs,
};
use pkslab::config::RunConfig;
use pkslab::manifest::TerminalStatus;
use pkslab::validate::{run_suite, Mutation};
use pkslab::{CliError, Result, EXIT_NUMERICAL, EXIT_SUPERCRITICAL};

#[derive(Parser)]
#[command(name = "pkslab", version, about = "Steady states, spectra and evolution runs for the degenerate chemotaxis model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the steady profile U_1 and print A and M.
    Steady {
        #[arg(long = "N")]
        dim: u32,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = "steady")]
        out: PathBuf,
    },
    /// Hardy constant lambda_1(a) and its eigenfunction.
    Lambda1 {
        #[arg(long = "N")]
        dim: u32,
        /// Boundary mass; the dilation solves U_1(a) = m.
        #[arg(long, conflicts_with_all = ["a", "a_grid"])]
        m: Option<f64>,
        /// Dilation a directly.
        #[arg(long, conflicts_with = "a_grid")]
        a: Option<f64>,
        /// lo:hi:step, as fractions of A.
        #[arg(long)]
        a_grid: Option<String>,
        #[arg(long, default_value_t = 2048)]
        n: usize,
        /// Node grading toward x = 0 (1 is uniform).
        #[arg(long, default_value_t = 4.0)]
        grading: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value = "lambda1")]
        out: PathBuf,
    },
    /// Evolve one initial datum and store series.csv, snapshots and a manifest.
    Evolve {
        #[command(flatten)]
        run: RunArgs,
        /// Exit with code 4 if supercritical growth is detected.
        #[arg(long)]
        expect_subcritical: bool,
    },
    /// Fit decay rates to a stored series.csv and write ratefit.json.
    Rate {
        run_dir: PathBuf,
        /// Override N from the run manifest.
        #[arg(long = "N")]
        dim: Option<u32>,
        /// Override m from the run manifest.
        #[arg(long)]
        m: Option<f64>,
        /// Norm recorded in ratefit.json (L or C1).
        #[arg(long, default_value = "L")]
        norm: String,
        /// Fit window t0:t1; by default chosen from the data.
        #[arg(long)]
        window: Option<String>,
        /// Grid for the lambda_1 comparator.
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 4.0)]
        grading: f64,
    },
    /// Evolve runs over a list of values of one config key, in parallel.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Config key to vary.
        #[arg(long)]
        key: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Run the invariant suite on small grids.
    Validate {
        /// Inject a known defect (pencil-sign | boundary-leak).
        #[arg(long, hide = true)]
        inject: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "N")]
    dim: Option<u32>,
    #[arg(long)]
    m: Option<f64>,
    /// linear | power:<p> | steady-perturbed:<eps>
    #[arg(long)]
    u0: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    grading: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// imex | explicit
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    snapshot_interval: Option<f64>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set")]
    set: Vec<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags: [(&str, Option<String>); 11] = [
            ("N", self.dim.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("u0", self.u0.clone()),
            ("n", self.n.map(|v| v.to_string())),
            ("grading", self.grading.map(|v| v.to_string())),
            ("dt", self.dt.map(|v| v.to_string())),
            ("t_end", self.t_end.map(|v| v.to_string())),
            ("scheme", self.scheme.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("snapshot_interval", self.snapshot_interval.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{kv}'")))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<u8> {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match cli.command {
        Command::Steady { dim, tol, out } => {
            cmd_steady(dim, tol, &out, &mut w)?;
            Ok(0)
        }
        Command::Lambda1 { dim, m, a, a_grid, n, grading, tol, out } => {
            let choice = match (m, a, a_grid) {
                (Some(m), None, None) => DilationChoice::Mass(m),
                (None, Some(a), None) => DilationChoice::Direct(a),
                (None, None, Some(g)) => DilationChoice::parse_grid(&g)?,
                _ => return Err(CliError::Config("give exactly one of --m, --a, --a-grid".into())),
            };
            cmd_lambda1(&Lambda1Args { dim, choice, n, grading, tol, out }, &mut w)?;
            Ok(0)
        }
        Command::Evolve { run, expect_subcritical } => {
            let report = cmd_evolve(&run.resolve()?, &mut w)?;
            Ok(match report.status {
                TerminalStatus::Completed => 0,
                TerminalStatus::SupercriticalDetected if expect_subcritical => EXIT_SUPERCRITICAL,
                TerminalStatus::SupercriticalDetected => 0,
                TerminalStatus::Unstable => EXIT_NUMERICAL,
            })
        }
        Command::Rate { run_dir, dim, m, norm, window, n, grading } => {
            let args = RateArgs {
                run_dir,
                dim,
                m,
                norm: parse_norm(&norm)?,
                window: window.as_deref().map(parse_window).transpose()?,
                n,
                grading,
            };
            cmd_rate(&args, &mut w)?;
            Ok(0)
        }
        Command::Sweep { run, key, values, workers } => {
            let base = run.resolve()?;
            let out = base.out.clone();
            let rows = cmd_sweep(&SweepArgs { base, key, values, workers, out }, &mut w)?;
            Ok(rows
                .iter()
                .filter_map(|r| r.outcome.as_ref().err().map(|e| e.exit_code()))
                .max()
                .unwrap_or(0))
        }
        Command::Validate { inject } => {
            let mutation = inject.as_deref().map(str::parse::<Mutation>).transpose()?;
            let groups = run_suite(mutation)?;
            let mut failed = Vec::new();
            for g in &groups {
                let label = if g.pass { "PASS" } else { "FAIL" };
                writeln!(w, "{label} {}: {}", g.name, g.detail).map_err(|e| CliError::io("<stdout>", e))?;
                if !g.pass {
                    failed.push(g.name);
                }
            }
            if failed.is_empty() {
                Ok(0)
            } else {
                Err(CliError::Validation(format!("failing groups: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
