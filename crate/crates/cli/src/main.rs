//! `panelflutter` command line front-end.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "panelflutter", version, about = "Nonlinear panel flutter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to `output.dir` of the config, then `.`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cap on worker threads (overridden by PANELFLUTTER_JOBS).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the plate and write timeseries, snapshots and a summary.
    Simulate(Common),
    /// Spectrum of the plate linearized about the flat state.
    Eigen {
        #[command(flatten)]
        common: Common,
        /// Number of eigenvalues to write (all if omitted).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Locate the flutter speed by bisection on the leading growth rate.
    FlutterSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        umin: f64,
        #[arg(long)]
        umax: f64,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Number of points of the max-Re diagnostic table `sweep.csv`.
        #[arg(long, default_value_t = 33)]
        points: usize,
    },
    /// Equilibrium branch by natural-parameter continuation.
    Equilibria {
        #[command(flatten)]
        common: Common,
        /// Continuation parameter: `lambda` (radial F0), `p0` (sine load amplitude) or `U`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Amplitude of the bump added to a flat guess to leave the trivial branch.
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
    },
    /// Simulate and report the energy identity and dissipation integral.
    EnergyAudit(Common),
    /// Decay ratio of the delayed potential over a list of Mach numbers.
    Qbound {
        #[command(flatten)]
        common: Common,
        /// Comma-separated Mach numbers, e.g. `2,4,8`.
        #[arg(long, value_delimiter = ',')]
        ulist: Vec<f64>,
    },
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>, String> {
    match std::env::var("PANELFLUTTER_JOBS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| format!("PANELFLUTTER_JOBS must be a positive integer, got {v:?}")),
        Err(_) => Ok(flag),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Simulate(c) | Command::EnergyAudit(c) => c,
        Command::Eigen { common, .. }
        | Command::FlutterSweep { common, .. }
        | Command::Equilibria { common, .. }
        | Command::Qbound { common, .. } => common,
    };
    match thread_count(common.jobs) {
        Ok(Some(0)) => {
            eprintln!("error: job count must be at least 1");
            return ExitCode::from(1);
        }
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("error: cannot configure thread pool: {e}");
                return ExitCode::from(1);
            }
        }
        Ok(None) => {}
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Eigen { common, count } => commands::eigen(common, *count),
        Command::FlutterSweep {
            common,
            umin,
            umax,
            tol,
            points,
        } => commands::flutter_sweep(common, *umin, *umax, *tol, *points),
        Command::Equilibria {
            common,
            param,
            from,
            to,
            steps,
            perturb,
        } => commands::equilibria(common, param, *from, *to, *steps, *perturb),
        Command::EnergyAudit(c) => commands::energy_audit(c),
        Command::Qbound { common, ulist } => commands::qbound(common, ulist),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
