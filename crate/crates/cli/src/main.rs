use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hedonic_cli::commands::{
    cmd_compare, cmd_diagnose, cmd_fit, cmd_predict, cmd_simulate, CompareArgs, DiagnoseArgs, FitArgs, PredictArgs,
    SimulateArgs,
};

#[derive(Parser)]
#[command(name = "hedonic", version, about = "Fit, compare and diagnose hedonic price models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write coefficients, criteria, the model and residual plots.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// e.g. "UP ~ SZ + cs(LAT, df=10) | sigma: ST"
        #[arg(long)]
        formula: String,
        /// NO, LOGNO, GA, IG or WEI.
        #[arg(long)]
        family: String,
        #[arg(long)]
        mu_link: Option<String>,
        #[arg(long)]
        sigma_link: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Convergence tolerance on the global deviance per observation.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Fit and rank the models listed in a JSON comparison file.
    Compare {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        spec: PathBuf,
        /// Also write the comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Residual diagnostics for a saved model.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Variable or log(variable) whose quantile bins get separate worm plots.
        #[arg(long)]
        worm_by: Option<String>,
        #[arg(long, default_value_t = 4)]
        bins: usize,
    },
    /// Generate a synthetic land-lot data set.
    Simulate {
        #[arg(long, env = "HEDONIC_SEED", default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        n: usize,
        /// Generator parameters as JSON; the built-in truth when omitted.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict mu or sigma for new data from a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        which: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            data,
            formula,
            family,
            mu_link,
            sigma_link,
            out,
            tol,
            max_iter,
        } => cmd_fit(&FitArgs {
            data,
            formula,
            family,
            mu_link,
            sigma_link,
            out,
            tol,
            max_iter,
        }),
        Command::Compare { data, spec, out } => cmd_compare(&CompareArgs { data, spec, out }),
        Command::Diagnose {
            model,
            data,
            out,
            worm_by,
            bins,
        } => cmd_diagnose(&DiagnoseArgs {
            model,
            data,
            out,
            worm_by,
            bins,
        }),
        Command::Simulate { seed, n, truth, out } => cmd_simulate(&SimulateArgs { seed, n, truth, out }),
        Command::Predict {
            model,
            data,
            which,
            out,
        } => cmd_predict(&PredictArgs {
            model,
            data,
            which,
            out,
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
