use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use deepspline::lipschitz::Exponent;
use deepspline::network::OuterNorm;
use deepspline_cli::{
    cmd_certify, cmd_compare, cmd_sweep, cmd_train, parse_values, CertifyOptions, CliResult,
    Failure, SweepParam,
};

/// Train and certify networks with learnable linear-spline activations.
#[derive(Parser)]
#[command(name = "deepspline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network; writes model.json, history.csv and report.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print certified Lipschitz bounds of a model and check them against sampled
    /// difference quotients.
    Certify {
        /// Model file written by `train`.
        model: PathBuf,
        /// Topology exponent: 1, 2 or inf. Repeat for several reports.
        #[arg(long = "p", value_parser = parse_exponent, default_values = ["2"])]
        ps: Vec<Exponent>,
        /// Outer norm of the Euclidean bound: l1 or l2.
        #[arg(long, default_value = "l1", value_parser = parse_outer)]
        outer: OuterNorm,
        /// Certify the network with its output sigmoid (false: the logit).
        #[arg(long, default_value_t = true, action = ArgAction::Set)]
        include_sigmoid: bool,
        /// Sampled pairs for the empirical check.
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write certify.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train once per value of lambda or K; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `lambda` or `K`.
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values, at least two.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Baseline activations against spline activations, and l1 against l2 outer
    /// norms; writes compare.csv.
    Compare {
        /// Base hyper-parameters (defaults if omitted).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_exponent(s: &str) -> Result<Exponent, String> {
    s.parse().map_err(|e: deepspline::Error| e.to_string())
}

fn parse_outer(s: &str) -> Result<OuterNorm, String> {
    s.parse().map_err(|e: deepspline::Error| e.to_string())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let r = cmd_train(&config, &out, seed)?;
            println!(
                "test error {:.2}%, train error {:.2}%, {} parameters, {} nonzero coefficients, \
                 Lipschitz bound {:.4} (empirical {:.4})",
                r.test_error,
                r.train_error,
                r.param_count,
                r.nnz_coeffs,
                r.bound_euclidean.bound,
                r.empirical_lipschitz
            );
        }
        Command::Certify {
            model,
            ps,
            outer,
            include_sigmoid,
            pairs,
            seed,
            out,
        } => {
            let opts = CertifyOptions {
                ps,
                outer,
                include_sigmoid,
                pairs,
                seed,
            };
            cmd_certify(&model, &opts, out.as_deref())?;
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
            seed,
        } => {
            let values = parse_values(&values)?;
            let rows = cmd_sweep(&config, param, &values, &out, seed)?;
            print!("{}", deepspline_cli::sweep_csv(&rows));
        }
        Command::Compare { config, out, seed } => {
            let rows = cmd_compare(config.as_deref(), &out, seed)?;
            print!("{}", deepspline_cli::compare_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, message }) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
