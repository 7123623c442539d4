use clap::Parser;

use inertia_cli::commands::{
    run_check, run_curve, run_export, run_identify, run_realize, run_simulate, CheckArgs,
    CurveArgs, ExportArgs, IdentifyArgs, RealizeArgs, SimulateArgs,
};

/// Physically consistent inertial parameter identification for fixed-base
/// kinematic trees.
///
/// Outputs are machine-readable JSON/CSV; human summaries go to stderr.
/// Set INERTIA_LOG=quiet to silence them. Fields of an --options file
/// override the corresponding flags.
#[derive(Parser)]
#[command(name = "inertia", version, about)]
enum Cli {
    /// Identify inertial and friction parameters from a trajectory log.
    Identify(IdentifyArgs),
    /// Check parameters against the physical-consistency conditions.
    Check(CheckArgs),
    /// Realize consistent parameters as four point masses.
    Realize(RealizeArgs),
    /// Generate a synthetic dataset from ground-truth parameters.
    Simulate(SimulateArgs),
    /// Learning-curve experiment across constraint levels and sizes.
    Curve(CurveArgs),
    /// Export the identification problem in the conic text format.
    ExportSdp(ExportArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success; everything
            // else is a usage error (exit 1).
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli {
        Cli::Identify(args) => run_identify(args),
        Cli::Check(args) => run_check(args),
        Cli::Realize(args) => run_realize(args),
        Cli::Simulate(args) => run_simulate(args),
        Cli::Curve(args) => run_curve(args),
        Cli::ExportSdp(args) => run_export(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
