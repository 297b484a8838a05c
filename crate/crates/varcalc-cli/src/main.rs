//! `varcalc` — command-line workbench for variational problems on curved
//! charts: energies, Euler–Lagrange and natural-boundary residuals, the
//! rotationally symmetric entropy profile, critical-point classification,
//! and geodesic cross-checks.
//!
//! Exit codes: 0 on success, 1 when the numerics or output fail at runtime,
//! 2 for configuration mistakes (bad flags, malformed or mismatched config
//! documents, unknown names, out-of-range knobs).

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};

use config::CommonArgs;

#[derive(Parser)]
#[command(
    name = "varcalc",
    version,
    about = "Numerical workbench for variational problems on curved charts",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate functional energies: constant-level scans or field tables.
    Energy(CommonArgs),
    /// Euler–Lagrange residuals on an interior lattice, or natural-boundary
    /// residuals along the faces of a flat box.
    Residual(CommonArgs),
    /// Integrate the rotationally symmetric entropy profile and report the
    /// blow-up parameter and the √2 crossing.
    #[command(name = "perelman-profile")]
    PerelmanProfile(CommonArgs),
    /// Classify a critical point of the entropy functional (JSON report).
    Classify(CommonArgs),
    /// Closed-form or shot geodesics with length, planarity, defect, and
    /// residual diagnostics.
    Geodesic(CommonArgs),
    /// Run the built-in verification battery plus the CLI contract checks.
    #[command(name = "verify-all")]
    VerifyAll,
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Energy(args) => commands::energy(args),
        Command::Residual(args) => commands::residual(args),
        Command::PerelmanProfile(args) => commands::perelman_profile(args),
        Command::Classify(args) => commands::classify(args),
        Command::Geodesic(args) => commands::geodesic(args),
        Command::VerifyAll => commands::verify_all(),
    };
    if let Err(e) = result {
        eprintln!("varcalc: {}: {}", e.kind(), e.message());
        std::process::exit(e.exit_code());
    }
}
