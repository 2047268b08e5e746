use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "nv-odmr", version, about = "CW double-resonance ODMR simulator for NV-center AC magnetometry")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for grid evaluation and row fits.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Check map minima against the analytic branches.
    #[arg(long, global = true)]
    pub verify: bool,
    /// RF amplitude B_AC^z: a field ("35 nT") or a Rabi frequency γ_e·B ("1 MHz").
    /// Bare numbers are tesla.
    #[arg(long, global = true, value_name = "AMPLITUDE")]
    pub rf_amp: Option<String>,
    /// RF frequency ω_AC.
    #[arg(long, global = true, value_name = "FREQ")]
    pub rf_freq: Option<String>,
    /// Common decay rate Γ_b = Γ_d.
    #[arg(long, global = true, value_name = "FREQ")]
    pub gamma: Option<String>,
    /// Use the bare (D, E_x) instead of the second-order effective values.
    #[arg(long, global = true)]
    pub no_effective: bool,
    /// σ of seeded Gaussian noise added to simulated p0.
    #[arg(long, global = true, value_name = "SIGMA")]
    pub noise: Option<f64>,
    /// Skip SVG output.
    #[arg(long, global = true)]
    pub no_plot: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// 1D spectrum p0(ω_mw) at fixed ω_AC.
    Spectrum,
    /// 2D map p0(ω_AC, ω_mw).
    Map,
    /// Fit a spectrum CSV (dips), a map CSV (branches) or a sensitivity CSV (Γ).
    Fit {
        input: PathBuf,
        /// Detection noise level; defaults to the `noise_sigma` header entry.
        #[arg(long, value_name = "SIGMA")]
        sigma: Option<f64>,
    },
    /// Sensitivity over ω_AC under the fixed-frequency protocol.
    Sensitivity {
        /// Print and write only the JSON summary.
        #[arg(long)]
        summary_only: bool,
    },
    /// Same as `sensitivity --summary-only`.
    Bandwidth,
}
