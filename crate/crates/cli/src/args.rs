use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

/// Quantum process tomography with mutually unbiased bases.
#[derive(Debug, Parser)]
#[command(name = "mubqpt", version)]
pub struct Cli {
    /// JSON object with values for the subcommand's flags, keyed by flag
    /// name without the leading dashes, e.g. {"dim": 4, "mu-end": 0.1}.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, verify and cost MUB sets.
    #[command(subcommand)]
    Mub(MubCommand),
    /// Apply or check Kraus channels.
    #[command(subcommand)]
    Channel(ChannelCommand),
    /// Simulate a tomography run and reconstruct the process matrix.
    #[command(subcommand)]
    Qpt(QptCommand),
    /// Fidelity sweep over the noise strength.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum MubCommand {
    /// Write the maximal MUB set for a prime-power dimension as JSON.
    Gen(MubGenArgs),
    /// Check orthonormality and unbiasedness of a basis file.
    Verify(MubVerifyArgs),
    /// CNOT-count accounting for a MUB set.
    Complexity(MubComplexityArgs),
}

#[derive(Debug, Subcommand)]
pub enum ChannelCommand {
    /// Apply a channel to a density matrix read from a matrix JSON file.
    Apply(ChannelApplyArgs),
    /// Report trace preservation and unitality of a Kraus file.
    Check(ChannelCheckArgs),
}

#[derive(Debug, Subcommand)]
pub enum QptCommand {
    /// Simulate tomography data for a channel and reconstruct chi.
    Run(QptRunArgs),
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MubGenArgs {
    /// Hilbert-space dimension (a prime power).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MubVerifyArgs {
    /// Basis file to check.
    #[arg(long = "in", value_name = "FILE")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Absolute tolerance on the overlap table [default: 1e-10].
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MubComplexityArgs {
    /// Hilbert-space dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Comma-separated CNOT counts, one per basis. Defaults to a heuristic
    /// that charges (subsystems - 1) to every non-factorizable basis.
    #[arg(long, value_name = "A,B,...")]
    pub c_alpha: Option<String>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ChannelApplyArgs {
    /// Channel name or spec: id, dep, ad, bpf, cnot, optionally with :param.
    #[arg(long)]
    pub channel: Option<String>,
    /// Channel parameter; overrides one given in the spec.
    #[arg(long)]
    pub param: Option<f64>,
    /// Density matrix in matrix JSON form.
    #[arg(long, value_name = "FILE")]
    pub state: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ChannelCheckArgs {
    /// Kraus file to check.
    #[arg(long = "in", value_name = "FILE")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QptRunArgs {
    /// Hilbert-space dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Channel name or spec: id, dep, ad, bpf, cnot, optionally with :param.
    #[arg(long)]
    pub channel: Option<String>,
    /// Channel parameter; overrides one given in the spec.
    #[arg(long)]
    pub param: Option<f64>,
    /// Noise strength in [0, 1] [default: 0].
    #[arg(long)]
    pub mu: Option<f64>,
    /// Seed for the noise stream [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Apply physical refinement to each reconstructed chi.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true, value_name = "BOOL")]
    pub refine: Option<bool>,
    /// Penalty weight on the trace-preservation term [default: 10].
    #[arg(long)]
    pub penalty_weight: Option<f64>,
    /// Iteration cap for refinement [default: 5000].
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Where to write the reconstructed chi.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Where to write the (noisy) probability tensor.
    #[arg(long, value_name = "FILE")]
    pub save_probabilities: Option<PathBuf>,
}

#[derive(Debug, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SweepArgs {
    /// Hilbert-space dimension [default: 4].
    #[arg(long)]
    pub dim: Option<usize>,
    /// Comma-separated channel specs [default: dep:0.1,ad:0.4,cnot].
    #[arg(long)]
    pub channels: Option<String>,
    /// First noise strength [default: 0.01].
    #[arg(long)]
    pub mu_start: Option<f64>,
    /// Last noise strength, inclusive [default: 0.15].
    #[arg(long)]
    pub mu_end: Option<f64>,
    /// Grid step [default: 0.01].
    #[arg(long)]
    pub mu_step: Option<f64>,
    /// Trials per (mu, channel) [default: 100].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Apply physical refinement to each reconstructed chi.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", require_equals = true, value_name = "BOOL")]
    pub refine: Option<bool>,
    /// Penalty weight on the trace-preservation term [default: 10].
    #[arg(long)]
    pub penalty_weight: Option<f64>,
    /// Iteration cap for refinement [default: 5000].
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Output file. CSV also writes aggregates to <stem>.agg.csv. Per-trial
    /// CSV goes to standard output when omitted.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// csv or json; inferred from the --out extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
}

/// Fills every unset field from `file`.
pub trait Merge {
    fn merge(self, file: Self) -> Self;
}

macro_rules! impl_merge {
    ($ty:ty { $($field:ident),* }) => {
        impl Merge for $ty {
            fn merge(self, file: Self) -> Self {
                Self {
                    $($field: self.$field.or(file.$field),)*
                }
            }
        }
    };
}

impl_merge!(MubGenArgs { dim, out });
impl_merge!(MubVerifyArgs { input, tol });
impl_merge!(MubComplexityArgs { dim, c_alpha });
impl_merge!(ChannelApplyArgs {
    channel,
    param,
    state,
    out
});
impl_merge!(ChannelCheckArgs { input });
impl_merge!(QptRunArgs {
    dim,
    channel,
    param,
    mu,
    seed,
    refine,
    penalty_weight,
    max_iterations,
    out,
    save_probabilities
});
impl_merge!(SweepArgs {
    dim,
    channels,
    mu_start,
    mu_end,
    mu_step,
    trials,
    seed,
    refine,
    penalty_weight,
    max_iterations,
    out,
    format
});
