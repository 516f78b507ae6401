use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Verification and simulation workflows for the doubly characteristic wave SPDE.
///
/// Every option can also be set through an environment variable `DCSPDE_<NAME>`
/// or in the TOML file given by `--config`; flags take precedence over the
/// environment, which takes precedence over the file.
#[derive(Debug, Parser)]
#[command(name = "dcspde", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML file with `[measure]`, `[point]`, `[grid]` and `[run]` sections.
    #[arg(long, global = true, env = "DCSPDE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "DCSPDE_OUT")]
    pub out: Option<PathBuf>,

    /// Worker threads (defaults to all cores); results do not depend on it.
    #[arg(long, global = true, env = "DCSPDE_THREADS")]
    pub threads: Option<usize>,

    #[arg(long, global = true, env = "DCSPDE_TOL")]
    pub tol: Option<f64>,

    #[arg(long, global = true, env = "DCSPDE_SEED")]
    pub seed: Option<u64>,

    #[arg(long, global = true, env = "DCSPDE_SAMPLES")]
    pub samples: Option<usize>,

    #[arg(long, global = true, value_enum, env = "DCSPDE_MEASURE")]
    pub measure: Option<MeasureKind>,

    /// Riesz exponent.
    #[arg(long, global = true, env = "DCSPDE_BETA")]
    pub beta: Option<f64>,

    /// Gaussian length scale.
    #[arg(long, global = true, env = "DCSPDE_ELL")]
    pub ell: Option<f64>,

    /// CSV with `radius,density` columns for `--measure table`.
    #[arg(long, global = true, env = "DCSPDE_TABLE")]
    pub table: Option<PathBuf>,

    #[arg(long, global = true, env = "DCSPDE_T", allow_negative_numbers = true)]
    pub t: Option<f64>,

    #[arg(long, global = true, env = "DCSPDE_X1", allow_negative_numbers = true)]
    pub x1: Option<f64>,

    #[arg(long, global = true, env = "DCSPDE_X2", allow_negative_numbers = true)]
    pub x2: Option<f64>,

    /// Time step of the noise grid.
    #[arg(long, global = true, env = "DCSPDE_DT")]
    pub dt: Option<f64>,

    #[arg(long, global = true, env = "DCSPDE_T_STEPS")]
    pub t_steps: Option<usize>,

    /// Half-width `X` of the periodic box `[−X, X]²`.
    #[arg(long, global = true, env = "DCSPDE_X_EXTENT")]
    pub x_extent: Option<f64>,

    /// Lattice modes per axis.
    #[arg(long, global = true, env = "DCSPDE_N_MODES")]
    pub n_modes: Option<usize>,

    #[arg(long, global = true, env = "DCSPDE_N_CELLS")]
    pub n_cells: Option<usize>,

    /// Compare the fresh outputs with the manifest already in `--out`.
    #[arg(long, global = true, env = "DCSPDE_VERIFY_MANIFEST")]
    pub verify_manifest: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Riesz,
    Gaussian,
    White,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    X1,
    X2,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Γ(t, x₁, y₁, x₂) on an (x₁, x₂) grid.
    Gamma(GammaArgs),
    /// Weak fundamental-solution identity over the oracle suite.
    WeakCheck,
    /// Bessel and direct forms of FΓ on a seeded random grid.
    FourierCheck(FourierCheckArgs),
    /// Decay-exponent fits and the dominance sweep.
    Bounds(BoundsArgs),
    /// Admissibility and Dalang integrals of the measure.
    Admissibility,
    /// Monte Carlo samples of u at one point.
    Simulate(SimulateArgs),
    /// L² increments along halving sequences.
    Continuity(ContinuityArgs),
    /// Monte Carlo check of the noise covariance.
    CovarianceCheck,
}

#[derive(Debug, Clone, Args)]
pub struct GammaArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub y1: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x1_min: f64,
    #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
    pub x1_max: f64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub x2_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub x2_max: f64,
    /// Nodes per axis.
    #[arg(long, default_value_t = 41)]
    pub n: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FourierCheckArgs {
    /// Largest admissible disagreement.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    /// Refit the constants on the default grid instead of loading the shipped ones.
    #[arg(long)]
    pub calibrate: bool,
    /// Points in the dominance sweep.
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Frequencies per decay fit.
    #[arg(long, default_value_t = 41)]
    pub fit_nodes: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Also compare the sample variance with the spectral norm integral.
    #[arg(long)]
    pub isometry: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ContinuityArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Axis::Time, Axis::X1, Axis::X2])]
    pub axes: Vec<Axis>,
    /// Increment sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05, 0.025])]
    pub deltas: Vec<f64>,
    /// Add common-random-number Monte Carlo estimates on the noise grid.
    #[arg(long)]
    pub mc: bool,
}
