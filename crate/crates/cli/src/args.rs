use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "stabledrift", version, about = "Stable-driven SDE toolkit: sampling, densities, resolvents, Monte Carlo checks")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Output directory; created only after the configuration validates.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Root seed; every component derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Also write gnuplot-ready two-column `.dat` files.
    #[arg(long, global = true)]
    pub emit_plot_data: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw increments Z_t of the driving noise.
    Sample(SampleArgs),
    /// Density of Z_t on a grid by Fourier inversion.
    Density(DensityArgs),
    /// Apply the nonlocal generator to a test function at given points.
    Generator(GeneratorArgs),
    /// Solve the resolvent equation with a variable drift.
    Resolve(ResolveArgs),
    /// Monte Carlo checks with a pass/fail verdict (exit 3 on failure).
    Verify(VerifyArgs),
    /// Operator-ratio and kernel probes.
    Probe(ProbeArgs),
    /// Re-run a previous invocation from its manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    ExactRay,
    Decomposition,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Spectral measure JSON.
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "exact-ray")]
    pub scheme: SchemeArg,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Points per axis (default 4096 in d=1, 256 in d=2).
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid spacing (default: coarsest spacing resolving the density at t).
    #[arg(long)]
    pub spacing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    /// Location shift, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub shift: Option<Vec<f64>>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct GeneratorArgs {
    #[arg(long)]
    pub measure: PathBuf,
    /// `gaussian:WIDTH[@c1,c2]` or `trig:w1,w2`.
    #[arg(long, default_value = "gaussian:1")]
    pub phi: String,
    /// Evaluation point `x1,x2`; repeat for several.
    #[arg(long = "at", required = true)]
    pub at: Vec<String>,
    /// Add the drift term b·Dφ (same syntax as `resolve --drift`).
    #[arg(long)]
    pub drift: Option<String>,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Built-in drift (`tanh01`, `sin02`, `zero`, `constant:a,b`, `tanh:A[:S]`,
    /// `sin:A[:S]`, `ramp:A[:W]`) or a tabulated drift `.json` file.
    #[arg(long, default_value = "zero")]
    pub drift: String,
    /// Source term, same syntax as `generator --phi`; must decay inside the grid.
    #[arg(long, default_value = "gaussian:1")]
    pub source: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub check: VerifyCheck,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Test function or source (see `generator --phi`).
    #[arg(long, default_value = "gaussian:1")]
    pub phi: String,
    /// Martingale checkpoints; multiples of twice the step.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1")]
    pub checkpoints: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyCheck {
    /// Mean of φ(X_t) − φ(X_0) − ∫(L+b·D)φ(X_s)ds is zero.
    Martingale,
    /// Laws agree across seeds, step halving and sampling schemes.
    WeakUniqueness,
    /// Monte Carlo resolvent against the Neumann solution at x0.
    Resolvent,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, default_value = "zero")]
    pub drift: String,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Starting point (default: origin).
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "exact-ray")]
    pub scheme: SchemeArg,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(value_enum)]
    pub probe: ProbeKind,
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, default_value = "zero")]
    pub drift: String,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Number of random sources.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Spike widths for `spike` and `krylov`.
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.2,0.1,0.04")]
    pub widths: Vec<f64>,
    /// Pair distances for `deviation`.
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1,1")]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 4.0)]
    pub k: f64,
    #[arg(long, default_value_t = 20_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProbeKind {
    /// Non-degeneracy constant κ.
    Kappa,
    /// ‖𝓡f‖/‖f‖ over random sources.
    Remainder,
    /// Gradient multiplier supremum against κ.
    Multiplier,
    /// Proxy resolvent of shrinking spikes.
    Spike,
    /// Monte Carlo resolvent of shrinking spikes.
    Krylov,
    /// Deviation integral over pair distances.
    Deviation,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
}
