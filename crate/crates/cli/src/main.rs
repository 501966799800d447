mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::Format;

/// Ballistic random walks in random environments.
#[derive(Debug, Parser)]
#[command(name = "rwre", version, arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Exit with status 3 when a verdict is inconclusive.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Master seed for environments and walks.
    #[arg(long, global = true, env = "RWRE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub constants: Constants,
}

/// Constants the construction leaves free.
#[derive(Debug, Clone, Copy, Args, Serialize)]
pub struct Constants {
    #[arg(long, global = true, default_value_t = 7.0)]
    pub c2: f64,
    #[arg(long, global = true, default_value_t = 2.0)]
    pub c3: f64,
    #[arg(long, global = true, default_value_t = 2.0)]
    pub c4: f64,
    #[arg(long, global = true, default_value_t = 1.0)]
    pub c15: f64,
    /// The constant `C` in the effective decay exponents.
    #[arg(long = "c-result", global = true, default_value_t = 1.0)]
    pub c_result: f64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Command {
    /// Monte Carlo back-exit probability from slabs.
    SimulateSlab(SlabArgs),
    /// Exact exit probabilities of one box in one environment.
    ExitExact(ExitArgs),
    /// The polynomial condition on `B_{l,L,L~}`.
    Polynomial(PolyArgs),
    /// Fit the decay exponent of the slab back-exit probability.
    FitGamma(FitArgs),
    /// The one-box effective criterion.
    EffectiveCriterion(CriterionArgs),
    /// The renormalization scales.
    Scales(ScaleArgs),
    /// The two growth conditions on the scales.
    CheckG(ScaleArgs),
    /// Propagate the bound on `phi_k` along the scales.
    PropagatePhi(PhiArgs),
    /// Effective decay exponents at `L` or along the scales.
    Gamma(GammaArgs),
    /// Intermediate scales for `L` and the refined bound in case two.
    CaseScales(CaseArgs),
    /// Tower arithmetic.
    Tower(TowerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Annealed,
    Quenched,
}

#[derive(Debug, Args, Serialize)]
pub struct SlabArgs {
    /// Environment law JSON file.
    #[arg(long)]
    pub law: PathBuf,
    /// Direction, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub l: Vec<f64>,
    /// Slab half-widths, comma separated.
    #[arg(long = "L", value_delimiter = ',', required = true)]
    #[serde(rename = "L")]
    pub big_l: Vec<f64>,
    #[arg(long, value_enum, default_value_t = Mode::Annealed)]
    pub mode: Mode,
    /// Walks in annealed mode.
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    /// Environments in quenched mode.
    #[arg(long, default_value_t = 100)]
    pub env_count: u64,
    /// Walks per environment in quenched mode.
    #[arg(long, default_value_t = 1000)]
    pub walks_per_env: u64,
    /// Step cap per walk (default `100 L^2`).
    #[arg(long)]
    pub cap: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Auto,
    Direct,
    Relaxation,
}

#[derive(Debug, Args, Serialize)]
pub struct ExitArgs {
    #[arg(long)]
    pub law: PathBuf,
    /// Box JSON file: `{"l":[1,0],"Lminus":..,"Lplus":..,"Ltilde":..}`.
    #[arg(long = "box")]
    #[serde(rename = "box")]
    pub box_file: PathBuf,
    /// Starting site (default: origin).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<i64>>,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
}

#[derive(Debug, Args, Serialize)]
pub struct PolyArgs {
    #[arg(long)]
    pub law: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub l: Vec<f64>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub big_l: f64,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: f64,
    /// Transverse half-widths to try (default `70 L^3`).
    #[arg(long, value_delimiter = ',')]
    pub ltilde: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub law: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub l: Vec<f64>,
    /// Increasing slab half-widths, at least three.
    #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
    pub grid: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub replicas: u64,
    /// Exponent the fitted interval is compared against.
    #[arg(long, default_value_t = 0.5)]
    pub gamma_min: f64,
    /// Tilt of the neighbouring directions in radians; 0 checks `l` only.
    #[arg(long, default_value_t = 0.05)]
    pub angle: f64,
    /// Explicit directions `a,b;c,d;...`, replacing the generated neighbourhood.
    #[arg(long, allow_hyphen_values = true)]
    pub directions: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct CriterionArgs {
    #[arg(long)]
    pub law: PathBuf,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub l: Vec<f64>,
    #[arg(long)]
    pub l0: f64,
    #[arg(long)]
    pub ltilde0: f64,
    /// Exponents `a` in (0, 1] (default 0.05, 0.1, ..., 1).
    #[arg(long, value_delimiter = ',')]
    pub a_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100)]
    pub env_count: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScaleArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub l0: f64,
    /// Default: `L0`.
    #[arg(long)]
    pub ltilde0: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub a0: f64,
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PhiArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scales: ScaleArgs,
    /// `phi_0` as a tower value (default `e^{-3(d-1)}`).
    #[arg(long, conflicts_with = "ln_phi0")]
    pub phi0: Option<String>,
    /// `ln phi_0`.
    #[arg(long, allow_hyphen_values = true)]
    pub ln_phi0: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GammaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scales: ScaleArgs,
    /// A single `L` (tower value, float or `a^b`); without it the report runs
    /// along `L_k` for `k` from `--kmin` to `--kmax`.
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub big_l: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub kmin: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct CaseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scales: ScaleArgs,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub big_l: String,
    /// Also follow the refined-bound chain (case two only).
    #[arg(long)]
    pub refined: bool,
    /// Upper bound of `ln phi_k` for the refined bound.
    #[arg(long, allow_hyphen_values = true)]
    pub ln_phi: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RoundingArg {
    Down,
    Nearest,
    Up,
}

#[derive(Debug, Args, Serialize)]
pub struct TowerArgs {
    #[arg(long, value_enum, default_value_t = RoundingArg::Nearest)]
    pub rounding: RoundingArg,
    #[command(subcommand)]
    pub op: TowerOp,
}

/// Operands accept `T(h;m)`, `1/T(h;m)`, plain floats and `a^b`.
#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase", tag = "op")]
pub enum TowerOp {
    #[command(allow_negative_numbers = true)]
    Pow { x: String, p: String },
    #[command(allow_negative_numbers = true)]
    Mul { x: String, y: String },
    #[command(allow_negative_numbers = true)]
    Div { x: String, y: String },
    #[command(allow_negative_numbers = true)]
    Add { x: String, y: String },
    #[command(allow_negative_numbers = true)]
    Sub { x: String, y: String },
    #[command(allow_negative_numbers = true)]
    Compare { x: String, y: String },
    #[command(allow_negative_numbers = true)]
    Ln { x: String },
    #[command(allow_negative_numbers = true)]
    Exp { x: String },
    #[command(allow_negative_numbers = true)]
    Sqrt { x: String },
    /// `log_base` applied `count` times.
    #[command(allow_negative_numbers = true)]
    Iterlog { x: String, base: f64, count: u32 },
    /// `f_n(x)` with `f_1(x) = 8^x`.
    F { n: u32, x: f64 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
