//! `levelling` command-line tool.

mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Alternating midrange levelling, exact LP errors, bolts and diagnostics
/// on finite partitioned domains.
#[derive(Parser)]
#[command(name = "levelling", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a lattice domain and write it as JSON.
    Gen(GenArgs),
    /// Run levelling and write the iteration log and final state.
    Run(RunArgs),
    /// Exact error of approximation with optimal components and certificate.
    Oracle(OracleArgs),
    /// Bolt queries.
    #[command(subcommand)]
    Bolts(BoltsCommand),
    /// Resolution sweeps and single-instance diagnostics.
    #[command(subcommand)]
    Diagnose(DiagnoseCommand),
    /// Level a field over several resolutions and chart the results.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// A domain from a file or from a region generator.
#[derive(Args, Clone)]
pub struct DomainArgs {
    /// Domain JSON file.
    #[arg(long, conflicts_with = "region")]
    pub domain: Option<PathBuf>,
    /// Region name (rectangle, lshape_K1, union_ncu, triangle_abc,
    /// convex_polygon, product_grid).
    #[arg(long)]
    pub region: Option<String>,
    /// Comma-separated region parameters.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<f64>,
    /// Lattice resolution N (points at step 1/N).
    #[arg(long)]
    pub res: Option<u32>,
}

/// A field from a file or from an expression in the point coordinates.
#[derive(Args, Clone)]
pub struct FieldArgs {
    /// Field file: JSON array or CSV `id,value`.
    #[arg(long, conflicts_with = "expr")]
    pub field: Option<PathBuf>,
    /// Expression such as `x*y` or `max(x, y) - 0.5*z`.
    #[arg(long)]
    pub expr: Option<String>,
}

#[derive(Args, Clone)]
pub struct StopArgs {
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    #[arg(long, default_value_t = 100_000)]
    pub max_steps: usize,
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long)]
    pub region: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub res: u32,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub field: FieldArgs,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Factor order, repeated cyclically (default 0,1,…,n−1).
    #[arg(long, value_delimiter = ',')]
    pub schedule: Vec<usize>,
    /// Extract a bolt lower bound from the residual every K steps (0: never).
    #[arg(long, default_value_t = 0)]
    pub lower_bound_every: usize,
    /// Iteration log file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Final state JSON file.
    #[arg(long)]
    pub state: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[command(flatten)]
    pub field: FieldArgs,
    /// Use every factor of the domain rather than the first two.
    #[arg(long)]
    pub all_factors: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum BoltsCommand {
    /// Best certified lower bound on the error from closed bolts.
    LowerBound {
        #[command(flatten)]
        domain: DomainArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[command(flatten)]
        stop: StopArgs,
        /// Enumerate closed bolts up to this length on small domains.
        #[arg(long, default_value_t = 8)]
        enum_len: usize,
        /// Enumerate only on domains with at most this many points.
        #[arg(long, default_value_t = 16)]
        enum_max_points: usize,
        /// Write the witness bolt JSON here.
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Shortest bolt between two points.
    Shortest {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bolts up to a length.
    Enumerate {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        /// Closed bolts only, one per rotation/reversal class.
        #[arg(long)]
        closed: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Longest shortest bolt over pairs of non-isolated points.
    IrreducibleMax {
        #[command(flatten)]
        domain: DomainArgs,
        #[arg(long, default_value_t = 128)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

/// Region sweep inputs shared by the resolution diagnostics.
#[derive(Args, Clone)]
pub struct SweepRegionArgs {
    #[arg(long)]
    pub region: String,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Vec<f64>,
    /// Comma-separated resolutions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub res: Vec<u32>,
}

#[derive(Subcommand)]
pub enum DiagnoseCommand {
    /// Jumps of per-class max/min functions across resolutions.
    Cproperty {
        #[command(flatten)]
        region: SweepRegionArgs,
        #[arg(long)]
        expr: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Maximum irreducible bolt length across resolutions.
    Medvedev {
        #[command(flatten)]
        region: SweepRegionArgs,
        #[arg(long, default_value_t = 128)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Empirical decomposition constant from the levelling corrections.
    Kconst {
        #[command(flatten)]
        region: SweepRegionArgs,
        #[arg(long)]
        expr: String,
        #[command(flatten)]
        stop: StopArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Midrange averaging inequality between two factor-0 classes.
    Slices {
        #[command(flatten)]
        domain: DomainArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        a: usize,
        #[arg(long)]
        b: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cyclic levelling over all factors against the exact n-factor error.
    Multifactor {
        /// Single instance; without it, seeded random three-factor instances.
        #[command(flatten)]
        domain: DomainArgs,
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[command(flatten)]
        stop: StopArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub region: SweepRegionArgs,
    #[arg(long)]
    pub expr: String,
    #[command(flatten)]
    pub stop: StopArgs,
    /// Irreducible-length cap.
    #[arg(long, default_value_t = 128)]
    pub cap: usize,
    /// Metric charted against resolution with `--format svg`.
    #[arg(long, default_value = "terminal_norm")]
    pub metric: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also chart norm against step for every resolution.
    #[arg(long)]
    pub norm_chart: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
