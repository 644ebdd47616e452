use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use maxent_lab::config::{LabConfig, OutputFormat};
use maxent_lab::lab::run_subcommand;
use maxent_lab::LabError;

/// Numerical laboratory for maximal entropy measures of rational maps.
#[derive(Parser, Debug)]
#[command(name = "maxent-lab", version)]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON map registry; the shipped corpus by default.
    #[arg(long, global = true)]
    registry: Option<PathBuf>,
    #[arg(long, global = true)]
    map: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    depth: Option<usize>,
    #[arg(long, global = true)]
    burn_in: Option<usize>,
    #[arg(long, global = true)]
    r_min: Option<f64>,
    #[arg(long, global = true)]
    r_max: Option<f64>,
    #[arg(long, global = true)]
    period_cap: Option<usize>,
    /// Good-time horizon of the TCE density.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Cell width of the Julia grid.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// json or csv
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the maximal entropy measure and write the atom dump.
    Sample,
    /// Doubling-ratio scan.
    Doubling,
    /// Lower-bound exponent fit against the optimal exponent.
    Exponent,
    /// Periodic-orbit Lyapunov spectrum and uniform hyperbolicity check.
    Chiper,
    /// Semi-local degree scan.
    Semilocal,
    /// Good-time density.
    Tce,
    /// Pull-back diameter decay.
    Expshrink,
    /// Porosity, boundary porosity and uniform perfectness.
    Porosity,
    /// Carrot probe of the basin of infinity.
    Carrot,
    /// Run every analysis and write the classification report.
    Classify {
        /// Rebuild the report from existing dumps.
        #[arg(long)]
        from_dumps: bool,
    },
    /// Classify every registry map.
    Corpus {
        #[arg(long)]
        from_dumps: bool,
    },
}

impl Command {
    fn name(&self) -> (&'static str, bool) {
        match self {
            Command::Sample => ("sample", false),
            Command::Doubling => ("doubling", false),
            Command::Exponent => ("exponent", false),
            Command::Chiper => ("chiper", false),
            Command::Semilocal => ("semilocal", false),
            Command::Tce => ("tce", false),
            Command::Expshrink => ("expshrink", false),
            Command::Porosity => ("porosity", false),
            Command::Carrot => ("carrot", false),
            Command::Classify { from_dumps } => ("classify", *from_dumps),
            Command::Corpus { from_dumps } => ("corpus", *from_dumps),
        }
    }
}

fn config(flags: Flags) -> Result<LabConfig, LabError> {
    let mut c = match &flags.config {
        Some(p) => LabConfig::load(p)?,
        None => LabConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = flags.$field { c.$field = v; }
        )*};
    }
    set!(map, seed, chains, depth, burn_in, r_min, r_max, period_cap, horizon, resolution, out);
    if flags.registry.is_some() {
        c.registry = flags.registry;
    }
    if let Some(f) = flags.format {
        c.format = f.parse::<OutputFormat>()?;
    }
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, from_dumps) = cli.command.name();
    let result = config(cli.flags).and_then(|c| run_subcommand(name, &c, from_dumps));
    match result {
        Ok((summary, contradictions)) => {
            print!("{summary}");
            if !summary.ends_with('\n') {
                println!();
            }
            if contradictions > 0 {
                eprintln!("{contradictions} cross-check contradiction(s)");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
