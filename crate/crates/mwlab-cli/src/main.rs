//! `mwlab`: config-driven experiments over the mwlab-core library.
//!
//! Usage: `mwlab <subcommand> --config <path> [--out <dir>]`. Each run
//! writes `<subcommand>.csv` and a `<subcommand>.json` sidecar into the
//! output directory; re-running the same config reproduces both byte for
//! byte. `MWLAB_THREADS` caps the data-parallel thread count.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mwlab", version, about = "Matrix-weighted harmonic analysis experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing. Defaults to the current dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Muckenhoupt, mixed, and Fujii-Wilson constants over a cube window.
    Constants(RunArgs),
    /// Growth-dimension estimates from concentric dilations.
    Dimension(RunArgs),
    /// Reducing operators with comparability certificates, cube by cube.
    Reduce(RunArgs),
    /// Reverse Holder ratios over an exponent grid.
    Rhi(RunArgs),
    /// Distribution-set fractions behind the mixed constant.
    Badset(RunArgs),
    /// Strong-doubling bounds for a reducing family.
    Doubling(RunArgs),
    /// Sequence-space norm of a stored or random coefficient field.
    Seqnorm(RunArgs),
    /// Pointwise-versus-averaged norm equivalence sweeps.
    Equiv(RunArgs),
    /// Almost-diagonal boundedness thresholds.
    AdopThresholds(RunArgs),
    /// Empirical kernel boundedness over growing windows.
    AdopProbe(RunArgs),
    /// Divergence probes at the sharpness boundary.
    AdopSharpness(RunArgs),
    /// Analysis-synthesis round trip on random band-limited functions.
    Calderon(RunArgs),
    /// Shifted-lattice sampling error for band-limited functions.
    Sampling(RunArgs),
    /// One-sample-per-cube reconstruction via the contractive residual.
    GenericSampling(RunArgs),
}

impl Cmd {
    fn split(&self) -> (&'static str, &RunArgs) {
        match self {
            Cmd::Constants(a) => ("constants", a),
            Cmd::Dimension(a) => ("dimension", a),
            Cmd::Reduce(a) => ("reduce", a),
            Cmd::Rhi(a) => ("rhi", a),
            Cmd::Badset(a) => ("badset", a),
            Cmd::Doubling(a) => ("doubling", a),
            Cmd::Seqnorm(a) => ("seqnorm", a),
            Cmd::Equiv(a) => ("equiv", a),
            Cmd::AdopThresholds(a) => ("adop-thresholds", a),
            Cmd::AdopProbe(a) => ("adop-probe", a),
            Cmd::AdopSharpness(a) => ("adop-sharpness", a),
            Cmd::Calderon(a) => ("calderon", a),
            Cmd::Sampling(a) => ("sampling", a),
            Cmd::GenericSampling(a) => ("generic-sampling", a),
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MWLAB_THREADS") {
        let threads: usize = v.parse().context("MWLAB_THREADS must be a positive integer")?;
        if threads == 0 {
            bail!("MWLAB_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("thread pool")?;
    }
    Ok(())
}

fn run() -> Result<()> {
    init_threads()?;
    let cli = Cli::parse();
    let (name, args) = cli.command.split();
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let raw: toml::Value = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", args.config.display()))?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    mwlab_cli::run::dispatch(name, &raw, &out)
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
