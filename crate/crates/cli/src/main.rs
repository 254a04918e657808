//! `wavesplat`: volume to Gaussian splats, end to end.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wavesplat::{Boundary, Filter, GainMode, SignMode};

use config::PipelineConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "wavesplat", version, about = "Convert volumes into Gaussian splat sets via wavelet transition banks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Build and store the transition bank for the volume's grid.
    Bank,
    /// Volume to one PLY (plus sidecar) per interval transfer function.
    Convert,
    /// Render direct-volume references over the camera rig.
    RenderRef {
        /// Restrict to one interval transfer function.
        #[arg(long)]
        mode: Option<usize>,
    },
    /// Compare splat renderings against references.
    Eval {
        /// Splat files to render together; defaults to the convert outputs.
        #[arg(long = "ply")]
        plys: Vec<PathBuf>,
        /// Directory of stored reference views; rendered on the fly when absent.
        #[arg(long)]
        refs: Option<PathBuf>,
    },
    /// Refine a splat file against direct-volume references.
    Finetune {
        #[arg(long)]
        ply: PathBuf,
        /// Fit the references of one interval transfer function.
        #[arg(long)]
        mode: Option<usize>,
    },
}

#[derive(Args)]
struct Overrides {
    /// TOML pipeline configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    volume: Option<PathBuf>,
    #[arg(long, global = true)]
    volume_meta: Option<PathBuf>,
    #[arg(long, global = true)]
    tf: Option<PathBuf>,
    #[arg(long, global = true)]
    tf_count: Option<usize>,
    #[arg(long, global = true)]
    levels: Option<usize>,
    #[arg(long, global = true, value_parser = parse_serde::<Filter>)]
    filter: Option<Filter>,
    #[arg(long, global = true, value_parser = parse_serde::<Boundary>)]
    boundary: Option<Boundary>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    #[arg(long, global = true)]
    ridge_lambda: Option<f64>,
    #[arg(long, global = true)]
    k_total: Option<usize>,
    #[arg(long, global = true)]
    energy_exp: Option<f64>,
    #[arg(long, global = true)]
    count_exp: Option<f64>,
    #[arg(long, global = true)]
    mad_multiplier: Option<f64>,
    #[arg(long, global = true)]
    gain_mode: Option<GainMode>,
    #[arg(long, global = true)]
    sign_mode: Option<SignMode>,
    #[arg(long, global = true)]
    rig_count: Option<usize>,
    #[arg(long, global = true)]
    rig_radius: Option<f64>,
    /// `WIDTHxHEIGHT`.
    #[arg(long, global = true, value_parser = parse_resolution)]
    resolution: Option<[usize; 2]>,
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    lambda_ssim: Option<f64>,
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_resolution(s: &str) -> Result<[usize; 2], String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    Ok([
        w.parse().map_err(|e| format!("width: {e}"))?,
        h.parse().map_err(|e| format!("height: {e}"))?,
    ])
}

macro_rules! apply {
    ($($flag:expr => $field:expr),* $(,)?) => {
        $(if let Some(v) = $flag.clone() { $field = v.into(); })*
    };
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        apply! {
            self.output_dir => c.output_dir,
            self.volume => c.volume.path,
            self.volume_meta => c.volume.meta,
            self.tf => c.tf.path,
            self.tf_count => c.tf.count,
            self.levels => c.wavelet.levels,
            self.filter => c.wavelet.filter,
            self.boundary => c.wavelet.boundary,
            self.tau => c.bank.tau,
            self.ridge_lambda => c.bank.ridge_lambda,
            self.k_total => c.sparsify.k_total,
            self.energy_exp => c.sparsify.energy_exp,
            self.count_exp => c.sparsify.count_exp,
            self.mad_multiplier => c.sparsify.mad_multiplier,
            self.gain_mode => c.construct.gain_mode,
            self.sign_mode => c.construct.sign_mode,
            self.rig_count => c.rig.count,
            self.rig_radius => c.rig.radius,
            self.resolution => c.rig.resolution,
            self.iters => c.finetune.iters,
            self.seed => c.finetune.seed,
            self.lambda_ssim => c.finetune.lambda_ssim,
        }
        Ok(c)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.overrides.resolve()?;
    if cli.overrides.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    cfg.validate()?;
    match &cli.command {
        Command::Bank => commands::bank(&cfg),
        Command::Convert => commands::convert(&cfg),
        Command::RenderRef { mode } => commands::render_ref(&cfg, *mode),
        Command::Eval { plys, refs } => commands::eval(&cfg, plys, refs.as_deref()),
        Command::Finetune { ply, mode } => commands::finetune(&cfg, ply, *mode),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
