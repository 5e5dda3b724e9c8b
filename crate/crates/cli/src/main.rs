mod emit;
mod figures;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use darkband_core::exec::with_workers;
use darkband_core::{Error, Exec};
use serde_json::json;

use emit::Outputs;
use figures::Figure;
use params::{bad, ConfigError, Params};

#[derive(Parser)]
#[command(name = "darkband", version, about = "Loschmidt echo, caustics and dark-band rates of the fully connected transverse-field Ising model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute one figure's data set and write its CSV files plus manifest.json.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(value_enum)]
    figure: Figure,
    /// Flat `key = value` file, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any parameter as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    j: Option<String>,
    #[arg(long = "n-atoms")]
    n_atoms: Option<String>,
    #[arg(long = "omega-over-g")]
    omega_over_g: Option<String>,
    /// Initial Fock state `m`, or `auto` for the one nearest 0.6 j.
    #[arg(long, allow_hyphen_values = true)]
    m0: Option<String>,
    #[arg(long = "t-max")]
    t_max: Option<String>,
    #[arg(long = "t-steps")]
    t_steps: Option<String>,
    #[arg(long = "eta-steps")]
    eta_steps: Option<String>,
    /// `per-j` or `per-N`.
    #[arg(long)]
    norm: Option<String>,
    /// Flip the sign of the interaction term.
    #[arg(long = "legacy-sign")]
    legacy_sign: bool,
    /// Worker threads; 0 uses all cores, 1 runs sequentially.
    #[arg(long)]
    workers: Option<String>,
    #[arg(long = "out-dir")]
    out_dir: Option<String>,
    /// Refractive index (rainbow).
    #[arg(long)]
    n: Option<String>,
}

impl RunArgs {
    fn params(&self) -> Result<Params> {
        let mut p = Params::with_defaults(&self.figure.defaults());
        if let Some(path) = &self.config {
            p.load(path)?;
        }
        let flags = [
            ("j", &self.j),
            ("n-atoms", &self.n_atoms),
            ("omega-over-g", &self.omega_over_g),
            ("m0", &self.m0),
            ("t-max", &self.t_max),
            ("t-steps", &self.t_steps),
            ("eta-steps", &self.eta_steps),
            ("norm", &self.norm),
            ("workers", &self.workers),
            ("out-dir", &self.out_dir),
            ("n", &self.n),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                p.set_flag(key, v)?;
            }
        }
        if self.legacy_sign {
            p.set_flag("legacy-sign", "true")?;
        }
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                return bad(format!("--set expects KEY=VALUE, got `{kv}`"));
            };
            p.set_flag(k.trim(), v)?;
        }
        Ok(p)
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let start = Instant::now();
    let p = args.params()?;
    let workers = p.count("workers", 0)?;
    let exec = if workers == 1 { Exec::Sequential } else { Exec::Parallel };
    let dir = PathBuf::from(p.str("out-dir"));
    let mut out = Outputs::new(&dir)?;
    with_workers(workers, || args.figure.run(&p, exec, &mut out))??;
    let manifest = json!({
        "subcommand": args.figure.name(),
        "parameters": p.resolved(),
        "out_dir": dir.display().to_string(),
        "version": env!("CARGO_PKG_VERSION"),
        "duration_s": start.elapsed().as_secs_f64(),
        "files": out.files,
    });
    out.manifest(&manifest)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(Error::Numeric(_)) => 3,
        Some(Error::Resource(_)) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run(args) = &cli.command;
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
