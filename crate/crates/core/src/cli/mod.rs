//! Command-line front end: argument parsing, config merging and output.

mod config;
mod report;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

pub use config::*;
pub use report::{format_float, to_json, write_file, Cell, Table};
pub use run::*;

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "sobext", version, about = "Sobolev extension constants and Neumann heat-kernel diagnostics")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Write the CSV table here.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Focal radius, admissible tube radius, d/D profiles, distortion and norm bound.
    Constants(ConstantsArgs),
    /// Rolling-ball, curvature and injectivity checks of a domain.
    Regularity(DomainArgs),
    /// Rayleigh ratios of the extension operator on random fields.
    VerifyExtension(ExtensionArgs),
    /// Neumann heat-kernel diagnostics.
    Heat(HeatArgs),
    /// Runs the `sweep` section of the config.
    Sweep,
}

#[derive(Debug, Args)]
#[allow(non_snake_case)]
pub struct ConstantsArgs {
    #[arg(long = "K", allow_negative_numbers = true)]
    pub K: Option<f64>,
    #[arg(long = "H", allow_negative_numbers = true)]
    pub H: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Tube radius; defaults to the admissible radius.
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    /// Cutoff gradient bound: a number, `ball` or `smoothstep`.
    #[arg(long = "G")]
    pub G: Option<String>,
    /// Use the exact ratios of a flat ball of this radius.
    #[arg(long = "R0", allow_negative_numbers = true)]
    pub R0: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DomainArgs {
    /// `{"boundary": {...}, "surface": {...}}` inline or as a file path.
    #[arg(long)]
    pub domain: Option<String>,
    /// Surface JSON inline or as a file path.
    #[arg(long)]
    pub surface: Option<String>,
    /// Tube radius.
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
}

#[derive(Debug, Args)]
#[allow(non_snake_case)]
pub struct ExtensionArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub quad: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "G")]
    pub G: Option<String>,
}

#[derive(Debug, Args)]
pub struct HeatArgs {
    /// Domain JSON inline or as a file path; `interval` boundaries allowed.
    #[arg(long)]
    pub domain: Option<String>,
    /// Surface JSON inline or as a file path.
    #[arg(long)]
    pub surface: Option<String>,
    /// Grid resolution (angular nodes; radial nodes are half of it).
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Number of eigenmodes kept.
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub t_steps: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainJson {
    boundary: BoundaryConfig,
    #[serde(default)]
    surface: Option<SurfaceConfig>,
}

/// Inline JSON, or a path to a JSON file.
fn json_text(arg: &str) -> Result<String> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        std::fs::read_to_string(arg).map_err(|e| Error::Config(format!("cannot read `{arg}`: {e}")))
    }
}

fn apply_domain(cfg: &mut RunConfig, domain: &Option<String>, surface: &Option<String>) -> Result<()> {
    if let Some(d) = domain {
        let d: DomainJson = from_json(&json_text(d)?)?;
        cfg.boundary = Some(d.boundary);
        if let Some(s) = d.surface {
            cfg.surface = s;
        }
    }
    if let Some(s) = surface {
        cfg.surface = from_json(&json_text(s)?)?;
    }
    Ok(())
}

/// Merged, validated config and the task to run.
pub fn resolve(cli: &Cli) -> Result<(RunConfig, Task)> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            from_json::<RunConfig>(&text)?
        }
        None => RunConfig::default(),
    };
    let task = match &cli.command {
        Command::Constants(a) => {
            let c = &mut cfg.constants;
            if let Some(k) = a.K {
                c.K = k;
            }
            if a.H.is_some() {
                c.H = a.H;
            }
            if let Some(n) = a.n {
                c.n = n;
            }
            if a.R0.is_some() {
                c.R0 = a.R0;
            }
            if let Some(s) = a.steps {
                c.profile_steps = s;
            }
            if a.r.is_some() {
                cfg.r = a.r;
            }
            if let Some(g) = &a.G {
                cfg.G = CutoffChoice::parse(g)?;
            }
            Task::Single(SweepCommand::Constants)
        }
        Command::Regularity(a) => {
            apply_domain(&mut cfg, &a.domain, &a.surface)?;
            if a.r.is_some() {
                cfg.r = a.r;
            }
            Task::Single(SweepCommand::Regularity)
        }
        Command::VerifyExtension(a) => {
            apply_domain(&mut cfg, &a.domain.domain, &a.domain.surface)?;
            if a.domain.r.is_some() {
                cfg.r = a.domain.r;
            }
            if let Some(s) = a.samples {
                cfg.samples = s;
            }
            if let Some(q) = a.quad {
                cfg.quad = q;
            }
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(g) = &a.G {
                cfg.G = CutoffChoice::parse(g)?;
            }
            Task::Single(SweepCommand::VerifyExtension)
        }
        Command::Heat(a) => {
            apply_domain(&mut cfg, &a.domain, &a.surface)?;
            if let Some(n) = a.resolution {
                cfg.resolution = n;
            }
            let h = &mut cfg.heat;
            if let Some(m) = a.modes {
                h.modes = m;
            }
            if let Some(t) = a.t_min {
                h.t_min = t;
            }
            if a.t_max.is_some() {
                h.t_max = a.t_max;
            }
            if let Some(n) = a.t_steps {
                h.t_steps = n;
            }
            Task::Single(SweepCommand::Heat)
        }
        Command::Sweep => Task::Sweep,
    };
    if cli.report.is_some() {
        cfg.report = cli.report.clone();
    }
    if cli.csv.is_some() {
        cfg.csv = cli.csv.clone();
    }
    cfg.validate()?;
    Ok((cfg, task))
}

/// Writes the report (stdout when no path is set) and the CSV table.
pub fn emit(cfg: &RunConfig, outcome: &Outcome) -> Result<()> {
    let json = to_json(&outcome.report)?;
    match &cfg.report {
        Some(path) => write_file(path, &json)?,
        None => print!("{json}"),
    }
    if let (Some(path), Some(table)) = (&cfg.csv, &outcome.csv) {
        write_file(path, &table.render())?;
    }
    Ok(())
}

/// Caps the global thread pool at `FE_THREADS` when set.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("FE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("FE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Full command-line run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 2;
    }
    let (cfg, task) = match resolve(&cli) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let outcome = run(&cfg, task);
    if let Some(err) = &outcome.report.error {
        eprintln!("error: {err}");
    }
    if let Err(e) = emit(&cfg, &outcome) {
        eprintln!("error: {e}");
        return 2;
    }
    outcome.exit_code()
}
