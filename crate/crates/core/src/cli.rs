//! Command-line interface.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::controller::Variant;
use crate::io::OutputFormat;

#[derive(Debug, Parser)]
#[command(name = "platoon", version, about = "Platoon lane-change simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its trajectory log.
    Run(RunArgs),
    /// List the available scenario presets.
    List,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Scenario preset: cutin, fdec, bacc or ffdec.
    #[arg(value_parser = ["cutin", "fdec", "bacc", "ffdec"])]
    pub scenario: String,
    /// Controller variant.
    #[arg(long, value_parser = parse_variant, default_value = "clf-cbf-qp")]
    pub controller: Variant,
    /// Output file; defaults to `<scenario>_<controller>.<format>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parameter overrides (dotted keys, TOML syntax).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    pub format: OutputFormat,
    /// Simulated time in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Also write plot series into this directory.
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
}

/// A fully resolved run request.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub scenario: String,
    pub variant: Variant,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub format: OutputFormat,
    pub duration: Option<f64>,
    pub plot_dir: Option<PathBuf>,
}

impl From<RunArgs> for RunRequest {
    fn from(a: RunArgs) -> Self {
        let ext = match a.format {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        };
        let out = a
            .out
            .unwrap_or_else(|| PathBuf::from(format!("{}_{}.{ext}", a.scenario, a.controller)));
        Self {
            scenario: a.scenario,
            variant: a.controller,
            out,
            config: a.config,
            format: a.format,
            duration: a.duration,
            plot_dir: a.plot_dir,
        }
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse()
}

/// Parse `argv` (including the program name).
pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
}
