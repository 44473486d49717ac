//! Command surface tying preprocessing, training, generation and evaluation
//! into reproducible runs. Every command that produces artifacts writes a
//! [`RunManifest`] into its output directory.

pub mod commands;
pub mod error;
pub mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use petct_core::report::TemplateDictionary;
use petct_core::{load_config, ConfigSet, Execution};

pub use error::{CliError, CliResult, EXIT_CONFIG, EXIT_DATA, EXIT_EXTRACTION, EXIT_OK, EXIT_OTHER, EXIT_USAGE};
pub use manifest::{RunManifest, MANIFEST_FILE};

#[derive(Debug, Parser)]
#[command(name = "petct", version, about = "Whole-body PET/CT report generation toolkit")]
pub struct Cli {
    /// TOML config; missing sections take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory of per-center template files (defaults to the built-in set).
    #[arg(long, global = true)]
    pub templates: Option<PathBuf>,
    /// Run batch loops on the calling thread only.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic raw cases.
    Synth(commands::synth::SynthArgs),
    /// SUV/HU conversion, resampling and cropping of raw cases.
    Prep(commands::prep::PrepArgs),
    /// Turn prepared cases into four regional cases each.
    SplitRegions(commands::regions::SplitRegionsArgs),
    /// Chronological patient-grouped train/val/test split.
    SplitDataset(commands::split::SplitDatasetArgs),
    /// Pretrain (or load) the base decoder and train the adapters.
    Train(commands::train::TrainArgs),
    /// Write one generated findings text per case.
    Generate(commands::generate::GenerateArgs),
    /// Score generated reports against references.
    Evaluate(commands::evaluate::EvaluateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Prep(_) => "prep",
            Command::SplitRegions(_) => "split-regions",
            Command::SplitDataset(_) => "split-dataset",
            Command::Train(_) => "train",
            Command::Generate(_) => "generate",
            Command::Evaluate(_) => "evaluate",
        }
    }

    fn out_dir(&self) -> &Path {
        match self {
            Command::Synth(a) => &a.out,
            Command::Prep(a) => &a.out,
            Command::SplitRegions(a) => &a.out,
            Command::SplitDataset(a) => &a.out,
            Command::Train(a) => &a.out,
            Command::Generate(a) => &a.out,
            Command::Evaluate(a) => &a.out,
        }
    }
}

/// Shared state handed to every command.
pub struct Context {
    pub config: ConfigSet,
    pub templates: TemplateDictionary,
    pub exec: Execution,
    pub manifest: RunManifest,
}

fn load_inputs(cli: &Cli) -> CliResult<(ConfigSet, TemplateDictionary)> {
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => ConfigSet::default(),
    };
    let templates = match &cli.templates {
        Some(d) => TemplateDictionary::load_dir(d).map_err(|e| CliError::Data(e.to_string()))?,
        None => TemplateDictionary::fixtures(),
    };
    Ok((config, templates))
}

fn dispatch(cli: &Cli, ctx: &mut Context) -> CliResult<()> {
    match &cli.command {
        Command::Synth(a) => commands::synth::run(a, ctx),
        Command::Prep(a) => commands::prep::run(a, ctx),
        Command::SplitRegions(a) => commands::regions::run(a, ctx),
        Command::SplitDataset(a) => commands::split::run(a, ctx),
        Command::Train(a) => commands::train::run(a, ctx),
        Command::Generate(a) => commands::generate::run(a, ctx),
        Command::Evaluate(a) => commands::evaluate::run(a, ctx),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let out = cli.command.out_dir().to_path_buf();
    let name = cli.command.name();
    let (result, mut manifest) = match load_inputs(&cli) {
        Ok((config, templates)) => {
            let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
            let manifest = RunManifest::start(name, config.fingerprint());
            let mut ctx = Context { config, templates, exec, manifest };
            ctx.manifest.inputs.extend(cli.config.iter().cloned());
            ctx.manifest.inputs.extend(cli.templates.iter().cloned());
            let r = dispatch(&cli, &mut ctx);
            (r, ctx.manifest)
        }
        Err(e) => (Err(e), RunManifest::start(name, String::new())),
    };
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{name}: {e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    manifest.finish(code, result.err().map(|e| e.to_string()));
    if let Err(e) = manifest.write(&out) {
        eprintln!("error: cannot write manifest to {}: {e}", out.display());
        if code == EXIT_OK {
            return EXIT_OTHER;
        }
    }
    code
}
