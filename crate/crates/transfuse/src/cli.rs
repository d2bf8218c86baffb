//! The `transfuse` command. Flags override values from `--config`.
//!
//! Exit codes: 0 on success, 1 on a usage error, 2 when the command itself
//! fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use transfuse_core::destruct::{destroy, TransformKind};
use transfuse_core::fuse::FusionKind;
use transfuse_core::trainer::{rng_for, Stream};

use crate::config::{parse_transform_list, Overrides, RunConfigFile};
use crate::dataset::scan_dataset;
use crate::error::{Error, Result};
use crate::fusion::fuse_files;
use crate::io::{load_image, save_image};
use crate::report::{evaluate_dir, write_report};
use crate::train::train;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "transfuse", version, about = "Self-supervised image fusion by destruction and reconstruction")]
pub struct Cli {
    /// TOML run configuration; built-in defaults apply to anything it omits.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the reconstruction network on a directory of images.
    Train(TrainArgs),
    /// Destroy random subregions of one image and write the result plus a
    /// JSON record of what was applied.
    Destroy(DestroyArgs),
    /// Fuse two registered source images with a trained checkpoint.
    Fuse(FuseArgs),
    /// Score a directory of `<id>_a`, `<id>_b`, `<id>_fused` triples.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct TransformFlags {
    /// Turn one transform off: nl (nonlinear), b (brightness) or ns (noise).
    #[arg(long, value_name = "KIND", value_parser = parse_kind, action = clap::ArgAction::Append)]
    pub disable: Vec<TransformKind>,

    /// Apply exactly these transforms to every subregion, e.g. `nl+b+ns`.
    #[arg(long, value_name = "LIST", value_parser = parse_forced)]
    pub force: Option<ForcedTransforms>,
}

/// Parsed value of `--force`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcedTransforms(pub Vec<TransformKind>);

fn parse_forced(s: &str) -> std::result::Result<ForcedTransforms, String> {
    parse_transform_list(s).map(ForcedTransforms)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of PNG/PGM training images.
    pub data_dir: PathBuf,
    /// Receives the step log, checkpoints and a copy of the config.
    pub out_dir: PathBuf,

    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Training resolution; also sets the model's patch grid size.
    #[arg(long, value_name = "N")]
    pub image_size: Option<usize>,
    /// Train the CNN branch alone.
    #[arg(long)]
    pub no_transformer: bool,

    #[command(flatten)]
    pub transforms: TransformFlags,
}

#[derive(Debug, Args)]
pub struct DestroyArgs {
    pub image: PathBuf,
    /// Destroyed image; the record goes next to it with a `.json` extension.
    pub out: PathBuf,

    #[arg(long)]
    pub seed: Option<u64>,

    #[command(flatten)]
    pub transforms: TransformFlags,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    pub checkpoint: PathBuf,
    pub a: PathBuf,
    pub b: PathBuf,
    pub out: PathBuf,

    /// Feature fusion rule.
    #[arg(long, value_name = "RULE", value_parser = ["average", "l1norm"])]
    pub rule: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dir: PathBuf,
    /// Report path; writes `<report>.csv` and `<report>.md`.
    pub report: PathBuf,
}

fn parse_kind(s: &str) -> std::result::Result<TransformKind, String> {
    TransformKind::from_short_name(s).ok_or_else(|| format!("unknown transform '{s}' (use nl, b, ns)"))
}

fn load_config(path: Option<&Path>) -> Result<RunConfigFile> {
    match path {
        Some(p) => RunConfigFile::load(p),
        None => Ok(RunConfigFile::default()),
    }
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn run_command(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Train(a) => {
            cfg.apply(&Overrides {
                seed: a.seed,
                epochs: a.epochs,
                image_size: a.image_size,
                no_transformer: a.no_transformer,
                disable: a.transforms.disable,
                force: a.transforms.force.map(|f| f.0),
                rule: None,
            });
            let tc = cfg.train_config();
            tc.validate()?;
            let manifest = scan_dataset(&a.data_dir, tc.image_size)?;
            for s in &manifest.skipped {
                eprintln!("skipping {}: {}", s.path.display(), s.reason);
            }
            let outcome = train(&manifest, tc, &a.out_dir)?;
            if let Some(last) = outcome.log.records.last() {
                eprintln!("{} steps, final loss {:.6}", outcome.log.records.len(), last.loss.total);
            }
            println!("{}", outcome.final_checkpoint.display());
        }
        Command::Destroy(a) => {
            cfg.apply(&Overrides {
                seed: a.seed,
                disable: a.transforms.disable,
                force: a.transforms.force.map(|f| f.0),
                ..Overrides::default()
            });
            let img = load_image(&a.image)?;
            let mut rng = rng_for(cfg.train.seed, Stream::Destroy, 0);
            let (out, record) = destroy(&img, &cfg.transform, &mut rng)?;
            save_image(&a.out, &out)?;
            let side = sidecar_path(&a.out);
            let json = serde_json::to_string_pretty(&record).expect("record serializes");
            fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))?;
        }
        Command::Fuse(a) => {
            if let Some(name) = &a.rule {
                cfg.fusion.kind = FusionKind::from_name(name).expect("validated by clap");
            }
            fuse_files(&a.checkpoint, &a.a, &a.b, &cfg.fusion, &a.out)?;
        }
        Command::Eval(a) => {
            let report = evaluate_dir(&a.dir, &cfg.loss)?;
            let (csv, md) = write_report(&report, &a.report)?;
            println!("{}\n{}", csv.display(), md.display());
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match run_command(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
