//! `iqa`: command-line entry point for the quality-aware representation
//! learning toolkit.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "iqa",
    about = "Distortion bank, contrastive pre-training and quality regression tools",
    version
)]
struct Cli {
    /// Worker threads for pipeline/eval stages (1 = bit-exact deterministic path).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Run configuration file (TOML); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply one distortion from the bank to an image.
    Distort {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        level: u8,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a pair batch and dump images plus pair metadata.
    Pairs {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Momentum-contrast pre-training on a manifest of images.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// quality | content
        #[arg(long)]
        mode: Option<String>,
    },
    /// Extract frozen-encoder features for every manifest entry.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        quality: Option<PathBuf>,
        #[arg(long)]
        content: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Full-reference mode: features are |f(ref) - f(dist)|.
        #[arg(long, default_value_t = false)]
        fr: bool,
    },
    /// Fit the ridge head on one split and save the model.
    Regress {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Repeated-split evaluation with median SRCC/PLCC.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Train on one dataset, evaluate once on another.
    CrossEval {
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        train_features: PathBuf,
        #[arg(long)]
        test_manifest: PathBuf,
        #[arg(long)]
        test_features: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Generate a procedural image corpus plus a manifest.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Run the built-in oracle suites.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Categorize core errors; other failures print as-is.
            match err.downcast_ref::<iqa_core::Error>() {
                Some(core) => eprintln!("error[{}]: {core}", core.category()),
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let seed_or = |flag: Option<u64>, fallback: u64| flag.or(cfg.seed).unwrap_or(fallback);
    match cli.command {
        Command::Distort {
            input,
            kind,
            level,
            seed,
            out,
        } => commands::cmd_distort(&input, &kind, level, seed_or(seed, 0), &out, &cfg),
        Command::Pairs {
            manifest,
            out_dir,
            seed,
        } => commands::cmd_pairs(&manifest, &cfg, &out_dir, seed_or(seed, 0)),
        Command::Train {
            manifest,
            out_dir,
            seed,
            mode,
        } => commands::cmd_train(
            &manifest,
            &cfg,
            &out_dir,
            seed_or(seed, 0),
            mode.as_deref(),
        ),
        Command::Extract {
            manifest,
            quality,
            content,
            out,
            fr,
        } => commands::cmd_extract(
            &manifest,
            quality.as_deref(),
            content.as_deref(),
            &out,
            fr,
            cli.threads,
            &cfg,
        ),
        Command::Regress {
            manifest,
            features,
            out,
            seed,
        } => commands::cmd_regress(&manifest, &features, &out, seed_or(seed, 0), &cfg),
        Command::Eval {
            manifest,
            features,
            out,
            seed,
            repeats,
        } => commands::cmd_eval(
            &manifest,
            &features,
            &out,
            seed_or(seed, 0),
            repeats,
            cli.threads,
            &cfg,
        ),
        Command::CrossEval {
            train_manifest,
            train_features,
            test_manifest,
            test_features,
            seed,
            model_out,
        } => commands::cmd_cross_eval(
            &train_manifest,
            &train_features,
            &test_manifest,
            &test_features,
            seed_or(seed, 0),
            model_out.as_deref(),
            &cfg,
        ),
        Command::Synth {
            out_dir,
            count,
            width,
            height,
            seed,
        } => commands::cmd_synth(&out_dir, count, width, height, seed_or(seed, 0)),
        Command::Gradcheck { seed, seeds, eps } => commands::cmd_gradcheck(seed, seeds, eps),
        Command::Selftest => commands::cmd_selftest(),
    }
}
