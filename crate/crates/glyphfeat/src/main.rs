use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use glyphfeat::config::PipelineConfig;
use glyphfeat::pipeline;
use glyphfeat::Result;

/// Bag-of-features character recognition: dense SIFT descriptors coded by a
/// stacked sparse auto-encoder, pyramid-pooled, classified one-vs-rest.
#[derive(Parser)]
#[command(name = "glyphfeat", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Config file with `key = value` lines; defaults apply to missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. --set sae1.hidden=128
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (shorthand for --set out_dir=DIR)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        cfg.apply_overrides(&self.set)?;
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the encoder and SVM; write artifacts and a training-set report
    Train(ConfigArgs),
    /// Evaluate persisted artifacts on the held-out test split
    Eval(ConfigArgs),
    /// Train+eval once per dictionary size, sharing split and descriptors
    SweepDict {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dictionary sizes, comma separated, e.g. --k 16,64,256
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
    },
    /// Compare {shallow, deep} x {unsupervised, fine-tuned} encoders
    Ablate(ConfigArgs),
    /// Generate a synthetic glyph dataset as a PGM directory tree
    Synth {
        /// Dataset root directory to create
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        /// Square image side in pixels
        #[arg(long, default_value_t = 90)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Train(args) => {
            let cfg = args.resolve()?;
            let out = pipeline::run_train(&cfg)?;
            println!("train accuracy = {:.6}", out.report.accuracy);
            println!("artifacts written to {}", cfg.out_dir.display());
        }
        Cmd::Eval(args) => {
            let cfg = args.resolve()?;
            let out = pipeline::run_eval(&cfg)?;
            println!("test accuracy = {:.6}", out.report.accuracy);
            println!("reports written to {}", cfg.out_dir.display());
        }
        Cmd::SweepDict { cfg, k } => {
            let cfg = cfg.resolve()?;
            let rows = pipeline::run_sweep(&cfg, k)?;
            println!("k,accuracy,wall_seconds");
            for r in &rows {
                println!("{},{:.6},{:.3}", r.k, r.accuracy, r.wall_seconds);
            }
        }
        Cmd::Ablate(args) => {
            let cfg = args.resolve()?;
            let rows = pipeline::run_ablate(&cfg)?;
            for (name, acc) in &rows {
                println!("{name}: {acc:.6}");
            }
        }
        Cmd::Synth {
            out,
            classes,
            per_class,
            side,
            seed,
        } => {
            let ds = pipeline::run_synth(out, *classes, *per_class, *side, *seed)?;
            println!(
                "wrote {} images ({} classes) to {}",
                ds.images.len(),
                ds.class_names.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
