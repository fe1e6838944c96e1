use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nmrrecon_core::io::{read_grid, write_grid};
use nmrrecon_core::nus::{apply_mask, gen_mask};
use nmrrecon_core::{to_domain, Domain, Error, NusMask, Result};
use nmrrecon_diffusion::Variant;
use nmrrecon_harness::sweep::read_results;
use nmrrecon_harness::{
    build, emit_report, exit_code, generate_dataset, init_threads, run_sweep_with_progress, train_method, Dataset,
    ExperimentConfig, Method, ReportTable,
};

#[derive(Parser)]
#[command(name = "nmrrecon", version, about = "Reconstruction of non-uniformly sampled 2D NMR spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of FF spectra with a manifest
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Mask the indirect rows of a grid file
    Mask {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Domain the masked grid is written in (tt or tf)
        #[arg(long, default_value = "tt")]
        domain: Domain,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask_out: PathBuf,
    },
    /// Reconstruct one masked grid; the result is written as an FF spectrum
    Reconstruct {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the checkpoint listed in the config
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one diffusion model on the training split of a dataset
    Train {
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        domain: Domain,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the dataset directory listed in the config
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run (or resume) a masking-ratio sweep
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rebuild aggregates and charts from a results file
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), ExperimentConfig::load)
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Synth { config, out, n_samples, seed } => {
            let mut cfg = load_config(config.as_deref())?.dataset;
            if let Some(n) = n_samples {
                cfg.n_samples = n;
                cfg.n_eval = cfg.n_eval.min(n);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let manifest = generate_dataset(&cfg, &out)?;
            println!("wrote {} spectra to {}", manifest.entries.len(), out.display());
        }
        Command::Mask { input, ratio, seed, domain, out, mask_out } => {
            if domain == Domain::FF {
                return Err(Error::arg("rows can only be masked in the TT or TF domain"));
            }
            let grid = to_domain(&read_grid(&input)?, domain)?;
            let mask = gen_mask(grid.n_indirect(), ratio, seed)?;
            write_grid(&apply_mask(&grid, &mask)?, &out)?;
            mask.write(&mask_out)?;
            println!("kept {} of {} rows", mask.kept.len(), mask.n_rows);
        }
        Command::Reconstruct { method, input, mask, out, config, checkpoint, seed } => {
            let cfg = load_config(config.as_deref())?.sweep;
            let ckpt = checkpoint.or_else(|| cfg.checkpoints.get(&method).cloned());
            let recon = build(method, &cfg.settings, ckpt.as_deref())?;
            let observed = read_grid(&input)?;
            if observed.domain() == Domain::FF {
                return Err(Error::state("masked input must be a TT or TF grid"));
            }
            let observed = to_domain(&observed, method.domain())?;
            let mask = NusMask::read(&mask)?;
            let completed = recon.reconstruct(&observed, &mask, seed)?;
            write_grid(&to_domain(&completed, Domain::FF)?, &out)?;
        }
        Command::Train { variant, domain, config, dataset, out } => {
            let cfg = load_config(config.as_deref())?;
            let method = Method::diffusion(variant, domain)?;
            let dataset = Dataset::open(dataset.unwrap_or(cfg.sweep.dataset_dir))?;
            let every = cfg.train.checkpoint_every.max(1);
            let outcome = train_method(&dataset, method, &cfg.train, &cfg.unet, &cfg.schedule, |step, loss| {
                if (step + 1) % every == 0 {
                    eprintln!("{method} step {}: loss {loss:.4}", step + 1);
                }
            })?;
            outcome.checkpoint.write(&out)?;
            let report_path = out.with_extension("report.json");
            let text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
            std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
            let (first, last) = outcome.report.window_means(100);
            println!(
                "{method}: loss {first:.4} -> {last:.4}, best validation {:.4} at step {}",
                outcome.report.best_val_loss, outcome.report.best_step
            );
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?.sweep;
            let outcome = run_sweep_with_progress(&cfg, |p| eprintln!("{}: {}/{} cells", p.method, p.done, p.total))?;
            println!(
                "{} cells computed, {} resumed, {} errors; report in {}",
                outcome.computed,
                outcome.skipped,
                outcome.errors,
                cfg.output_dir.display()
            );
        }
        Command::Report { input, out } => {
            let table = ReportTable::from_rows(read_results(&input)?)?;
            for path in emit_report(&table, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
