//! Thin command-line front end over the `wearkit` library. Each subcommand
//! maps onto one pipeline stage; all heavy lifting lives in the library.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wearkit::pipeline::{
    self, format_summary, PipelineConfig, Target, TOOL_LIFE_CRITERION_MM,
};
use wearkit::Error;

#[derive(Parser)]
#[command(name = "wear", about = "Wear characterization pipeline for worn cutting inserts")]
struct Cli {
    /// JSON pipeline configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides every seed in the configuration (corpus, boosting, base).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Root directory that relative artifact paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (images, ground truth, manifest).
    Generate {
        /// Override the configured number of images.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Extract features for every corpus image into the cache.
    Extract,
    /// Train a classifier on the full corpus and serialize it.
    Train {
        #[arg(long)]
        target: String,
    },
    /// Classify one image file with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Cross-validate a classifier and write the JSON report.
    Crossval {
        #[arg(long)]
        target: String,
        /// Replace the classifier with a degenerate baseline ("majority").
        #[arg(long)]
        dummy: Option<String>,
    },
    /// Train the cell-wise segmentation baseline and evaluate held-out IoU.
    Segment,
    /// Write a per-pixel class-frequency heatmap over segmentation maps.
    Heatmap {
        /// Class id to count (0 background, 1 tool, 2 flank wear, 3 chipping).
        #[arg(long, default_value_t = 2)]
        cls: u8,
        /// Output PGM path.
        #[arg(long)]
        heat_out: PathBuf,
        /// Segmap files or directories of them.
        maps: Vec<PathBuf>,
    },
    /// Measure flank-wear widths on segmentation maps.
    Measure {
        #[arg(long, default_value_t = 100.0)]
        px_per_mm: f64,
        maps: Vec<PathBuf>,
    },
    /// Consolidate manifest, classification, segmentation, and wear
    /// statistics into report.txt / report.json.
    Report,
}

fn load_config(cli: &Cli) -> wearkit::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.corpus.seed = seed;
        cfg.gbm.seed = seed;
        if let wearkit::convfeat::BaseInit::Random { seed: s } = &mut cfg.base_init {
            *s = seed;
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> wearkit::Result<()> {
    if let Some(threads) = cli.threads {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let root = cli.out.clone();
    match &cli.command {
        Command::Generate { n } => {
            let mut cfg = load_config(cli)?;
            if let Some(n) = n {
                cfg.corpus.n_images = *n;
            }
            let summary = pipeline::run_generate(&cfg, &root)?;
            print!("{}", format_summary(&summary));
            println!("corpus written to {}", cfg.corpus_dir(&root).display());
        }
        Command::Extract => {
            let cfg = load_config(cli)?;
            let (n, d) = pipeline::run_extract(&cfg, &root)?;
            println!(
                "extracted {d} features for {n} images -> {}",
                cfg.cache_file(&root).display()
            );
        }
        Command::Train { target } => {
            let cfg = load_config(cli)?;
            let target: Target = target.parse()?;
            let path = pipeline::run_train(&cfg, &root, target)?;
            println!("model written to {}", path.display());
        }
        Command::Predict { model, image } => {
            let cfg = load_config(cli)?;
            let (label, proba) = pipeline::run_predict(&cfg, &root, model, image)?;
            println!("label={label} probability={proba:.6}");
        }
        Command::Crossval { target, dummy } => {
            let cfg = load_config(cli)?;
            let target: Target = target.parse()?;
            let dummy = match dummy.as_deref() {
                None => false,
                Some("majority") => true,
                Some(other) => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown dummy mode {other:?}, expected majority"
                    )))
                }
            };
            let report = pipeline::run_crossval(&cfg, &root, target, dummy)?;
            for (i, (cm, mcc)) in report.per_fold.iter().enumerate() {
                println!(
                    "fold {i}: tp {} fp {} fn {} tn {} mcc {mcc:.3}",
                    cm.tp, cm.fp, cm.fn_, cm.tn
                );
            }
            let p = &report.pooled;
            println!(
                "pooled: tp {} fp {} fn {} tn {} mcc {:.3}",
                p.tp, p.fp, p.fn_, p.tn, report.pooled_mcc
            );
            println!(
                "report written to {}",
                cfg.crossval_report_file(&root, target).display()
            );
        }
        Command::Segment => {
            let cfg = load_config(cli)?;
            let r = pipeline::run_segment(&cfg, &root)?;
            println!(
                "split {}/{}/{} train/val/test; IoU flank {:.3}, chipping {:.3}, mean {:.3}",
                r.n_train, r.n_val, r.n_test, r.iou_flank_wear, r.iou_chipping, r.mean_iou
            );
            println!(
                "predicted maps in {}, report at {}",
                cfg.seg_maps_dir(&root).display(),
                cfg.seg_report_file(&root).display()
            );
        }
        Command::Heatmap { cls, heat_out, maps } => {
            pipeline::run_heatmap(maps, *cls, heat_out)?;
            println!("heatmap written to {}", heat_out.display());
        }
        Command::Measure { px_per_mm, maps } => {
            let stats = pipeline::run_measure(maps, *px_per_mm)?;
            let mut exceed = 0usize;
            for (id, s) in &stats {
                println!(
                    "{id}: vb_max {:.3} mm, vb_avg {:.3} mm over {} columns{}",
                    s.vb_max_mm,
                    s.vb_avg_mm,
                    s.columns_measured,
                    if s.exceeds_criterion { "  [exceeds]" } else { "" }
                );
                exceed += s.exceeds_criterion as usize;
            }
            println!(
                "{exceed} of {} maps exceed the {TOOL_LIFE_CRITERION_MM} mm criterion",
                stats.len()
            );
        }
        Command::Report => {
            let cfg = load_config(cli)?;
            let text = pipeline::run_report(&cfg, &root)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
