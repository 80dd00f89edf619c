//! Trains a classifier on the full corpus, serializes it, and classifies
//! single image files with the loaded model.
//!
//! Run with: cargo run --example train_and_predict

use wearkit::boost::{Ensemble, GbmConfig};
use wearkit::convfeat::BaseInit;
use wearkit::pipeline::{run_extract, run_generate, run_predict, run_train, PipelineConfig, Target};
use wearkit::synthgen::{read_manifest, CorpusConfig, Difficulty};

fn main() -> wearkit::Result<()> {
    let root = std::env::temp_dir().join("wearkit-demo/train");
    std::fs::create_dir_all(&root)?;
    let cfg = PipelineConfig {
        corpus: CorpusConfig {
            n_images: 120,
            img_w: 64,
            img_h: 64,
            difficulty: Difficulty::Easy,
            seed: 9,
            ..CorpusConfig::default()
        },
        resize_to: (64, 64),
        base_init: BaseInit::Random { seed: 7 },
        gbm: GbmConfig {
            n_stages: 60,
            ..GbmConfig::default()
        },
        ..PipelineConfig::default()
    };

    run_generate(&cfg, &root)?;
    run_extract(&cfg, &root)?;
    let model_path = run_train(&cfg, &root, Target::FlankWear)?;
    println!("flank-wear model written to {}", model_path.display());

    let model = Ensemble::load(&model_path)?;
    let importances = model.feature_importances();
    let used = importances.iter().filter(|&&v| v > 0.0).count();
    println!(
        "the ensemble split on {used} of {} features (implicit feature selection)",
        model.n_features()
    );

    // Classify a few corpus images with the serialized model.
    let rows = read_manifest(cfg.corpus_dir(&root))?;
    let mut correct = 0usize;
    for row in rows.iter().take(10) {
        let image = cfg.corpus_dir(&root).join(&row.image);
        let (label, proba) = run_predict(&cfg, &root, &model_path, &image)?;
        let truth = row.labels.flank_wear as u8;
        correct += (label == truth) as usize;
        println!(
            "{}: predicted {label} (p = {proba:.3}), truth {truth}",
            row.id
        );
    }
    println!("{correct}/10 training images classified correctly");
    Ok(())
}
