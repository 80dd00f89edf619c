//! Convolutional feature extraction: building the 13-layer base (random or
//! from a weight file), extracting flattened activations, and caching them.
//!
//! Run with: cargo run --example extract_features

use wearkit::convfeat::{
    extract_features, feature_len, feature_map_at, ConvBase, FeatureMatrix,
};
use wearkit::raster::normalize;
use wearkit::synthgen::{render_sample, CorpusConfig, WearLabels};

fn main() -> wearkit::Result<()> {
    let out = std::env::temp_dir().join("wearkit-demo/features");
    std::fs::create_dir_all(&out)?;

    // Deterministic random initialization; supply a weight file instead to
    // reproduce a pretrained base (ConvBase::load).
    let base = ConvBase::random(7);
    let weights_path = out.join("base.vggw");
    base.save(&weights_path)?;
    assert_eq!(ConvBase::load(&weights_path)?, base);
    println!("weight file round-trips bit-exactly ({})", weights_path.display());

    let cfg = CorpusConfig {
        img_w: 64,
        img_h: 64,
        seed: 3,
        ..CorpusConfig::default()
    };
    let mut cache = FeatureMatrix::empty(feature_len(64, 64));
    for i in 0..4 {
        let sample = render_sample(&cfg, i, WearLabels::new(i % 2 == 0, false, false));
        let features = extract_features(&base, &normalize(&sample.image))?;
        println!(
            "{}: {} features, first {:?}",
            sample.id,
            features.len(),
            &features[..3]
        );
        cache.push_row(sample.id, features)?;
    }

    // Intermediate activations feed the segmentation baseline.
    let sample = render_sample(&cfg, 0, WearLabels::new(true, false, false));
    let t = normalize(&sample.image);
    for block in 1..=5 {
        let fmap = feature_map_at(&base, &t, block)?;
        println!(
            "block {block}: {}x{}x{} activations",
            fmap.height(),
            fmap.width(),
            fmap.channels()
        );
    }

    let cache_path = out.join("features.wfc");
    cache.save(&cache_path)?;
    let loaded = FeatureMatrix::load(&cache_path)?;
    assert_eq!(loaded, cache);
    println!(
        "cache of {} x {} floats round-trips at {}",
        loaded.n_samples(),
        loaded.n_features(),
        cache_path.display()
    );
    Ok(())
}
