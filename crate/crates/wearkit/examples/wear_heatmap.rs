//! Wear-frequency heatmaps: the per-pixel fraction of tools showing a wear
//! class at each location, over a stack of segmentation maps.
//!
//! Run with: cargo run --example wear_heatmap

use wearkit::pipeline::heatmap;
use wearkit::raster::write_image;
use wearkit::synthgen::{assign_labels, render_sample, CorpusConfig, SegMap};

fn main() -> wearkit::Result<()> {
    let out = std::env::temp_dir().join("wearkit-demo/heatmap");
    std::fs::create_dir_all(&out)?;

    let cfg = CorpusConfig {
        n_images: 80,
        img_w: 64,
        img_h: 64,
        seed: 21,
        ..CorpusConfig::default()
    };
    let labels = assign_labels(&cfg);
    let maps: Vec<SegMap> = (0..cfg.n_images)
        .map(|i| render_sample(&cfg, i, labels[i]).segmap)
        .collect();

    for (name, cls) in [("flank_wear", SegMap::FLANK_WEAR), ("chipping", SegMap::CHIPPING)] {
        let hm = heatmap(&maps, cls)?;
        let peak = hm.as_u8().unwrap().iter().copied().max().unwrap();
        let path = out.join(format!("heat_{name}.pgm"));
        write_image(&hm, &path)?;
        println!(
            "{name}: peak frequency {:.0}% -> {}",
            peak as f64 / 255.0 * 100.0,
            path.display()
        );
    }
    println!("bright pixels mark locations where wear recurs across tools");
    Ok(())
}
