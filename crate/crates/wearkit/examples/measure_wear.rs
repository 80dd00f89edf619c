//! Flank-wear width measurement against the 0.3 mm tool-life criterion:
//! per-column wear depths perpendicular to the cutting edge give VB_max and
//! VB_avg in millimetres.
//!
//! Run with: cargo run --example measure_wear

use wearkit::pipeline::{wear_width_stats, TOOL_LIFE_CRITERION_MM};
use wearkit::synthgen::{assign_labels, render_sample, CorpusConfig, SegMap};

fn main() -> wearkit::Result<()> {
    // A constructed map first: a 20-column band, one column 35 px deep.
    // At 100 px/mm that is VB_max = 0.35 mm, past the criterion.
    let mut m = SegMap::filled(80, 80, SegMap::TOOL)?;
    for x in 20..40 {
        let depth = if x == 30 { 35 } else { 18 };
        for y in 10..10 + depth {
            m.set(x, y, SegMap::FLANK_WEAR);
        }
    }
    let s = wear_width_stats(&m, 100.0);
    println!(
        "constructed band: vb_max {:.2} mm, vb_avg {:.3} mm over {} columns, exceeds: {}",
        s.vb_max_mm, s.vb_avg_mm, s.columns_measured, s.exceeds_criterion
    );

    // Now a corpus: how many tools are past end-of-life?
    let cfg = CorpusConfig {
        n_images: 60,
        img_w: 64,
        img_h: 64,
        seed: 4,
        px_per_mm: 20.0, // 50 um per pixel
        ..CorpusConfig::default()
    };
    let labels = assign_labels(&cfg);
    let mut exceeding = 0usize;
    let mut vb_values = Vec::new();
    for (i, &assigned) in labels.iter().enumerate() {
        let sample = render_sample(&cfg, i, assigned);
        let stats = wear_width_stats(&sample.segmap, cfg.px_per_mm);
        if stats.columns_measured > 0 {
            vb_values.push(stats.vb_max_mm);
        }
        exceeding += stats.exceeds_criterion as usize;
    }
    vb_values.sort_by(f64::total_cmp);
    println!(
        "\n{} of {} worn tools carry flank wear; vb_max median {:.3} mm, max {:.3} mm",
        vb_values.len(),
        cfg.n_images,
        vb_values[vb_values.len() / 2],
        vb_values.last().unwrap()
    );
    println!(
        "{exceeding} of {} tools exceed the {TOOL_LIFE_CRITERION_MM} mm criterion \
         (changed too late)",
        cfg.n_images
    );
    Ok(())
}
