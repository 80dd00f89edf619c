//! Image-level operations: netpbm round trips, bilinear resizing, network
//! input normalization, and paired image/ground-truth augmentation.
//!
//! Run with: cargo run --example augment_images

use wearkit::raster::{
    augment, normalize, read_image, resize_bilinear, write_image, AugmentOp,
};
use wearkit::synthgen::{render_sample, CorpusConfig, WearLabels};

fn main() -> wearkit::Result<()> {
    let out = std::env::temp_dir().join("wearkit-demo/augment");
    std::fs::create_dir_all(&out)?;

    let cfg = CorpusConfig {
        img_w: 96,
        img_h: 96,
        seed: 7,
        ..CorpusConfig::default()
    };
    let sample = render_sample(&cfg, 0, WearLabels::new(true, true, false));
    write_image(&sample.image, out.join("original.pgm"))?;
    sample.segmap.write(out.join("original_map.pgm"))?;

    // Round trip is bit-exact for 8-bit rasters.
    let back = read_image(out.join("original.pgm"))?;
    assert_eq!(back, sample.image);

    // Downscale, as the classification pipeline does before extraction.
    let small = resize_bilinear(&sample.image, 64, 64)?;
    write_image(&small, out.join("resized_64.pgm"))?;

    // The extractor input: 3 channels, planar, mean/std conditioned.
    let tensor = normalize(&small);
    println!(
        "normalized tensor: {}x{}x{} (first value {:.4})",
        tensor.height(),
        tensor.width(),
        tensor.channels(),
        tensor.get(0, 0, 0)
    );

    // Identical geometric transforms apply to the image and its map.
    for (name, op) in [
        ("flip_h", AugmentOp::FlipH),
        ("flip_v", AugmentOp::FlipV),
        ("rot90", AugmentOp::Rot90),
        ("shift", AugmentOp::Translate { dx: 9, dy: -4 }),
    ] {
        let (img, map) = augment(&sample.image, Some(&sample.segmap), op)?;
        write_image(&img, out.join(format!("{name}.pgm")))?;
        map.unwrap().write(out.join(format!("{name}_map.pgm")))?;
    }

    // Involutions: two flips or four quarter turns restore the original.
    let (once, _) = augment(&sample.image, None, AugmentOp::FlipH)?;
    let (twice, _) = augment(&once, None, AugmentOp::FlipH)?;
    assert_eq!(twice, sample.image);

    println!("augmented images written to {}", out.display());
    Ok(())
}
