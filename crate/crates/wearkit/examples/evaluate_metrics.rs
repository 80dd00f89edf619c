//! The evaluation toolkit on its own: confusion matrices, MCC, stratified
//! folds, three-way splits, and IoU, on hand-constructed inputs.
//!
//! Run with: cargo run --example evaluate_metrics

use wearkit::evalkit::{
    iou, mcc, mean_iou, stratified_kfold, train_val_test_split, ConfusionMatrix,
};
use wearkit::synthgen::SegMap;

fn main() -> wearkit::Result<()> {
    // MCC weighs all four cells, which matters on imbalanced data: these two
    // matrices have similar accuracy but very different coefficients.
    for (name, cm) in [
        ("strong classifier ", ConfusionMatrix::new(532, 18, 4, 94)),
        ("weaker classifier ", ConfusionMatrix::new(292, 48, 67, 241)),
        ("always positive   ", ConfusionMatrix::new(536, 112, 0, 0)),
    ] {
        let acc = (cm.tp + cm.tn) as f64 / cm.total() as f64;
        println!(
            "{name} tp {:>3} fp {:>3} fn {:>3} tn {:>3}  accuracy {acc:.3}  mcc {:.3}",
            cm.tp,
            cm.fp,
            cm.fn_,
            cm.tn,
            mcc(&cm)
        );
    }

    // Stratified 3-fold assignment on an imbalanced label vector.
    let labels: Vec<u8> = (0..648).map(|i| (i < 536) as u8).collect();
    let folds = stratified_kfold(&labels, 3, 1)?;
    let mut per_fold = [(0usize, 0usize); 3];
    for (i, &f) in folds.fold_of.iter().enumerate() {
        if labels[i] == 1 {
            per_fold[f].0 += 1;
        } else {
            per_fold[f].1 += 1;
        }
    }
    println!("\n3-fold split of 536 positives / 112 negatives:");
    for (f, (pos, neg)) in per_fold.iter().enumerate() {
        println!("  fold {f}: {pos} positive, {neg} negative");
    }

    // Disjoint train/validation/test sets at 0.6/0.2/0.2.
    let sets = train_val_test_split(&labels, [0.6, 0.2, 0.2], 5)?;
    println!(
        "\ntrain/val/test sizes: {}/{}/{}",
        sets[0].len(),
        sets[1].len(),
        sets[2].len()
    );

    // IoU on constructed maps: 100 px truth, 100 px prediction, 50 shared.
    let mut truth = SegMap::filled(30, 10, SegMap::TOOL)?;
    let mut pred = SegMap::filled(30, 10, SegMap::TOOL)?;
    for y in 0..10 {
        for x in 0..10 {
            truth.set(x, y, SegMap::FLANK_WEAR);
            pred.set(x + 5, y, SegMap::FLANK_WEAR);
        }
    }
    println!(
        "\nhalf-overlapping regions: IoU {:.4} (= 50/150), mean over wear classes {:.4}",
        iou(&truth, &pred, SegMap::FLANK_WEAR)?,
        mean_iou(&truth, &pred)?
    );
    Ok(())
}
