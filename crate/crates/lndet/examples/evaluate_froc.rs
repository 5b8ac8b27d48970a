//! Evaluate a detector against lesion-level annotations: compute the FROC
//! curve, sensitivity at standard FP budgets, and mAP.
//!
//! Run with: cargo run --example evaluate_froc

use std::collections::BTreeMap;

use lndet::{
    average_precision, evaluate, froc, Box2D, Detection, EvalConfig, LesionAnnotation,
};

fn det(vol: &str, slice: usize, bbox: [f64; 4], score: f64) -> Detection {
    Detection {
        volume_id: vol.to_string(),
        slice_index: slice,
        bbox: Box2D::new(bbox[0], bbox[1], bbox[2], bbox[3]).unwrap(),
        score,
        model_id: "demo".to_string(),
        label: "LN".to_string(),
    }
}

fn main() -> anyhow::Result<()> {
    let node = [40.0, 40.0, 58.0, 56.0];
    let elsewhere = [200.0, 200.0, 215.0, 212.0];

    // Two volumes, one lesion each. The first lesion spans three slices and
    // is hit confidently; the second is only found with a weak score, plus
    // each volume has one false alarm.
    let mut gt = BTreeMap::new();
    gt.insert(
        "v1".to_string(),
        vec![LesionAnnotation::new(
            "L1".to_string(),
            "v1".to_string(),
            (10..13)
                .map(|s| (s, Box2D::new(node[0], node[1], node[2], node[3]).unwrap()))
                .collect(),
        )?],
    );
    gt.insert(
        "v2".to_string(),
        vec![LesionAnnotation::new(
            "L2".to_string(),
            "v2".to_string(),
            vec![(5, Box2D::new(node[0], node[1], node[2], node[3]).unwrap())],
        )?],
    );

    let mut dets = BTreeMap::new();
    dets.insert(
        "v1".to_string(),
        vec![det("v1", 11, node, 0.9), det("v1", 3, elsewhere, 0.8)],
    );
    dets.insert(
        "v2".to_string(),
        vec![det("v2", 7, elsewhere, 0.85), det("v2", 5, node, 0.3)],
    );

    let cfg = EvalConfig::default();

    println!("FROC curve (mean FP/volume, sensitivity):");
    for p in &froc(&dets, &gt, &cfg)?.points {
        println!("  ({:.2}, {:.2})", p.mean_fp_per_volume, p.sensitivity);
    }

    let report = evaluate(&dets, &gt, &cfg, "demo")?;
    println!("\nsensitivity at FP budgets (step interpolation):");
    for (t, s) in &report.sensitivity_at {
        println!("  S@{t:<4} = {s:5.1}%");
    }
    println!("\nmAP = {:.1}", report.map);
    println!(
        "box-level AP = {:.3}",
        average_precision(&dets, &gt, &cfg)?
    );
    Ok(())
}
