//! Fuse overlapping detections from two models with NMS, Soft-NMS, and WBF
//! and print what each method keeps.
//!
//! Run with: cargo run --example fuse_models

use lndet::{nms, soft_nms, wbf, Box2D, Detection, FusionParams};

fn det(slice: usize, bbox: [f64; 4], score: f64, model: &str) -> Detection {
    Detection {
        volume_id: "case_001".to_string(),
        slice_index: slice,
        bbox: Box2D::new(bbox[0], bbox[1], bbox[2], bbox[3]).unwrap(),
        score,
        model_id: model.to_string(),
        label: "LN".to_string(),
    }
}

fn show(title: &str, dets: &[Detection]) {
    println!("{title}:");
    for d in dets {
        let [x1, y1, x2, y2] = d.bbox.corners();
        println!(
            "  [{x1:6.2} {y1:6.2} {x2:6.2} {y2:6.2}]  score {:.3}  ({})",
            d.score, d.model_id
        );
    }
    println!();
}

fn main() -> anyhow::Result<()> {
    // Two models looking at the same slice. The first three boxes are the
    // same node seen slightly differently; the last one is a separate find.
    let model_a = vec![
        det(12, [30.0, 40.0, 55.0, 62.0], 0.92, "vfnet"),
        det(12, [120.0, 80.0, 140.0, 96.0], 0.41, "vfnet"),
    ];
    let model_b = vec![
        det(12, [31.0, 42.0, 56.0, 60.0], 0.78, "fcos"),
        det(12, [28.0, 39.0, 54.0, 63.0], 0.65, "fcos"),
    ];

    let pooled: Vec<Detection> = model_a.iter().chain(&model_b).cloned().collect();
    show("input (pooled)", &pooled);

    show("NMS @ IoU 0.5", &nms(&pooled, 0.5)?);

    let params = FusionParams::default();
    show("Soft-NMS (sigma 0.5)", &soft_nms(&pooled, &params)?);

    // WBF wants per-model lists so it can rescale by how many models agreed.
    let params = FusionParams {
        model_count: 2,
        ..Default::default()
    };
    show("WBF @ IoU 0.55", &wbf(&[model_a, model_b], &params)?);
    Ok(())
}
