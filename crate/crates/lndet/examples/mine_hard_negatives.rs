//! Hard-negative mining: pick out confident predictions with zero overlap
//! against every annotated lesion box, for feeding back as training
//! negatives.
//!
//! Run with: cargo run --example mine_hard_negatives

use lndet::{select_hard_negatives, Box2D, Detection, LesionAnnotation};

fn det(slice: usize, bbox: [f64; 4], score: f64) -> Detection {
    Detection {
        volume_id: "case_001".to_string(),
        slice_index: slice,
        bbox: Box2D::new(bbox[0], bbox[1], bbox[2], bbox[3]).unwrap(),
        score,
        model_id: "frcnn".to_string(),
        label: "LN".to_string(),
    }
}

fn main() -> anyhow::Result<()> {
    let node = [40.0, 40.0, 58.0, 56.0];
    let lesions = vec![LesionAnnotation::new(
        "L1".to_string(),
        "case_001".to_string(),
        vec![(10, Box2D::new(node[0], node[1], node[2], node[3]).unwrap())],
    )?];

    let preds = vec![
        det(10, node, 0.95),                         // true positive
        det(10, [41.0, 50.0, 60.0, 62.0], 0.80),     // overlaps the lesion: skipped
        det(10, [150.0, 30.0, 170.0, 48.0], 0.97),   // confident miss far away
        det(4, [90.0, 90.0, 110.0, 108.0], 0.96),    // confident miss, other slice
        det(8, [20.0, 20.0, 33.0, 31.0], 0.40),      // below the TP floor: skipped
    ];

    let mined = select_hard_negatives(&preds, &lesions, 0.25, 0.5)?;
    println!(
        "{} true positives, score floor {:.2}",
        mined.tp_count, mined.tp_floor
    );
    println!("hard negatives ({}):", mined.hard_negatives.len());
    for d in &mined.hard_negatives {
        let [x1, y1, x2, y2] = d.bbox.corners();
        println!(
            "  slice {:>2}  [{x1:6.2} {y1:6.2} {x2:6.2} {y2:6.2}]  score {:.2}",
            d.slice_index, d.score
        );
    }
    Ok(())
}
