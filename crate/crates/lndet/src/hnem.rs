//! Hard-negative selection: confident predictions with zero overlap against
//! every ground-truth box on their slice, scoring above the weakest true
//! positive.

use crate::error::Result;
use crate::evaluation::{match_detections, LesionAnnotation};
use crate::fusion::Detection;

#[derive(Debug, Clone, PartialEq)]
pub struct MiningResult {
    pub hard_negatives: Vec<Detection>,
    /// Minimum true-positive score used as the cutoff (or the fallback
    /// floor when the volume has no true positive).
    pub tp_floor: f64,
    pub tp_count: usize,
}

/// Select hard negatives for one volume.
///
/// "Does not overlap" is read strictly: a candidate qualifies only with
/// IoU exactly 0 against every GT box on its slice. The score cutoff is the
/// minimum TP score from greedy matching at `iou_thr`, falling back to
/// `fallback_floor` when no TP exists.
pub fn select_hard_negatives(
    preds: &[Detection],
    lesions: &[LesionAnnotation],
    iou_thr: f64,
    fallback_floor: f64,
) -> Result<MiningResult> {
    let matches = match_detections(preds, lesions, iou_thr)?;

    let mut tp_floor = f64::INFINITY;
    let mut tp_count = 0;
    for (det, flag) in preds.iter().zip(&matches.flags) {
        if flag.is_tp() {
            tp_count += 1;
            tp_floor = tp_floor.min(det.score);
        }
    }
    if tp_count == 0 {
        tp_floor = fallback_floor;
    }

    let mut hard_negatives: Vec<Detection> = preds
        .iter()
        .filter(|det| {
            det.score > tp_floor
                && lesions.iter().all(|l| {
                    l.extent
                        .iter()
                        .filter(|(s, _)| *s == det.slice_index)
                        .all(|(_, gt)| det.bbox.iou(gt) == 0.0)
                })
        })
        .cloned()
        .collect();
    hard_negatives.sort_by(|a, b| a.cmp_score_desc(b));

    Ok(MiningResult {
        hard_negatives,
        tp_floor,
        tp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::LesionAnnotation;
    use crate::fusion::default_label;
    use crate::geometry::Box2D;

    fn det(slice: usize, bbox: [f64; 4], score: f64) -> Detection {
        Detection {
            volume_id: "v".into(),
            slice_index: slice,
            bbox: Box2D::new(bbox[0], bbox[1], bbox[2], bbox[3]).unwrap(),
            score,
            model_id: "m".into(),
            label: default_label(),
        }
    }

    fn gt(slice: usize, bbox: [f64; 4]) -> LesionAnnotation {
        LesionAnnotation::new(
            "L1".into(),
            "v".into(),
            vec![(
                slice,
                Box2D::new(bbox[0], bbox[1], bbox[2], bbox[3]).unwrap(),
            )],
        )
        .unwrap()
    }

    #[test]
    fn confident_disjoint_pred_selected() {
        let lesions = vec![gt(2, [0.0, 0.0, 10.0, 10.0])];
        let preds = vec![
            det(2, [0.0, 0.0, 10.0, 10.0], 0.6),     // TP
            det(2, [50.0, 50.0, 60.0, 60.0], 0.95),  // disjoint, above TP floor
            det(2, [100.0, 0.0, 110.0, 10.0], 0.55), // disjoint, below TP floor
        ];
        let result = select_hard_negatives(&preds, &lesions, 0.25, 0.5).unwrap();
        assert_eq!(result.tp_count, 1);
        assert_eq!(result.tp_floor, 0.6);
        assert_eq!(result.hard_negatives.len(), 1);
        assert_eq!(result.hard_negatives[0].score, 0.95);
    }

    #[test]
    fn any_overlap_disqualifies() {
        let lesions = vec![gt(2, [0.0, 0.0, 10.0, 10.0])];
        // iou ~0.1 > 0: touches GT, never a hard negative
        let preds = vec![
            det(2, [0.0, 0.0, 10.0, 10.0], 0.6),
            det(2, [8.0, 8.0, 20.0, 20.0], 0.99),
        ];
        let result = select_hard_negatives(&preds, &lesions, 0.25, 0.5).unwrap();
        assert!(result.hard_negatives.is_empty());
    }

    #[test]
    fn fallback_floor_when_no_tp() {
        let lesions = vec![gt(2, [0.0, 0.0, 10.0, 10.0])];
        let preds = vec![
            det(2, [50.0, 50.0, 60.0, 60.0], 0.7),
            det(2, [70.0, 70.0, 80.0, 80.0], 0.4),
        ];
        let result = select_hard_negatives(&preds, &lesions, 0.25, 0.5).unwrap();
        assert_eq!(result.tp_count, 0);
        assert_eq!(result.tp_floor, 0.5);
        assert_eq!(result.hard_negatives.len(), 1);
        assert_eq!(result.hard_negatives[0].score, 0.7);
    }

    #[test]
    fn overlap_on_other_slice_does_not_matter() {
        // GT lives on slice 2; a disjoint-slice pred at the same (x, y) has
        // no same-slice GT box and qualifies
        let lesions = vec![gt(2, [0.0, 0.0, 10.0, 10.0])];
        let preds = vec![
            det(2, [0.0, 0.0, 10.0, 10.0], 0.6),
            det(3, [0.0, 0.0, 10.0, 10.0], 0.9),
        ];
        let result = select_hard_negatives(&preds, &lesions, 0.25, 0.5).unwrap();
        assert_eq!(result.hard_negatives.len(), 1);
        assert_eq!(result.hard_negatives[0].slice_index, 3);
    }
}
