//! Lesion-level volumetric evaluation: greedy IoU matching, FROC with FP
//! counted per volume, sensitivity at fixed FP budgets, and average
//! precision.
//!
//! Sensitivity is lesion-level: a lesion counts as detected when any box of
//! its 3D extent is matched, on any slice. Average precision is box-level,
//! following detection-framework convention. The two denominators differ and
//! both are reported.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::Detection;
use crate::geometry::Box2D;

/// A 3D lesion as a set of per-slice ground-truth boxes sharing a lesion id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LesionAnnotation {
    pub lesion_id: String,
    pub volume_id: String,
    /// (slice_index, box) pairs covering the lesion's 3D extent.
    pub extent: Vec<(usize, Box2D)>,
}

impl LesionAnnotation {
    pub fn new(lesion_id: String, volume_id: String, extent: Vec<(usize, Box2D)>) -> Result<Self> {
        if extent.is_empty() {
            return Err(Error::Contract(format!(
                "lesion `{lesion_id}` has an empty extent"
            )));
        }
        let mut slices: Vec<usize> = extent.iter().map(|(s, _)| *s).collect();
        slices.sort_unstable();
        if slices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract(format!(
                "lesion `{lesion_id}` has duplicate slice indices in its extent"
            )));
        }
        Ok(Self {
            lesion_id,
            volume_id,
            extent,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    /// Sensitivity first achieved at or below the FP budget (conservative).
    #[default]
    Step,
    /// Linear interpolation between the bracketing operating points.
    Linear,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub iou_thr: f64,
    pub fp_targets: Vec<f64>,
    pub interpolation: Interpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thr: 0.25,
            fp_targets: vec![0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 16.0],
            interpolation: Interpolation::Step,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fp_targets.is_empty() || self.fp_targets.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Contract(
                "fp_targets must be non-empty and strictly increasing".into(),
            ));
        }
        if !(self.iou_thr > 0.0 && self.iou_thr <= 1.0) {
            return Err(Error::Contract(format!(
                "iou_thr must lie in (0, 1], got {}",
                self.iou_thr
            )));
        }
        Ok(())
    }
}

/// TP/FP assignment for one detection, in input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectionFlag {
    TruePositive { lesion_id: String },
    FalsePositive,
}

impl DetectionFlag {
    pub fn is_tp(&self) -> bool {
        matches!(self, DetectionFlag::TruePositive { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LesionOutcome {
    pub lesion_id: String,
    pub detected: bool,
    /// Highest score among detections matched to this lesion.
    pub best_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Parallel to the detection input order.
    pub flags: Vec<DetectionFlag>,
    /// Parallel to the lesion input order.
    pub lesions: Vec<LesionOutcome>,
}

impl MatchResult {
    pub fn tp_count(&self) -> usize {
        self.flags.iter().filter(|f| f.is_tp()).count()
    }

    pub fn fp_count(&self) -> usize {
        self.flags.len() - self.tp_count()
    }
}

/// Greedy score-descending matching at `iou_thr` within one volume.
///
/// Each detection claims the unmatched GT box on its own slice with the
/// highest IoU (>= iou_thr). A match anywhere on a lesion's 3D extent marks
/// the lesion detected; the lesion's remaining boxes stay available for
/// further detections.
pub fn match_detections(
    dets: &[Detection],
    lesions: &[LesionAnnotation],
    iou_thr: f64,
) -> Result<MatchResult> {
    let vol_ids: Vec<&str> = dets
        .iter()
        .map(|d| d.volume_id.as_str())
        .chain(lesions.iter().map(|l| l.volume_id.as_str()))
        .collect();
    if let Some(first) = vol_ids.first() {
        if vol_ids.iter().any(|v| v != first) {
            return Err(Error::Contract(
                "match_detections inputs span multiple volumes".into(),
            ));
        }
    }

    struct GtBox {
        lesion_idx: usize,
        slice: usize,
        bbox: Box2D,
        matched: bool,
    }
    let mut gt: Vec<GtBox> = lesions
        .iter()
        .enumerate()
        .flat_map(|(li, l)| {
            l.extent.iter().map(move |(s, b)| GtBox {
                lesion_idx: li,
                slice: *s,
                bbox: *b,
                matched: false,
            })
        })
        .collect();

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[a].cmp_score_desc(&dets[b]));

    let mut flags = vec![DetectionFlag::FalsePositive; dets.len()];
    let mut outcomes: Vec<LesionOutcome> = lesions
        .iter()
        .map(|l| LesionOutcome {
            lesion_id: l.lesion_id.clone(),
            detected: false,
            best_score: None,
        })
        .collect();

    for det_idx in order {
        let det = &dets[det_idx];
        // best unmatched candidate on the detection's slice; ties by
        // lexicographic box coordinates, then lesion id
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if g.matched || g.slice != det.slice_index {
                continue;
            }
            let iou = det.bbox.iou(&g.bbox);
            if iou < iou_thr || iou == 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, biou)) => match iou.partial_cmp(&biou).unwrap_or(Ordering::Equal) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => {
                        let key = |g: &GtBox| {
                            let c = g.bbox.corners();
                            (
                                [c[0], c[1], c[2], c[3]].map(f64::to_bits),
                                lesions[g.lesion_idx].lesion_id.clone(),
                            )
                        };
                        key(g) < key(&gt[bi])
                    }
                },
            };
            if better {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            gt[gi].matched = true;
            let li = gt[gi].lesion_idx;
            flags[det_idx] = DetectionFlag::TruePositive {
                lesion_id: lesions[li].lesion_id.clone(),
            };
            let outcome = &mut outcomes[li];
            outcome.detected = true;
            outcome.best_score = Some(match outcome.best_score {
                Some(s) => s.max(det.score),
                None => det.score,
            });
        }
    }

    Ok(MatchResult {
        flags,
        lesions: outcomes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint {
    pub mean_fp_per_volume: f64,
    pub sensitivity: f64,
}

/// Ordered FROC operating points, one per distinct score threshold,
/// ascending in mean FP per volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
}

/// Per-volume match evidence pooled across the dataset. Greedy matching at
/// threshold s equals a prefix of the full greedy run, so one match per
/// volume suffices for the whole threshold sweep.
struct PooledMatches {
    /// Scores of detections flagged FP in the full run.
    fp_scores: Vec<f64>,
    /// Scores of detections flagged TP in the full run.
    tp_scores: Vec<f64>,
    /// Best matched score per detected lesion.
    lesion_scores: Vec<f64>,
    total_lesions: usize,
    total_gt_boxes: usize,
    n_volumes: usize,
    all_scores: Vec<f64>,
}

fn pool_matches(
    dets_by_volume: &BTreeMap<String, Vec<Detection>>,
    gt_by_volume: &BTreeMap<String, Vec<LesionAnnotation>>,
    iou_thr: f64,
) -> Result<PooledMatches> {
    for vol in dets_by_volume.keys() {
        if !gt_by_volume.contains_key(vol) {
            return Err(Error::Referential(format!(
                "detections reference volume `{vol}` absent from ground truth"
            )));
        }
    }

    static EMPTY: Vec<Detection> = Vec::new();
    let per_volume: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = gt_by_volume
        .par_iter()
        .map(|(vol, lesions)| {
            let dets = dets_by_volume.get(vol).unwrap_or(&EMPTY);
            let result = match_detections(dets, lesions, iou_thr)?;
            let mut fp = Vec::new();
            let mut tp = Vec::new();
            for (det, flag) in dets.iter().zip(&result.flags) {
                if flag.is_tp() {
                    tp.push(det.score);
                } else {
                    fp.push(det.score);
                }
            }
            let lesion_scores = result
                .lesions
                .iter()
                .filter_map(|o| o.best_score)
                .collect();
            Ok((fp, tp, lesion_scores))
        })
        .collect::<Result<_>>()?;

    let mut pooled = PooledMatches {
        fp_scores: Vec::new(),
        tp_scores: Vec::new(),
        lesion_scores: Vec::new(),
        total_lesions: gt_by_volume.values().map(Vec::len).sum(),
        total_gt_boxes: gt_by_volume
            .values()
            .flatten()
            .map(|l| l.extent.len())
            .sum(),
        n_volumes: gt_by_volume.len(),
        all_scores: Vec::new(),
    };
    for (fp, tp, lesion) in per_volume {
        pooled.fp_scores.extend(fp);
        pooled.tp_scores.extend(tp);
        pooled.lesion_scores.extend(lesion);
    }
    pooled.all_scores = pooled
        .fp_scores
        .iter()
        .chain(&pooled.tp_scores)
        .copied()
        .collect();
    pooled.all_scores.sort_by(|a, b| b.total_cmp(a));
    pooled.all_scores.dedup();
    Ok(pooled)
}

fn count_ge(sorted_desc: &[f64], thr: f64) -> usize {
    sorted_desc.partition_point(|&s| s >= thr)
}

/// FROC sweep over all distinct score thresholds. Sensitivity is detected
/// lesions over all lesions; FP is averaged over every ground-truth volume,
/// including volumes with no detections.
pub fn froc(
    dets_by_volume: &BTreeMap<String, Vec<Detection>>,
    gt_by_volume: &BTreeMap<String, Vec<LesionAnnotation>>,
    cfg: &EvalConfig,
) -> Result<FrocCurve> {
    cfg.validate()?;
    let mut pooled = pool_matches(dets_by_volume, gt_by_volume, cfg.iou_thr)?;
    if pooled.total_lesions == 0 {
        return Err(Error::NoLesions);
    }
    if pooled.all_scores.is_empty() {
        return Ok(FrocCurve {
            points: vec![FrocPoint {
                mean_fp_per_volume: 0.0,
                sensitivity: 0.0,
            }],
        });
    }

    pooled.fp_scores.sort_by(|a, b| b.total_cmp(a));
    pooled.lesion_scores.sort_by(|a, b| b.total_cmp(a));

    let points = pooled
        .all_scores
        .iter()
        .map(|&thr| FrocPoint {
            mean_fp_per_volume: count_ge(&pooled.fp_scores, thr) as f64
                / pooled.n_volumes as f64,
            sensitivity: count_ge(&pooled.lesion_scores, thr) as f64
                / pooled.total_lesions as f64,
        })
        .collect();
    Ok(FrocCurve { points })
}

/// Sensitivity read off the FROC curve at each FP budget.
///
/// Step mode is conservative at exact budget hits: when an operating point
/// sits exactly at the target FP, the sensitivity first achieved there is
/// reported rather than the jump's upper value. Linear mode interpolates
/// between the bracketing points. Budgets below the curve's first point give
/// 0; budgets above its last give the final sensitivity.
pub fn sensitivity_at_fp(curve: &FrocCurve, cfg: &EvalConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if curve.points.is_empty() {
        return Err(Error::Contract("empty FROC curve".into()));
    }
    let pts = &curve.points;
    let sens_at = |target: f64| -> f64 {
        if let Some(p) = pts.iter().find(|p| p.mean_fp_per_volume == target) {
            return p.sensitivity;
        }
        let below = pts.iter().rev().find(|p| p.mean_fp_per_volume < target);
        let above = pts.iter().find(|p| p.mean_fp_per_volume > target);
        match (below, above, cfg.interpolation) {
            (None, _, _) => 0.0,
            (Some(b), None, _) => b.sensitivity,
            (Some(b), Some(_), Interpolation::Step) => b.sensitivity,
            (Some(b), Some(a), Interpolation::Linear) => {
                let span = a.mean_fp_per_volume - b.mean_fp_per_volume;
                let frac = (target - b.mean_fp_per_volume) / span;
                b.sensitivity + frac * (a.sensitivity - b.sensitivity)
            }
        }
    };
    Ok(cfg.fp_targets.iter().map(|&t| (t, sens_at(t))).collect())
}

/// Box-level average precision with 101-point interpolation: precision at
/// recall r is the maximum precision at any recall >= r, sampled at
/// r = 0.00, 0.01, ..., 1.00.
pub fn average_precision(
    dets_by_volume: &BTreeMap<String, Vec<Detection>>,
    gt_by_volume: &BTreeMap<String, Vec<LesionAnnotation>>,
    cfg: &EvalConfig,
) -> Result<f64> {
    cfg.validate()?;
    let pooled = pool_matches(dets_by_volume, gt_by_volume, cfg.iou_thr)?;
    if pooled.total_gt_boxes == 0 {
        return Err(Error::NoGroundTruthBoxes);
    }

    let mut fp = pooled.fp_scores;
    let mut tp = pooled.tp_scores;
    fp.sort_by(|a, b| b.total_cmp(a));
    tp.sort_by(|a, b| b.total_cmp(a));

    // one PR point per distinct threshold; rank statistics only, so any
    // strictly monotone score transform leaves AP unchanged
    let pr: Vec<(f64, f64)> = pooled
        .all_scores
        .iter()
        .map(|&thr| {
            let ctp = count_ge(&tp, thr) as f64;
            let cfp = count_ge(&fp, thr) as f64;
            (ctp / pooled.total_gt_boxes as f64, ctp / (ctp + cfp))
        })
        .collect();

    let mut ap = 0.0;
    for i in 0..=100 {
        let r = i as f64 / 100.0;
        let p = pr
            .iter()
            .filter(|(recall, _)| *recall >= r - 1e-12)
            .map(|(_, prec)| *prec)
            .fold(0.0, f64::max);
        ap += p;
    }
    Ok(ap / 101.0)
}

/// Ensemble membership: method names whose mAP strictly exceeds the
/// threshold, sorted descending by mAP.
pub fn ensemble_gate(model_maps: &[(String, f64)], threshold: f64) -> Vec<String> {
    let mut selected: Vec<&(String, f64)> = model_maps
        .iter()
        .filter(|(_, map)| *map > threshold)
        .collect();
    selected.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    selected.into_iter().map(|(name, _)| name.clone()).collect()
}

/// The Table-1-shaped evaluation product: mAP plus sensitivity at each FP
/// budget, as percentages. Full precision is retained; display rounding
/// happens at render time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method_name: String,
    /// mAP as a percentage in [0, 100].
    pub map: f64,
    /// (fp_target, sensitivity percentage) in target order.
    pub sensitivity_at: Vec<(f64, f64)>,
}

pub fn evaluate(
    dets_by_volume: &BTreeMap<String, Vec<Detection>>,
    gt_by_volume: &BTreeMap<String, Vec<LesionAnnotation>>,
    cfg: &EvalConfig,
    method_name: &str,
) -> Result<EvalReport> {
    let curve = froc(dets_by_volume, gt_by_volume, cfg)?;
    let sens = sensitivity_at_fp(&curve, cfg)?;
    let ap = average_precision(dets_by_volume, gt_by_volume, cfg)?;
    Ok(EvalReport {
        method_name: method_name.to_string(),
        map: ap * 100.0,
        sensitivity_at: sens.into_iter().map(|(t, s)| (t, s * 100.0)).collect(),
    })
}
