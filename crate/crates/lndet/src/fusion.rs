//! Duplicate-prediction reduction: NMS, Soft-NMS, and Weighted Boxes Fusion.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::DetectionDataset;
use crate::error::{Error, Result};
use crate::geometry::Box2D;

/// A single predicted box with its confidence and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub volume_id: String,
    pub slice_index: usize,
    pub bbox: Box2D,
    pub score: f64,
    pub model_id: String,
    #[serde(default = "default_label")]
    pub label: String,
}

pub fn default_label() -> String {
    "LN".to_string()
}

impl Detection {
    /// Score-descending ordering with a deterministic tie-break so that all
    /// fusion and matching output is reproducible across runs and thread
    /// counts. Ties break by (model_id, slice_index, x1, y1).
    pub fn cmp_score_desc(&self, other: &Detection) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.model_id.cmp(&other.model_id))
            .then_with(|| self.slice_index.cmp(&other.slice_index))
            .then_with(|| self.bbox.x1().total_cmp(&other.bbox.x1()))
            .then_with(|| self.bbox.y1().total_cmp(&other.bbox.y1()))
    }

    fn group_key(&self) -> (&str, usize, &str) {
        (&self.volume_id, self.slice_index, &self.label)
    }
}

/// How cluster member scores combine into the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    #[default]
    Mean,
    Max,
}

/// Optional down-weighting of clusters backed by few models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RescaleMode {
    None,
    /// Scale the fused score by min(N, T) / T where N is the cluster size
    /// and T the number of contributing models.
    #[default]
    CountOverModels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMethod {
    Nms,
    SoftNms,
    Wbf,
}

#[derive(Debug, Clone)]
pub struct FusionParams {
    pub iou_cluster_thr: f64,
    pub score_mode: ScoreMode,
    pub rescale_mode: RescaleMode,
    pub soft_nms_sigma: f64,
    pub nms_iou_thr: f64,
    pub model_count: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            iou_cluster_thr: 0.55,
            score_mode: ScoreMode::Mean,
            rescale_mode: RescaleMode::CountOverModels,
            soft_nms_sigma: 0.5,
            nms_iou_thr: 0.5,
            model_count: 1,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("iou_cluster_thr", self.iou_cluster_thr),
            ("nms_iou_thr", self.nms_iou_thr),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Contract(format!(
                    "{name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if self.soft_nms_sigma.is_nan() || self.soft_nms_sigma <= 0.0 {
            return Err(Error::Contract(format!(
                "soft_nms_sigma must be positive, got {}",
                self.soft_nms_sigma
            )));
        }
        if self.model_count == 0 {
            return Err(Error::Contract("model_count must be positive".into()));
        }
        Ok(())
    }
}

/// Score below which Soft-NMS drops a decayed detection.
const SOFT_NMS_DROP_THR: f64 = 1e-3;

fn check_single_group(dets: &[Detection]) -> Result<()> {
    if let Some(first) = dets.first() {
        let key = first.group_key();
        if let Some(bad) = dets.iter().find(|d| d.group_key() != key) {
            return Err(Error::Contract(format!(
                "detections span multiple (volume, slice, label) groups: \
                 ({}, {}, {}) vs ({}, {}, {})",
                key.0, key.1, key.2, bad.volume_id, bad.slice_index, bad.label
            )));
        }
    }
    Ok(())
}

/// Greedy non-maximum suppression. Keeps the highest-score detection,
/// discards everything overlapping it above `iou_thr`, repeats. Scores are
/// never mutated; the output is a subset of the input in descending score
/// order.
pub fn nms(dets: &[Detection], iou_thr: f64) -> Result<Vec<Detection>> {
    check_single_group(dets)?;
    let mut sorted: Vec<Detection> = dets.to_vec();
    sorted.sort_by(|a, b| a.cmp_score_desc(b));

    let mut kept: Vec<Detection> = Vec::new();
    for det in sorted {
        if kept.iter().all(|k| k.bbox.iou(&det.bbox) <= iou_thr) {
            kept.push(det);
        }
    }
    Ok(kept)
}

/// Gaussian Soft-NMS. Instead of discarding overlapping boxes, each pass
/// decays the remaining scores by exp(-iou^2 / sigma) against the box just
/// kept; detections whose decayed score falls below 1e-3 are dropped.
pub fn soft_nms(dets: &[Detection], params: &FusionParams) -> Result<Vec<Detection>> {
    check_single_group(dets)?;
    params.validate()?;
    let mut remaining: Vec<Detection> = dets.to_vec();
    remaining.sort_by(|a, b| a.cmp_score_desc(b));

    let mut kept: Vec<Detection> = Vec::new();
    while !remaining.is_empty() {
        // highest decayed score so far; the initial sort makes index 0 the
        // max, later decays can reorder so re-scan
        let best = remaining
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.cmp_score_desc(b))
            .map(|(i, _)| i)
            .unwrap();
        let top = remaining.swap_remove(best);
        for det in &mut remaining {
            let iou = top.bbox.iou(&det.bbox);
            if iou > 0.0 {
                det.score *= (-iou * iou / params.soft_nms_sigma).exp();
            }
        }
        remaining.retain(|d| d.score >= SOFT_NMS_DROP_THR);
        kept.push(top);
    }
    kept.sort_by(|a, b| a.cmp_score_desc(b));
    Ok(kept)
}

struct Cluster {
    members: Vec<Detection>,
    fused: Detection,
}

impl Cluster {
    fn new(seed: Detection) -> Self {
        let fused = seed.clone();
        Self {
            members: vec![seed],
            fused,
        }
    }

    fn join(&mut self, det: Detection, score_mode: ScoreMode) {
        self.members.push(det);
        self.recompute(score_mode);
    }

    // recompute the fused box online, as members join
    fn recompute(&mut self, score_mode: ScoreMode) {
        let total: f64 = self.members.iter().map(|m| m.score).sum();
        let wmean = |f: fn(&Box2D) -> f64| -> f64 {
            self.members
                .iter()
                .map(|m| m.score * f(&m.bbox))
                .sum::<f64>()
                / total
        };
        self.fused.bbox = Box2D::new(
            wmean(Box2D::x1),
            wmean(Box2D::y1),
            wmean(Box2D::x2),
            wmean(Box2D::y2),
        )
        .expect("weighted mean of valid boxes is valid");
        self.fused.score = match score_mode {
            ScoreMode::Mean => total / self.members.len() as f64,
            ScoreMode::Max => self
                .members
                .iter()
                .map(|m| m.score)
                .fold(f64::NEG_INFINITY, f64::max),
        };
    }
}

/// Weighted Boxes Fusion over one (volume, slice, label) group, one
/// detection list per model. Detections are pooled and clustered greedily
/// against the running fused box; fused coordinates are the score-weighted
/// mean of cluster members.
pub fn wbf(det_sets: &[Vec<Detection>], params: &FusionParams) -> Result<Vec<Detection>> {
    params.validate()?;
    if det_sets.is_empty() {
        return Ok(Vec::new());
    }
    if det_sets.len() != params.model_count {
        return Err(Error::Contract(format!(
            "model_count {} does not match {} detection sets",
            params.model_count,
            det_sets.len()
        )));
    }
    let mut pooled: Vec<Detection> = det_sets.iter().flatten().cloned().collect();
    check_single_group(&pooled)?;
    pooled.sort_by(|a, b| a.cmp_score_desc(b));

    let mut clusters: Vec<Cluster> = Vec::new();
    for det in pooled {
        match clusters
            .iter_mut()
            .find(|c| c.fused.bbox.iou(&det.bbox) > params.iou_cluster_thr)
        {
            Some(cluster) => cluster.join(det, params.score_mode),
            None => clusters.push(Cluster::new(det)),
        }
    }

    let t = params.model_count as f64;
    let mut fused: Vec<Detection> = clusters
        .into_iter()
        .map(|c| {
            let mut out = c.fused;
            out.model_id = "fused".to_string();
            if params.rescale_mode == RescaleMode::CountOverModels {
                out.score *= (c.members.len() as f64).min(t) / t;
            }
            out
        })
        .collect();
    fused.sort_by(|a, b| a.cmp_score_desc(b));
    Ok(fused)
}

/// Apply one fusion method per (volume, slice, label) group across whole
/// datasets and reassemble. NMS and Soft-NMS pool all models' detections;
/// WBF keeps the per-model split within each group.
pub fn fuse_volume(
    per_model: &[DetectionDataset],
    params: &FusionParams,
    method: FusionMethod,
) -> Result<DetectionDataset> {
    let volume_index = per_model
        .first()
        .map(|d| d.volume_index.clone())
        .unwrap_or_default();
    for ds in per_model {
        for det in &ds.records {
            if !volume_index.contains_key(&det.volume_id) {
                return Err(Error::Referential(format!(
                    "detection references volume `{}` absent from the shared volume inventory",
                    det.volume_id
                )));
            }
        }
    }

    // group -> per-model detection lists
    type Key = (String, usize, String);
    let mut groups: BTreeMap<Key, Vec<Vec<Detection>>> = BTreeMap::new();
    for (model_idx, ds) in per_model.iter().enumerate() {
        for det in &ds.records {
            let key = (det.volume_id.clone(), det.slice_index, det.label.clone());
            groups
                .entry(key)
                .or_insert_with(|| vec![Vec::new(); per_model.len()])[model_idx]
                .push(det.clone());
        }
    }

    let mut params = params.clone();
    params.model_count = per_model.len().max(1);

    let mut records = Vec::new();
    for sets in groups.values() {
        let fused = match method {
            FusionMethod::Wbf => wbf(sets, &params)?,
            FusionMethod::Nms => {
                let pooled: Vec<Detection> = sets.iter().flatten().cloned().collect();
                nms(&pooled, params.nms_iou_thr)?
            }
            FusionMethod::SoftNms => {
                let pooled: Vec<Detection> = sets.iter().flatten().cloned().collect();
                soft_nms(&pooled, &params)?
            }
        };
        records.extend(fused);
    }
    DetectionDataset::new(records, volume_index)
}
