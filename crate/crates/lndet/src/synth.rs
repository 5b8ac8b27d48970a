//! Seeded synthetic ground-truth and detection generator.
//!
//! Lesions are placed on disjoint grid cells in the left half of each slice
//! plane; false positives live in the right half, so TP/FP status is known
//! by construction and guard-checked on every generation. Counts are
//! realized exactly (quota sampling), which lets downstream metrics be
//! compared by equality.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationDataset, DetectionDataset, VolumeIndex};
use crate::error::{Error, Result};
use crate::evaluation::LesionAnnotation;
use crate::fusion::{default_label, Detection};
use crate::geometry::Box2D;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub model_id: String,
    /// Fraction of lesions this detector finds (quota-realized).
    pub hit_probability: f64,
    /// Mean false positives per volume (quota-realized in total).
    pub fp_per_volume: f64,
    pub tp_score_range: (f64, f64),
    pub fp_score_range: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_volumes: usize,
    /// Inclusive (min, max) lesions per volume.
    pub lesions_per_volume: (usize, usize),
    /// Inclusive (min, max) slices per lesion extent.
    pub slices_per_lesion: (usize, usize),
    /// (nx, ny, nz) of every generated volume.
    pub image_dims: (usize, usize, usize),
    pub detector_profiles: Vec<DetectorProfile>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_volumes: 8,
            lesions_per_volume: (1, 3),
            slices_per_lesion: (1, 3),
            image_dims: (512, 512, 24),
            detector_profiles: vec![DetectorProfile {
                model_id: "synth".into(),
                hit_probability: 0.8,
                fp_per_volume: 2.0,
                tp_score_range: (0.5, 1.0),
                fp_score_range: (0.0, 0.9),
            }],
            seed: 0,
        }
    }
}

/// Exact realized counts, enabling equality comparisons downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelStats {
    pub detected_lesions: usize,
    pub tp_count: usize,
    pub fp_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedStats {
    pub n_volumes: usize,
    pub total_lesions: usize,
    pub total_gt_boxes: usize,
    pub per_model: BTreeMap<String, ModelStats>,
}

// lesion grid geometry: cells of CELL px, boxes of BOX px at a MARGIN
// offset, jitter bounded so a jittered box never leaves its cell and always
// keeps IoU >= 0.25 with its source
const CELL: f64 = 24.0;
const BOX: f64 = 16.0;
const MARGIN: f64 = 4.0;
const JITTER: f64 = 3.0;

struct PlacedLesion {
    volume: usize,
    cell: (usize, usize),
    extent_slices: Vec<usize>,
}

pub fn synth_generate(
    cfg: &SynthConfig,
) -> Result<(AnnotationDataset, BTreeMap<String, DetectionDataset>, ExpectedStats)> {
    let (nx, ny, nz) = cfg.image_dims;
    if cfg.n_volumes == 0 {
        return Err(Error::SynthCapacity("n_volumes must be positive".into()));
    }
    if cfg.lesions_per_volume.0 > cfg.lesions_per_volume.1
        || cfg.slices_per_lesion.0 < 1
        || cfg.slices_per_lesion.0 > cfg.slices_per_lesion.1
        || cfg.slices_per_lesion.1 > nz
    {
        return Err(Error::SynthCapacity("invalid lesion shape ranges".into()));
    }
    for p in &cfg.detector_profiles {
        if !(0.0..=1.0).contains(&p.hit_probability) || p.fp_per_volume < 0.0 {
            return Err(Error::SynthCapacity(format!(
                "profile `{}` has invalid rates",
                p.model_id
            )));
        }
    }

    // lesion cells occupy x < nx/2; FP cells occupy x >= nx/2 + CELL
    let lesion_cols = ((nx as f64 / 2.0) / CELL).floor() as usize;
    let rows = (ny as f64 / CELL).floor() as usize;
    let capacity = lesion_cols * rows;
    if capacity < cfg.lesions_per_volume.1 {
        return Err(Error::SynthCapacity(format!(
            "cannot place {} lesions without overlap ({} cells available)",
            cfg.lesions_per_volume.1, capacity
        )));
    }
    let fp_col_start = (nx as f64 / 2.0 + CELL) as usize;
    let fp_cols = ((nx - fp_col_start) as f64 / CELL).floor() as usize;
    if fp_cols == 0 {
        return Err(Error::SynthCapacity(
            "volume too narrow to host a false-positive region".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let volume_index: VolumeIndex = (0..cfg.n_volumes)
        .map(|i| (format!("vol_{i:04}"), nz))
        .collect();

    // place lesions
    let mut placed: Vec<PlacedLesion> = Vec::new();
    let mut lesions: Vec<LesionAnnotation> = Vec::new();
    for vol in 0..cfg.n_volumes {
        let count = rng.gen_range(cfg.lesions_per_volume.0..=cfg.lesions_per_volume.1);
        let mut cells: Vec<(usize, usize)> = (0..lesion_cols)
            .flat_map(|c| (0..rows).map(move |r| (c, r)))
            .collect();
        cells.shuffle(&mut rng);
        for (li, &cell) in cells.iter().take(count).enumerate() {
            let extent_len = rng.gen_range(cfg.slices_per_lesion.0..=cfg.slices_per_lesion.1);
            let z0 = rng.gen_range(0..=nz - extent_len);
            let slices: Vec<usize> = (z0..z0 + extent_len).collect();
            let x0 = cell.0 as f64 * CELL + MARGIN;
            let y0 = cell.1 as f64 * CELL + MARGIN;
            let bbox = Box2D::new(x0, y0, x0 + BOX, y0 + BOX)?;
            lesions.push(LesionAnnotation::new(
                format!("les_{vol:04}_{li:02}"),
                format!("vol_{vol:04}"),
                slices.iter().map(|&s| (s, bbox)).collect(),
            )?);
            placed.push(PlacedLesion {
                volume: vol,
                cell,
                extent_slices: slices,
            });
        }
    }
    let annotations = AnnotationDataset::new(lesions.clone(), volume_index.clone())?;
    let total_lesions = lesions.len();
    let total_gt_boxes: usize = lesions.iter().map(|l| l.extent.len()).sum();

    let mut detections: BTreeMap<String, DetectionDataset> = BTreeMap::new();
    let mut per_model: BTreeMap<String, ModelStats> = BTreeMap::new();

    for profile in &cfg.detector_profiles {
        let mut records: Vec<Detection> = Vec::new();

        // quota of hit lesions, chosen by seeded shuffle
        let n_hits = (profile.hit_probability * total_lesions as f64).round() as usize;
        let mut order: Vec<usize> = (0..total_lesions).collect();
        order.shuffle(&mut rng);
        let mut hit: Vec<bool> = vec![false; total_lesions];
        for &idx in order.iter().take(n_hits) {
            hit[idx] = true;
        }

        let mut tp_count = 0;
        for (idx, lesion) in lesions.iter().enumerate() {
            if !hit[idx] {
                continue;
            }
            // one jittered TP per GT box of the extent, so box-level recall
            // is exact as well
            for (slice, gt_box) in &lesion.extent {
                let dx = rng.gen_range(-JITTER..=JITTER);
                let dy = rng.gen_range(-JITTER..=JITTER);
                let c = gt_box.corners();
                let bbox = Box2D::new(c[0] + dx, c[1] + dy, c[2] + dx, c[3] + dy)?;
                let iou = bbox.iou(gt_box);
                if iou < 0.25 {
                    return Err(Error::SynthCapacity(format!(
                        "guard failed: jittered TP has IoU {iou} < 0.25"
                    )));
                }
                records.push(Detection {
                    volume_id: lesion.volume_id.clone(),
                    slice_index: *slice,
                    bbox,
                    score: draw_score(&mut rng, profile.tp_score_range),
                    model_id: profile.model_id.clone(),
                    label: default_label(),
                });
                tp_count += 1;
            }
        }

        // total FP quota, distributed round-robin across volumes
        let fp_quota = (profile.fp_per_volume * cfg.n_volumes as f64).round() as usize;
        let mut fp_count = 0;
        for i in 0..fp_quota {
            let vol = i % cfg.n_volumes;
            let slice = rng.gen_range(0..nz);
            let col = rng.gen_range(0..fp_cols);
            let row = rng.gen_range(0..rows);
            let x0 = fp_col_start as f64 + col as f64 * CELL + MARGIN;
            let y0 = row as f64 * CELL + MARGIN;
            let bbox = Box2D::new(x0, y0, x0 + BOX, y0 + BOX)?;
            // guard: zero IoU with every GT box on this slice
            for p in placed.iter().filter(|p| p.volume == vol) {
                if p.extent_slices.contains(&slice) {
                    let gx0 = p.cell.0 as f64 * CELL + MARGIN;
                    let gy0 = p.cell.1 as f64 * CELL + MARGIN;
                    let gt_box = Box2D::new(gx0, gy0, gx0 + BOX, gy0 + BOX)?;
                    if bbox.iou(&gt_box) != 0.0 {
                        return Err(Error::SynthCapacity(
                            "guard failed: FP overlaps ground truth".into(),
                        ));
                    }
                }
            }
            records.push(Detection {
                volume_id: format!("vol_{vol:04}"),
                slice_index: slice,
                bbox,
                score: draw_score(&mut rng, profile.fp_score_range),
                model_id: profile.model_id.clone(),
                label: default_label(),
            });
            fp_count += 1;
        }

        per_model.insert(
            profile.model_id.clone(),
            ModelStats {
                detected_lesions: n_hits,
                tp_count,
                fp_count,
            },
        );
        detections.insert(
            profile.model_id.clone(),
            DetectionDataset::new(records, volume_index.clone())?,
        );
    }

    let stats = ExpectedStats {
        n_volumes: cfg.n_volumes,
        total_lesions,
        total_gt_boxes,
        per_model,
    };
    Ok((annotations, detections, stats))
}

fn draw_score(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 >= range.1 {
        range.0.clamp(0.0, 1.0)
    } else {
        rng.gen_range(range.0..range.1).clamp(0.0, 1.0)
    }
}
