//! JSON-Lines datasets for detections, annotations, and the volume
//! inventory, with line-addressed validation and canonical serialization.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::LesionAnnotation;
use crate::fusion::{default_label, Detection};
use crate::geometry::Box2D;

/// volume_id -> slice count.
pub type VolumeIndex = BTreeMap<String, usize>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionDataset {
    pub records: Vec<Detection>,
    pub volume_index: VolumeIndex,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotationDataset {
    pub lesions: Vec<LesionAnnotation>,
    pub volume_index: VolumeIndex,
}

fn canonical_det_order(a: &Detection, b: &Detection) -> Ordering {
    a.volume_id
        .cmp(&b.volume_id)
        .then_with(|| a.slice_index.cmp(&b.slice_index))
        .then_with(|| a.cmp_score_desc(b))
}

impl DetectionDataset {
    pub fn new(records: Vec<Detection>, volume_index: VolumeIndex) -> Result<Self> {
        for det in &records {
            let slices = volume_index.get(&det.volume_id).ok_or_else(|| {
                Error::Referential(format!(
                    "detection references unknown volume `{}`",
                    det.volume_id
                ))
            })?;
            if det.slice_index >= *slices {
                return Err(Error::Contract(format!(
                    "slice_index {} out of range for volume `{}` ({} slices)",
                    det.slice_index, det.volume_id, slices
                )));
            }
            if !(0.0..=1.0).contains(&det.score) {
                return Err(Error::Contract(format!(
                    "score {} outside [0, 1]",
                    det.score
                )));
            }
        }
        Ok(Self {
            records,
            volume_index,
        })
    }

    /// Records in canonical (volume_id, slice_index, score-descending) order.
    pub fn canonical_records(&self) -> Vec<Detection> {
        let mut sorted = self.records.clone();
        sorted.sort_by(canonical_det_order);
        sorted
    }

    pub fn by_volume(&self) -> BTreeMap<String, Vec<Detection>> {
        let mut map: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for det in self.canonical_records() {
            map.entry(det.volume_id.clone()).or_default().push(det);
        }
        map
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for det in self.canonical_records() {
            out.push_str(&serde_json::to_string(&det).expect("detection serializes"));
            out.push('\n');
        }
        out
    }
}

impl AnnotationDataset {
    pub fn new(lesions: Vec<LesionAnnotation>, volume_index: VolumeIndex) -> Result<Self> {
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        for lesion in &lesions {
            if !seen.insert((&lesion.volume_id, &lesion.lesion_id)) {
                return Err(Error::Contract(format!(
                    "duplicate lesion `{}` in volume `{}`",
                    lesion.lesion_id, lesion.volume_id
                )));
            }
            let slices = volume_index.get(&lesion.volume_id).ok_or_else(|| {
                Error::Referential(format!(
                    "lesion `{}` references unknown volume `{}`",
                    lesion.lesion_id, lesion.volume_id
                ))
            })?;
            if let Some((s, _)) = lesion.extent.iter().find(|(s, _)| s >= slices) {
                return Err(Error::Contract(format!(
                    "lesion `{}` extends to slice {} beyond volume `{}` ({} slices)",
                    lesion.lesion_id, s, lesion.volume_id, slices
                )));
            }
        }
        Ok(Self {
            lesions,
            volume_index,
        })
    }

    pub fn total_lesions(&self) -> usize {
        self.lesions.len()
    }

    /// Lesions grouped per volume, with an entry for every inventory volume
    /// so lesion-free volumes still count in FP-per-volume denominators.
    pub fn by_volume(&self) -> BTreeMap<String, Vec<LesionAnnotation>> {
        let mut map: BTreeMap<String, Vec<LesionAnnotation>> = self
            .volume_index
            .keys()
            .map(|v| (v.clone(), Vec::new()))
            .collect();
        for lesion in &self.lesions {
            map.get_mut(&lesion.volume_id)
                .expect("validated at construction")
                .push(lesion.clone());
        }
        map
    }

    pub fn to_jsonl(&self) -> String {
        let mut rows: Vec<(String, String, usize, [f64; 4])> = self
            .lesions
            .iter()
            .flat_map(|l| {
                l.extent.iter().map(move |(s, b)| {
                    (l.volume_id.clone(), l.lesion_id.clone(), *s, b.corners())
                })
            })
            .collect();
        rows.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });
        let mut out = String::new();
        for (volume_id, lesion_id, slice_index, bbox) in rows {
            let row = serde_json::json!({
                "volume_id": volume_id,
                "lesion_id": lesion_id,
                "slice_index": slice_index,
                "bbox": bbox,
            });
            out.push_str(&row.to_string());
            out.push('\n');
        }
        out
    }
}

struct LineCtx<'a> {
    file: &'a str,
    line: usize,
}

impl LineCtx<'_> {
    fn validation(&self, field: &str, message: impl Into<String>) -> Error {
        Error::Validation {
            file: self.file.to_string(),
            line: self.line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn str_field(&self, record: &Value, field: &str) -> Result<String> {
        record
            .get(field)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| self.validation(field, "missing or not a string"))
    }

    fn uint_field(&self, record: &Value, field: &str) -> Result<usize> {
        record
            .get(field)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| self.validation(field, "missing or not a non-negative integer"))
    }

    fn bbox_field(&self, record: &Value) -> Result<Box2D> {
        let arr = record
            .get("bbox")
            .and_then(Value::as_array)
            .ok_or_else(|| self.validation("bbox", "missing or not an array"))?;
        if arr.len() != 4 {
            return Err(self.validation("bbox", format!("expected 4 coordinates, got {}", arr.len())));
        }
        let mut coords = [0.0; 4];
        for (i, v) in arr.iter().enumerate() {
            coords[i] = v
                .as_f64()
                .ok_or_else(|| self.validation("bbox", "coordinate is not a number"))?;
        }
        Box2D::new(coords[0], coords[1], coords[2], coords[3])
            .map_err(|e| self.validation("bbox", e.to_string()))
    }

    fn check_volume(&self, index: &VolumeIndex, volume_id: &str, slice_index: usize) -> Result<()> {
        let slices = index.get(volume_id).ok_or_else(|| {
            self.validation("volume_id", format!("unknown volume `{volume_id}`"))
        })?;
        if slice_index >= *slices {
            return Err(self.validation(
                "slice_index",
                format!("{slice_index} out of range for volume `{volume_id}` ({slices} slices)"),
            ));
        }
        Ok(())
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn parse_line(ctx: &LineCtx, line: &str) -> Result<Value> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        file: ctx.file.to_string(),
        line: ctx.line,
        message: e.to_string(),
    })
}

/// Parse the volumes.json inventory: one `{"volume_id", "dims": [nx, ny, nz]}`
/// record per line. Slice count is nz.
pub fn parse_volume_index(path: &Path) -> Result<VolumeIndex> {
    let file = path.display().to_string();
    let mut index = VolumeIndex::new();
    for (line_no, line) in read_lines(path)? {
        let ctx = LineCtx {
            file: &file,
            line: line_no,
        };
        let record = parse_line(&ctx, &line)?;
        let volume_id = ctx.str_field(&record, "volume_id")?;
        let dims = record
            .get("dims")
            .and_then(Value::as_array)
            .ok_or_else(|| ctx.validation("dims", "missing or not an array"))?;
        if dims.len() != 3 {
            return Err(ctx.validation("dims", format!("expected 3 dims, got {}", dims.len())));
        }
        let nz = dims[2]
            .as_u64()
            .filter(|&v| v >= 1)
            .ok_or_else(|| ctx.validation("dims", "nz must be a positive integer"))?;
        if index.insert(volume_id.clone(), nz as usize).is_some() {
            return Err(ctx.validation("volume_id", format!("duplicate volume `{volume_id}`")));
        }
    }
    Ok(index)
}

/// Parse a detections.jsonl file against a volume inventory.
pub fn parse_detections(path: &Path, volume_index: &VolumeIndex) -> Result<DetectionDataset> {
    let file = path.display().to_string();
    let mut records = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let ctx = LineCtx {
            file: &file,
            line: line_no,
        };
        let record = parse_line(&ctx, &line)?;
        let volume_id = ctx.str_field(&record, "volume_id")?;
        let slice_index = ctx.uint_field(&record, "slice_index")?;
        ctx.check_volume(volume_index, &volume_id, slice_index)?;
        let bbox = ctx.bbox_field(&record)?;
        let score = record
            .get("score")
            .and_then(Value::as_f64)
            .ok_or_else(|| ctx.validation("score", "missing or not a number"))?;
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(ctx.validation("score", format!("{score} outside [0, 1]")));
        }
        let model_id = ctx.str_field(&record, "model_id")?;
        let label = match record.get("label") {
            None => default_label(),
            Some(_) => ctx.str_field(&record, "label")?,
        };
        records.push(Detection {
            volume_id,
            slice_index,
            bbox,
            score,
            model_id,
            label,
        });
    }
    DetectionDataset::new(records, volume_index.clone())
}

/// Parse an annotations.jsonl file, grouping per-slice GT rows by
/// (volume_id, lesion_id) into lesion extents.
pub fn parse_annotations(path: &Path, volume_index: &VolumeIndex) -> Result<AnnotationDataset> {
    let file = path.display().to_string();
    // keyed by (volume_id, lesion_id), insertion-ordered extents
    let mut extents: BTreeMap<(String, String), Vec<(usize, Box2D)>> = BTreeMap::new();
    for (line_no, line) in read_lines(path)? {
        let ctx = LineCtx {
            file: &file,
            line: line_no,
        };
        let record = parse_line(&ctx, &line)?;
        let volume_id = ctx.str_field(&record, "volume_id")?;
        let lesion_id = ctx.str_field(&record, "lesion_id")?;
        let slice_index = ctx.uint_field(&record, "slice_index")?;
        ctx.check_volume(volume_index, &volume_id, slice_index)?;
        let bbox = ctx.bbox_field(&record)?;
        let extent = extents.entry((volume_id, lesion_id.clone())).or_default();
        if extent.iter().any(|(s, _)| *s == slice_index) {
            return Err(ctx.validation(
                "slice_index",
                format!("duplicate slice {slice_index} for lesion `{lesion_id}`"),
            ));
        }
        extent.push((slice_index, bbox));
    }
    let lesions = extents
        .into_iter()
        .map(|((volume_id, lesion_id), mut extent)| {
            extent.sort_by_key(|(s, _)| *s);
            LesionAnnotation::new(lesion_id, volume_id, extent)
        })
        .collect::<Result<Vec<_>>>()?;
    AnnotationDataset::new(lesions, volume_index.clone())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn volume_index_to_jsonl(index: &VolumeIndex, dims: impl Fn(&str) -> (usize, usize)) -> String {
    let mut out = String::new();
    for (volume_id, nz) in index {
        let (nx, ny) = dims(volume_id);
        out.push_str(
            &serde_json::json!({"volume_id": volume_id, "dims": [nx, ny, nz]}).to_string(),
        );
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_file(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn index() -> VolumeIndex {
        VolumeIndex::from([("v1".to_string(), 20), ("v2".to_string(), 30)])
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let f = temp_file("");
        let ds = parse_detections(f.path(), &index()).unwrap();
        assert!(ds.records.is_empty());
        let ds = parse_annotations(f.path(), &index()).unwrap();
        assert!(ds.lesions.is_empty());
    }

    #[test]
    fn detection_round_trip_is_identity() {
        let line = r#"{"volume_id":"v1","slice_index":3,"bbox":[1.5,2.5,10.0,12.25],"score":0.875,"model_id":"vfnet","label":"LN"}"#;
        let f = temp_file(line);
        let ds = parse_detections(f.path(), &index()).unwrap();
        assert_eq!(ds.records.len(), 1);
        let serialized = ds.to_jsonl();
        let f2 = temp_file(&serialized);
        let ds2 = parse_detections(f2.path(), &index()).unwrap();
        assert_eq!(ds, ds2);
        assert_eq!(serialized, ds2.to_jsonl());
    }

    #[test]
    fn score_out_of_range_names_field() {
        let line = r#"{"volume_id":"v1","slice_index":3,"bbox":[0,0,5,5],"score":1.5,"model_id":"m"}"#;
        let f = temp_file(line);
        let err = parse_detections(f.path(), &index()).unwrap_err();
        match err {
            Error::Validation { field, line, .. } => {
                assert_eq!(field, "score");
                assert_eq!(line, 1);
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let f = temp_file("{\"volume_id\": \"v1\",\n{not json}");
        let err = parse_detections(f.path(), &index()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn unknown_volume_rejected() {
        let line = r#"{"volume_id":"ghost","slice_index":3,"bbox":[0,0,5,5],"score":0.5,"model_id":"m"}"#;
        let f = temp_file(line);
        let err = parse_detections(f.path(), &index()).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "volume_id"));
    }

    #[test]
    fn annotation_rows_group_into_extents() {
        let content = "\
{\"volume_id\":\"v1\",\"lesion_id\":\"L1\",\"slice_index\":4,\"bbox\":[0,0,5,5]}
{\"volume_id\":\"v1\",\"lesion_id\":\"L1\",\"slice_index\":5,\"bbox\":[0,0,5,6]}
";
        let f = temp_file(content);
        let ds = parse_annotations(f.path(), &index()).unwrap();
        assert_eq!(ds.lesions.len(), 1);
        assert_eq!(ds.lesions[0].extent.len(), 2);
    }

    #[test]
    fn duplicate_lesion_slice_rejected() {
        let content = "\
{\"volume_id\":\"v1\",\"lesion_id\":\"L1\",\"slice_index\":4,\"bbox\":[0,0,5,5]}
{\"volume_id\":\"v1\",\"lesion_id\":\"L1\",\"slice_index\":4,\"bbox\":[1,1,6,6]}
";
        let f = temp_file(content);
        let err = parse_annotations(f.path(), &index()).unwrap_err();
        assert!(matches!(err, Error::Validation { line: 2, .. }));
    }

    #[test]
    fn inverted_bbox_rejected() {
        let line = r#"{"volume_id":"v1","slice_index":3,"bbox":[5,0,0,5],"score":0.5,"model_id":"m"}"#;
        let f = temp_file(line);
        let err = parse_detections(f.path(), &index()).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "bbox"));
    }
}
