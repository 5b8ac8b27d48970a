//! Volume preprocessing: percentile intensity normalization, 3-slice
//! channel windows, and the `.tvol` container format.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// A scalar image volume, slice-major (z outermost).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub dims: (usize, usize, usize),
    pub voxels: Vec<f64>,
    /// (min, max) recorded after normalization.
    pub value_range: Option<(f64, f64)>,
}

impl Volume {
    pub fn new(dims: (usize, usize, usize), voxels: Vec<f64>) -> Result<Self> {
        let (nx, ny, nz) = dims;
        let expected = nx
            .checked_mul(ny)
            .and_then(|v| v.checked_mul(nz))
            .ok_or_else(|| Error::Volume("dimension overflow".into()))?;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::Volume("dimensions must be positive".into()));
        }
        if voxels.len() != expected {
            return Err(Error::Volume(format!(
                "voxel count {} does not match dims {}x{}x{}",
                voxels.len(),
                nx,
                ny,
                nz
            )));
        }
        if voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Volume("voxel values must be finite".into()));
        }
        Ok(Self {
            dims,
            voxels,
            value_range: None,
        })
    }

    pub fn slice_len(&self) -> usize {
        self.dims.0 * self.dims.1
    }

    pub fn slice(&self, index: usize) -> &[f64] {
        let n = self.slice_len();
        &self.voxels[index * n..(index + 1) * n]
    }
}

/// Linear-interpolated order statistic at `pct` percent over a sorted slice
/// (rank = pct/100 * (n-1), zero-based).
fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = pct / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Clip to the [lo_pct, hi_pct] empirical percentile band and map affinely
/// to [0, 1]. Constant volumes map to all zeros.
pub fn percentile_normalize(v: &Volume, lo_pct: f64, hi_pct: f64) -> Result<Volume> {
    if v.voxels.is_empty() {
        return Err(Error::Contract("cannot normalize an empty volume".into()));
    }
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::Contract(format!(
            "percentile band [{lo_pct}, {hi_pct}] is invalid"
        )));
    }
    let mut sorted = v.voxels.clone();
    sorted.sort_by(f64::total_cmp);
    let p_lo = percentile_sorted(&sorted, lo_pct);
    let p_hi = percentile_sorted(&sorted, hi_pct);

    let voxels: Vec<f64> = if p_hi == p_lo {
        vec![0.0; v.voxels.len()]
    } else {
        let span = p_hi - p_lo;
        v.voxels
            .iter()
            .map(|&x| (x.clamp(p_lo, p_hi) - p_lo) / span)
            .collect()
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &x in &voxels {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok(Volume {
        dims: v.dims,
        voxels,
        value_range: Some((lo, hi)),
    })
}

/// Three adjacent slices (prev, center, next) around one center slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceWindow {
    pub center_index: usize,
    pub channels: [Vec<f64>; 3],
}

/// One window per slice; out-of-range neighbors are edge-replicated so the
/// output length always equals nz.
pub fn make_slice_windows(v: &Volume) -> Vec<SliceWindow> {
    let nz = v.dims.2;
    (0..nz)
        .map(|i| {
            let prev = i.saturating_sub(1);
            let next = (i + 1).min(nz - 1);
            SliceWindow {
                center_index: i,
                channels: [
                    v.slice(prev).to_vec(),
                    v.slice(i).to_vec(),
                    v.slice(next).to_vec(),
                ],
            }
        })
        .collect()
}

const DIM_XY_BOUNDS: (usize, usize) = (64, 4096);
const DIM_Z_BOUNDS: (usize, usize) = (1, 2048);

fn check_ingest_dims(dims: (usize, usize, usize)) -> Result<()> {
    let (nx, ny, nz) = dims;
    for (name, v) in [("nx", nx), ("ny", ny)] {
        if v < DIM_XY_BOUNDS.0 || v > DIM_XY_BOUNDS.1 {
            return Err(Error::Volume(format!(
                "{name}={v} outside sanity bounds [{}, {}]",
                DIM_XY_BOUNDS.0, DIM_XY_BOUNDS.1
            )));
        }
    }
    if nz < DIM_Z_BOUNDS.0 || nz > DIM_Z_BOUNDS.1 {
        return Err(Error::Volume(format!(
            "nz={nz} outside sanity bounds [{}, {}]",
            DIM_Z_BOUNDS.0, DIM_Z_BOUNDS.1
        )));
    }
    Ok(())
}

/// Read a `.tvol` file: one UTF-8 JSON header line
/// `{"dims":[nx,ny,nz],"dtype":"f32le","layout":"slice-major"}` followed by
/// the raw little-endian f32 payload. Dimension sanity bounds are enforced
/// here, on ingest.
pub fn read_tvol(path: &Path) -> Result<Volume> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let bytes = fs::read(path).map_err(io_err)?;
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Volume(format!("{}: missing header line", path.display())))?;
    let header: Value = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| Error::Volume(format!("{}: bad header: {e}", path.display())))?;
    if header.get("dtype").and_then(Value::as_str) != Some("f32le") {
        return Err(Error::Volume(format!(
            "{}: unsupported dtype (expected f32le)",
            path.display()
        )));
    }
    if header.get("layout").and_then(Value::as_str) != Some("slice-major") {
        return Err(Error::Volume(format!(
            "{}: unsupported layout (expected slice-major)",
            path.display()
        )));
    }
    let dims_arr = header
        .get("dims")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 3)
        .ok_or_else(|| Error::Volume(format!("{}: dims must be [nx, ny, nz]", path.display())))?;
    let mut dims = [0usize; 3];
    for (i, d) in dims_arr.iter().enumerate() {
        dims[i] = d
            .as_u64()
            .ok_or_else(|| Error::Volume(format!("{}: dims must be integers", path.display())))?
            as usize;
    }
    let dims = (dims[0], dims[1], dims[2]);
    check_ingest_dims(dims)?;

    let payload = &bytes[newline + 1..];
    let expected = dims.0 * dims.1 * dims.2 * 4;
    if payload.len() != expected {
        return Err(Error::Volume(format!(
            "{}: payload is {} bytes, expected {expected}",
            path.display(),
            payload.len()
        )));
    }
    let voxels: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::new(dims, voxels)
}

pub fn write_tvol(path: &Path, v: &Volume) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.display().to_string(),
        source,
    };
    let header = serde_json::json!({
        "dims": [v.dims.0, v.dims.1, v.dims.2],
        "dtype": "f32le",
        "layout": "slice-major",
    });
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(header.to_string().as_bytes()).map_err(io_err)?;
    file.write_all(b"\n").map_err(io_err)?;
    let mut payload = Vec::with_capacity(v.voxels.len() * 4);
    for &x in &v.voxels {
        payload.extend_from_slice(&(x as f32).to_le_bytes());
    }
    file.write_all(&payload).map_err(io_err)?;
    file.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(dims: (usize, usize, usize), voxels: Vec<f64>) -> Volume {
        Volume::new(dims, voxels).unwrap()
    }

    #[test]
    fn constant_volume_normalizes_to_zeros() {
        let v = vol((2, 2, 1), vec![7.0; 4]);
        let out = percentile_normalize(&v, 1.0, 99.0).unwrap();
        assert!(out.voxels.iter().all(|&x| x == 0.0));
        assert_eq!(out.value_range, Some((0.0, 0.0)));
    }

    #[test]
    fn percentile_oracle_example() {
        // 1000 voxels 1..=1000 under rank = pct/100 * (n-1):
        // p1 = s[9] + 0.99 = 10.99, p99 = s[989] + 0.01 = 990.01
        let voxels: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        let v = vol((10, 10, 10), voxels);
        let out = percentile_normalize(&v, 1.0, 99.0).unwrap();
        let expected = (500.0 - 10.99) / (990.01 - 10.99);
        let got = out.voxels[499];
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
        assert!((got - 0.5).abs() < 1e-3);
    }

    #[test]
    fn output_spans_unit_interval_at_endpoints() {
        let voxels: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let v = vol((20, 20, 1), voxels);
        let out = percentile_normalize(&v, 1.0, 99.0).unwrap();
        assert_eq!(out.value_range, Some((0.0, 1.0)));
        assert!(out.voxels.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn windows_single_slice_replicates() {
        let v = vol((2, 2, 1), vec![1.0, 2.0, 3.0, 4.0]);
        let w = make_slice_windows(&v);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].channels[0], w[0].channels[1]);
        assert_eq!(w[0].channels[1], w[0].channels[2]);
    }

    #[test]
    fn windows_interior_and_edges() {
        let voxels: Vec<f64> = (0..5).flat_map(|z| vec![z as f64; 4]).collect();
        let v = vol((2, 2, 5), voxels);
        let w = make_slice_windows(&v);
        assert_eq!(w.len(), 5);
        // i=0: (s0, s0, s1)
        assert_eq!(w[0].channels[0], vec![0.0; 4]);
        assert_eq!(w[0].channels[1], vec![0.0; 4]);
        assert_eq!(w[0].channels[2], vec![1.0; 4]);
        // interior i=1: (s0, s1, s2)
        assert_eq!(w[1].channels[0], vec![0.0; 4]);
        assert_eq!(w[1].channels[1], vec![1.0; 4]);
        assert_eq!(w[1].channels[2], vec![2.0; 4]);
        // last: (s3, s4, s4)
        assert_eq!(w[4].channels[2], vec![4.0; 4]);
    }

    #[test]
    fn tvol_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tvol");
        let voxels: Vec<f64> = (0..64 * 64 * 3).map(|i| (i % 97) as f64).collect();
        let v = vol((64, 64, 3), voxels);
        write_tvol(&path, &v).unwrap();
        let back = read_tvol(&path).unwrap();
        assert_eq!(back.dims, v.dims);
        assert_eq!(back.voxels, v.voxels);
    }

    #[test]
    fn tvol_rejects_insane_dims() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tvol");
        fs::write(
            &path,
            b"{\"dims\":[2,2,1],\"dtype\":\"f32le\",\"layout\":\"slice-major\"}\n\x00\x00\x00\x00",
        )
        .unwrap();
        assert!(read_tvol(&path).is_err());
    }
}
