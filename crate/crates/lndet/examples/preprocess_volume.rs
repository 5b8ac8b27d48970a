//! Preprocess a raw intensity volume: percentile-normalize to [0, 1] and
//! expand it into 3-slice windows for a 2.5D detector, with a .tvol
//! round trip on disk.
//!
//! Run with: cargo run --example preprocess_volume

use lndet::{make_slice_windows, percentile_normalize, read_tvol, write_tvol, Volume};

fn main() -> anyhow::Result<()> {
    // A small synthetic volume: smooth ramp plus a couple of hot voxels,
    // the kind of outliers percentile clipping is there to absorb.
    let (nx, ny, nz) = (64, 64, 5);
    let mut voxels: Vec<f64> = (0..nx * ny * nz).map(|i| (i % 977) as f64).collect();
    voxels[100] = 1e6;
    voxels[5000] = -1e6;
    let volume = Volume::new((nx, ny, nz), voxels)?;

    let normalized = percentile_normalize(&volume, 1.0, 99.0)?;
    let (lo, hi) = normalized.value_range.unwrap();
    println!("clipped intensity range: [{lo:.2}, {hi:.2}]");
    let (min, max) = normalized
        .voxels
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    println!("normalized voxels span [{min:.3}, {max:.3}]");

    let windows = make_slice_windows(&normalized);
    println!("\n{} slice windows (prev / center / next):", windows.len());
    for w in &windows {
        let mean = |c: &[f64]| c.iter().sum::<f64>() / c.len() as f64;
        println!(
            "  center slice {}  channel means: {:.3} / {:.3} / {:.3}",
            w.center_index,
            mean(&w.channels[0]),
            mean(&w.channels[1]),
            mean(&w.channels[2]),
        );
    }

    // .tvol round trip (f32 payload, so expect ~1e-7 relative fidelity)
    let dir = std::env::temp_dir().join("lndet_preprocess_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("normalized.tvol");
    write_tvol(&path, &normalized)?;
    let back = read_tvol(&path)?;
    let worst = normalized
        .voxels
        .iter()
        .zip(&back.voxels)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("\nwrote {} and read it back, max voxel error {worst:.2e}", path.display());
    Ok(())
}
