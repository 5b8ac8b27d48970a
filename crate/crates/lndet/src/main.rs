//! Thin CLI over the `lndet` library. All pipeline logic lives in the
//! library modules; this binary only parses flags, reads files, and prints.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lndet::dataset::{
    parse_annotations, parse_detections, parse_volume_index, volume_index_to_jsonl, write_text,
};
use lndet::report::{froc_from_csv, froc_to_csv};
use lndet::{
    ensemble_gate, evaluate, froc, fuse_volume, make_slice_windows, percentile_normalize,
    read_tvol, render_report, select_hard_negatives, sensitivity_at_fp, synth_generate,
    write_tvol, DetectorProfile, EvalConfig, EvalReport, FusionMethod, FusionParams,
    Interpolation, ReportFormat, RescaleMode, SynthConfig,
};

#[derive(Parser)]
#[command(
    name = "lndet",
    about = "Detection post-processing and volumetric FROC/mAP evaluation"
)]
struct Cli {
    /// Worker threads (defaults to the number of cores). Output is
    /// identical regardless of this setting.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Nms,
    SoftNms,
    Wbf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RescaleArg {
    None,
    Count,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpArg {
    Step,
    Linear,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Csv,
    Json,
}

#[derive(Args)]
struct EvalInputs {
    /// detections.jsonl file
    #[arg(long)]
    detections: PathBuf,
    /// annotations.jsonl file
    #[arg(long)]
    annotations: PathBuf,
    /// volumes.json inventory
    #[arg(long)]
    volumes: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    iou_thr: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse per-model detection files into one deduplicated set
    Fuse {
        /// One detections.jsonl per model
        #[arg(long, required = true, num_args = 1..)]
        detections: Vec<PathBuf>,
        #[arg(long)]
        volumes: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long, default_value_t = 0.55)]
        wbf_iou: f64,
        #[arg(long, default_value_t = 0.5)]
        nms_iou: f64,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, value_enum, default_value = "count")]
        rescale: RescaleArg,
    },
    /// Evaluate detections against annotations and print a report row
    Evaluate {
        #[command(flatten)]
        inputs: EvalInputs,
        /// Comma-separated FP-per-volume budgets
        #[arg(long, default_value = "0.5,1,2,4,6,8,16", value_delimiter = ',')]
        fp_targets: Vec<f64>,
        #[arg(long, value_enum, default_value = "step")]
        interp: InterpArg,
        #[arg(long, default_value = "detections")]
        method_name: String,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
    /// Compute the FROC curve and write it as CSV
    Froc {
        #[command(flatten)]
        inputs: EvalInputs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Select ensemble members: names with mAP strictly above the threshold
    Gate {
        #[arg(long, default_value_t = 45.0)]
        threshold: f64,
        /// NAME=MAP pairs
        #[arg(required = true, num_args = 1..)]
        maps: Vec<String>,
    },
    /// Mine hard negatives: confident predictions with zero GT overlap
    MineNegatives {
        #[command(flatten)]
        inputs: EvalInputs,
        #[arg(long, default_value_t = 0.5)]
        fallback_floor: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Percentile-normalize a .tvol volume to [0, 1]
    Normalize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lo: f64,
        #[arg(long, default_value_t = 99.0)]
        hi: f64,
    },
    /// Expand a .tvol volume into per-slice 3-channel windows
    Windows {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Generate a seeded synthetic dataset with known TP/FP counts
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        volumes: usize,
        #[arg(long, default_value = "1,3", value_delimiter = ',')]
        lesions_per_volume: Vec<usize>,
        #[arg(long, default_value = "1,3", value_delimiter = ',')]
        slices_per_lesion: Vec<usize>,
        #[arg(long, default_value = "512,512,24", value_delimiter = ',')]
        dims: Vec<usize>,
        /// model:hit_prob:fp_rate[:tp_lo-tp_hi[:fp_lo-fp_hi]], repeatable
        #[arg(long = "profile", default_value = "synth:0.8:2")]
        profiles: Vec<String>,
    },
    /// Render evaluation reports (JSON list of reports) as table/csv/json
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Fuse {
            detections,
            volumes,
            output,
            method,
            wbf_iou,
            nms_iou,
            sigma,
            rescale,
        } => {
            let index = parse_volume_index(&volumes)?;
            let datasets = detections
                .iter()
                .map(|p| parse_detections(p, &index))
                .collect::<Result<Vec<_>, _>>()?;
            let params = FusionParams {
                iou_cluster_thr: wbf_iou,
                nms_iou_thr: nms_iou,
                soft_nms_sigma: sigma,
                rescale_mode: match rescale {
                    RescaleArg::None => RescaleMode::None,
                    RescaleArg::Count => RescaleMode::CountOverModels,
                },
                model_count: datasets.len().max(1),
                ..Default::default()
            };
            let method = match method {
                MethodArg::Nms => FusionMethod::Nms,
                MethodArg::SoftNms => FusionMethod::SoftNms,
                MethodArg::Wbf => FusionMethod::Wbf,
            };
            let fused = fuse_volume(&datasets, &params, method)?;
            write_text(&output, &fused.to_jsonl())?;
            eprintln!(
                "fused {} detections from {} models into {}",
                datasets.iter().map(|d| d.records.len()).sum::<usize>(),
                datasets.len(),
                fused.records.len()
            );
        }
        Command::Evaluate {
            inputs,
            fp_targets,
            interp,
            method_name,
            format,
        } => {
            let (dets, gt) = load_eval_inputs(&inputs)?;
            let cfg = EvalConfig {
                iou_thr: inputs.iou_thr,
                fp_targets,
                interpolation: match interp {
                    InterpArg::Step => Interpolation::Step,
                    InterpArg::Linear => Interpolation::Linear,
                },
            };
            let report = evaluate(&dets, &gt, &cfg, &method_name)?;
            print!("{}", render_report(&[report], to_format(format))?);
        }
        Command::Froc { inputs, output } => {
            let (dets, gt) = load_eval_inputs(&inputs)?;
            let cfg = EvalConfig {
                iou_thr: inputs.iou_thr,
                ..Default::default()
            };
            let curve = froc(&dets, &gt, &cfg)?;
            write_text(&output, &froc_to_csv(&curve)?)?;
            // spot-check the dump re-parses to the same curve
            debug_assert_eq!(froc_from_csv(&froc_to_csv(&curve)?)?, curve);
            let sens = sensitivity_at_fp(&curve, &cfg)?;
            for (t, s) in sens {
                eprintln!("S@{t} = {:.1}", s * 100.0);
            }
        }
        Command::Gate { threshold, maps } => {
            let pairs = maps
                .iter()
                .map(|m| {
                    let (name, value) = m
                        .split_once('=')
                        .ok_or_else(|| anyhow::anyhow!("expected NAME=MAP, got `{m}`"))?;
                    Ok((name.to_string(), value.parse::<f64>()?))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            for name in ensemble_gate(&pairs, threshold) {
                println!("{name}");
            }
        }
        Command::MineNegatives {
            inputs,
            fallback_floor,
            output,
        } => {
            let index = parse_volume_index(&inputs.volumes)?;
            let dets = parse_detections(&inputs.detections, &index)?;
            let ann = parse_annotations(&inputs.annotations, &index)?;
            let gt = ann.by_volume();
            let mut negatives = Vec::new();
            for (vol, dets) in dets.by_volume() {
                let lesions = gt.get(&vol).cloned().unwrap_or_default();
                let mined =
                    select_hard_negatives(&dets, &lesions, inputs.iou_thr, fallback_floor)?;
                negatives.extend(mined.hard_negatives);
            }
            let out = lndet::DetectionDataset::new(negatives, index)?;
            write_text(&output, &out.to_jsonl())?;
            eprintln!("mined {} hard negatives", out.records.len());
        }
        Command::Normalize {
            input,
            output,
            lo,
            hi,
        } => {
            let v = read_tvol(&input)?;
            let normalized = percentile_normalize(&v, lo, hi)?;
            write_tvol(&output, &normalized)?;
        }
        Command::Windows { input, output_dir } => {
            let v = read_tvol(&input)?;
            std::fs::create_dir_all(&output_dir)?;
            for w in make_slice_windows(&v) {
                let voxels: Vec<f64> = w.channels.iter().flatten().copied().collect();
                let win = lndet::Volume::new((v.dims.0, v.dims.1, 3), voxels)?;
                write_tvol(
                    &output_dir.join(format!("window_{:04}.tvol", w.center_index)),
                    &win,
                )?;
            }
        }
        Command::Synth {
            seed,
            out_dir,
            volumes,
            lesions_per_volume,
            slices_per_lesion,
            dims,
            profiles,
        } => {
            let pair = |v: &[usize], name: &str| -> anyhow::Result<(usize, usize)> {
                match v {
                    [a, b] => Ok((*a, *b)),
                    _ => anyhow::bail!("--{name} expects MIN,MAX"),
                }
            };
            let dims = match dims.as_slice() {
                [nx, ny, nz] => (*nx, *ny, *nz),
                _ => anyhow::bail!("--dims expects NX,NY,NZ"),
            };
            let cfg = SynthConfig {
                n_volumes: volumes,
                lesions_per_volume: pair(&lesions_per_volume, "lesions-per-volume")?,
                slices_per_lesion: pair(&slices_per_lesion, "slices-per-lesion")?,
                image_dims: dims,
                detector_profiles: profiles
                    .iter()
                    .map(|p| parse_profile(p))
                    .collect::<anyhow::Result<Vec<_>>>()?,
                seed,
            };
            let (ann, dets, stats) = synth_generate(&cfg)?;
            std::fs::create_dir_all(&out_dir)?;
            let (nx, ny, _) = cfg.image_dims;
            write_text(
                &out_dir.join("volumes.json"),
                &volume_index_to_jsonl(&ann.volume_index, |_| (nx, ny)),
            )?;
            write_text(&out_dir.join("annotations.jsonl"), &ann.to_jsonl())?;
            for (model, ds) in &dets {
                write_text(&out_dir.join(format!("dets_{model}.jsonl")), &ds.to_jsonl())?;
            }
            write_text(
                &out_dir.join("expected_stats.json"),
                &format!("{}\n", serde_json::to_string_pretty(&stats)?),
            )?;
            eprintln!(
                "wrote {} volumes, {} lesions, {} models to {}",
                stats.n_volumes,
                stats.total_lesions,
                dets.len(),
                out_dir.display()
            );
        }
        Command::Report { input, format } => {
            let text = std::fs::read_to_string(&input)?;
            let reports: Vec<EvalReport> = serde_json::from_str(&text)?;
            print!("{}", render_report(&reports, to_format(format))?);
        }
    }
    Ok(())
}

fn to_format(f: FormatArg) -> ReportFormat {
    match f {
        FormatArg::Table => ReportFormat::Table,
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    }
}

type EvalData = (
    BTreeMap<String, Vec<lndet::Detection>>,
    BTreeMap<String, Vec<lndet::LesionAnnotation>>,
);

fn load_eval_inputs(inputs: &EvalInputs) -> anyhow::Result<EvalData> {
    let index = parse_volume_index(&inputs.volumes)?;
    let dets = parse_detections(&inputs.detections, &index)?;
    let ann = parse_annotations(&inputs.annotations, &index)?;
    Ok((dets.by_volume(), ann.by_volume()))
}

fn parse_profile(spec: &str) -> anyhow::Result<DetectorProfile> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() < 3 || parts.len() > 5 {
        anyhow::bail!(
            "profile `{spec}` must be model:hit_prob:fp_rate[:tp_lo-tp_hi[:fp_lo-fp_hi]]"
        );
    }
    let range = |s: &str, default: (f64, f64)| -> anyhow::Result<(f64, f64)> {
        if s.is_empty() {
            return Ok(default);
        }
        let (lo, hi) = s
            .split_once('-')
            .ok_or_else(|| anyhow::anyhow!("bad score range `{s}`"))?;
        Ok((lo.parse()?, hi.parse()?))
    };
    Ok(DetectorProfile {
        model_id: parts[0].to_string(),
        hit_probability: parts[1].parse()?,
        fp_per_volume: parts[2].parse()?,
        tp_score_range: range(parts.get(3).copied().unwrap_or(""), (0.5, 1.0))?,
        fp_score_range: range(parts.get(4).copied().unwrap_or(""), (0.0, 0.9))?,
    })
}
