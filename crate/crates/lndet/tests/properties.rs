//! Property tests for the spec-level invariants of geometry, fusion,
//! matching, mining, and preprocessing.

use std::collections::BTreeMap;

use proptest::prelude::*;

use lndet::evaluation::{match_detections, LesionAnnotation};
use lndet::fusion::{fuse_volume, nms, soft_nms, wbf, FusionMethod, FusionParams};
use lndet::hnem::select_hard_negatives;
use lndet::volume::{make_slice_windows, percentile_normalize, Volume};
use lndet::{Box2D, DetectionDataset, Detection};

fn arb_box() -> impl Strategy<Value = Box2D> {
    (0.0..500.0f64, 0.0..500.0f64, 1.0..80.0f64, 1.0..80.0f64)
        .prop_map(|(x, y, w, h)| Box2D::new(x, y, x + w, y + h).unwrap())
}

fn arb_detection(slice: usize) -> impl Strategy<Value = Detection> {
    (arb_box(), 0.0..=1.0f64, 0..4usize).prop_map(move |(bbox, score, model)| Detection {
        volume_id: "v0".to_string(),
        slice_index: slice,
        bbox,
        score,
        model_id: format!("m{model}"),
        label: "LN".to_string(),
    })
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = a.iou(&b);
        let ba = b.iou(&a);
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 0.0, a.intersection_area(&b) == 0.0);
    }

    #[test]
    fn iou_self_is_one(a in arb_box()) {
        prop_assert_eq!(a.iou(&a), 1.0);
    }

    #[test]
    fn iou_translation_and_scale_invariant(
        a in arb_box(),
        b in arb_box(),
        tx in -100.0..100.0f64,
        ty in -100.0..100.0f64,
        s in 0.1..10.0f64,
    ) {
        let base = a.iou(&b);
        let shift = |x: &Box2D| {
            let c = x.corners();
            Box2D::new(c[0] + tx, c[1] + ty, c[2] + tx, c[3] + ty).unwrap()
        };
        let scale = |x: &Box2D| {
            let c = x.corners();
            Box2D::new(c[0] * s, c[1] * s, c[2] * s, c[3] * s).unwrap()
        };
        prop_assert!((shift(&a).iou(&shift(&b)) - base).abs() < 1e-12);
        prop_assert!((scale(&a).iou(&scale(&b)) - base).abs() < 1e-12);
    }

    #[test]
    fn nms_scores_are_submultiset_and_idempotent(
        dets in prop::collection::vec(arb_detection(0), 0..12),
        thr in 0.1..0.9f64,
    ) {
        let once = nms(&dets, thr).unwrap();
        // no score mutation: every output score appears in the input
        let mut input_scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
        for kept in &once {
            let pos = input_scores.iter().position(|s| *s == kept.score);
            prop_assert!(pos.is_some());
            input_scores.swap_remove(pos.unwrap());
        }
        let twice = nms(&once, thr).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn wbf_permutation_invariant(
        sets in prop::collection::vec(prop::collection::vec(arb_detection(0), 0..6), 1..4),
        seed in any::<u64>(),
    ) {
        let params = FusionParams { model_count: sets.len(), ..Default::default() };
        let base = wbf(&sets, &params).unwrap();

        // shuffle model order and within-model order deterministically
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = sets.clone();
        shuffled.shuffle(&mut rng);
        for s in &mut shuffled {
            s.shuffle(&mut rng);
        }
        let permuted = wbf(&shuffled, &params).unwrap();

        prop_assert_eq!(base.len(), permuted.len());
        for (a, b) in base.iter().zip(&permuted) {
            let (ca, cb) = (a.bbox.corners(), b.bbox.corners());
            for i in 0..4 {
                prop_assert!((ca[i] - cb[i]).abs() < 1e-9);
            }
            prop_assert!((a.score - b.score).abs() < 1e-9);
        }

        // cluster-count bound and coordinate envelope
        let n_inputs: usize = sets.iter().map(Vec::len).sum();
        prop_assert!(base.len() <= n_inputs);
    }

    #[test]
    fn wbf_fused_boxes_inside_member_envelope(
        sets in prop::collection::vec(prop::collection::vec(arb_detection(0), 1..6), 1..4),
    ) {
        let params = FusionParams { model_count: sets.len(), ..Default::default() };
        let fused = wbf(&sets, &params).unwrap();
        let all: Vec<&Detection> = sets.iter().flatten().collect();
        let (lo, hi) = all.iter().fold(
            ([f64::INFINITY; 4], [f64::NEG_INFINITY; 4]),
            |(mut lo, mut hi), d| {
                let c = d.bbox.corners();
                for i in 0..4 {
                    lo[i] = lo[i].min(c[i]);
                    hi[i] = hi[i].max(c[i]);
                }
                (lo, hi)
            },
        );
        for f in &fused {
            let c = f.bbox.corners();
            for i in 0..4 {
                prop_assert!(c[i] >= lo[i] - 1e-9 && c[i] <= hi[i] + 1e-9);
            }
        }
    }

    // detections on different slices never interact: fusing the union of two
    // disjoint-slice datasets equals the union of fusing them separately
    #[test]
    fn fuse_volume_groups_are_independent(
        a in prop::collection::vec(arb_detection(0), 0..6),
        b in prop::collection::vec(arb_detection(1), 0..6),
        method_idx in 0..3usize,
    ) {
        let method = [FusionMethod::Nms, FusionMethod::SoftNms, FusionMethod::Wbf][method_idx];
        let index: lndet::VolumeIndex = [("v0".to_string(), 8)].into();
        let params = FusionParams::default();

        let make = |dets: Vec<Detection>| DetectionDataset::new(dets, index.clone()).unwrap();
        let combined: Vec<Detection> = a.iter().chain(&b).cloned().collect();

        let fused_all = fuse_volume(&[make(combined)], &params, method).unwrap();
        let fused_a = fuse_volume(&[make(a)], &params, method).unwrap();
        let fused_b = fuse_volume(&[make(b)], &params, method).unwrap();

        let mut expected = fused_a.records;
        expected.extend(fused_b.records);
        prop_assert_eq!(fused_all.records, expected);
    }

    // with sigma -> 0+, Gaussian decay kills every overlapping box, so on
    // inputs whose pairwise IoUs are either 0 or above the hard-NMS
    // threshold the two methods agree
    #[test]
    fn soft_nms_tiny_sigma_matches_hard_nms(
        seeds in prop::collection::vec((0.0..500.0f64, 0.0..500.0f64, 0.3..1.0f64, any::<bool>()), 1..8),
    ) {
        let mut dets = Vec::new();
        for (i, (x, y, score, duplicate)) in seeds.iter().enumerate() {
            // spread seeds far apart; optionally add a near-duplicate
            let x = (i as f64) * 200.0 + x / 10.0;
            let base = Box2D::new(x, *y, x + 40.0, y + 40.0).unwrap();
            let mk = |bbox: Box2D, score: f64, id: usize| Detection {
                volume_id: "v0".into(),
                slice_index: 0,
                bbox,
                score,
                model_id: format!("m{id}"),
                label: "LN".into(),
            };
            dets.push(mk(base, *score, 2 * i));
            if *duplicate {
                let c = base.corners();
                let near = Box2D::new(c[0] + 2.0, c[1] + 2.0, c[2] + 2.0, c[3] + 2.0).unwrap();
                dets.push(mk(near, score * 0.9, 2 * i + 1));
            }
        }
        let thr = 0.5;
        // generic-input guard: pairwise IoUs are 0 or > thr
        for (i, a) in dets.iter().enumerate() {
            for b in &dets[i + 1..] {
                let iou = a.bbox.iou(&b.bbox);
                prop_assert!(iou == 0.0 || iou > thr);
            }
        }
        let hard = nms(&dets, thr).unwrap();
        let params = FusionParams { soft_nms_sigma: 1e-6, nms_iou_thr: thr, ..Default::default() };
        let soft = soft_nms(&dets, &params).unwrap();
        prop_assert_eq!(hard, soft);
    }

    // swapping two detections' scores swaps which one greedy matching
    // credits as TP against a single GT box
    #[test]
    fn match_greedy_respects_score_order(
        s1 in 0.1..1.0f64,
        s2 in 0.1..1.0f64,
    ) {
        prop_assume!(s1 != s2);
        let gt_box = Box2D::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let lesion = LesionAnnotation::new("L".into(), "v".into(), vec![(0, gt_box)]).unwrap();
        let mk = |bbox: Box2D, score: f64, id: &str| Detection {
            volume_id: "v".into(),
            slice_index: 0,
            bbox,
            score,
            model_id: id.into(),
            label: "LN".into(),
        };
        let d1 = mk(gt_box, s1, "a");
        let d2 = mk(Box2D::new(1.0, 1.0, 10.0, 10.0).unwrap(), s2, "b");
        let r = match_detections(&[d1.clone(), d2.clone()], std::slice::from_ref(&lesion), 0.25).unwrap();
        let mut swapped = [d1, d2];
        let tmp = swapped[0].score;
        swapped[0].score = swapped[1].score;
        swapped[1].score = tmp;
        let r2 = match_detections(&swapped, &[lesion], 0.25).unwrap();
        // whichever index holds the higher score wins the single GT box
        let winner = |a: f64, b: f64| usize::from(b > a);
        prop_assert!(r.flags[winner(s1, s2)].is_tp());
        prop_assert!(r2.flags[winner(s2, s1)].is_tp());
    }

    // hard-negative selection is invariant to prediction order, never
    // includes anything overlapping GT, and raising the match threshold
    // never raises the TP floor
    #[test]
    fn hnem_invariants(
        preds in prop::collection::vec(arb_detection(0), 1..12),
        seed in any::<u64>(),
    ) {
        let gt_box = Box2D::new(200.0, 200.0, 260.0, 260.0).unwrap();
        let lesion = LesionAnnotation::new("L".into(), "v0".into(), vec![(0, gt_box)]).unwrap();
        let lesions = vec![lesion];

        let result = select_hard_negatives(&preds, &lesions, 0.25, 0.5).unwrap();
        for neg in &result.hard_negatives {
            prop_assert_eq!(neg.bbox.iou(&gt_box), 0.0);
            prop_assert!(neg.score > result.tp_floor);
        }

        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut shuffled = preds.clone();
        shuffled.shuffle(&mut rng);
        let result2 = select_hard_negatives(&shuffled, &lesions, 0.25, 0.5).unwrap();
        prop_assert_eq!(&result.hard_negatives, &result2.hard_negatives);
        prop_assert_eq!(result.tp_floor, result2.tp_floor);

        // fewer/equal TPs at a stricter threshold => floor can only drop
        // to the fallback or stay
        let strict = select_hard_negatives(&preds, &lesions, 0.75, 0.5).unwrap();
        prop_assert!(strict.tp_count <= result.tp_count);
        if strict.tp_count > 0 && result.tp_count > 0 {
            prop_assert!(strict.tp_floor <= result.tp_floor || strict.tp_floor == result.tp_floor);
        }
    }

    #[test]
    fn normalization_monotone_and_bounded(
        voxels in prop::collection::vec(-1000.0..1000.0f64, 64..256),
    ) {
        let n = voxels.len();
        let v = Volume::new((n, 1, 1), voxels.clone()).unwrap();
        let out = percentile_normalize(&v, 1.0, 99.0).unwrap();
        prop_assert!(out.voxels.iter().all(|&x| (0.0..=1.0).contains(&x)));
        // order relations preserved (clipping allows ties)
        for i in 0..n {
            for j in 0..n {
                if voxels[i] < voxels[j] {
                    prop_assert!(out.voxels[i] <= out.voxels[j]);
                }
            }
        }
    }

    #[test]
    fn windows_reconstruct_volume(
        nz in 1..12usize,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let voxels: Vec<f64> = (0..16 * nz).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let v = Volume::new((4, 4, nz), voxels.clone()).unwrap();
        let windows = make_slice_windows(&v);
        prop_assert_eq!(windows.len(), nz);
        let rebuilt: Vec<f64> = windows.iter().flat_map(|w| w.channels[1].clone()).collect();
        prop_assert_eq!(rebuilt, voxels);
    }
}

// evaluation determinism: repeated runs over the same inputs are bit-identical
#[test]
fn evaluate_is_deterministic() {
    use lndet::evaluation::{evaluate, EvalConfig};
    use lndet::synth::{synth_generate, SynthConfig};

    let cfg = SynthConfig {
        n_volumes: 12,
        seed: 99,
        ..Default::default()
    };
    let (ann, dets, _) = synth_generate(&cfg).unwrap();
    let gt = ann.by_volume();
    let mut reports = Vec::new();
    for _ in 0..3 {
        let mut by_vol: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
        for ds in dets.values() {
            for (vol, mut v) in ds.by_volume() {
                by_vol.entry(vol).or_default().append(&mut v);
            }
        }
        reports.push(evaluate(&by_vol, &gt, &EvalConfig::default(), "synth").unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[1], reports[2]);
}
