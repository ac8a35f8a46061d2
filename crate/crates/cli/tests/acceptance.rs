//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL
//! line; the process exits nonzero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use flockeval::folds::make_folds;
use flockeval::geometry::{
    bbox_iou, polygon_iou, validate_polygon, BBox, Point, Polygon8, PolygonAnomaly,
    DEFAULT_RESOLUTION,
};
use flockeval::matching::{greedy_match, IouMatrix, IouMode, Shape};
use flockeval::metrics::{
    average_precision, classification_report, evaluate, pr_from_ranked, standard_thresholds,
    ConfusionMatrix, EvalOptions,
};
use flockeval::schema::{
    load_dataset, parse_ethogram_csv, parse_polygon_json, validate_rows, write_ethogram_csv,
    write_polygon_json, DatasetManifest, Label, Task, ViolationCode,
};
use flockeval::synthetic::{corrupt, generate_scene, NoiseConfig, Origin, SceneConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if $cond {
        } else {
            return Err(format!($($msg)*));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

// 1. Geometry

fn blob(rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> Polygon8 {
    let radius = rng.random_range(15.0..60.0);
    let spread = rng.random_range(0.0..0.7);
    let pts: [Point; 8] = std::array::from_fn(|k| {
        let phi = (k as f64 + rng.random_range(-0.3..0.3)) * std::f64::consts::FRAC_PI_4;
        let r = radius * (1.0 - spread * rng.random::<f64>());
        Point::new(cx + r * phi.cos(), cy + r * phi.sin())
    });
    Polygon8::new(pts).unwrap()
}

fn inside(p: &Polygon8, x: f64, y: f64) -> bool {
    let pts = p.points();
    let mut odd = false;
    let mut j = pts.len() - 1;
    for i in 0..pts.len() {
        let (a, b) = (pts[i], pts[j]);
        if (a.y > y) != (b.y > y) && x < a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y) {
            odd = !odd;
        }
        j = i;
    }
    odd
}

/// Stratified sampling over the union bounding box, one uniform point per
/// cell of a 317 x 317 grid.
fn monte_carlo_iou(a: &Polygon8, b: &Polygon8, seed: u64) -> f64 {
    let all: Vec<Point> = a.points().iter().chain(b.points()).copied().collect();
    let x0 = all.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x1 = all.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y0 = all.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y1 = all.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    const N: usize = 317;
    let (dx, dy) = ((x1 - x0) / N as f64, (y1 - y0) / N as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut both, mut either) = (0u64, 0u64);
    for i in 0..N {
        for j in 0..N {
            let x = x0 + (i as f64 + rng.random::<f64>()) * dx;
            let y = y0 + (j as f64 + rng.random::<f64>()) * dy;
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            both += u64::from(ia && ib);
            either += u64::from(ia || ib);
        }
    }
    if either == 0 {
        0.0
    } else {
        both as f64 / either as f64
    }
}

fn geometry() -> Check {
    let start = Instant::now();
    let worst = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(i);
            let a = blob(&mut rng, 200.0, 200.0);
            let (cx, cy) = (
                rng.random_range(110.0..290.0),
                rng.random_range(110.0..290.0),
            );
            let b = blob(&mut rng, cx, cy);
            let got = polygon_iou(&a, &b, DEFAULT_RESOLUTION).unwrap();
            let mc = monte_carlo_iou(&a, &b, 10_000 + i);
            ((got - mc).abs(), i)
        })
        .reduce(|| (0.0, 0), |x, y| if y.0 > x.0 { y } else { x });
    ensure!(
        worst.0 <= 0.01,
        "pair {} differs from Monte Carlo by {:.4}",
        worst.1,
        worst.0
    );

    // integer coordinates in 1/1024 units make every area exact
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100_000 {
        let mut side = || {
            let lo: i64 = rng.random_range(0..200_000);
            (lo, lo + rng.random_range(1..100_000))
        };
        let ((ax0, ax1), (ay0, ay1), (bx0, bx1), (by0, by1)) = (side(), side(), side(), side());
        let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0) as i128;
        let ih = (ay1.min(by1) - ay0.max(by0)).max(0) as i128;
        let inter = iw * ih;
        let union = ((ax1 - ax0) as i128 * (ay1 - ay0) as i128)
            + ((bx1 - bx0) as i128 * (by1 - by0) as i128)
            - inter;
        let exact = inter as f64 / union as f64;
        let s = 1.0 / 1024.0;
        let a = BBox::new(
            ax0 as f64 * s,
            ay0 as f64 * s,
            ax1 as f64 * s,
            ay1 as f64 * s,
        )
        .unwrap();
        let b = BBox::new(
            bx0 as f64 * s,
            by0 as f64 * s,
            bx1 as f64 * s,
            by1 as f64 * s,
        )
        .unwrap();
        let got = bbox_iou(&a, &b);
        ensure!(
            (got - exact).abs() <= 1e-12,
            "bbox {a:?} {b:?}: {got} vs {exact}"
        );
    }
    within(Duration::from_secs(30), start)
}

// 2. Matching

fn matching() -> Check {
    let start = Instant::now();
    let alphas = [0.1, 0.3, 0.5, 0.75, 0.9];
    (0..10_000u64).into_par_iter().try_for_each(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boxes = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Shape> {
            (0..n)
                .map(|_| {
                    let (x, y) = (rng.random_range(0.0..150.0), rng.random_range(0.0..150.0));
                    let (w, h) = (rng.random_range(5.0..60.0), rng.random_range(5.0..60.0));
                    Shape::from_bbox(BBox::new(x, y, x + w, y + h).unwrap())
                })
                .collect()
        };
        let n_gt = rng.random_range(0..=12);
        let n_pred = rng.random_range(0..=12);
        let gts = boxes(&mut rng, n_gt);
        let mut preds = boxes(&mut rng, n_pred);
        if let Some(first) = preds.first().cloned() {
            preds.push(first);
        }
        let ious = IouMatrix::compute(&gts, &preds, IouMode::BBox, DEFAULT_RESOLUTION).unwrap();
        let mut last = usize::MAX;
        for &alpha in &alphas {
            let r = greedy_match(&ious, alpha);
            let mut gt_used = vec![false; gts.len()];
            let mut pred_used = vec![false; preds.len()];
            for p in &r.pairs {
                ensure!(
                    !gt_used[p.gt_index] && !pred_used[p.pred_index],
                    "frame {seed}: reuse at {alpha}"
                );
                gt_used[p.gt_index] = true;
                pred_used[p.pred_index] = true;
                ensure!(
                    p.iou > alpha,
                    "frame {seed}: pair at IoU {} <= {alpha}",
                    p.iou
                );
                ensure!(
                    p.iou == ious.get(p.gt_index, p.pred_index),
                    "frame {seed}: IoU mismatch"
                );
            }
            ensure!(
                r.pairs.len() + r.unmatched_gt.len() == gts.len()
                    && r.pairs.len() + r.unmatched_pred.len() == preds.len(),
                "frame {seed}: counts do not add up"
            );
            ensure!(r.pairs.len() <= last, "frame {seed}: more pairs at {alpha}");
            last = r.pairs.len();
        }
        Ok(())
    })?;
    within(Duration::from_secs(60), start)
}

// 3. Ledger oracle

/// 101-point AP straight from a ranked list. Tied scores enter together.
fn brute_force_ap(ranked: &[(f64, bool)], positives: usize) -> f64 {
    let mut sorted = ranked.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            tp += usize::from(sorted[i].1);
            seen += 1;
            i += 1;
        }
        points.push((tp as f64 / positives as f64, tp as f64 / seen as f64));
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        sum += points
            .iter()
            .filter(|p| p.0 >= r)
            .map(|p| p.1)
            .fold(0.0, f64::max);
    }
    sum / 101.0
}

struct Oracle {
    accuracy: f64,
    f1: BTreeMap<Label, f64>,
    macro_f1: f64,
    weighted_f1: f64,
}

fn oracle_classification(pairs: &[(Label, Label)], classes: &[Label]) -> Oracle {
    let n = pairs.len() as f64;
    let correct = pairs.iter().filter(|(t, p)| t == p).count() as f64;
    let mut f1 = BTreeMap::new();
    let (mut macro_sum, mut weighted_sum) = (0.0, 0.0);
    for &c in classes {
        let tp = pairs.iter().filter(|(t, p)| *t == c && *p == c).count() as f64;
        let support = pairs.iter().filter(|(t, _)| *t == c).count() as f64;
        let predicted = pairs.iter().filter(|(_, p)| *p == c).count() as f64;
        let prec = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let rec = if support > 0.0 { tp / support } else { 0.0 };
        let f = if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
        f1.insert(c, f);
        macro_sum += f;
        weighted_sum += f * support;
    }
    Oracle {
        accuracy: correct / n,
        f1,
        macro_f1: macro_sum / classes.len() as f64,
        weighted_f1: weighted_sum / n,
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn ledger_oracle() -> Check {
    let start = Instant::now();
    let classes = Task::Behavior.classes();
    let k = classes.len();
    let confusion: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 0.76 } else { 0.04 }).collect())
        .collect();
    let noise = NoiseConfig {
        label_confusion: Some(confusion),
        ..NoiseConfig::default()
    };
    let alphas = [0.1, 0.3, 0.5, 0.75];
    for seed in 0..20u64 {
        let scene = generate_scene(&SceneConfig::default(), seed).unwrap();
        let (preds, ledger) = corrupt(&scene.frames, (1280, 720), &noise, seed + 1000).unwrap();
        let opts = EvalOptions {
            alphas: alphas.to_vec(),
            match_alpha: 0.5,
            task: Some(Task::Behavior),
            ..EvalOptions::default()
        };
        let report = evaluate(&scene.frames, &preds, &opts).map_err(|e| e.to_string())?;

        let ranked = |alpha: f64| -> Vec<(f64, bool)> {
            ledger
                .entries
                .iter()
                .zip(&preds)
                .map(|(e, p)| {
                    (
                        p.score,
                        matches!(e.origin, Origin::Truth { box_iou, .. } if box_iou > alpha),
                    )
                })
                .collect()
        };
        let tp = ranked(0.5).iter().filter(|r| r.1).count();
        let m = &report.matching;
        ensure!(
            (m.true_positives, m.false_positives, m.false_negatives)
                == (tp, preds.len() - tp, ledger.ground_truths - tp),
            "seed {seed}: counts {:?} vs ledger tp {tp}",
            (m.true_positives, m.false_positives, m.false_negatives)
        );

        for alpha in alphas.iter().copied().chain(standard_thresholds()) {
            let want = brute_force_ap(&ranked(alpha), ledger.ground_truths);
            let got = report
                .detection
                .ap_at(alpha)
                .ok_or(format!("no AP at {alpha}"))?;
            ensure!(close(got, want), "seed {seed}: AP@{alpha} {got} vs {want}");
        }
        let coco = standard_thresholds()
            .iter()
            .map(|&a| brute_force_ap(&ranked(a), ledger.ground_truths))
            .sum::<f64>()
            / 10.0;
        ensure!(
            close(report.detection.coco_map, coco),
            "seed {seed}: coco_map {} vs {coco}",
            report.detection.coco_map
        );

        let pairs: Vec<(Label, Label)> = ledger
            .entries
            .iter()
            .zip(&preds)
            .filter_map(|(e, p)| match e.origin {
                Origin::Truth {
                    box_iou,
                    true_label: Some(t),
                    ..
                } if box_iou > 0.5 => Some((t, p.label)),
                _ => None,
            })
            .collect();
        let want = oracle_classification(&pairs, &classes);
        let c = &report
            .classification
            .as_ref()
            .ok_or("no classification")?
            .report;
        ensure!(
            c.total as usize == pairs.len(),
            "seed {seed}: {} pairs vs {}",
            c.total,
            pairs.len()
        );
        ensure!(
            close(c.accuracy, want.accuracy),
            "seed {seed}: accuracy {} vs {}",
            c.accuracy,
            want.accuracy
        );
        ensure!(
            close(c.macro_f1, want.macro_f1),
            "seed {seed}: macro F1 {} vs {}",
            c.macro_f1,
            want.macro_f1
        );
        ensure!(
            close(c.weighted_f1, want.weighted_f1),
            "seed {seed}: weighted F1 {} vs {}",
            c.weighted_f1,
            want.weighted_f1
        );
        for (label, f) in &want.f1 {
            let got = c.f1(*label).unwrap_or(f64::NAN);
            ensure!(close(got, *f), "seed {seed}: F1 {label} {got} vs {f}");
        }
    }
    within(Duration::from_secs(120), start)
}

// 4. Ranked AP cases

fn ranked_ap() -> Check {
    let cases: Vec<(Vec<(f64, bool)>, usize)> = vec![
        (vec![(0.9, true), (0.8, false), (0.7, true)], 3),
        (vec![(0.9, true), (0.8, true), (0.7, true)], 3),
        (vec![(0.9, false), (0.8, false)], 2),
        (
            vec![
                (0.9, false),
                (0.8, true),
                (0.7, true),
                (0.6, false),
                (0.5, true),
            ],
            4,
        ),
        (vec![(0.5, true), (0.5, false), (0.4, true)], 2),
        (
            vec![
                (0.95, true),
                (0.9, false),
                (0.85, false),
                (0.8, true),
                (0.75, false),
                (0.7, true),
                (0.65, true),
                (0.6, false),
                (0.55, false),
                (0.5, true),
            ],
            7,
        ),
        (vec![(0.3, true); 10], 10),
        (vec![(0.6, true), (0.6, true), (0.2, false), (0.1, true)], 5),
        (vec![], 3),
    ];
    for (i, (ranked, positives)) in cases.iter().enumerate() {
        let curve = pr_from_ranked(ranked, *positives).map_err(|e| e.to_string())?;
        let got = average_precision(&curve);
        let want = brute_force_ap(ranked, *positives);
        ensure!(close(got, want), "case {i}: {got} vs {want}");
    }
    // the TP, FP, TP example: recall steps at 1/3 and 2/3
    let curve = pr_from_ranked(&cases[0].0, 3).unwrap();
    let got = average_precision(&curve);
    let want = (34.0 + 33.0 * 2.0 / 3.0) / 101.0;
    ensure!(close(got, want), "worked example {got} vs {want}");
    Ok(())
}

// 5. Formats

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn formats() -> Check {
    let dir = fixtures().join("golden");
    let csv = std::fs::read(dir.join("281/ethogram.csv")).map_err(|e| e.to_string())?;
    let header = csv.split(|&b| b == b'\n').next().unwrap_or_default();
    ensure!(
        header == b"date,image,time,bird ID,WLK,SIT,STD,EAT,DRK,PRE,PRA,FOR,DUB,NVS,count",
        "golden header differs"
    );
    let rows = parse_ethogram_csv(&csv).map_err(|e| e.to_string())?;
    ensure!(
        validate_rows(&rows).is_clean(),
        "golden sheet has violations"
    );
    ensure!(
        write_ethogram_csv(&rows).as_bytes() == &csv[..],
        "CSV does not round-trip"
    );
    for entry in std::fs::read_dir(dir.join("281/polygons")).map_err(|e| e.to_string())? {
        let bytes =
            std::fs::read(entry.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
        let shapes = parse_polygon_json(&bytes).map_err(|e| e.to_string())?;
        ensure!(
            write_polygon_json(&shapes).as_bytes() == &bytes[..],
            "polygon JSON does not round-trip"
        );
    }
    let ds = load_dataset(&dir.join("manifest.json")).map_err(|e| e.to_string())?;
    ensure!(ds.report.issue_count() == 0, "golden merge reports issues");
    ensure!(
        ds.frames.len() == 3 && ds.report.visible == 8,
        "unexpected merge result"
    );

    let bad =
        parse_ethogram_csv(&std::fs::read(fixtures().join("invalid/count3.csv")).unwrap()).unwrap();
    let codes: Vec<ViolationCode> = validate_rows(&bad)
        .violations
        .iter()
        .map(|v| v.code)
        .collect();
    ensure!(
        codes.contains(&ViolationCode::CountRule),
        "count=3 row not rejected: {codes:?}"
    );
    let seven =
        parse_polygon_json(&std::fs::read(fixtures().join("invalid/seven_points.json")).unwrap())
            .unwrap();
    let anomalies = validate_polygon(&seven[0].points, 1280.0, 720.0);
    ensure!(
        anomalies == [PolygonAnomaly::WrongPointCount],
        "7-point polygon: {anomalies:?}"
    );
    Ok(())
}

// 6. Folds

fn manifest(ids: Vec<String>) -> DatasetManifest {
    DatasetManifest {
        camera_id: 1,
        video_ids: ids,
        frame_width: 1280,
        frame_height: 720,
        videos: Vec::new(),
        frame_pattern: None,
    }
}

fn folds() -> Check {
    let m = manifest((281..=290).map(|v| v.to_string()).collect());
    let spec = make_folds(&m, 5, None).map_err(|e| e.to_string())?;
    let blocks: Vec<String> = (0..5).map(|i| spec.fold_name(i)).collect();
    ensure!(
        blocks == ["281 282", "283 284", "285 286", "287 288", "289 290"],
        "blocks {blocks:?}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..1000 {
        let n = rng.random_range(2..40);
        let k = rng.random_range(2..=n);
        let seed = rng.random_bool(0.5).then(|| rng.random::<u64>());
        let ids: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
        let spec = make_folds(&manifest(ids.clone()), k, seed).map_err(|e| e.to_string())?;
        let mut seen: Vec<&String> = spec.folds.iter().flat_map(|f| &f.test).collect();
        seen.sort();
        let mut all: Vec<&String> = ids.iter().collect();
        all.sort();
        ensure!(
            seen == all,
            "trial {trial}: test blocks do not partition the videos"
        );
        let sizes: Vec<usize> = spec.folds.iter().map(|f| f.test.len()).collect();
        ensure!(
            sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1,
            "trial {trial}: uneven blocks {sizes:?}"
        );
        for f in &spec.folds {
            ensure!(
                f.train.iter().all(|v| !f.test.contains(v)),
                "trial {trial}: leakage"
            );
            ensure!(
                f.train.len() + f.test.len() == n,
                "trial {trial}: videos missing from fold"
            );
        }
    }
    Ok(())
}

// 7. Imbalance

fn imbalance() -> Check {
    let classes: Vec<Label> = ["CTR", "EAT", "FOR", "PRA", "PRE"]
        .iter()
        .map(|c| Label::from_code(c).unwrap())
        .collect();
    let rows = |k: u64| {
        vec![
            vec![900 * k, 0, 0, 0, 0],
            vec![0, 850, 20, 10, 20],
            vec![0, 12, 15, 1, 2],
            vec![0, 3, 1, 2, 4],
            vec![0, 20, 5, 5, 30],
        ]
    };
    let supports: Vec<u64> = rows(1).iter().map(|r| r.iter().sum()).collect();
    ensure!(supports == [900, 900, 30, 10, 60], "supports {supports:?}");
    let base =
        classification_report(&ConfusionMatrix::from_counts(classes.clone(), rows(1)).unwrap())
            .unwrap();
    ensure!(
        base.weighted_f1 > base.macro_f1,
        "weighted {} not above macro {}",
        base.weighted_f1,
        base.macro_f1
    );
    for k in 2..=5 {
        let r =
            classification_report(&ConfusionMatrix::from_counts(classes.clone(), rows(k)).unwrap())
                .unwrap();
        ensure!(
            (r.macro_f1 - base.macro_f1).abs() <= 1e-12,
            "x{k}: macro {} vs {}",
            r.macro_f1,
            base.macro_f1
        );
    }
    Ok(())
}

// 8. CLI determinism

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_flockeval"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "flockeval {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn pipeline(root: &Path, threads: usize) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let t = threads.to_string();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let data = p("data");
    let manifest = p("data/manifest.json");
    let preds = p("data/predictions.ndjson");
    run(&[
        "--threads",
        &t,
        "generate",
        "--out",
        &data,
        "--seed",
        "11",
        "--video",
        "1",
        "--video",
        "2",
        "--video",
        "3",
        "--frames",
        "40",
        "--birds",
        "12",
    ])?;
    run(&[
        "--threads",
        &t,
        "validate",
        "--manifest",
        &manifest,
        "--out",
        &p("validate"),
    ])?;
    run(&[
        "--threads",
        &t,
        "split",
        "--manifest",
        &manifest,
        "--k",
        "3",
        "--seed",
        "4",
        "--out",
        &p("split"),
    ])?;
    run(&[
        "--threads",
        &t,
        "match",
        "--manifest",
        &manifest,
        "--predictions",
        &preds,
        "--mode",
        "segm",
        "--out",
        &p("match"),
    ])?;
    for mode in ["bbox", "segm"] {
        run(&[
            "--threads",
            &t,
            "evaluate",
            "--manifest",
            &manifest,
            "--predictions",
            &preds,
            "--mode",
            mode,
            "--task",
            "behavior",
            "--out",
            &p(&format!("evaluate_{mode}")),
        ])?;
    }
    let fold_preds = p("fold_preds");
    std::fs::create_dir_all(&fold_preds).map_err(|e| e.to_string())?;
    for i in 1..=3 {
        std::fs::copy(&preds, root.join(format!("fold_preds/fold_{i}.ndjson")))
            .map_err(|e| e.to_string())?;
    }
    run(&[
        "--threads",
        &t,
        "evaluate",
        "--manifest",
        &manifest,
        "--folds",
        &p("split/folds.json"),
        "--fold-predictions",
        &fold_preds,
        "--task",
        "behavior",
        "--out",
        &p("folds"),
    ])?;
    run(&[
        "--threads",
        &t,
        "welfare",
        "--manifest",
        &manifest,
        "--window",
        "10",
        "--rule",
        "DRK<0.05@20",
        "--out",
        &p("welfare"),
    ])?;
    Ok(snapshot(root))
}

fn determinism() -> Check {
    let max = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        * 4;
    let mut runs = Vec::new();
    for threads in [1, max, max] {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        runs.push(pipeline(tmp.path(), threads)?);
    }
    ensure!(runs[0].len() > 20, "only {} output files", runs[0].len());
    for r in &runs[1..] {
        ensure!(r.keys().eq(runs[0].keys()), "different file sets");
        for (path, bytes) in r {
            ensure!(
                *bytes == runs[0][path],
                "{} differs between runs",
                path.display()
            );
        }
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 geometry oracle", geometry),
        ("2 matching properties", matching),
        ("3 ledger oracle equivalence", ledger_oracle),
        ("4 ranked AP protocol", ranked_ap),
        ("5 format fidelity", formats),
        ("6 fold reproduction", folds),
        ("7 imbalance property", imbalance),
        ("8 CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(()) => println!("PASS {name} ({:.1?})", start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
