use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use flockeval::folds::{fold_evaluate, make_folds, FoldSpec};
use flockeval::matching::{match_dataset, IouMode, MatchConfig};
use flockeval::metrics::{
    ap_table_csv, class_f1_csv, classification_csv, evaluate as run_eval, pr_curve_csv,
    to_rounded_json, EvalOptions, MetricReport,
};
use flockeval::schema::{load_dataset, load_predictions, Dataset, Label, Prediction, Task};
use flockeval::synthetic::{corrupt, generate_scene, write_file, NoiseConfig, SceneConfig};
use flockeval::welfare::{welfare_report, WelfareConfig, WelfareRule};
use serde_json::{Map, Value};

use crate::{EvaluateArgs, Failure, GenerateArgs, MatchArgs, SplitArgs, ValidateArgs, WelfareArgs};

fn required<T>(v: Option<T>, flag: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required")))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    Ok(write_file(&dir.join(name), contents)?)
}

fn mode(m: Option<&str>) -> Result<IouMode, Failure> {
    Ok(m.map(str::parse).transpose()?.unwrap_or(IouMode::BBox))
}

fn dataset(manifest: Option<PathBuf>) -> Result<Dataset, Failure> {
    Ok(load_dataset(&required(manifest, "manifest")?)?)
}

pub fn validate(a: ValidateArgs) -> Result<(), Failure> {
    let ds = dataset(a.manifest)?;
    let json = to_rounded_json(&ds.report);
    match &a.out {
        Some(dir) => write(dir, "validation.json", &json)?,
        None => println!("{json}"),
    }
    match ds.report.issue_count() {
        0 => Ok(()),
        n => Err(Failure::Invalid(n)),
    }
}

pub fn split(a: SplitArgs) -> Result<(), Failure> {
    let out = required(a.out, "out")?;
    let manifest = flockeval::schema::DatasetManifest::load(&required(a.manifest, "manifest")?)?;
    let spec = make_folds(&manifest, a.k.unwrap_or(5), a.seed)?;
    write(&out, "folds.json", &spec.to_json())
}

pub fn match_(a: MatchArgs) -> Result<(), Failure> {
    let out = required(a.out, "out")?;
    let ds = dataset(a.manifest)?;
    let preds = load_predictions(&required(a.predictions, "predictions")?)?;
    let mut cfg = MatchConfig::new(a.alpha.unwrap_or(0.5), mode(a.mode.as_deref())?)?;
    if let Some(r) = a.resolution {
        cfg.resolution = r;
    }
    let m = match_dataset(&ds.frames, &preds, &cfg)?;

    let frames: HashMap<_, _> = ds.frames.iter().map(|f| (f.key(), f)).collect();
    let mut csv = String::from("video_id,frame_index,bird_id,prediction,iou\n");
    for fm in m.frames.values() {
        let birds = &frames[&fm.key].birds;
        let mut rows: Vec<(String, String, f64)> = fm
            .pairs
            .iter()
            .map(|&(b, p, iou)| (birds[b].bird_id.to_string(), p.to_string(), iou))
            .collect();
        rows.extend(
            fm.missed_birds
                .iter()
                .map(|&b| (birds[b].bird_id.to_string(), String::new(), 0.0)),
        );
        rows.extend(
            fm.false_predictions
                .iter()
                .map(|&p| (String::new(), p.to_string(), 0.0)),
        );
        for (bird, pred, iou) in rows {
            let _ = writeln!(
                csv,
                "{},{},{bird},{pred},{iou:.4}",
                fm.key.video_id, fm.key.frame_index
            );
        }
    }
    write(&out, "matches.csv", &csv)?;
    write(&out, "matches.json", &to_rounded_json(&m))?;
    println!(
        "TP {} FP {} FN {} (alpha {}, {})",
        m.true_positives,
        m.false_positives,
        m.false_negatives,
        m.alpha,
        m.mode.name()
    );
    Ok(())
}

fn eval_options(a: &EvaluateArgs) -> Result<EvalOptions, Failure> {
    let mut opts = EvalOptions {
        mode: mode(a.mode.as_deref())?,
        task: a.task.as_deref().map(str::parse::<Task>).transpose()?,
        ..EvalOptions::default()
    };
    if !a.alpha.is_empty() {
        opts.alphas = a.alpha.clone();
    }
    if let Some(m) = a.match_alpha {
        opts.match_alpha = m;
    }
    if let Some(r) = a.resolution {
        opts.resolution = r;
    }
    if !a.classes.is_empty() {
        let classes = a
            .classes
            .iter()
            .map(|c| Label::from_code(c))
            .collect::<Result<Vec<_>, _>>()?;
        opts.classes = Some(classes);
    }
    if opts.classes.is_some() && opts.task.is_none() {
        return Err(Failure::Usage("--classes needs --task".into()));
    }
    opts.validate()?;
    Ok(opts)
}

fn stamped(json: String, stamp: bool) -> String {
    if !stamp {
        return json;
    }
    let mut v: Value = serde_json::from_str(&json).expect("report JSON");
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    v["generated_at"] = Value::from(secs);
    serde_json::to_string_pretty(&v).expect("report JSON") + "\n"
}

fn write_tables(
    out: &Path,
    rows: &[(String, &MetricReport)],
    opts: &EvalOptions,
) -> Result<(), Failure> {
    write(out, "ap_table.csv", &ap_table_csv(rows, &opts.alphas))?;
    if let Some(classes) = opts.class_list() {
        write(out, "classification.csv", &classification_csv(rows))?;
        write(out, "class_f1.csv", &class_f1_csv(rows, &classes))?;
    }
    Ok(())
}

fn write_curves(out: &Path, report: &MetricReport) -> Result<(), Failure> {
    for c in &report.detection_pr {
        write(
            out,
            &format!("pr/detection_{}.csv", c.alpha),
            &pr_curve_csv(&c.curve),
        )?;
    }
    if let Some(cls) = &report.classification {
        for c in &cls.pr_curves {
            write(
                out,
                &format!("pr/class_{}.csv", c.label.code()),
                &pr_curve_csv(&c.curve),
            )?;
        }
    }
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let out = required(a.out.clone(), "out")?;
    let opts = eval_options(&a)?;
    let ds = dataset(a.manifest.clone())?;

    if let Some(folds) = &a.folds {
        let spec = FoldSpec::load(folds)?;
        spec.check()?;
        let dir = required(a.fold_predictions.clone(), "fold-predictions")?;
        let mut preds: Vec<Option<Vec<Prediction>>> = Vec::new();
        for i in 0..spec.folds.len() {
            let p = dir.join(format!("fold_{}.ndjson", i + 1));
            preds.push(if p.exists() {
                Some(load_predictions(&p)?)
            } else {
                None
            });
        }
        let result = fold_evaluate(&spec, &ds.frames, &preds, &opts)?;
        let rows: Vec<(String, &MetricReport)> = result
            .folds
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.report.as_ref().map(|r| (spec.fold_name(i), r)))
            .collect();
        write_tables(&out, &rows, &opts)?;
        write(
            &out,
            "folds.json",
            &stamped(to_rounded_json(&result), a.stamp),
        )?;
        if result.incomplete {
            eprintln!(
                "flockeval: no predictions for fold(s) {:?}",
                result.missing.iter().map(|i| i + 1).collect::<Vec<_>>()
            );
        }
        return Ok(());
    }

    let preds = load_predictions(&required(a.predictions.clone(), "predictions")?)?;
    let report = run_eval(&ds.frames, &preds, &opts)?;
    let name = ds.manifest.video_ids.join(" ");
    write_tables(&out, &[(name, &report)], &opts)?;
    write_curves(&out, &report)?;
    write(&out, "report.json", &stamped(report.to_json(), a.stamp))?;
    println!("COCO mAP {:.4}", report.detection.coco_map);
    Ok(())
}

fn section<T: serde::de::DeserializeOwned + Default>(
    file: &Map<String, Value>,
    key: &str,
) -> Result<T, Failure> {
    match file.get(key) {
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| Failure::Usage(format!("config {key}: {e}"))),
        None => Ok(T::default()),
    }
}

pub fn generate(a: GenerateArgs, file: &Map<String, Value>) -> Result<(), Failure> {
    let out = required(a.out, "out")?;
    let seed = a.seed.unwrap_or(0);
    let mut scene: SceneConfig = section(file, "scene")?;
    let mut noise: NoiseConfig = section(file, "noise")?;
    if let Some(c) = a.camera {
        scene.camera_id = c;
    }
    if !a.video.is_empty() {
        scene.video_ids = a.video;
    }
    if let Some(b) = a.birds {
        scene.birds = b;
    }
    if let Some(f) = a.frames {
        scene.frames = f;
    }
    if a.clean {
        noise = NoiseConfig::none();
    }
    if let Some(j) = a.jitter {
        noise.jitter_sigma = j;
    }
    if let Some(d) = a.drop_rate {
        noise.drop_rate = d;
    }
    if let Some(r) = a.false_positive_rate {
        noise.false_positive_rate = r;
    }
    if let Some(t) = a.task {
        noise.task = t.parse()?;
    }

    let s = generate_scene(&scene, seed)?;
    s.write(&out)?;
    let (preds, ledger) = corrupt(
        &s.frames,
        (scene.frame_width, scene.frame_height),
        &noise,
        seed,
    )?;
    write(
        &out,
        "predictions.ndjson",
        &flockeval::schema::write_predictions(&preds),
    )?;
    write(&out, "ledger.json", &ledger.to_json())?;
    let mut cfg = Map::new();
    cfg.insert("seed".into(), seed.into());
    cfg.insert(
        "scene".into(),
        serde_json::to_value(&scene).expect("scene config"),
    );
    cfg.insert(
        "noise".into(),
        serde_json::to_value(&noise).expect("noise config"),
    );
    write(
        &out,
        "generate.json",
        &(serde_json::to_string_pretty(&cfg).expect("config") + "\n"),
    )
}

pub fn welfare(a: WelfareArgs) -> Result<(), Failure> {
    let out = required(a.out, "out")?;
    let ds = dataset(a.manifest)?;
    let mut cfg = WelfareConfig::default();
    if let Some(w) = a.window {
        cfg.window = w;
    }
    cfg.step = a.step;
    cfg.rules = a
        .rule
        .iter()
        .map(|r| r.parse::<WelfareRule>())
        .collect::<Result<_, _>>()?;
    let report = welfare_report(&ds.frames, &cfg)?;
    write(&out, "budgets.csv", &report.budgets_csv())?;
    write(&out, "flags.csv", &report.flags_csv())?;
    write(&out, "welfare.json", &to_rounded_json(&report))?;
    let flags: usize = report.videos.iter().map(|v| v.flags.len()).sum();
    println!("{flags} flag(s)");
    Ok(())
}
