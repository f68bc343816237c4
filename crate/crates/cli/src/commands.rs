use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;

use aerodet::config::RunConfig;
use aerodet::dataio::{generate_synthetic, load_annotations, Split, Video};
use aerodet::experiment::{
    ablation_variants, evaluate_videos, load_videos, predict_records, train_and_evaluate, AblationAxis,
};
use aerodet::head::{read_detections_jsonl, write_detections_jsonl, DetectionRecord};
use aerodet::metrics::{draw_overlay, write_pr_csv, write_report_json, Evaluation};
use aerodet::pipeline::{benchmark_fps, train as train_model, write_loss_csv, Checkpoint};

use crate::manifest::write_manifest;
use crate::ConfigArgs;

const CONFIG_FILE: &str = "config.json";

fn resolve(args: &ConfigArgs, fallback: Option<&Path>) -> Result<RunConfig> {
    let base = match (&args.config, args.toy, fallback) {
        (Some(p), _, _) => RunConfig::load(p)?,
        (None, true, _) => RunConfig::toy(),
        (None, false, Some(p)) if p.exists() => RunConfig::load(p)?,
        _ => RunConfig::default(),
    };
    Ok(base.with_overrides(&args.overrides)?)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parse_split(s: &str) -> Result<Split> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .with_context(|| format!("unknown split {s:?} (train, val, test)"))
}

pub fn generate_data(args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = resolve(args, None)?;
    create_dir(out)?;
    let index = generate_synthetic(&cfg.data.synthetic, out)?;
    cfg.save(&out.join(CONFIG_FILE))?;
    let mut per_split: BTreeMap<String, usize> = BTreeMap::new();
    let (mut frames, mut boxes) = (0, 0);
    for e in &index.entries {
        *per_split.entry(format!("{:?}", e.split).to_lowercase()).or_default() += 1;
        frames += e.meta.frame_count;
        boxes += load_annotations(&out.join(&e.annotation_path), &e.meta)?.num_boxes();
    }
    write_manifest(out, "generate-data")?;
    let splits: Vec<String> = per_split.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!("videos: {} ({})", index.entries.len(), splits.join(", "));
    println!("frames: {frames}");
    println!("boxes: {boxes}");
    Ok(())
}

pub fn train(args: &ConfigArgs, out: &Path) -> Result<()> {
    let cfg = resolve(args, None)?;
    create_dir(out)?;
    cfg.save(&out.join(CONFIG_FILE))?;
    let videos = load_videos(&cfg, cfg.data.train_split)?;
    info!("training on {} videos", videos.len());
    let outcome = train_model(&cfg.model, &cfg.train, &videos, Some(out))?;
    write_loss_csv(&out.join("loss.csv"), &outcome.history)?;
    write_manifest(out, "train")?;
    let last = outcome.history.last().expect("at least one step");
    println!("steps: {}", outcome.history.len());
    println!("final loss: {:.6}", last.loss_total);
    println!("checkpoint: {}", out.join("model.ckpt").display());
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub split: Option<String>,
    pub stride: Option<usize>,
    pub overlays: usize,
}

pub fn eval(args: EvalArgs, config: &ConfigArgs, out: &Path) -> Result<()> {
    let sibling = args.checkpoint.as_ref().and_then(|c| c.parent().map(|p| p.join(CONFIG_FILE)));
    let mut cfg = resolve(config, sibling.as_deref())?;
    if let Some(d) = args.data {
        cfg.data.root = Some(d);
    }
    if let Some(s) = args.stride {
        cfg.eval.eval_stride = s;
    }
    let split = match &args.split {
        Some(s) => parse_split(s)?,
        None => cfg.data.eval_split,
    };
    cfg.validate()?;
    let videos = load_videos(&cfg, split)?;
    if videos.is_empty() {
        bail!("split {split:?} has no videos");
    }
    create_dir(out)?;
    let records = match (&args.detections, &args.checkpoint) {
        (Some(path), _) => read_detections_jsonl(path)?,
        (None, Some(path)) => {
            if !path.exists() {
                bail!("checkpoint {} does not exist", path.display());
            }
            let ck = Checkpoint::load(path)?;
            let detector = ck.detector()?;
            predict_records(&detector, &ck.params, &videos, &cfg.inference())?
        }
        (None, None) => bail!("either --checkpoint or --detections is required"),
    };
    let evaluation = evaluate_videos(&records, &videos, &cfg.eval)?;
    write_detections_jsonl(&out.join("detections.jsonl"), &records)?;
    write_report_json(&out.join("metrics.json"), &evaluation.report)?;
    write_pr_csv(&out.join("pr.csv"), &evaluation.curve)?;
    if args.overlays > 0 {
        write_overlays(&out.join("overlays"), &videos, &records, &evaluation, cfg.eval.eval_stride, args.overlays)?;
    }
    write_manifest(out, "eval")?;
    let r = &evaluation.report;
    println!("evaluated frames: {}", r.evaluated_frames);
    println!("AP@0.5: {:.4}", r.ap);
    println!("precision: {:.4} recall: {:.4} F1: {:.4}", r.precision_at_best_f1, r.recall_at_best_f1, r.best_f1);
    println!("FPPI: {:.6} encounter rate: {:.4}", r.fppi, r.encounter_rate);
    Ok(())
}

fn write_overlays(
    dir: &Path,
    videos: &[Video],
    records: &[DetectionRecord],
    evaluation: &Evaluation,
    stride: usize,
    limit: usize,
) -> Result<()> {
    create_dir(dir)?;
    let threshold = evaluation.report.confidence_at_best_f1;
    let mut written = 0;
    for v in videos {
        for f in (0..v.frames.len()).step_by(stride) {
            if written == limit {
                return Ok(());
            }
            let dets: Vec<_> = records
                .iter()
                .filter(|r| r.video_id == v.meta.video_id && r.frame_index == f)
                .map(DetectionRecord::to_detection)
                .collect::<aerodet::Result<_>>()?;
            let gts = v.annotations.frames.get(f).map_or(&[][..], Vec::as_slice);
            let img = draw_overlay(&v.frames[f], gts, &dets, threshold);
            img.save_png(&dir.join(format!("{}_{f:06}.png", v.meta.video_id)))?;
            written += 1;
        }
    }
    Ok(())
}

pub fn bench(checkpoint: &Path, resolution: usize, frames: usize, trials: usize, out: Option<&Path>) -> Result<()> {
    if resolution == 0 || !resolution.is_multiple_of(32) {
        bail!("resolution {resolution} must be a positive multiple of 32");
    }
    if !checkpoint.exists() {
        bail!("checkpoint {} does not exist", checkpoint.display());
    }
    let ck = Checkpoint::load(checkpoint)?;
    let detector = ck.detector()?;
    let report = benchmark_fps(&detector, &ck.params, resolution, frames, trials)?;
    if let Some(dir) = out {
        create_dir(dir)?;
        std::fs::write(dir.join("bench.json"), serde_json::to_string_pretty(&report)? + "\n")?;
        write_manifest(dir, "bench")?;
    }
    let trials: Vec<String> = report.trials.iter().map(|f| format!("{f:.2}")).collect();
    println!(
        "resolution {resolution}: median {:.2} fps over {} frames (trials: {})",
        report.median,
        report.frames,
        trials.join(", ")
    );
    Ok(())
}

pub fn ablate(args: &ConfigArgs, axis: &str, out: &Path) -> Result<()> {
    let axis: AblationAxis = axis.parse()?;
    let cfg = resolve(args, None)?;
    create_dir(out)?;
    cfg.save(&out.join(CONFIG_FILE))?;
    let train_videos = load_videos(&cfg, cfg.data.train_split)?;
    let eval_videos = load_videos(&cfg, cfg.data.eval_split)?;
    let mut table = csv::Writer::from_path(out.join("ablation.csv"))?;
    table.write_record([
        "variant",
        "ap",
        "precision",
        "recall",
        "best_f1",
        "fppi",
        "encounter_rate",
        "fps",
        "final_loss",
    ])?;
    for (name, variant) in ablation_variants(&cfg, axis) {
        info!("variant {name}");
        let dir = out.join(name.replace('=', "_"));
        create_dir(&dir)?;
        variant.save(&dir.join(CONFIG_FILE))?;
        let run = train_and_evaluate(&variant, &train_videos, &eval_videos, Some(&dir))?;
        write_loss_csv(&dir.join("loss.csv"), &run.outcome.history)?;
        write_report_json(&dir.join("metrics.json"), &run.evaluation.report)?;
        let tau = variant.train.tau;
        let fps =
            benchmark_fps(&run.outcome.detector, &run.outcome.checkpoint.params, variant.train.resolution, 4 * tau, 3)?;
        let r = &run.evaluation.report;
        let last = run.outcome.history.last().map_or(f64::NAN, |h| h.loss_total);
        table.write_record([
            name.clone(),
            r.ap.to_string(),
            r.precision_at_best_f1.to_string(),
            r.recall_at_best_f1.to_string(),
            r.best_f1.to_string(),
            r.fppi.to_string(),
            r.encounter_rate.to_string(),
            format!("{:.3}", fps.median),
            last.to_string(),
        ])?;
        println!(
            "{name}: AP {:.4} P {:.4} R {:.4} fps {:.2}",
            r.ap, r.precision_at_best_f1, r.recall_at_best_f1, fps.median
        );
    }
    table.flush()?;
    write_manifest(out, &format!("ablate {axis}"))?;
    Ok(())
}
