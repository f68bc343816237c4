use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use aerodet::config::RunConfig;
use aerodet::dataio::{render_split, render_video, Clip, Split, SyntheticConfig};
use aerodet::experiment::{evaluate_videos, load_videos, predict_records, train_and_evaluate};
use aerodet::metrics::write_report_json;
use aerodet::model::{Detector, ModelConfig};
use aerodet::pipeline::{benchmark_fps, train, write_loss_csv};
use aerodet::tca::{augment_clip, AugmentConfig};

use crate::{verdict, Outcome};

const SEEDS: [u64; 3] = [0, 1, 2];

/// Trained-model AP keyed by `(seed, tau, consistent TCA)`, shared between
/// criteria that need the same run.
#[derive(Default)]
pub struct Runs {
    ap: BTreeMap<(u64, usize, bool), f64>,
}

/// Toy preset on data where targets vanish for single frames while staying
/// labelled, so only temporal context can recover them. Filling those frames
/// in is learned late, hence twice the smoke-test steps.
fn blink_config(seed: u64, tau: usize, consistent: bool) -> RunConfig {
    let mut cfg = RunConfig::toy();
    cfg.data.synthetic.seed = seed;
    cfg.data.synthetic.blink_probability = 0.3;
    cfg.data.synthetic.blink_strength = 0.0;
    cfg.train.total_steps = 4000;
    cfg.train.seed = seed;
    cfg.train.tau = tau;
    cfg.train.augment.consistent = consistent;
    cfg
}

impl Runs {
    fn ap(&mut self, seed: u64, tau: usize, consistent: bool) -> Result<f64, String> {
        if let Some(&ap) = self.ap.get(&(seed, tau, consistent)) {
            return Ok(ap);
        }
        let cfg = blink_config(seed, tau, consistent);
        let run = || -> aerodet::Result<f64> {
            let train_videos = load_videos(&cfg, cfg.data.train_split)?;
            let eval_videos = load_videos(&cfg, cfg.data.eval_split)?;
            Ok(train_and_evaluate(&cfg, &train_videos, &eval_videos, None)?.evaluation.report.ap)
        };
        let ap = run().map_err(|e| e.to_string())?;
        self.ap.insert((seed, tau, consistent), ap);
        Ok(ap)
    }
}

/// Compare variant `a` against `b` over the seeds; passes when `a >= b` on a
/// majority.
fn majority(
    runs: &mut Runs,
    a: (usize, bool),
    b: (usize, bool),
    label: (&str, &str),
) -> Result<(bool, String), String> {
    let mut wins = 0;
    let mut rows = Vec::new();
    for seed in SEEDS {
        let (x, y) = (runs.ap(seed, a.0, a.1)?, runs.ap(seed, b.0, b.1)?);
        wins += (x >= y) as usize;
        rows.push(format!("seed {seed}: {} {x:.3} vs {} {y:.3}", label.0, label.1));
    }
    Ok((2 * wins > SEEDS.len(), format!("{} ({wins}/{} seeds)", rows.join("; "), SEEDS.len())))
}

fn consistent_params_on_clips() -> Result<usize, String> {
    let data =
        SyntheticConfig { num_videos: 4, frames_per_video: 12, resolution: (48, 64), ..SyntheticConfig::default() };
    let videos: Vec<_> = (0..data.num_videos).map(|i| render_video(&data, i).unwrap()).collect();
    let cfg = AugmentConfig { apply_probability: 1.0, ..AugmentConfig::default() };
    assert!(cfg.consistent);
    let mut frames_checked = 0;
    for seed in 0..100u64 {
        let video = &videos[seed as usize % videos.len()];
        let start = seed as usize % (data.frames_per_video - 5);
        let clip = Clip::from_indices(video, &(start..start + 5).collect::<Vec<_>>());
        let out = augment_clip(&clip, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        if out.params.iter().any(|p| *p != out.params[0]) {
            return Err(format!("clip {seed}: per-frame parameters differ"));
        }
        // the same frame repeated must come out identical on every slot
        let still = Clip::from_indices(video, &[start; 5]);
        let out = augment_clip(&still, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        if out.clip.frames.iter().any(|f| *f != out.clip.frames[0])
            || out.clip.annotations.iter().any(|a| *a != out.clip.annotations[0])
        {
            return Err(format!("clip {seed}: a repeated frame was transformed differently"));
        }
        frames_checked += 5;
    }
    Ok(frames_checked)
}

pub fn tca(runs: &mut Runs) -> Outcome {
    let frames = consistent_params_on_clips()?;
    let (ok, detail) = majority(runs, (3, true), (3, false), ("consistent", "inconsistent"))?;
    verdict(ok, format!("100 clips share parameters across {frames} frames; AP {detail}"))
}

pub fn temporal_window(runs: &mut Runs) -> Outcome {
    let (ok, detail) = majority(runs, (3, true), (1, true), ("tau=3", "tau=1"))?;
    verdict(ok, format!("AP {detail}"))
}

pub fn smoke(_: &mut Runs) -> Outcome {
    let cfg = RunConfig::toy();
    let run = || -> aerodet::Result<(usize, usize, usize, f64, f64)> {
        let train_videos = load_videos(&cfg, Split::Train)?;
        let eval_videos = load_videos(&cfg, Split::Test)?;
        let r = train_and_evaluate(&cfg, &train_videos, &eval_videos, None)?;
        let params = r.outcome.checkpoint.params.num_scalars();
        let steps = r.outcome.history.len();
        Ok((train_videos.len(), params, steps, r.outcome.history.last().unwrap().loss_total, r.evaluation.report.ap))
    };
    let (videos, params, steps, loss, ap) = run().map_err(|e| e.to_string())?;
    verdict(
        ap >= 0.5 && videos == 50 && params <= 2_000_000 && steps <= 2000,
        format!("{videos} videos, {params} params, {steps} steps, final loss {loss:.4}, held-out AP@0.5 {ap:.3}"),
    )
}

pub fn throughput(_: &mut Runs) -> Outcome {
    // a single 3-frame window per trial keeps 640 input affordable on CPU
    let tau = 3;
    let (detector, params) = Detector::init::<f32>(&ModelConfig::toy(), tau, 0).map_err(|e| e.to_string())?;
    let fps = |res| benchmark_fps(&detector, &params, res, tau, 3).map_err(|e| e.to_string());
    let (lo, hi) = (fps(320)?, fps(640)?);
    verdict(lo.median > hi.median, format!("median fps {:.2} at 320 vs {:.2} at 640", lo.median, hi.median))
}

pub fn determinism() -> Outcome {
    let mut cfg = RunConfig::toy();
    cfg.data.synthetic.num_videos = 8;
    cfg.data.synthetic.frames_per_video = 16;
    cfg.data.synthetic.test_fraction = 0.25;
    cfg.train.total_steps = 40;
    cfg.train.warmup_steps = 5;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |k: usize| -> aerodet::Result<(Vec<u8>, Vec<u8>, bool)> {
        let train_videos = render_split(&cfg.data.synthetic, Split::Train)?;
        let eval_videos = render_split(&cfg.data.synthetic, Split::Test)?;
        let out = train(&cfg.model, &cfg.train, &train_videos, None)?;
        let csv = dir.path().join(format!("loss{k}.csv"));
        write_loss_csv(&csv, &out.history)?;
        let mut reports = Vec::new();
        for e in 0..2 {
            let records = predict_records(&out.detector, &out.checkpoint.params, &eval_videos, &cfg.inference())?;
            let eval = evaluate_videos(&records, &eval_videos, &cfg.eval)?;
            let json = dir.path().join(format!("metrics{k}_{e}.json"));
            write_report_json(&json, &eval.report)?;
            reports.push(std::fs::read(json).unwrap());
        }
        let repeatable = reports[0] == reports[1];
        Ok((std::fs::read(csv).unwrap(), reports.swap_remove(0), repeatable))
    };
    let (csv_a, json_a, repeat_a) = run(0).map_err(|e| e.to_string())?;
    let (csv_b, json_b, _) = run(1).map_err(|e| e.to_string())?;
    let lines = csv_a.iter().filter(|&&b| b == b'\n').count();
    verdict(
        csv_a == csv_b && repeat_a && json_a == json_b,
        format!(
            "loss CSVs {} ({lines} lines); repeated eval {}; metrics across trainings {}",
            if csv_a == csv_b { "identical" } else { "differ" },
            if repeat_a { "identical" } else { "differs" },
            if json_a == json_b { "identical" } else { "differ" },
        ),
    )
}
