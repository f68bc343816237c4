use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aerodet::geometry::{BBox, Detection};
use aerodet::head::nms;
use aerodet::metrics::{encounter_rate, encounter_threshold_frames, flight_detected, fppi};

use crate::{overlap, verdict, Outcome};

/// O(n²) suppression: rank by a pairwise "beats" relation, then a detection
/// survives when no surviving higher-ranked box of its frame and class
/// overlaps it by more than `it`.
fn oracle(dets: &[Detection], ct: f64, it: f64) -> Vec<Detection> {
    let n = dets.len();
    let beats = |j: usize, i: usize| {
        dets[j].confidence > dets[i].confidence || (dets[j].confidence == dets[i].confidence && j < i)
    };
    let mut rank: Vec<usize> = (0..n).filter(|&i| dets[i].confidence >= ct).collect();
    rank.sort_by_key(|&i| (0..n).filter(|&j| beats(j, i)).count());
    let mut alive = vec![false; n];
    for &i in &rank {
        alive[i] = !(0..n).any(|j| {
            alive[j]
                && beats(j, i)
                && dets[j].bbox.frame_index == dets[i].bbox.frame_index
                && dets[j].class_id == dets[i].class_id
                && overlap(&dets[j].bbox, &dets[i].bbox) > it
        });
    }
    rank.into_iter().filter(|&i| alive[i]).map(|i| dets[i]).collect()
}

pub fn nms_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut kept = 0;
    for case in 0..500 {
        let n = rng.random_range(0..=50);
        let dets: Vec<Detection> = (0..n)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..40.0), rng.random_range(0.0..40.0));
                let (w, h) = (rng.random_range(1.0..15.0), rng.random_range(1.0..15.0));
                let confidence =
                    if case % 2 == 0 { rng.random_range(0..10) as f64 / 9.0 } else { rng.random_range(0.0..1.0) };
                Detection {
                    bbox: BBox::new(x, y, x + w, y + h, rng.random_range(0..2)).unwrap(),
                    confidence,
                    class_id: rng.random_range(0..2),
                }
            })
            .collect();
        let (ct, it) = (rng.random_range(0.0..0.5), rng.random_range(0.1..0.9));
        let got = nms(&dets, ct, it);
        if got != oracle(&dets, ct, it) {
            return Err(format!("case {case} (n = {n}, conf {ct:.3}, iou {it:.3}) differs from the oracle"));
        }
        kept += got.len();
    }
    verdict(true, format!("500 instances agree ({kept} boxes kept in total)"))
}

fn evaluated(frames: usize, stride: usize, hit: impl Fn(usize) -> bool) -> Vec<(usize, bool)> {
    (0..frames).step_by(stride).map(|f| (f, hit(f))).collect()
}

pub fn rate_fixtures() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let v = fppi(85, 194_193).map_err(|e| e.to_string())?;
    check("85 / 194193", v == 85.0 / 194_193.0 && format!("{v:.3e}") == "4.377e-4");
    check("3 / 1000", fppi(3, 1000).ok() == Some(0.003));
    check("no false positives", fppi(0, 500).ok() == Some(0.0));
    check("zero frames rejected", fppi(1, 0).is_err());
    check("3 s at 30 fps", encounter_threshold_frames(30.0, 3.0) == 90);
    check("3 s at 25 fps", encounter_threshold_frames(25.0, 3.0) == 75);
    // stride 1: frames 0..=89 span exactly 90, 0..=88 only 89
    check("span 90 at stride 1", flight_detected(&evaluated(90, 1, |_| true), 30.0, 3.0, 1));
    check("span 89 at stride 1", !flight_detected(&evaluated(89, 1, |_| true), 30.0, 3.0, 1));
    // stride 4: evaluated 0..=88 spans 89, 0..=92 spans 93
    check("span 89 at stride 4", !flight_detected(&evaluated(89, 4, |_| true), 30.0, 3.0, 4));
    check("span 93 at stride 4", flight_detected(&evaluated(93, 4, |_| true), 30.0, 3.0, 4));
    check("miss every 80 frames", !flight_detected(&evaluated(300, 4, |f| f % 80 != 0), 30.0, 3.0, 4));
    let flights = [evaluated(300, 4, |_| true), evaluated(300, 4, |_| false), evaluated(60, 4, |_| true)];
    check("one of three flights", encounter_rate(&flights, 30.0, 3.0, 4) == 1.0 / 3.0);
    // 82 of 175 flights encountered
    let many: Vec<_> = (0..175).map(|k| evaluated(120, 4, move |_| k < 82)).collect();
    check("82 of 175 flights", encounter_rate(&many, 30.0, 3.0, 4) == 82.0 / 175.0);
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("FPPI {v:.3e}, threshold 90 frames, all 13 fixtures exact")
        } else {
            format!("failed fixtures: {}", failures.join(", "))
        },
    )
}
