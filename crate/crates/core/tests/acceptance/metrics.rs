use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aerodet::geometry::{BBox, Detection, GroundTruth};
use aerodet::metrics::{ap_from_curve, best_f1_point, match_detections, pr_curve};

use crate::{overlap, verdict, Outcome};

const IOU: f64 = 0.5;

/// True positives among the detections kept at threshold `theta`, matched
/// from scratch.
fn true_positives_at(dets: &[Detection], gts: &[GroundTruth], theta: f64) -> (usize, usize) {
    let mut kept: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].confidence >= theta).collect();
    kept.sort_by(|&a, &b| dets[b].confidence.partial_cmp(&dets[a].confidence).unwrap().then(a.cmp(&b)));
    let mut used = vec![false; gts.len()];
    let mut tp = 0;
    for &i in &kept {
        let d = &dets[i];
        let mut best = None;
        let mut best_iou = IOU;
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.class_id != d.class_id || g.bbox.frame_index != d.bbox.frame_index {
                continue;
            }
            let o = overlap(&d.bbox, &g.bbox);
            if o >= best_iou && (best.is_none() || o > best_iou) {
                best = Some(j);
                best_iou = o;
            }
        }
        if let Some(j) = best {
            used[j] = true;
            tp += 1;
        }
    }
    (tp, kept.len())
}

#[derive(Debug)]
struct Expected {
    ap: f64,
    /// `(precision, recall, f1)` at the best-F1 threshold.
    best: Option<(f64, f64, f64)>,
}

fn oracle(dets: &[Detection], gts: &[GroundTruth]) -> Expected {
    let mut thresholds: Vec<f64> = dets.iter().map(|d| d.confidence).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let g = gts.len() as f64;
    let points: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let (tp, n) = true_positives_at(dets, gts, t);
            (tp as f64 / n as f64, if gts.is_empty() { 0.0 } else { tp as f64 / g })
        })
        .collect();
    let ap = if gts.is_empty() {
        if dets.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        (0..=10)
            .map(|l| {
                let level = l as f64 / 10.0;
                points.iter().filter(|p| p.1 >= level).map(|p| p.0).fold(0.0, f64::max)
            })
            .sum::<f64>()
            / 11.0
    };
    let mut best: Option<(f64, f64, f64)> = None;
    for &(p, r) in &points {
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let take = match best {
            None => true,
            Some((_, br, bf)) => f1 > bf + 1e-12 || ((f1 - bf).abs() <= 1e-12 && r > br),
        };
        if take {
            best = Some((p, r, f1));
        }
    }
    Expected { ap, best }
}

fn random_box(rng: &mut ChaCha8Rng, frame: usize) -> BBox {
    let (x, y) = (rng.random_range(0.0..50.0), rng.random_range(0.0..50.0));
    let (w, h) = (rng.random_range(2.0..15.0), rng.random_range(2.0..15.0));
    BBox::new(x, y, x + w, y + h, frame).unwrap()
}

fn instance(seed: u64) -> (Vec<Detection>, Vec<GroundTruth>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = rng.random_range(1..=5);
    let classes = rng.random_range(1..=2);
    let mut gts = Vec::new();
    for f in 0..frames {
        for _ in 0..rng.random_range(0..=10) {
            gts.push(GroundTruth { bbox: random_box(&mut rng, f), class_id: rng.random_range(0..classes) });
        }
    }
    // coarse confidences make ties common on some instances
    let coarse = rng.random_bool(0.5);
    let dets = (0..rng.random_range(0..=20))
        .map(|_| {
            let (bbox, class_id) = if !gts.is_empty() && rng.random_bool(0.6) {
                let g = &gts[rng.random_range(0..gts.len())];
                let j = |rng: &mut ChaCha8Rng| rng.random_range(-3.0..3.0);
                let (dx, dy, dw, dh) = (j(&mut rng), j(&mut rng), j(&mut rng), j(&mut rng));
                let b = &g.bbox;
                let (x1, y1) = (b.x1 + dx, b.y1 + dy);
                let (x2, y2) = ((b.x2 + dx + dw).max(x1 + 1.0), (b.y2 + dy + dh).max(y1 + 1.0));
                (BBox::new(x1, y1, x2, y2, b.frame_index).unwrap(), g.class_id)
            } else {
                let frame = rng.random_range(0..frames);
                (random_box(&mut rng, frame), rng.random_range(0..classes))
            };
            let confidence = if coarse { rng.random_range(1..=5) as f64 / 5.0 } else { rng.random_range(0.0..1.0) };
            Detection { bbox, confidence, class_id }
        })
        .collect();
    (dets, gts)
}

pub fn oracle_equivalence() -> Outcome {
    const TOL: f64 = 1e-9;
    let mut worst: f64 = 0.0;
    for seed in 0..500 {
        let (dets, gts) = instance(seed);
        let expect = oracle(&dets, &gts);
        let curve = pr_curve(&match_detections(&dets, &gts, IOU));
        let ap = ap_from_curve(&curve);
        let got = best_f1_point(&curve).ok().map(|p| (p.precision, p.recall, p.f1));
        let err = match (got, expect.best) {
            (Some(a), Some(b)) => {
                [ap - expect.ap, a.0 - b.0, a.1 - b.1, a.2 - b.2].iter().map(|d| d.abs()).fold(0.0, f64::max)
            }
            (None, None) => (ap - expect.ap).abs(),
            _ => f64::INFINITY,
        };
        if err > TOL {
            return Err(format!("instance {seed}: AP {ap} vs {}, best {got:?} vs {:?}", expect.ap, expect.best));
        }
        worst = worst.max(err);
    }
    verdict(true, format!("500 instances, max deviation {worst:.1e}"))
}
