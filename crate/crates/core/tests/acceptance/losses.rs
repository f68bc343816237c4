use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use aerodet::geometry::{BBox, GroundTruth};
use aerodet::head::{
    assign_targets, classification_loss, localization_loss, objectness_loss, total_loss, GridGeometry, LossTerms,
    LossWeights, TargetMap,
};
use aerodet::pipeline::grad_check_graph;
use aerodet::tensor::{Graph, Tensor, Var};

use crate::{verdict, Outcome};

fn geom(rows: usize, cols: usize) -> GridGeometry {
    GridGeometry { rows, cols, stride: 8, boxes: 1, classes: 1 }
}

fn hand_examples() -> [(&'static str, f64, f64); 3] {
    let w = LossWeights::default();
    let mut g = Graph::<f64>::new();

    // one object cell predicting 0.6, three empty cells at 0.1
    let mut t = TargetMap::empty(geom(2, 2), 1);
    t.mask[0] = 1.0;
    let obj = g.constant(Tensor::from_f64(&[1, 2, 2, 1, 1], &[0.6, 0.1, 0.1, 0.1]));
    let l_obj = objectness_loss(&mut g, obj, &t, &w);

    // an object cell with p = 0.7 for its class
    let mut t = TargetMap::empty(geom(1, 2), 1);
    t.mask[0] = 1.0;
    t.cls[0] = 1.0;
    let cls = g.constant(Tensor::from_f64(&[1, 1, 2, 1, 1], &[0.7, 0.4]));
    let l_cls = classification_loss(&mut g, cls, &t);

    // center off by 0.1, width 9 against 16
    let mut t = TargetMap::empty(geom(1, 1), 1);
    t.mask[0] = 1.0;
    t.xy = vec![0.5, 0.5];
    t.wh = vec![16.0, 4.0];
    let xy = g.constant(Tensor::from_f64(&[1, 1, 1, 1, 2], &[0.6, 0.5]));
    let wh = g.constant(Tensor::from_f64(&[1, 1, 1, 1, 2], &[9.0, 4.0]));
    let l_loc = localization_loss(&mut g, xy, wh, &t, &w).expect("positive sizes");

    [
        ("objectness", g.value(l_obj).item(), 0.31),
        ("classification", g.value(l_cls).item(), 0.09),
        ("localization", g.value(l_loc).item(), 5.01),
    ]
}

/// Raw head outputs and targets for two scales of a random small grid.
fn random_grid(seed: u64) -> (Vec<Tensor<f64>>, Vec<TargetMap>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = rng.random_range(1..=3);
    let classes = rng.random_range(1..=3);
    let boxes = rng.random_range(1..=2);
    let mut raws = Vec::new();
    let mut targets = Vec::new();
    for (rows, cols, stride) in [(4, 4, 8), (2, 2, 16)] {
        let geo = GridGeometry { rows, cols, stride, boxes, classes };
        let gts: Vec<Vec<GroundTruth>> = (0..frames)
            .map(|f| {
                (0..rng.random_range(1..4))
                    .map(|_| {
                        let (cx, cy) = (rng.random_range(2.0..30.0), rng.random_range(2.0..30.0));
                        let (w, h) = (rng.random_range(1.0..12.0), rng.random_range(1.0..12.0));
                        GroundTruth {
                            bbox: BBox::from_center_form(cx, cy, w, h, f).unwrap(),
                            class_id: rng.random_range(0..classes),
                        }
                    })
                    .collect()
            })
            .collect();
        let t = assign_targets(&gts, geo);
        let shape = t.slot_shape(geo.fields());
        let n = shape.iter().product();
        raws.push(Tensor::from_vec(&shape, (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()));
        targets.push(t);
    }
    (raws, targets)
}

pub fn check() -> Outcome {
    let mut worst_hand: f64 = 0.0;
    for (name, got, want) in hand_examples() {
        let d = (got - want).abs();
        if d > 1e-9 {
            return Err(format!("{name} hand example gave {got}, expected {want}"));
        }
        worst_hand = worst_hand.max(d);
    }

    type Pick = fn(&LossTerms) -> Var;
    let picks: [(&str, Pick); 4] = [("obj", |t| t.obj), ("cls", |t| t.cls), ("loc", |t| t.loc), ("total", |t| t.total)];
    let w = LossWeights::default();
    let mut worst = [0.0f64; 4];
    for seed in 0..20 {
        let (raws, targets) = random_grid(seed);
        for (k, (_, pick)) in picks.iter().enumerate() {
            let err = grad_check_graph(|g, v| pick(&total_loss(g, v, &targets, &w).unwrap()), &raws, 1e-4)
                .map_err(|e| e.to_string())?;
            worst[k] = worst[k].max(err);
        }
    }
    let summary: Vec<String> = picks.iter().zip(worst).map(|((n, _), e)| format!("{n} {e:.1e}")).collect();
    verdict(
        worst.iter().all(|&e| e < 1e-4),
        format!("hand examples within {worst_hand:.0e}; 20 grids, max rel. grad error {}", summary.join(", ")),
    )
}
