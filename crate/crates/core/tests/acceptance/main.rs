//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run everything with `cargo test -p aerodet-core --test acceptance`, or a
//! subset by number, e.g. `cargo test -p aerodet-core --test acceptance -- 1 7`.

mod attention;
mod losses;
mod metrics;
mod postprocess;
mod training;

use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn(&mut training::Runs) -> Outcome,
}

const MINUTE: Duration = Duration::from_secs(60);

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, name: "metric oracle equivalence", budget: MINUTE, run: |_| metrics::oracle_equivalence() },
        Criterion { id: 2, name: "loss hand examples and gradients", budget: 2 * MINUTE, run: |_| losses::check() },
        Criterion { id: 3, name: "attention correctness", budget: 2 * MINUTE, run: |_| attention::check() },
        Criterion { id: 4, name: "TCA contract and direction", budget: 30 * MINUTE, run: training::tca },
        Criterion { id: 5, name: "temporal window direction", budget: 30 * MINUTE, run: training::temporal_window },
        Criterion { id: 6, name: "smoke convergence", budget: 30 * MINUTE, run: training::smoke },
        Criterion { id: 7, name: "NMS brute-force oracle", budget: MINUTE, run: |_| postprocess::nms_oracle() },
        Criterion { id: 8, name: "throughput trend", budget: 10 * MINUTE, run: training::throughput },
        Criterion { id: 9, name: "determinism", budget: 10 * MINUTE, run: |_| training::determinism() },
        Criterion {
            id: 10,
            name: "FPPI and encounter fixtures",
            budget: MINUTE,
            run: |_| postprocess::rate_fixtures(),
        },
    ]
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut runs = training::Runs::default();
    let mut failed = 0;
    for c in criteria() {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)(&mut runs);
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.budget => {
                Err(format!("{detail}; over budget ({:.0?} > {:.0?})", elapsed, c.budget))
            }
            other => other,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += result.is_err() as usize;
        println!("{tag} [{}] {}: {detail} ({:.1}s)", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

/// Intersection over union, written out independently of the library.
fn overlap(a: &aerodet::geometry::BBox, b: &aerodet::geometry::BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Turn a boolean check into an outcome carrying `detail` either way.
fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}
