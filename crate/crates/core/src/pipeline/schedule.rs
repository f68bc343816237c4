use std::f64::consts::PI;

/// Cosine decay from `lr0` at step 0 to `lr_min` at `total_steps`; steps
/// past the end stay at `lr_min`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64, lr_min: f64) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return if step == 0 && total_steps == 0 { lr0 } else { lr_min };
    }
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + (PI * step as f64 / total_steps as f64).cos())
}

/// Linear warmup over the first `warmup` steps followed by cosine decay
/// across the remainder.
pub fn warmup_cosine_lr(step: usize, total_steps: usize, warmup: usize, lr0: f64, lr_min: f64) -> f64 {
    if step < warmup {
        return lr0 * (step + 1) as f64 / warmup as f64;
    }
    cosine_lr(step - warmup, total_steps.saturating_sub(warmup), lr0, lr_min)
}
