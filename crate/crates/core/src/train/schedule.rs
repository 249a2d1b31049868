use super::TrainConfig;

/// Weight of the intermediate-output term for `epoch` of `total_epochs`.
///
/// Constant `lambda_start` for the first half, then a linear ramp that
/// reaches `lambda_end` on the last epoch: with `half = E/2`,
/// `t = (epoch + 1 - half) / (E - half)`.
pub fn lambda_schedule(epoch: usize, total_epochs: usize, cfg: &TrainConfig) -> f64 {
    let total = total_epochs.max(1) as f64;
    let half = total / 2.0;
    let e = epoch as f64;
    if e < half {
        return cfg.lambda_start;
    }
    let t = ((e + 1.0 - half) / (total - half)).clamp(0.0, 1.0);
    cfg.lambda_start + (cfg.lambda_end - cfg.lambda_start) * t
}

/// `lr0 · factor^-floor(epoch / every)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    let drops = (epoch / cfg.lr_decay_every.max(1)) as i32;
    cfg.lr0 * cfg.lr_decay_factor.powi(-drops)
}
