//! Train a reduced DIN on the procedural toy set and compare it with the
//! classical baselines on held-out pairs.
//!
//! cargo run --release --example train_toy -- [steps] [out_dir]
//!
//! The defaults (2000 steps, 32 channels, batch 4, 32×32 patches, lr 2e-3
//! dropped tenfold after 80 epochs, horizontal flips) take a few minutes on
//! one CPU core. With `out_dir` the checkpoint and loss logs are kept.

use std::path::PathBuf;
use std::time::Instant;

use din::classic::{Method, DEFAULT_MOTION_THRESHOLD};
use din::interlace::{toy_pairs, ToySetConfig};
use din::metrics::psnr;
use din::model::{save_checkpoint, DinConfig};
use din::train::{Augment, TrainConfig, Trainer, TrainingSet};
use din::Frame;

fn mean_psnr(pairs: &[(Frame, Frame)], f: impl Fn(&Frame) -> din::Result<Frame>) -> din::Result<f64> {
    let mut sum = 0.0;
    for (input, target) in pairs {
        sum += psnr(&f(input)?, target)?;
    }
    Ok(sum / pairs.len() as f64)
}

fn main() -> din::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let out_dir = args.next().map(PathBuf::from);

    // 8-bit, exactly as `dintool toy` stores the set
    let pairs = |cfg| -> din::Result<Vec<(Frame, Frame)>> {
        Ok(toy_pairs(&cfg)?.into_iter().map(|(_, input, target)| (input.quantized(), target)).collect())
    };
    let test = pairs(ToySetConfig::test())?;
    let train = TrainingSet::from_pairs(pairs(ToySetConfig::train())?, 32)?;

    let mut cfg = TrainConfig {
        patch_size: 32,
        batch_size: 4,
        lr0: 2e-3,
        lr_decay_every: 80,
        lr_decay_factor: 10.0,
        augment: Augment::Horizontal,
        seed: 7,
        ..TrainConfig::default()
    };
    let per_epoch = cfg.steps_per_epoch(&train);
    cfg.epochs = (steps / per_epoch).max(1);
    cfg.lr_decay_every = (cfg.epochs * 4).div_ceil(5);
    println!("{} epochs of {per_epoch} steps", cfg.epochs);

    let start = Instant::now();
    let mut trainer = Trainer::new(train, DinConfig::with_channels(32), cfg)?;
    trainer.run(out_dir.as_deref())?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    for m in [Method::Weave, Method::Bob, Method::Ela, Method::MotionAdaptive { threshold: DEFAULT_MOTION_THRESHOLD }] {
        println!("{:<6} {:.3} dB", m.name(), mean_psnr(&test, |f| m.apply(f))?);
    }
    let params = trainer.params();
    println!("{:<6} {:.3} dB", "din", mean_psnr(&test, |f| params.deinterlace(f))?);

    let ma = trainer.log().moving_average(51);
    println!("loss (51-step average) at step 50: {:.5}, final: {:.5}", ma[50.min(ma.len() - 1)], ma[ma.len() - 1]);
    if let Some(dir) = out_dir {
        save_checkpoint(params, dir.join("final.din"))?;
        println!("weights and logs in {}", dir.display());
    }
    Ok(())
}
