//! Benchmark every classical method (and optionally trained weights) on the
//! shipped held-out toy set; writes a metrics CSV and side-by-side crops.
//!
//! cargo run --release --example benchmark -- [out_dir] [checkpoint.din]

use std::path::PathBuf;

use din::classic::{Method, DEFAULT_MOTION_THRESHOLD};
use din::cli::{bench, centre_crop, side_by_side, Deinterlacer};
use din::model::load_checkpoint;

fn main() -> din::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "benchmark_demo".into()));
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/toy/test/manifest.tsv");

    let mut methods: Vec<Deinterlacer> = [
        Method::Weave,
        Method::Bob,
        Method::Ela,
        Method::MotionAdaptive { threshold: DEFAULT_MOTION_THRESHOLD },
    ]
    .into_iter()
    .map(Deinterlacer::Classic)
    .collect();
    if let Some(path) = args.next() {
        methods.push(Deinterlacer::Din(Box::new(load_checkpoint(path)?)));
    }

    let (report, panels) = bench(&manifest, &methods)?;
    std::fs::create_dir_all(&out).map_err(|e| din::Error::io(&out, e))?;
    report.write_csv(out.join("bench.csv"))?;
    for (id, tiles) in &panels {
        let crops = tiles.iter().map(|t| centre_crop(t, 48)).collect::<din::Result<Vec<_>>>()?;
        side_by_side(&crops)?.save(out.join(format!("{id}.png")))?;
    }
    for s in report.summaries() {
        println!("{:<7} {:>7.3} dB  ssim {:.4}", s.method, s.mean_psnr_db, s.mean_ssim);
    }
    println!("wrote bench.csv and {} comparison strips to {}", panels.len(), out.display());
    Ok(())
}
