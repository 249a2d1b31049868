//! Score the classical deinterlacers on the held-out toy pairs and on a
//! static diagonal-edge pattern.
//!
//! cargo run --release --example classical

use din::classic::{Method, DEFAULT_MOTION_THRESHOLD};
use din::interlace::{diagonal_edges, scan_interlaced, toy_pairs, ToySetConfig};
use din::metrics::{psnr, MetricsReport};

fn main() -> din::Result<()> {
    let methods = [
        Method::Weave,
        Method::Bob,
        Method::Ela,
        Method::TemporalInsert,
        Method::MotionAdaptive { threshold: DEFAULT_MOTION_THRESHOLD },
    ];

    let mut report = MetricsReport::default();
    for (id, input, target) in toy_pairs(&ToySetConfig::test())? {
        for m in &methods {
            report.push(id.clone(), m.name(), &m.apply(&input)?, &target)?;
        }
    }
    println!("moving toy scenes (mean over {} pairs):", ToySetConfig::test().pairs);
    for s in report.summaries() {
        println!("  {:<9} {:>7.3} dB  ssim {:.4}", s.method, s.mean_psnr_db, s.mean_ssim);
    }

    // a static scene: weave is exact, the spatial interpolators are not
    let truth = diagonal_edges(96, 96, 0.3, 10.0)?;
    let still = scan_interlaced(&truth, &truth)?;
    println!("static diagonal edges:");
    for m in &methods {
        println!("  {:<9} {:>7.3} dB", m.name(), psnr(&m.apply(&still)?, &truth)?);
    }
    Ok(())
}
