//! Simulate interlaced capture of a moving scene and degrade it the way a
//! compressed broadcast would.
//!
//! cargo run --release --example interlace -- [out_dir]

use std::path::PathBuf;

use din::interlace::{degrade, merge_fields, moving_texture_pair, scan_interlaced, split_fields, Compression, DegradationConfig};
use din::metrics::psnr;

fn main() -> din::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "interlace_demo".into()));
    std::fs::create_dir_all(&out).map_err(|e| din::Error::io(&out, e))?;

    // two instants of the same scene; shapes move a few pixels in between
    let (first, second) = moving_texture_pair(128, 5)?;
    let interlaced = scan_interlaced(&first, &second)?;
    let fields = split_fields(&interlaced)?;
    assert_eq!(merge_fields(&fields)?, interlaced);
    println!(
        "frame {}x{}, fields {}x{}",
        interlaced.width(),
        interlaced.height(),
        fields.width(),
        fields.field_height()
    );

    let cfg = DegradationConfig { compression: Compression::BlockDct { quality: 40 }, noise_sigma: 0.02, seed: 1 };
    let degraded = degrade(&interlaced, &cfg)?;
    println!("interlaced vs first frame: {:.2} dB", psnr(&interlaced, &first)?);
    println!("degraded vs interlaced:    {:.2} dB", psnr(&degraded, &interlaced)?);

    first.save(out.join("first.png"))?;
    second.save(out.join("second.png"))?;
    interlaced.save(out.join("interlaced.png"))?;
    degraded.save(out.join("degraded.png"))?;
    fields.top.save(out.join("top_field.png"))?;
    fields.bottom.save(out.join("bottom_field.png"))?;
    println!("wrote images to {}", out.display());
    Ok(())
}
