//! Build the deinterlacing network, inspect its layers, run a forward pass
//! and round-trip the weights through a checkpoint file.
//!
//! cargo run --release --example din_model

use din::interlace::{moving_texture_pair, scan_interlaced, split_fields};
use din::model::{load_checkpoint, save_checkpoint, DinConfig, DinParams};

fn main() -> din::Result<()> {
    let reference = DinParams::<f32>::build(DinConfig::reference(), 0)?;
    println!("reference configuration: {} parameters", reference.param_count());
    for l in reference.layers().iter().take(4) {
        println!("  {:<18} {}", l.name, l.weight.shape());
    }
    println!("  ... {} layers in total", reference.layers().len());

    let small = DinParams::<f32>::build(DinConfig::with_channels(16), 1)?;
    println!("16-channel variant: {} parameters", small.param_count());

    let (first, second) = moving_texture_pair(64, 2)?;
    let interlaced = scan_interlaced(&first, &second)?;
    let fields = split_fields(&interlaced)?;
    let (output, intermediate) = small.forward(&fields.top.to_tensor(), &fields.bottom.to_tensor())?;
    println!("fields {} -> intermediate {}, output {}", fields.top.to_tensor::<f32>().shape(), intermediate.shape(), output.shape());

    let frame = small.deinterlace(&interlaced)?;
    println!("deinterlaced frame {}x{} (untrained weights)", frame.width(), frame.height());

    let dir = tempfile::tempdir().map_err(|e| din::Error::io(std::env::temp_dir(), e))?;
    let path = dir.path().join("small.din");
    save_checkpoint(&small, &path)?;
    let bytes = std::fs::metadata(&path).map_err(|e| din::Error::io(&path, e))?.len();
    assert_eq!(load_checkpoint(&path)?, small);
    println!("checkpoint round trip ok ({bytes} bytes)");
    Ok(())
}
