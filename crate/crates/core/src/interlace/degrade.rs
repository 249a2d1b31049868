use std::f64::consts::PI;
use std::process::Command;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// The compression stage `C(·)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Compression {
    None,
    /// JPEG-style 8x8 DCT quantisation at a quality in `1..=100`.
    BlockDct { quality: u8 },
    /// Shell command with `{in}` and `{out}` placeholders, e.g. an ffmpeg
    /// H.264 encode/decode round trip. Both are PNG paths.
    External { command: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationConfig {
    pub compression: Compression,
    /// Standard deviation of the additive Gaussian noise, in `[0, 1]` units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig { compression: Compression::None, noise_sigma: 0.0, seed: 0 }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if let Compression::BlockDct { quality } = self.compression {
            if !(1..=100).contains(&quality) {
                return Err(Error::InvalidArgument(format!(
                    "block DCT quality must be in 1..=100, got {quality}"
                )));
            }
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.compression == Compression::None && self.noise_sigma == 0.0
    }

    /// Same config with the noise seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        DegradationConfig { seed, ..self.clone() }
    }
}

/// Compress, then add noise, then clamp to `[0, 1]`.
pub fn degrade(frame: &Frame, cfg: &DegradationConfig) -> Result<Frame> {
    cfg.validate()?;
    let mut out = match &cfg.compression {
        Compression::None => frame.clone(),
        Compression::BlockDct { quality } => block_dct(frame, *quality),
        Compression::External { command } => external(frame, command)?,
    };
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for v in out.data_mut() {
            *v = (*v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
        }
    }
    Ok(out)
}

/// Standard JPEG luminance table (ITU-T T.81 Annex K), row-major.
const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance table scaled by the IJG quality rule:
/// `scale = 5000 / q` below 50, `200 - 2q` otherwise; entries clamped to `1..=255`.
pub fn quant_table(quality: u8) -> [u16; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    LUMA_TABLE.map(|base| ((base as u32 * scale + 50) / 100).clamp(1, 255) as u16)
}

/// `basis[u][x] = c(u) cos((2x+1)uπ/16)`, orthonormal.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let cu = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = cu * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

fn dct2(block: &[f64; 64], inverse: bool) -> [f64; 64] {
    let basis = dct_basis();
    let mut tmp = [0.0; 64];
    let mut out = [0.0; 64];
    // rows, then columns
    for r in 0..8 {
        for k in 0..8 {
            tmp[r * 8 + k] = (0..8)
                .map(|i| {
                    let w = if inverse { basis[i][k] } else { basis[k][i] };
                    w * block[r * 8 + i]
                })
                .sum();
        }
    }
    for c in 0..8 {
        for k in 0..8 {
            out[k * 8 + c] = (0..8)
                .map(|i| {
                    let w = if inverse { basis[i][k] } else { basis[k][i] };
                    w * tmp[i * 8 + c]
                })
                .sum();
        }
    }
    out
}

fn block_dct(frame: &Frame, quality: u8) -> Frame {
    let table = quant_table(quality);
    let (w, h) = (frame.width(), frame.height());
    let mut out = frame.clone();
    for c in 0..frame.channels() {
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                // partial edge blocks replicate their last row/column
                let mut block = [0.0f64; 64];
                for y in 0..8 {
                    for x in 0..8 {
                        let v = frame.get(c, (by + y).min(h - 1), (bx + x).min(w - 1));
                        block[y * 8 + x] = v as f64 * 255.0 - 128.0;
                    }
                }
                let mut coef = dct2(&block, false);
                for (v, &q) in coef.iter_mut().zip(&table) {
                    *v = (*v / q as f64).round() * q as f64;
                }
                let rec = dct2(&coef, true);
                for y in 0..8.min(h - by) {
                    for x in 0..8.min(w - bx) {
                        let v = ((rec[y * 8 + x] + 128.0) / 255.0).clamp(0.0, 1.0);
                        out.set(c, by + y, bx + x, v as f32);
                    }
                }
            }
        }
    }
    out
}

fn external(frame: &Frame, template: &str) -> Result<Frame> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let input = dir.path().join("in.png");
    let output = dir.path().join("out.png");
    frame.save(&input)?;
    let command = template
        .replace("{in}", &input.to_string_lossy())
        .replace("{out}", &output.to_string_lossy());
    let status = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .status()
        .map_err(|e| Error::io("sh", e))?;
    if !status.success() {
        return Err(Error::ExternalCommand {
            command,
            status: status.code().map_or_else(|| "killed by signal".into(), |c| c.to_string()),
        });
    }
    let result = Frame::load(&output)?;
    if !result.same_geometry(frame) {
        return Err(Error::shape(
            "external compression",
            format!(
                "command returned {}x{}x{}, expected {}x{}x{}",
                result.width(),
                result.height(),
                result.channels(),
                frame.width(),
                frame.height(),
                frame.channels()
            ),
        ));
    }
    Ok(result)
}
