//! Procedural moving-texture frame pairs for desk-scale experiments.
//!
//! Each pair is a static textured background with a handful of textured
//! shapes that move a few pixels between the two frames, so a woven frame
//! shows combing on the shapes and nowhere else.

use std::f32::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{pair_seed, write_pairs, ManifestEntry};
use super::{degrade, scan_interlaced, Compression, DegradationConfig};
use crate::error::{Error, Result};
use crate::frame::Frame;

/// How a toy set is generated.
#[derive(Debug, Clone, PartialEq)]
pub struct ToySetConfig {
    pub pairs: usize,
    pub size: usize,
    pub degradation: DegradationConfig,
    pub seed: u64,
}

impl ToySetConfig {
    /// 20 training pairs at 64×64, block-DCT quality 40 plus σ = 0.02 noise.
    pub fn train() -> Self {
        ToySetConfig {
            pairs: 20,
            size: 64,
            degradation: DegradationConfig {
                compression: Compression::BlockDct { quality: 40 },
                noise_sigma: 0.02,
                seed: 11,
            },
            seed: 1,
        }
    }

    /// Held-out pairs drawn from different seeds than [`ToySetConfig::train`].
    pub fn test() -> Self {
        let mut cfg = Self::train();
        cfg.pairs = 8;
        cfg.seed = 1001;
        cfg.degradation.seed = 1011;
        cfg
    }
}

/// Periodic texture: a sum of two oriented sinusoids around a base colour.
#[derive(Debug, Clone, Copy)]
struct Texture {
    base: [f32; 3],
    tint: [f32; 3],
    freq: [(f32, f32); 2],
    phase: [f32; 2],
    amp: f32,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut dir = || {
            let angle = rng.random_range(0.0..PI);
            let period = rng.random_range(5.0f32..18.0);
            let k = 2.0 * PI / period;
            (k * angle.cos(), k * angle.sin())
        };
        let freq = [dir(), dir()];
        Texture {
            base: [rng.random_range(0.2..0.8), rng.random_range(0.2..0.8), rng.random_range(0.2..0.8)],
            tint: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            freq,
            phase: [rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI)],
            amp: rng.random_range(0.08..0.2),
        }
    }

    fn sample(&self, c: usize, y: f32, x: f32) -> f32 {
        let a = (self.freq[0].0 * x + self.freq[0].1 * y + self.phase[0]).sin();
        let b = (self.freq[1].0 * x + self.freq[1].1 * y + self.phase[1]).sin();
        self.base[c] + self.amp * (a + 0.5 * b * self.tint[c])
    }
}

#[derive(Debug, Clone, Copy)]
enum Outline {
    Disc { radius: f32 },
    Rect { half_h: f32, half_w: f32 },
}

impl Outline {
    /// Coverage in `[0, 1]` with a one-pixel soft edge.
    fn coverage(&self, dy: f32, dx: f32) -> f32 {
        let dist = match *self {
            Outline::Disc { radius } => (dy * dy + dx * dx).sqrt() - radius,
            Outline::Rect { half_h, half_w } => (dy.abs() - half_h).max(dx.abs() - half_w),
        };
        (0.5 - dist).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Sprite {
    outline: Outline,
    texture: Texture,
    center: (f32, f32),
    velocity: (f32, f32),
}

fn render(size: usize, background: &Texture, sprites: &[Sprite], time: f32) -> Result<Frame> {
    Frame::from_fn(size, size, 3, |c, y, x| {
        let (yf, xf) = (y as f32, x as f32);
        let mut v = background.sample(c, yf, xf);
        for s in sprites {
            let cy = s.center.0 + s.velocity.0 * time;
            let cx = s.center.1 + s.velocity.1 * time;
            let alpha = s.outline.coverage(yf - cy, xf - cx);
            if alpha > 0.0 {
                // the texture travels with the sprite
                let t = s.texture.sample(c, yf - s.velocity.0 * time, xf - s.velocity.1 * time);
                v = v * (1.0 - alpha) + t * alpha;
            }
        }
        v
    })
    .map(|f| f.clamped().quantized())
}

/// Two consecutive frames of a procedurally generated scene, 8-bit
/// quantised. Moving shapes shift by 2–6 pixels between the frames.
pub fn moving_texture_pair(size: usize, seed: u64) -> Result<(Frame, Frame)> {
    if size < 8 {
        return Err(Error::InvalidArgument(format!("toy frames need size >= 8, got {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = Texture::random(&mut rng);
    let s = size as f32;
    let count = rng.random_range(2..=4);
    let sprites: Vec<Sprite> = (0..count)
        .map(|_| {
            let extent = rng.random_range(0.1 * s..0.2 * s);
            let outline = if rng.random_bool(0.5) {
                Outline::Disc { radius: extent }
            } else {
                Outline::Rect { half_h: extent, half_w: rng.random_range(0.5 * extent..1.5 * extent) }
            };
            let speed = rng.random_range(2.0f32..6.0);
            let heading = rng.random_range(0.0..2.0 * PI);
            Sprite {
                outline,
                texture: Texture::random(&mut rng),
                center: (rng.random_range(0.0..s), rng.random_range(0.0..s)),
                velocity: (speed * heading.sin(), speed * heading.cos()),
            }
        })
        .collect();
    Ok((render(size, &background, &sprites, 0.0)?, render(size, &background, &sprites, 1.0)?))
}

/// `(id, degraded interlaced input, ground truth)` for every pair of the set.
pub fn toy_pairs(cfg: &ToySetConfig) -> Result<Vec<(String, Frame, Frame)>> {
    cfg.degradation.validate()?;
    if !cfg.size.is_multiple_of(2) {
        return Err(Error::OddHeight(cfg.size));
    }
    (0..cfg.pairs)
        .map(|i| {
            let (first, second) = moving_texture_pair(cfg.size, pair_seed(cfg.seed, i as u64))?;
            let interlaced = scan_interlaced(&first, &second)?;
            let input = degrade(&interlaced, &cfg.degradation.with_seed(pair_seed(cfg.degradation.seed, i as u64)))?;
            Ok((format!("{i:06}"), input, first))
        })
        .collect()
}

/// Generate a toy set and write it as PNG pairs plus a manifest.
pub fn write_toy_set(out_dir: impl AsRef<Path>, cfg: &ToySetConfig) -> Result<Vec<ManifestEntry>> {
    write_pairs(out_dir, &toy_pairs(cfg)?)
}

/// Grey image of parallel soft-edged stripes at `angle` radians from the
/// horizontal; shallow angles are where edge-directed interpolation helps.
pub fn diagonal_edges(width: usize, height: usize, angle: f32, period: f32) -> Result<Frame> {
    let (s, c) = angle.sin_cos();
    Frame::from_fn(width, height, 1, |_, y, x| {
        let d = x as f32 * s - y as f32 * c;
        let phase = d.rem_euclid(period) / period;
        // trapezoid wave: flat bands joined by one-pixel ramps
        let ramp = 1.0 / period;
        if phase < 0.5 - ramp {
            0.15
        } else if phase < 0.5 {
            0.15 + 0.7 * (phase - (0.5 - ramp)) / ramp
        } else if phase < 1.0 - ramp {
            0.85
        } else {
            0.85 - 0.7 * (phase - (1.0 - ramp)) / ramp
        }
    })
    .map(|f| f.quantized())
}
