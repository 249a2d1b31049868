//! Planar images and their conversion to and from tensors and files.
//!
//! Pixels are kept as `f32` in `[0, 1]`; 8-bit values only exist at the
//! file boundary. Files with an odd number of rows lose their bottom row on
//! load so that every frame can be split into two equal fields.

use std::io::Write;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    /// `channels` planes of `height` rows of `width` values.
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidArgument(format!(
                "frame must be non-empty with 1 or 3 channels, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(
                "Frame::new",
                format!("{} values for {width}x{height}x{channels}", data.len()),
            ));
        }
        Ok(Frame { width, height, channels, data })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Build from `f(channel, row, col)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// From 8-bit planar values.
    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, channels, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn same_geometry(&self, other: &Frame) -> bool {
        (self.width, self.height, self.channels) == (other.width, other.height, other.channels)
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn row(&self, c: usize, y: usize) -> &[f32] {
        let start = (c * self.height + y) * self.width;
        &self.data[start..start + self.width]
    }

    pub fn row_mut(&mut self, c: usize, y: usize) -> &mut [f32] {
        let start = (c * self.height + y) * self.width;
        &mut self.data[start..start + self.width]
    }

    /// Values rounded to 8 bits after clamping to `[0, 1]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_byte(v)).collect()
    }

    /// Round trip through 8 bits, as happens when a frame is written to disk.
    pub fn quantized(&self) -> Frame {
        Frame {
            data: self.data.iter().map(|&v| to_byte(v) as f32 / 255.0).collect(),
            ..self.clone()
        }
    }

    pub fn clamped(mut self) -> Frame {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self
    }

    /// Sub-image with its top-left corner at `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, height: usize, width: usize) -> Result<Frame> {
        if y + height > self.height || x + width > self.width || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "crop {width}x{height}+{x}+{y} outside {}x{} frame",
                self.width, self.height
            )));
        }
        Frame::from_fn(width, height, self.channels, |c, r, q| self.get(c, y + r, x + q))
    }

    /// Left-right mirror.
    pub fn flip_horizontal(&self) -> Frame {
        let w = self.width;
        Frame::from_fn(w, self.height, self.channels, |c, y, x| self.get(c, y, w - 1 - x))
            .expect("same geometry")
    }

    /// Top-bottom mirror.
    pub fn flip_vertical(&self) -> Frame {
        let h = self.height;
        Frame::from_fn(self.width, h, self.channels, |c, y, x| self.get(c, h - 1 - y, x))
            .expect("same geometry")
    }

    /// Drop the bottom row when the height is odd.
    pub fn crop_to_even_height(self) -> Frame {
        if self.height.is_multiple_of(2) || self.height == 1 {
            return self;
        }
        let (w, h, c) = (self.width, self.height - 1, self.channels);
        Frame::from_fn(w, h, c, |ci, y, x| self.get(ci, y, x)).expect("non-empty")
    }

    /// Batch-of-one tensor `(1, C, H, W)`.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Self::batch_to_tensor(std::slice::from_ref(self)).expect("single frame")
    }

    pub fn batch_to_tensor<T: Real>(frames: &[Frame]) -> Result<Tensor<T>> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty frame batch".into()))?;
        if let Some(bad) = frames.iter().find(|f| !f.same_geometry(first)) {
            return Err(Error::shape(
                "batch_to_tensor",
                format!(
                    "{}x{}x{} vs {}x{}x{}",
                    bad.width, bad.height, bad.channels, first.width, first.height, first.channels
                ),
            ));
        }
        let shape = Shape::new(frames.len(), first.channels, first.height, first.width)?;
        let data = frames
            .iter()
            .flat_map(|f| f.data.iter().map(|&v| T::from_f64_lossy(v as f64)))
            .collect();
        Tensor::new(shape, data)
    }

    /// Sample `n` of an NCHW tensor, without clamping.
    pub fn from_tensor<T: Real>(t: &Tensor<T>, n: usize) -> Result<Frame> {
        let [batch, c, h, w] = t.shape().dims();
        if n >= batch {
            return Err(Error::InvalidArgument(format!("sample {n} of batch {batch}")));
        }
        let per = c * h * w;
        let data = t.data()[n * per..(n + 1) * per]
            .iter()
            .map(|v| v.to_f32().unwrap_or(f32::NAN))
            .collect();
        Frame::new(w, h, c, data)
    }

    /// Read a PNG or binary PPM. Grayscale files load as one channel,
    /// everything else as RGB.
    pub fn load(path: impl AsRef<Path>) -> Result<Frame> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?;
        let frame = match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                Frame::from_bytes(w as usize, h as usize, 1, g.as_raw())?
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = (rgb.width() as usize, rgb.height() as usize);
                let raw = rgb.as_raw();
                let mut planar = vec![0u8; raw.len()];
                for (i, px) in raw.chunks_exact(3).enumerate() {
                    for c in 0..3 {
                        planar[c * w * h + i] = px[c];
                    }
                }
                Frame::from_bytes(w, h, 3, &planar)?
            }
        };
        Ok(frame.crop_to_even_height())
    }

    /// Write as 8-bit PNG or P6/P5 PPM (chosen by extension). The file is
    /// written to a temporary sibling and renamed into place.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "ppm" || ext == "pgm" || ext == "pnm" => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        };
        let encoded = self.encode(format).map_err(|source| Error::Image { path: path.into(), source })?;
        write_atomic(path, &encoded)
    }

    fn encode(&self, format: ImageFormat) -> image::ImageResult<Vec<u8>> {
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = self.to_bytes();
        let img = if self.channels == 1 {
            DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("sized"))
        } else {
            let plane = self.width * self.height;
            let mut interleaved = vec![0u8; bytes.len()];
            for i in 0..plane {
                for c in 0..3 {
                    interleaved[i * 3 + c] = bytes[c * plane + i];
                }
            }
            DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, interleaved).expect("sized"))
        };
        let mut out = Vec::new();
        if format == ImageFormat::Pnm {
            let subtype = if self.channels == 1 {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            };
            img.write_with_encoder(PnmEncoder::new(&mut out).with_subtype(subtype))?;
        } else {
            img.write_to(&mut std::io::Cursor::new(&mut out), format)?;
        }
        Ok(out)
    }
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write `bytes` to `path` through a uniquely named temporary file in the
/// same directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// The two half-height fields of a frame.
///
/// `top` is the odd field: 1-based odd scan lines, i.e. 0-based rows
/// 0, 2, 4, ... of the source. `bottom` is the even field: 0-based rows
/// 1, 3, 5, ...
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub top: Frame,
    pub bottom: Frame,
}

impl FieldPair {
    pub fn new(top: Frame, bottom: Frame) -> Result<Self> {
        if !top.same_geometry(&bottom) {
            return Err(Error::shape(
                "FieldPair",
                format!(
                    "top {}x{}x{} vs bottom {}x{}x{}",
                    top.width, top.height, top.channels, bottom.width, bottom.height, bottom.channels
                ),
            ));
        }
        Ok(FieldPair { top, bottom })
    }

    pub fn field_height(&self) -> usize {
        self.top.height
    }

    pub fn width(&self) -> usize {
        self.top.width
    }

    pub fn channels(&self) -> usize {
        self.top.channels
    }
}
