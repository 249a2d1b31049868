//! Full-reference quality metrics on the 8-bit scale.
//!
//! PSNR pools the squared error over all channels; SSIM is computed per
//! channel and averaged. Both run over the whole frame, borders included.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{write_atomic, Frame};
use crate::interlace::list_images;

const PEAK: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_same(op: &'static str, a: &Frame, b: &Frame) -> Result<()> {
    if !a.same_geometry(b) {
        return Err(Error::shape(
            op,
            format!(
                "{}x{}x{} vs {}x{}x{}",
                a.width(),
                a.height(),
                a.channels(),
                b.width(),
                b.height(),
                b.channels()
            ),
        ));
    }
    Ok(())
}

/// Mean squared error in 8-bit units.
pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_same("mse", a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = (x as f64 - y as f64) * PEAK;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(255² / MSE)`; identical frames give `+inf`.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / m).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian filter over valid window positions only.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (wo, ho) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut horiz = vec![0.0; wo * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..wo {
            horiz[y * wo + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; wo * ho];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = k.iter().enumerate().map(|(i, kv)| kv * horiz[(y + i) * wo + x]).sum();
        }
    }
    out
}

/// Single-scale SSIM with an 11x11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 255; mean over valid window positions, then
/// over channels.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_same("ssim", a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, frame is {w}x{h}"
        )));
    }
    let k = gaussian_kernel();
    let c1 = (K1 * PEAK).powi(2);
    let c2 = (K2 * PEAK).powi(2);
    let plane = w * h;
    let mut total = 0.0;
    for c in 0..a.channels() {
        let pa: Vec<f64> = a.data()[c * plane..(c + 1) * plane].iter().map(|&v| v as f64 * PEAK).collect();
        let pb: Vec<f64> = b.data()[c * plane..(c + 1) * plane].iter().map(|&v| v as f64 * PEAK).collect();
        let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
        let mu_a = filter_valid(&pa, w, h, &k);
        let mu_b = filter_valid(&pb, w, h, &k);
        let e_aa = filter_valid(&prod(&pa, &pa), w, h, &k);
        let e_bb = filter_valid(&prod(&pb, &pb), w, h, &k);
        let e_ab = filter_valid(&prod(&pa, &pb), w, h, &k);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / a.channels() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub image: String,
    pub method: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub images: usize,
}

/// Per-image scores; summaries are derived on demand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

pub const CSV_HEADER: &str = "image,method,psnr_db,ssim";

impl MetricsReport {
    pub fn push(&mut self, image: impl Into<String>, method: impl Into<String>, a: &Frame, b: &Frame) -> Result<()> {
        self.rows.push(MetricsRow {
            image: image.into(),
            method: method.into(),
            psnr_db: psnr(a, b)?,
            ssim: ssim(a, b)?,
        });
        Ok(())
    }

    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
    }

    /// Methods in order of first appearance.
    pub fn methods(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.method) {
                seen.push(r.method.clone());
            }
        }
        seen
    }

    /// Arithmetic means per method. Any infinite PSNR makes the mean infinite.
    pub fn summaries(&self) -> Vec<MethodSummary> {
        self.methods()
            .into_iter()
            .map(|method| {
                let rows: Vec<&MetricsRow> = self.rows.iter().filter(|r| r.method == method).collect();
                let n = rows.len() as f64;
                MethodSummary {
                    mean_psnr_db: rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
                    mean_ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
                    images: rows.len(),
                    method,
                }
            })
            .collect()
    }

    pub fn summary(&self, method: &str) -> Option<MethodSummary> {
        self.summaries().into_iter().find(|s| s.method == method)
    }

    /// Per-image rows followed by one `mean` row per method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:.6}", r.image, r.method, fmt_db(r.psnr_db), r.ssim);
        }
        for s in self.summaries() {
            let _ = writeln!(out, "mean,{},{},{:.6}", s.method, fmt_db(s.mean_psnr_db), s.mean_ssim);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

/// Score every image in `outputs_dir` against the same-named file in
/// `targets_dir`.
pub fn evaluate(outputs_dir: impl AsRef<Path>, targets_dir: impl AsRef<Path>, method: &str) -> Result<MetricsReport> {
    let names = |dir: &Path| -> Result<BTreeSet<String>> {
        Ok(list_images(dir)?
            .into_iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect())
    };
    let (outputs_dir, targets_dir) = (outputs_dir.as_ref(), targets_dir.as_ref());
    let outputs = names(outputs_dir)?;
    let targets = names(targets_dir)?;
    let missing: Vec<String> = outputs
        .symmetric_difference(&targets)
        .map(|n| {
            let side: PathBuf = if outputs.contains(n) { targets_dir.join(n) } else { outputs_dir.join(n) };
            side.display().to_string()
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing.join(", ")));
    }
    let mut report = MetricsReport::default();
    for name in &outputs {
        let out = Frame::load(outputs_dir.join(name))?;
        let target = Frame::load(targets_dir.join(name))?;
        report.push(name.clone(), method, &out, &target)?;
    }
    Ok(report)
}
