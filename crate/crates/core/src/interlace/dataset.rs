use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::{degrade, scan_interlaced, DegradationConfig};
use crate::error::{Error, Result};
use crate::frame::{write_atomic, Frame};

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// One training or test pair: degraded interlaced input and its ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub input: PathBuf,
    pub target: PathBuf,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

pub(crate) fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Per-pair noise seed so that each pair's noise is independent of how many
/// other pairs are generated.
pub(crate) fn pair_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Build an interlaced dataset from an ordered frame sequence.
///
/// For `t = 0, stride, 2·stride, ...` the pair `(f_t, f_{t+1})` is scanned,
/// degraded and written as `input_NNNNNN.png` next to `target_NNNNNN.png`
/// (= `f_t`). Frames are ordered by file name. Unreadable frames are
/// skipped with a warning together with the pairs that need them.
pub fn synth_dataset(
    frames_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    cfg: &DegradationConfig,
    stride: usize,
) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    let paths = list_images(frames_dir.as_ref())?;
    if paths.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} holds {} frame(s); at least 2 are needed",
            frames_dir.as_ref().display(),
            paths.len()
        )));
    }
    let frames: Vec<Option<Frame>> = paths
        .iter()
        .map(|p| match Frame::load(p) {
            Ok(f) => Some(f),
            Err(e) => {
                warn!("skipping unreadable frame: {e}");
                None
            }
        })
        .collect();

    let mut pairs = Vec::new();
    for t in (0..frames.len() - 1).step_by(stride) {
        let (Some(a), Some(b)) = (&frames[t], &frames[t + 1]) else { continue };
        if !a.same_geometry(b) {
            warn!("skipping pair {t}: {} and {} differ in size", paths[t].display(), paths[t + 1].display());
            continue;
        }
        let interlaced = scan_interlaced(a, b)?;
        let input = degrade(&interlaced, &cfg.with_seed(pair_seed(cfg.seed, t as u64)))?;
        pairs.push((format!("{t:06}"), input, a.clone()));
    }
    write_pairs(out_dir, &pairs)
}

/// Write `(id, input, target)` triples as PNGs plus a manifest.
pub fn write_pairs(
    out_dir: impl AsRef<Path>,
    pairs: &[(String, Frame, Frame)],
) -> Result<Vec<ManifestEntry>> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(pairs.len());
    for (id, input, target) in pairs {
        let entry = ManifestEntry {
            input: PathBuf::from(format!("input_{id}.png")),
            target: PathBuf::from(format!("target_{id}.png")),
        };
        input.save(out_dir.join(&entry.input))?;
        target.save(out_dir.join(&entry.target))?;
        entries.push(entry);
    }
    write_manifest(out_dir.join(MANIFEST_NAME), &entries)?;
    Ok(entries)
}

/// `input<TAB>target` per line, UTF-8.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!("{}\t{}\n", e.input.display(), e.target.display()));
    }
    write_atomic(path.as_ref(), text.as_bytes())
}

/// Parse a manifest; relative paths are resolved against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (input, target) = line.split_once('\t').ok_or_else(|| {
            Error::InvalidArgument(format!("{}:{}: expected input<TAB>target", path.display(), lineno + 1))
        })?;
        entries.push(ManifestEntry { input: base.join(input), target: base.join(target) });
    }
    Ok(entries)
}
