use log::warn;
use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::{FieldPair, Frame};
use crate::interlace::{merge_fields, split_fields, ManifestEntry};
use crate::tensor::{Real, Tensor};

/// One training example: the two fields of a degraded interlaced patch and
/// the ground-truth patch they should reconstruct.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input_fields: FieldPair,
    pub target: Frame,
}

impl TrainSample {
    pub fn new(input_fields: FieldPair, target: Frame) -> Result<Self> {
        let ok = target.height() == 2 * input_fields.field_height()
            && target.width() == input_fields.width()
            && target.channels() == input_fields.channels();
        if !ok {
            return Err(Error::shape(
                "train sample",
                format!(
                    "target {}x{}x{} does not match fields of {}x{}x{}",
                    target.channels(),
                    target.height(),
                    target.width(),
                    input_fields.channels(),
                    input_fields.field_height(),
                    input_fields.width()
                ),
            ));
        }
        Ok(TrainSample { input_fields, target })
    }

    /// Interlaced patch the fields were taken from.
    pub fn interlaced(&self) -> Result<Frame> {
        merge_fields(&self.input_fields)
    }
}

/// Full-size `(input, target)` frames held in memory for patch sampling.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pairs: Vec<(Frame, Frame)>,
}

impl TrainingSet {
    /// Load every manifest pair. Pairs smaller than `patch_size` in either
    /// dimension are skipped with a warning.
    pub fn load(entries: &[ManifestEntry], patch_size: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("training manifest is empty".into()));
        }
        let mut pairs = Vec::with_capacity(entries.len());
        for e in entries {
            let input = Frame::load(&e.input)?;
            let target = Frame::load(&e.target)?;
            if !input.same_geometry(&target) {
                return Err(Error::shape(
                    "training pair",
                    format!("{} and {} differ in size or channels", e.input.display(), e.target.display()),
                ));
            }
            pairs.push((input, target));
        }
        Self::from_pairs(pairs, patch_size)
    }

    /// Same as [`TrainingSet::load`] for frames already in memory.
    pub fn from_pairs(pairs: Vec<(Frame, Frame)>, patch_size: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let total = pairs.len();
        let mut kept = Vec::with_capacity(total);
        for (i, (input, target)) in pairs.into_iter().enumerate() {
            if !input.same_geometry(&target) {
                return Err(Error::shape("training pair", format!("pair {i}: input and target differ in size")));
            }
            if input.height() < patch_size || input.width() < patch_size {
                warn!(
                    "skipping training pair {i}: {}x{} is smaller than the {patch_size}px patch",
                    input.width(),
                    input.height()
                );
                continue;
            }
            kept.push((input, target));
        }
        if kept.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "none of the {total} training pairs is at least {patch_size}x{patch_size}"
            )));
        }
        Ok(TrainingSet { pairs: kept })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Frame, Frame)] {
        &self.pairs
    }

    /// Patches per epoch: every pair contributes `ceil(area / patch area)`.
    pub fn patches_per_epoch(&self, patch_size: usize) -> usize {
        let patch_area = patch_size * patch_size;
        self.pairs.iter().map(|(f, _)| (f.width() * f.height()).div_ceil(patch_area)).sum()
    }
}

/// Draw `batch_size` aligned crops from random pairs. Row offsets are even so
/// that the top field of the crop is a crop of the top field of the frame.
pub fn sample_patches(
    set: &TrainingSet,
    patch_size: usize,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<TrainSample>> {
    if patch_size == 0 || !patch_size.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("patch size must be even and positive, got {patch_size}")));
    }
    if set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    (0..batch_size)
        .map(|_| {
            let (input, target) = &set.pairs[rng.random_range(0..set.pairs.len())];
            if input.height() < patch_size || input.width() < patch_size {
                return Err(Error::InvalidArgument(format!(
                    "{}x{} pair is smaller than the {patch_size}px patch",
                    input.width(),
                    input.height()
                )));
            }
            let y = 2 * rng.random_range(0..=(input.height() - patch_size) / 2);
            let x = rng.random_range(0..=input.width() - patch_size);
            let fields = split_fields(&input.crop(y, x, patch_size, patch_size)?)?;
            TrainSample::new(fields, target.crop(y, x, patch_size, patch_size)?)
        })
        .collect()
}

/// Mirror left-right: both fields and the target.
pub fn flip_horizontal(sample: &TrainSample) -> TrainSample {
    let f = &sample.input_fields;
    TrainSample {
        input_fields: FieldPair { top: f.top.flip_horizontal(), bottom: f.bottom.flip_horizontal() },
        target: sample.target.flip_horizontal(),
    }
}

/// Mirror top-bottom. The fields are re-derived from the flipped interlaced
/// patch, so for even heights the new top field is the old bottom field
/// upside down.
pub fn flip_vertical(sample: &TrainSample) -> Result<TrainSample> {
    let flipped = sample.interlaced()?.flip_vertical();
    TrainSample::new(split_fields(&flipped)?, sample.target.flip_vertical())
}

/// Apply each flip with probability 1/2. Rotations are never used: they
/// would turn scan lines into columns.
pub fn augment_flip(sample: &TrainSample, rng: &mut impl Rng) -> Result<TrainSample> {
    let h = rng.random_bool(0.5);
    let v = rng.random_bool(0.5);
    let mut out = if h { flip_horizontal(sample) } else { sample.clone() };
    if v {
        out = flip_vertical(&out)?;
    }
    Ok(out)
}

/// Stack samples into `(top, bottom, target)` NCHW tensors.
pub fn batch_tensors<T: Real>(samples: &[TrainSample]) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let tops: Vec<Frame> = samples.iter().map(|s| s.input_fields.top.clone()).collect();
    let bottoms: Vec<Frame> = samples.iter().map(|s| s.input_fields.bottom.clone()).collect();
    let targets: Vec<Frame> = samples.iter().map(|s| s.target.clone()).collect();
    Ok((Frame::batch_to_tensor(&tops)?, Frame::batch_to_tensor(&bottoms)?, Frame::batch_to_tensor(&targets)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interlace::scan_interlaced;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pattern(w: usize, h: usize, k: usize) -> Frame {
        Frame::from_fn(w, h, 3, |c, y, x| ((x * 7 + y * 13 + c * 5 + k * 3) % 29) as f32 / 28.0).unwrap()
    }

    fn static_set() -> TrainingSet {
        let f = pattern(64, 64, 0);
        TrainingSet::from_pairs(vec![(scan_interlaced(&f, &f).unwrap(), f)], 32).unwrap()
    }

    #[test]
    fn patch_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batch = sample_patches(&static_set(), 32, 3, &mut rng).unwrap();
        assert_eq!(batch.len(), 3);
        for s in &batch {
            let f = &s.input_fields;
            assert_eq!((f.channels(), f.field_height(), f.width()), (3, 16, 32));
            assert_eq!((s.target.channels(), s.target.height(), s.target.width()), (3, 32, 32));
        }
        let (t, b, g) = batch_tensors::<f32>(&batch).unwrap();
        assert_eq!(t.shape().dims(), [3, 3, 16, 32]);
        assert_eq!(b.shape().dims(), [3, 3, 16, 32]);
        assert_eq!(g.shape().dims(), [3, 3, 32, 32]);
    }

    #[test]
    fn static_pair_merges_to_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in sample_patches(&static_set(), 16, 20, &mut rng).unwrap() {
            assert_eq!(s.interlaced().unwrap(), s.target);
        }
    }

    #[test]
    fn crops_keep_field_parity() {
        // a frame whose rows encode their own parity
        let first = Frame::filled(40, 40, 3, 0.0).unwrap();
        let second = Frame::filled(40, 40, 3, 1.0).unwrap();
        let set = TrainingSet::from_pairs(vec![(scan_interlaced(&first, &second).unwrap(), first)], 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in sample_patches(&set, 8, 50, &mut rng).unwrap() {
            assert!(s.input_fields.top.data().iter().all(|&v| v == 0.0));
            assert!(s.input_fields.bottom.data().iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let set = static_set();
        let a = sample_patches(&set, 16, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_patches(&set, 16, 4, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn undersized_pairs_skipped_and_empty_rejected() {
        let big = pattern(32, 32, 0);
        let small = pattern(16, 16, 1);
        let set = TrainingSet::from_pairs(vec![(small.clone(), small.clone()), (big.clone(), big)], 32).unwrap();
        assert_eq!(set.len(), 1);
        assert!(TrainingSet::from_pairs(vec![(small.clone(), small)], 32).is_err());
        assert!(TrainingSet::from_pairs(Vec::new(), 32).is_err());
        assert!(TrainingSet::load(&[], 32).is_err());
    }

    #[test]
    fn flips_are_involutions() {
        let a = pattern(12, 10, 0);
        let b = pattern(12, 10, 1);
        let s = TrainSample::new(split_fields(&scan_interlaced(&a, &b).unwrap()).unwrap(), a).unwrap();
        assert_eq!(flip_horizontal(&flip_horizontal(&s)), s);
        assert_eq!(flip_vertical(&flip_vertical(&s).unwrap()).unwrap(), s);
        let hv = flip_vertical(&flip_horizontal(&s)).unwrap();
        assert_eq!(flip_horizontal(&flip_vertical(&hv).unwrap()), s);
    }

    #[test]
    fn vertical_flip_swaps_field_roles() {
        let a = pattern(6, 8, 0);
        let b = pattern(6, 8, 1);
        let interlaced = scan_interlaced(&a, &b).unwrap();
        let s = TrainSample::new(split_fields(&interlaced).unwrap(), a).unwrap();
        let v = flip_vertical(&s).unwrap();
        assert_eq!(v.interlaced().unwrap(), interlaced.flip_vertical());
        assert_eq!(v.input_fields.top, s.input_fields.bottom.flip_vertical());
        assert_eq!(v.target, s.target.flip_vertical());
    }

    #[test]
    fn mismatched_sample_rejected() {
        let f = split_fields(&pattern(8, 8, 0)).unwrap();
        assert!(TrainSample::new(f, pattern(8, 6, 0)).is_err());
    }
}
