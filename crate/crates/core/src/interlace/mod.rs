//! Interlaced scanning and the synthetic degradation pipeline
//! `Y = C(S(X1, X2)) + n`.
//!
//! Parity convention used throughout the crate: the *odd* (top) field holds
//! 1-based odd scan lines, which are 0-based rows 0, 2, 4, ...

mod dataset;
mod degrade;
mod toy;

pub use dataset::{read_manifest, synth_dataset, write_manifest, write_pairs, ManifestEntry, MANIFEST_NAME};
pub(crate) use dataset::{list_images, pair_seed};
pub use degrade::{degrade, quant_table, Compression, DegradationConfig};
pub use toy::{diagonal_edges, moving_texture_pair, toy_pairs, write_toy_set, ToySetConfig};

use crate::error::{Error, Result};
use crate::frame::{FieldPair, Frame};

/// Split a frame into its top (rows 0, 2, ...) and bottom (rows 1, 3, ...)
/// fields.
pub fn split_fields(frame: &Frame) -> Result<FieldPair> {
    let h = frame.height();
    if !h.is_multiple_of(2) {
        return Err(Error::OddHeight(h));
    }
    let (w, c) = (frame.width(), frame.channels());
    let top = Frame::from_fn(w, h / 2, c, |ci, y, x| frame.get(ci, 2 * y, x))?;
    let bottom = Frame::from_fn(w, h / 2, c, |ci, y, x| frame.get(ci, 2 * y + 1, x))?;
    Ok(FieldPair { top, bottom })
}

/// Interleave two fields back into a frame; exact inverse of [`split_fields`].
pub fn merge_fields(pair: &FieldPair) -> Result<Frame> {
    let FieldPair { top, bottom } = pair;
    if !top.same_geometry(bottom) {
        return Err(Error::shape(
            "merge_fields",
            format!(
                "top field {}x{} vs bottom field {}x{}",
                top.width(),
                top.height(),
                bottom.width(),
                bottom.height()
            ),
        ));
    }
    Frame::from_fn(top.width(), top.height() * 2, top.channels(), |c, y, x| {
        if y % 2 == 0 {
            top.get(c, y / 2, x)
        } else {
            bottom.get(c, y / 2, x)
        }
    })
}

/// Interlaced scan of two consecutive frames: even rows from `first`,
/// odd rows from `second`.
pub fn scan_interlaced(first: &Frame, second: &Frame) -> Result<Frame> {
    if !first.same_geometry(second) {
        return Err(Error::shape(
            "scan_interlaced",
            format!(
                "{}x{}x{} vs {}x{}x{}",
                first.width(),
                first.height(),
                first.channels(),
                second.width(),
                second.height(),
                second.channels()
            ),
        ));
    }
    let top = split_fields(first)?.top;
    let bottom = split_fields(second)?.bottom;
    merge_fields(&FieldPair { top, bottom })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(values: &[f32]) -> Frame {
        Frame::from_fn(2, values.len(), 1, |_, y, _| values[y]).unwrap()
    }

    #[test]
    fn split_four_rows() {
        let pair = split_fields(&rows(&[0.0, 0.1, 0.2, 0.3])).unwrap();
        assert_eq!(pair.top, rows(&[0.0, 0.2]));
        assert_eq!(pair.bottom, rows(&[0.1, 0.3]));
        let two = split_fields(&rows(&[0.5, 0.6])).unwrap();
        assert_eq!(two.top.height(), 1);
        assert_eq!(two.bottom.height(), 1);
    }

    #[test]
    fn split_rejects_odd_height() {
        assert!(matches!(split_fields(&rows(&[0.0, 0.1, 0.2])), Err(Error::OddHeight(3))));
    }

    #[test]
    fn merge_alternates() {
        let pair = FieldPair::new(rows(&[0.0, 0.0]), rows(&[1.0, 1.0])).unwrap();
        assert_eq!(merge_fields(&pair).unwrap(), rows(&[0.0, 1.0, 0.0, 1.0]));
        let bad = FieldPair { top: rows(&[0.0]), bottom: rows(&[0.0, 1.0]) };
        assert!(merge_fields(&bad).is_err());
    }

    #[test]
    fn scan_black_white() {
        let black = Frame::from_bytes(3, 4, 1, &[0; 12]).unwrap();
        let white = Frame::from_bytes(3, 4, 1, &[255; 12]).unwrap();
        let out = scan_interlaced(&black, &white).unwrap();
        assert_eq!(out.to_bytes(), [[0u8; 3], [255; 3], [0; 3], [255; 3]].concat());
    }

    #[test]
    fn scan_of_horizontal_motion_combs() {
        // a vertical bar at x = 4..8, moved right by 4 px in the second frame
        let bar = |shift: usize| {
            Frame::from_fn(16, 8, 1, move |_, _, x| if (4 + shift..8 + shift).contains(&x) { 1.0 } else { 0.0 })
                .unwrap()
        };
        let out = scan_interlaced(&bar(0), &bar(4)).unwrap();
        for y in 0..8 {
            let lit: Vec<usize> = (0..16).filter(|&x| out.get(0, y, x) == 1.0).collect();
            let expected: Vec<usize> = if y % 2 == 0 { (4..8).collect() } else { (8..12).collect() };
            assert_eq!(lit, expected, "row {y}");
        }
    }

    #[test]
    fn scan_mismatch() {
        assert!(scan_interlaced(&rows(&[0.0, 1.0]), &rows(&[0.0, 1.0, 0.0, 1.0])).is_err());
    }
}
