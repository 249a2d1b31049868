//! Single-frame deinterlacers used as baselines.
//!
//! All of them keep the top-field rows (0, 2, 4, ...) untouched and only
//! decide what goes into the bottom-field rows; the target is the frame at
//! the top field's time instant.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frame::Frame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Weave,
    Bob,
    Ela,
    TemporalInsert,
    MotionAdaptive { threshold: f32 },
}

/// Default threshold of the motion-adaptive blend, in `[0, 1]` units.
pub const DEFAULT_MOTION_THRESHOLD: f32 = 0.04;

impl Method {
    pub fn apply(&self, interlaced: &Frame) -> Result<Frame> {
        match *self {
            Method::Weave => weave(interlaced),
            Method::Bob => bob_line_average(interlaced),
            Method::Ela => ela(interlaced),
            Method::TemporalInsert => temporal_insert(interlaced),
            Method::MotionAdaptive { threshold } => motion_adaptive(interlaced, threshold),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Weave => "weave",
            Method::Bob => "bob",
            Method::Ela => "ela",
            Method::TemporalInsert => "temporal",
            Method::MotionAdaptive { .. } => "motion",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "weave" => Method::Weave,
            "bob" => Method::Bob,
            "ela" => Method::Ela,
            "temporal" => Method::TemporalInsert,
            "motion" => Method::MotionAdaptive { threshold: DEFAULT_MOTION_THRESHOLD },
            other => return Err(Error::InvalidArgument(format!("unknown classical method `{other}`"))),
        })
    }
}

fn check_even(frame: &Frame) -> Result<()> {
    if !frame.height().is_multiple_of(2) {
        return Err(Error::OddHeight(frame.height()));
    }
    Ok(())
}

/// Rows above and below missing row `y`; the bottom row replicates the one
/// above it.
fn neighbours(frame: &Frame, c: usize, y: usize) -> (&[f32], &[f32]) {
    let above = frame.row(c, y - 1);
    let below = if y + 1 < frame.height() { frame.row(c, y + 1) } else { above };
    (above, below)
}

/// Keep both fields as they are.
pub fn weave(interlaced: &Frame) -> Result<Frame> {
    check_even(interlaced)?;
    Ok(interlaced.clone())
}

/// Fill each bottom-field row with the mean of the top-field rows around it.
pub fn bob_line_average(interlaced: &Frame) -> Result<Frame> {
    check_even(interlaced)?;
    let mut out = interlaced.clone();
    for c in 0..interlaced.channels() {
        for y in (1..interlaced.height()).step_by(2) {
            let (a, b) = neighbours(interlaced, c, y);
            for (o, (&u, &d)) in out.row_mut(c, y).iter_mut().zip(a.iter().zip(b)) {
                *o = (u + d) * 0.5;
            }
        }
    }
    Ok(out)
}

/// Edge line average: interpolate along whichever of the two diagonals or
/// the vertical has the smallest absolute difference. Ties go to the
/// vertical, and the first and last columns always use it.
pub fn ela(interlaced: &Frame) -> Result<Frame> {
    check_even(interlaced)?;
    let w = interlaced.width();
    let mut out = interlaced.clone();
    for c in 0..interlaced.channels() {
        for y in (1..interlaced.height()).step_by(2) {
            let (a, b) = neighbours(interlaced, c, y);
            let row = out.row_mut(c, y);
            for x in 0..w {
                row[x] = if x == 0 || x + 1 == w {
                    (a[x] + b[x]) * 0.5
                } else {
                    ela_pixel(a[x - 1], a[x], a[x + 1], b[x - 1], b[x], b[x + 1])
                };
            }
        }
    }
    Ok(out)
}

fn ela_pixel(al: f32, ac: f32, ar: f32, bl: f32, bc: f32, br: f32) -> f32 {
    let vertical = (ac - bc).abs();
    let falling = (al - br).abs();
    let rising = (ar - bl).abs();
    if vertical <= falling && vertical <= rising {
        (ac + bc) * 0.5
    } else if falling <= rising {
        (al + br) * 0.5
    } else {
        (ar + bl) * 0.5
    }
}

/// Fill the bottom-field rows from the co-located bottom field. Equal to
/// [`weave`]; kept separate as the temporal candidate of [`motion_adaptive`].
pub fn temporal_insert(interlaced: &Frame) -> Result<Frame> {
    check_even(interlaced)?;
    Ok(interlaced.clone())
}

/// Per missing pixel, take the temporal candidate when it is within
/// `threshold` of the line average, otherwise the line average.
pub fn motion_adaptive(interlaced: &Frame, threshold: f32) -> Result<Frame> {
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::InvalidArgument(format!("motion threshold must be >= 0, got {threshold}")));
    }
    let temporal = temporal_insert(interlaced)?;
    let mut out = bob_line_average(interlaced)?;
    for c in 0..interlaced.channels() {
        for y in (1..interlaced.height()).step_by(2) {
            let t = temporal.row(c, y);
            for (o, &tv) in out.row_mut(c, y).iter_mut().zip(t) {
                if (tv - *o).abs() <= threshold {
                    *o = tv;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interlace::scan_interlaced;

    fn rows(values: &[f32], w: usize) -> Frame {
        Frame::from_fn(w, values.len(), 1, |_, y, _| values[y]).unwrap()
    }

    fn textured(w: usize, h: usize, phase: f32) -> Frame {
        Frame::from_fn(w, h, 3, |c, y, x| {
            0.5 + 0.4 * ((x as f32 * 0.9 + phase).sin() * (y as f32 * 1.3 + c as f32).cos())
        })
        .unwrap()
    }

    const ALL: [Method; 5] = [
        Method::Weave,
        Method::Bob,
        Method::Ela,
        Method::TemporalInsert,
        Method::MotionAdaptive { threshold: DEFAULT_MOTION_THRESHOLD },
    ];

    #[test]
    fn top_field_rows_untouched() {
        let f = scan_interlaced(&textured(9, 8, 0.0), &textured(9, 8, 2.0)).unwrap();
        for m in ALL {
            let out = m.apply(&f).unwrap();
            for c in 0..3 {
                for y in (0..8).step_by(2) {
                    assert_eq!(out.row(c, y), f.row(c, y), "{m} row {y}");
                }
            }
        }
    }

    #[test]
    fn odd_height_rejected() {
        let f = rows(&[0.0, 1.0, 0.5], 3);
        for m in ALL {
            assert!(matches!(m.apply(&f), Err(Error::OddHeight(3))), "{m}");
        }
    }

    #[test]
    fn bob_midpoint_and_boundary() {
        let f = rows(&[0.0, 0.9, 128.0 / 255.0, 0.1], 2);
        let out = bob_line_average(&f).unwrap();
        assert!((out.get(0, 1, 0) - 64.0 / 255.0).abs() < 1e-7);
        // bottom boundary replicates the row above
        assert_eq!(out.get(0, 3, 0), 128.0 / 255.0);
    }

    #[test]
    fn vertically_constant_is_exact() {
        let f = Frame::from_fn(7, 6, 3, |c, _, x| (x as f32 * 0.1 + c as f32 * 0.2).fract()).unwrap();
        for m in [Method::Bob, Method::Ela] {
            assert_eq!(m.apply(&f).unwrap(), f, "{m}");
        }
    }

    #[test]
    fn linear_ramp_interior_exact() {
        let f = Frame::from_fn(3, 8, 1, |_, y, _| 2.0 * y as f32 / 255.0).unwrap();
        let out = bob_line_average(&f).unwrap();
        for y in [1, 3, 5] {
            assert!((out.get(0, y, 1) - f.get(0, y, 1)).abs() < 1e-6, "row {y}");
        }
    }

    #[test]
    fn ela_follows_diagonal() {
        // above: edge at x=3, below: edge at x=1 (a rising diagonal)
        let a = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let b = [0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let f = Frame::from_fn(6, 4, 1, |_, y, x| match y {
            0 | 1 => a[x],
            _ => b[x],
        })
        .unwrap();
        let out = ela(&f).unwrap();
        // at x=2, vertical |0-1| = 1, rising |a3 - b1| = 0
        assert_eq!(out.get(0, 1, 2), 1.0);
        assert_eq!(bob_line_average(&f).unwrap().get(0, 1, 2), 0.5);
    }

    #[test]
    fn ela_single_column_is_bob() {
        let f = rows(&[0.1, 0.7, 0.3, 0.2, 0.9, 0.4], 1);
        assert_eq!(ela(&f).unwrap(), bob_line_average(&f).unwrap());
    }

    #[test]
    fn temporal_equals_weave() {
        let f = scan_interlaced(&textured(6, 4, 0.0), &textured(6, 4, 1.0)).unwrap();
        assert_eq!(temporal_insert(&f).unwrap(), weave(&f).unwrap());
    }

    #[test]
    fn motion_threshold_limits() {
        let f = scan_interlaced(&textured(10, 8, 0.0), &textured(10, 8, 1.5)).unwrap();
        assert_eq!(motion_adaptive(&f, 1.0).unwrap(), temporal_insert(&f).unwrap());
        assert_eq!(motion_adaptive(&f, 0.0).unwrap(), bob_line_average(&f).unwrap());
        assert!(motion_adaptive(&f, -0.1).is_err());
    }

    #[test]
    fn weave_and_temporal_exact_on_static_scene() {
        let f = textured(8, 6, 0.3);
        let interlaced = scan_interlaced(&f, &f).unwrap();
        for m in [Method::Weave, Method::TemporalInsert, Method::MotionAdaptive { threshold: 1.0 }] {
            assert_eq!(m.apply(&interlaced).unwrap(), f, "{m}");
        }
    }

    #[test]
    fn parse_names() {
        for m in ALL {
            assert_eq!(m.name().parse::<Method>().unwrap().name(), m.name());
        }
        assert!("din".parse::<Method>().is_err());
    }
}
