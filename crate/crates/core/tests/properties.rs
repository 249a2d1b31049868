//! Randomised invariants across modules.

use din::classic::{bob_line_average, ela, temporal_insert, Method};
use din::interlace::{
    degrade, diagonal_edges, merge_fields, moving_texture_pair, scan_interlaced, split_fields, Compression,
    DegradationConfig,
};
use din::metrics::{psnr, ssim};
use din::model::{read_checkpoint, write_checkpoint, DinConfig, DinParams};
use din::tensor::{
    concat_channels, pixel_shuffle, pixel_unshuffle, vertical_pixel_shuffle, vertical_pixel_unshuffle, Shape, Tensor,
};
use din::train::{flip_horizontal, flip_vertical, TrainSample};
use din::Frame;
use proptest::prelude::*;

fn frame_strategy(max_w: usize, max_half_h: usize, channels: usize) -> impl Strategy<Value = Frame> {
    (1..=max_w, 1..=max_half_h).prop_flat_map(move |(w, hh)| {
        let h = 2 * hh;
        proptest::collection::vec(0u8..=255, w * h * channels)
            .prop_map(move |bytes| Frame::from_bytes(w, h, channels, &bytes).unwrap())
    })
}

fn frame_pair(max_w: usize, max_half_h: usize) -> impl Strategy<Value = (Frame, Frame)> {
    (1..=max_w, 1..=max_half_h).prop_flat_map(|(w, hh)| {
        let n = w * 2 * hh * 3;
        (proptest::collection::vec(0u8..=255, n), proptest::collection::vec(0u8..=255, n)).prop_map(
            move |(a, b)| {
                (Frame::from_bytes(w, 2 * hh, 3, &a).unwrap(), Frame::from_bytes(w, 2 * hh, 3, &b).unwrap())
            },
        )
    })
}

fn tensor_strategy(c_mult: usize, row_mult: usize) -> impl Strategy<Value = Tensor<f32>> {
    (1..=2usize, 1..=3usize, 1..=4usize, 1..=5usize).prop_flat_map(move |(n, c, h, w)| {
        let shape = Shape::new(n, c * c_mult, h * row_mult, w * row_mult).unwrap();
        proptest::collection::vec(-10.0f32..10.0, shape.numel())
            .prop_map(move |data| Tensor::new(shape, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn split_merge_round_trip(f in frame_strategy(9, 6, 3)) {
        prop_assert_eq!(merge_fields(&split_fields(&f).unwrap()).unwrap(), f);
    }

    #[test]
    fn vps_round_trip(x in tensor_strategy(2, 1)) {
        prop_assert_eq!(vertical_pixel_unshuffle(&vertical_pixel_shuffle(&x, 2).unwrap(), 2).unwrap(), x);
    }

    #[test]
    fn unvps_round_trip(x in tensor_strategy(1, 2)) {
        prop_assert_eq!(vertical_pixel_shuffle(&vertical_pixel_unshuffle(&x, 2).unwrap(), 2).unwrap(), x);
    }

    #[test]
    fn ps_round_trip(x in tensor_strategy(4, 1)) {
        prop_assert_eq!(pixel_unshuffle(&pixel_shuffle(&x, 2).unwrap(), 2).unwrap(), x);
    }

    #[test]
    fn unps_round_trip(x in tensor_strategy(1, 2)) {
        prop_assert_eq!(pixel_shuffle(&pixel_unshuffle(&x, 2).unwrap(), 2).unwrap(), x);
    }

    #[test]
    fn shuffles_are_permutations(x in tensor_strategy(4, 1)) {
        let mut before = x.data().to_vec();
        let mut after = pixel_shuffle(&x, 2).unwrap().into_data();
        before.sort_by(f32::total_cmp);
        after.sort_by(f32::total_cmp);
        prop_assert_eq!(&before, &after);
        let mut v = vertical_pixel_shuffle(&x, 2).unwrap().into_data();
        v.sort_by(f32::total_cmp);
        prop_assert_eq!(before, v);
    }

    #[test]
    fn scan_is_merge_of_fields((a, b) in frame_pair(8, 5)) {
        let pa = split_fields(&a).unwrap();
        let pb = split_fields(&b).unwrap();
        let merged = merge_fields(&din::FieldPair::new(pa.top, pb.bottom).unwrap()).unwrap();
        prop_assert_eq!(scan_interlaced(&a, &b).unwrap(), merged);
    }

    #[test]
    fn vps_of_stacked_fields_is_scan((a, b) in frame_pair(8, 5)) {
        let top = split_fields(&a).unwrap().top;
        let bottom = split_fields(&b).unwrap().bottom;
        let stacked = concat_channels(&top.to_tensor::<f32>(), &bottom.to_tensor::<f32>()).unwrap();
        // channels (R1 G1 B1 R2 G2 B2) -> per colour pair (c, c+3)
        let per_colour: Vec<Tensor<f32>> = (0..3)
            .map(|c| {
                let first = din::tensor::slice_channels(&stacked, c, 1).unwrap();
                let second = din::tensor::slice_channels(&stacked, c + 3, 1).unwrap();
                vertical_pixel_shuffle(&concat_channels(&first, &second).unwrap(), 2).unwrap()
            })
            .collect();
        let scan = scan_interlaced(&a, &b).unwrap();
        for (c, plane) in per_colour.iter().enumerate() {
            let expected = Frame::from_fn(scan.width(), scan.height(), 1, |_, y, x| scan.get(c, y, x)).unwrap();
            prop_assert_eq!(Frame::from_tensor(plane, 0).unwrap(), expected);
        }
    }

    #[test]
    fn checkpoint_round_trip(channels in 1usize..=3, seed in any::<u64>()) {
        let p = DinParams::<f32>::build(DinConfig::with_channels(2 * channels), seed).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&p, &mut bytes).unwrap();
        prop_assert_eq!(read_checkpoint(&bytes[..]).unwrap(), p);
    }

    #[test]
    fn flips_are_involutions((a, b) in frame_pair(7, 4)) {
        let s = TrainSample::new(split_fields(&scan_interlaced(&a, &b).unwrap()).unwrap(), a).unwrap();
        prop_assert_eq!(&flip_horizontal(&flip_horizontal(&s)), &s);
        prop_assert_eq!(&flip_vertical(&flip_vertical(&s).unwrap()).unwrap(), &s);
        let v = flip_vertical(&s).unwrap();
        prop_assert_eq!(merge_fields(&v.input_fields).unwrap(), s.interlaced().unwrap().flip_vertical());
    }

    #[test]
    fn metrics_symmetric((a, b) in frame_pair(14, 7)) {
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        if a.width() >= 11 && a.height() >= 11 {
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn classical_methods_keep_top_field((a, b) in frame_pair(8, 5)) {
        let f = scan_interlaced(&a, &b).unwrap();
        let top = split_fields(&f).unwrap().top;
        for m in [Method::Weave, Method::Bob, Method::Ela, Method::TemporalInsert, Method::MotionAdaptive { threshold: 0.1 }] {
            prop_assert_eq!(&split_fields(&m.apply(&f).unwrap()).unwrap().top, &top);
        }
    }
}

#[test]
fn null_degradation_is_identity() {
    let (a, b) = moving_texture_pair(32, 4).unwrap();
    let f = scan_interlaced(&a, &b).unwrap();
    let cfg = DegradationConfig { compression: Compression::None, noise_sigma: 0.0, seed: 3 };
    assert_eq!(degrade(&f, &cfg).unwrap(), f);
}

#[test]
fn batch_samples_are_independent() {
    let p = DinParams::<f32>::build(DinConfig::with_channels(4), 2).unwrap();
    let frames: Vec<Frame> = (0..3).map(|s| moving_texture_pair(16, s).unwrap().0).collect();
    let fields: Vec<_> = frames.iter().map(|f| split_fields(f).unwrap()).collect();
    let tops: Vec<Frame> = fields.iter().map(|f| f.top.clone()).collect();
    let bottoms: Vec<Frame> = fields.iter().map(|f| f.bottom.clone()).collect();
    let (batched, _) = p
        .forward(&Frame::batch_to_tensor(&tops).unwrap(), &Frame::batch_to_tensor(&bottoms).unwrap())
        .unwrap();
    for (i, f) in fields.iter().enumerate() {
        let (single, _) = p.forward(&f.top.to_tensor(), &f.bottom.to_tensor()).unwrap();
        let a = Frame::from_tensor(&batched, i).unwrap();
        let b = Frame::from_tensor(&single, 0).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= 1e-5 * x.abs().max(1.0), "sample {i}: {x} vs {y}");
        }
    }
}

#[test]
fn temporal_insert_combs_only_where_things_move() {
    let (a, b) = moving_texture_pair(64, 12).unwrap();
    let out = temporal_insert(&scan_interlaced(&a, &b).unwrap()).unwrap();
    let mut static_errors = 0;
    let mut moving_errors = 0;
    for c in 0..3 {
        for y in (1..64).step_by(2) {
            for x in 0..64 {
                let moved = a.get(c, y, x) != b.get(c, y, x);
                let wrong = out.get(c, y, x) != a.get(c, y, x);
                if wrong && !moved {
                    static_errors += 1;
                }
                if wrong && moved {
                    moving_errors += 1;
                }
            }
        }
    }
    assert_eq!(static_errors, 0);
    assert!(moving_errors > 0);
}

#[test]
fn ela_beats_bob_on_diagonal_edges() {
    for (angle, period) in [(0.25f32, 10.0f32), (0.35, 12.0), (2.8, 9.0), (0.45, 14.0)] {
        let truth = diagonal_edges(64, 64, angle, period).unwrap();
        let f = scan_interlaced(&truth, &truth).unwrap();
        let e = psnr(&ela(&f).unwrap(), &truth).unwrap();
        let b = psnr(&bob_line_average(&f).unwrap(), &truth).unwrap();
        assert!(e >= b, "angle {angle}: ela {e:.2} dB < bob {b:.2} dB");
    }
}
