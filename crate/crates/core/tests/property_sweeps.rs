//! Randomized property sweeps over the spec-level invariants.

use proptest::prelude::*;

use pfca_core::attention::pfca_v_from_channel_vector;
use pfca_core::image::{bicubic_resize, bicubic_resize_plane, ImageRGB, PairedSample};
use pfca_core::metrics::psnr;
use pfca_core::rng::Pcg32;
use pfca_core::tensor::{conv_out_dim, Shape, Tape, Tensor};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Convolution output shape follows ⌊(in + 2p − k)/s⌋ + 1 for every
    /// viable (k, s, p) combination.
    #[test]
    fn conv_shape_algebra(
        h in 1usize..14,
        w in 1usize..14,
        k in 1usize..6,
        s in 1usize..4,
        p in 0usize..4,
    ) {
        prop_assume!(h + 2 * p >= k && w + 2 * p >= k);
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::filled(Shape::new(1, 2, h, w).unwrap(), 1.0)).unwrap();
        let wt = tape.leaf(Tensor::filled(Shape::new(3, 2, k, k).unwrap(), 0.5)).unwrap();
        let y = tape.conv2d(x, wt, None, s, p).unwrap();
        let out = tape.value(y).shape();
        prop_assert_eq!(out.h, conv_out_dim(h, k, s, p).unwrap());
        prop_assert_eq!(out.w, conv_out_dim(w, k, s, p).unwrap());
        prop_assert_eq!(out.h, (h + 2 * p - k) / s + 1);
    }

    /// Pixel shuffle preserves the multiset of elements for any factor.
    #[test]
    fn pixel_shuffle_bijection(
        m in 1usize..4,
        r in 1usize..4,
        h in 1usize..5,
        w in 1usize..5,
        seed in 0u64..1000,
    ) {
        let c = m * r * r;
        let shape = Shape::new(1, c, h, w).unwrap();
        let mut rng = Pcg32::new(seed);
        let data: Vec<f32> = (0..shape.count()).map(|_| rng.normal() as f32).collect();
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::from_vec(shape, data.clone()).unwrap()).unwrap();
        let y = tape.pixel_shuffle(x, r).unwrap();
        let mut before: Vec<u32> = data.iter().map(|v| v.to_bits()).collect();
        let mut after: Vec<u32> = tape.value(y).data().iter().map(|v| v.to_bits()).collect();
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
    }

    /// Pooling commutes with the channel-vector broadcast product.
    #[test]
    fn pool_mul_commute(seed in 0u64..1000) {
        let shape = Shape::new(2, 3, 4, 5).unwrap();
        let mut rng = Pcg32::new(seed);
        let x = Tensor::<f64>::from_vec(
            shape,
            (0..shape.count()).map(|_| rng.normal()).collect(),
        ).unwrap();
        let v = Tensor::<f64>::from_vec(
            Shape::vector(2, 3),
            (0..6).map(|_| rng.normal()).collect(),
        ).unwrap();
        let mut tape = Tape::<f64>::new();
        let xv = tape.leaf(x).unwrap();
        let vv = tape.leaf(v).unwrap();
        let scaled = tape.mul_channel(xv, vv).unwrap();
        let lhs = tape.global_avg_pool(scaled).unwrap();
        let pooled = tape.global_avg_pool(xv).unwrap();
        let rhs = tape.mul_channel(pooled, vv).unwrap();
        for (a, b) in tape.value(lhs).data().iter().zip(tape.value(rhs).data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// The attention map V stays at or above one half and obeys the mean
    /// law for any channel vector and positive lambda.
    #[test]
    fn pfca_bound_and_mean_law(
        u in proptest::collection::vec(-100.0f64..100.0, 2..64),
        lambda in 1e-6f64..1.0,
    ) {
        let v = pfca_v_from_channel_vector(&u, lambda);
        for &x in &v {
            prop_assert!(x >= 0.5);
        }
        let c = u.len() as f64;
        let mu = u.iter().sum::<f64>() / c;
        let sigma2 = u.iter().map(|&x| (x - mu) * (x - mu)).sum::<f64>() / c;
        let mean_v = v.iter().sum::<f64>() / c;
        let law = (3.0 * sigma2 + 2.0 * lambda) / (4.0 * (sigma2 + lambda));
        prop_assert!((mean_v - law).abs() < 1e-9);
    }

    /// Bicubic resampling preserves constants and is linear in the pixels.
    #[test]
    fn bicubic_constant_and_linear(
        oh in 1usize..24,
        ow in 1usize..24,
        value in -2.0f64..2.0,
        seed in 0u64..1000,
    ) {
        let (h, w) = (12usize, 10usize);
        let constant = vec![value; h * w];
        for v in bicubic_resize_plane(&constant, h, w, oh, ow) {
            prop_assert!((v - value).abs() < 1e-9);
        }

        let mut rng = Pcg32::new(seed);
        let a: Vec<f64> = (0..h * w).map(|_| rng.uniform()).collect();
        let b: Vec<f64> = (0..h * w).map(|_| rng.uniform()).collect();
        let mixed: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| 0.3 * x - 1.2 * y).collect();
        let ra = bicubic_resize_plane(&a, h, w, oh, ow);
        let rb = bicubic_resize_plane(&b, h, w, oh, ow);
        let rm = bicubic_resize_plane(&mixed, h, w, oh, ow);
        for i in 0..rm.len() {
            prop_assert!((rm[i] - (0.3 * ra[i] - 1.2 * rb[i])).abs() < 1e-6);
        }
    }
}

/// Degradation-pipeline sanity floor: the bicubic round trip must beat an
/// i.i.d.-noise image of matching first and second moments.
#[test]
fn degradation_round_trip_beats_matched_noise() {
    for seed in [1u64, 2, 3] {
        let pairs = pfca_core::image::synth_sr(2, 64, seed);
        for PairedSample { hr, lr } in pairs {
            let up = bicubic_resize(&lr, hr.h, hr.w);
            let y_hr = hr.to_y_plane();
            let y_up = up.to_y_plane();
            let round_trip = psnr(&y_up, &y_hr, 255.0).unwrap();

            let mean = y_hr.data.iter().sum::<f64>() / y_hr.data.len() as f64;
            let var = y_hr
                .data
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<f64>()
                / y_hr.data.len() as f64;
            let mut rng = Pcg32::new(seed + 100);
            let mut noise = ImageRGB::new(hr.h, hr.w);
            for p in 0..3 {
                for v in noise.planes[p].iter_mut() {
                    *v = (((mean + rng.normal() * var.sqrt()) / 255.0) as f32).clamp(0.0, 1.0);
                }
            }
            let y_noise = noise.to_y_plane();
            let noise_psnr = psnr(&y_noise, &y_hr, 255.0).unwrap();
            assert!(
                round_trip > noise_psnr,
                "round trip {round_trip:.2} dB <= noise {noise_psnr:.2} dB"
            );
        }
    }
}
