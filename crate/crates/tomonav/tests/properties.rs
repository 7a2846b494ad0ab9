//! Randomized property tests for the core invariants.

use proptest::prelude::*;

use tomonav::image::Image;
use tomonav::navigation::{junction_update, threshold_actions, JunctionCounter};
use tomonav::nn::ActionVector;
use tomonav::tomography::{radon, TomoConfig};

fn image_strategy(side: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..1.0, side * side)
        .prop_map(move |data| Image::new(side, side, data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Per-angle sinogram mass equals the pixel sum within 1e-3
    /// relative for dense images at the reference grid size. The bound
    /// is a property of the 64x64 discretization; sparse images
    /// concentrate the sampling-lattice aliasing into too few pixels
    /// to average out.
    #[test]
    fn radon_mass_conservation(img in image_strategy(64), angles in 4usize..24) {
        let cfg = TomoConfig { num_angles: angles, ..Default::default() };
        let total: f64 = img.data().iter().sum();
        prop_assume!(total > 100.0);
        let sino = radon(&img, &cfg).unwrap();
        let ds = sino.offset_spacing();
        for i in 0..sino.num_angles() {
            let line = sino.row(i).iter().sum::<f64>() * ds;
            prop_assert!(((line - total) / total).abs() < 1e-3);
        }
    }

    /// The transform is linear in the image.
    #[test]
    fn radon_linearity(f in image_strategy(24), g in image_strategy(24),
                       a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let cfg = TomoConfig { num_angles: 8, ..Default::default() };
        let combo = Image::from_fn(24, 24, |x, y| a * f.get(x, y) + b * g.get(x, y));
        let sf = radon(&f, &cfg).unwrap();
        let sg = radon(&g, &cfg).unwrap();
        let sc = radon(&combo, &cfg).unwrap();
        for i in 0..sc.data.len() {
            prop_assert!((sc.data[i] - (a * sf.data[i] + b * sg.data[i])).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// Thresholding is total on [0,1]^5 and junction detection is
    /// independent of the chosen action.
    #[test]
    fn threshold_actions_is_total(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0,
                                  d in 0.0f64..=1.0, e in 0.0f64..=1.0, tau in 0.05f64..=0.95) {
        let av = ActionVector { forward: a, yaw_left: b, yaw_right: c, halt: d, junction: e };
        let cmd = threshold_actions(&av, tau).unwrap();
        prop_assert_eq!(cmd.junction_detected, e >= tau);
    }

    /// Counter bookkeeping invariants hold on arbitrary streams.
    #[test]
    fn junction_counter_invariants(flags in prop::collection::vec(any::<bool>(), 0..200),
                                   m in 1u32..6, n in 1u32..8) {
        let mut jc = JunctionCounter::new(m, n);
        let mut last_count = 0;
        for &flag in &flags {
            let (next, newly) = junction_update(jc, flag);
            prop_assert!(next.count >= jc.count, "count must be monotone");
            prop_assert!(next.consecutive_pos <= m);
            prop_assert!(next.consecutive_neg <= n);
            prop_assert_eq!(newly, next.count == last_count + 1);
            last_count = next.count;
            jc = next;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// PGM round trip is exact on quantized intensities.
    #[test]
    fn pgm_round_trip(data in prop::collection::vec(0u8..=255, 64)) {
        let img = Image::new(8, 8, data.iter().map(|&b| b as f64 / 255.0).collect()).unwrap();
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = Image::read_pgm(buf.as_slice()).unwrap();
        prop_assert_eq!(img.to_bytes_u8(), back.to_bytes_u8());
    }

    /// Integer-ratio downsampling preserves the image mean exactly.
    #[test]
    fn box_downsample_preserves_mean(img in image_strategy(32)) {
        let small = img.resized(8, 8).unwrap();
        let mean_big: f64 = img.data().iter().sum::<f64>() / 1024.0;
        let mean_small: f64 = small.data().iter().sum::<f64>() / 64.0;
        prop_assert!((mean_big - mean_small).abs() < 1e-12);
    }
}
