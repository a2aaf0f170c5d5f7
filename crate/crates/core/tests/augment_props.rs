mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snapclass::augment::{
    augment_image, augment_stream, build_affine, flip_h, flip_v, item_rng, sample_params, AugmentConfig,
    SampledTransform,
};
use snapclass::{ImageBuffer, LabeledImage};

fn image_strategy() -> impl Strategy<Value = ImageBuffer> {
    (1usize..12, 1usize..12, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(h, w, c)| {
        proptest::collection::vec(any::<u8>(), h * w * c)
            .prop_map(move |data| ImageBuffer::from_bytes(h, w, c, data).unwrap())
    })
}

proptest! {
    #[test]
    fn sampled_parameters_stay_in_range(seed in any::<u64>(), epoch in 0u64..100, index in 0u64..100) {
        let cfg = AugmentConfig::default();
        let t = sample_params(&cfg, &mut item_rng(seed, epoch, index));
        prop_assert!(t.angle_deg.abs() <= cfg.rotation_deg);
        prop_assert!(t.dx_frac.abs() <= cfg.width_shift_frac);
        prop_assert!(t.dy_frac.abs() <= cfg.height_shift_frac);
        prop_assert!(t.shear_rad.abs() <= cfg.shear_intensity);
        prop_assert!(t.zoom >= cfg.zoom_range[0] && t.zoom <= cfg.zoom_range[1]);
    }

    #[test]
    fn output_values_come_from_the_input(img in image_strategy(), seed in any::<u64>()) {
        let t = sample_params(&AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
        let out = augment_image(&img, &t).unwrap();
        let c = img.channels();
        let src = img.as_bytes().unwrap();
        for (i, v) in out.as_bytes().unwrap().iter().enumerate() {
            let ch = i % c;
            prop_assert!(src.iter().skip(ch).step_by(c).any(|s| s == v));
        }
    }

    #[test]
    fn flips_are_involutions(img in image_strategy()) {
        prop_assert_eq!(flip_h(&flip_h(&img)), img.clone());
        prop_assert_eq!(flip_v(&flip_v(&img)), img);
    }

    #[test]
    fn identity_transform_is_bit_exact(img in image_strategy()) {
        prop_assert_eq!(augment_image(&img, &SampledTransform::identity()).unwrap(), img);
    }

    #[test]
    fn affine_matrices_are_finite(seed in any::<u64>(), h in 1usize..64, w in 1usize..64) {
        let t = sample_params(&AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(build_affine(&t, h, w).unwrap().is_finite());
    }

    #[test]
    fn item_draws_are_pure(seed in any::<u64>(), epoch in any::<u64>(), index in any::<u64>()) {
        let cfg = AugmentConfig::default();
        let a = sample_params(&cfg, &mut item_rng(seed, epoch, index));
        let b = sample_params(&cfg, &mut item_rng(seed, epoch, index));
        prop_assert_eq!(a, b);
    }
}

fn tiny_dataset(n: usize, seed: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|label| LabeledImage {
            image: common::random_image(&mut rng, 8),
            label,
        })
        .collect()
}

#[test]
fn stream_cycles_labels_of_the_source() {
    let ds = tiny_dataset(10, 1);
    let labels: Vec<usize> = augment_stream(&ds, &AugmentConfig::default(), 3)
        .unwrap()
        .take(100)
        .map(|x| x.label)
        .collect();
    let expected: Vec<usize> = (0..100).map(|i| i % 10).collect();
    assert_eq!(labels, expected);
}

#[test]
fn identity_stream_replays_dataset() {
    let ds = tiny_dataset(7, 2);
    let items: Vec<LabeledImage> = augment_stream(&ds, &AugmentConfig::identity(), 0)
        .unwrap()
        .take(21)
        .collect();
    for (i, item) in items.iter().enumerate() {
        assert_eq!(item, &ds[i % 7]);
    }
}

#[test]
fn two_consumers_with_one_seed_agree() {
    let ds = tiny_dataset(5, 3);
    let cfg = AugmentConfig::default();
    let a: Vec<_> = augment_stream(&ds, &cfg, 99).unwrap().take(40).collect();
    let mut b = augment_stream(&ds, &cfg, 99).unwrap();
    let mut got = b.next_batch(13);
    got.extend(b.next_batch(27));
    assert_eq!(a, got);
    let other: Vec<_> = augment_stream(&ds, &cfg, 100).unwrap().take(40).collect();
    assert_ne!(a, other);
}

#[test]
fn epochs_draw_fresh_transforms() {
    let ds = tiny_dataset(4, 4);
    let s = augment_stream(&ds, &AugmentConfig::default(), 1).unwrap();
    assert_ne!(s.transform_at(0), s.transform_at(4));
    assert_eq!(s.item_at(4).label, s.item_at(0).label);
}

#[test]
fn invalid_configs_are_rejected() {
    let ds = tiny_dataset(2, 5);
    let bad_zoom = AugmentConfig {
        zoom_range: [1.2, 0.9],
        ..AugmentConfig::default()
    };
    assert!(augment_stream(&ds, &bad_zoom, 0).is_err());
    let bad_shear = AugmentConfig {
        shear_intensity: 2.0,
        ..AugmentConfig::default()
    };
    assert!(augment_stream(&ds, &bad_shear, 0).is_err());
    assert!(augment_stream(&[], &AugmentConfig::default(), 0).is_err());
    assert!(serde_json::from_str::<AugmentConfig>(r#"{"rotation": 10}"#).is_err());
}
