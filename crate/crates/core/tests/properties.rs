use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use transfuse_core::destruct::{apply_brightness, destroy, BezierMap, ControlPoint, TransformSpec};
use transfuse_core::fuse::{fuse_average, fuse_images, fuse_l1norm, l1norm_weights, FusionRule};
use transfuse_core::image::preprocess;
use transfuse_core::loss::{loss_components, loss_ssim, LossConfig};
use transfuse_core::metrics::{evaluate_pair, metric_ssim_fusion};
use transfuse_core::model::{
    patchify_global, patchify_local, unpatchify_global, unpatchify_local, ModelConfig, PatchConfig, TransFuseNet,
};
use transfuse_core::tensor::FeatureMap;
use transfuse_core::{Image, Plane};

fn image(h: usize, w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0..=1.0f64, h * w).prop_map(move |px| Image::new(h, w, px).unwrap())
}

fn sized_image(lo: usize, hi: usize) -> impl Strategy<Value = Image> {
    (lo..=hi, lo..=hi).prop_flat_map(|(h, w)| image(h, w))
}

fn image_pair(lo: usize, hi: usize) -> impl Strategy<Value = (Image, Image)> {
    (lo..=hi, lo..=hi).prop_flat_map(|(h, w)| (image(h, w), image(h, w)))
}

fn feature_pair() -> impl Strategy<Value = (FeatureMap, FeatureMap)> {
    (1usize..4, 2usize..7, 2usize..7).prop_flat_map(|(c, h, w)| {
        let n = c * h * w;
        (prop::collection::vec(-2.0..2.0f64, n), prop::collection::vec(-2.0..2.0f64, n)).prop_map(move |(a, b)| {
            (FeatureMap::new(c, h, w, a).unwrap(), FeatureMap::new(c, h, w, b).unwrap())
        })
    })
}

fn unit_point() -> impl Strategy<Value = ControlPoint> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(x, y)| ControlPoint::new(x, y))
}

fn small_spec() -> TransformSpec {
    TransformSpec { subregion_size: 4, ..TransformSpec::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn destruction_leaves_outside_pixels_alone(img in sized_image(4, 20), seed in any::<u64>()) {
        let spec = small_spec();
        let (out, rec) = destroy(&img, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(rec.subregions.len(), spec.n_subregions);
        for y in 0..img.height() {
            for x in 0..img.width() {
                if !rec.regions().any(|r| r.contains(y, x)) {
                    prop_assert_eq!(out.get(y, x).to_bits(), img.get(y, x).to_bits());
                }
            }
        }
        prop_assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn destruction_is_a_function_of_the_seed(img in sized_image(8, 16), seed in any::<u64>()) {
        let spec = small_spec();
        let a = destroy(&img, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = destroy(&img, &spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bezier_tables_are_monotone(p2 in unit_point(), p3 in unit_point()) {
        let up = BezierMap::new(p2, p3, false, 256).unwrap();
        let down = BezierMap::new(p2, p3, true, 256).unwrap();
        for w in up.lut().windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for w in down.lut().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert_eq!(up.lut()[0], 0.0);
        prop_assert_eq!(*up.lut().last().unwrap(), 1.0);
    }

    #[test]
    fn gamma_round_trip(vals in prop::collection::vec(0.01..=1.0f64, 1..64), g in 0.1..5.0f64) {
        let region = Plane::new(1, vals.len(), vals.clone()).unwrap();
        let back = apply_brightness(&apply_brightness(&region, g).unwrap(), 1.0 / g).unwrap();
        for (a, b) in back.as_slice().iter().zip(&vals) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn loss_terms_stay_in_range((a, b) in image_pair(11, 18)) {
        for tv_normalize in [false, true] {
            let cfg = LossConfig { tv_normalize, ..LossConfig::default() };
            let l = loss_components(&a, &b, &cfg).unwrap();
            prop_assert!(l.mse >= 0.0 && l.tv >= 0.0 && l.total >= 0.0);
            let s = loss_ssim(&a, &b, &cfg).unwrap();
            prop_assert!((0.0..=2.0).contains(&s));
        }
    }

    #[test]
    fn fusion_rules_are_symmetric((a, b) in feature_pair(), radius in 0usize..3) {
        prop_assert_eq!(fuse_average(&a, &b).unwrap(), fuse_average(&b, &a).unwrap());
        prop_assert_eq!(fuse_l1norm(&a, &b, radius).unwrap(), fuse_l1norm(&b, &a, radius).unwrap());
        let (w1, w2) = l1norm_weights(&a, &b, radius).unwrap();
        for (x, y) in w1.iter().zip(&w2) {
            prop_assert!((x + y - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rules_agree_on_identical_features((a, _) in feature_pair(), radius in 0usize..3) {
        let avg = fuse_average(&a, &a).unwrap();
        prop_assert_eq!(&avg, &a);
        prop_assert_eq!(fuse_l1norm(&a, &a, radius).unwrap(), avg);
    }

    #[test]
    fn metrics_ignore_source_order((a, b) in image_pair(6, 12), f in any::<u64>()) {
        let cfg = LossConfig { ssim_window_radius: 2, ..LossConfig::default() };
        let fused = Image::from_fn(a.height(), a.width(), |y, x| {
            let t = ((f >> ((y * 7 + x) % 64)) & 1) as f64;
            t * a.get(y, x) + (1.0 - t) * b.get(y, x)
        }).unwrap();
        let r1 = evaluate_pair("p", &fused, &a, &b, &cfg).unwrap();
        let r2 = evaluate_pair("p", &fused, &b, &a, &cfg).unwrap();
        prop_assert_eq!(r1, r2);
        prop_assert!((metric_ssim_fusion(&a, &a, &a, &cfg).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn preprocess_keeps_target_sized_images(img in image(12, 12)) {
        prop_assert_eq!(preprocess(&img, 12).unwrap(), img);
    }

    #[test]
    fn patch_round_trips(img in image(16, 16), local in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let cfg = PatchConfig { image_size: 16, global_patch: 8, local_patch: local };
        let g = patchify_global(&img, &cfg).unwrap();
        let l = patchify_local(&img, &cfg).unwrap();
        prop_assert_eq!(&unpatchify_global(&g, &cfg).unwrap(), img.as_plane());
        prop_assert_eq!(&unpatchify_local(&l, &cfg).unwrap(), img.as_plane());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fused_images_are_valid_and_symmetric((a, b) in image_pair(16, 16), seed in any::<u64>()) {
        let cfg = ModelConfig {
            cnn_channels: 4,
            token_dim_global: 8,
            token_dim_local: 4,
            trans_channels: 2,
            depth: 1,
            heads: 2,
            mlp_ratio: 2,
            patch: PatchConfig { image_size: 16, global_patch: 8, local_patch: 4 },
            ..ModelConfig::default()
        };
        let net = TransFuseNet::new(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for rule in [FusionRule::average(), FusionRule::l1norm(1)] {
            let ab = fuse_images(&net, &a, &b, &rule).unwrap();
            let ba = fuse_images(&net, &b, &a, &rule).unwrap();
            prop_assert_eq!(&ab, &ba);
            prop_assert!(ab.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let same = fuse_images(&net, &a, &a, &FusionRule::average()).unwrap();
        prop_assert_eq!(same, net.reconstruct(&a).unwrap());
    }
}
