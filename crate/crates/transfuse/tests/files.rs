use std::fs;
use std::path::Path;

use image::{GrayImage, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transfuse::checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
use transfuse::dataset::scan_dataset;
use transfuse::io::{load_image, save_image};
use transfuse::Error;
use transfuse_core::model::{ModelConfig, PatchConfig, TransFuseNet};
use transfuse_core::nn::Params;
use transfuse_core::Image;

fn random_image(h: usize, w: usize, seed: u64) -> Image {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(h, w, |_, _| f64::from(r.gen::<u8>()) / 255.0).unwrap()
}

fn tiny_model(transformer: bool) -> TransFuseNet {
    let cfg = ModelConfig {
        cnn_channels: 4,
        token_dim_global: 8,
        token_dim_local: 4,
        trans_channels: 2,
        depth: 1,
        heads: 2,
        mlp_ratio: 2,
        patch: PatchConfig { image_size: 16, global_patch: 8, local_patch: 4 },
        transformer_branch: transformer,
        ..ModelConfig::default()
    };
    TransFuseNet::new(&cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
}

#[test]
fn eight_bit_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let img = random_image(13, 21, 1);
    for name in ["a.png", "a.pgm", "A.PGM"] {
        let path = dir.path().join(name);
        save_image(&path, &img).unwrap();
        assert_eq!(load_image(&path).unwrap(), img, "{name}");
    }
}

#[test]
fn rgb_png_is_converted_to_luma() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("red.png");
    RgbImage::from_pixel(2, 3, Rgb([255, 0, 0])).save(&path).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!(img.dims(), (3, 2));
    for &v in img.as_slice() {
        assert!((v - 0.299).abs() < 1e-12);
    }
}

#[test]
fn missing_and_broken_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_image(&dir.path().join("nope.png")), Err(Error::NotFound(_))));
    let bad = dir.path().join("bad.png");
    fs::write(&bad, b"not an image").unwrap();
    assert!(matches!(load_image(&bad), Err(Error::Decode { .. })));
}

fn write_gray(path: &Path, w: u32, h: u32, v: u8) {
    GrayImage::from_pixel(w, h, image::Luma([v])).save(path).unwrap();
}

#[test]
fn dataset_scan_is_sorted_and_skips_broken_files() {
    let dir = tempfile::tempdir().unwrap();
    write_gray(&dir.path().join("b.png"), 5, 4, 10);
    write_gray(&dir.path().join("a.png"), 3, 6, 20);
    save_image(&dir.path().join("c.pgm"), &random_image(8, 8, 2)).unwrap();
    fs::write(dir.path().join("d.png"), b"garbage").unwrap();
    fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
    fs::create_dir(dir.path().join("sub.png")).unwrap();

    let m = scan_dataset(dir.path(), 8).unwrap();
    let names: Vec<_> = m.entries.iter().map(|e| e.path.file_name().unwrap().to_str().unwrap()).collect();
    assert_eq!(names, ["a.png", "b.png", "c.pgm"]);
    assert_eq!(m.entries[0].original_size, (6, 3));
    assert_eq!(m.skipped.len(), 1);
    assert!(m.skipped[0].path.ends_with("d.png"));
    assert_eq!(m, scan_dataset(dir.path(), 8).unwrap());

    let imgs = m.load_images().unwrap();
    assert!(imgs.iter().all(|i| i.dims() == (8, 8)));
    assert!(imgs[1].as_slice().iter().all(|&v| (v - 10.0 / 255.0).abs() < 1e-12));
}

#[test]
fn empty_dataset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(scan_dataset(dir.path(), 8), Err(Error::EmptyDataset(_))));
    fs::write(dir.path().join("x.png"), b"garbage").unwrap();
    assert!(matches!(scan_dataset(dir.path(), 8), Err(Error::EmptyDataset(_))));
    assert!(matches!(scan_dataset(&dir.path().join("missing"), 8), Err(Error::NotFound(_))));
}

#[test]
fn checkpoint_round_trip_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let img = random_image(16, 16, 3);
    for transformer in [true, false] {
        let model = tiny_model(transformer);
        let path = dir.path().join(format!("m{transformer}.tfck"));
        save_checkpoint(&path, &model).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.reconstruct(&img).unwrap(), model.reconstruct(&img).unwrap());
        let has_transformer = back.named_parameters().iter().any(|(n, _)| n.starts_with("transformer."));
        assert_eq!(has_transformer, transformer);
    }
    assert!(tiny_model(false).param_count() < tiny_model(true).param_count());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let bytes = encode_checkpoint(&tiny_model(true));
    assert!(decode_checkpoint(&bytes[..bytes.len() - 8]).is_err());
    assert!(decode_checkpoint(&bytes[..10]).is_err());
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(decode_checkpoint(&bad_magic).is_err());
    let mut extra = bytes.clone();
    extra.extend_from_slice(&0f64.to_le_bytes());
    assert!(decode_checkpoint(&extra).is_err());

    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_checkpoint(&dir.path().join("none.tfck")), Err(Error::NotFound(_))));
    let p = dir.path().join("bad.tfck");
    fs::write(&p, &bad_magic).unwrap();
    assert!(matches!(load_checkpoint(&p), Err(Error::Checkpoint { .. })));
}
