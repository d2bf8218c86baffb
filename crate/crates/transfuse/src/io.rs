//! Grayscale image files: 8-bit PNG (gray or RGB) and binary PGM.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader};
use transfuse_core::image::luma_601;
use transfuse_core::Image;

use crate::error::{Error, Result};

/// Extensions treated as image files.
pub const IMAGE_EXTENSIONS: [&str; 2] = ["png", "pgm"];

pub fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|msg| Error::Decode { path: path.to_path_buf(), msg })
}

fn decode_image(bytes: &[u8]) -> std::result::Result<Image, String> {
    let reader = ImageReader::new(std::io::Cursor::new(bytes)).with_guessed_format().map_err(|e| e.to_string())?;
    match reader.format() {
        Some(ImageFormat::Png | ImageFormat::Pnm) => {}
        Some(f) => return Err(format!("unsupported format {f:?}")),
        None => return Err("unrecognized format".into()),
    }
    let img = reader.decode().map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| f64::from(p[0]) / 255.0).collect(),
        DynamicImage::ImageRgb8(c) => c.pixels().map(|p| luma_601(p[0], p[1], p[2])).collect(),
        DynamicImage::ImageRgba8(c) => c.pixels().map(|p| luma_601(p[0], p[1], p[2])).collect(),
        other => return Err(format!("unsupported pixel type {:?}", other.color())),
    };
    Image::new(h, w, pixels).map_err(|e| e.to_string())
}

/// Writes 8-bit grayscale; `.pgm` gives binary PGM, anything else PNG.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let gray = GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .expect("buffer length matches dimensions");
    let is_pgm = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let format = if is_pgm { ImageFormat::Pnm } else { ImageFormat::Png };
    let mut buf = std::io::Cursor::new(Vec::new());
    gray.write_to(&mut buf, format).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    fs::write(path, buf.into_inner()).map_err(|e| Error::io(path, e))
}
