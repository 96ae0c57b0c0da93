//! Image file I/O: PNG and JPEG in, PNG out.
//!
//! Pixels are exchanged with the float pipeline as storage-space values in
//! [0, 1]; no transfer-function conversion is applied, so blending happens
//! in the same space the files use.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

/// Loads a PNG or JPEG. Grayscale files come back single-channel, color
/// files 3-channel; 16-bit sources keep their precision.
pub fn load_image(path: &Path) -> Result<ImageBuffer> {
    let dynimg = ImageReader::open(path)?.decode()?;
    Ok(match dynimg {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            let data = img.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
            ImageBuffer::from_data(w as usize, h as usize, 1, data)?
        }
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            let data = img.into_raw().iter().map(|&v| v as f32 / 65535.0).collect();
            ImageBuffer::from_data(w as usize, h as usize, 1, data)?
        }
        other => {
            let rgb = other.to_rgb32f();
            let (w, h) = rgb.dimensions();
            ImageBuffer::from_data(w as usize, h as usize, 3, rgb.into_raw())?
        }
    })
}

/// Writes a PNG, 8-bit by default or 16-bit when `deep` is set. Values are
/// clamped to [0, 1] before quantization.
pub fn save_png(path: &Path, img: &ImageBuffer, deep: bool) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let quant8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let quant16 = |v: f32| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;

    match (img.channels(), deep) {
        (1, false) => {
            let buf: Vec<u8> = img.data().iter().map(|&v| quant8(v)).collect();
            image::GrayImage::from_raw(w, h, buf)
                .ok_or_else(|| Error::InvalidInput("buffer size mismatch".into()))?
                .save(path)?;
        }
        (1, true) => {
            let buf: Vec<u16> = img.data().iter().map(|&v| quant16(v)).collect();
            image::ImageBuffer::<image::Luma<u16>, _>::from_raw(w, h, buf)
                .ok_or_else(|| Error::InvalidInput("buffer size mismatch".into()))?
                .save(path)?;
        }
        (3, false) => {
            let buf: Vec<u8> = img.data().iter().map(|&v| quant8(v)).collect();
            image::RgbImage::from_raw(w, h, buf)
                .ok_or_else(|| Error::InvalidInput("buffer size mismatch".into()))?
                .save(path)?;
        }
        (3, true) => {
            let buf: Vec<u16> = img.data().iter().map(|&v| quant16(v)).collect();
            image::ImageBuffer::<image::Rgb<u16>, _>::from_raw(w, h, buf)
                .ok_or_else(|| Error::InvalidInput("buffer size mismatch".into()))?
                .save(path)?;
        }
        (c, _) => {
            return Err(Error::InvalidInput(format!(
                "cannot encode {c}-channel image"
            )))
        }
    }
    Ok(())
}
