//! Planar float image container with optional per-pixel validity.
//!
//! Pixels are stored interleaved, row-major: `data[(y * width + x) * channels + c]`.
//! Values are nominally in `[0, 1]` but the container does not clamp; every
//! public operation keeps them finite. The optional mask records which pixels
//! carry real content — the stitcher relies on it to know which panorama
//! pixels each lens actually covers.

use crate::error::{Error, Result};

/// How sampling treats coordinates outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorderPolicy {
    /// Clamp coordinates to the nearest edge pixel.
    Clamp,
    /// Out-of-range taps read zero and the sample is reported invalid.
    Masked,
    /// Wrap horizontally (periodic in x), clamp vertically. Matches the
    /// topology of an equirectangular image.
    WrapX,
}

/// Taps with a bilinear weight at or below this threshold contribute nothing
/// perceptible at f32 precision and are skipped, so transforms that are
/// identity up to solver noise still resolve to exact pixel reads.
const WEIGHT_EPS: f64 = 1e-8;

/// Interleaved row-major float image, 1 or 3 channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
    mask: Option<Vec<bool>>,
}

impl ImageBuffer {
    /// All-zero image without a mask.
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        ImageBuffer {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            mask: None,
        }
    }

    /// Wraps existing interleaved data. Rejects size mismatches and non-finite samples.
    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "data length {} != {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample value".into()));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
            mask: None,
        })
    }

    /// Builds an image by evaluating `f(x, y)` per pixel (single channel).
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut img = ImageBuffer::new(width, height, 1);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Attaches a validity mask (length `width * height`).
    pub fn set_mask(&mut self, mask: Vec<bool>) {
        assert_eq!(mask.len(), self.width * self.height, "mask length mismatch");
        self.mask = Some(mask);
    }

    pub fn clear_mask(&mut self) {
        self.mask = None;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// True when the pixel exists and its mask bit (if any) is set.
    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        match &self.mask {
            Some(m) => m[y * self.width + x],
            None => true,
        }
    }

    /// Bilinear sample at a fractional position.
    ///
    /// Writes `channels` values into `out` and returns whether the sample is
    /// valid: a sample is invalid if any contributing tap (weight > 0) is
    /// outside the image under [`BorderPolicy::Masked`], or masked invalid in
    /// the source. Integer coordinates reproduce the stored pixel exactly.
    pub fn sample_bilinear(&self, x: f64, y: f64, border: BorderPolicy, out: &mut [f32]) -> bool {
        debug_assert_eq!(out.len(), self.channels);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);

        let weights = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1, y0, fx * (1.0 - fy)),
            (x0, y0 + 1, (1.0 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ];

        let mut acc = [0.0f64; 3];
        let mut valid = true;
        for (tx, ty, w) in weights {
            if w <= WEIGHT_EPS {
                continue;
            }
            let (sx, sy, inside) = self.resolve_tap(tx, ty, border);
            if !inside || !self.is_valid(sx, sy) {
                valid = false;
                continue;
            }
            let p = self.pixel(sx, sy);
            for c in 0..self.channels {
                acc[c] += w * p[c] as f64;
            }
        }
        for c in 0..self.channels {
            out[c] = acc[c] as f32;
        }
        valid
    }

    /// Maps a tap coordinate to a source pixel under the border policy.
    /// Returns `(x, y, inside)`; `inside == false` means the tap reads zero.
    #[inline]
    fn resolve_tap(&self, tx: i64, ty: i64, border: BorderPolicy) -> (usize, usize, bool) {
        let w = self.width as i64;
        let h = self.height as i64;
        match border {
            BorderPolicy::Clamp => {
                (tx.clamp(0, w - 1) as usize, ty.clamp(0, h - 1) as usize, true)
            }
            BorderPolicy::Masked => {
                if tx < 0 || ty < 0 || tx >= w || ty >= h {
                    (0, 0, false)
                } else {
                    (tx as usize, ty as usize, true)
                }
            }
            BorderPolicy::WrapX => {
                (tx.rem_euclid(w) as usize, ty.clamp(0, h - 1) as usize, true)
            }
        }
    }

    /// Rec.709 luma (coefficients 0.2126, 0.7152, 0.0722).
    ///
    /// Computed as `g + 0.2126 (r - g) + 0.0722 (b - g)` so gray pixels
    /// (`r == g == b`) map to themselves exactly. Mask is carried over.
    pub fn to_luma(&self) -> ImageBuffer {
        assert_eq!(self.channels, 3, "to_luma expects a 3-channel image");
        let mut out = ImageBuffer::new(self.width, self.height, 1);
        for i in 0..self.width * self.height {
            let r = self.data[3 * i] as f64;
            let g = self.data[3 * i + 1] as f64;
            let b = self.data[3 * i + 2] as f64;
            out.data[i] = (g + 0.2126 * (r - g) + 0.0722 * (b - g)) as f32;
        }
        out.mask = self.mask.clone();
        out
    }

    /// Copies a rectangle into a fresh image (mask included). The rectangle
    /// must lie inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ImageBuffer {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        let mut out = ImageBuffer::new(w, h, self.channels);
        for y in 0..h {
            let src = ((y0 + y) * self.width + x0) * self.channels;
            let dst = y * w * self.channels;
            out.data[dst..dst + w * self.channels]
                .copy_from_slice(&self.data[src..src + w * self.channels]);
        }
        if let Some(m) = &self.mask {
            let mut om = vec![true; w * h];
            for y in 0..h {
                for x in 0..w {
                    om[y * w + x] = m[(y0 + y) * self.width + x0 + x];
                }
            }
            out.mask = Some(om);
        }
        out
    }
}
