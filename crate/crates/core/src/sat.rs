//! Summed-area tables over an image and its square.
//!
//! Both running sums are kept in double precision: the correlation
//! denominators subtract large, nearly equal sums and would lose too many
//! digits in f32.

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

/// `(width + 1) x (height + 1)` cumulative sums of a single-channel image
/// and of its square. Any rectangle sum is answered in O(1).
#[derive(Debug, Clone)]
pub struct SummedAreaTable {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

/// Builds the summed-area table of a single-channel image.
pub fn build_sat(img: &ImageBuffer) -> Result<SummedAreaTable> {
    if img.channels() != 1 {
        return Err(Error::InvalidInput(
            "summed-area table expects a single-channel image".into(),
        ));
    }
    Ok(SummedAreaTable::new(img))
}

impl SummedAreaTable {
    fn new(img: &ImageBuffer) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sum = vec![0.0f64; stride * (h + 1)];
        let mut sum_sq = vec![0.0f64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            let mut row_sq = 0.0f64;
            for x in 0..w {
                let v = img.pixel(x, y)[0] as f64;
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + row_sq;
            }
        }
        SummedAreaTable {
            width: w,
            height: h,
            sum,
            sum_sq,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    fn rect(table: &[f64], stride: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        table[(y1 + 1) * stride + x1 + 1] + table[y0 * stride + x0]
            - table[y0 * stride + x1 + 1]
            - table[(y1 + 1) * stride + x0]
    }

    /// Sum over the inclusive pixel rectangle `[x0, x1] x [y0, y1]`.
    #[inline]
    pub fn rect_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x0 <= x1 && x1 < self.width && y0 <= y1 && y1 < self.height);
        Self::rect(&self.sum, self.width + 1, x0, y0, x1, y1)
    }

    /// Sum of squared values over the inclusive rectangle `[x0, x1] x [y0, y1]`.
    #[inline]
    pub fn rect_sum_sq(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        debug_assert!(x0 <= x1 && x1 < self.width && y0 <= y1 && y1 < self.height);
        Self::rect(&self.sum_sq, self.width + 1, x0, y0, x1, y1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_sum(img: &ImageBuffer, x0: usize, y0: usize, x1: usize, y1: usize) -> (f64, f64) {
        let mut s = 0.0f64;
        let mut s2 = 0.0f64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let v = img.pixel(x, y)[0] as f64;
                s += v;
                s2 += v * v;
            }
        }
        (s, s2)
    }

    #[test]
    fn all_ones_full_rectangle() {
        let img = ImageBuffer::from_fn(3, 3, |_, _| 1.0);
        let sat = build_sat(&img).unwrap();
        assert_relative_eq!(sat.rect_sum(0, 0, 2, 2), 9.0, max_relative = 1e-12);
    }

    #[test]
    fn single_pixel_sum_and_sumsq() {
        let img = ImageBuffer::from_fn(1, 1, |_, _| 0.25);
        let sat = build_sat(&img).unwrap();
        assert_relative_eq!(sat.rect_sum(0, 0, 0, 0), 0.25, max_relative = 1e-12);
        assert_relative_eq!(sat.rect_sum_sq(0, 0, 0, 0), 0.0625, max_relative = 1e-12);
    }

    #[test]
    fn random_rectangles_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let img = {
            let mut img = ImageBuffer::new(17, 13, 1);
            for v in img.data_mut() {
                *v = rng.random::<f32>();
            }
            img
        };
        let sat = build_sat(&img).unwrap();
        for _ in 0..100 {
            let x0 = rng.random_range(0..17);
            let x1 = rng.random_range(x0..17);
            let y0 = rng.random_range(0..13);
            let y1 = rng.random_range(y0..13);
            let (s, s2) = brute_sum(&img, x0, y0, x1, y1);
            assert_relative_eq!(sat.rect_sum(x0, y0, x1, y1), s, max_relative = 1e-6);
            assert_relative_eq!(sat.rect_sum_sq(x0, y0, x1, y1), s2, max_relative = 1e-6);
        }
    }

    #[test]
    fn exhaustive_rectangles_on_small_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for (w, h) in [(1, 1), (2, 3), (5, 4), (8, 8)] {
            let mut img = ImageBuffer::new(w, h, 1);
            for v in img.data_mut() {
                *v = rng.random::<f32>();
            }
            let sat = build_sat(&img).unwrap();
            for y0 in 0..h {
                for y1 in y0..h {
                    for x0 in 0..w {
                        for x1 in x0..w {
                            let (s, s2) = brute_sum(&img, x0, y0, x1, y1);
                            assert_relative_eq!(
                                sat.rect_sum(x0, y0, x1, y1),
                                s,
                                max_relative = 1e-6
                            );
                            assert_relative_eq!(
                                sat.rect_sum_sq(x0, y0, x1, y1),
                                s2,
                                max_relative = 1e-6
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn sampled_rectangles_on_64x64() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let mut img = ImageBuffer::new(64, 64, 1);
        for v in img.data_mut() {
            *v = rng.random::<f32>();
        }
        let sat = build_sat(&img).unwrap();
        for _ in 0..2000 {
            let x0 = rng.random_range(0..64);
            let x1 = rng.random_range(x0..64);
            let y0 = rng.random_range(0..64);
            let y1 = rng.random_range(y0..64);
            let (s, _) = brute_sum(&img, x0, y0, x1, y1);
            assert_relative_eq!(sat.rect_sum(x0, y0, x1, y1), s, max_relative = 1e-6);
        }
    }

    #[test]
    fn rejects_multichannel_input() {
        let img = ImageBuffer::new(4, 4, 3);
        assert!(build_sat(&img).is_err());
    }
}
