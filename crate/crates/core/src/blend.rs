//! Ramp blending of the two aligned canvases and final composition.
//!
//! Inside each overlap band the output is a per-column convex combination
//! `B(r, c) = alpha1 * L(r, c) + alpha2 * R(r, c)` of the two canvases,
//! where the weights ramp linearly across the band: in the right overlap
//! area `alpha1 = c/n` and `alpha2 = (n - c + 1)/n` for columns `c = 1..n`,
//! mirrored for the left area. As printed, the two ramps sum to `(n + 1)/n`,
//! which would brighten the band by up to `1/n`; by default they are
//! renormalized per column into an exact partition of unity. The raw
//! variant is kept behind an option for comparison runs.
//!
//! Outside the bands each pixel is copied from whichever canvas covers it.

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::unwarp::{Band, BandSide, EquirectCanvas, OverlapSpec};

/// Per-column blending weights across a band of width `n`, indexed by
/// `c - 1` for the column index `c = 1..n` of the ramp definition.
#[derive(Debug, Clone, PartialEq)]
pub struct BlendWeights {
    alpha1: Vec<f64>,
    alpha2: Vec<f64>,
    normalized: bool,
}

impl BlendWeights {
    pub fn len(&self) -> usize {
        self.alpha1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha1.is_empty()
    }

    pub fn alpha1(&self) -> &[f64] {
        &self.alpha1
    }

    pub fn alpha2(&self) -> &[f64] {
        &self.alpha2
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }
}

/// Ramp weights for a band of width `n`, normalized per column so
/// `alpha1 + alpha2 = 1` exactly (`alpha2` is constructed as
/// `1 - alpha1`, not summed).
pub fn ramp_weights(n: usize, side: BandSide) -> BlendWeights {
    assert!(n >= 1, "band width must be at least 1");
    // raw ramps sum to (n + 1)/n per column, so the normalized first weight
    // is c/(n+1) on the right side and (n - c + 1)/(n+1) on the left
    let alpha1: Vec<f64> = (1..=n)
        .map(|c| match side {
            BandSide::Right => c as f64 / (n + 1) as f64,
            BandSide::Left => (n - c + 1) as f64 / (n + 1) as f64,
        })
        .collect();
    let alpha2 = alpha1.iter().map(|a| 1.0 - a).collect();
    BlendWeights {
        alpha1,
        alpha2,
        normalized: true,
    }
}

/// The ramp weights exactly as defined, without per-column normalization:
/// `alpha1 = c/n`, `alpha2 = (n - c + 1)/n` in the right overlap area and
/// mirrored in the left. Their sum exceeds 1 by `1/n`.
pub fn ramp_weights_raw(n: usize, side: BandSide) -> BlendWeights {
    assert!(n >= 1, "band width must be at least 1");
    let (alpha1, alpha2): (Vec<f64>, Vec<f64>) = (1..=n)
        .map(|c| {
            let up = c as f64 / n as f64;
            let down = (n - c + 1) as f64 / n as f64;
            match side {
                BandSide::Right => (up, down),
                BandSide::Left => (down, up),
            }
        })
        .unzip();
    BlendWeights {
        alpha1,
        alpha2,
        normalized: false,
    }
}

/// Blends two equally-shaped band regions column by column. Column `j`
/// uses weight index `j` (the ramp's `c = j + 1`).
///
/// Pixels valid on only one side take that side's value at full weight;
/// pixels valid on both sides blend and, for normalized weights, are
/// clamped into `[min(L,R), max(L,R)]` so the output is a true convex
/// combination even at f32 rounding. Pixels valid on neither side stay
/// masked invalid.
pub fn blend_band(l: &ImageBuffer, r: &ImageBuffer, weights: &BlendWeights) -> ImageBuffer {
    assert_eq!(l.width(), r.width());
    assert_eq!(l.height(), r.height());
    assert_eq!(l.channels(), r.channels());
    assert_eq!(l.width(), weights.len(), "one weight pair per column");

    let (w, h, channels) = (l.width(), l.height(), l.channels());
    let mut out = ImageBuffer::new(w, h, channels);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lv = l.is_valid(x, y);
            let rv = r.is_valid(x, y);
            let out_px_start = (y * w + x) * channels;
            mask[y * w + x] = lv || rv;
            let (lp, rp) = (l.pixel(x, y), r.pixel(x, y));
            for ch in 0..channels {
                let v = match (lv, rv) {
                    (true, true) => {
                        if weights.normalized {
                            // lerp form: exact when L == R
                            let a1 = weights.alpha1[x] as f32;
                            let blended = rp[ch] + a1 * (lp[ch] - rp[ch]);
                            blended.clamp(lp[ch].min(rp[ch]), lp[ch].max(rp[ch]))
                        } else {
                            (weights.alpha1[x] as f32) * lp[ch]
                                + (weights.alpha2[x] as f32) * rp[ch]
                        }
                    }
                    (true, false) => lp[ch],
                    (false, true) => rp[ch],
                    (false, false) => 0.0,
                };
                out.data_mut()[out_px_start + ch] = v;
            }
        }
    }
    out.set_mask(mask);
    out
}

/// Blend configuration for composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlendOptions {
    /// Use per-column normalized ramps (default). When false the raw ramp
    /// weights are applied as printed, brightening each band by up to `1/n`.
    pub normalized_ramp: bool,
}

impl Default for BlendOptions {
    fn default() -> Self {
        BlendOptions {
            normalized_ramp: true,
        }
    }
}

fn weights_for(n: usize, side: BandSide, opts: &BlendOptions) -> BlendWeights {
    if opts.normalized_ramp {
        ramp_weights(n, side)
    } else {
        ramp_weights_raw(n, side)
    }
}

/// Extracts the band columns of a canvas, optionally reversing column order.
fn extract_band(img: &ImageBuffer, band: &Band, reversed: bool) -> ImageBuffer {
    let (h, channels) = (img.height(), img.channels());
    let mut out = ImageBuffer::new(band.width, h, channels);
    let mut mask = vec![true; band.width * h];
    for y in 0..h {
        for j in 0..band.width {
            let src_x = if reversed {
                band.start + band.width - 1 - j
            } else {
                band.start + j
            };
            out.pixel_mut(j, y).copy_from_slice(img.pixel(src_x, y));
            mask[y * band.width + j] = img.is_valid(src_x, y);
        }
    }
    out.set_mask(mask);
    out
}

fn write_band(out: &mut ImageBuffer, band: &Band, region: &ImageBuffer, reversed: bool) {
    let (h, channels) = (out.height(), out.channels());
    for y in 0..h {
        for j in 0..band.width {
            let dst_x = if reversed {
                band.start + band.width - 1 - j
            } else {
                band.start + j
            };
            for ch in 0..channels {
                out.pixel_mut(dst_x, y)[ch] = region.pixel(j, y)[ch];
            }
        }
    }
}

/// Composites the aligned canvases into the final panorama.
///
/// Between the bands (the front sector) pixels come from the front canvas,
/// outside them from the rear canvas, falling back to the other canvas when
/// the preferred one has no coverage. Inside each band the canvases are
/// ramp-blended; the ramp is oriented so each canvas fades out toward the
/// edge of its own coverage. In each band "L" is the canvas whose valid
/// region extends left of the band (front in the right band, rear in the
/// left band), which pairs the left band with the ramp's natural column
/// order and the right band with the reversed order.
///
/// Fails with [`Error::CoverageHole`] if any pixel is valid in neither
/// canvas.
pub fn composite(
    front: &EquirectCanvas,
    rear: &EquirectCanvas,
    overlaps: &OverlapSpec,
    opts: &BlendOptions,
) -> Result<ImageBuffer> {
    let (w, h) = (front.width(), front.height());
    if rear.width() != w || rear.height() != h {
        return Err(Error::InvalidInput("canvas sizes differ".into()));
    }
    let channels = front.image().channels().max(rear.image().channels());
    if front.image().channels() != rear.image().channels() {
        return Err(Error::InvalidInput("canvas channel counts differ".into()));
    }

    let mut out = ImageBuffer::new(w, h, channels);

    // copy zones: front between the bands, rear outside them
    let front_cols = overlaps.left.start + overlaps.left.width..overlaps.right.start;
    for y in 0..h {
        for x in 0..w {
            if overlaps.left.cols().contains(&x) || overlaps.right.cols().contains(&x) {
                continue;
            }
            let prefer_front = front_cols.contains(&x);
            let (primary, secondary) = if prefer_front {
                (front.image(), rear.image())
            } else {
                (rear.image(), front.image())
            };
            let src = if primary.is_valid(x, y) {
                primary
            } else if secondary.is_valid(x, y) {
                secondary
            } else {
                return Err(Error::CoverageHole { x, y });
            };
            out.pixel_mut(x, y).copy_from_slice(src.pixel(x, y));
        }
    }

    // blend zones
    for (band, side) in [
        (overlaps.left, BandSide::Left),
        (overlaps.right, BandSide::Right),
    ] {
        // in the left band the rear canvas extends left, in the right band
        // the front canvas does; the right band walks the ramp from its
        // right edge so each canvas fades toward its own coverage edge
        let reversed = side == BandSide::Right;
        let (l_canvas, r_canvas) = match side {
            BandSide::Left => (rear.image(), front.image()),
            BandSide::Right => (front.image(), rear.image()),
        };
        let l_region = extract_band(l_canvas, &band, reversed);
        let r_region = extract_band(r_canvas, &band, reversed);
        let weights = weights_for(band.width, side, opts);
        let blended = blend_band(&l_region, &r_region, &weights);
        for y in 0..h {
            for j in 0..band.width {
                if !blended.is_valid(j, y) {
                    let x = if reversed {
                        band.start + band.width - 1 - j
                    } else {
                        band.start + j
                    };
                    return Err(Error::CoverageHole { x, y });
                }
            }
        }
        write_band(&mut out, &band, &blended, reversed);
    }

    Ok(out)
}
