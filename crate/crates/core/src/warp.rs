//! Planar affine transforms in row-vector convention and inverse-mapping warps.

use rayon::prelude::*;

use crate::buffer::{BorderPolicy, ImageBuffer};
use crate::error::{Error, Result};

/// Determinant threshold below which a transform is treated as singular.
pub const SINGULAR_EPS: f64 = 1e-12;

/// 6-parameter planar affine transform.
///
/// Interpreted as `[x1 y1 1] = [x2 y2 1] * A` with
///
/// ```text
///     | a  b  0 |
/// A = | c  d  0 |
///     | tx ty 1 |
/// ```
///
/// so `x1 = a*x2 + c*y2 + tx` and `y1 = b*x2 + d*y2 + ty`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AffineTransform2D {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineTransform2D {
    pub const IDENTITY: AffineTransform2D = AffineTransform2D {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineTransform2D {
            tx,
            ty,
            ..Self::IDENTITY
        }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn is_invertible(&self) -> bool {
        self.det().abs() > SINGULAR_EPS
    }

    /// Applies the transform to a point: `(x, y, 1) * A`.
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.a * x + self.c * y + self.tx,
            self.b * x + self.d * y + self.ty,
        )
    }

    pub fn inverse(&self) -> Result<AffineTransform2D> {
        let det = self.det();
        if det.abs() <= SINGULAR_EPS {
            return Err(Error::SingularTransform);
        }
        let (ia, ib, ic, id) = (self.d / det, -self.b / det, -self.c / det, self.a / det);
        Ok(AffineTransform2D {
            a: ia,
            b: ib,
            c: ic,
            d: id,
            tx: -(self.tx * ia + self.ty * ic),
            ty: -(self.tx * ib + self.ty * id),
        })
    }

    /// Composition "apply `self`, then `other`": the matrix product
    /// `self * other` in the row-vector convention, so warping by the result
    /// equals warping by `self` followed by `other`.
    pub fn then(&self, other: &AffineTransform2D) -> AffineTransform2D {
        AffineTransform2D {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
            tx: self.tx * other.a + self.ty * other.c + other.tx,
            ty: self.tx * other.b + self.ty * other.d + other.ty,
        }
    }

    /// `(a, b, c, d, tx, ty)` as a flat array, for reports and profiles.
    pub fn to_array(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.tx, self.ty]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        AffineTransform2D {
            a: v[0],
            b: v[1],
            c: v[2],
            d: v[3],
            tx: v[4],
            ty: v[5],
        }
    }

    /// Maximum displacement `|p*A - p|` over a rectangle's four corners.
    /// Used to sanity-check warps in reports and tests.
    pub fn max_corner_displacement(&self, w: f64, h: f64) -> f64 {
        [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
            .iter()
            .map(|&(x, y)| {
                let (u, v) = self.apply(x, y);
                ((u - x).powi(2) + (v - y).powi(2)).sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Inverse-mapping affine warp with bilinear sampling.
///
/// For every output pixel `(x1, y1)` the source coordinate is
/// `(x2, y2) = (x1, y1, 1) * A^-1`. Output pixels whose source falls outside
/// the input (or on masked-invalid content) are masked invalid.
pub fn warp_affine(
    img: &ImageBuffer,
    transform: &AffineTransform2D,
    out_w: usize,
    out_h: usize,
) -> Result<ImageBuffer> {
    warp_affine_border(img, transform, out_w, out_h, BorderPolicy::Masked)
}

/// [`warp_affine`] with an explicit border policy for the source lookups.
/// [`BorderPolicy::WrapX`] warps periodically in x, which is what
/// equirectangular canvases need at the +-180 degree seam.
pub fn warp_affine_border(
    img: &ImageBuffer,
    transform: &AffineTransform2D,
    out_w: usize,
    out_h: usize,
    border: BorderPolicy,
) -> Result<ImageBuffer> {
    let inv = transform.inverse()?;
    let channels = img.channels();
    let mut out = ImageBuffer::new(out_w, out_h, channels);
    let mut mask = vec![false; out_w * out_h];

    out.data_mut()
        .par_chunks_mut(out_w * channels)
        .zip(mask.par_chunks_mut(out_w))
        .enumerate()
        .for_each(|(y, (row, mask_row))| {
            let mut px = [0.0f32; 3];
            for x in 0..out_w {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                let ok = img.sample_bilinear(sx, sy, border, &mut px[..channels]);
                row[x * channels..(x + 1) * channels].copy_from_slice(&px[..channels]);
                mask_row[x] = ok;
            }
        });

    out.set_mask(mask);
    Ok(out)
}
