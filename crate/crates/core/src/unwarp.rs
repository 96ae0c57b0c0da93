//! Fisheye-to-equirectangular unwarping.
//!
//! Each circular fisheye half-frame is resampled into a full 360x180
//! equirectangular canvas (2:1, yaw linear in x over [-180, 180), pitch
//! linear in y over [-90, 90]). The mapping is evaluated as an inverse
//! (destination-to-source) lookup so the output has no holes: for every
//! panorama direction within the lens field of view, the corresponding
//! fisheye position is computed and sampled bilinearly.
//!
//! The lens follows the equidistant model: image radius is proportional to
//! the angle from the optical axis.

use rayon::prelude::*;

use crate::buffer::{BorderPolicy, ImageBuffer};
use crate::error::{Error, Result};
use crate::vignette::FalloffPolynomial;
use crate::warp::{warp_affine_border, AffineTransform2D};

/// Per-lens parameters of a dual-fisheye camera.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LensProfile {
    /// Field of view in degrees; must exceed 180 for dual-lens coverage.
    pub fov_deg: f64,
    /// Center of the fisheye circle in half-frame pixel coordinates.
    pub circle_center: (f64, f64),
    /// Radius of the fisheye circle in pixels.
    pub circle_radius: f64,
    /// Radial gain curve of this lens.
    pub falloff: FalloffPolynomial,
    /// Bearing of the lens axis: 0 for the front lens, 180 for the rear.
    pub yaw_offset_deg: f64,
}

impl LensProfile {
    pub fn new(
        fov_deg: f64,
        circle_center: (f64, f64),
        circle_radius: f64,
        falloff: FalloffPolynomial,
        yaw_offset_deg: f64,
    ) -> Result<Self> {
        if !(fov_deg > 180.0 && fov_deg < 220.0) {
            return Err(Error::BadProfile(format!(
                "field of view {fov_deg} outside (180, 220)"
            )));
        }
        if !(circle_radius > 0.0) {
            return Err(Error::BadProfile("circle radius must be positive".into()));
        }
        falloff.check_positive(circle_radius)?;
        Ok(LensProfile {
            fov_deg,
            circle_center,
            circle_radius,
            falloff,
            yaw_offset_deg,
        })
    }

    /// Checks that the fisheye circle lies inside a `size x size` half-frame.
    pub fn check_fits(&self, size: usize) -> Result<()> {
        let lo = -0.5 - 1e-9;
        let hi = size as f64 - 0.5 + 1e-9;
        let (cx, cy) = self.circle_center;
        let r = self.circle_radius;
        if cx - r < lo || cy - r < lo || cx + r > hi || cy + r > hi {
            return Err(Error::BadProfile(format!(
                "fisheye circle (center ({cx}, {cy}), radius {r}) exceeds the {size}x{size} half-frame"
            )));
        }
        Ok(())
    }
}

/// Equirectangular canvas produced by unwarping one lens: a 2:1 image whose
/// mask is true exactly where the lens covers the viewing direction.
#[derive(Debug, Clone, PartialEq)]
pub struct EquirectCanvas {
    image: ImageBuffer,
}

impl EquirectCanvas {
    pub fn new(image: ImageBuffer) -> Result<Self> {
        if image.width() != 2 * image.height() {
            return Err(Error::InvalidInput(format!(
                "equirect canvas must be 2:1, got {}x{}",
                image.width(),
                image.height()
            )));
        }
        Ok(EquirectCanvas { image })
    }

    pub fn image(&self) -> &ImageBuffer {
        &self.image
    }

    pub fn into_image(self) -> ImageBuffer {
        self.image
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    /// Warps the canvas by an affine transform, respecting the horizontal
    /// periodicity of the equirectangular domain: source lookups wrap around
    /// the +-180 degree seam instead of being cut off at the canvas edge.
    pub fn warp_wrapped(&self, transform: &AffineTransform2D) -> Result<EquirectCanvas> {
        let warped = warp_affine_border(
            &self.image,
            transform,
            self.width(),
            self.height(),
            BorderPolicy::WrapX,
        )?;
        Ok(EquirectCanvas { image: warped })
    }
}

/// Yaw (degrees in [-180, 180)) at the center of column `col`.
pub fn yaw_of_col(col: f64, pano_w: usize) -> f64 {
    (col + 0.5) / pano_w as f64 * 360.0 - 180.0
}

/// Pitch (degrees in [-90, 90]) at the center of row `row`.
pub fn pitch_of_row(row: f64, pano_h: usize) -> f64 {
    (row + 0.5) / pano_h as f64 * 180.0 - 90.0
}

/// Continuous column position of a yaw angle (inverse of [`yaw_of_col`]).
pub fn col_of_yaw(yaw_deg: f64, pano_w: usize) -> f64 {
    (yaw_deg + 180.0) / 360.0 * pano_w as f64 - 0.5
}

/// Continuous row position of a pitch angle (inverse of [`pitch_of_row`]).
pub fn row_of_pitch(pitch_deg: f64, pano_h: usize) -> f64 {
    (pitch_deg + 90.0) / 180.0 * pano_h as f64 - 0.5
}

/// Wraps an angle in degrees into [-180, 180).
pub fn wrap_deg(angle: f64) -> f64 {
    (angle + 180.0).rem_euclid(360.0) - 180.0
}

/// Maps a point of the lens-local equirectangular plane (`W x H`, spanning
/// the full field of view in both axes) to fisheye image coordinates.
///
/// The plane coordinates are read as yaw and pitch scaled by the field of
/// view f: `theta_s = f * (xe/W - 0.5)`, `phi_s = f * (ye/H - 0.5)`. The
/// direction on the unit sphere is
/// `P = (cos(phi_s) sin(theta_s), cos(phi_s) cos(theta_s), sin(phi_s))`,
/// the fisheye radius is `rho = (H / f) * atan2(sqrt(x^2 + z^2), y)`
/// (equidistant projection), the polar angle is `theta = atan2(z, x)`, and
/// the result is `(0.5 W + rho cos(theta), 0.5 H + rho sin(theta))`.
///
/// Returns `(xf, yf, inside)` where `inside` is true when the direction is
/// within half the field of view of the lens axis.
pub fn equirect_to_fisheye(
    xe: f64,
    ye: f64,
    plane_w: f64,
    plane_h: f64,
    fov_deg: f64,
) -> (f64, f64, bool) {
    let f = fov_deg.to_radians();
    let theta_s = f * (xe / plane_w - 0.5);
    let phi_s = f * (ye / plane_h - 0.5);
    let x = phi_s.cos() * theta_s.sin();
    let y = phi_s.cos() * theta_s.cos();
    let z = phi_s.sin();
    let off_axis = (x * x + z * z).sqrt().atan2(y);
    let rho = plane_h / f * off_axis;
    let theta = z.atan2(x);
    (
        0.5 * plane_w + rho * theta.cos(),
        0.5 * plane_h + rho * theta.sin(),
        off_axis <= f / 2.0 + 1e-12,
    )
}

/// Unwarps one vignette-compensated square half-frame into an
/// equirectangular canvas of height `pano_h` (width `2 * pano_h`).
///
/// Every panorama pixel whose direction lies within `fov/2` of the lens axis
/// is filled by projecting through [`equirect_to_fisheye`] on the lens-local
/// plane, rescaling the fisheye radius to the profile's circle, and sampling
/// the half-frame bilinearly. Pixels outside the coverage cone are masked
/// invalid.
pub fn unwarp_lens(
    halfframe: &ImageBuffer,
    lens: &LensProfile,
    pano_h: usize,
) -> Result<EquirectCanvas> {
    if halfframe.width() != halfframe.height() {
        return Err(Error::BadProfile(format!(
            "half-frame must be square, got {}x{}",
            halfframe.width(),
            halfframe.height()
        )));
    }
    let size = halfframe.width();
    lens.check_fits(size)?;

    let pano_w = 2 * pano_h;
    let s = size as f64;
    let radius_scale = lens.circle_radius / (s / 2.0);
    let channels = halfframe.channels();
    let mut out = ImageBuffer::new(pano_w, pano_h, channels);
    let mut mask = vec![false; pano_w * pano_h];

    out.data_mut()
        .par_chunks_mut(pano_w * channels)
        .zip(mask.par_chunks_mut(pano_w))
        .enumerate()
        .for_each(|(row, (out_row, mask_row))| {
            let pitch = pitch_of_row(row as f64, pano_h);
            let ye = s * (pitch / lens.fov_deg + 0.5);
            let mut px = [0.0f32; 3];
            for col in 0..pano_w {
                let local_yaw = wrap_deg(yaw_of_col(col as f64, pano_w) - lens.yaw_offset_deg);
                let xe = s * (local_yaw / lens.fov_deg + 0.5);
                let (xf, yf, inside) = equirect_to_fisheye(xe, ye, s, s, lens.fov_deg);
                if !inside {
                    continue;
                }
                let sx = lens.circle_center.0 + (xf - s / 2.0) * radius_scale;
                let sy = lens.circle_center.1 + (yf - s / 2.0) * radius_scale;
                let ok =
                    halfframe.sample_bilinear(sx, sy, BorderPolicy::Masked, &mut px[..channels]);
                if ok {
                    out_row[col * channels..(col + 1) * channels]
                        .copy_from_slice(&px[..channels]);
                    mask_row[col] = true;
                }
            }
        });

    out.set_mask(mask);
    EquirectCanvas::new(out)
}

/// Which of the two overlap bands: left (yaw -90) or right (yaw +90).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandSide {
    Left,
    Right,
}

/// One column band of the panorama.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Band {
    pub start: usize,
    pub width: usize,
}

impl Band {
    pub fn cols(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.width
    }

    pub fn center(&self) -> f64 {
        self.start as f64 + (self.width as f64 - 1.0) / 2.0
    }
}

/// The two column bands where both lenses cover the scene: one centered at
/// yaw -90 (left), one at yaw +90 (right), each `fov - 180` degrees wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapSpec {
    pub left: Band,
    pub right: Band,
}

impl OverlapSpec {
    pub fn band_width(&self) -> usize {
        self.left.width
    }
}

/// Computes the overlap bands for a lens field of view on a panorama of
/// width `pano_w`. The band width is `round(pano_w * (fov - 180) / 360)`;
/// fields of view at or below 180 degrees (or too narrow to make a 1-pixel
/// band) yield [`Error::NoOverlap`].
pub fn compute_overlaps(fov_deg: f64, pano_w: usize) -> Result<OverlapSpec> {
    if fov_deg <= 180.0 {
        return Err(Error::NoOverlap { fov_deg });
    }
    let n = (pano_w as f64 * (fov_deg - 180.0) / 360.0).round() as i64;
    if n < 1 {
        return Err(Error::NoOverlap { fov_deg });
    }
    let n = n as usize;
    let band_at = |yaw: f64| -> Band {
        let center = col_of_yaw(yaw, pano_w);
        let start = (center - (n as f64 - 1.0) / 2.0).round() as usize;
        Band { start, width: n }
    };
    Ok(OverlapSpec {
        left: band_at(-90.0),
        right: band_at(90.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn plane_center_maps_to_circle_center() {
        let (xf, yf, inside) = equirect_to_fisheye(256.0, 256.0, 512.0, 512.0, 193.0);
        assert_relative_eq!(xf, 256.0, epsilon = 1e-9);
        assert_relative_eq!(yf, 256.0, epsilon = 1e-9);
        assert!(inside);
    }

    #[test]
    fn plane_right_edge_maps_to_circle_right_edge() {
        // theta_s = f/2, phi_s = 0 => rho = H/2, theta = 0
        let (xf, yf, inside) = equirect_to_fisheye(512.0, 256.0, 512.0, 512.0, 193.0);
        assert_relative_eq!(xf, 256.0 + 256.0, epsilon = 1e-9);
        assert_relative_eq!(yf, 256.0, epsilon = 1e-9);
        assert!(inside);
    }

    #[test]
    fn plane_top_center_maps_to_circle_top() {
        // phi_s = -f/2 => rho = H/2, theta = -90 degrees
        let (xf, yf, inside) = equirect_to_fisheye(256.0, 0.0, 512.0, 512.0, 193.0);
        assert_relative_eq!(xf, 256.0, epsilon = 1e-9);
        assert_relative_eq!(yf, 0.0, epsilon = 1e-9);
        assert!(inside);
    }

    #[test]
    fn mapping_is_continuous_away_from_center() {
        // adjacent plane pixels never jump more than 2 px in the fisheye
        let s = 256.0;
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=256 {
            let xe = i as f64;
            let (xf, yf, inside) = equirect_to_fisheye(xe, 100.0, s, s, 193.0);
            if !inside {
                prev = None;
                continue;
            }
            if let Some((px, py)) = prev {
                let d = ((xf - px).powi(2) + (yf - py).powi(2)).sqrt();
                assert!(d <= 2.0, "jump of {d} px at xe={xe}");
            }
            prev = Some((xf, yf));
        }
    }

    #[test]
    fn overlap_bands_for_reference_fov() {
        let spec = compute_overlaps(193.0, 1024).unwrap();
        assert_eq!(spec.band_width(), 37);
        // centered on yaw -90 / +90 within half a column
        assert!((yaw_of_col(spec.left.center(), 1024) + 90.0).abs() < 0.5);
        assert!((yaw_of_col(spec.right.center(), 1024) - 90.0).abs() < 0.5);
    }

    #[test]
    fn overlap_band_20deg() {
        let spec = compute_overlaps(200.0, 720).unwrap();
        assert_eq!(spec.band_width(), 40);
    }

    #[test]
    fn no_overlap_below_one_pixel() {
        assert!(matches!(
            compute_overlaps(180.0001, 1024),
            Err(Error::NoOverlap { .. })
        ));
        assert!(matches!(
            compute_overlaps(179.0, 1024),
            Err(Error::NoOverlap { .. })
        ));
    }

    fn test_lens(fov: f64, yaw_offset: f64) -> LensProfile {
        LensProfile::new(
            fov,
            (127.5, 127.5),
            128.0,
            FalloffPolynomial::unity(),
            yaw_offset,
        )
        .unwrap()
    }

    #[test]
    fn constant_halfframe_unwarps_to_constant_canvas() {
        let half = ImageBuffer::from_fn(256, 256, |_, _| 0.42);
        let canvas = unwarp_lens(&half, &test_lens(193.0, 0.0), 128).unwrap();
        for y in 0..canvas.height() {
            for x in 0..canvas.width() {
                if canvas.image().is_valid(x, y) {
                    assert_eq!(canvas.image().pixel(x, y)[0], 0.42);
                }
            }
        }
    }

    #[test]
    fn masks_cover_sphere_and_intersect_in_bands() {
        let half = ImageBuffer::from_fn(256, 256, |_, _| 0.5);
        let front = unwarp_lens(&half, &test_lens(193.0, 0.0), 128).unwrap();
        let rear = unwarp_lens(&half, &test_lens(193.0, 180.0), 128).unwrap();
        let spec = compute_overlaps(193.0, 256).unwrap();

        let mut holes = 0usize;
        for y in 0..128 {
            for x in 0..256 {
                if !front.image().is_valid(x, y) && !rear.image().is_valid(x, y) {
                    holes += 1;
                }
            }
        }
        assert_eq!(holes, 0, "mask union must cover the sphere");

        // near the equator the mask intersection is exactly the two bands
        // (within one column of quantization); toward the poles both lenses
        // see past the band columns so only equatorial rows are checked
        let rows = 48..80;
        for y in rows {
            for x in 0..256 {
                let both = front.image().is_valid(x, y) && rear.image().is_valid(x, y);
                let in_left = spec.left.cols().contains(&x);
                let in_right = spec.right.cols().contains(&x);
                let near_band = (spec.left.start.saturating_sub(1)
                    ..=spec.left.start + spec.left.width)
                    .contains(&x)
                    || (spec.right.start.saturating_sub(1)..=spec.right.start + spec.right.width)
                        .contains(&x);
                if both && !(in_left || in_right) {
                    assert!(near_band, "unexpected overlap at col {x}, row {y}");
                }
                if (in_left || in_right) && !both {
                    assert!(near_band, "missing overlap at col {x}, row {y}");
                }
            }
        }
    }

    #[test]
    fn valid_span_matches_fov_fraction() {
        let half = ImageBuffer::from_fn(256, 256, |_, _| 0.5);
        let front = unwarp_lens(&half, &test_lens(193.0, 0.0), 256).unwrap();
        let w = front.width();
        let equator = front.height() / 2;
        let valid_cols = (0..w)
            .filter(|&x| front.image().is_valid(x, equator))
            .count();
        let expected = (w as f64 * 193.0 / 360.0).round() as usize;
        assert!(
            (valid_cols as i64 - expected as i64).abs() <= 2,
            "valid {valid_cols} vs expected {expected}"
        );
    }

    #[test]
    fn circle_exceeding_frame_is_rejected() {
        let lens = LensProfile::new(
            193.0,
            (127.5, 127.5),
            200.0,
            FalloffPolynomial::unity(),
            0.0,
        )
        .unwrap();
        let half = ImageBuffer::from_fn(256, 256, |_, _| 0.5);
        assert!(matches!(
            unwarp_lens(&half, &lens, 128),
            Err(Error::BadProfile(_))
        ));
    }

    #[test]
    fn wrapped_warp_carries_content_across_seam() {
        // content near the -180/+180 seam survives a translation that a
        // plain warp would clip at the canvas edge
        let mut img = ImageBuffer::from_fn(32, 16, |x, y| ((x * 7 + y * 3) % 11) as f32 / 11.0);
        img.set_mask(vec![true; 32 * 16]);
        let canvas = EquirectCanvas::new(img).unwrap();
        let t = AffineTransform2D::translation(3.0, 0.0);
        let warped = canvas.warp_wrapped(&t).unwrap();
        for y in 0..16 {
            for x in 0..32usize {
                // wrapped source column
                let src = (x + 32 - 3) % 32;
                assert!(warped.image().is_valid(x, y), "invalid at {x},{y}");
                assert_relative_eq!(
                    warped.image().pixel(x, y)[0],
                    canvas.image().pixel(src, y)[0],
                    epsilon = 1e-6
                );
            }
        }
    }
}
