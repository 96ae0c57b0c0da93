//! Forward renderer: fabricates dual-fisheye captures from a ground-truth
//! equirectangular panorama.
//!
//! This inverts the unwarping chain — each fisheye pixel is traced to a
//! viewing direction and the panorama is sampled there — and can inject the
//! defects the pipeline is supposed to undo: a canvas-space misalignment of
//! the rear lens, radial fall-off, per-lens exposure error, and Gaussian
//! noise. Because every defect is known exactly, rendered frames serve as
//! ground truth for quantitative verification of the whole stitcher.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::buffer::{BorderPolicy, ImageBuffer};
use crate::error::{Error, Result};
use crate::unwarp::{col_of_yaw, row_of_pitch, wrap_deg, LensProfile};
use crate::vignette::FalloffPolynomial;
use crate::warp::AffineTransform2D;

/// Which half of the dual-fisheye frame a lens writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LensSide {
    Front,
    Rear,
}

/// Per-lens exposure error applied after sampling: `v -> gain * v + bias`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exposure {
    pub gain: f64,
    pub bias: f64,
}

impl Default for Exposure {
    fn default() -> Self {
        Exposure {
            gain: 1.0,
            bias: 0.0,
        }
    }
}

/// Knobs of the synthetic capture.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub fov_deg: f64,
    pub halfframe_size: usize,
    /// Canvas-space misalignment of the rear lens: the rendered rear canvas
    /// observes the scene at coordinates transformed by this matrix, so a
    /// perfect refinement step recovers exactly this transform.
    pub misalign: AffineTransform2D,
    /// Radial fall-off applied to each half-frame (none = ideal lens).
    pub vignette: Option<FalloffPolynomial>,
    pub front_exposure: Exposure,
    pub rear_exposure: Exposure,
    /// Standard deviation of per-pixel Gaussian noise (0 = clean).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            fov_deg: 193.0,
            halfframe_size: 512,
            misalign: AffineTransform2D::IDENTITY,
            vignette: None,
            front_exposure: Exposure::default(),
            rear_exposure: Exposure::default(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// The lens profile matching one rendered half-frame: circle centered in
    /// the square half, radius half the frame size, fall-off as injected.
    pub fn lens_profile(&self, side: LensSide) -> Result<LensProfile> {
        let s = self.halfframe_size as f64;
        LensProfile::new(
            self.fov_deg,
            ((s - 1.0) / 2.0, (s - 1.0) / 2.0),
            s / 2.0,
            self.vignette
                .clone()
                .unwrap_or_else(FalloffPolynomial::unity),
            match side {
                LensSide::Front => 0.0,
                LensSide::Rear => 180.0,
            },
        )
    }

    fn exposure(&self, side: LensSide) -> Exposure {
        match side {
            LensSide::Front => self.front_exposure,
            LensSide::Rear => self.rear_exposure,
        }
    }
}

/// Deterministic per-pixel noise: a fresh generator keyed by (seed, lens,
/// sample index), so parallel row order cannot perturb results.
fn noise_at(seed: u64, lens: u64, index: u64, sigma: f64) -> f32 {
    let mut key = seed ^ lens.rotate_left(17) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix-style avalanche
    key = (key ^ (key >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    key = (key ^ (key >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    let normal = Normal::new(0.0, sigma).expect("sigma must be finite");
    normal.sample(&mut rng) as f32
}

/// Renders one fisheye half-frame from the panorama.
///
/// Each pixel inside the fisheye circle is traced: radius -> off-axis angle
/// (equidistant model), polar angle -> direction, direction -> yaw/pitch ->
/// panorama coordinates (misaligned by the configured transform for the
/// rear lens), sampled bilinearly with horizontal wrap. A 2-pixel ring past
/// the circle edge is filled by clamping the off-axis angle so rim pixels
/// interpolate real content; everything further out is black.
pub fn render_lens(pano: &ImageBuffer, cfg: &SynthConfig, side: LensSide) -> Result<ImageBuffer> {
    if pano.width() != 2 * pano.height() {
        return Err(Error::InvalidInput(format!(
            "panorama must be 2:1, got {}x{}",
            pano.width(),
            pano.height()
        )));
    }
    if !cfg.misalign.is_invertible() {
        return Err(Error::SingularTransform);
    }
    let lens = cfg.lens_profile(side)?;
    let size = cfg.halfframe_size;
    let (cx, cy) = lens.circle_center;
    let radius = lens.circle_radius;
    let half_fov = lens.fov_deg.to_radians() / 2.0;
    let exposure = cfg.exposure(side);
    let channels = pano.channels();
    let (pano_w, pano_h) = (pano.width(), pano.height());
    let lens_index = match side {
        LensSide::Front => 0u64,
        LensSide::Rear => 1u64,
    };

    let mut out = ImageBuffer::new(size, size, channels);
    out.data_mut()
        .par_chunks_mut(size * channels)
        .enumerate()
        .for_each(|(y, row)| {
            let mut px = [0.0f32; 3];
            for x in 0..size {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                let rho = (dx * dx + dy * dy).sqrt();
                if rho > radius + 2.0 {
                    continue; // black corners outside the image circle
                }
                let rho_in = rho.min(radius);
                let off_axis = rho_in / radius * half_fov;
                let theta = dy.atan2(dx);

                // direction in the lens frame (axis = +y)
                let (sw, cw) = (off_axis.sin(), off_axis.cos());
                let dir = (sw * theta.cos(), cw, sw * theta.sin());

                let pitch = dir.2.asin().to_degrees();
                let local_yaw = dir.0.atan2(dir.1).to_degrees();
                let yaw = wrap_deg(local_yaw + lens.yaw_offset_deg);

                let mut col = col_of_yaw(yaw, pano_w);
                let mut prow = row_of_pitch(pitch, pano_h);
                if side == LensSide::Rear {
                    let (mc, mr) = cfg.misalign.apply(col, prow);
                    col = mc;
                    prow = mr;
                }
                pano.sample_bilinear(col, prow, BorderPolicy::WrapX, &mut px[..channels]);

                let gain = cfg
                    .vignette
                    .as_ref()
                    .map(|p| p.eval(rho_in) as f32)
                    .unwrap_or(1.0);
                for c in 0..channels {
                    let mut v = px[c] * gain;
                    v = (exposure.gain as f32) * v + exposure.bias as f32;
                    if cfg.noise_sigma > 0.0 {
                        let index = ((y * size + x) * channels + c) as u64;
                        v += noise_at(cfg.seed, lens_index, index, cfg.noise_sigma);
                    }
                    row[x * channels + c] = v;
                }
            }
        });
    Ok(out)
}

/// Renders the side-by-side dual-fisheye frame (front left, rear right) from
/// a single panorama.
pub fn render_dual(pano: &ImageBuffer, cfg: &SynthConfig) -> Result<ImageBuffer> {
    render_dual_pair(pano, pano, cfg)
}

/// [`render_dual`] with separate scenes per lens, for injecting view-local
/// content differences such as a near-camera occluder.
pub fn render_dual_pair(
    pano_front: &ImageBuffer,
    pano_rear: &ImageBuffer,
    cfg: &SynthConfig,
) -> Result<ImageBuffer> {
    if pano_front.channels() != pano_rear.channels() {
        return Err(Error::InvalidInput("panorama channel counts differ".into()));
    }
    let front = render_lens(pano_front, cfg, LensSide::Front)?;
    let rear = render_lens(pano_rear, cfg, LensSide::Rear)?;
    let size = cfg.halfframe_size;
    let channels = front.channels();
    let mut out = ImageBuffer::new(2 * size, size, channels);
    for y in 0..size {
        for x in 0..size {
            out.pixel_mut(x, y).copy_from_slice(front.pixel(x, y));
            out.pixel_mut(size + x, y).copy_from_slice(rear.pixel(x, y));
        }
    }
    Ok(out)
}

/// Smooth procedural test scene: a soft checker and gradient evaluated as a
/// function of the viewing direction, 3 channels.
///
/// Because the value depends only on the direction, the scene is consistent
/// on the sphere — constant along the pole rows and periodic across the
/// +-180 seam — so rendering and unwarping it round-trips cleanly. The
/// frequencies are band-limited enough to survive two bilinear resamplings
/// yet give the correlation matcher texture in the overlap bands.
pub fn checker_gradient_pano(pano_h: usize) -> ImageBuffer {
    let w = 2 * pano_h;
    let mut img = ImageBuffer::new(w, pano_h, 3);
    for y in 0..pano_h {
        let pitch = crate::unwarp::pitch_of_row(y as f64, pano_h).to_radians();
        for x in 0..w {
            let yaw = crate::unwarp::yaw_of_col(x as f64, w).to_radians();
            let dx = pitch.cos() * yaw.sin();
            let dy = pitch.cos() * yaw.cos();
            let dz = pitch.sin();
            // soft square wave in direction space
            let sq = |t: f64| (2.5 * t.sin()).tanh();
            let checker = sq(14.0 * dx + 3.0 * dz) * sq(11.0 * dy - 2.0 * dz);
            let swirl = (8.0 * dz + 5.0 * dx).sin() * (6.0 * dy - 9.0 * dx).cos();
            let base = 0.5 + 0.17 * checker + 0.12 * swirl + 0.08 * dz;
            let p = img.pixel_mut(x, y);
            p[0] = (base + 0.05 * swirl) as f32;
            p[1] = base as f32;
            p[2] = (base - 0.04 * checker) as f32;
        }
    }
    img
}

/// Smooth random texture: a coarse random grid bilinearly upsampled, tiled
/// periodically in x. Single channel, values in [0, 1].
pub fn value_noise_pano(pano_h: usize, seed: u64, cell: usize) -> ImageBuffer {
    let w = 2 * pano_h;
    let cell = cell.max(2);
    let gw = (w + cell - 1) / cell;
    let gh = pano_h / cell + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid: Vec<f32> = (0..gw * gh)
        .map(|_| rand::Rng::random::<f32>(&mut rng))
        .collect();
    ImageBuffer::from_fn(w, pano_h, |x, y| {
        let gx = x as f32 / cell as f32;
        let gy = y as f32 / cell as f32;
        let (ix, iy) = (gx as usize, gy as usize);
        let (fx, fy) = (gx - ix as f32, gy - iy as f32);
        let at = |i: usize, j: usize| grid[(j.min(gh - 1)) * gw + i % gw];
        at(ix, iy) * (1.0 - fx) * (1.0 - fy)
            + at(ix + 1, iy) * fx * (1.0 - fy)
            + at(ix, iy + 1) * (1.0 - fx) * fy
            + at(ix + 1, iy + 1) * fx * fy
    })
}

/// Peak signal-to-noise ratio in dB (peak 1.0) over pixels valid in both
/// images. Returns infinity for identical content.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    assert_eq!(a.width(), b.width());
    assert_eq!(a.height(), b.height());
    assert_eq!(a.channels(), b.channels());
    let mut se = 0.0f64;
    let mut n = 0usize;
    for y in 0..a.height() {
        for x in 0..a.width() {
            if a.is_valid(x, y) && b.is_valid(x, y) {
                for c in 0..a.channels() {
                    let d = a.pixel(x, y)[c] as f64 - b.pixel(x, y)[c] as f64;
                    se += d * d;
                    n += 1;
                }
            }
        }
    }
    assert!(n > 0, "no jointly valid pixels");
    let mse = se / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unwarp::unwarp_lens;
    use crate::vignette::{measure_radial_profile, reference_falloff};
    use approx::assert_relative_eq;

    #[test]
    fn front_center_pixel_sees_yaw0_pitch0() {
        let pano_h = 64;
        let mut pano = ImageBuffer::new(2 * pano_h, pano_h, 1);
        // bright dot at the center of the panorama (yaw 0, pitch 0)
        let (cx, cy) = (pano_h, pano_h / 2);
        pano.pixel_mut(cx, cy)[0] = 1.0;
        pano.pixel_mut(cx - 1, cy)[0] = 1.0;
        pano.pixel_mut(cx, cy - 1)[0] = 1.0;
        pano.pixel_mut(cx - 1, cy - 1)[0] = 1.0;
        let cfg = SynthConfig {
            halfframe_size: 128,
            ..SynthConfig::default()
        };
        let frame = render_lens(&pano, &cfg, LensSide::Front).unwrap();
        let center = frame.pixel(63, 63)[0].max(frame.pixel(64, 64)[0]);
        assert!(center > 0.5, "center pixel reads {center}");
    }

    #[test]
    fn render_unwarp_round_trip_is_faithful() {
        let pano = checker_gradient_pano(256);
        let cfg = SynthConfig {
            halfframe_size: 256,
            ..SynthConfig::default()
        };
        let frame = render_lens(&pano, &cfg, LensSide::Front).unwrap();
        let lens = cfg.lens_profile(LensSide::Front).unwrap();
        let canvas = unwarp_lens(&frame, &lens, 256).unwrap();
        let db = psnr(canvas.image(), &pano);
        assert!(db >= 35.0, "round-trip psnr {db:.1} dB");
    }

    #[test]
    fn dual_frame_has_gear_layout() {
        let pano = checker_gradient_pano(64);
        let cfg = SynthConfig {
            halfframe_size: 64,
            ..SynthConfig::default()
        };
        let dual = render_dual(&pano, &cfg).unwrap();
        assert_eq!(dual.width(), 128);
        assert_eq!(dual.height(), 64);
        let front = render_lens(&pano, &cfg, LensSide::Front).unwrap();
        let rear = render_lens(&pano, &cfg, LensSide::Rear).unwrap();
        assert_eq!(dual.pixel(10, 20), front.pixel(10, 20));
        assert_eq!(dual.pixel(64 + 10, 20), rear.pixel(10, 20));
    }

    #[test]
    fn rendered_vignette_matches_injected_curve() {
        // white panorama through the reference fall-off: the measured radial
        // profile of the half-frame must reproduce p(r)/p(0)
        let pano_h = 192;
        let pano = ImageBuffer::from_fn(2 * pano_h, pano_h, |_, _| 1.0);
        let poly = {
            // rescale the reference curve into this half-frame's radius range
            let p = reference_falloff();
            let scale: f64 = 1900.0 / 192.0;
            let n = p.coeffs().len() - 1;
            let coeffs = p
                .coeffs()
                .iter()
                .enumerate()
                .map(|(j, c)| c * scale.powi((n - j) as i32))
                .collect();
            FalloffPolynomial::new(coeffs).unwrap()
        };
        let cfg = SynthConfig {
            halfframe_size: 384,
            vignette: Some(poly.clone()),
            ..SynthConfig::default()
        };
        let frame = render_lens(&pano, &cfg, LensSide::Front).unwrap();
        let profile = measure_radial_profile(&frame, (191.5, 191.5), 186.0, 96).unwrap();
        for &(r, v) in profile.samples() {
            assert_relative_eq!(v, poly.eval(r) / poly.eval(0.0), epsilon = 2e-3);
        }
    }

    #[test]
    fn seeded_noise_is_deterministic_and_seed_sensitive() {
        let pano = checker_gradient_pano(64);
        let cfg = SynthConfig {
            halfframe_size: 64,
            noise_sigma: 0.01,
            seed: 7,
            ..SynthConfig::default()
        };
        let a = render_dual(&pano, &cfg).unwrap();
        let b = render_dual(&pano, &cfg).unwrap();
        assert_eq!(a.data(), b.data());
        let c = render_dual(
            &pano,
            &SynthConfig {
                seed: 8,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn exposure_is_applied_after_vignetting() {
        let pano = ImageBuffer::from_fn(128, 64, |_, _| 0.5);
        let cfg = SynthConfig {
            halfframe_size: 64,
            rear_exposure: Exposure {
                gain: 0.8,
                bias: 0.02,
            },
            ..SynthConfig::default()
        };
        let rear = render_lens(&pano, &cfg, LensSide::Rear).unwrap();
        assert_relative_eq!(rear.pixel(31, 31)[0], 0.5 * 0.8 + 0.02, epsilon = 1e-5);
    }
}
