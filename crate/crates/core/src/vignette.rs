//! Radial intensity fall-off: polynomial model, measurement, fitting, and
//! compensation.
//!
//! The fall-off of each fisheye lens is modeled as a polynomial gain
//! `p(x) = p1*x^n + p2*x^(n-1) + ... + p(n+1)` of the radius `x` in pixels
//! from the lens center, normalized so the gain is ~1 at the center.
//! Compensation divides each pixel by the local gain.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

/// Upper bound applied to the compensation factor `1 / p(r)` so noise at the
/// extreme periphery cannot blow up.
pub const MAX_COMPENSATION_GAIN: f32 = 4.0;

/// Polynomial gain curve, coefficients stored highest degree first.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FalloffPolynomial {
    coeffs: Vec<f64>,
}

impl FalloffPolynomial {
    /// Builds a fall-off polynomial. The constant term (gain at radius 0)
    /// must be in `(0, 1.2]`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidInput(
                "fall-off polynomial needs degree >= 1 (at least 2 coefficients)".into(),
            ));
        }
        let center = *coeffs.last().unwrap();
        if !(center > 0.0 && center <= 1.2) || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "center gain {center} outside (0, 1.2] or non-finite coefficients"
            )));
        }
        Ok(FalloffPolynomial { coeffs })
    }

    /// Gain 1 everywhere (degree 1 with a zero leading coefficient).
    pub fn unity() -> Self {
        FalloffPolynomial {
            coeffs: vec![0.0, 1.0],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Horner evaluation of the gain at radius `r` (pixels).
    pub fn eval(&self, r: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * r + c)
    }

    /// Checks `p > 0` over `[0, r_max]` by dense sampling; required before the
    /// polynomial may be used as a divisor on a lens of that radius.
    pub fn check_positive(&self, r_max: f64) -> Result<()> {
        let steps = 4096;
        for i in 0..=steps {
            let r = r_max * i as f64 / steps as f64;
            if self.eval(r) <= 0.0 {
                return Err(Error::BadProfile(format!(
                    "fall-off polynomial is non-positive at radius {r:.1}"
                )));
            }
        }
        Ok(())
    }
}

/// Measured fall-off curve: `(radius_px, normalized mean intensity)` samples
/// with strictly increasing radii.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    samples: Vec<(f64, f64)>,
}

impl RadialProfile {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidInput("profile radii must strictly increase".into()));
        }
        if samples.iter().any(|&(_, v)| !(v > 0.0 && v <= 1.5)) {
            return Err(Error::InvalidInput(
                "profile intensities must lie in (0, 1.5]".into(),
            ));
        }
        Ok(RadialProfile { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Writes the profile as CSV: `radius_px,intensity` header plus one row
    /// per sample.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "radius_px,intensity")?;
        for &(r, v) in &self.samples {
            writeln!(w, "{r},{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut samples = Vec::new();
        for record in reader.records() {
            let record = record?;
            let radius: f64 = record
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidInput("bad radius field".into()))?;
            let intensity: f64 = record
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidInput("bad intensity field".into()))?;
            samples.push((radius, intensity));
        }
        RadialProfile::new(samples)
    }
}

/// Measures the radial intensity profile of a single-channel image around
/// `center`, out to `r_max`, using `n_bins` equal-width annuli.
///
/// Each bin reports the mean radius of its pixels and the mean intensity,
/// normalized so the innermost bin reads 1.0. Masked-invalid pixels are
/// skipped. Fails with [`Error::EmptyBin`] if any bin receives no pixels.
pub fn measure_radial_profile(
    img: &ImageBuffer,
    center: (f64, f64),
    r_max: f64,
    n_bins: usize,
) -> Result<RadialProfile> {
    if img.channels() != 1 {
        return Err(Error::InvalidInput(
            "measure_radial_profile expects a single-channel image (use to_luma)".into(),
        ));
    }
    if n_bins < 8 {
        return Err(Error::InvalidInput("need at least 8 bins".into()));
    }
    let bin_width = r_max / n_bins as f64;
    let mut count = vec![0u64; n_bins];
    let mut radius_sum = vec![0.0f64; n_bins];
    let mut value_sum = vec![0.0f64; n_bins];

    for y in 0..img.height() {
        for x in 0..img.width() {
            if !img.is_valid(x, y) {
                continue;
            }
            let r = ((x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2)).sqrt();
            if r > r_max {
                continue;
            }
            let bin = ((r / bin_width) as usize).min(n_bins - 1);
            count[bin] += 1;
            radius_sum[bin] += r;
            value_sum[bin] += img.pixel(x, y)[0] as f64;
        }
    }

    if let Some(bin) = count.iter().position(|&c| c == 0) {
        return Err(Error::EmptyBin { bin });
    }

    let center_mean = value_sum[0] / count[0] as f64;
    if center_mean <= 0.0 {
        return Err(Error::InvalidInput("center intensity is not positive".into()));
    }
    let samples = (0..n_bins)
        .map(|i| {
            (
                radius_sum[i] / count[i] as f64,
                (value_sum[i] / count[i] as f64) / center_mean,
            )
        })
        .collect();
    RadialProfile::new(samples)
}

/// Least-squares polynomial fit of a radial profile.
///
/// Radii are rescaled to `[0, 1]` before building the Vandermonde system so
/// high-degree fits stay well conditioned, then the coefficients are mapped
/// back to pixel units. Returns the polynomial and the RMS residual.
pub fn fit_falloff(profile: &RadialProfile, degree: usize) -> Result<(FalloffPolynomial, f64)> {
    let samples = profile.samples();
    if degree < 1 {
        return Err(Error::InvalidInput("fit degree must be >= 1".into()));
    }
    if samples.len() < degree + 1 {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot determine a degree-{degree} polynomial",
            samples.len()
        )));
    }

    let scale = samples
        .iter()
        .map(|&(r, _)| r.abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let n = samples.len();
    let cols = degree + 1;
    let mut design = DMatrix::zeros(n, cols);
    let mut rhs = DMatrix::zeros(n, 1);
    for (i, &(r, v)) in samples.iter().enumerate() {
        let x = r / scale;
        let mut pow = 1.0;
        // column j holds x^(degree - j): highest degree first
        for j in (0..cols).rev() {
            design[(i, j)] = pow;
            pow *= x;
        }
        rhs[(i, 0)] = v;
    }

    let svd = design.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    if !(max_sv > 0.0) || svd.singular_values.min() < max_sv * 1e-13 {
        return Err(Error::IllConditioned("design matrix is numerically singular".into()));
    }
    let solution = svd
        .solve(&rhs, max_sv * 1e-13)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;

    let mut coeffs = Vec::with_capacity(cols);
    for j in 0..cols {
        let power = (degree - j) as i32;
        coeffs.push(solution[(j, 0)] / scale.powi(power));
    }

    let poly = FalloffPolynomial::new(coeffs)?;
    let rss: f64 = samples
        .iter()
        .map(|&(r, v)| (poly.eval(r) - v).powi(2))
        .sum();
    let rms = (rss / n as f64).sqrt();
    if !rms.is_finite() {
        return Err(Error::IllConditioned("fit residual is not finite".into()));
    }
    Ok((poly, rms))
}

/// Divides every pixel by the local gain `p(|pos - center|)`, the same scalar
/// for all channels. The correction factor is clamped to
/// [`MAX_COMPENSATION_GAIN`]; the mask is preserved.
pub fn compensate(img: &ImageBuffer, poly: &FalloffPolynomial, center: (f64, f64)) -> ImageBuffer {
    scale_by_falloff(img, poly, center, true)
}

/// Multiplies every pixel by the local gain `p(|pos - center|)` — the forward
/// model of the fall-off, used by the synthetic renderer.
pub fn attenuate(img: &ImageBuffer, poly: &FalloffPolynomial, center: (f64, f64)) -> ImageBuffer {
    scale_by_falloff(img, poly, center, false)
}

fn scale_by_falloff(
    img: &ImageBuffer,
    poly: &FalloffPolynomial,
    center: (f64, f64),
    invert: bool,
) -> ImageBuffer {
    let mut out = img.clone();
    let (w, channels) = (img.width(), img.channels());
    out.data_mut()
        .par_chunks_mut(w * channels)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let r = ((x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2)).sqrt();
                let p = poly.eval(r);
                let gain = if invert {
                    (1.0 / p as f32).min(MAX_COMPENSATION_GAIN)
                } else {
                    p as f32
                };
                for c in 0..channels {
                    let v = &mut row[x * channels + c];
                    *v = (*v * gain).clamp(0.0, 4.0);
                }
            }
        });
    out
}

/// The vignetting coefficients of the reference camera, degree 5, highest
/// degree first, radius in pixels of the full-resolution half-frame.
pub fn reference_falloff() -> FalloffPolynomial {
    FalloffPolynomial::new(vec![
        -7.5625e-17,
        1.9589e-13,
        -1.8547e-10,
        6.1997e-8,
        -6.9432e-5,
        0.9976,
    ])
    .expect("reference coefficients are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_poly_center_value() {
        let p = reference_falloff();
        assert_relative_eq!(p.eval(0.0), 0.9976, epsilon = 1e-15);
    }

    #[test]
    fn unity_poly_is_one_everywhere() {
        let p = FalloffPolynomial::unity();
        for r in [0.0, 1.0, 57.5, 1e4] {
            assert_eq!(p.eval(r), 1.0);
        }
    }

    #[test]
    fn reference_poly_at_1500px_matches_independent_horner() {
        // frozen from an independent Horner evaluation of the same coefficients
        let expected = 0.8243997812500001_f64;
        let p = reference_falloff();
        assert_relative_eq!(p.eval(1500.0), expected, max_relative = 1e-12);
    }

    #[test]
    fn reference_poly_is_monotone_decreasing_to_rim() {
        let p = reference_falloff();
        let r_max = 1944.0;
        let mut prev = f64::INFINITY;
        for i in 0..=2000 {
            let v = p.eval(r_max * i as f64 / 2000.0);
            assert!(v < prev, "gain increased at step {i}");
            assert!(v > 0.0);
            prev = v;
        }
        assert!(p.eval(r_max) < p.eval(0.0));
        p.check_positive(r_max).unwrap();
    }

    #[test]
    fn constructor_rejects_bad_center_gain() {
        assert!(FalloffPolynomial::new(vec![0.0, 0.0]).is_err());
        assert!(FalloffPolynomial::new(vec![0.0, 1.3]).is_err());
        assert!(FalloffPolynomial::new(vec![1.0]).is_err());
    }

    #[test]
    fn profile_of_uniform_image_is_flat() {
        let img = ImageBuffer::from_fn(101, 101, |_, _| 0.5);
        let profile = measure_radial_profile(&img, (50.0, 50.0), 50.0, 10).unwrap();
        for &(_, v) in profile.samples() {
            assert_relative_eq!(v, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn profile_of_linear_falloff_matches_the_line() {
        let r_max = 200.0;
        let img = ImageBuffer::from_fn(401, 401, |x, y| {
            let r = ((x as f64 - 200.0).powi(2) + (y as f64 - 200.0).powi(2)).sqrt();
            (1.0 - 0.3 * r / r_max) as f32
        });
        let n_bins = 40;
        let profile = measure_radial_profile(&img, (200.0, 200.0), r_max, n_bins).unwrap();

        // independent expectation: brute-force per-bin means from the same
        // formula, normalized the same way
        let bin_width = r_max / n_bins as f64;
        let mut sums = vec![(0.0f64, 0.0f64, 0u64); n_bins];
        for y in 0..401usize {
            for x in 0..401usize {
                let r = ((x as f64 - 200.0).powi(2) + (y as f64 - 200.0).powi(2)).sqrt();
                if r > r_max {
                    continue;
                }
                let b = ((r / bin_width) as usize).min(n_bins - 1);
                sums[b].0 += r;
                sums[b].1 += (1.0 - 0.3 * r / r_max) as f32 as f64;
                sums[b].2 += 1;
            }
        }
        let norm = sums[0].1 / sums[0].2 as f64;
        for (i, &(rs, vs, n)) in sums.iter().enumerate() {
            let (r, v) = profile.samples()[i];
            assert_relative_eq!(r, rs / n as f64, epsilon = 1e-9);
            assert_relative_eq!(v, (vs / n as f64) / norm, epsilon = 1e-3);
            // the profile follows the generating line evaluated at the bin's
            // mean radius (up to the innermost-bin normalization)
            assert_relative_eq!(v * norm, 1.0 - 0.3 * r / r_max, epsilon = 1e-3);
        }
    }

    #[test]
    fn profile_of_reference_falloff_reproduces_curve() {
        let p = reference_falloff();
        let size = 801usize;
        let center = 400.0;
        let r_max = 400.0;
        // radius scaled so the curve spans the same range as a full-res lens
        let scale = 1900.0 / r_max;
        let img = ImageBuffer::from_fn(size, size, |x, y| {
            let r = ((x as f64 - center).powi(2) + (y as f64 - center).powi(2)).sqrt();
            p.eval(r * scale) as f32
        });
        // bins fine enough that the innermost bin's mean radius is ~0 and
        // the normalization reference is effectively p(0)
        let profile = measure_radial_profile(&img, (center, center), r_max, 160).unwrap();
        for &(r, v) in profile.samples() {
            assert_relative_eq!(v, p.eval(r * scale) / p.eval(0.0), epsilon = 1e-3);
        }
    }

    #[test]
    fn empty_bin_is_reported() {
        // a tiny image cannot populate 64 annuli out to radius 100
        let img = ImageBuffer::from_fn(9, 9, |_, _| 0.5);
        let err = measure_radial_profile(&img, (4.0, 4.0), 100.0, 64).unwrap_err();
        assert!(matches!(err, Error::EmptyBin { .. }));
    }

    #[test]
    fn fit_recovers_known_cubic() {
        let truth = FalloffPolynomial::new(vec![-2e-9, 3e-6, -1e-3, 1.0]).unwrap();
        let samples: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let r = i as f64 * 10.0;
                (r, truth.eval(r))
            })
            .collect();
        let profile = RadialProfile::new(samples).unwrap();
        let (fit, rms) = fit_falloff(&profile, 3).unwrap();
        for (a, b) in fit.coeffs().iter().zip(truth.coeffs()) {
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
        assert!(rms < 1e-9);
    }

    #[test]
    fn fit_of_constant_profile_is_flat_line() {
        let samples: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 5.0, 1.0)).collect();
        let profile = RadialProfile::new(samples).unwrap();
        let (fit, _) = fit_falloff(&profile, 1).unwrap();
        assert_relative_eq!(fit.coeffs()[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(fit.coeffs()[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn fit_recovers_reference_constant_term() {
        let p = reference_falloff();
        let samples: Vec<(f64, f64)> = (0..96)
            .map(|i| {
                let r = 1900.0 * i as f64 / 95.0;
                (r, p.eval(r))
            })
            .collect();
        let profile = RadialProfile::new(samples).unwrap();
        let (fit, _) = fit_falloff(&profile, 5).unwrap();
        let p6 = *fit.coeffs().last().unwrap();
        assert!((0.9975..=0.9977).contains(&p6), "p6 = {p6}");
    }

    #[test]
    fn fit_needs_enough_samples() {
        let profile = RadialProfile::new(vec![(0.0, 1.0), (1.0, 0.9)]).unwrap();
        assert!(fit_falloff(&profile, 3).is_err());
    }

    #[test]
    fn compensate_with_unity_is_identity() {
        let img = ImageBuffer::from_fn(32, 32, |x, y| ((x + y) % 7) as f32 / 7.0);
        let out = compensate(&img, &FalloffPolynomial::unity(), (16.0, 16.0));
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn compensate_divides_center_by_reference_gain() {
        let img = ImageBuffer::from_fn(11, 11, |_, _| 0.5);
        let out = compensate(&img, &reference_falloff(), (5.0, 5.0));
        assert_relative_eq!(out.pixel(5, 5)[0], 0.5 / 0.9976, max_relative = 1e-6);
    }

    #[test]
    fn attenuate_then_compensate_round_trips() {
        let size = 401usize;
        let center = (200.0, 200.0);
        // radius scaled into the full-res range where the reference curve lives
        let scaled = {
            let p = reference_falloff();
            let scale: f64 = 1900.0 / 200.0;
            let mut coeffs = p.coeffs().to_vec();
            let n = coeffs.len() - 1;
            for (j, c) in coeffs.iter_mut().enumerate() {
                *c *= scale.powi((n - j) as i32);
            }
            FalloffPolynomial::new(coeffs).unwrap()
        };
        let img = ImageBuffer::from_fn(size, size, |_, _| 0.8);
        let dimmed = attenuate(&img, &scaled, center);
        let restored = compensate(&dimmed, &scaled, center);
        let mut se = 0.0f64;
        let mut n = 0u64;
        for y in 0..size {
            for x in 0..size {
                let r = ((x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2)).sqrt();
                if r <= 200.0 {
                    let d = restored.pixel(x, y)[0] as f64 - 0.8;
                    se += d * d;
                    n += 1;
                }
            }
        }
        let rms = (se / n as f64).sqrt() / 0.8;
        assert!(rms < 5e-3, "round-trip rms {rms}");
    }
}
