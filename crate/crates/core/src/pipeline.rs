//! End-to-end orchestration: split the dual frame, compensate, unwarp,
//! align, blend, and report.

use std::time::Instant;

use serde::Serialize;

use crate::align::{
    affine_residuals, estimate_affine, seam_discontinuity, two_step_align, AlignReport,
    ControlPointSet, MatchResult,
};
use crate::blend::{composite, BlendOptions};
use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::profile::CameraProfile;
use crate::unwarp::{compute_overlaps, unwarp_lens, BandSide, EquirectCanvas, OverlapSpec};
use crate::vignette::{compensate, fit_falloff, measure_radial_profile, RadialProfile};
use crate::warp::AffineTransform2D;

pub const REPORT_SCHEMA: &str = "duostitch-report/1";

/// Per-run stitching switches (profile settings provide the defaults).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StitchOptions {
    /// Run the adaptive refinement step (template matching per band).
    pub refine: bool,
    /// Override of the profile's normalized-ramp switch.
    pub normalized_ramp: Option<bool>,
    /// Override of the profile's panorama height.
    pub pano_height: Option<usize>,
}

impl Default for StitchOptions {
    fn default() -> Self {
        StitchOptions {
            refine: true,
            normalized_ramp: None,
            pano_height: None,
        }
    }
}

/// One matched window in the report.
#[derive(Debug, Clone, Serialize)]
pub struct BandReport {
    pub side: BandSide,
    pub du: i64,
    pub dv: i64,
    pub peak_gamma: f64,
    pub low_confidence: bool,
    pub template_rect: crate::align::Rect,
    pub reference_rect: crate::align::Rect,
}

/// Final seam quality per band: mean absolute front/rear difference across
/// the band center after alignment.
#[derive(Debug, Clone, Serialize)]
pub struct SeamReport {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingsReport {
    pub compensate_ms: f64,
    pub unwarp_ms: f64,
    pub align_ms: f64,
    pub blend_ms: f64,
    pub total_ms: f64,
}

/// Machine-readable account of one stitch run.
#[derive(Debug, Clone, Serialize)]
pub struct StitchReport {
    pub schema: String,
    pub pano_width: usize,
    pub pano_height: usize,
    pub refine_enabled: bool,
    pub fallback_first_step: bool,
    pub a_calib: AffineTransform2D,
    pub a_refined: AffineTransform2D,
    pub a_total: AffineTransform2D,
    pub bands: Vec<BandReport>,
    pub seam_abs_diff: SeamReport,
    pub timings: TimingsReport,
}

impl StitchReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn band_reports(report: &AlignReport) -> Vec<BandReport> {
    report
        .bands
        .iter()
        .map(|b| BandReport {
            side: b.side,
            du: b.result.displacement.0,
            dv: b.result.displacement.1,
            peak_gamma: b.result.peak_gamma,
            low_confidence: b.low_confidence,
            template_rect: b.result.template_rect,
            reference_rect: b.result.reference_rect,
        })
        .collect()
}

fn luma_of(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 3 {
        img.to_luma()
    } else {
        img.clone()
    }
}

fn seam_report(
    front: &EquirectCanvas,
    rear_aligned: &EquirectCanvas,
    overlaps: &OverlapSpec,
) -> SeamReport {
    let f = luma_of(front.image());
    let r = luma_of(rear_aligned.image());
    SeamReport {
        left: seam_discontinuity(&f, &r, &overlaps.left),
        right: seam_discontinuity(&f, &r, &overlaps.right),
    }
}

/// Splits a 2:1 dual-fisheye frame into its square halves (front, rear).
pub fn split_halves(frame: &ImageBuffer) -> Result<(ImageBuffer, ImageBuffer)> {
    if frame.width() != 2 * frame.height() || frame.height() == 0 {
        return Err(Error::AspectMismatch {
            width: frame.width(),
            height: frame.height(),
        });
    }
    let size = frame.height();
    Ok((frame.crop(0, 0, size, size), frame.crop(size, 0, size, size)))
}

/// Runs the full pipeline on a dual-fisheye frame: compensate the fall-off
/// of each half, unwarp both lenses, align the rear canvas onto the front
/// (two steps, or first step only with `refine` off), and composite the
/// panorama. Returns the panorama and a structured report.
pub fn stitch(
    frame: &ImageBuffer,
    profile: &CameraProfile,
    opts: &StitchOptions,
) -> Result<(ImageBuffer, StitchReport)> {
    let t_start = Instant::now();
    let (front_half, rear_half) = split_halves(frame).map_err(|e| e.in_stage("split"))?;

    let t = Instant::now();
    let front_half = compensate(&front_half, &profile.front.falloff, profile.front.circle_center);
    let rear_half = compensate(&rear_half, &profile.rear.falloff, profile.rear.circle_center);
    let compensate_ms = t.elapsed().as_secs_f64() * 1e3;

    let pano_h = opts.pano_height.unwrap_or(profile.pano_height);
    let pano_w = 2 * pano_h;

    let t = Instant::now();
    let front = unwarp_lens(&front_half, &profile.front, pano_h)
        .map_err(|e| e.in_stage("unwarp front"))?;
    let rear =
        unwarp_lens(&rear_half, &profile.rear, pano_h).map_err(|e| e.in_stage("unwarp rear"))?;
    let unwarp_ms = t.elapsed().as_secs_f64() * 1e3;

    let overlaps =
        compute_overlaps(profile.front.fov_deg, pano_w).map_err(|e| e.in_stage("overlap"))?;

    let t = Instant::now();
    let (rear_aligned, align_report) = if opts.refine {
        let params = profile.refine.resolve(overlaps.band_width(), pano_h);
        let (aligned, report) =
            two_step_align(&front, &rear, &profile.a_calib, &overlaps, &params)
                .map_err(|e| e.in_stage("align"))?;
        (aligned, Some(report))
    } else {
        let aligned = rear
            .warp_wrapped(&profile.a_calib)
            .map_err(|e| e.in_stage("align"))?;
        (aligned, None)
    };
    let align_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let blend_opts = BlendOptions {
        normalized_ramp: opts.normalized_ramp.unwrap_or(profile.blend.normalized_ramp),
    };
    let pano =
        composite(&front, &rear_aligned, &overlaps, &blend_opts).map_err(|e| e.in_stage("blend"))?;
    let blend_ms = t.elapsed().as_secs_f64() * 1e3;

    let seam = seam_report(&front, &rear_aligned, &overlaps);
    let report = StitchReport {
        schema: REPORT_SCHEMA.to_string(),
        pano_width: pano_w,
        pano_height: pano_h,
        refine_enabled: opts.refine,
        fallback_first_step: align_report
            .as_ref()
            .map(|r| r.fallback_first_step)
            .unwrap_or(false),
        a_calib: profile.a_calib,
        a_refined: align_report
            .as_ref()
            .map(|r| r.a_refined)
            .unwrap_or(AffineTransform2D::IDENTITY),
        a_total: align_report
            .as_ref()
            .map(|r| r.a_total)
            .unwrap_or(profile.a_calib),
        bands: align_report.as_ref().map(band_reports).unwrap_or_default(),
        seam_abs_diff: seam,
        timings: TimingsReport {
            compensate_ms,
            unwarp_ms,
            align_ms,
            blend_ms,
            total_ms: t_start.elapsed().as_secs_f64() * 1e3,
        },
    };
    Ok((pano, report))
}

/// Result of fitting one lens's fall-off from a flat-field frame.
#[derive(Debug, Clone, Serialize)]
pub struct LensFalloffFit {
    pub coeffs: Vec<f64>,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VignetteCalibration {
    pub front: LensFalloffFit,
    pub rear: LensFalloffFit,
}

/// Measures and fits the radial fall-off of both lenses from a frame of a
/// uniformly lit target, writing the fitted polynomials into the profile.
/// Also returns the measured radial profiles for inspection.
pub fn calibrate_vignette(
    frame: &ImageBuffer,
    profile: &mut CameraProfile,
    degree: usize,
    n_bins: usize,
) -> Result<(VignetteCalibration, [RadialProfile; 2])> {
    let (front_half, rear_half) = split_halves(frame)?;
    let mut fits = Vec::new();
    let mut profiles = Vec::new();
    for (half, lens) in [(front_half, &mut profile.front), (rear_half, &mut profile.rear)] {
        let luma = luma_of(&half);
        let radial = measure_radial_profile(
            &luma,
            lens.circle_center,
            lens.circle_radius,
            n_bins,
        )?;
        let (poly, rms) = fit_falloff(&radial, degree)?;
        poly.check_positive(lens.circle_radius)?;
        fits.push(LensFalloffFit {
            coeffs: poly.coeffs().to_vec(),
            rms_residual: rms,
        });
        profiles.push(radial);
        lens.falloff = poly;
    }
    let rear_fit = fits.pop().unwrap();
    let front_fit = fits.pop().unwrap();
    let rear_profile = profiles.pop().unwrap();
    let front_profile = profiles.pop().unwrap();
    Ok((
        VignetteCalibration {
            front: front_fit,
            rear: rear_fit,
        },
        [front_profile, rear_profile],
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignCalibration {
    pub a_calib: AffineTransform2D,
    pub pairs: usize,
    pub rms_residual: f64,
    pub max_residual: f64,
}

/// Estimates the first-alignment affine from control-point pairs and writes
/// it into the profile. Residuals are reported per the fitted transform.
pub fn calibrate_align(
    points: &ControlPointSet,
    profile: &mut CameraProfile,
) -> Result<AlignCalibration> {
    let a = estimate_affine(points)?;
    let residuals = affine_residuals(points, &a);
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    let max = residuals.iter().cloned().fold(0.0, f64::max);
    profile.a_calib = a;
    Ok(AlignCalibration {
        a_calib: a,
        pairs: points.len(),
        rms_residual: rms,
        max_residual: max,
    })
}

/// Convenience wrapper mirroring the report fields of the matches.
pub fn report_displacements(report: &StitchReport) -> Vec<(i64, i64)> {
    report.bands.iter().map(|b| (b.du, b.dv)).collect()
}

/// Extracts the raw match results from an alignment report.
pub fn match_results(report: &AlignReport) -> Vec<MatchResult> {
    report.bands.iter().map(|b| b.result).collect()
}
