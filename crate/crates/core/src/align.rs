//! Two-step registration of the rear canvas onto the front canvas.
//!
//! Step one applies a precomputed affine that corrects the fixed mechanical
//! misalignment between the lenses; it is estimated once per camera from
//! control-point pairs. Step two measures the residual, scene-dependent
//! misalignment per overlap band with normalized cross-correlation and
//! estimates a refining affine from the matched window vertices. The rear
//! canvas is finally warped by the composition of both transforms.

use nalgebra::DMatrix;

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::ncc::ncc_masked;
use crate::unwarp::{Band, BandSide, EquirectCanvas, OverlapSpec};
use crate::warp::AffineTransform2D;

/// Minimum fraction of a search window that must be valid for a placement
/// to be scored; windows straddling a coverage edge match on what exists.
const MIN_WINDOW_VALID_FRAC: f64 = 0.5;

/// Control-point correspondences, target first: each pair maps a source
/// point `(x2, y2)` on the canvas being warped to its observed target
/// location `(x1, y1)` on the reference canvas.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlPointSet {
    pairs: Vec<((f64, f64), (f64, f64))>,
}

impl ControlPointSet {
    pub fn new(pairs: Vec<((f64, f64), (f64, f64))>) -> Self {
        ControlPointSet { pairs }
    }

    pub fn pairs(&self) -> &[((f64, f64), (f64, f64))] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Reads pairs from CSV with header `x1,y1,x2,y2`.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let mut pairs = Vec::new();
        for record in reader.records() {
            let record = record?;
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("bad control point field {i}: {record:?}"))
                    })
            };
            pairs.push(((field(0)?, field(1)?), (field(2)?, field(3)?)));
        }
        Ok(ControlPointSet { pairs })
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x1,y1,x2,y2")?;
        for &((x1, y1), (x2, y2)) in &self.pairs {
            writeln!(w, "{x1},{y1},{x2},{y2}")?;
        }
        Ok(())
    }
}

/// Least-squares estimate of the affine `A` minimizing
/// `sum || (x2, y2, 1) * A - (x1, y1, 1) ||^2` over all pairs.
///
/// Exact on affine-consistent input. Fails with
/// [`Error::DegenerateConfiguration`] when fewer than 3 pairs are given or
/// the source points are collinear.
pub fn estimate_affine(points: &ControlPointSet) -> Result<AffineTransform2D> {
    let pairs = points.pairs();
    if pairs.len() < 3 {
        return Err(Error::DegenerateConfiguration);
    }
    let n = pairs.len();
    let mut design = DMatrix::zeros(n, 3);
    let mut rhs = DMatrix::zeros(n, 2);
    for (i, &((x1, y1), (x2, y2))) in pairs.iter().enumerate() {
        design[(i, 0)] = x2;
        design[(i, 1)] = y2;
        design[(i, 2)] = 1.0;
        rhs[(i, 0)] = x1;
        rhs[(i, 1)] = y1;
    }
    let svd = design.svd(true, true);
    let max_sv = svd.singular_values.max();
    if !(max_sv > 0.0) || svd.singular_values.min() < max_sv * 1e-10 {
        return Err(Error::DegenerateConfiguration);
    }
    let solution = svd
        .solve(&rhs, max_sv * 1e-12)
        .map_err(|_| Error::DegenerateConfiguration)?;
    Ok(AffineTransform2D {
        a: solution[(0, 0)],
        b: solution[(0, 1)],
        c: solution[(1, 0)],
        d: solution[(1, 1)],
        tx: solution[(2, 0)],
        ty: solution[(2, 1)],
    })
}

/// Residuals `|(x2, y2, 1) * A - (x1, y1)|` per control point.
pub fn affine_residuals(points: &ControlPointSet, transform: &AffineTransform2D) -> Vec<f64> {
    points
        .pairs()
        .iter()
        .map(|&((x1, y1), (x2, y2))| {
            let (px, py) = transform.apply(x2, y2);
            ((px - x1).powi(2) + (py - y1).powi(2)).sqrt()
        })
        .collect()
}

/// Pixel rectangle on a canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn vertices(&self) -> [(f64, f64); 4] {
        let (x, y) = (self.x as f64, self.y as f64);
        let (w, h) = (self.w as f64, self.h as f64);
        [(x, y), (x + w, y), (x, y + h), (x + w, y + h)]
    }
}

/// Result of matching one window: the correction shift for the rear canvas
/// (the displacement that moves the matched rear content onto the front
/// content), the peak correlation, and the rectangles involved.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MatchResult {
    pub displacement: (i64, i64),
    pub peak_gamma: f64,
    pub template_rect: Rect,
    pub reference_rect: Rect,
}

/// Tuning of the per-band refinement matching.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RefineParams {
    /// Template window size in pixels (width, height).
    pub template_size: (usize, usize),
    /// Search slack around the template, in pixels, on every side.
    pub search_margin: usize,
    /// Matches with a lower peak correlation are rejected as low-confidence.
    pub min_peak_gamma: f64,
    /// Number of stacked matching windows per band.
    pub windows_per_band: usize,
}

impl RefineParams {
    /// Defaults for a panorama: template 80% of the band width by 25% of the
    /// panorama height centered at the horizon, 16 px search margin,
    /// 0.5 confidence floor, one window per band.
    pub fn for_canvas(band_width: usize, pano_h: usize) -> RefineParams {
        RefineParams {
            template_size: (
                ((band_width as f64 * 0.8).round() as usize).max(4),
                ((pano_h as f64 * 0.25).round() as usize).max(4),
            ),
            search_margin: 16,
            min_peak_gamma: 0.5,
            windows_per_band: 1,
        }
    }

    /// Template rectangles for a band: `windows_per_band` windows centered
    /// horizontally in the band and stacked symmetrically about the horizon.
    pub fn template_rects(&self, band: &Band, pano_h: usize) -> Vec<Rect> {
        let tw = self.template_size.0.min(band.width);
        let th = self.template_size.1.min(pano_h);
        let k = self.windows_per_band.max(1);
        let span = (k * th).min(pano_h);
        let y0 = (pano_h - span) / 2;
        let x = band.start + (band.width - tw) / 2;
        (0..k)
            .map(|i| Rect {
                x,
                y: y0 + i * (span / k),
                w: tw,
                h: th.min(span / k.max(1)).max(1),
            })
            .collect()
    }
}

fn luma_of(canvas: &EquirectCanvas) -> ImageBuffer {
    if canvas.image().channels() == 3 {
        canvas.image().to_luma()
    } else {
        canvas.image().clone()
    }
}

fn zero_invalid(img: &mut ImageBuffer) {
    if img.mask().is_none() {
        return;
    }
    let (w, h) = (img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            if !img.is_valid(x, y) {
                img.pixel_mut(x, y)[0] = 0.0;
            }
        }
    }
}

/// Matches one template rectangle cut from `top` against the corresponding
/// search window in `bottom`. Both inputs must be single-channel.
fn match_rect(
    top: &ImageBuffer,
    bottom: &ImageBuffer,
    template_rect: Rect,
    search_margin: usize,
    min_peak_gamma: f64,
) -> Result<MatchResult> {
    let (w, h) = (top.width(), top.height());
    let rx0 = template_rect.x.saturating_sub(search_margin);
    let ry0 = template_rect.y.saturating_sub(search_margin);
    let rx1 = (template_rect.x + template_rect.w + search_margin).min(w);
    let ry1 = (template_rect.y + template_rect.h + search_margin).min(h);
    let reference_rect = Rect {
        x: rx0,
        y: ry0,
        w: rx1 - rx0,
        h: ry1 - ry0,
    };

    let mut template = top.crop(template_rect.x, template_rect.y, template_rect.w, template_rect.h);
    zero_invalid(&mut template);
    template.clear_mask();
    let reference = bottom.crop(rx0, ry0, reference_rect.w, reference_rect.h);

    let surface = ncc_masked(&reference, &template, MIN_WINDOW_VALID_FRAC)?;

    // placement corresponding to zero displacement
    let u0 = (template_rect.x - rx0) as f64;
    let v0 = (template_rect.y - ry0) as f64;
    let (u, v, peak_gamma) = surface.argmax_with_tie_center(u0, v0);

    // the matched window sits where the rear content drifted to; the
    // correction shift moves it back onto the template
    let displacement = (u0 as i64 - u as i64, v0 as i64 - v as i64);

    if peak_gamma < min_peak_gamma {
        return Err(Error::LowConfidence {
            peak_gamma,
            min_peak_gamma,
        });
    }
    Ok(MatchResult {
        displacement,
        peak_gamma,
        template_rect,
        reference_rect,
    })
}

/// Matches the band's centered window: template from `top`, search window
/// from `bottom` grown by the search margin. Returns the correction
/// displacement and peak correlation, or [`Error::LowConfidence`] when the
/// peak is below the configured floor.
pub fn match_window(
    top: &EquirectCanvas,
    bottom: &EquirectCanvas,
    band: &Band,
    params: &RefineParams,
) -> Result<MatchResult> {
    let rect = params.template_rects(band, top.height())[0];
    match_rect(
        &luma_of(top),
        &luma_of(bottom),
        rect,
        params.search_margin,
        params.min_peak_gamma,
    )
}

/// Estimates the refining affine from matched windows: every window
/// contributes its four template-rect vertices, each vertex pairing the
/// source point `vertex` with the target `vertex + displacement`. The
/// resulting transform warps the rear ("bottom") canvas onto the front.
pub fn refine_affine(matches: &[MatchResult]) -> Result<AffineTransform2D> {
    if matches.is_empty() {
        return Err(Error::DegenerateConfiguration);
    }
    let mut pairs = Vec::with_capacity(matches.len() * 4);
    for m in matches {
        let (du, dv) = (m.displacement.0 as f64, m.displacement.1 as f64);
        for (vx, vy) in m.template_rect.vertices() {
            pairs.push(((vx + du, vy + dv), (vx, vy)));
        }
    }
    estimate_affine(&ControlPointSet::new(pairs))
}

/// Outcome of matching one window during alignment.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BandMatch {
    pub side: BandSide,
    pub result: MatchResult,
    /// True when the peak fell below the confidence floor and the window
    /// fell back to zero displacement.
    pub low_confidence: bool,
    /// Mean absolute front/rear difference across the band center before
    /// and after the refining warp.
    pub seam_abs_diff_before: f64,
    pub seam_abs_diff_after: f64,
}

/// Everything the alignment decided, for reporting.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AlignReport {
    pub bands: Vec<BandMatch>,
    pub a_calib: AffineTransform2D,
    pub a_refined: AffineTransform2D,
    pub a_total: AffineTransform2D,
    /// True when every window was low-confidence and only the first
    /// alignment step was applied.
    pub fallback_first_step: bool,
}

/// Mean absolute luma disagreement between the two canvases over a band,
/// counting pixels valid in both: the mismatch a cut through the band would
/// expose as a seam. Aligned canvases agree and score near zero regardless
/// of the texture.
pub fn seam_discontinuity(front: &ImageBuffer, rear: &ImageBuffer, band: &Band) -> f64 {
    let mut total = 0.0f64;
    let mut n = 0usize;
    for y in 0..front.height() {
        for c in band.cols() {
            if front.is_valid(c, y) && rear.is_valid(c, y) {
                total += (front.pixel(c, y)[0] as f64 - rear.pixel(c, y)[0] as f64).abs();
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Two-step alignment: warp the rear canvas by the precomputed calibration
/// affine, measure per-band displacements against the front canvas with
/// normalized cross-correlation, estimate the refining affine from the
/// window vertices, and return the rear canvas warped by the composition of
/// both transforms.
///
/// Low-confidence windows contribute zero displacement; if every window is
/// low-confidence the first-step result is returned with
/// `fallback_first_step` set.
pub fn two_step_align(
    front: &EquirectCanvas,
    rear: &EquirectCanvas,
    a_calib: &AffineTransform2D,
    overlaps: &OverlapSpec,
    params: &RefineParams,
) -> Result<(EquirectCanvas, AlignReport)> {
    let rear_first = rear.warp_wrapped(a_calib)?;
    let front_luma = luma_of(front);
    let rear_first_luma = luma_of(&rear_first);

    let mut band_matches = Vec::new();
    let mut any_confident = false;
    for (side, band) in [
        (BandSide::Left, overlaps.left),
        (BandSide::Right, overlaps.right),
    ] {
        for rect in params.template_rects(&band, front.height()) {
            let outcome = match_rect(
                &front_luma,
                &rear_first_luma,
                rect,
                params.search_margin,
                params.min_peak_gamma,
            );
            let (result, low_confidence) = match outcome {
                Ok(r) => {
                    any_confident = true;
                    (r, false)
                }
                Err(Error::LowConfidence { peak_gamma, .. }) => (
                    MatchResult {
                        displacement: (0, 0),
                        peak_gamma,
                        template_rect: rect,
                        reference_rect: rect,
                    },
                    true,
                ),
                Err(e) => return Err(e),
            };
            band_matches.push(BandMatch {
                side,
                result,
                low_confidence,
                seam_abs_diff_before: seam_discontinuity(
                    &front_luma,
                    &rear_first_luma,
                    &band,
                ),
                seam_abs_diff_after: 0.0,
            });
        }
    }

    let (a_refined, fallback) = if any_confident {
        let results: Vec<MatchResult> = band_matches.iter().map(|m| m.result).collect();
        (refine_affine(&results)?, false)
    } else {
        (AffineTransform2D::IDENTITY, true)
    };

    let a_total = a_calib.then(&a_refined);
    let rear_aligned = if fallback {
        rear_first
    } else {
        rear.warp_wrapped(&a_total)?
    };

    let rear_aligned_luma = luma_of(&rear_aligned);
    for m in &mut band_matches {
        let band = match m.side {
            BandSide::Left => overlaps.left,
            BandSide::Right => overlaps.right,
        };
        m.seam_abs_diff_after = seam_discontinuity(&front_luma, &rear_aligned_luma, &band);
    }

    let report = AlignReport {
        bands: band_matches,
        a_calib: *a_calib,
        a_refined,
        a_total,
        fallback_first_step: fallback,
    };
    Ok((rear_aligned, report))
}
