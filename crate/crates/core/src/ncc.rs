//! Normalized cross-correlation between a template and a reference image.
//!
//! The score of a template placement `(u, v)` is
//!
//! ```text
//! gamma(u, v) = sum[(f - fbar_uv) (t - tbar)]
//!             / { sum[(f - fbar_uv)^2] * sum[(t - tbar)^2] }^0.5
//! ```
//!
//! with the sums running over the template support, `fbar_uv` the reference
//! mean under the template and `tbar` the template mean. The normalization
//! makes the score invariant to gain and offset in either image, which is
//! what lets windows from two differently exposed lenses be compared.
//!
//! Two evaluators are provided: [`ncc_direct`] sums the definition verbatim,
//! [`ncc_fast`] gets the same surface using running-sum tables for the
//! denominator and an FFT cross-correlation for the numerator.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};
use crate::sat::build_sat;

/// Variance below which a patch is considered flat and its score undefined.
pub const FLAT_VARIANCE_EPS: f64 = 1e-12;

/// Dense grid of correlation scores, one per template placement. Placements
/// where the score is undefined (flat template or flat reference window)
/// carry `gamma = 0` and are flagged.
#[derive(Debug, Clone)]
pub struct CorrelationSurface {
    width: usize,
    height: usize,
    gamma: Vec<f64>,
    flat: Vec<bool>,
}

impl CorrelationSurface {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn gamma(&self, u: usize, v: usize) -> f64 {
        self.gamma[v * self.width + u]
    }

    #[inline]
    pub fn is_flat(&self, u: usize, v: usize) -> bool {
        self.flat[v * self.width + u]
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma
    }

    pub fn flat_flags(&self) -> &[bool] {
        &self.flat
    }

    /// Highest-scoring placement. Ties are broken toward the placement
    /// closest to `(tie_u, tie_v)` (squared distance), then by row-major
    /// order, so results do not depend on scan order or parallel schedule.
    pub fn argmax_with_tie_center(&self, tie_u: f64, tie_v: f64) -> (usize, usize, f64) {
        let mut best = (0usize, 0usize);
        let mut best_gamma = f64::NEG_INFINITY;
        let mut best_dist = f64::INFINITY;
        for v in 0..self.height {
            for u in 0..self.width {
                let g = self.gamma(u, v);
                let d = (u as f64 - tie_u).powi(2) + (v as f64 - tie_v).powi(2);
                if g > best_gamma + 1e-15 || (( g - best_gamma).abs() <= 1e-15 && d < best_dist) {
                    best = (u, v);
                    best_gamma = g;
                    best_dist = d;
                }
            }
        }
        (best.0, best.1, best_gamma)
    }
}

fn check_inputs(reference: &ImageBuffer, template: &ImageBuffer) -> Result<(usize, usize)> {
    if reference.channels() != 1 || template.channels() != 1 {
        return Err(Error::InvalidInput(
            "correlation operates on single-channel images".into(),
        ));
    }
    if template.width() >= reference.width() || template.height() >= reference.height() {
        return Err(Error::InvalidInput(format!(
            "template {}x{} must be strictly smaller than reference {}x{}",
            template.width(),
            template.height(),
            reference.width(),
            reference.height()
        )));
    }
    Ok((
        reference.width() - template.width() + 1,
        reference.height() - template.height() + 1,
    ))
}

fn template_stats(template: &ImageBuffer) -> (f64, f64) {
    let n = (template.width() * template.height()) as f64;
    let mean = template.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let ssd = template
        .data()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>();
    (mean, ssd)
}

/// Evaluates the correlation surface by direct summation of the definition.
pub fn ncc_direct(reference: &ImageBuffer, template: &ImageBuffer) -> Result<CorrelationSurface> {
    let (out_w, out_h) = check_inputs(reference, template)?;
    let (tw, th) = (template.width(), template.height());
    let area = (tw * th) as f64;
    let (t_mean, t_ssd) = template_stats(template);
    let template_flat = t_ssd / area < FLAT_VARIANCE_EPS;

    let mut gamma = vec![0.0f64; out_w * out_h];
    let mut flat = vec![false; out_w * out_h];

    for v in 0..out_h {
        for u in 0..out_w {
            let idx = v * out_w + u;
            if template_flat {
                flat[idx] = true;
                continue;
            }
            let mut f_sum = 0.0f64;
            for y in 0..th {
                for x in 0..tw {
                    f_sum += reference.pixel(u + x, v + y)[0] as f64;
                }
            }
            let f_mean = f_sum / area;
            let mut num = 0.0f64;
            let mut f_ssd = 0.0f64;
            for y in 0..th {
                for x in 0..tw {
                    let fv = reference.pixel(u + x, v + y)[0] as f64 - f_mean;
                    let tv = template.pixel(x, y)[0] as f64 - t_mean;
                    num += fv * tv;
                    f_ssd += fv * fv;
                }
            }
            if f_ssd / area < FLAT_VARIANCE_EPS {
                flat[idx] = true;
                continue;
            }
            gamma[idx] = num / (f_ssd * t_ssd).sqrt();
        }
    }

    Ok(CorrelationSurface {
        width: out_w,
        height: out_h,
        gamma,
        flat,
    })
}

/// Evaluates the same surface as [`ncc_direct`] using the fast scheme:
/// reference mean and energy under each placement come from summed-area
/// tables in O(1), the numerator comes from an FFT cross-correlation of the
/// reference with the zero-mean template.
///
/// Agrees with the direct evaluation within 1e-4 absolutely.
pub fn ncc_fast(reference: &ImageBuffer, template: &ImageBuffer) -> Result<CorrelationSurface> {
    let (out_w, out_h) = check_inputs(reference, template)?;
    let (tw, th) = (template.width(), template.height());
    let area = (tw * th) as f64;
    let (t_mean, t_ssd) = template_stats(template);
    let template_flat = t_ssd / area < FLAT_VARIANCE_EPS;

    let mut gamma = vec![0.0f64; out_w * out_h];
    let mut flat = vec![false; out_w * out_h];

    if template_flat {
        flat.fill(true);
        return Ok(CorrelationSurface {
            width: out_w,
            height: out_h,
            gamma,
            flat,
        });
    }

    let sat = build_sat(reference)?;

    // numerator(u, v) = sum_xy ref(u+x, v+y) * (t(x, y) - tbar)
    // (the -fbar term vanishes because the zero-mean template sums to zero)
    let num = cross_correlate(reference, template, t_mean);

    for v in 0..out_h {
        for u in 0..out_w {
            let idx = v * out_w + u;
            let f_sum = sat.rect_sum(u, v, u + tw - 1, v + th - 1);
            let f_sum_sq = sat.rect_sum_sq(u, v, u + tw - 1, v + th - 1);
            let f_ssd = (f_sum_sq - f_sum * f_sum / area).max(0.0);
            if f_ssd / area < FLAT_VARIANCE_EPS {
                flat[idx] = true;
                continue;
            }
            gamma[idx] = num[idx] / (f_ssd * t_ssd).sqrt();
        }
    }

    Ok(CorrelationSurface {
        width: out_w,
        height: out_h,
        gamma,
        flat,
    })
}

/// [`ncc_fast`] for a reference with partial coverage: the score of each
/// placement is the same normalized correlation evaluated only over the
/// reference pixels that are valid under the window. On a fully valid
/// reference this equals [`ncc_fast`] exactly.
///
/// Placements where fewer than `min_valid_frac` of the window pixels are
/// valid are flagged (gamma = 0), like flat patches. The template is
/// expected to be fully valid.
///
/// This is what window matching at a coverage edge needs: content that
/// drifted past the edge of the other lens's cone simply does not exist
/// there, and treating the missing pixels as data would drag the peak away.
pub fn ncc_masked(
    reference: &ImageBuffer,
    template: &ImageBuffer,
    min_valid_frac: f64,
) -> Result<CorrelationSurface> {
    let (out_w, out_h) = check_inputs(reference, template)?;
    let (rw, rh) = (reference.width(), reference.height());
    let (tw, th) = (template.width(), template.height());
    let area = (tw * th) as f64;
    let min_count = (min_valid_frac * area).max(2.0);

    let mut gamma = vec![0.0f64; out_w * out_h];
    let mut flat = vec![false; out_w * out_h];

    // reference-side running sums over the valid subset
    let n = rw * rh;
    let mut v_grid = vec![0.0f32; n];
    let mut fv_grid = vec![0.0f32; n];
    let mut f2v_grid = vec![0.0f32; n];
    for y in 0..rh {
        for x in 0..rw {
            if reference.is_valid(x, y) {
                let f = reference.pixel(x, y)[0];
                v_grid[y * rw + x] = 1.0;
                fv_grid[y * rw + x] = f;
                f2v_grid[y * rw + x] = f * f;
            }
        }
    }
    let sat_v = build_sat(&ImageBuffer::from_data(rw, rh, 1, v_grid.clone())?)?;
    let sat_fv = build_sat(&ImageBuffer::from_data(rw, rh, 1, fv_grid.clone())?)?;
    let sat_f2v = build_sat(&ImageBuffer::from_data(rw, rh, 1, f2v_grid)?)?;

    // template-side sums against the valid subset, via FFT correlations:
    //   ct  (u,v) = sum V * t        ct2 (u,v) = sum V * t^2
    //   cft (u,v) = sum (f V) * t
    let mut planner = FftPlanner::new();
    let to_complex = |data: &[f32]| -> Vec<Complex<f64>> {
        data.iter().map(|&v| Complex::new(v as f64, 0.0)).collect()
    };
    let mut v_f = to_complex(&v_grid);
    let mut fv_f = to_complex(&fv_grid);
    let mut t_f = vec![Complex::new(0.0, 0.0); n];
    let mut t2_f = vec![Complex::new(0.0, 0.0); n];
    for y in 0..th {
        for x in 0..tw {
            let t = template.pixel(x, y)[0] as f64;
            t_f[y * rw + x] = Complex::new(t, 0.0);
            t2_f[y * rw + x] = Complex::new(t * t, 0.0);
        }
    }
    for grid in [&mut v_f, &mut fv_f, &mut t_f, &mut t2_f] {
        fft_2d(grid, rw, rh, &mut planner, false);
    }
    let correlate = |a: &[Complex<f64>], b: &[Complex<f64>], planner: &mut FftPlanner<f64>| {
        let mut prod: Vec<Complex<f64>> =
            a.iter().zip(b).map(|(x, y)| *x * y.conj()).collect();
        fft_2d(&mut prod, rw, rh, planner, true);
        prod
    };
    let ct = correlate(&v_f, &t_f, &mut planner);
    let ct2 = correlate(&v_f, &t2_f, &mut planner);
    let cft = correlate(&fv_f, &t_f, &mut planner);
    let scale = 1.0 / n as f64;

    for v in 0..out_h {
        for u in 0..out_w {
            let idx = v * out_w + u;
            let (x1, y1) = (u + tw - 1, v + th - 1);
            let count = sat_v.rect_sum(u, v, x1, y1);
            if count < min_count {
                flat[idx] = true;
                continue;
            }
            let sum_f = sat_fv.rect_sum(u, v, x1, y1);
            let sum_f2 = sat_f2v.rect_sum(u, v, x1, y1);
            let sum_t = ct[v * rw + u].re * scale;
            let sum_t2 = ct2[v * rw + u].re * scale;
            let sum_ft = cft[v * rw + u].re * scale;

            let f_ssd = (sum_f2 - sum_f * sum_f / count).max(0.0);
            let t_ssd = (sum_t2 - sum_t * sum_t / count).max(0.0);
            if f_ssd / count < FLAT_VARIANCE_EPS || t_ssd / count < FLAT_VARIANCE_EPS {
                flat[idx] = true;
                continue;
            }
            let num = sum_ft - sum_f * sum_t / count;
            gamma[idx] = num / (f_ssd * t_ssd).sqrt();
        }
    }

    Ok(CorrelationSurface {
        width: out_w,
        height: out_h,
        gamma,
        flat,
    })
}

/// FFT cross-correlation of the reference with the zero-mean template over
/// all fully-contained placements. Output is `(rw - tw + 1) x (rh - th + 1)`,
/// row-major.
fn cross_correlate(reference: &ImageBuffer, template: &ImageBuffer, t_mean: f64) -> Vec<f64> {
    let (rw, rh) = (reference.width(), reference.height());
    let (tw, th) = (template.width(), template.height());
    let n = rw * rh;

    let mut f_grid: Vec<Complex<f64>> = reference
        .data()
        .iter()
        .map(|&v| Complex::new(v as f64, 0.0))
        .collect();
    let mut t_grid = vec![Complex::new(0.0, 0.0); n];
    for y in 0..th {
        for x in 0..tw {
            t_grid[y * rw + x] = Complex::new(template.pixel(x, y)[0] as f64 - t_mean, 0.0);
        }
    }

    let mut planner = FftPlanner::new();
    fft_2d(&mut f_grid, rw, rh, &mut planner, false);
    fft_2d(&mut t_grid, rw, rh, &mut planner, false);
    for (f, t) in f_grid.iter_mut().zip(&t_grid) {
        *f *= t.conj();
    }
    fft_2d(&mut f_grid, rw, rh, &mut planner, true);

    let out_w = rw - tw + 1;
    let out_h = rh - th + 1;
    let scale = 1.0 / n as f64;
    let mut out = vec![0.0f64; out_w * out_h];
    for v in 0..out_h {
        for u in 0..out_w {
            out[v * out_w + u] = f_grid[v * rw + u].re * scale;
        }
    }
    out
}

/// In-place 2-D FFT: rows, then columns via transpose.
fn fft_2d(data: &mut [Complex<f64>], w: usize, h: usize, planner: &mut FftPlanner<f64>, inverse: bool) {
    let row_fft = if inverse {
        planner.plan_fft_inverse(w)
    } else {
        planner.plan_fft_forward(w)
    };
    for row in data.chunks_mut(w) {
        row_fft.process(row);
    }

    let mut transposed = vec![Complex::new(0.0, 0.0); w * h];
    for y in 0..h {
        for x in 0..w {
            transposed[x * h + y] = data[y * w + x];
        }
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(h)
    } else {
        planner.plan_fft_forward(h)
    };
    for col in transposed.chunks_mut(h) {
        col_fft.process(col);
    }
    for x in 0..w {
        for y in 0..h {
            data[y * w + x] = transposed[x * h + y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = ImageBuffer::new(w, h, 1);
        for v in img.data_mut() {
            *v = rng.random::<f32>();
        }
        img
    }

    fn crop(img: &ImageBuffer, x0: usize, y0: usize, w: usize, h: usize) -> ImageBuffer {
        img.crop(x0, y0, w, h)
    }

    #[test]
    fn planted_template_scores_one_at_its_offset() {
        let reference = random_image(32, 24, 5);
        let template = crop(&reference, 7, 4, 8, 8);
        for surface in [
            ncc_direct(&reference, &template).unwrap(),
            ncc_fast(&reference, &template).unwrap(),
        ] {
            assert!((surface.gamma(7, 4) - 1.0).abs() < 1e-6);
            let (u, v, g) = surface.argmax_with_tie_center(0.0, 0.0);
            assert_eq!((u, v), (7, 4));
            assert!(g > surface.gamma(0, 0));
            // strict global max
            for vv in 0..surface.height() {
                for uu in 0..surface.width() {
                    if (uu, vv) != (7, 4) {
                        assert!(surface.gamma(uu, vv) < g);
                    }
                }
            }
        }
    }

    #[test]
    fn gain_and_bias_on_template_do_not_change_the_score() {
        let reference = random_image(32, 24, 6);
        let mut template = crop(&reference, 9, 3, 8, 8);
        for v in template.data_mut() {
            *v = 2.0 * *v + 0.1;
        }
        let surface = ncc_direct(&reference, &template).unwrap();
        assert!((surface.gamma(9, 3) - 1.0).abs() < 1e-6);
        let (u, v, _) = surface.argmax_with_tie_center(0.0, 0.0);
        assert_eq!((u, v), (9, 3));
    }

    #[test]
    fn surface_is_invariant_to_template_gain_and_bias() {
        let reference = random_image(24, 20, 11);
        let template = crop(&reference, 3, 5, 7, 6);
        let base = ncc_direct(&reference, &template).unwrap();
        let mut scaled = template.clone();
        for v in scaled.data_mut() {
            *v = 0.5 * *v - 0.05;
        }
        let other = ncc_direct(&reference, &scaled).unwrap();
        for (a, b) in base.values().iter().zip(other.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn fast_matches_direct_on_random_instance() {
        let reference = random_image(32, 32, 7);
        let template = random_image(8, 8, 8);
        let direct = ncc_direct(&reference, &template).unwrap();
        let fast = ncc_fast(&reference, &template).unwrap();
        assert_eq!(direct.width(), fast.width());
        for (a, b) in direct.values().iter().zip(fast.values()) {
            assert!((a - b).abs() < 1e-10, "direct {a} vs fast {b}");
        }
    }

    #[test]
    fn gamma_stays_in_valid_range() {
        for seed in 0..20 {
            let reference = random_image(20, 16, 100 + seed);
            let template = random_image(5, 4, 200 + seed);
            let surface = ncc_fast(&reference, &template).unwrap();
            for &g in surface.values() {
                assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&g));
            }
        }
    }

    #[test]
    fn constant_reference_is_all_flat() {
        let reference = ImageBuffer::from_fn(16, 16, |_, _| 0.7);
        let template = random_image(4, 4, 9);
        let surface = ncc_fast(&reference, &template).unwrap();
        for v in 0..surface.height() {
            for u in 0..surface.width() {
                assert!(surface.is_flat(u, v));
                assert_eq!(surface.gamma(u, v), 0.0);
            }
        }
    }

    #[test]
    fn constant_template_is_all_flat() {
        let reference = random_image(16, 16, 10);
        let template = ImageBuffer::from_fn(4, 4, |_, _| 0.3);
        for surface in [
            ncc_direct(&reference, &template).unwrap(),
            ncc_fast(&reference, &template).unwrap(),
        ] {
            assert!(surface.flat_flags().iter().all(|&f| f));
        }
    }

    #[test]
    fn template_must_be_smaller() {
        let reference = random_image(8, 8, 1);
        assert!(ncc_direct(&reference, &reference).is_err());
    }

    /// Brute-force masked correlation, the oracle for `ncc_masked`.
    fn masked_oracle(
        reference: &ImageBuffer,
        template: &ImageBuffer,
        min_valid_frac: f64,
    ) -> Vec<f64> {
        let (tw, th) = (template.width(), template.height());
        let out_w = reference.width() - tw + 1;
        let out_h = reference.height() - th + 1;
        let mut out = vec![0.0f64; out_w * out_h];
        for v in 0..out_h {
            for u in 0..out_w {
                let mut pts = Vec::new();
                for y in 0..th {
                    for x in 0..tw {
                        if reference.is_valid(u + x, v + y) {
                            pts.push((
                                reference.pixel(u + x, v + y)[0] as f64,
                                template.pixel(x, y)[0] as f64,
                            ));
                        }
                    }
                }
                let count = pts.len() as f64;
                if count < (min_valid_frac * (tw * th) as f64).max(2.0) {
                    continue;
                }
                let f_mean = pts.iter().map(|p| p.0).sum::<f64>() / count;
                let t_mean = pts.iter().map(|p| p.1).sum::<f64>() / count;
                let mut num = 0.0;
                let mut f_ssd = 0.0;
                let mut t_ssd = 0.0;
                for (f, t) in &pts {
                    num += (f - f_mean) * (t - t_mean);
                    f_ssd += (f - f_mean).powi(2);
                    t_ssd += (t - t_mean).powi(2);
                }
                if f_ssd / count < FLAT_VARIANCE_EPS || t_ssd / count < FLAT_VARIANCE_EPS {
                    continue;
                }
                out[v * out_w + u] = num / (f_ssd * t_ssd).sqrt();
            }
        }
        out
    }

    #[test]
    fn masked_with_full_mask_equals_fast() {
        let reference = random_image(28, 22, 21);
        let template = random_image(7, 6, 22);
        let fast = ncc_fast(&reference, &template).unwrap();
        let masked = ncc_masked(&reference, &template, 0.5).unwrap();
        for (a, b) in fast.values().iter().zip(masked.values()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn masked_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for seed in 0..8 {
            let mut reference = random_image(24, 18, 300 + seed);
            // invalidate a left stripe and some scattered pixels
            let stripe = 3 + (seed as usize % 5);
            let mask: Vec<bool> = (0..24 * 18)
                .map(|i| {
                    let x = i % 24;
                    x >= stripe && rng.random::<f32>() > 0.05
                })
                .collect();
            reference.set_mask(mask);
            let template = random_image(6, 5, 400 + seed);
            let masked = ncc_masked(&reference, &template, 0.5).unwrap();
            let oracle = masked_oracle(&reference, &template, 0.5);
            for (a, b) in masked.values().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn masked_finds_planted_match_at_a_coverage_edge() {
        // content drifted so that part of the matched window is invalid
        let reference = random_image(40, 30, 31);
        let template = reference.crop(4, 8, 12, 10);
        let mut occluded = reference.clone();
        // columns 0..8 do not exist in the "other lens"
        occluded.set_mask((0..40 * 30).map(|i| i % 40 >= 8).collect());
        let surface = ncc_masked(&occluded, &template, 0.5).unwrap();
        let (u, v, g) = surface.argmax_with_tie_center(4.0, 8.0);
        assert_eq!((u, v), (4, 8));
        assert!(g > 1.0 - 1e-6, "peak {g}");
    }

    #[test]
    fn fast_path_beats_direct_on_band_sized_input() {
        use std::time::Instant;
        let reference = random_image(256, 64, 42);
        let template = random_image(32, 32, 43);

        // warm-up (FFT planning, caches)
        let _ = ncc_fast(&reference, &template).unwrap();
        let _ = ncc_direct(&reference, &template).unwrap();

        let t0 = Instant::now();
        let direct = ncc_direct(&reference, &template).unwrap();
        let direct_time = t0.elapsed();

        let t1 = Instant::now();
        let fast = ncc_fast(&reference, &template).unwrap();
        let fast_time = t1.elapsed();

        for (a, b) in direct.values().iter().zip(fast.values()) {
            assert!((a - b).abs() < 1e-4);
        }
        let ratio = direct_time.as_secs_f64() / fast_time.as_secs_f64();
        println!("ncc speedup: direct {direct_time:?} / fast {fast_time:?} = {ratio:.1}x");
        assert!(
            ratio >= 5.0,
            "fast path only {ratio:.1}x faster (direct {direct_time:?}, fast {fast_time:?})"
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn fast_equals_direct(
                seed in 0u64..10_000,
                rw in 12usize..40,
                rh in 12usize..40,
                tw in 3usize..10,
                th in 3usize..10,
            ) {
                prop_assume!(tw < rw && th < rh);
                let reference = random_image(rw, rh, seed);
                let template = random_image(tw, th, seed.wrapping_add(1));
                let direct = ncc_direct(&reference, &template).unwrap();
                let fast = ncc_fast(&reference, &template).unwrap();
                for (a, b) in direct.values().iter().zip(fast.values()) {
                    prop_assert!((a - b).abs() < 1e-4);
                }
            }

            #[test]
            fn argmax_invariant_to_gain_bias(
                seed in 0u64..10_000,
                gain in 0.2f32..3.0,
                bias in -0.2f32..0.2,
            ) {
                let reference = random_image(28, 22, seed);
                let template = {
                    let mut t = reference.crop(6, 5, 9, 8);
                    for v in t.data_mut() {
                        *v = gain * *v + bias;
                    }
                    t
                };
                let surface = ncc_fast(&reference, &template).unwrap();
                let (u, v, g) = surface.argmax_with_tie_center(0.0, 0.0);
                prop_assert_eq!((u, v), (6, 5));
                prop_assert!(g > 1.0 - 1e-6);
            }
        }
    }
}
