//! duostitch stitches dual-fisheye captures — two ~193 degree circular
//! fisheye images side by side in one frame — into full 360x180 degree
//! equirectangular panoramas.
//!
//! The pipeline has four stages:
//!
//! 1. **Fall-off compensation** ([`vignette`]): each lens's radial intensity
//!    fall-off is modeled as a polynomial gain and divided out.
//! 2. **Unwarping** ([`unwarp`]): each circular fisheye half is resampled
//!    into an equirectangular canvas with a validity mask.
//! 3. **Two-step alignment** ([`align`]): a precomputed affine corrects the
//!    fixed lens misalignment, then normalized cross-correlation in the two
//!    overlap bands measures the scene-dependent residual and refines the
//!    transform per shot.
//! 4. **Ramp blending** ([`blend`]): the aligned canvases are cross-faded
//!    across each overlap band and composited into the final panorama.
//!
//! [`synth`] is a forward renderer that fabricates dual-fisheye frames from
//! a known panorama with injectable misalignment, fall-off, exposure error
//! and noise; it provides the ground truth for the test suite. [`pipeline`]
//! ties the stages together behind the CLI.

pub mod align;
pub mod blend;
pub mod buffer;
pub mod error;
pub mod io;
pub mod ncc;
pub mod pipeline;
pub mod profile;
pub mod sat;
pub mod synth;
pub mod unwarp;
pub mod vignette;
pub mod warp;

pub use align::{estimate_affine, match_window, refine_affine, two_step_align, ControlPointSet};
pub use blend::{blend_band, composite, ramp_weights, BlendOptions};
pub use buffer::{BorderPolicy, ImageBuffer};
pub use error::{Error, Result};
pub use ncc::{ncc_direct, ncc_fast, CorrelationSurface};
pub use pipeline::{stitch, StitchOptions, StitchReport};
pub use profile::CameraProfile;
pub use sat::{build_sat, SummedAreaTable};
pub use synth::{render_dual, render_lens, SynthConfig};
pub use unwarp::{
    compute_overlaps, equirect_to_fisheye, unwarp_lens, EquirectCanvas, LensProfile, OverlapSpec,
};
pub use vignette::{compensate, fit_falloff, measure_radial_profile, FalloffPolynomial};
pub use warp::{warp_affine, AffineTransform2D};
