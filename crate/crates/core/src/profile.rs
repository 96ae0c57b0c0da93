//! Camera profile: everything the stitcher must know about a specific
//! camera, serialized as human-readable TOML with a schema tag.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::RefineParams;
use crate::error::{Error, Result};
use crate::synth::{LensSide, SynthConfig};
use crate::unwarp::LensProfile;
use crate::vignette::reference_falloff;
use crate::warp::AffineTransform2D;

pub const PROFILE_SCHEMA: &str = "duostitch-profile/1";

/// Resolution-independent refinement settings stored in the profile;
/// resolved against a concrete panorama size at stitch time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Template width as a fraction of the overlap band width.
    pub template_band_frac: f64,
    /// Template height as a fraction of the panorama height.
    pub template_height_frac: f64,
    pub search_margin: usize,
    pub min_peak_gamma: f64,
    pub windows_per_band: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            template_band_frac: 0.8,
            template_height_frac: 0.25,
            search_margin: 16,
            min_peak_gamma: 0.5,
            windows_per_band: 1,
        }
    }
}

impl RefineConfig {
    pub fn resolve(&self, band_width: usize, pano_h: usize) -> RefineParams {
        RefineParams {
            template_size: (
                ((band_width as f64 * self.template_band_frac).round() as usize).max(4),
                ((pano_h as f64 * self.template_height_frac).round() as usize).max(4),
            ),
            search_margin: self.search_margin,
            min_peak_gamma: self.min_peak_gamma,
            windows_per_band: self.windows_per_band.max(1),
        }
    }
}

/// Blend settings stored in the profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendConfig {
    /// Per-column normalized ramp weights (true) or the raw printed ramps.
    pub normalized_ramp: bool,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            normalized_ramp: true,
        }
    }
}

/// Full camera description: the two lenses, the precomputed first-alignment
/// affine, the default output size, and tuning blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraProfile {
    pub schema: String,
    /// Default panorama height; width is always twice this.
    pub pano_height: usize,
    pub front: LensProfile,
    pub rear: LensProfile,
    /// Precomputed affine correcting the fixed lens misalignment, applied to
    /// the rear canvas before refinement.
    pub a_calib: AffineTransform2D,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub blend: BlendConfig,
}

impl CameraProfile {
    /// Profile of the reference camera at native resolution: 3888 px square
    /// halves, 193 degree lenses, the reference fall-off curve, identity
    /// first alignment.
    pub fn reference_camera() -> CameraProfile {
        let falloff = reference_falloff();
        let lens = |yaw: f64| {
            LensProfile::new(193.0, (1943.5, 1943.5), 1944.0, falloff.clone(), yaw)
                .expect("reference lens is valid")
        };
        CameraProfile {
            schema: PROFILE_SCHEMA.to_string(),
            pano_height: 1944,
            front: lens(0.0),
            rear: lens(180.0),
            a_calib: AffineTransform2D::IDENTITY,
            refine: RefineConfig::default(),
            blend: BlendConfig::default(),
        }
    }

    /// Profile matching a synthetic capture, so rendered frames can be fed
    /// straight back into the stitcher.
    pub fn for_synth(cfg: &SynthConfig) -> Result<CameraProfile> {
        Ok(CameraProfile {
            schema: PROFILE_SCHEMA.to_string(),
            pano_height: cfg.halfframe_size,
            front: cfg.lens_profile(LensSide::Front)?,
            rear: cfg.lens_profile(LensSide::Rear)?,
            a_calib: AffineTransform2D::IDENTITY,
            refine: RefineConfig::default(),
            blend: BlendConfig::default(),
        })
    }

    /// A neutral profile for a dual-fisheye frame of the given half size:
    /// centered circles, 193 degree lenses, unity fall-off.
    pub fn neutral(halfframe_size: usize) -> Result<CameraProfile> {
        CameraProfile::for_synth(&SynthConfig {
            halfframe_size,
            ..SynthConfig::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != PROFILE_SCHEMA {
            return Err(Error::InvalidInput(format!(
                "unsupported profile schema '{}', expected '{PROFILE_SCHEMA}'",
                self.schema
            )));
        }
        if self.pano_height == 0 {
            return Err(Error::BadProfile("pano_height must be positive".into()));
        }
        if (self.front.fov_deg - self.rear.fov_deg).abs() > 1e-9 {
            return Err(Error::BadProfile(
                "front and rear fields of view must match".into(),
            ));
        }
        for lens in [&self.front, &self.rear] {
            // re-run the constructor checks on deserialized data
            LensProfile::new(
                lens.fov_deg,
                lens.circle_center,
                lens.circle_radius,
                lens.falloff.clone(),
                lens.yaw_offset_deg,
            )?;
        }
        if !self.a_calib.is_invertible() {
            return Err(Error::SingularTransform);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_toml(text: &str) -> Result<CameraProfile> {
        let profile: CameraProfile = toml::from_str(text)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CameraProfile> {
        CameraProfile::from_toml(&std::fs::read_to_string(path)?)
    }
}
