//! Command-line interface for the dual-fisheye stitcher.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use duostitch::align::ControlPointSet;
use duostitch::error::Error;
use duostitch::io::{load_image, save_png};
use duostitch::pipeline::{calibrate_align, calibrate_vignette, stitch, StitchOptions};
use duostitch::profile::CameraProfile;
use duostitch::synth::{checker_gradient_pano, render_dual, value_noise_pano, Exposure, SynthConfig};
use duostitch::vignette::{reference_falloff, FalloffPolynomial};
use duostitch::warp::AffineTransform2D;

#[derive(Parser)]
#[command(
    name = "duostitch",
    version,
    about = "Stitch dual-fisheye captures into 360x180 equirectangular panoramas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stitch a dual-fisheye frame into a panorama.
    Stitch {
        /// Input frame (PNG or JPEG), two square fisheye halves side by side.
        input: PathBuf,
        /// Camera profile (TOML).
        #[arg(long)]
        profile: PathBuf,
        /// Output panorama (PNG).
        #[arg(long)]
        out: PathBuf,
        /// Panorama height in pixels (width is twice this); defaults to the
        /// profile's value.
        #[arg(long)]
        pano_height: Option<usize>,
        /// Skip the adaptive refinement; apply only the precomputed affine.
        #[arg(long)]
        no_refine: bool,
        /// Blend with the raw ramp weights instead of the normalized ones.
        #[arg(long)]
        paper_ramp: bool,
        /// Write a JSON run report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write 16-bit PNG instead of 8-bit.
        #[arg(long)]
        deep: bool,
    },
    /// Fit the per-lens fall-off polynomials from a flat-field frame.
    CalibrateVignette {
        /// Frame of a uniformly lit target (PNG or JPEG).
        frame: PathBuf,
        /// Base profile to update; defaults to a neutral profile matching
        /// the frame geometry.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Where to write the updated profile.
        #[arg(long)]
        out: PathBuf,
        /// Polynomial degree of the fit.
        #[arg(long, default_value_t = 5)]
        degree: usize,
        /// Number of radial bins measured per lens.
        #[arg(long, default_value_t = 128)]
        bins: usize,
    },
    /// Estimate the first-alignment affine from control-point pairs.
    CalibrateAlign {
        /// CSV of pairs with header x1,y1,x2,y2 (target first), in panorama
        /// canvas coordinates.
        points: PathBuf,
        /// Base profile to update; defaults to the reference camera profile.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Where to write the updated profile.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic dual-fisheye frame from a procedural panorama.
    Synth {
        /// Output frame (PNG).
        #[arg(long)]
        out: PathBuf,
        /// Noise generator seed; identical seeds give identical frames.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Half-frame size in pixels (frame is twice as wide).
        #[arg(long, default_value_t = 512)]
        halfframe: usize,
        /// Lens field of view in degrees.
        #[arg(long, default_value_t = 193.0)]
        fov: f64,
        /// Scene to render.
        #[arg(long, value_enum, default_value_t = Scene::Checker)]
        scene: Scene,
        /// Rear-canvas misalignment to inject, as "a,b,c,d,tx,ty".
        #[arg(long)]
        misalign: Option<String>,
        /// Apply the reference fall-off curve (scaled to the half-frame).
        #[arg(long)]
        vignette: bool,
        /// Exposure gain of the rear lens.
        #[arg(long, default_value_t = 1.0)]
        exposure_gain: f64,
        /// Exposure bias of the rear lens.
        #[arg(long, default_value_t = 0.0)]
        exposure_bias: f64,
        /// Gaussian noise sigma.
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        /// Also write the ground-truth panorama here.
        #[arg(long)]
        save_pano: Option<PathBuf>,
        /// Also write the matching camera profile here.
        #[arg(long)]
        save_profile: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scene {
    /// Soft checkerboard over a periodic gradient.
    Checker,
    /// Smooth random texture.
    Noise,
}

/// Exit code for bad invocations (missing files, malformed arguments).
const USAGE_EXIT: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE_EXIT)
        }
        Err(CliError::Run(err)) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

enum CliError {
    /// Invocation problem: bad arguments or missing input files.
    Usage(String),
    /// Processing failure.
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn parse_misalign(text: &str) -> Result<AffineTransform2D, CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("cannot parse misalign transform '{text}'")))?;
    if parts.len() != 6 {
        return Err(CliError::Usage(
            "misalign needs six numbers: a,b,c,d,tx,ty".into(),
        ));
    }
    Ok(AffineTransform2D::from_array([
        parts[0], parts[1], parts[2], parts[3], parts[4], parts[5],
    ]))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stitch {
            input,
            profile,
            out,
            pano_height,
            no_refine,
            paper_ramp,
            report,
            deep,
        } => {
            require_file(&input, "input frame")?;
            require_file(&profile, "profile")?;
            let frame = load_image(&input)?;
            let profile = CameraProfile::load(&profile)?;
            let opts = StitchOptions {
                refine: !no_refine,
                normalized_ramp: if paper_ramp { Some(false) } else { None },
                pano_height,
            };
            let (pano, run_report) = stitch(&frame, &profile, &opts)?;
            save_png(&out, &pano, deep)?;
            for band in &run_report.bands {
                println!(
                    "{:?} band: displacement ({}, {}), peak gamma {:.4}{}",
                    band.side,
                    band.du,
                    band.dv,
                    band.peak_gamma,
                    if band.low_confidence {
                        " (low confidence, ignored)"
                    } else {
                        ""
                    }
                );
            }
            println!(
                "seam |diff|: left {:.5}, right {:.5}",
                run_report.seam_abs_diff.left, run_report.seam_abs_diff.right
            );
            println!(
                "wrote {}x{} panorama to {}",
                run_report.pano_width,
                run_report.pano_height,
                out.display()
            );
            if let Some(path) = report {
                std::fs::write(&path, run_report.to_json()?).map_err(Error::from)?;
                println!("wrote report to {}", path.display());
            }
            Ok(())
        }
        Command::CalibrateVignette {
            frame,
            profile,
            out,
            degree,
            bins,
        } => {
            require_file(&frame, "flat-field frame")?;
            let img = load_image(&frame)?;
            let mut prof = match profile {
                Some(p) => {
                    require_file(&p, "profile")?;
                    CameraProfile::load(&p)?
                }
                None => CameraProfile::neutral(img.height())?,
            };
            let (calib, _profiles) = calibrate_vignette(&img, &mut prof, degree, bins)?;
            println!(
                "front fit rms {:.6}, rear fit rms {:.6}",
                calib.front.rms_residual, calib.rear.rms_residual
            );
            println!("front coefficients: {:?}", calib.front.coeffs);
            println!("rear coefficients:  {:?}", calib.rear.coeffs);
            prof.save(&out)?;
            println!("wrote profile to {}", out.display());
            Ok(())
        }
        Command::CalibrateAlign {
            points,
            profile,
            out,
        } => {
            require_file(&points, "control point csv")?;
            let file = std::fs::File::open(&points).map_err(Error::from)?;
            let set = ControlPointSet::read_csv(file)?;
            let mut prof = match profile {
                Some(p) => {
                    require_file(&p, "profile")?;
                    CameraProfile::load(&p)?
                }
                None => CameraProfile::reference_camera(),
            };
            let calib = calibrate_align(&set, &mut prof)?;
            println!(
                "estimated affine from {} pairs: a={:.6} b={:.6} c={:.6} d={:.6} tx={:.3} ty={:.3}",
                calib.pairs,
                calib.a_calib.a,
                calib.a_calib.b,
                calib.a_calib.c,
                calib.a_calib.d,
                calib.a_calib.tx,
                calib.a_calib.ty
            );
            println!(
                "residuals: rms {:.4} px, max {:.4} px",
                calib.rms_residual, calib.max_residual
            );
            prof.save(&out)?;
            println!("wrote profile to {}", out.display());
            Ok(())
        }
        Command::Synth {
            out,
            seed,
            halfframe,
            fov,
            scene,
            misalign,
            vignette,
            exposure_gain,
            exposure_bias,
            noise_sigma,
            save_pano,
            save_profile,
        } => {
            let pano = match scene {
                Scene::Checker => checker_gradient_pano(halfframe),
                Scene::Noise => {
                    let mut noise = value_noise_pano(halfframe, seed, 6);
                    // promote to 3 channels so both paths are exercised
                    let mut rgb =
                        duostitch::buffer::ImageBuffer::new(noise.width(), noise.height(), 3);
                    for y in 0..noise.height() {
                        for x in 0..noise.width() {
                            let v = noise.pixel(x, y)[0];
                            rgb.pixel_mut(x, y).copy_from_slice(&[v, v, v]);
                        }
                    }
                    std::mem::swap(&mut noise, &mut rgb);
                    noise
                }
            };
            let falloff = if vignette {
                Some(scaled_reference_falloff(halfframe as f64 / 2.0))
            } else {
                None
            };
            let cfg = SynthConfig {
                fov_deg: fov,
                halfframe_size: halfframe,
                misalign: match misalign {
                    Some(text) => parse_misalign(&text)?,
                    None => AffineTransform2D::IDENTITY,
                },
                vignette: falloff,
                front_exposure: Exposure::default(),
                rear_exposure: Exposure {
                    gain: exposure_gain,
                    bias: exposure_bias,
                },
                noise_sigma,
                seed,
            };
            let frame = render_dual(&pano, &cfg)?;
            save_png(&out, &frame, false)?;
            println!(
                "wrote {}x{} dual-fisheye frame to {}",
                frame.width(),
                frame.height(),
                out.display()
            );
            if let Some(path) = save_pano {
                save_png(&path, &pano, false)?;
                println!("wrote ground-truth panorama to {}", path.display());
            }
            if let Some(path) = save_profile {
                CameraProfile::for_synth(&cfg)?.save(&path)?;
                println!("wrote profile to {}", path.display());
            }
            Ok(())
        }
    }
}

/// The reference fall-off curve rescaled from its native 1944 px radius to
/// the given circle radius, so small synthetic frames show the same shape.
fn scaled_reference_falloff(radius: f64) -> FalloffPolynomial {
    let p = reference_falloff();
    let scale = 1944.0 / radius;
    let n = p.coeffs().len() - 1;
    let coeffs = p
        .coeffs()
        .iter()
        .enumerate()
        .map(|(j, c)| c * scale.powi((n - j) as i32))
        .collect();
    FalloffPolynomial::new(coeffs).expect("scaled reference curve is valid")
}
