//! Blazed-grating hologram masks for a phase-only SLM.
//!
//! A mask displays `φ = M · mod_2π(F + 2πx/Λ)`. The local modulation depth
//! `M` controls how much light reaches the first diffraction order, so the
//! grating doubles as an amplitude modulator. Two encodings are provided:
//!
//! - [`Modulation::PhaseOnly`]: `M ≡ 1`, `F = Φ`.
//! - [`Modulation::ExactAmplitude`]: `M = sinc(π(A − 1))`, `F = Φ − πA`.

use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::{normalized_hermite, FieldGrid, Grid, HgMode};

const TWO_PI: f64 = 2.0 * PI;

/// Default grating period in pixels.
pub const DEFAULT_GRATING_PIXELS: usize = 8;

/// Minimum grating period in pixels.
pub const MIN_GRATING_PIXELS: f64 = 4.0;

/// Tolerance on `max A = 1` when validating targets.
const AMPLITUDE_NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "phase", alias = "phase_only")]
    PhaseOnly,
    #[serde(rename = "exact", alias = "exact_amplitude")]
    ExactAmplitude,
}

impl Modulation {
    pub fn as_str(self) -> &'static str {
        match self {
            Modulation::PhaseOnly => "phase",
            Modulation::ExactAmplitude => "exact",
        }
    }
}

impl std::str::FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase" | "phase_only" | "phase-only" => Ok(Modulation::PhaseOnly),
            "exact" | "exact_amplitude" | "exact-amplitude" => Ok(Modulation::ExactAmplitude),
            other => Err(Error::Config(format!(
                "unknown modulation `{other}` (expected `phase` or `exact`)"
            ))),
        }
    }
}

impl std::fmt::Display for Modulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Unnormalized sinc, `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Reduces a phase to `[0, 2π)`.
pub fn mod_2pi(phase: f64) -> f64 {
    let r = phase.rem_euclid(TWO_PI);
    if r >= TWO_PI {
        0.0
    } else {
        r
    }
}

/// Desired first-order field `A·exp(iΦ)` with `0 ≤ A ≤ 1`, `max A = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetField {
    pub grid: Grid,
    pub amplitude: Array2<f64>,
    pub phase: Array2<f64>,
}

impl TargetField {
    /// Builds a target, rescaling the amplitude so that its maximum is 1.
    pub fn normalized(grid: Grid, amplitude: Array2<f64>, phase: Array2<f64>) -> Result<Self> {
        let peak = amplitude.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::validation(
                "target amplitude must have a positive finite maximum",
            ));
        }
        let t = TargetField {
            grid,
            amplitude: amplitude.mapv(|a| a / peak),
            phase,
        };
        t.validate()?;
        Ok(t)
    }

    /// Checks shapes and `0 ≤ A ≤ 1` with `max A = 1`.
    pub fn validate(&self) -> Result<()> {
        let shape = (self.grid.ny, self.grid.nx);
        if self.amplitude.dim() != shape || self.phase.dim() != shape {
            return Err(Error::validation("target arrays do not match the grid"));
        }
        let mut peak = 0.0f64;
        for &a in &self.amplitude {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::validation(format!(
                    "target amplitude {a} is not in [0, 1]"
                )));
            }
            peak = peak.max(a);
        }
        if (peak - 1.0).abs() > AMPLITUDE_NORM_TOL {
            return Err(Error::validation(format!(
                "target amplitude is not normalized (max A = {peak}); divide A by its maximum first"
            )));
        }
        if self.phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("target phase must be finite"));
        }
        Ok(())
    }

    /// Detection target for the HG mode `mode` under Gaussian illumination of
    /// waist `illumination_waist`.
    ///
    /// The hologram has to turn the illuminating Gaussian into the mode, so the
    /// amplitude is `|φ_mn / g_in|` (for matched waists just the Hermite
    /// polynomial factor), normalized to its maximum inside the square
    /// `|x|, |y| ≤ clip_radius` and saturated at 1 outside it. The phase is 0
    /// where the mode is nonnegative and π where it is negative.
    pub fn for_mode(
        mode: &HgMode,
        illumination_waist: f64,
        clip_radius: f64,
        grid: &Grid,
    ) -> Result<Self> {
        if !(illumination_waist > 0.0 && clip_radius > 0.0) {
            return Err(Error::validation(
                "illumination waist and clip radius must be positive",
            ));
        }
        let w = mode.waist;
        let excess = 1.0 / (w * w) - 1.0 / (illumination_waist * illumination_waist);
        let profile = |order: usize, c: f64| {
            let h = normalized_hermite(order, std::f64::consts::SQRT_2 * c / w);
            (h, h.abs() * (-c * c * excess).exp())
        };
        let px: Vec<(f64, f64)> = grid.xs().iter().map(|&x| profile(mode.m, x)).collect();
        let py: Vec<(f64, f64)> = grid.ys().iter().map(|&y| profile(mode.n, y)).collect();

        let peak = |p: &[(f64, f64)], coords: Vec<f64>| {
            p.iter()
                .zip(coords)
                .filter(|(_, c)| c.abs() <= clip_radius)
                .map(|(v, _)| v.1)
                .fold(0.0, f64::max)
        };
        let norm = peak(&px, grid.xs()) * peak(&py, grid.ys());
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::validation(
                "clip radius leaves no nonzero amplitude on the grid",
            ));
        }
        let amplitude = Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
            (px[ix].1 * py[iy].1 / norm).min(1.0)
        });
        let phase = Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
            if px[ix].0 * py[iy].0 < 0.0 {
                PI
            } else {
                0.0
            }
        });
        let t = TargetField {
            grid: *grid,
            amplitude,
            phase,
        };
        t.validate()?;
        Ok(t)
    }
}

/// Grating period along x and the amplitude encoding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GratingSpec {
    pub period: f64,
    pub modulation: Modulation,
}

impl GratingSpec {
    pub fn new(period: f64, modulation: Modulation) -> Self {
        GratingSpec { period, modulation }
    }

    /// Default period of [`DEFAULT_GRATING_PIXELS`] pixels.
    pub fn default_for(grid: &Grid, modulation: Modulation) -> Self {
        GratingSpec::new(DEFAULT_GRATING_PIXELS as f64 * grid.dx, modulation)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.period.is_finite() && self.period >= MIN_GRATING_PIXELS * grid.dx * (1.0 - 1e-12))
        {
            return Err(Error::validation(format!(
                "grating period {:.4e} is shorter than {MIN_GRATING_PIXELS} pixels ({:.4e})",
                self.period,
                MIN_GRATING_PIXELS * grid.dx
            )));
        }
        Ok(())
    }

    /// Modulation depth and phase offset `(M, F)` for one target pixel.
    pub fn encode(&self, amplitude: f64, phase: f64) -> (f64, f64) {
        match self.modulation {
            Modulation::PhaseOnly => (1.0, phase),
            Modulation::ExactAmplitude => (sinc(PI * (amplitude - 1.0)), phase - PI * amplitude),
        }
    }
}

/// Phase pattern in `[0, 2π)` to be displayed on the SLM.
#[derive(Clone, Debug, PartialEq)]
pub struct HologramMask {
    pub grid: Grid,
    pub phase: Array2<f64>,
    pub grating: GratingSpec,
}

/// Synthesizes the mask producing `target` in the first diffraction order.
pub fn synthesize_mask(target: &TargetField, grating: &GratingSpec) -> Result<HologramMask> {
    grating.validate(&target.grid)?;
    target.validate()?;
    let grid = target.grid;
    let k_grating = TWO_PI / grating.period;
    let xs = grid.xs();
    let phase = Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| {
        let (depth, offset) = grating.encode(target.amplitude[[iy, ix]], target.phase[[iy, ix]]);
        let p = depth * mod_2pi(offset + k_grating * xs[ix]);
        // M ≤ 1 keeps p below 2π except for rounding at M = 1.
        if p >= TWO_PI {
            0.0
        } else {
            p
        }
    });
    Ok(HologramMask {
        grid,
        phase,
        grating: *grating,
    })
}

/// Multiplies `input` by `exp(iφ)` pixelwise.
pub fn apply_mask(input: &FieldGrid, mask: &HologramMask) -> Result<FieldGrid> {
    if input.grid != mask.grid {
        return Err(Error::validation("mask and field grids differ"));
    }
    let mut out = input.clone();
    out.values
        .zip_mut_with(&mask.phase, |v, &p| *v *= Complex64::from_polar(1.0, p));
    Ok(out)
}

impl HologramMask {
    /// Pure blazed grating with no encoded field.
    pub fn grating_only(grid: Grid, grating: GratingSpec) -> Result<Self> {
        grating.validate(&grid)?;
        let k = TWO_PI / grating.period;
        let xs = grid.xs();
        let phase = Array2::from_shape_fn((grid.ny, grid.nx), |(_, ix)| mod_2pi(k * xs[ix]));
        Ok(HologramMask {
            grid,
            phase,
            grating,
        })
    }

    /// 8-bit level of a phase value, `floor(φ/2π·256)` clamped to 255.
    pub fn level(phase: f64) -> u8 {
        ((phase / TWO_PI * 256.0).floor()).clamp(0.0, 255.0) as u8
    }

    /// Copy with every pixel snapped to its 8-bit level.
    pub fn quantized(&self) -> HologramMask {
        HologramMask {
            grid: self.grid,
            phase: self.phase.mapv(|p| Self::level(p) as f64 * TWO_PI / 256.0),
            grating: self.grating,
        }
    }

    /// Binary PGM (`P5`, maxval 255), first row = `iy = 0`.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.grid.nx, self.grid.ny)?;
        let bytes: Vec<u8> = self.phase.iter().map(|&p| Self::level(p)).collect();
        out.write_all(&bytes)?;
        Ok(())
    }
}
