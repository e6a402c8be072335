//! Far-field simulation of a hologram detector.
//!
//! The filtered beam is Fourier transformed to the focal plane of the
//! detection lens, the first grating order is cut out and re-centered, and
//! the single-mode fiber is modelled as a Gaussian of waist `w_f` displaced
//! across that plane. Displacements are dimensionless, in units of `w_f`.
//!
//! The SLM is illuminated by a fundamental Gaussian whose focus matches the
//! fiber mode, i.e. the detector is probed in reverse: shifting the fiber in
//! the focal plane is equivalent to tilting the probe beam at the SLM.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hologram::{apply_mask, synthesize_mask, GratingSpec, Modulation, TargetField};
use crate::modes::{
    hg_field, overlap, probe_field, ExperimentGeometry, FieldGrid, Grid, HgMode, ProbeSpec,
};
use crate::par::{self, Execution};
use crate::tomography::{Normalization, ProbabilityMatrix};

/// Focal-plane field of a collimated beam.
#[derive(Clone, Debug, PartialEq)]
pub struct FarField {
    /// Field sampled in focal-plane coordinates, scaled so that its power
    /// equals the power of the source field.
    pub field: FieldGrid,
    pub dkx: f64,
    pub dky: f64,
    pub geometry: ExperimentGeometry,
    /// Power of the beam that entered the hologram.
    pub source_power: f64,
}

impl FarField {
    pub fn power(&self) -> f64 {
        self.field.power()
    }

    /// Index offsets `(carrier, half_x, half_y)` of the first-order window.
    fn window(&self, grating: &GratingSpec) -> Result<(usize, usize, usize)> {
        if !(grating.period > 0.0 && grating.period.is_finite()) {
            return Err(Error::validation("grating period must be positive"));
        }
        let k_carrier = 2.0 * PI / grating.period;
        let carrier = (k_carrier / self.dkx).round() as usize;
        let half_x = (0.5 * k_carrier / self.dkx).round() as usize;
        let half_y = (0.5 * k_carrier / self.dky).round() as usize;
        let g = self.field.grid;
        if half_x == 0 || half_y == 0 {
            return Err(Error::validation(
                "first-order window is narrower than one pixel",
            ));
        }
        if g.nx / 2 + carrier + half_x > g.nx || half_y > g.ny / 2 {
            return Err(Error::validation(format!(
                "first-order window (carrier {carrier}, half-widths {half_x}x{half_y} px) exceeds the {}x{} far-field grid",
                g.nx, g.ny
            )));
        }
        Ok((carrier, half_x, half_y))
    }

    /// Splits the field into the first-order window, re-centered at zero
    /// frequency, and the power left outside it.
    pub fn first_order_split(&self, grating: &GratingSpec) -> Result<(FarField, f64)> {
        let (carrier, half_x, half_y) = self.window(grating)?;
        let g = self.field.grid;
        let x0 = g.nx / 2 + carrier - half_x;
        let y0 = g.ny / 2 - half_y;
        let (wx, wy) = (2 * half_x, 2 * half_y);

        let mut remainder = 0.0;
        for ((iy, ix), v) in self.field.values.indexed_iter() {
            let inside = (x0..x0 + wx).contains(&ix) && (y0..y0 + wy).contains(&iy);
            if !inside {
                remainder += v.norm_sqr();
            }
        }
        remainder *= g.pixel_area();

        let window = self
            .field
            .values
            .slice(ndarray::s![y0..y0 + wy, x0..x0 + wx])
            .to_owned();
        let grid = Grid::new(wx, wy, g.dx, g.dy)?;
        let extracted = FarField {
            field: FieldGrid::from_values(grid, window)?,
            ..self.clone()
        };
        Ok((extracted, remainder))
    }
}

/// Swaps quadrants of an even-sized row-major array.
fn swap_quadrants(data: &mut [Complex64], nx: usize, ny: usize) {
    let (hx, hy) = (nx / 2, ny / 2);
    for iy in 0..hy {
        for ix in 0..nx {
            let a = iy * nx + ix;
            let b = (iy + hy) * nx + (ix + hx) % nx;
            data.swap(a, b);
        }
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

fn fft_rows(data: &mut [Complex64], len: usize, exec: Execution) {
    let fft = FftPlanner::new().plan_fft_forward(len);
    par::for_each_chunk_mut(exec, data, len, |row| fft.process(row));
}

/// Centered 2-D DFT of `input` with the grid convention of [`crate::modes`],
/// scaled by `dx·dy/(2π)` so that `Σ|F|²·dkx·dky = Σ|f|²·dx·dy`.
pub fn centered_fft2(input: &FieldGrid, exec: Execution) -> Result<(Vec<Complex64>, f64, f64)> {
    let g = input.grid;
    if g.nx % 2 != 0 || g.ny % 2 != 0 {
        return Err(Error::validation(format!(
            "far-field propagation needs even grid sizes, got {}x{}",
            g.nx, g.ny
        )));
    }
    let mut data: Vec<Complex64> = input.values.iter().cloned().collect();
    swap_quadrants(&mut data, g.nx, g.ny);
    fft_rows(&mut data, g.nx, exec);
    let mut cols = transpose(&data, g.ny, g.nx);
    fft_rows(&mut cols, g.ny, exec);
    let mut data = transpose(&cols, g.nx, g.ny);
    swap_quadrants(&mut data, g.nx, g.ny);
    let scale = g.pixel_area() / (2.0 * PI);
    data.iter_mut().for_each(|v| *v *= scale);
    let dkx = 2.0 * PI / g.extent_x();
    let dky = 2.0 * PI / g.extent_y();
    Ok((data, dkx, dky))
}

/// Focal-plane field of `input` behind a lens of focal length `f`.
///
/// Spatial frequency `k` lands at `x_f = λ f k / (2π)`; amplitudes are scaled
/// so that power is preserved.
pub fn far_field(input: &FieldGrid, geometry: &ExperimentGeometry) -> Result<FarField> {
    far_field_with(input, geometry, Execution::default())
}

pub fn far_field_with(
    input: &FieldGrid,
    geometry: &ExperimentGeometry,
    exec: Execution,
) -> Result<FarField> {
    geometry.validate()?;
    let (mut data, dkx, dky) = centered_fft2(input, exec)?;
    let cx = geometry.focal_position(dkx) / dkx;
    let cy = geometry.focal_position(dky) / dky;
    let amp = 1.0 / (cx * cy).sqrt();
    data.iter_mut().for_each(|v| *v *= amp);
    let g = input.grid;
    let grid = Grid::new(g.nx, g.ny, cx * dkx, cy * dky)?;
    let values = ndarray::Array2::from_shape_vec((g.ny, g.nx), data)
        .map_err(|e| Error::validation(e.to_string()))?;
    Ok(FarField {
        field: FieldGrid::from_values(grid, values)?,
        dkx,
        dky,
        geometry: *geometry,
        source_power: input.power(),
    })
}

/// First grating order, windowed to half-width `π/Λ` around the carrier
/// `2π/Λ` and re-centered at zero frequency.
pub fn extract_first_order(ff: &FarField, grating: &GratingSpec) -> Result<FarField> {
    Ok(ff.first_order_split(grating)?.0)
}

/// Fiber coupling `|⟨g_δ|E⟩|² / P_source` for the fiber mode displaced by
/// `delta·w_f` along x.
pub fn detection_probability(
    ff: &FarField,
    delta: f64,
    geometry: &ExperimentGeometry,
) -> Result<f64> {
    if ff.source_power.is_nan() || ff.source_power <= 0.0 {
        return Err(Error::validation("far field carries no source power"));
    }
    let w_f = geometry.fiber_waist;
    let fiber = probe_field(&ProbeSpec::displaced(delta * w_f, w_f)?, &ff.field.grid)?;
    Ok(overlap(&fiber, &ff.field)?.norm_sqr() / ff.source_power)
}

/// Sampling of the SLM plane for simulations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSetup {
    /// Pixels per side of the square SLM grid (even).
    pub grid_size: usize,
    /// Grid extent in units of the illumination waist.
    pub extent_factor: f64,
    /// Grating period in pixels.
    pub grating_pixels: f64,
    /// Half-width of the box over which the amplitude target is normalized,
    /// in units of the illumination waist.
    pub clip_radius: f64,
}

impl Default for SimulationSetup {
    fn default() -> Self {
        SimulationSetup {
            grid_size: 1024,
            extent_factor: 16.0,
            grating_pixels: crate::hologram::DEFAULT_GRATING_PIXELS as f64,
            clip_radius: 3.0,
        }
    }
}

impl SimulationSetup {
    /// Illumination waist at the SLM, focused onto the fiber mode.
    pub fn illumination_waist(&self, geometry: &ExperimentGeometry) -> f64 {
        geometry.matched_input_waist()
    }

    pub fn slm_grid(&self, geometry: &ExperimentGeometry) -> Result<Grid> {
        if self.grid_size % 2 != 0 {
            return Err(Error::validation("simulation grid size must be even"));
        }
        Grid::square(
            self.grid_size,
            self.extent_factor * self.illumination_waist(geometry),
        )
    }

    pub fn grating(&self, grid: &Grid, modulation: Modulation) -> GratingSpec {
        GratingSpec::new(self.grating_pixels * grid.dx, modulation)
    }
}

/// Displacement grid and detector set of a simulated scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    /// Fiber displacements in units of the fiber waist, strictly increasing.
    pub displacements: Vec<f64>,
    /// Detector mode orders `n` (x-order, y-order 0).
    pub modes: Vec<usize>,
    pub modulation: Modulation,
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.displacements.len() < 2 {
            return Err(Error::validation("a scan needs at least two displacements"));
        }
        if self
            .displacements
            .windows(2)
            .any(|w| !w[0].is_finite() || !w[1].is_finite() || w[1] <= w[0])
        {
            return Err(Error::validation(
                "displacements must be finite and strictly increasing",
            ));
        }
        if self.modes.is_empty() {
            return Err(Error::validation("a scan needs at least one detector mode"));
        }
        Ok(())
    }
}

/// Evenly spaced displacements over `[start, end]`.
pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    let step = (end - start) / (points - 1) as f64;
    (0..points).map(|i| start + step * i as f64).collect()
}

/// Output of [`simulate_scan`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    /// Raw detection probabilities relative to the input beam power.
    pub probabilities: ProbabilityMatrix,
    /// First-order power of each detector over the input power.
    pub first_order_power: Vec<f64>,
}

/// First-order far field of the hologram for detector mode `n`.
pub fn detector_far_field(
    n: usize,
    modulation: Modulation,
    geometry: &ExperimentGeometry,
    setup: &SimulationSetup,
    exec: Execution,
) -> Result<(FarField, GratingSpec)> {
    let grid = setup.slm_grid(geometry)?;
    let w = setup.illumination_waist(geometry);
    let input = hg_field(&HgMode::new(0, 0, w)?, &grid)?;
    let target = TargetField::for_mode(&HgMode::new(n, 0, w)?, w, setup.clip_radius * w, &grid)?;
    let grating = setup.grating(&grid, modulation);
    let mask = synthesize_mask(&target, &grating)?;
    let shaped = apply_mask(&input, &mask)?;
    let ff = far_field_with(&shaped, geometry, exec)?;
    Ok((extract_first_order(&ff, &grating)?, grating))
}

/// Simulated detection probabilities for every (displacement, mode) pair.
pub fn simulate_scan(
    config: &ScanConfig,
    geometry: &ExperimentGeometry,
    setup: &SimulationSetup,
) -> Result<ScanResult> {
    simulate_scan_with(config, geometry, setup, Execution::default())
}

pub fn simulate_scan_with(
    config: &ScanConfig,
    geometry: &ExperimentGeometry,
    setup: &SimulationSetup,
    exec: Execution,
) -> Result<ScanResult> {
    config.validate()?;
    geometry.validate()?;
    let fields = par::map_indexed(exec, config.modes.len(), |j| {
        detector_far_field(config.modes[j], config.modulation, geometry, setup, exec)
            .map(|(ff, _)| ff)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let d = config.displacements.len();
    let cells = par::map_indexed(exec, d * fields.len(), |idx| {
        let (j, i) = (idx / d, idx % d);
        detection_probability(&fields[j], config.displacements[i], geometry)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let values = DMatrix::from_fn(d, fields.len(), |i, j| cells[j * d + i]);
    let probabilities = ProbabilityMatrix::new(
        values,
        config.displacements.clone(),
        config.modes.clone(),
        Normalization::Raw,
    )?;
    let first_order_power = fields.iter().map(|f| f.power() / f.source_power).collect();
    Ok(ScanResult {
        probabilities,
        first_order_power,
    })
}

/// First-order power for `mode_order` relative to the fundamental-mode
/// hologram with the same modulation.
pub fn diffraction_efficiency(
    mode_order: usize,
    modulation: Modulation,
    geometry: &ExperimentGeometry,
    setup: &SimulationSetup,
) -> Result<f64> {
    Ok(diffraction_efficiencies(
        &[mode_order],
        modulation,
        geometry,
        setup,
        Execution::default(),
    )?[0])
}

/// [`diffraction_efficiency`] for several modes, sharing the reference run.
pub fn diffraction_efficiencies(
    modes: &[usize],
    modulation: Modulation,
    geometry: &ExperimentGeometry,
    setup: &SimulationSetup,
    exec: Execution,
) -> Result<Vec<f64>> {
    let mut orders = vec![0];
    orders.extend(modes.iter().copied().filter(|&n| n != 0));
    let powers = par::map_indexed(exec, orders.len(), |j| {
        detector_far_field(orders[j], modulation, geometry, setup, exec)
            .map(|(ff, _)| ff.power() / ff.source_power)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let reference = powers[0];
    Ok(modes
        .iter()
        .map(|&n| {
            if n == 0 {
                1.0
            } else {
                let j = orders.iter().position(|&o| o == n).unwrap();
                powers[j] / reference
            }
        })
        .collect())
}
