//! Hermite-Gaussian mode fields, calibration probes and overlap integrals.
//!
//! Fields live on a uniform transverse [`Grid`] whose pixel `(ix, iy)` sits at
//! `((ix - nx/2)·dx, (iy - ny/2)·dy)`. Every module uses this convention, which
//! keeps the FFT phase bookkeeping in [`crate::diffraction`] exact for even
//! grid sizes. Arrays are stored row-major with shape `(ny, nx)`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest Hermite order accepted by [`hermite`].
pub const MAX_HERMITE_ORDER: usize = 64;

/// Required ratio between grid extent and any waist sampled on it.
pub const EXTENT_PER_WAIST: f64 = 8.0;

/// Uniform sampling of the transverse plane, centered on the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::validation(format!(
                "grid needs at least 2x2 pixels, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite()) {
            return Err(Error::validation(format!(
                "pixel pitch must be positive and finite, got dx={dx}, dy={dy}"
            )));
        }
        Ok(Grid { nx, ny, dx, dy })
    }

    /// Square `n`x`n` grid spanning `extent` along each axis.
    pub fn square(n: usize, extent: f64) -> Result<Self> {
        let pitch = extent / n as f64;
        Grid::new(n, n, pitch, pitch)
    }

    #[inline]
    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.dx
    }

    #[inline]
    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.dy
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny).map(|i| self.y(i)).collect()
    }

    pub fn extent_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn extent_y(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    pub fn pixel_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Checks that a beam of the given waist fits on the grid with the
    /// [`EXTENT_PER_WAIST`] margin along both axes.
    pub fn check_waist(&self, waist: f64) -> Result<()> {
        let needed = EXTENT_PER_WAIST * waist;
        if self.extent_x() < needed || self.extent_y() < needed {
            return Err(Error::validation(format!(
                "grid extent {:.4e} x {:.4e} is smaller than {EXTENT_PER_WAIST} x waist ({needed:.4e})",
                self.extent_x(),
                self.extent_y()
            )));
        }
        Ok(())
    }

    /// Checks that a beam displaced by `shift` along x keeps its 4-waist
    /// tails on the grid.
    pub fn check_displacement(&self, shift: f64, waist: f64) -> Result<()> {
        let needed = 2.0 * (shift.abs() + 4.0 * waist);
        if self.extent_x() < needed {
            return Err(Error::validation(format!(
                "displacement {shift:.4e} with waist {waist:.4e} needs extent {needed:.4e}, grid has {:.4e}",
                self.extent_x()
            )));
        }
        Ok(())
    }
}

/// Complex scalar field sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrid {
    pub grid: Grid,
    /// Shape `(ny, nx)`.
    pub values: Array2<Complex64>,
}

impl FieldGrid {
    pub fn zeros(grid: Grid) -> Self {
        FieldGrid {
            grid,
            values: Array2::zeros((grid.ny, grid.nx)),
        }
    }

    pub fn from_values(grid: Grid, values: Array2<Complex64>) -> Result<Self> {
        if values.dim() != (grid.ny, grid.nx) {
            return Err(Error::validation(format!(
                "array shape {:?} does not match grid {}x{}",
                values.dim(),
                grid.ny,
                grid.nx
            )));
        }
        Ok(FieldGrid { grid, values })
    }

    /// Separable field `f(x)·g(y)`.
    pub fn from_profiles(grid: Grid, fx: &[Complex64], gy: &[Complex64]) -> Self {
        debug_assert_eq!(fx.len(), grid.nx);
        debug_assert_eq!(gy.len(), grid.ny);
        let values = Array2::from_shape_fn((grid.ny, grid.nx), |(iy, ix)| fx[ix] * gy[iy]);
        FieldGrid { grid, values }
    }

    /// Value at the pixel nearest to `(x, y)`.
    pub fn at(&self, x: f64, y: f64) -> Complex64 {
        let ix = ((x / self.grid.dx).round() as isize + (self.grid.nx / 2) as isize)
            .clamp(0, self.grid.nx as isize - 1) as usize;
        let iy = ((y / self.grid.dy).round() as isize + (self.grid.ny / 2) as isize)
            .clamp(0, self.grid.ny as isize - 1) as usize;
        self.values[[iy, ix]]
    }

    /// Discrete power `Σ|E|²·dx·dy`.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.pixel_area()
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.values.mapv_inplace(|v| v * factor);
        self
    }
}

/// Hermite-Gaussian mode `φ_mn` with waist `waist`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HgMode {
    pub m: usize,
    pub n: usize,
    pub waist: f64,
}

impl HgMode {
    pub fn new(m: usize, n: usize, waist: f64) -> Result<Self> {
        if !(waist > 0.0 && waist.is_finite()) {
            return Err(Error::validation(format!(
                "waist must be positive, got {waist}"
            )));
        }
        for order in [m, n] {
            if order > MAX_HERMITE_ORDER {
                return Err(Error::OutOfBounds {
                    what: "mode order",
                    value: order,
                    max: MAX_HERMITE_ORDER,
                });
            }
        }
        Ok(HgMode { m, n, waist })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Fundamental Gaussian shifted by `offset` along x.
    Displaced { offset: f64 },
    /// Fundamental Gaussian carrying a linear phase `exp(i·k·x)`.
    Tilted { wavenumber: f64 },
}

/// Calibration probe: a fundamental Gaussian beam, displaced or tilted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    pub waist: f64,
}

impl ProbeSpec {
    pub fn displaced(offset: f64, waist: f64) -> Result<Self> {
        Self::checked(ProbeKind::Displaced { offset }, waist)
    }

    pub fn tilted(wavenumber: f64, waist: f64) -> Result<Self> {
        Self::checked(ProbeKind::Tilted { wavenumber }, waist)
    }

    fn checked(kind: ProbeKind, waist: f64) -> Result<Self> {
        if !(waist > 0.0 && waist.is_finite()) {
            return Err(Error::validation(format!(
                "probe waist must be positive, got {waist}"
            )));
        }
        Ok(ProbeSpec { kind, waist })
    }

    /// Displacement in units of the probe waist, as consumed by tomography.
    /// `None` for tilted probes.
    pub fn dimensionless_offset(&self) -> Option<f64> {
        match self.kind {
            ProbeKind::Displaced { offset } => Some(offset / self.waist),
            ProbeKind::Tilted { .. } => None,
        }
    }
}

/// Optical parameters of the far-field detection arm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentGeometry {
    pub wavelength: f64,
    pub focal_length: f64,
    pub fiber_waist: f64,
}

impl Default for ExperimentGeometry {
    fn default() -> Self {
        ExperimentGeometry {
            wavelength: 650e-9,
            focal_length: 8e-3,
            fiber_waist: 1.871e-6,
        }
    }
}

impl ExperimentGeometry {
    pub fn new(wavelength: f64, focal_length: f64, fiber_waist: f64) -> Result<Self> {
        let g = ExperimentGeometry {
            wavelength,
            focal_length,
            fiber_waist,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("focal_length", self.focal_length),
            ("fiber_waist", self.fiber_waist),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Transverse wave-vector of a beam tilted by `angle` radians.
    pub fn tilt_wavenumber(&self, angle: f64) -> f64 {
        2.0 * PI * angle / self.wavelength
    }

    /// Focal-plane position reached by spatial frequency `k`.
    pub fn focal_position(&self, k: f64) -> f64 {
        self.wavelength * self.focal_length * k / (2.0 * PI)
    }

    /// Waist in the focal plane of a collimated Gaussian of waist `w`.
    pub fn far_field_waist(&self, w: f64) -> f64 {
        self.wavelength * self.focal_length / (PI * w)
    }

    /// Collimated waist whose focus matches the fiber mode.
    pub fn matched_input_waist(&self) -> f64 {
        self.far_field_waist(self.fiber_waist)
    }
}

/// Physicists' Hermite polynomial `H_order(x)` by the three-term recurrence.
pub fn hermite(order: usize, x: f64) -> Result<f64> {
    if order > MAX_HERMITE_ORDER {
        return Err(Error::OutOfBounds {
            what: "Hermite order",
            value: order,
            max: MAX_HERMITE_ORDER,
        });
    }
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if order == 0 {
        return Ok(prev);
    }
    for n in 1..order {
        let next = 2.0 * x * cur - 2.0 * n as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `ln(n!)`: exact table for `n <= 20`, log-gamma above.
pub fn ln_factorial(n: usize) -> f64 {
    if n <= 20 {
        let mut acc: u64 = 1;
        for k in 2..=n as u64 {
            acc *= k;
        }
        (acc as f64).ln()
    } else {
        libm::lgamma(n as f64 + 1.0)
    }
}

/// `H_order(xi)/√(2^order·order!)` by its own recurrence, finite for all
/// supported orders where the raw polynomial would overflow.
pub fn normalized_hermite(order: usize, xi: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    for m in 0..order {
        let next = (2.0 / (m as f64 + 1.0)).sqrt() * xi * cur
            - (m as f64 / (m as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// One-dimensional normalized HG profile `u_m(x)` with `∫u_m² dx = 1`.
pub fn hg_profile(order: usize, waist: f64, x: f64) -> f64 {
    let xi = std::f64::consts::SQRT_2 * x / waist;
    let gauss = (2.0 / (PI * waist * waist)).powf(0.25) * (-(x * x) / (waist * waist)).exp();
    normalized_hermite(order, xi) * gauss
}

fn profile_on(order: usize, waist: f64, coords: &[f64], shift: f64) -> Vec<Complex64> {
    coords
        .iter()
        .map(|&c| Complex64::new(hg_profile(order, waist, c - shift), 0.0))
        .collect()
}

/// Samples `φ_mn` on `grid`.
pub fn hg_field(mode: &HgMode, grid: &Grid) -> Result<FieldGrid> {
    grid.check_waist(mode.waist)?;
    let fx = profile_on(mode.m, mode.waist, &grid.xs(), 0.0);
    let gy = profile_on(mode.n, mode.waist, &grid.ys(), 0.0);
    Ok(FieldGrid::from_profiles(*grid, &fx, &gy))
}

/// Samples a calibration probe on `grid`.
pub fn probe_field(probe: &ProbeSpec, grid: &Grid) -> Result<FieldGrid> {
    grid.check_waist(probe.waist)?;
    let gy = profile_on(0, probe.waist, &grid.ys(), 0.0);
    let fx = match probe.kind {
        ProbeKind::Displaced { offset } => {
            grid.check_displacement(offset, probe.waist)?;
            profile_on(0, probe.waist, &grid.xs(), offset)
        }
        ProbeKind::Tilted { wavenumber } => grid
            .xs()
            .iter()
            .map(|&x| Complex64::from_polar(hg_profile(0, probe.waist, x), wavenumber * x))
            .collect(),
    };
    Ok(FieldGrid::from_profiles(*grid, &fx, &gy))
}

/// Discrete inner product `Σ conj(a)·b·dx·dy`.
pub fn overlap(a: &FieldGrid, b: &FieldGrid) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::validation(format!(
            "overlap of fields on different grids: {:?} vs {:?}",
            a.grid, b.grid
        )));
    }
    let sum: Complex64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(u, v)| u.conj() * v)
        .sum();
    Ok(sum * a.grid.pixel_area())
}

/// Probability that an ideal projector onto `φ_n0` clicks for the probe
/// `φ_00(x - d, y)`: `(d/w)^{2n}/n! · exp(-d²/w²)`.
pub fn ideal_probability(n: usize, d: f64, w: f64) -> Result<f64> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::validation(format!(
            "waist must be positive, got {w}"
        )));
    }
    let s = (d / w) * (d / w);
    if n == 0 {
        return Ok((-s).exp());
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    if n <= 20 {
        let mut term = (-s).exp();
        for k in 1..=n {
            term *= s / k as f64;
        }
        Ok(term)
    } else {
        Ok((n as f64 * s.ln() - ln_factorial(n) - s).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize, w: f64) -> Grid {
        Grid::square(n, 16.0 * w).unwrap()
    }

    // Independent closed forms used as oracles.
    fn h3_closed(x: f64) -> f64 {
        8.0 * x.powi(3) - 12.0 * x
    }

    /// Composite Simpson rule on [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn hermite_low_orders() {
        assert_eq!(hermite(0, 3.7).unwrap(), 1.0);
        assert_eq!(hermite(1, 2.0).unwrap(), 4.0);
        assert_abs_diff_eq!(hermite(3, 1.0).unwrap(), h3_closed(1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(hermite(3, 1.0).unwrap(), -4.0, epsilon = 1e-12);
        for &x in &[-2.5, -0.3, 0.0, 0.9, 3.1] {
            assert_abs_diff_eq!(hermite(3, x).unwrap(), h3_closed(x), epsilon = 1e-9);
        }
    }

    #[test]
    fn hermite_order_guard() {
        assert!(hermite(64, 0.1).is_ok());
        assert!(matches!(hermite(65, 0.1), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn normalized_profile_matches_raw_polynomial() {
        let w = 1.3;
        for order in 0..8 {
            for &x in &[-1.7, 0.0, 0.4, 2.2] {
                let raw = (2.0 / (PI * w * w)).powf(0.25)
                    / ((2f64.powi(order as i32)) * ln_factorial(order).exp()).sqrt()
                    * hermite(order, std::f64::consts::SQRT_2 * x / w).unwrap()
                    * (-(x * x) / (w * w)).exp();
                assert_abs_diff_eq!(hg_profile(order, w, x), raw, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fundamental_peak_value() {
        let w = 1.0;
        let f = hg_field(&HgMode::new(0, 0, w).unwrap(), &grid(128, w)).unwrap();
        assert_abs_diff_eq!(
            f.at(0.0, 0.0).re,
            (2.0 / (PI * w * w)).sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn odd_mode_vanishes_on_axis() {
        let w = 0.7;
        let g = grid(128, w);
        let f = hg_field(&HgMode::new(1, 0, w).unwrap(), &g).unwrap();
        let ix0 = g.nx / 2;
        for iy in 0..g.ny {
            assert_eq!(f.values[[iy, ix0]].norm(), 0.0);
        }
    }

    #[test]
    fn hg30_norm_against_quadrature() {
        let w = 1.0;
        // Quadrature oracle of the analytic |φ_30|² along x (y-part integrates to 1).
        let oracle = simpson(
            |x| {
                let h = h3_closed(std::f64::consts::SQRT_2 * x / w);
                (2.0 / (PI * w * w)).sqrt() / 48.0 * h * h * (-2.0 * x * x / (w * w)).exp()
            },
            -8.0 * w,
            8.0 * w,
            4000,
        );
        assert_abs_diff_eq!(oracle, 1.0, epsilon = 1e-9);
        let f = hg_field(&HgMode::new(3, 0, w).unwrap(), &grid(256, w)).unwrap();
        assert_abs_diff_eq!(f.power(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn field_rejects_small_grid() {
        let g = Grid::square(64, 7.0).unwrap();
        assert!(matches!(
            hg_field(&HgMode::new(0, 0, 1.0).unwrap(), &g),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn zero_probes_equal_fundamental() {
        let w = 1.0;
        let g = grid(128, w);
        let fund = hg_field(&HgMode::new(0, 0, w).unwrap(), &g).unwrap();
        let d = probe_field(&ProbeSpec::displaced(0.0, w).unwrap(), &g).unwrap();
        let t = probe_field(&ProbeSpec::tilted(0.0, w).unwrap(), &g).unwrap();
        assert_eq!(d, fund);
        assert_eq!(t, fund);
    }

    #[test]
    fn displaced_probe_peak_moves() {
        let w = 1.0;
        let g = grid(128, w);
        let d = probe_field(&ProbeSpec::displaced(w, w).unwrap(), &g).unwrap();
        assert_abs_diff_eq!(d.at(w, 0.0).norm(), (2.0 / PI).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(d.power(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn displaced_probe_must_fit() {
        let g = grid(128, 1.0);
        let err = probe_field(&ProbeSpec::displaced(5.0, 1.0).unwrap(), &g);
        assert!(matches!(err, Err(Error::Validation(_))));
    }

    #[test]
    fn overlap_basics() {
        let w = 1.0;
        let g = grid(256, w);
        let f00 = hg_field(&HgMode::new(0, 0, w).unwrap(), &g).unwrap();
        let f10 = hg_field(&HgMode::new(1, 0, w).unwrap(), &g).unwrap();
        assert_abs_diff_eq!(overlap(&f00, &f00).unwrap().re, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(overlap(&f00, &f10).unwrap().norm(), 0.0, epsilon = 1e-6);

        // Quadrature oracle for the shifted-Gaussian overlap along x.
        let u0 = |x: f64| (2.0 / (PI * w * w)).powf(0.25) * (-(x * x) / (w * w)).exp();
        let oracle = simpson(|x| u0(x - w) * u0(x), -8.0, 8.0, 4000);
        assert_abs_diff_eq!(oracle, (-0.5f64).exp(), epsilon = 1e-9);
        let probe = probe_field(&ProbeSpec::displaced(w, w).unwrap(), &g).unwrap();
        assert_abs_diff_eq!(
            overlap(&probe, &f00).unwrap().norm(),
            oracle,
            epsilon = 1e-4
        );
    }

    #[test]
    fn overlap_rejects_mismatched_grids() {
        let a = FieldGrid::zeros(Grid::square(16, 1.0).unwrap());
        let b = FieldGrid::zeros(Grid::square(16, 2.0).unwrap());
        assert!(overlap(&a, &b).is_err());
    }

    #[test]
    fn ideal_probability_examples() {
        let w = 2.0;
        assert_eq!(ideal_probability(0, 0.0, w).unwrap(), 1.0);
        assert_eq!(ideal_probability(1, 0.0, w).unwrap(), 0.0);
        assert_abs_diff_eq!(
            ideal_probability(1, w, w).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-9
        );
        assert!(ideal_probability(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn ideal_probability_matches_quadrature_overlap() {
        // |∫ u0(x - d) u1(x) dx|² by Simpson, against the closed form.
        let w = 1.0;
        let d = 1.0;
        let amp = simpson(
            |x| hg_profile(0, w, x - d) * hg_profile(1, w, x),
            -10.0,
            10.0,
            6000,
        );
        assert_abs_diff_eq!(
            amp * amp,
            ideal_probability(1, d, w).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn log_domain_branch_is_continuous() {
        // The n > 20 branch agrees with direct products evaluated at n = 21.
        let d = 2.3;
        let direct = {
            let s: f64 = d * d;
            let mut t = (-s).exp();
            for k in 1..=21 {
                t *= s / k as f64;
            }
            t
        };
        assert_abs_diff_eq!(
            ideal_probability(21, d, 1.0).unwrap(),
            direct,
            epsilon = 1e-15
        );
    }

    #[test]
    fn ln_factorial_table_and_gamma_agree() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_abs_diff_eq!(ln_factorial(5), 120f64.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(ln_factorial(20), libm::lgamma(21.0), epsilon = 1e-12);
    }

    #[test]
    fn geometry_relations() {
        let g = ExperimentGeometry::default();
        let w_in = g.matched_input_waist();
        assert_abs_diff_eq!(g.far_field_waist(w_in), g.fiber_waist, epsilon = 1e-18);
        assert!(ExperimentGeometry::new(-1.0, 1.0, 1.0).is_err());
        let k = g.tilt_wavenumber(1e-3);
        assert_abs_diff_eq!(g.focal_position(k), g.focal_length * 1e-3, epsilon = 1e-15);
    }
}
