//! Detector tomography in the Hermite-Gaussian basis.
//!
//! A detector outcome `n` is described by a POVM element
//! `Π_n = Σ_kp θ⁽ⁿ⁾_kp |k⟩⟨p|`. Displaced-Gaussian probes have real
//! coefficients `v_k(d) = e^{-d²/2} d^k/√k!` in that basis, so the click
//! probability for probe `i` is linear in θ:
//!
//! ```text
//! P_in = Σ_kp F_{i,kp} θ⁽ⁿ⁾_kp,   F_{i,kp} = v_k(d_i) v_p(d_i)
//! ```
//!
//! The default [`Model::Diagonal`] keeps only `k = p`; `θ` is then an `N×M`
//! array whose columns (fixed `k`) each lie on the probability simplex.
//! Displacements here are dimensionless (in units of the probe waist).

mod solver;

pub use solver::{project_simplex, reconstruct, Reconstruction, ReconstructionConfig};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::ln_factorial;

/// Slack allowed on per-probe row sums.
const ROW_SUM_TOL: f64 = 1e-9;

/// Threshold above which a diagonal design matrix is reported as
/// ill-conditioned.
pub const CONDITION_WARNING: f64 = 1e8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Probabilities relative to the input beam power.
    Raw,
    /// Each detector column divided by that detector's integral first-order
    /// intensity, removing its diffraction efficiency.
    #[default]
    PerMode,
    /// Each probe row divided by its total over detectors.
    PerProbe,
}

impl std::str::FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Normalization::Raw),
            "per-mode" | "per_mode" => Ok(Normalization::PerMode),
            "per-probe" | "per_probe" => Ok(Normalization::PerProbe),
            other => Err(Error::Config(format!(
                "unknown normalization `{other}` (expected raw, per-mode or per-probe)"
            ))),
        }
    }
}

/// `D×N` matrix of click probabilities: probe `i` (row) by detector `n`
/// (column).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMatrix {
    pub values: DMatrix<f64>,
    /// Dimensionless probe displacements, one per row.
    pub displacements: Vec<f64>,
    /// Detector mode orders, one per column.
    pub modes: Vec<usize>,
    pub normalization: Normalization,
}

impl ProbabilityMatrix {
    pub fn new(
        values: DMatrix<f64>,
        displacements: Vec<f64>,
        modes: Vec<usize>,
        normalization: Normalization,
    ) -> Result<Self> {
        let p = ProbabilityMatrix {
            values,
            displacements,
            modes,
            normalization,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, n) = self.values.shape();
        if d != self.displacements.len() || n != self.modes.len() {
            return Err(Error::validation(format!(
                "probability matrix is {d}x{n} but has {} displacements and {} modes",
                self.displacements.len(),
                self.modes.len()
            )));
        }
        if d == 0 || n == 0 {
            return Err(Error::validation("probability matrix is empty"));
        }
        if let Some(v) = self.values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::validation(format!(
                "probability {v} is negative or not finite"
            )));
        }
        if self.normalization == Normalization::PerProbe {
            for (i, row) in self.values.row_iter().enumerate() {
                if row.sum() > 1.0 + ROW_SUM_TOL {
                    return Err(Error::validation(format!("row {i} sums to more than 1")));
                }
            }
        }
        Ok(())
    }

    pub fn probes(&self) -> usize {
        self.values.nrows()
    }

    pub fn detectors(&self) -> usize {
        self.values.ncols()
    }

    /// Divides column `n` by `integral_intensity[n]`.
    pub fn normalized_per_mode(&self, integral_intensity: &[f64]) -> Result<Self> {
        if integral_intensity.len() != self.detectors() {
            return Err(Error::validation(
                "one integral intensity per detector is required",
            ));
        }
        if let Some(v) = integral_intensity
            .iter()
            .find(|v| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::validation(format!(
                "integral intensity {v} must be positive"
            )));
        }
        let mut values = self.values.clone();
        for (mut col, &s) in values.column_iter_mut().zip(integral_intensity) {
            col /= s;
        }
        ProbabilityMatrix::new(
            values,
            self.displacements.clone(),
            self.modes.clone(),
            Normalization::PerMode,
        )
    }

    /// Divides every row by its total; all-zero rows stay zero.
    pub fn normalized_per_probe(&self) -> Result<Self> {
        let mut values = self.values.clone();
        for mut row in values.row_iter_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        ProbabilityMatrix::new(
            values,
            self.displacements.clone(),
            self.modes.clone(),
            Normalization::PerProbe,
        )
    }

    /// Estimates each detector's integral intensity from the scan alone, as
    /// its total over probes relative to an ideal lossless projector onto the
    /// same mode.
    pub fn estimate_integral_intensity(&self, design: &DesignMatrix) -> Result<Vec<f64>> {
        if design.displacements != self.displacements {
            return Err(Error::validation(
                "design matrix was built for other displacements",
            ));
        }
        self.modes
            .iter()
            .enumerate()
            .map(|(j, &mode)| {
                if mode >= design.basis_size {
                    return Err(Error::validation(format!(
                        "mode {mode} lies outside the basis of size {}",
                        design.basis_size
                    )));
                }
                let ideal = design.diagonal_column(mode).sum();
                let measured = self.values.column(j).sum();
                if measured > 0.0 {
                    Ok(measured / ideal)
                } else {
                    Err(Error::validation(format!("detector column {j} is empty")))
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// `θ⁽ⁿ⁾_kp = 0` for `k ≠ p`.
    #[default]
    Diagonal,
    /// Full real symmetric `θ⁽ⁿ⁾`. Only sums along anti-diagonals `k + p`
    /// are identifiable from displacement scans; treat results as
    /// experimental.
    Full,
}

/// Linear map from POVM parameters to click probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub displacements: Vec<f64>,
    pub basis_size: usize,
    pub model: Model,
    /// `D×M` (diagonal) or `D×M²` (full, column `k·M + p`).
    pub matrix: DMatrix<f64>,
}

/// `v_k(d) v_p(d)` evaluated in the log domain.
fn design_entry(d: f64, k: usize, p: usize) -> f64 {
    if d == 0.0 {
        return if k + p == 0 { 1.0 } else { 0.0 };
    }
    let power = (k + p) as i32;
    let magnitude =
        (-d * d + power as f64 * d.abs().ln() - 0.5 * (ln_factorial(k) + ln_factorial(p))).exp();
    if d < 0.0 && power % 2 == 1 {
        -magnitude
    } else {
        magnitude
    }
}

pub fn build_design_matrix(
    displacements: &[f64],
    basis_size: usize,
    model: Model,
) -> Result<DesignMatrix> {
    if displacements.is_empty() {
        return Err(Error::validation(
            "design matrix needs at least one displacement",
        ));
    }
    if basis_size == 0 {
        return Err(Error::validation("basis size must be at least 1"));
    }
    if let Some(d) = displacements.iter().find(|d| !d.is_finite()) {
        return Err(Error::validation(format!("displacement {d} is not finite")));
    }
    let m = basis_size;
    let matrix = match model {
        Model::Diagonal => DMatrix::from_fn(displacements.len(), m, |i, k| {
            design_entry(displacements[i], k, k)
        }),
        Model::Full => DMatrix::from_fn(displacements.len(), m * m, |i, c| {
            design_entry(displacements[i], c / m, c % m)
        }),
    };
    Ok(DesignMatrix {
        displacements: displacements.to_vec(),
        basis_size,
        model,
        matrix,
    })
}

impl DesignMatrix {
    pub fn probes(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of parameters per POVM element.
    pub fn parameters(&self) -> usize {
        self.matrix.ncols()
    }

    /// Response of the ideal projector onto basis state `k`, per probe.
    pub fn diagonal_column(&self, k: usize) -> nalgebra::DVector<f64> {
        match self.model {
            Model::Diagonal => self.matrix.column(k).into_owned(),
            Model::Full => self.matrix.column(k * self.basis_size + k).into_owned(),
        }
    }

    /// Ratio of extreme singular values; infinite when rank deficient.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().singular_values();
        let max = sv.max();
        let min = sv.min();
        if self.matrix.nrows() < self.matrix.ncols() || min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PovmElements {
    /// `θ[n, k] = θ⁽ⁿ⁾_k`, shape `N×M`.
    Diagonal(DMatrix<f64>),
    /// One symmetric `M×M` matrix per outcome.
    Full(Vec<DMatrix<f64>>),
}

/// POVM of an `N`-outcome detector in a basis of `M` HG modes.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmSet {
    pub elements: PovmElements,
    /// Detector mode order of each outcome.
    pub modes: Vec<usize>,
    /// Reference sets (ideal projectors) are exempt from completeness.
    pub reference: bool,
}

impl PovmSet {
    pub fn diagonal(theta: DMatrix<f64>, modes: Vec<usize>) -> Result<Self> {
        if theta.nrows() != modes.len() || theta.ncols() == 0 {
            return Err(Error::validation(
                "theta must be N x M with one row per mode",
            ));
        }
        Ok(PovmSet {
            elements: PovmElements::Diagonal(theta),
            modes,
            reference: false,
        })
    }

    pub fn model(&self) -> Model {
        match self.elements {
            PovmElements::Diagonal(_) => Model::Diagonal,
            PovmElements::Full(_) => Model::Full,
        }
    }

    pub fn outcomes(&self) -> usize {
        self.modes.len()
    }

    pub fn basis_size(&self) -> usize {
        match &self.elements {
            PovmElements::Diagonal(t) => t.ncols(),
            PovmElements::Full(v) => v[0].nrows(),
        }
    }

    /// Diagonal coefficients `θ⁽ⁿ⁾_kk` as an `N×M` array, for either model.
    pub fn diagonal_theta(&self) -> DMatrix<f64> {
        match &self.elements {
            PovmElements::Diagonal(t) => t.clone(),
            PovmElements::Full(v) => DMatrix::from_fn(v.len(), v[0].nrows(), |n, k| v[n][(k, k)]),
        }
    }

    /// Parameters as a `K×N` matrix, one column per outcome.
    pub(crate) fn to_parameters(&self) -> DMatrix<f64> {
        match &self.elements {
            PovmElements::Diagonal(t) => t.transpose(),
            PovmElements::Full(v) => {
                let m = v[0].nrows();
                DMatrix::from_fn(m * m, v.len(), |c, n| v[n][(c / m, c % m)])
            }
        }
    }

    pub(crate) fn from_parameters(
        model: Model,
        m: usize,
        params: &DMatrix<f64>,
        modes: Vec<usize>,
    ) -> Self {
        let elements = match model {
            Model::Diagonal => PovmElements::Diagonal(params.transpose()),
            Model::Full => PovmElements::Full(
                (0..params.ncols())
                    .map(|n| DMatrix::from_fn(m, m, |k, p| params[(k * m + p, n)]))
                    .collect(),
            ),
        };
        PovmSet {
            elements,
            modes,
            reference: false,
        }
    }

    /// Largest deviation of `Σ_n Π_n` from the identity.
    pub fn completeness_residual(&self) -> f64 {
        match &self.elements {
            PovmElements::Diagonal(t) => t
                .column_iter()
                .map(|c| (c.sum() - 1.0).abs())
                .fold(0.0, f64::max),
            PovmElements::Full(v) => {
                let m = v[0].nrows();
                let sum = v.iter().fold(DMatrix::zeros(m, m), |acc, p| acc + p);
                (sum - DMatrix::<f64>::identity(m, m)).abs().max()
            }
        }
    }

    /// Smallest coefficient (diagonal) or eigenvalue (full).
    pub fn min_eigenvalue(&self) -> f64 {
        match &self.elements {
            PovmElements::Diagonal(t) => t.min(),
            PovmElements::Full(v) => v
                .iter()
                .map(|p| p.clone().symmetric_eigen().eigenvalues.min())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Restriction to basis states `k < size`.
    pub fn truncated(&self, size: usize) -> Result<Self> {
        if size == 0 || size > self.basis_size() {
            return Err(Error::validation(format!(
                "cannot truncate a basis of {} to {size}",
                self.basis_size()
            )));
        }
        let elements = match &self.elements {
            PovmElements::Diagonal(t) => PovmElements::Diagonal(t.columns(0, size).into_owned()),
            PovmElements::Full(v) => PovmElements::Full(
                v.iter()
                    .map(|p| p.view((0, 0), (size, size)).into_owned())
                    .collect(),
            ),
        };
        Ok(PovmSet {
            elements,
            modes: self.modes.clone(),
            reference: self.reference,
        })
    }

    /// `Σ_{k≠n} θ⁽ⁿ⁾_k` for outcome index `n`.
    pub fn off_diagonal_mass(&self, n: usize) -> f64 {
        let t = self.diagonal_theta();
        let own = self.modes[n];
        t.row(n)
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != own)
            .map(|(_, v)| v)
            .sum()
    }

    /// `Σ_{k>n} θ⁽ⁿ⁾_k` for outcome index `n`.
    pub fn upper_mass(&self, n: usize) -> f64 {
        let t = self.diagonal_theta();
        let own = self.modes[n];
        t.row(n).iter().skip(own + 1).sum()
    }
}

/// Ideal projectors `θ⁽ⁿ⁾_k = δ_nk` for `n < N`, in a basis of size `M`.
pub fn ideal_povm(outcomes: usize, basis_size: usize) -> Result<PovmSet> {
    if outcomes == 0 {
        return Err(Error::validation("at least one outcome is required"));
    }
    if basis_size < outcomes {
        return Err(Error::validation(format!(
            "basis size {basis_size} is smaller than the number of outcomes {outcomes}"
        )));
    }
    let theta = DMatrix::from_fn(outcomes, basis_size, |n, k| if n == k { 1.0 } else { 0.0 });
    Ok(PovmSet {
        elements: PovmElements::Diagonal(theta),
        modes: (0..outcomes).collect(),
        reference: true,
    })
}

/// Forward model `P̂ = F·Π`.
pub fn predict(povm: &PovmSet, design: &DesignMatrix) -> Result<ProbabilityMatrix> {
    if povm.model() != design.model || povm.basis_size() != design.basis_size {
        return Err(Error::validation(format!(
            "POVM ({:?}, M={}) does not match design matrix ({:?}, M={})",
            povm.model(),
            povm.basis_size(),
            design.model,
            design.basis_size
        )));
    }
    let values = (&design.matrix * povm.to_parameters()).map(|v| v.max(0.0));
    ProbabilityMatrix::new(
        values,
        design.displacements.clone(),
        povm.modes.clone(),
        Normalization::Raw,
    )
}

/// Unit-norm coefficient vector in the HG basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    coefficients: Vec<Complex64>,
}

impl PureState {
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        let norm: f64 = coefficients.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!(
                "state norm is {norm}, expected 1"
            )));
        }
        Ok(PureState { coefficients })
    }

    pub fn basis(k: usize, size: usize) -> Result<Self> {
        if k >= size {
            return Err(Error::validation(format!(
                "basis index {k} outside dimension {size}"
            )));
        }
        let mut c = vec![Complex64::default(); size];
        c[k] = Complex64::new(1.0, 0.0);
        Ok(PureState { coefficients: c })
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }
}

/// Born rule `Tr(ρ Π_n)` for `ρ = |c⟩⟨c|`.
pub fn born_probability(povm: &PovmSet, n: usize, state: &PureState) -> Result<f64> {
    if n >= povm.outcomes() {
        return Err(Error::validation(format!(
            "outcome {n} out of range for {} outcomes",
            povm.outcomes()
        )));
    }
    let c = state.coefficients();
    if c.len() != povm.basis_size() {
        return Err(Error::validation(
            "state dimension differs from the POVM basis",
        ));
    }
    let p = match &povm.elements {
        PovmElements::Diagonal(t) => c
            .iter()
            .enumerate()
            .map(|(k, ck)| t[(n, k)] * ck.norm_sqr())
            .sum(),
        PovmElements::Full(v) => {
            let theta = &v[n];
            let mut acc = Complex64::default();
            for (k, ck) in c.iter().enumerate() {
                for (p, cp) in c.iter().enumerate() {
                    acc += ck.conj() * theta[(k, p)] * cp;
                }
            }
            acc.re
        }
    };
    Ok(p)
}

/// Squared Pearson correlation between the entries of two matrices.
pub fn r_squared(observed: &ProbabilityMatrix, predicted: &ProbabilityMatrix) -> Result<f64> {
    if observed.values.shape() != predicted.values.shape() {
        return Err(Error::validation("r_squared needs matrices of equal shape"));
    }
    let n = observed.values.len() as f64;
    let mx = observed.values.sum() / n;
    let my = predicted.values.sum() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in observed.values.iter().zip(predicted.values.iter()) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedStatistic(
            "Pearson correlation of a constant matrix".into(),
        ));
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

/// Bhattacharyya-type similarity of two diagonal POVMs:
/// `(Σ √(θ θ̃))² / (Σθ · Σθ̃)`.
pub fn similarity(povm: &PovmSet, reference: &PovmSet) -> Result<f64> {
    let (a, b) = match (&povm.elements, &reference.elements) {
        (PovmElements::Diagonal(a), PovmElements::Diagonal(b)) => (a, b),
        _ => {
            return Err(Error::validation(
                "similarity is defined for diagonal POVMs only",
            ))
        }
    };
    if a.shape() != b.shape() {
        return Err(Error::validation(format!(
            "similarity of POVMs with shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let sa: f64 = a.iter().map(|v| v.max(0.0)).sum();
    let sb: f64 = b.iter().map(|v| v.max(0.0)).sum();
    if sa <= 0.0 || sb <= 0.0 {
        return Err(Error::validation("similarity of an all-zero POVM"));
    }
    let cross: f64 = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x.max(0.0) * y.max(0.0)).sqrt())
        .sum();
    Ok((cross * cross / (sa * sb)).min(1.0))
}
