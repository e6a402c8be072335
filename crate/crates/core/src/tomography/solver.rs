//! Constrained least squares for POVM reconstruction.
//!
//! Minimizes `‖P − FΘ‖²_F` over POVMs: nonnegative (positive semidefinite for
//! the full model) elements summing to the identity. The iteration is an
//! accelerated projected gradient in its monotone form: the extrapolated
//! point only drives the next step, and the iterate is replaced only when the
//! objective does not increase. The step is `1/L` with `L` grown by
//! backtracking until the quadratic upper bound holds.
//!
//! Iterates are feasible by construction. Objective changes are evaluated
//! from the quadratic form on the step itself, with the row-sum rounding of
//! the projection removed from the support of the new point; near the optimum the true decrease is far below
//! the rounding error of `‖P − FΘ‖²`. Termination uses the norm of the
//! gradient mapping `L·(Y − proj(Y − ∇f/L))`, which vanishes exactly at
//! constrained minimizers. Momentum restarts whenever the step opposes it.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{DesignMatrix, Model, PovmSet, ProbabilityMatrix, CONDITION_WARNING};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionConfig {
    /// Number of HG basis states `M`.
    pub basis_size: usize,
    pub model: Model,
    pub max_iters: usize,
    /// Stop once the gradient-mapping norm falls below this value.
    pub tolerance: f64,
    /// Accuracy of the inner projection for the full model.
    pub constraint_tolerance: f64,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        ReconstructionConfig {
            basis_size: 9,
            model: Model::Diagonal,
            max_iters: 2_000_000,
            tolerance: 1e-11,
            constraint_tolerance: 1e-10,
        }
    }
}

impl ReconstructionConfig {
    /// Defaults with `M = N + 4`.
    pub fn for_modes(outcomes: usize) -> Self {
        ReconstructionConfig {
            basis_size: outcomes + 4,
            ..Default::default()
        }
    }

    fn validate(&self, outcomes: usize) -> Result<()> {
        if self.basis_size < outcomes {
            return Err(Error::validation(format!(
                "basis size {} is smaller than the number of outcomes {outcomes}",
                self.basis_size
            )));
        }
        if !(self.tolerance > 0.0 && self.constraint_tolerance > 0.0) {
            return Err(Error::validation("solver tolerances must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::validation("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub povm: PovmSet,
    pub converged: bool,
    pub iterations: usize,
    /// `‖P − FΘ‖²_F` after each iteration, starting with the initial point.
    pub objective_history: Vec<f64>,
    /// Final `‖P − FΘ‖_F`.
    pub residual: f64,
    pub condition_number: f64,
}

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` (sort-based).
pub fn project_simplex(v: &mut [f64]) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Feasible-set projection for a `K×N` parameter matrix.
trait Projector {
    fn project(&self, params: &mut DMatrix<f64>);

    /// Removes from a step ending at the feasible point `to` the rounding
    /// error normal to the completeness constraint.
    fn tangent(&self, step: &mut DMatrix<f64>, to: &DMatrix<f64>);
}

struct SimplexRows;

impl Projector for SimplexRows {
    fn project(&self, params: &mut DMatrix<f64>) {
        let mut row = vec![0.0; params.ncols()];
        for k in 0..params.nrows() {
            for (n, r) in row.iter_mut().enumerate() {
                *r = params[(k, n)];
            }
            project_simplex(&mut row);
            for (n, r) in row.iter().enumerate() {
                params[(k, n)] = *r;
            }
        }
    }

    fn tangent(&self, step: &mut DMatrix<f64>, to: &DMatrix<f64>) {
        // spread the row-sum error over the support only: coordinates at
        // zero sit against large gradients
        for k in 0..step.nrows() {
            let free: Vec<usize> = (0..step.ncols()).filter(|&n| to[(k, n)] > 0.0).collect();
            if free.is_empty() {
                continue;
            }
            let excess = step.row(k).sum() / free.len() as f64;
            for n in free {
                step[(k, n)] -= excess;
            }
        }
    }
}

/// Projection onto `{Π_n ⪰ 0, Σ Π_n = I}` by Dykstra's alternating scheme
/// between the PSD cones and the affine completeness constraint.
struct PsdCompleteness {
    m: usize,
    tolerance: f64,
    max_sweeps: usize,
}

impl PsdCompleteness {
    fn unpack(&self, params: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let m = self.m;
        (0..params.ncols())
            .map(|n| {
                let a = DMatrix::from_fn(m, m, |k, p| params[(k * m + p, n)]);
                (&a + a.transpose()) * 0.5
            })
            .collect()
    }

    fn pack(&self, elems: &[DMatrix<f64>], params: &mut DMatrix<f64>) {
        let m = self.m;
        for (n, e) in elems.iter().enumerate() {
            for k in 0..m {
                for p in 0..m {
                    params[(k * m + p, n)] = e[(k, p)];
                }
            }
        }
    }

    fn psd(a: &DMatrix<f64>) -> DMatrix<f64> {
        let eig = a.clone().symmetric_eigen();
        let clipped = eig.eigenvalues.map(|l| l.max(0.0));
        let q = &eig.eigenvectors;
        q * DMatrix::from_diagonal(&clipped) * q.transpose()
    }

    fn affine(&self, elems: &mut [DMatrix<f64>]) {
        let m = self.m;
        let sum = elems.iter().fold(DMatrix::zeros(m, m), |acc, e| acc + e);
        let correction = (DMatrix::<f64>::identity(m, m) - sum) / elems.len() as f64;
        for e in elems.iter_mut() {
            *e += &correction;
        }
    }
}

impl Projector for PsdCompleteness {
    fn project(&self, params: &mut DMatrix<f64>) {
        let mut x = self.unpack(params);
        let n = x.len();
        let zero = DMatrix::zeros(self.m, self.m);
        let mut p = vec![zero.clone(); n];
        let mut q = vec![zero; n];
        let mut y = x.clone();
        for _ in 0..self.max_sweeps {
            for j in 0..n {
                y[j] = Self::psd(&(&x[j] + &p[j]));
                p[j] = &x[j] + &p[j] - &y[j];
            }
            let mut next: Vec<DMatrix<f64>> = (0..n).map(|j| &y[j] + &q[j]).collect();
            self.affine(&mut next);
            for j in 0..n {
                q[j] = &y[j] + &q[j] - &next[j];
            }
            let change: f64 = (0..n)
                .map(|j| (&next[j] - &x[j]).norm_squared())
                .sum::<f64>()
                .sqrt();
            x = next;
            let gap: f64 = (0..n)
                .map(|j| (&x[j] - &y[j]).norm_squared())
                .sum::<f64>()
                .sqrt();
            if change < self.tolerance && gap < self.tolerance {
                break;
            }
        }
        // PSD iterate; completeness holds to the sweep tolerance.
        self.pack(&y, params);
    }

    fn tangent(&self, step: &mut DMatrix<f64>, _to: &DMatrix<f64>) {
        let n = step.ncols() as f64;
        for mut row in step.row_iter_mut() {
            let excess = row.sum() / n;
            row.add_scalar_mut(-excess);
        }
    }
}

/// Quadratic objective `f(Θ) = ‖P − FΘ‖²` through the normal equations.
struct Objective<'a> {
    design: &'a DMatrix<f64>,
    data: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
}

impl<'a> Objective<'a> {
    fn new(design: &'a DMatrix<f64>, data: &'a DMatrix<f64>) -> Self {
        Objective {
            design,
            data,
            gram: design.transpose() * design,
            cross: design.transpose() * data,
        }
    }

    fn value(&self, theta: &DMatrix<f64>) -> f64 {
        (self.data - self.design * theta).norm_squared()
    }

    /// `f(b + d) − f(b) = d·(2(Gb − B) + Gd)`, accurate to the size of `d`
    /// rather than of `f`.
    fn difference(&self, d: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        d.dot(&((&self.gram * b - &self.cross) * 2.0 + &self.gram * d))
    }

    /// Gradient of `½f`.
    fn half_gradient(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        &self.gram * theta - &self.cross
    }

    fn lipschitz(&self) -> f64 {
        self.gram
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .max()
            .max(f64::MIN_POSITIVE)
    }
}

/// Reconstructs the POVM minimizing `‖P − FΠ‖` subject to positivity and
/// completeness.
pub fn reconstruct(
    data: &ProbabilityMatrix,
    design: &DesignMatrix,
    cfg: &ReconstructionConfig,
) -> Result<Reconstruction> {
    data.validate()?;
    cfg.validate(data.detectors())?;
    if design.displacements.len() != data.probes() {
        return Err(Error::validation(format!(
            "design matrix has {} probes, data has {}",
            design.displacements.len(),
            data.probes()
        )));
    }
    if design.basis_size != cfg.basis_size || design.model != cfg.model {
        return Err(Error::validation(format!(
            "design matrix ({:?}, M={}) disagrees with the configuration ({:?}, M={})",
            design.model, design.basis_size, cfg.model, cfg.basis_size
        )));
    }

    let condition_number = design.condition_number();
    if design.model == Model::Diagonal && condition_number > CONDITION_WARNING {
        log::warn!(
            "design matrix condition number {condition_number:.3e} exceeds {CONDITION_WARNING:.0e}; \
             the minimizer may not be unique"
        );
    }

    let outcomes = data.detectors();
    let m = design.basis_size;
    let projector: Box<dyn Projector> = match design.model {
        Model::Diagonal => Box::new(SimplexRows),
        Model::Full => Box::new(PsdCompleteness {
            m,
            tolerance: cfg.constraint_tolerance,
            max_sweeps: 10_000,
        }),
    };

    let objective = Objective::new(&design.matrix, &data.values);
    let initial = match design.model {
        Model::Diagonal => DMatrix::from_element(m, outcomes, 1.0 / outcomes as f64),
        Model::Full => {
            let eye = DMatrix::<f64>::identity(m, m) / outcomes as f64;
            DMatrix::from_fn(m * m, outcomes, |c, _| eye[(c / m, c % m)])
        }
    };

    let mut x = initial;
    let mut fx = objective.value(&x);
    let mut y = x.clone();
    let mut y_is_x = true;
    let mut t = 1.0f64;
    let mut lipschitz = objective.lipschitz();
    let mut history = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = objective.half_gradient(&y);
        // Backtrack until ½f(z) ≤ ½f(y) + ⟨∇, z − y⟩ + L/2 ‖z − y‖², i.e.
        // (z − y)ᵀG(z − y) ≤ L‖z − y‖² for this quadratic.
        let z = loop {
            let mut z = &y - &grad / lipschitz;
            projector.project(&mut z);
            let step = &z - &y;
            let curvature = step.dot(&(&objective.gram * &step));
            if curvature <= lipschitz * step.norm_squared() * (1.0 + 1e-12) {
                break z;
            }
            lipschitz *= 2.0;
        };

        // L·(y − z) is the gradient mapping at y.
        let stationarity = lipschitz * (&y - &z).norm();
        let mut step = &z - &x;
        projector.tangent(&mut step, &z);
        let change = objective.difference(&step, &x);
        let accepted = change <= 0.0;
        let x_prev = x.clone();
        if accepted {
            x = z.clone();
            fx = (fx + change).max(0.0);
        }
        history.push(fx);

        if stationarity < cfg.tolerance && (accepted || y_is_x) {
            converged = true;
            break;
        }

        // Restart when the step fights the momentum or the objective rose.
        let overshoot = (&y - &z).dot(&(&z - &x_prev)) > 0.0;
        if !accepted || overshoot {
            y = x.clone();
            y_is_x = true;
            t = 1.0;
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x + (&x - &x_prev) * ((t - 1.0) / t_next);
            y_is_x = false;
            t = t_next;
        }
    }

    let residual = (&data.values - &design.matrix * &x).norm();
    let povm = PovmSet::from_parameters(design.model, m, &x, data.modes.clone());
    Ok(Reconstruction {
        povm,
        converged,
        iterations,
        objective_history: history,
        residual,
        condition_number,
    })
}
