//! Configuration-driven runs: source → noise → normalization →
//! reconstruction → metrics → artifacts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diffraction::{linspace, simulate_scan_with, ScanConfig, SimulationSetup};
use crate::error::{Error, Result};
use crate::hologram::{synthesize_mask, Modulation, TargetField};
use crate::io;
use crate::modes::{ideal_probability, ExperimentGeometry, HgMode};
use crate::noise::{add_noise, NoiseModel};
use crate::par::Execution;
use crate::tomography::{
    build_design_matrix, predict, r_squared, reconstruct, similarity, Model, Normalization,
    PovmElements, PovmSet, ProbabilityMatrix, ReconstructionConfig,
};

/// Where the scan data come from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Source {
    /// Hologram simulation of the detector.
    #[default]
    Simulate,
    /// Closed-form response of ideal projectors.
    Ideal,
    /// Raw probabilities from a CSV file.
    File(PathBuf),
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Source::Simulate),
            "ideal" | "analytic_ideal" => Ok(Source::Ideal),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Source::File(PathBuf::from(path))),
                _ => Err(Error::Config(format!(
                    "unknown source `{s}` (expected simulate, ideal or file:<path>)"
                ))),
            },
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Simulate => f.write_str("simulate"),
            Source::Ideal => f.write_str("ideal"),
            Source::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for Source {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSettings {
    /// Displacement range in units of the fiber waist.
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
    /// Number of detector modes `N` (orders `0..N`).
    pub modes: usize,
    /// Basis truncation `M`.
    pub basis_size: usize,
    pub modulation: Modulation,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            delta_min: -3.0,
            delta_max: 3.0,
            points: 41,
            modes: 5,
            basis_size: 9,
            modulation: Modulation::PhaseOnly,
        }
    }
}

impl ScanSettings {
    pub fn displacements(&self) -> Vec<f64> {
        linspace(self.delta_min, self.delta_max, self.points)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub model: Model,
    pub max_iters: usize,
    pub tolerance: f64,
    pub constraint_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = ReconstructionConfig::default();
        SolverSettings {
            model: d.model,
            max_iters: d.max_iters,
            tolerance: d.tolerance,
            constraint_tolerance: d.constraint_tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: ExperimentGeometry,
    pub scan: ScanSettings,
    pub source: Source,
    pub noise: NoiseModel,
    pub seed: u64,
    pub normalize: Normalization,
    /// Artifacts are written here when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub simulation: SimulationSetup,
    pub solver: SolverSettings,
    /// Also write the 8-bit hologram of every detector mode.
    pub export_masks: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: ExperimentGeometry::default(),
            scan: ScanSettings::default(),
            source: Source::default(),
            noise: NoiseModel::None,
            seed: 0,
            normalize: Normalization::PerMode,
            output: None,
            simulation: SimulationSetup::default(),
            solver: SolverSettings::default(),
            export_masks: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.noise.validate()?;
        let s = &self.scan;
        if s.points < 2
            || !s.delta_min.is_finite()
            || !s.delta_max.is_finite()
            || s.delta_max <= s.delta_min
        {
            return Err(Error::Config(
                "scan needs at least two points over a finite, increasing range".into(),
            ));
        }
        if s.modes == 0 {
            return Err(Error::Config("scan.modes must be at least 1".into()));
        }
        if s.basis_size < s.modes {
            return Err(Error::Config(format!(
                "scan.basis_size ({}) must be at least scan.modes ({})",
                s.basis_size, s.modes
            )));
        }
        let positive = |v: f64| v > 0.0;
        if self.solver.max_iters == 0
            || !positive(self.solver.tolerance)
            || !positive(self.solver.constraint_tolerance)
        {
            return Err(Error::Config(
                "solver needs max_iters ≥ 1 and positive tolerances".into(),
            ));
        }
        Ok(())
    }

    fn reconstruction(&self) -> ReconstructionConfig {
        ReconstructionConfig {
            basis_size: self.scan.basis_size,
            model: self.solver.model,
            max_iters: self.solver.max_iters,
            tolerance: self.solver.tolerance,
            constraint_tolerance: self.solver.constraint_tolerance,
        }
    }
}

/// Summary written to `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// `θ⁽ⁿ⁾_k`, one row per detector mode.
    pub theta: Vec<Vec<f64>>,
    /// Full POVM elements, only for the full model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<Vec<Vec<f64>>>>,
    pub residual: f64,
    /// `None` when the statistic is undefined (constant data).
    pub r2_reconstructed: Option<f64>,
    pub r2_theory: Option<f64>,
    /// Similarity to ideal projectors on the `k < N` block.
    pub similarity_to_ideal: f64,
    pub off_diagonal_mass: Vec<f64>,
    /// Per-mode scale divided out of the data.
    pub integral_intensity: Vec<f64>,
    /// First-order power relative to the `n = 0` hologram (simulated source).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diffraction_efficiency: Option<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub condition_number: f64,
    pub completeness_residual: f64,
}

/// Everything a run computes, before anything is written.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Data the POVM was fitted to.
    pub data: ProbabilityMatrix,
    pub fit: ProbabilityMatrix,
    pub povm: PovmSet,
}

fn load_source(cfg: &RunConfig, exec: Execution) -> Result<(ProbabilityMatrix, Option<Vec<f64>>)> {
    let s = &cfg.scan;
    let modes: Vec<usize> = (0..s.modes).collect();
    match &cfg.source {
        Source::Simulate => {
            let scan = ScanConfig {
                displacements: s.displacements(),
                modes,
                modulation: s.modulation,
            };
            let res = simulate_scan_with(&scan, &cfg.geometry, &cfg.simulation, exec)?;
            Ok((res.probabilities, Some(res.first_order_power)))
        }
        Source::Ideal => {
            let deltas = s.displacements();
            let values = DMatrix::from_fn(deltas.len(), modes.len(), |i, n| {
                ideal_probability(n, deltas[i], 1.0).unwrap_or(0.0)
            });
            let p = ProbabilityMatrix::new(values, deltas, modes.clone(), Normalization::Raw)?;
            Ok((p, Some(vec![1.0; modes.len()])))
        }
        Source::File(path) => {
            let file = std::fs::File::open(path)?;
            Ok((io::read_probabilities(file, Normalization::Raw)?, None))
        }
    }
}

/// Runs the pipeline in memory.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    execute_with(cfg, Execution::default())
}

pub fn execute_with(cfg: &RunConfig, exec: Execution) -> Result<RunOutcome> {
    cfg.validate()?;
    let (raw, power) = load_source(cfg, exec)?;
    for &n in &raw.modes {
        if n >= cfg.scan.basis_size {
            return Err(Error::Config(format!(
                "detector mode {n} lies outside the basis of size {}",
                cfg.scan.basis_size
            )));
        }
    }
    let noisy = add_noise(&raw, &cfg.noise, cfg.seed)?;
    let rcfg = cfg.reconstruction();
    let design = build_design_matrix(&noisy.displacements, rcfg.basis_size, rcfg.model)?;
    let diag_design = if rcfg.model == Model::Diagonal {
        design.clone()
    } else {
        build_design_matrix(&noisy.displacements, rcfg.basis_size, Model::Diagonal)?
    };

    let (data, integral_intensity) = match cfg.normalize {
        Normalization::Raw => (noisy.clone(), vec![1.0; noisy.detectors()]),
        Normalization::PerProbe => (noisy.normalized_per_probe()?, vec![1.0; noisy.detectors()]),
        Normalization::PerMode => {
            let scale = match &power {
                Some(p) => p.clone(),
                None => noisy.estimate_integral_intensity(&diag_design)?,
            };
            (noisy.normalized_per_mode(&scale)?, scale)
        }
    };

    let rec = reconstruct(&data, &design, &rcfg)?;
    if !rec.converged {
        log::warn!(
            "reconstruction stopped after {} iterations without converging",
            rec.iterations
        );
    }
    let fit = predict(&rec.povm, &design)?;

    // ideal projectors onto the measured modes
    let m = cfg.scan.basis_size;
    let ideal = PovmSet {
        elements: PovmElements::Diagonal(DMatrix::from_fn(data.detectors(), m, |j, k| {
            if data.modes[j] == k {
                1.0
            } else {
                0.0
            }
        })),
        modes: data.modes.clone(),
        reference: true,
    };
    let theory = predict(&ideal, &diag_design)?;

    let r2 = |p: &ProbabilityMatrix| match r_squared(&data, p) {
        Ok(v) => Some(v),
        Err(Error::UndefinedStatistic(msg)) => {
            log::warn!("R² undefined: {msg}");
            None
        }
        Err(_) => None,
    };
    let r2_reconstructed = r2(&fit);
    let r2_theory = r2(&theory);

    let block = data.modes.iter().max().map_or(1, |m| m + 1);
    let rec_diag = PovmSet::diagonal(rec.povm.diagonal_theta(), data.modes.clone())?;
    let similarity_to_ideal = similarity(&rec_diag.truncated(block)?, &ideal.truncated(block)?)?;

    let diffraction_efficiency = match (&cfg.source, &power) {
        (Source::Simulate, Some(p)) => {
            let reference = data.modes.iter().position(|&n| n == 0).map(|j| p[j]);
            reference.map(|r| p.iter().map(|v| v / r).collect())
        }
        _ => None,
    };

    let theta = rec.povm.diagonal_theta();
    let elements = match &rec.povm.elements {
        PovmElements::Full(v) => Some(
            v.iter()
                .map(|e| e.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
        ),
        PovmElements::Diagonal(_) => None,
    };

    let mut echo = cfg.clone();
    echo.output = None;
    let report = RunReport {
        schema_version: io::REPORT_SCHEMA_VERSION,
        version: crate::VERSION.to_string(),
        seed: cfg.seed,
        config: echo,
        theta: theta
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        elements,
        residual: rec.residual,
        r2_reconstructed,
        r2_theory,
        similarity_to_ideal,
        off_diagonal_mass: (0..rec.povm.outcomes())
            .map(|n| rec.povm.off_diagonal_mass(n))
            .collect(),
        integral_intensity,
        diffraction_efficiency,
        converged: rec.converged,
        iterations: rec.iterations,
        condition_number: rec.condition_number,
        completeness_residual: rec.povm.completeness_residual(),
    };
    Ok(RunOutcome {
        report,
        data,
        fit,
        povm: rec.povm,
    })
}

/// Runs the pipeline and writes its artifacts to `cfg.output`, if set:
/// `probabilities.csv`, `fit.csv`, `theta.csv`, `report.json` and, on
/// request, `mask_n<k>.pgm`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    let outcome = execute(cfg)?;
    if let Some(dir) = &cfg.output {
        write_artifacts(&outcome, dir)?;
        if cfg.export_masks {
            export_masks(cfg, dir)?;
        }
    }
    Ok(outcome.report)
}

pub fn write_artifacts(outcome: &RunOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_file(&dir.join("probabilities.csv"), |w| {
        io::write_probabilities(&outcome.data, w)
    })?;
    io::write_file(&dir.join("fit.csv"), |w| {
        io::write_probabilities(&outcome.fit, w)
    })?;
    io::write_file(&dir.join("theta.csv"), |w| {
        io::write_theta(&outcome.povm, w)
    })?;
    io::write_file(&dir.join("report.json"), |w| {
        io::write_json(&outcome.report, w)
    })?;
    Ok(())
}

fn export_masks(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let setup = &cfg.simulation;
    let grid = setup.slm_grid(&cfg.geometry)?;
    let w = setup.illumination_waist(&cfg.geometry);
    let grating = setup.grating(&grid, cfg.scan.modulation);
    for n in 0..cfg.scan.modes {
        let target =
            TargetField::for_mode(&HgMode::new(n, 0, w)?, w, setup.clip_radius * w, &grid)?;
        let mask = synthesize_mask(&target, &grating)?;
        io::write_file(&dir.join(format!("mask_n{n}.pgm")), |out| {
            mask.write_pgm(out)
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal_config() -> RunConfig {
        RunConfig {
            source: Source::Ideal,
            ..Default::default()
        }
    }

    #[test]
    fn source_parsing() {
        assert_eq!("simulate".parse::<Source>().unwrap(), Source::Simulate);
        assert_eq!("analytic_ideal".parse::<Source>().unwrap(), Source::Ideal);
        assert_eq!(
            "file:a/b.csv".parse::<Source>().unwrap(),
            Source::File("a/b.csv".into())
        );
        assert!("file:".parse::<Source>().is_err());
        assert!("camera".parse::<Source>().is_err());
    }

    #[test]
    fn toml_defaults_and_round_trip() {
        let cfg = RunConfig::from_toml("seed = 7\n[scan]\nmodulation = \"exact\"\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.scan.points, 41);
        assert_eq!(cfg.scan.modulation, Modulation::ExactAmplitude);
        assert_eq!(cfg.geometry, ExperimentGeometry::default());

        let cfg = RunConfig {
            noise: NoiseModel::Poisson { total_counts: 1e6 },
            source: Source::File("data.csv".into()),
            ..Default::default()
        };
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn bad_config_is_a_config_error() {
        assert!(RunConfig::from_toml("scan = 3")
            .unwrap_err()
            .is_config_error());
        assert!(RunConfig::from_toml("colour = 1").is_err());
        let mut cfg = ideal_config();
        cfg.scan.basis_size = 3;
        assert!(execute(&cfg).unwrap_err().is_config_error());
    }

    #[test]
    fn ideal_source_recovers_projectors() {
        let out = execute(&ideal_config()).unwrap();
        let r = &out.report;
        assert!(
            r.similarity_to_ideal > 0.99,
            "S = {}",
            r.similarity_to_ideal
        );
        assert!(r.completeness_residual < 1e-8);
        assert_eq!(r.theta.len(), 5);
        assert!((r.r2_theory.unwrap() - 1.0).abs() < 1e-12);
        // completeness pushes mass into k ≥ N, which the data do not contain
        assert!(r.r2_reconstructed.unwrap() < r.r2_theory.unwrap());
        assert!(r.diffraction_efficiency.is_none());
    }

    #[test]
    fn report_serializes_with_schema_version() {
        let out = execute(&ideal_config()).unwrap();
        let json = serde_json::to_value(&out.report).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["config"]["source"], "ideal");
    }
}
