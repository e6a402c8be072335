//! Counting noise for synthetic scans.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tomography::ProbabilityMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    #[default]
    None,
    /// Photon counting: an entry `p` becomes `Poisson(p·total_counts)/total_counts`.
    Poisson { total_counts: f64 },
    /// Additive white noise, clipped at zero.
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::Poisson { total_counts }
                if total_counts.is_finite() && total_counts > 0.0 =>
            {
                Ok(())
            }
            NoiseModel::Poisson { total_counts } => Err(Error::validation(format!(
                "poisson total_counts must be positive, got {total_counts}"
            ))),
            NoiseModel::Gaussian { sigma } if sigma.is_finite() && sigma >= 0.0 => Ok(()),
            NoiseModel::Gaussian { sigma } => Err(Error::validation(format!(
                "gaussian sigma must be non-negative, got {sigma}"
            ))),
        }
    }
}

/// Returns a noisy copy of `p`. The same seed always gives the same draw.
pub fn add_noise(
    p: &ProbabilityMatrix,
    model: &NoiseModel,
    seed: u64,
) -> Result<ProbabilityMatrix> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = p.clone();
    match *model {
        NoiseModel::None => {}
        NoiseModel::Poisson { total_counts } => {
            // draws follow column-major order
            for v in out.values.iter_mut() {
                let mean = *v * total_counts;
                *v = if mean > 0.0 {
                    let dist = Poisson::new(mean)
                        .map_err(|e| Error::validation(format!("poisson mean {mean}: {e}")))?;
                    dist.sample(&mut rng) / total_counts
                } else {
                    0.0
                };
            }
        }
        NoiseModel::Gaussian { sigma } => {
            if sigma > 0.0 {
                let dist = Normal::new(0.0, sigma).map_err(|e| Error::validation(e.to_string()))?;
                for v in out.values.iter_mut() {
                    *v = (*v + dist.sample(&mut rng)).max(0.0);
                }
            }
        }
    }
    // per-probe rows may exceed 1 after noise; the tag no longer applies
    if out.normalization == crate::tomography::Normalization::PerProbe {
        out.normalization = crate::tomography::Normalization::Raw;
    }
    out.validate()?;
    Ok(out)
}
