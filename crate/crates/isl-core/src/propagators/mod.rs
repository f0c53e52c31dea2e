//! Time evolution schemes behind a common trait, selected by name at runtime.

mod dense;
mod magnetic;
mod nls;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;

pub use dense::{
    dense_hamiltonian, dense_oracle_evolve, DenseEvolution, DenseSystem, DENSE_LIMIT_1D,
    DENSE_LIMIT_2D,
};
pub use magnetic::{magnetic_cn_evolve, LatticeView, MagneticSystem, CN_TOLERANCE};
pub use nls::{nls_evolve, picard_solve, NlsSystem, PicardResult, Trajectory};
pub use split::{free_step, splitstep_evolve, SplitStepper};

/// Discretization of the Laplacian used by the dense oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Laplacian {
    /// Second-order three-point stencil per axis, Dirichlet outside the grid.
    #[default]
    FiniteDifference,
    /// Periodic Fourier differentiation matrix, the same operator the split-step kinetic factor uses.
    Spectral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    /// Signed evolution time; negative values run backwards.
    pub total_time: f64,
    pub scheme: String,
    pub mass: f64,
    #[serde(default)]
    pub laplacian: Laplacian,
}

impl EvolutionConfig {
    pub fn new(dt: f64, total_time: f64, scheme: &str, mass: f64) -> Self {
        Self {
            dt,
            total_time,
            scheme: scheme.to_string(),
            mass,
            laplacian: Laplacian::default(),
        }
    }

    pub fn with_laplacian(mut self, laplacian: Laplacian) -> Self {
        self.laplacian = laplacian;
        self
    }

    /// Number of steps and the signed step that exactly covers the total time.
    pub fn steps(&self) -> Result<(usize, f64)> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass must be positive, got {}",
                self.mass
            )));
        }
        let t = self.total_time;
        if t == 0.0 {
            return Ok((0, 0.0));
        }
        let n = (t.abs() / self.dt - 1e-9).ceil().max(1.0) as usize;
        Ok((n, t / n as f64))
    }
}

/// The physical system a scheme evolves under.
#[derive(Clone, Copy)]
pub enum System<'a> {
    Free,
    /// Scalar potential sampled on the field's grid.
    Scalar(&'a [f64]),
    Magnetic(&'a MagneticSystem),
    Nonlinear(&'a NlsSystem),
}

impl System<'_> {
    fn label(&self) -> &'static str {
        match self {
            System::Free => "free",
            System::Scalar(_) => "scalar",
            System::Magnetic(_) => "magnetic",
            System::Nonlinear(_) => "nonlinear",
        }
    }
}

pub trait Propagator: Send + Sync {
    fn name(&self) -> &'static str;
    fn evolve(
        &self,
        psi: &ComplexField,
        system: System<'_>,
        cfg: &EvolutionConfig,
    ) -> Result<ComplexField>;
}

fn unsupported(scheme: &str, system: System<'_>) -> Error {
    Error::InvalidParameter(format!(
        "scheme `{scheme}` cannot evolve a {} system",
        system.label()
    ))
}

struct FreeScheme;

impl Propagator for FreeScheme {
    fn name(&self) -> &'static str {
        "free"
    }

    fn evolve(
        &self,
        psi: &ComplexField,
        system: System<'_>,
        cfg: &EvolutionConfig,
    ) -> Result<ComplexField> {
        match system {
            System::Free => Ok(free_step(psi, cfg.total_time, cfg.mass)),
            other => Err(unsupported(self.name(), other)),
        }
    }
}

struct StrangScheme;

impl Propagator for StrangScheme {
    fn name(&self) -> &'static str {
        "strang"
    }

    fn evolve(
        &self,
        psi: &ComplexField,
        system: System<'_>,
        cfg: &EvolutionConfig,
    ) -> Result<ComplexField> {
        match system {
            System::Free => {
                let zero = vec![0.0; psi.grid.len()];
                splitstep_evolve(psi, &zero, cfg)
            }
            System::Scalar(v) => splitstep_evolve(psi, v, cfg),
            other => Err(unsupported(self.name(), other)),
        }
    }
}

struct MagneticCnScheme;

impl Propagator for MagneticCnScheme {
    fn name(&self) -> &'static str {
        "magnetic-cn"
    }

    fn evolve(
        &self,
        psi: &ComplexField,
        system: System<'_>,
        cfg: &EvolutionConfig,
    ) -> Result<ComplexField> {
        match system {
            System::Magnetic(sys) => magnetic_cn_evolve(psi, sys, cfg),
            System::Free => {
                magnetic_cn_evolve(psi, &MagneticSystem::free(psi.grid, cfg.mass)?, cfg)
            }
            other => Err(unsupported(self.name(), other)),
        }
    }
}

struct NlsStrangScheme;

impl Propagator for NlsStrangScheme {
    fn name(&self) -> &'static str {
        "nls-strang"
    }

    fn evolve(
        &self,
        psi: &ComplexField,
        system: System<'_>,
        cfg: &EvolutionConfig,
    ) -> Result<ComplexField> {
        match system {
            System::Nonlinear(sys) => Ok(nls_evolve(psi, sys, cfg, 0)?.last),
            other => Err(unsupported(self.name(), other)),
        }
    }
}

struct DenseScheme;

impl Propagator for DenseScheme {
    fn name(&self) -> &'static str {
        "dense-oracle"
    }

    fn evolve(
        &self,
        psi: &ComplexField,
        system: System<'_>,
        cfg: &EvolutionConfig,
    ) -> Result<ComplexField> {
        let dense = match system {
            System::Free => DenseSystem::Scalar {
                potential: None,
                laplacian: cfg.laplacian,
                mass: cfg.mass,
            },
            System::Scalar(v) => DenseSystem::Scalar {
                potential: Some(v),
                laplacian: cfg.laplacian,
                mass: cfg.mass,
            },
            System::Magnetic(sys) => DenseSystem::Magnetic(sys),
            other => return Err(unsupported(self.name(), other)),
        };
        dense_oracle_evolve(psi, &dense, cfg.total_time)
    }
}

/// Name-keyed collection of evolution schemes.
pub struct SchemeRegistry {
    schemes: BTreeMap<&'static str, Box<dyn Propagator>>,
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        let mut r = Self {
            schemes: BTreeMap::new(),
        };
        r.register(Box::new(FreeScheme));
        r.register(Box::new(StrangScheme));
        r.register(Box::new(MagneticCnScheme));
        r.register(Box::new(NlsStrangScheme));
        r.register(Box::new(DenseScheme));
        r
    }
}

impl SchemeRegistry {
    pub fn register(&mut self, scheme: Box<dyn Propagator>) {
        self.schemes.insert(scheme.name(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Propagator> {
        self.schemes
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::Unknown {
                kind: "scheme",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.schemes.keys().copied().collect()
    }

    /// Evolves with the scheme named in the configuration.
    pub fn evolve(
        &self,
        psi: &ComplexField,
        system: System<'_>,
        cfg: &EvolutionConfig,
    ) -> Result<ComplexField> {
        self.get(&cfg.scheme)?.evolve(psi, system, cfg)
    }
}
