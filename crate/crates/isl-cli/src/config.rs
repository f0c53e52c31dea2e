use std::path::{Path, PathBuf};

use isl_core::aharonov_bohm::{PhaseProbeSpec, Stepper};
use isl_core::catalog::FieldSpec;
use isl_core::field::UniformGrid;
use isl_core::nls_inverse::{NlsModel, Profile, ReflectionSpec, ScatteringSpec};
use isl_core::radon::{uniform_angles, ArtOptions};
use isl_core::scattering::ProbeSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    LinearXray,
    RadonRoundtrip,
    AbFlux,
    AbBfield,
    NlsLinearize,
    NlsRecover,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::LinearXray,
        ExperimentId::RadonRoundtrip,
        ExperimentId::AbFlux,
        ExperimentId::AbBfield,
        ExperimentId::NlsLinearize,
        ExperimentId::NlsRecover,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::LinearXray => "linear-xray",
            ExperimentId::RadonRoundtrip => "radon-roundtrip",
            ExperimentId::AbFlux => "ab-flux",
            ExperimentId::AbBfield => "ab-bfield",
            ExperimentId::NlsLinearize => "nls-linearize",
            ExperimentId::NlsRecover => "nls-recover",
        }
    }

    fn is_planar(self) -> bool {
        matches!(
            self,
            ExperimentId::LinearXray
                | ExperimentId::RadonRoundtrip
                | ExperimentId::AbFlux
                | ExperimentId::AbBfield
        )
    }
}

/// Square planar grid or a line, depending on the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub extent: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn planar(&self) -> isl_core::Result<UniformGrid> {
        UniformGrid::new(2, [self.extent; 2], [self.points; 2])
    }

    pub fn line(&self) -> isl_core::Result<UniformGrid> {
        UniformGrid::new(1, [self.extent, 0.0], [self.points, 1])
    }
}

/// Probe envelope shared by the planar experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    /// Widths along v̂ and v̂⊥.
    pub widths: [f64; 2],
    pub spacing: [f64; 2],
    #[serde(default = "unit")]
    pub mass: f64,
    #[serde(default)]
    pub stepper: Stepper,
    #[serde(default)]
    pub verify_window: bool,
}

impl Envelope {
    pub fn probe(&self, v: f64, angle: f64, offset: f64) -> ProbeSpec {
        ProbeSpec {
            angle,
            offset,
            v,
            widths: self.widths,
            spacing: self.spacing,
            mass: self.mass,
            verify_window: self.verify_window,
        }
    }

    pub fn phase(&self, v: f64) -> PhaseProbeSpec {
        PhaseProbeSpec {
            v,
            widths: self.widths,
            spacing: self.spacing,
            mass: self.mass,
            coulomb_window: None,
            stepper: self.stepper,
        }
    }
}

/// Gaussian probe packet on the line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    #[serde(default)]
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub grid: GridSpec,
    /// Scalar potential V of the planar experiments.
    #[serde(default)]
    pub potential: FieldSpec,
    /// Solenoid flux α.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub b_r: FieldSpec,
    #[serde(default = "unit")]
    pub obstacle_radius: f64,
    #[serde(default)]
    pub model: NlsModel,
    #[serde(default)]
    pub envelope: Option<Envelope>,
    #[serde(default)]
    pub packet: Option<Packet>,
    #[serde(default)]
    pub scattering: Option<ScatteringSpec>,
    #[serde(default)]
    pub reflection: ReflectionSpec,
    /// Reference potential used to calibrate the Born inversion.
    #[serde(default)]
    pub calibration: Option<Profile>,
    /// Grid for the scaling ladder of `nls-recover`.
    #[serde(default)]
    pub ladder_grid: Option<GridSpec>,
    /// Grid on which `nls-recover` reports the recovered V₀.
    #[serde(default)]
    pub output_grid: Option<GridSpec>,
    #[serde(default)]
    pub art: Option<ArtOptions>,
    /// Radii [inner, outer] of the reconstruction support for `ab-bfield`.
    #[serde(default)]
    pub support: Option<[f64; 2]>,
    /// Velocity ladder.
    #[serde(default)]
    pub v: Vec<f64>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    /// Explicit flight angles; when empty, `angle_count` uniform angles in [0, π).
    #[serde(default)]
    pub angles: Vec<f64>,
    #[serde(default)]
    pub angle_count: Option<usize>,
    #[serde(default)]
    pub offsets: Vec<f64>,
    /// Points x́ at which the ladder recovers V₁.
    #[serde(default)]
    pub probe_points: Vec<f64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(schema_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not depend on running any physics.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, message: &str| {
            Err(CliError::Schema {
                path: path.into(),
                message: message.into(),
            })
        };
        if !(self.grid.extent > 0.0 && self.grid.extent.is_finite()) {
            return bad("grid.extent", "must be positive");
        }
        if self.grid.points < 2 {
            return bad("grid.points", "must be at least 2");
        }
        if self.v.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("v", "velocities must be positive");
        }
        if self.workers == Some(0) {
            return bad("workers", "must be at least 1");
        }
        if self.experiment.is_planar()
            && !(self.model.coefficients.is_empty() && self.model.v0.is_zero())
        {
            return bad("model", "only the nls experiments take a model");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, defaults included.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(
            serde_json::to_vec(self).expect("config serializes"),
        ))
    }

    pub fn angle_list(&self, default_count: usize) -> Vec<f64> {
        if self.angles.is_empty() {
            uniform_angles(self.angle_count.unwrap_or(default_count))
        } else {
            self.angles.clone()
        }
    }

    /// Replaces the numeric field at the dotted `axis` path by `value`. A numeric array
    /// (such as the `v` ladder) becomes the single-element list `[value]`.
    pub fn with_axis(&self, axis: &str, value: f64) -> Result<Self, CliError> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        let slot = axis_slot(&mut doc, axis)?;
        // Integral values go in as JSON integers so they also fit count and seed fields.
        let number = if value.fract() == 0.0 && value.abs() < 9.0e15 {
            serde_json::json!(value as i64)
        } else {
            serde_json::json!(value)
        };
        *slot = if slot.is_array() {
            serde_json::Value::Array(vec![number])
        } else {
            number
        };
        let cfg: Self = serde_path_to_error::deserialize(doc).map_err(schema_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn check_axis(&self, axis: &str) -> Result<(), CliError> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        axis_slot(&mut doc, axis).map(|_| ())
    }
}

/// Folds a missing field into the path, so `grid` + "missing field `points`" reads `grid.points`.
pub fn schema_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> CliError {
    let message = e.inner().to_string();
    let mut path = e.path().to_string();
    if let Some(field) = message
        .strip_prefix("missing field `")
        .and_then(|m| m.split('`').next())
    {
        path = if path == "." {
            field.to_string()
        } else {
            format!("{path}.{field}")
        };
    }
    CliError::Schema { path, message }
}

fn axis_slot<'a>(
    doc: &'a mut serde_json::Value,
    axis: &str,
) -> Result<&'a mut serde_json::Value, CliError> {
    let unknown = || CliError::UnknownAxis(axis.to_string());
    let mut slot = doc;
    for key in axis.split('.') {
        slot = match slot {
            serde_json::Value::Object(map) => map.get_mut(key).ok_or_else(unknown)?,
            serde_json::Value::Array(items) => {
                let i: usize = key.parse().map_err(|_| unknown())?;
                items.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    let numeric = match slot {
        serde_json::Value::Number(_) => true,
        serde_json::Value::Array(items) => items.iter().all(|x| x.is_number()),
        _ => false,
    };
    if numeric {
        Ok(slot)
    } else {
        Err(unknown())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
